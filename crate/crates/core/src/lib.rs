//! Contrastive explanation of temporal plans through iterative model restriction.
//!
//! The crate parses PDDL2.1 temporal models, validates plans under epsilon
//! semantics, compiles user questions into restricted models, plans for them,
//! and keeps the resulting tree of restrictions in a persistent session.

pub mod bitset;
pub mod compiler;
pub mod diff;
pub mod grounder;
pub mod model;
pub mod name;
pub mod pddl;
pub mod questions;
pub mod planner;
pub mod session;
pub mod task;
pub mod validator;

pub use model::*;
pub use name::Name;

/// Absolute tolerance used for every time comparison.
pub const TIME_TOL: f64 = 1e-6;

/// Default separation between interfering happenings.
pub const DEFAULT_EPSILON: f64 = 0.001;
