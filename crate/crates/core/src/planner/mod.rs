//! Planning back ends: a built-in forward temporal search and an external
//! planner driven through a command template.
//!
//! Every plan a back end returns is validated against the model it was
//! produced for; invalid ones are dropped and logged.

mod external;
mod relaxed;
mod search;

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::model::{Plan, PlanningModel};
use crate::validator::simulate;

/// Environment variable holding the external planner command template.
pub const PLANNER_ENV: &str = "XAIP_PLANNER";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlannerConfig {
    Builtin {
        /// Expansion budget before the first plan.
        #[serde(default = "default_nodes")]
        node_budget: usize,
        #[serde(default = "default_time")]
        time_budget: f64,
        /// Extra expansions per improvement round once a plan is known.
        #[serde(default = "default_improve")]
        improve_nodes: usize,
        /// Overrides the model's separation constant.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        epsilon: Option<f64>,
    },
    External {
        /// Shell command; `{domain}` and `{problem}` are replaced by paths.
        command: String,
        #[serde(default = "default_timeout")]
        timeout: f64,
        #[serde(default)]
        extraction: Extraction,
        /// Keep the temporary workspace even on success.
        #[serde(default)]
        keep_files: bool,
    },
}

fn default_nodes() -> usize {
    500_000
}
fn default_time() -> f64 {
    30.0
}
fn default_improve() -> usize {
    5_000
}
fn default_timeout() -> f64 {
    180.0
}

/// Where an external planner leaves its plans.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Extraction {
    #[default]
    Stdout,
    /// Files in the workspace whose names start with `prefix`, read in
    /// lexicographic order.
    Files { prefix: String },
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig::builtin()
    }
}

impl PlannerConfig {
    pub fn builtin() -> Self {
        PlannerConfig::Builtin {
            node_budget: default_nodes(),
            time_budget: default_time(),
            improve_nodes: default_improve(),
            epsilon: None,
        }
    }

    pub fn external(command: impl Into<String>) -> Self {
        PlannerConfig::External {
            command: command.into(),
            timeout: default_timeout(),
            extraction: Extraction::Stdout,
            keep_files: false,
        }
    }

    /// The planner named by `XAIP_PLANNER` (see [`PlannerConfig::from_spec`];
    /// a bare command is taken as `exec:`), else the built-in one.
    pub fn from_env() -> Self {
        match std::env::var(PLANNER_ENV) {
            Ok(t) if !t.trim().is_empty() => {
                PlannerConfig::from_spec(&t).unwrap_or_else(|_| PlannerConfig::external(t.trim()))
            }
            _ => PlannerConfig::builtin(),
        }
    }

    /// Reads `builtin` or `exec:COMMAND`.
    pub fn from_spec(spec: &str) -> Result<Self, String> {
        let spec = spec.trim();
        if spec == "builtin" {
            return Ok(PlannerConfig::builtin());
        }
        match spec.strip_prefix("exec:").map(str::trim) {
            Some(cmd) if !cmd.is_empty() => Ok(PlannerConfig::external(cmd)),
            _ => Err(format!("unknown planner `{spec}`; use `builtin` or `exec:COMMAND`")),
        }
    }

    pub fn with_time_budget(mut self, secs: f64) -> Self {
        match &mut self {
            PlannerConfig::Builtin { time_budget, .. } => *time_budget = secs,
            PlannerConfig::External { timeout, .. } => *timeout = secs,
        }
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        let t = match self {
            PlannerConfig::Builtin { time_budget, .. } => *time_budget,
            PlannerConfig::External { timeout, .. } => *timeout,
        };
        if t > 0.0 && t.is_finite() {
            Ok(())
        } else {
            Err("planner timeout must be positive".into())
        }
    }

    pub fn label(&self) -> String {
        match self {
            PlannerConfig::Builtin { .. } => "builtin".into(),
            PlannerConfig::External { command, .. } => format!("exec:{command}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeStatus {
    Solved,
    TimeoutNoPlan,
    /// The built-in search ran out of states. This is exhaustion of its own
    /// restricted successor space, not a proof for full PDDL2.1 semantics.
    ProvenUnsolvable,
    PlannerError,
    /// Stopped on request before finishing.
    Cancelled,
}

impl std::fmt::Display for OutcomeStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OutcomeStatus::Solved => "solved",
            OutcomeStatus::TimeoutNoPlan => "timeout-no-plan",
            OutcomeStatus::ProvenUnsolvable => "proven-unsolvable",
            OutcomeStatus::PlannerError => "planner-error",
            OutcomeStatus::Cancelled => "cancelled",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub expanded: usize,
    pub generated: usize,
    pub ground_actions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningOutcome {
    pub status: OutcomeStatus,
    /// Valid plans in the order found; later ones are better.
    pub plans: Vec<Plan>,
    pub wall_time: f64,
    pub planner: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<SearchStats>,
    #[serde(default)]
    pub log: String,
}

impl PlanningOutcome {
    pub fn best(&self) -> Option<&Plan> {
        self.plans.last()
    }

    pub fn is_solved(&self) -> bool {
        self.status == OutcomeStatus::Solved
    }
}

/// Start time of a planning run plus an optional stop request.
#[derive(Clone, Copy)]
pub(crate) struct Clock<'a> {
    start: Instant,
    cancel: Option<&'a AtomicBool>,
}

impl Clock<'_> {
    pub(crate) fn elapsed(&self) -> Duration {
        self.start.elapsed()
    }

    pub(crate) fn cancelled(&self) -> bool {
        self.cancel.is_some_and(|c| c.load(Ordering::Relaxed))
    }
}

/// Runs the configured planner on `model`.
pub fn solve(model: &PlanningModel, cfg: &PlannerConfig) -> PlanningOutcome {
    run(model, cfg, Clock { start: Instant::now(), cancel: None })
}

/// Like [`solve`], but stops soon after `cancel` becomes true and reports
/// [`OutcomeStatus::Cancelled`] unless a plan was already found.
pub fn solve_cancellable(model: &PlanningModel, cfg: &PlannerConfig, cancel: &AtomicBool) -> PlanningOutcome {
    run(model, cfg, Clock { start: Instant::now(), cancel: Some(cancel) })
}

fn run(model: &PlanningModel, cfg: &PlannerConfig, clock: Clock) -> PlanningOutcome {
    let mut out = match cfg {
        PlannerConfig::Builtin { .. } => search::solve(model, cfg, clock),
        PlannerConfig::External { .. } => external::solve(model, cfg, clock),
    };
    if clock.cancelled() && out.plans.is_empty() {
        out.status = OutcomeStatus::Cancelled;
    }
    out.wall_time = clock.elapsed().as_secs_f64();
    out
}

/// Keeps the candidates that validate against `model`, logging the rest.
fn keep_valid(model: &PlanningModel, candidates: Vec<Plan>, log: &mut String) -> Vec<Plan> {
    let mut kept = Vec::new();
    for (i, p) in candidates.into_iter().enumerate() {
        let r = simulate(model, &p);
        if r.valid {
            kept.push(p);
        } else {
            let why: Vec<String> = r.failures.iter().map(|f| f.to_string()).collect();
            log.push_str(&format!("dropped invalid plan {}: {}\n", i + 1, why.join("; ")));
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planner_specs() {
        assert_eq!(PlannerConfig::from_spec("builtin").unwrap(), PlannerConfig::builtin());
        assert_eq!(PlannerConfig::from_spec("exec: popf {domain} {problem}").unwrap().label(), "exec:popf {domain} {problem}");
        assert!(PlannerConfig::from_spec("exec:").is_err());
        assert!(PlannerConfig::from_spec("lama").is_err());
        assert!(PlannerConfig::builtin().with_time_budget(-1.0).validate().is_err());
    }

    #[test]
    fn configs_serialize_with_a_kind_tag() {
        let j = serde_json::to_value(PlannerConfig::builtin()).unwrap();
        assert_eq!(j["kind"], "builtin");
        let back: PlannerConfig = serde_json::from_str(r#"{"kind":"builtin"}"#).unwrap();
        assert_eq!(back, PlannerConfig::builtin());
    }

    #[test]
    fn cancelled_runs_stop_at_once() {
        let m = crate::pddl::parse_model(
            include_str!("../../fixtures/warehouse/domain.pddl"),
            include_str!("../../fixtures/warehouse/problem.pddl"),
        )
        .unwrap();
        let stop = AtomicBool::new(true);
        let out = solve_cancellable(&m, &PlannerConfig::builtin(), &stop);
        assert_eq!(out.status, OutcomeStatus::Cancelled);
        assert!(out.wall_time < 1.0);
        let go = AtomicBool::new(false);
        assert!(solve_cancellable(&m, &PlannerConfig::builtin(), &go).is_solved());
    }
}
