//! PDDL2.1 reading and writing: domains, problems and plans.

mod parser;
mod plan;
pub(crate) mod printer;
mod sexpr;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use parser::{normalize_windows, parse_action_literal, parse_domain, parse_model, parse_problem};
pub use plan::{format_time, parse_plan, print_plan, scan_plans};
pub use printer::{fmt_num, print_domain, print_model, print_problem};

/// Location of a token in the input text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct SourceSpan {
    pub file: Option<String>,
    pub line: usize,
    pub column: usize,
    pub start: usize,
    pub end: usize,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(file) = &self.file {
            write!(f, "{file}:")?;
        }
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParseErrorKind {
    Syntax,
    Unsupported,
    Arity,
    UnknownSymbol,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub message: String,
    pub span: SourceSpan,
    pub expected: Option<String>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.span, self.message)?;
        if let Some(e) = &self.expected {
            write!(f, " (expected {e})")?;
        }
        Ok(())
    }
}

impl ParseError {
    pub(crate) fn new(kind: ParseErrorKind, message: impl Into<String>, span: SourceSpan) -> Self {
        ParseError { kind, message: message.into(), span, expected: None }
    }

    pub(crate) fn expected(mut self, e: impl Into<String>) -> Self {
        self.expected = Some(e.into());
        self
    }

    /// Attaches a file name to the span.
    pub fn in_file(mut self, file: &str) -> Self {
        self.span.file = Some(file.to_string());
        self
    }
}
