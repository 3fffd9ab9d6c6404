//! The `T: (action args) [D]` plan format.

use super::parser::check_action;
use super::{ParseError, ParseErrorKind, SourceSpan};
use crate::model::*;
use crate::name::Name;

/// Three decimals whenever that is exact to within 1e-9, otherwise the
/// shortest exact representation.
pub fn format_time(t: f64) -> String {
    let r = (t * 1000.0).round() / 1000.0;
    if (r - t).abs() <= 1e-9 {
        format!("{r:.3}")
    } else {
        format!("{t}")
    }
}

pub fn print_plan(plan: &Plan) -> String {
    let mut s = String::new();
    for a in &plan.actions {
        s.push_str(&format!("{}: {} [{}]\n", format_time(a.dispatch), a.action, format_time(a.duration)));
    }
    s
}

struct Line {
    dispatch: f64,
    action: ActionRef,
    duration: f64,
}

/// Matches `T: (name args...) [D]` starting at the first digit of `T`.
fn match_line(s: &str) -> Option<Line> {
    let colon = s.find(':')?;
    let dispatch: f64 = s[..colon].trim().parse().ok()?;
    let rest = s[colon + 1..].trim_start();
    let rest = rest.strip_prefix('(')?;
    let close = rest.find(')')?;
    let inner = &rest[..close];
    let after = rest[close + 1..].trim_start();
    let after = after.strip_prefix('[')?;
    let end = after.find(']')?;
    let duration: f64 = after[..end].trim().parse().ok()?;
    let mut words = inner.split_whitespace();
    let op = words.next()?;
    if !Name::is_valid_ident(op) {
        return None;
    }
    let args: Vec<Name> = words.map(Name::new).collect();
    if !dispatch.is_finite() || !duration.is_finite() {
        return None;
    }
    Some(Line { dispatch, action: ActionRef { op: Name::new(op), args }, duration })
}

/// Parses a plan strictly: every non-blank, non-comment line must be an
/// action line naming an operator of the model with the right arity.
pub fn parse_plan(text: &str, model: &PlanningModel) -> Result<Plan, ParseError> {
    let mut actions = Vec::new();
    let mut offset = 0;
    for (i, raw) in text.split('\n').enumerate() {
        let line_start = offset;
        offset += raw.len() + 1;
        let code = raw.split(';').next().unwrap_or("").trim_end_matches('\r');
        if code.trim().is_empty() {
            continue;
        }
        let lead = code.len() - code.trim_start().len();
        let span = SourceSpan {
            file: None,
            line: i + 1,
            column: lead + 1,
            start: line_start + lead,
            end: line_start + code.len(),
        };
        let l = match_line(code.trim()).ok_or_else(|| {
            ParseError::new(ParseErrorKind::Syntax, format!("malformed plan line `{}`", code.trim()), span.clone())
                .expected("`T: (action args) [D]`")
        })?;
        if let Err(msg) = check_action(&l.action, model) {
            let kind = if msg.contains("arguments") { ParseErrorKind::Arity } else { ParseErrorKind::UnknownSymbol };
            return Err(ParseError::new(kind, msg, span));
        }
        if l.dispatch < 0.0 {
            return Err(ParseError::new(ParseErrorKind::Syntax, "negative dispatch time", span));
        }
        actions.push(TimedAction { action: l.action, dispatch: l.dispatch, duration: l.duration });
    }
    Ok(Plan::new(actions))
}

/// Lenient scan of planner output: every maximal run of action lines forms
/// one plan, and text around them is ignored. Lines may carry a prefix.
pub fn scan_plans(text: &str) -> Vec<Plan> {
    let mut plans = Vec::new();
    let mut cur: Vec<TimedAction> = Vec::new();
    for raw in text.lines() {
        let code = raw.split(';').next().unwrap_or("");
        let hit = code
            .char_indices()
            .filter(|(i, c)| c.is_ascii_digit() && (*i == 0 || !code.as_bytes()[i - 1].is_ascii_alphanumeric()))
            .find_map(|(i, _)| match_line(&code[i..]));
        match hit {
            Some(l) => cur.push(TimedAction { action: l.action, dispatch: l.dispatch, duration: l.duration }),
            None => {
                if !cur.is_empty() {
                    plans.push(Plan::new(std::mem::take(&mut cur)));
                }
            }
        }
    }
    if !cur.is_empty() {
        plans.push(Plan::new(cur));
    }
    plans
}
