//! Text rendering for diffs and session nodes.

use xaip_core::diff::{Category, PlanDiff};
use xaip_core::pddl::{format_time, print_plan};
use xaip_core::session::SessionNode;

fn ansi(c: Category) -> &'static str {
    match c {
        Category::Unchanged => "\x1b[34m",
        Category::New => "\x1b[33m",
        Category::Rescheduled => "\x1b[32m",
        Category::Removed => "\x1b[31m",
    }
}

/// One line per entry; with `color`, each line takes its category's color.
pub fn diff(d: &PlanDiff, color: bool) -> String {
    let text = d.to_string();
    let mut out = String::new();
    let mut lines = text.lines();
    for e in &d.entries {
        let line = lines.next().unwrap_or_default();
        if color {
            out.push_str(&format!("{}{line}\x1b[0m\n", ansi(e.category)));
        } else {
            out.push_str(line);
            out.push('\n');
        }
    }
    for line in lines {
        out.push_str(line);
        out.push('\n');
    }
    out
}

pub fn node(n: &SessionNode, header: bool) -> String {
    let mut t = String::new();
    if header {
        t.push_str(&format!("node {}: {}\n", n.id, n.summary()));
        if let Some(p) = n.parent {
            t.push_str(&format!("parent: {p}\n"));
        }
        t.push_str(&format!("status: {}\n", n.status()));
        if !n.note.is_empty() {
            t.push_str(&format!("note: {}\n", n.note));
        }
        if let Some(r) = n.hmodel.provenance.last() {
            for note in &r.notes {
                t.push_str(&format!("compiler: {note}\n"));
            }
        }
    }
    if let Some(p) = &n.plan {
        t.push_str(&format!("plan (makespan {}):\n{}", format_time(p.makespan()), print_plan(p)));
    }
    if let Some(r) = &n.report {
        if let Some(m) = r.metric {
            t.push_str(&format!("metric: {}\n", format_time(m)));
        }
    }
    for c in n.checks.iter().flatten() {
        t.push_str(&format!("{}: {}\n", if c.satisfied { "satisfied" } else { "VIOLATED" }, c.question));
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use xaip_core::diff::diff_plans;
    use xaip_core::model::{ActionRef, Plan, TimedAction};

    fn plan(items: &[(&str, f64)]) -> Plan {
        Plan { actions: items.iter().map(|(op, t)| TimedAction { action: ActionRef::new(*op, &[]), dispatch: *t, duration: 1.0 }).collect() }
    }

    #[test]
    fn each_category_gets_its_color() {
        let d = diff_plans(&plan(&[("a", 0.0), ("b", 1.0), ("c", 2.0)]), &plan(&[("a", 0.0), ("b", 3.0), ("d", 4.0)]));
        let text = diff(&d, true);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("\x1b[34munchanged"));
        assert!(lines.iter().any(|l| l.starts_with("\x1b[32mrescheduled")));
        assert!(lines.iter().any(|l| l.starts_with("\x1b[31mremoved")));
        assert!(lines.iter().any(|l| l.starts_with("\x1b[33mnew")));
        assert!(lines.last().unwrap().starts_with("makespan:"));
        assert!(!diff(&d, false).contains('\x1b'));
    }
}
