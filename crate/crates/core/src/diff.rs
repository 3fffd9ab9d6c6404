//! Plan comparison in four categories: unchanged, new, rescheduled, removed.
//!
//! Actions are matched by identity (operator and arguments). When an action
//! occurs several times, pairs are formed greedily by closest dispatch.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{ActionRef, Plan};
use crate::pddl::format_time;
use crate::TIME_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Unchanged,
    New,
    Rescheduled,
    Removed,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Unchanged => "unchanged",
            Category::New => "new",
            Category::Rescheduled => "rescheduled",
            Category::Removed => "removed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffEntry {
    pub action: ActionRef,
    pub category: Category,
    pub original_dispatch: Option<f64>,
    pub new_dispatch: Option<f64>,
    pub original_duration: Option<f64>,
    pub new_duration: Option<f64>,
    /// Set when a rescheduled entry differs only in duration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDiff {
    pub entries: Vec<DiffEntry>,
    pub original_makespan: f64,
    pub new_makespan: f64,
    pub makespan_delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_metric: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_metric: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric_delta: Option<f64>,
}

impl PlanDiff {
    pub fn count(&self, c: Category) -> usize {
        self.entries.iter().filter(|e| e.category == c).count()
    }

    /// Attaches metric values of the two plans.
    pub fn with_metrics(mut self, original: Option<f64>, new: Option<f64>) -> Self {
        self.original_metric = original;
        self.new_metric = new;
        self.metric_delta = match (original, new) {
            (Some(a), Some(b)) => Some(round9(b - a)),
            _ => None,
        };
        self
    }
}

fn round9(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

/// Compares `original` with `hplan`; both in the same vocabulary.
pub fn diff_plans(original: &Plan, hplan: &Plan) -> PlanDiff {
    let mut by_action: BTreeMap<&ActionRef, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, a) in original.actions.iter().enumerate() {
        by_action.entry(&a.action).or_default().0.push(i);
    }
    for (j, a) in hplan.actions.iter().enumerate() {
        by_action.entry(&a.action).or_default().1.push(j);
    }
    let mut entries = Vec::new();
    for (action, (mut left, mut right)) in by_action {
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for &i in &left {
            for &j in &right {
                pairs.push(((original.actions[i].dispatch - hplan.actions[j].dispatch).abs(), i, j));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        for (_, i, j) in pairs {
            if !left.contains(&i) || !right.contains(&j) {
                continue;
            }
            left.retain(|&x| x != i);
            right.retain(|&x| x != j);
            let (a, b) = (&original.actions[i], &hplan.actions[j]);
            let same_time = (a.dispatch - b.dispatch).abs() <= TIME_TOL;
            let same_dur = (a.duration - b.duration).abs() <= TIME_TOL;
            let category = if same_time && same_dur { Category::Unchanged } else { Category::Rescheduled };
            let note = (same_time && !same_dur)
                .then(|| format!("duration {} -> {}", format_time(a.duration), format_time(b.duration)));
            entries.push(DiffEntry {
                action: action.clone(),
                category,
                original_dispatch: Some(a.dispatch),
                new_dispatch: Some(b.dispatch),
                original_duration: Some(a.duration),
                new_duration: Some(b.duration),
                note,
            });
        }
        for i in left {
            let a = &original.actions[i];
            entries.push(DiffEntry {
                action: action.clone(),
                category: Category::Removed,
                original_dispatch: Some(a.dispatch),
                new_dispatch: None,
                original_duration: Some(a.duration),
                new_duration: None,
                note: None,
            });
        }
        for j in right {
            let b = &hplan.actions[j];
            entries.push(DiffEntry {
                action: action.clone(),
                category: Category::New,
                original_dispatch: None,
                new_dispatch: Some(b.dispatch),
                original_duration: None,
                new_duration: Some(b.duration),
                note: None,
            });
        }
    }
    // By original dispatch, then new dispatch; new-only entries after.
    let key = |x: Option<f64>| x.unwrap_or(f64::INFINITY);
    entries.sort_by(|a, b| {
        key(a.original_dispatch)
            .total_cmp(&key(b.original_dispatch))
            .then(key(a.new_dispatch).total_cmp(&key(b.new_dispatch)))
            .then(a.action.cmp(&b.action))
    });
    let (m0, m1) = (original.makespan(), hplan.makespan());
    PlanDiff {
        entries,
        original_makespan: m0,
        new_makespan: m1,
        makespan_delta: round9(m1 - m0),
        original_metric: None,
        new_metric: None,
        metric_delta: None,
    }
}

impl fmt::Display for PlanDiff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = |x: Option<f64>| x.map(format_time).unwrap_or_else(|| "-".into());
        for e in &self.entries {
            write!(f, "{:<11} {:>8} {:>8}  {}", e.category.as_str(), t(e.original_dispatch), t(e.new_dispatch), e.action)?;
            if let Some(n) = &e.note {
                write!(f, "  ({n})")?;
            }
            writeln!(f)?;
        }
        write!(
            f,
            "makespan: {} -> {} ({}{})",
            format_time(self.original_makespan),
            format_time(self.new_makespan),
            if self.makespan_delta >= 0.0 { "+" } else { "" },
            format_time(self.makespan_delta)
        )?;
        if let (Some(a), Some(b), Some(d)) = (self.original_metric, self.new_metric, self.metric_delta) {
            write!(f, "\nmetric: {} -> {} ({}{})", format_time(a), format_time(b), if d >= 0.0 { "+" } else { "" }, format_time(d))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TimedAction;
    use crate::pddl::{parse_model, parse_plan};
    use proptest::prelude::*;

    fn fig(text: &str) -> Plan {
        let m = parse_model(include_str!("../fixtures/warehouse/domain.pddl"), include_str!("../fixtures/warehouse/problem.pddl")).unwrap();
        parse_plan(text, &m).unwrap()
    }

    #[test]
    fn figure_add_against_original() {
        let p4 = fig(include_str!("../fixtures/warehouse/plan_original.plan"));
        let p8 = fig(include_str!("../fixtures/warehouse/plan_add.plan"));
        let d = diff_plans(&p4, &p8);
        let cat = |a: ActionRef| d.entries.iter().find(|e| e.action == a).map(|e| e.category);
        assert_eq!(cat(ActionRef::new("load_pallet", &["tom", "p2", "sh6"])), Some(Category::New));
        assert_eq!(cat(ActionRef::new("unload_pallet", &["jerry", "p2", "sh1"])), Some(Category::Removed));
        assert!((d.makespan_delta - 3.499).abs() < 1e-9);
    }

    #[test]
    fn figure_delay_reschedules() {
        let p4 = fig(include_str!("../fixtures/warehouse/plan_original.plan"));
        let p17 = fig(&include_str!("../fixtures/warehouse/plan_delay.hplan").replace("_nota", "").replace("_a ", " "));
        let d = diff_plans(&p4, &p17);
        let e = d.entries.iter().find(|e| e.action == ActionRef::new("set_shelf", &["tom", "sh1"])).unwrap();
        assert_eq!(e.category, Category::Rescheduled);
        assert_eq!((e.original_dispatch, e.new_dispatch), (Some(8.001), Some(17.0)));
    }

    fn arb_plan() -> impl Strategy<Value = Plan> {
        let names = ["a", "b", "c"];
        prop::collection::vec((0..3usize, 0..3usize, 0u32..40, 1u32..4), 0..8).prop_map(move |v| {
            Plan::new(
                v.into_iter()
                    .map(|(o, x, t, d)| TimedAction {
                        action: ActionRef::new(names[o], &[names[x]]),
                        dispatch: t as f64 * 0.5,
                        duration: d as f64,
                    })
                    .collect(),
            )
        })
    }

    proptest! {
        #[test]
        fn partition_and_symmetry(a in arb_plan(), b in arb_plan()) {
            let d = diff_plans(&a, &b);
            let left = d.entries.iter().filter(|e| e.original_dispatch.is_some()).count();
            let right = d.entries.iter().filter(|e| e.new_dispatch.is_some()).count();
            prop_assert_eq!(left, a.len());
            prop_assert_eq!(right, b.len());
            let r = diff_plans(&b, &a);
            prop_assert_eq!(d.count(Category::New), r.count(Category::Removed));
            prop_assert_eq!(d.count(Category::Removed), r.count(Category::New));
            prop_assert_eq!(d.count(Category::Unchanged), r.count(Category::Unchanged));
            prop_assert!((d.makespan_delta + r.makespan_delta).abs() < 1e-9);
            let same = diff_plans(&a, &a);
            prop_assert_eq!(same.count(Category::Unchanged), a.len());
            prop_assert_eq!(same.makespan_delta, 0.0);
        }
    }
}
