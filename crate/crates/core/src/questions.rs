//! Random generation of well-formed questions about a plan.
//!
//! Actions for removal, reordering and the time questions are drawn from the
//! plan. Additions and replacements draw from the ground actions the plan
//! does not use, and a replacement must be applicable in the state just
//! before the action it replaces. Window bounds start inside the plan's time
//! span and are 1.5 to 4 times the chosen action's duration wide.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::compiler::{FormalQuestion, TimeDirection};
use crate::grounder::ground_all;
use crate::model::{ActionRef, Plan, PlanningModel};
use crate::validator::execute_prefix;

pub const QUESTION_KINDS: [&str; 7] = ["fq1", "fq2", "fq3", "fq4", "fq5", "fq6", "fq7"];

/// Replacement candidates tried per cut before giving up on it.
const REPLACE_TRIES: usize = 64;

pub struct QuestionSampler<'a> {
    model: &'a PlanningModel,
    plan: &'a Plan,
    unused: Vec<ActionRef>,
}

impl<'a> QuestionSampler<'a> {
    pub fn new(model: &'a PlanningModel, plan: &'a Plan) -> Self {
        let unused = ground_all(model, true).actions.iter().map(|g| g.aref()).filter(|a| !plan.contains(a)).collect();
        QuestionSampler { model, plan, unused }
    }

    /// Ground actions not used by the plan.
    pub fn unused(&self) -> &[ActionRef] {
        &self.unused
    }

    /// Draws one question of the given kind, or `None` when the plan offers
    /// no material for it (an empty plan, no unused action, no applicable
    /// replacement, or no two distinct actions to reorder).
    pub fn sample<R: Rng>(&self, kind: &str, rng: &mut R) -> Option<FormalQuestion> {
        let acts = &self.plan.actions;
        let width = |rng: &mut R, d: f64| rng.gen_range(1.5..=4.0) * d.max(crate::DEFAULT_EPSILON);
        let lb = |rng: &mut R| rng.gen_range(0.0..=self.plan.makespan().max(0.0));
        match kind {
            "fq1" => Some(FormalQuestion::AddAction {
                action: self.unused.choose(rng)?.clone(),
                justified: rng.gen_bool(0.5),
            }),
            "fq2" => Some(FormalQuestion::RemoveAction { action: acts.choose(rng)?.action.clone() }),
            "fq3" => {
                if acts.is_empty() || self.unused.is_empty() {
                    return None;
                }
                let mut cuts: Vec<usize> = (0..acts.len()).collect();
                cuts.shuffle(rng);
                for cut in cuts {
                    for cand in self.unused.choose_multiple(rng, REPLACE_TRIES) {
                        if execute_prefix(self.model, self.plan, cut, cand).is_ok() {
                            return Some(FormalQuestion::ReplaceInState {
                                replaced: cut,
                                replacement: cand.clone(),
                                plan: Some(self.plan.clone()),
                            });
                        }
                    }
                }
                None
            }
            "fq4" => {
                let mut pairs = Vec::new();
                for (i, a) in acts.iter().enumerate() {
                    for b in &acts[i + 1..] {
                        if a.action != b.action && a.dispatch < b.dispatch {
                            pairs.push((a.action.clone(), b.action.clone()));
                        }
                    }
                }
                // Ask for the opposite of the order the plan chose.
                let (first, second) = pairs.choose(rng)?.clone();
                Some(FormalQuestion::Reorder { edges: vec![(second, first)] })
            }
            "fq5" | "fq6" => {
                let a = acts.choose(rng)?;
                let lb = lb(rng);
                let ub = lb + width(rng, a.duration);
                let action = a.action.clone();
                Some(if kind == "fq5" {
                    FormalQuestion::ForbidOutsideWindow { action, lb, ub }
                } else {
                    FormalQuestion::RequireWithinWindow { action, lb, ub }
                })
            }
            "fq7" => {
                let a = acts.choose(rng)?;
                let offset = width(rng, a.duration);
                // Advancing past time zero is not a question one can ask.
                let direction = if rng.gen_bool(0.5) && offset < a.dispatch { TimeDirection::Before } else { TimeDirection::After };
                Some(FormalQuestion::DelayAdvance { action: a.action.clone(), t: a.dispatch, offset, direction })
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::compile;
    use crate::pddl::{parse_model, parse_plan};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_compile_and_follow_the_rules() {
        let m = parse_model(
            include_str!("../fixtures/warehouse/domain.pddl"),
            include_str!("../fixtures/warehouse/problem.pddl"),
        )
        .unwrap();
        let plan = parse_plan(include_str!("../fixtures/warehouse/plan_original.plan"), &m).unwrap();
        let s = QuestionSampler::new(&m, &plan);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for kind in QUESTION_KINDS {
            for _ in 0..10 {
                let q = s.sample(kind, &mut rng).unwrap();
                assert_eq!(q.kind(), kind);
                compile(&m, &q).unwrap();
                match &q {
                    FormalQuestion::AddAction { action, .. } => assert!(!plan.contains(action)),
                    FormalQuestion::ReplaceInState { replacement, .. } => assert!(!plan.contains(replacement)),
                    FormalQuestion::Reorder { edges } => {
                        let (b, a) = &edges[0];
                        let first = |x: &ActionRef| plan.actions.iter().position(|t| &t.action == x).unwrap();
                        assert!(first(a) < first(b));
                    }
                    FormalQuestion::ForbidOutsideWindow { action, lb, ub } | FormalQuestion::RequireWithinWindow { action, lb, ub } => {
                        let d = plan.actions.iter().find(|t| &t.action == action).unwrap().duration;
                        assert!(*lb <= plan.makespan() && ub - lb >= 1.5 * d - 1e-9 && ub - lb <= 4.0 * d + 1e-9);
                    }
                    _ => {}
                }
            }
        }
        assert!(s.sample("fq9", &mut rng).is_none());
    }
}
