//! The tree of model restrictions explored by a user.
//!
//! The root holds the original model. Every other node applies one question
//! to its parent's hypothetical model. Planning is explicit and its results
//! are cached on the node, together with the normalized plan, its validation
//! against the original model, and the constraint check of every restriction
//! on the path.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::compiler::{compose, normalize_plan, restrict, CompileError, FormalQuestion, HModel};
use crate::diff::{diff_plans, PlanDiff};
use crate::model::{Plan, PlanningModel};
use crate::pddl::{parse_model, ParseError};
use crate::planner::{solve, PlannerConfig, PlanningOutcome};
use crate::validator::{simulate, ValidationReport};

pub const SCHEMA: &str = "xaip-session";
pub const VERSION: u32 = 1;

pub type NodeId = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub question: String,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub question: Option<FormalQuestion>,
    pub hmodel: HModel,
    #[serde(default)]
    pub outcome: Option<PlanningOutcome>,
    /// Best plan in the node's own vocabulary and time frame.
    #[serde(default, with = "opt_plan_text")]
    pub hplan: Option<Plan>,
    /// `hplan` normalized to the original model.
    #[serde(default, with = "opt_plan_text")]
    pub plan: Option<Plan>,
    #[serde(default)]
    pub report: Option<ValidationReport>,
    #[serde(default)]
    pub checks: Option<Vec<ConstraintCheck>>,
    pub created_at: u64,
    #[serde(default)]
    pub note: String,
}

impl SessionNode {
    /// `unplanned`, `solved`, or the status of the last failed attempt.
    pub fn status(&self) -> String {
        match (&self.outcome, &self.plan) {
            (None, _) => "unplanned".into(),
            (Some(o), _) if o.is_solved() => "solved".into(),
            (Some(o), _) => o.status.to_string(),
        }
    }

    pub fn summary(&self) -> String {
        match &self.question {
            None => "original model".into(),
            Some(q) => q.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub original: PlanningModel,
    pub nodes: BTreeMap<NodeId, SessionNode>,
    pub root: NodeId,
    next_id: NodeId,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error("unknown node {0}")]
    NotFound(NodeId),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("node {0} has no plan yet; plan it before asking about plan positions")]
    NoPlan(NodeId),
    #[error("action #{index} lies in the fixed prefix (first {prefix} actions) and cannot be replaced")]
    CutInPrefix { index: usize, prefix: usize },
    #[error("action #{index} is out of range for a plan of {len} actions")]
    IndexRange { index: usize, len: usize },
    #[error("session file has schema version {found}, this build reads version {expected}")]
    Version { found: u64, expected: u32 },
    #[error("corrupt session file: {0}")]
    Corrupt(String),
    #[error("{0}")]
    Io(String),
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn fresh_id() -> String {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let nanos = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0);
    let c = COUNTER.fetch_add(1, Ordering::Relaxed);
    format!("s{:x}{:04x}", nanos as u64 ^ std::process::id() as u64, c & 0xffff)
}

impl Session {
    pub fn new(model: PlanningModel) -> Session {
        let root = SessionNode {
            id: 0,
            parent: None,
            question: None,
            hmodel: HModel::root(&model),
            outcome: None,
            hplan: None,
            plan: None,
            report: None,
            checks: None,
            created_at: now(),
            note: String::new(),
        };
        Session { id: fresh_id(), original: model, nodes: BTreeMap::from([(0, root)]), root: 0, next_id: 1 }
    }

    /// Parses the two texts and opens a session rooted at their model.
    pub fn create(domain_text: &str, problem_text: &str) -> Result<Session, SessionError> {
        Ok(Session::new(parse_model(domain_text, problem_text)?))
    }

    pub fn node(&self, id: NodeId) -> Result<&SessionNode, SessionError> {
        self.nodes.get(&id).ok_or(SessionError::NotFound(id))
    }

    fn node_mut(&mut self, id: NodeId) -> Result<&mut SessionNode, SessionError> {
        self.nodes.get_mut(&id).ok_or(SessionError::NotFound(id))
    }

    pub fn children(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes.values().filter(|n| n.parent == Some(id)).map(|n| n.id).collect()
    }

    /// Node ids from the root down to `id`.
    pub fn path(&self, id: NodeId) -> Result<Vec<NodeId>, SessionError> {
        let mut out = vec![id];
        let mut cur = self.node(id)?;
        while let Some(p) = cur.parent {
            out.push(p);
            cur = self.node(p)?;
        }
        out.reverse();
        Ok(out)
    }

    /// Completes a question against a node: replace-in-state indices refer to
    /// the node's normalized plan and are mapped onto its own plan.
    pub fn resolve_question(&self, id: NodeId, q: &FormalQuestion) -> Result<FormalQuestion, SessionError> {
        let FormalQuestion::ReplaceInState { replaced, replacement, plan: None } = q else {
            return Ok(q.clone());
        };
        let node = self.node(id)?;
        let (Some(hplan), Some(full)) = (&node.hplan, &node.plan) else {
            return Err(SessionError::NoPlan(id));
        };
        if *replaced >= full.len() {
            return Err(SessionError::IndexRange { index: *replaced, len: full.len() });
        }
        let prefix = node.hmodel.fixed_prefix.len();
        if *replaced < prefix {
            return Err(SessionError::CutInPrefix { index: *replaced, prefix });
        }
        let mut k = replaced - prefix;
        let mut local = None;
        for (j, a) in hplan.actions.iter().enumerate() {
            if node.hmodel.normalize_action(&a.action)?.is_some() {
                if k == 0 {
                    local = Some(j);
                    break;
                }
                k -= 1;
            }
        }
        let local = local.ok_or(SessionError::IndexRange { index: *replaced, len: full.len() })?;
        Ok(FormalQuestion::ReplaceInState { replaced: local, replacement: replacement.clone(), plan: Some(hplan.clone()) })
    }

    /// Applies a question to a node and returns the new child's id.
    pub fn ask(&mut self, id: NodeId, q: &FormalQuestion) -> Result<NodeId, SessionError> {
        let q = self.resolve_question(id, q)?;
        let hmodel = restrict(&self.node(id)?.hmodel, &q)?;
        let child = self.next_id;
        self.next_id += 1;
        self.nodes.insert(
            child,
            SessionNode {
                id: child,
                parent: Some(id),
                question: Some(q),
                hmodel,
                outcome: None,
                hplan: None,
                plan: None,
                report: None,
                checks: None,
                created_at: now(),
                note: String::new(),
            },
        );
        Ok(child)
    }

    pub fn set_note(&mut self, id: NodeId, note: &str) -> Result<(), SessionError> {
        self.node_mut(id)?.note = note.to_string();
        Ok(())
    }

    /// Plans a node and caches the result.
    pub fn plan_node(&mut self, id: NodeId, cfg: &PlannerConfig) -> Result<PlanningOutcome, SessionError> {
        let model = self.node(id)?.hmodel.model.clone();
        let outcome = solve(&model, cfg);
        self.record_outcome(id, outcome.clone())?;
        Ok(outcome)
    }

    /// Caches a planning outcome computed elsewhere. A solved outcome
    /// replaces the node's plan, report and checks; a failed one keeps them.
    pub fn record_outcome(&mut self, id: NodeId, outcome: PlanningOutcome) -> Result<(), SessionError> {
        let node = self.node(id)?;
        let solved = match outcome.best() {
            Some(hplan) if outcome.is_solved() => {
                let plan = normalize_plan(hplan, &node.hmodel)?;
                let report = simulate(&self.original, &plan);
                let checks = node
                    .hmodel
                    .provenance
                    .iter()
                    .map(|r| ConstraintCheck { question: r.question.to_string(), satisfied: r.satisfied_by(&plan, &self.original) })
                    .collect();
                Some((hplan.clone(), plan, report, checks))
            }
            _ => None,
        };
        let node = self.node_mut(id)?;
        node.outcome = Some(outcome);
        if let Some((hplan, plan, report, checks)) = solved {
            node.hplan = Some(hplan);
            node.plan = Some(plan);
            node.report = Some(report);
            node.checks = Some(checks);
        }
        Ok(())
    }

    /// Recompiles a node's provenance from the original model.
    pub fn recompile(&self, id: NodeId) -> Result<HModel, SessionError> {
        let qs: Vec<FormalQuestion> =
            self.node(id)?.hmodel.provenance.iter().map(|r| r.question.clone()).collect();
        Ok(compose(&self.original, &qs)?)
    }

    /// Compares a node's plan with another node's, by default its parent's.
    /// The root is compared with itself.
    pub fn diff(&self, id: NodeId, against: Option<NodeId>) -> Result<PlanDiff, SessionError> {
        let node = self.node(id)?;
        let base = self.node(against.or(node.parent).unwrap_or(id))?;
        fn plan_of(n: &SessionNode) -> Result<&Plan, SessionError> {
            n.plan.as_ref().ok_or(SessionError::NoPlan(n.id))
        }
        let metric = |n: &SessionNode| n.report.as_ref().and_then(|r| r.metric);
        Ok(diff_plans(plan_of(base)?, plan_of(node)?).with_metrics(metric(base), metric(node)))
    }

    pub fn render_tree(&self) -> String {
        let mut out = String::new();
        self.render_from(self.root, "", true, true, &mut out);
        out
    }

    fn render_from(&self, id: NodeId, indent: &str, last: bool, top: bool, out: &mut String) {
        let n = &self.nodes[&id];
        let status = match (&n.plan, n.status().as_str()) {
            (Some(p), "solved") => format!("solved, makespan {}", crate::pddl::format_time(p.makespan())),
            (_, s) => s.to_string(),
        };
        let branch = if top { "" } else if last { "`- " } else { "|- " };
        let _ = writeln!(out, "{indent}{branch}[{id}] {} ({status})", n.summary());
        let kids = self.children(id);
        let next = if top { String::new() } else { format!("{indent}{}", if last { "   " } else { "|  " }) };
        for (i, k) in kids.iter().enumerate() {
            self.render_from(*k, &next, i + 1 == kids.len(), false, out);
        }
    }

    pub fn to_json(&self) -> String {
        let doc = serde_json::json!({ "schema": SCHEMA, "version": VERSION, "session": self });
        serde_json::to_string_pretty(&doc).expect("session serializes")
    }

    pub fn from_json(text: &str) -> Result<Session, SessionError> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| SessionError::Corrupt(e.to_string()))?;
        if v.get("schema").and_then(|s| s.as_str()) != Some(SCHEMA) {
            return Err(SessionError::Corrupt(format!("missing `{SCHEMA}` schema stamp")));
        }
        let found = v.get("version").and_then(|x| x.as_u64()).ok_or_else(|| SessionError::Corrupt("missing version".into()))?;
        if found != VERSION as u64 {
            return Err(SessionError::Version { found, expected: VERSION });
        }
        let body = v.get("session").cloned().ok_or_else(|| SessionError::Corrupt("missing session body".into()))?;
        let s: Session = serde_json::from_value(body).map_err(|e| SessionError::Corrupt(e.to_string()))?;
        s.check_tree()?;
        Ok(s)
    }

    fn check_tree(&self) -> Result<(), SessionError> {
        if !self.nodes.contains_key(&self.root) {
            return Err(SessionError::Corrupt("root node missing".into()));
        }
        for n in self.nodes.values() {
            let path = self.path(n.id).map_err(|_| SessionError::Corrupt(format!("node {} has a dangling parent", n.id)))?;
            if path.first() != Some(&self.root) || path.len() > self.nodes.len() {
                return Err(SessionError::Corrupt(format!("node {} is not reachable from the root", n.id)));
            }
            if n.id >= self.next_id {
                return Err(SessionError::Corrupt(format!("node id {} beyond id counter", n.id)));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), SessionError> {
        std::fs::write(path, self.to_json()).map_err(|e| SessionError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Session, SessionError> {
        let text = std::fs::read_to_string(path).map_err(|e| SessionError::Io(format!("{}: {e}", path.display())))?;
        Session::from_json(&text)
    }
}

/// Plans stored as `T: (a) [D]` text with exactly round-tripping times.
mod opt_plan_text {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::model::{Plan, TimedAction};
    use crate::pddl::scan_plans;

    fn time(t: f64) -> String {
        let s = format!("{t:.3}");
        if s.parse::<f64>().ok() == Some(t) {
            s
        } else {
            format!("{t}")
        }
    }

    pub fn serialize<S: Serializer>(p: &Option<Plan>, s: S) -> Result<S::Ok, S::Error> {
        match p {
            None => s.serialize_none(),
            Some(p) => {
                let text: String = p
                    .actions
                    .iter()
                    .map(|a| format!("{}: {} [{}]\n", time(a.dispatch), a.action, time(a.duration)))
                    .collect();
                s.serialize_some(&text)
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Plan>, D::Error> {
        let Some(text) = Option::<String>::deserialize(d)? else { return Ok(None) };
        let mut plans = scan_plans(&text);
        let actions: Vec<TimedAction> = match plans.len() {
            0 => Vec::new(),
            1 => plans.remove(0).actions,
            _ => return Err(serde::de::Error::custom("embedded plan is not one contiguous block")),
        };
        Ok(Some(Plan { actions }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::TimeDirection;
    use crate::model::ActionRef;
    use crate::planner::OutcomeStatus;

    const DOMAIN: &str = include_str!("../fixtures/warehouse/domain.pddl");
    const PROBLEM: &str = include_str!("../fixtures/warehouse/problem.pddl");

    fn cfg() -> PlannerConfig {
        PlannerConfig::builtin().with_time_budget(20.0)
    }

    #[test]
    fn ask_plan_and_branch() {
        let mut s = Session::create(DOMAIN, PROBLEM).unwrap();
        let add = FormalQuestion::AddAction { action: ActionRef::new("load_pallet", &["tom", "p2", "sh6"]), justified: false };
        let c = s.ask(0, &add).unwrap();
        let out = s.plan_node(c, &cfg()).unwrap();
        assert!(out.is_solved());
        let n = s.node(c).unwrap();
        assert!(n.plan.as_ref().unwrap().contains(&ActionRef::new("load_pallet", &["tom", "p2", "sh6"])));
        assert!(n.report.as_ref().unwrap().valid);
        assert!(n.checks.as_ref().unwrap().iter().all(|c| c.satisfied));
        let g = s.ask(c, &FormalQuestion::RemoveAction { action: ActionRef::new("goto_waypoint", &["tom", "sh1", "sh2"]) }).unwrap();
        assert_eq!(s.node(g).unwrap().hmodel.provenance.len(), 2);
        assert_eq!(s.recompile(g).unwrap(), s.node(g).unwrap().hmodel);
        assert_eq!(s.path(g).unwrap(), vec![0, c, g]);
        assert!(matches!(s.ask(99, &add), Err(SessionError::NotFound(99))));
        assert!(s.render_tree().contains("`- [2]"));
        assert!(matches!(s.diff(g, None), Err(SessionError::NoPlan(_))));
        assert!(matches!(s.diff(c, None), Err(SessionError::NoPlan(0))));
        s.plan_node(0, &cfg()).unwrap();
        let d = s.diff(c, None).unwrap();
        let added = ActionRef::new("load_pallet", &["tom", "p2", "sh6"]);
        assert!(d.entries.iter().any(|e| e.action == added && e.category == crate::diff::Category::New));
        let same = s.diff(c, Some(c)).unwrap();
        assert_eq!(same.count(crate::diff::Category::Unchanged), same.entries.len());
    }

    #[test]
    fn failed_planning_keeps_previous_results() {
        let mut s = Session::create(DOMAIN, PROBLEM).unwrap();
        s.plan_node(0, &cfg()).unwrap();
        let before = s.node(0).unwrap().plan.clone();
        let failed = PlanningOutcome { status: OutcomeStatus::TimeoutNoPlan, plans: vec![], wall_time: 1.0, planner: "x".into(), stats: None, log: String::new() };
        s.record_outcome(0, failed).unwrap();
        assert_eq!(s.node(0).unwrap().plan, before);
        assert_eq!(s.node(0).unwrap().status(), "timeout-no-plan");
    }

    #[test]
    fn replace_index_maps_through_prefix() {
        let mut s = Session::create(DOMAIN, PROBLEM).unwrap();
        let q = FormalQuestion::ReplaceInState { replaced: 0, replacement: ActionRef::new("set_shelf", &["tom", "sh5"]), plan: None };
        assert!(matches!(s.ask(0, &q), Err(SessionError::NoPlan(0))));
        s.plan_node(0, &cfg()).unwrap();
        let c = s.ask(0, &q).unwrap();
        let out = s.plan_node(c, &cfg()).unwrap();
        assert!(out.is_solved(), "{}", out.log);
        let n = s.node(c).unwrap();
        assert!(n.report.as_ref().unwrap().valid, "{}", n.report.as_ref().unwrap());
        assert!(n.checks.as_ref().unwrap().iter().all(|c| c.satisfied));
        let first = &n.plan.as_ref().unwrap().actions[0];
        assert_eq!(first.action, ActionRef::new("set_shelf", &["tom", "sh5"]));
        let again = FormalQuestion::ReplaceInState { replaced: 0, replacement: ActionRef::new("set_shelf", &["tom", "sh5"]), plan: None };
        assert!(matches!(s.ask(c, &again), Err(SessionError::CutInPrefix { .. })));
    }

    #[test]
    fn save_load_round_trip() {
        let mut s = Session::create(DOMAIN, PROBLEM).unwrap();
        let q = FormalQuestion::DelayAdvance { action: ActionRef::new("set_shelf", &["tom", "sh1"]), t: 8.001, offset: 8.0, direction: TimeDirection::After };
        let c = s.ask(0, &q).unwrap();
        s.plan_node(c, &cfg()).unwrap();
        s.set_note(c, "later shelf").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("s.json");
        s.save(&f).unwrap();
        let back = Session::load(&f).unwrap();
        assert_eq!(back, s);
        let mut again = back.clone();
        again.plan_node(c, &cfg()).unwrap();
        assert_eq!(again.node(c).unwrap().hplan, s.node(c).unwrap().hplan);
        let bumped = s.to_json().replace("\"version\": 1", "\"version\": 7");
        let e = Session::from_json(&bumped).unwrap_err();
        assert_eq!(e.to_string(), "session file has schema version 7, this build reads version 1");
        assert!(matches!(Session::from_json("{"), Err(SessionError::Corrupt(_))));
    }

    #[test]
    fn sessions_get_distinct_ids() {
        let a = Session::create(DOMAIN, PROBLEM).unwrap();
        let b = Session::create(DOMAIN, PROBLEM).unwrap();
        assert_ne!(a.id, b.id);
        assert_eq!(a.original, b.original);
        assert!(Session::create("(define (domain", PROBLEM).is_err());
    }
}
