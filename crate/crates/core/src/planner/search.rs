//! Greedy best-first search over decision epochs.
//!
//! A search node is the state between two happenings together with the
//! actions still running. Successors either start an applicable action one
//! epsilon after the latest happening or advance to the next pending end or
//! window event. Every happening is kept at least epsilon away from every
//! other, so the produced schedules never rely on same-instant interference
//! rules.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::time::Duration;

use super::relaxed::{Relaxed, INF};
use super::{keep_valid, Clock, OutcomeStatus, PlannerConfig, PlanningOutcome, SearchStats};
use crate::grounder::ground_all;
use crate::model::{Plan, PlanningModel, TimedAction};
use crate::task::{EventKind, ICond, IState, Task};

pub(super) fn solve(model: &PlanningModel, cfg: &PlannerConfig, clock: Clock) -> PlanningOutcome {
    let PlannerConfig::Builtin { node_budget, time_budget, improve_nodes, epsilon } = cfg else {
        unreachable!("builtin search needs a builtin config")
    };
    let table = ground_all(model, true);
    let mut task = Task::build(model, &table.actions);
    if let Some(e) = epsilon {
        task.epsilon = *e;
    }
    let limits = Limits {
        nodes: *node_budget,
        improve: *improve_nodes,
        time: Duration::from_secs_f64(*time_budget),
    };
    let mut s = Search::new(&task, limits);
    let (plans, end) = s.run(clock);
    let mut stats = s.stats;
    stats.ground_actions = task.actions.len();
    let mut log = String::new();
    let found = !plans.is_empty();
    let plans = keep_valid(model, plans, &mut log);
    let status = match end {
        _ if !plans.is_empty() => OutcomeStatus::Solved,
        _ if found => OutcomeStatus::PlannerError,
        End::Exhausted => OutcomeStatus::ProvenUnsolvable,
        End::Budget => OutcomeStatus::TimeoutNoPlan,
    };
    log.push_str(&format!("expanded {} nodes, generated {}\n", stats.expanded, stats.generated));
    PlanningOutcome { status, plans, wall_time: 0.0, planner: "builtin".into(), stats: Some(stats), log }
}

#[derive(Debug, Clone, Copy)]
struct Limits {
    nodes: usize,
    improve: usize,
    time: Duration,
}

const TOL: f64 = 1e-9;

fn round9(t: f64) -> f64 {
    (t * 1e9).round() / 1e9
}

#[derive(Debug, Clone)]
struct Running {
    action: u32,
    end: f64,
    dur: f64,
}

#[derive(Debug, Clone)]
struct Node {
    t: f64,
    happened: bool,
    s: IState,
    /// Sorted by end time.
    running: Vec<Running>,
    ev: usize,
    parent: usize,
    step: Option<TimedStep>,
    helpful: Vec<u32>,
}

#[derive(Debug, Clone, Copy)]
struct TimedStep {
    action: u32,
    dispatch: f64,
    dur: f64,
}

#[derive(Hash, PartialEq, Eq)]
struct Key {
    s: IState,
    running: Vec<u32>,
    ev: usize,
    happened: bool,
}

/// Arrival time and end times (aligned with `Key::running`) of a visit.
type Visit = (f64, Vec<f64>);

fn dominates(a: &Visit, b: &Visit) -> bool {
    a.0 <= b.0 + TOL && a.1.iter().zip(&b.1).all(|(x, y)| *x <= y + TOL)
}

enum Once {
    Found(f64, Plan),
    Exhausted,
    Budget,
}

enum End {
    Exhausted,
    Budget,
}

/// Marks numeric variables whose value can influence applicability,
/// durations or goals, closing over the updates that feed them.
fn relevant_vars(task: &Task) -> Vec<bool> {
    let mut rel = vec![false; task.names.pnes.len()];
    let mut reads = Vec::new();
    let cond = |c: &ICond, reads: &mut Vec<u32>| {
        if let ICond::Cmp(_, l, r) = c {
            l.vars(reads);
            r.vars(reads);
        }
    };
    for c in &task.goal {
        cond(c, &mut reads);
    }
    for a in &task.actions {
        for c in a.start.pre.iter().chain(&a.over).chain(&a.end.pre) {
            cond(c, &mut reads);
        }
        for (_, e) in &a.dur {
            e.vars(&mut reads);
        }
    }
    let mut stack = reads;
    while let Some(v) = stack.pop() {
        if std::mem::replace(&mut rel[v as usize], true) {
            continue;
        }
        for a in &task.actions {
            for u in a.start.num.iter().chain(&a.end.num) {
                if u.target == v {
                    u.value.vars(&mut stack);
                    // Relative updates also read their target.
                    stack.push(u.target);
                }
            }
        }
    }
    rel
}

struct Search<'a> {
    task: &'a Task,
    limits: Limits,
    relaxed: Relaxed,
    usable: Vec<bool>,
    /// Numeric variables some condition, duration or relevant update reads.
    relevant: Vec<bool>,
    /// Positive goal atoms that no action or window ever adds.
    fixed_goals: Vec<u32>,
    nodes: Vec<Node>,
    seen: HashMap<Key, Vec<Visit>>,
    open: BinaryHeap<Reverse<(u32, i64, usize)>>,
    preferred: BinaryHeap<Reverse<(u32, i64, usize)>>,
    expanded: Vec<bool>,
    stats: SearchStats,
    eps: f64,
}

impl<'a> Search<'a> {
    fn new(task: &'a Task, limits: Limits) -> Self {
        let relaxed = Relaxed::new(task);
        let window_adds = task.events.iter().filter_map(|e| match e.kind {
            EventKind::Add(a) => Some(a),
            _ => None,
        });
        let usable = relaxed.reachable(task.init.atoms.iter().chain(window_adds));
        let mut added = vec![false; task.names.atoms.len()];
        for a in &task.actions {
            for &x in a.start.add.iter().chain(&a.end.add) {
                added[x as usize] = true;
            }
        }
        for e in &task.events {
            if let EventKind::Add(x) = e.kind {
                added[x as usize] = true;
            }
        }
        let fixed_goals = task
            .goal
            .iter()
            .filter_map(|c| match c {
                ICond::Lit(x, true) if !added[*x as usize] => Some(*x),
                _ => None,
            })
            .collect();
        Search {
            task,
            limits,
            relaxed,
            usable,
            relevant: relevant_vars(task),
            fixed_goals,
            nodes: Vec::new(),
            seen: HashMap::new(),
            open: BinaryHeap::new(),
            preferred: BinaryHeap::new(),
            expanded: Vec::new(),
            stats: SearchStats::default(),
            eps: task.epsilon,
        }
    }

    fn heuristic(&self, n: &Node) -> (u32, Vec<u32>) {
        let pending = self.task.events[n.ev..].iter().filter_map(|e| match e.kind {
            EventKind::Add(a) => Some(a),
            _ => None,
        });
        let ends = n.running.iter().flat_map(|r| self.task.actions[r.action as usize].end.add.iter().copied());
        self.relaxed.h_ff(n.s.atoms.iter().chain(pending).chain(ends), &self.usable)
    }

    fn next_pending(&self, n: &Node) -> f64 {
        let e = self.task.events.get(n.ev).map_or(f64::INFINITY, |e| e.time);
        let r = n.running.first().map_or(f64::INFINITY, |r| r.end);
        e.min(r)
    }

    fn is_goal(&self, n: &Node) -> bool {
        n.running.is_empty() && self.task.goal.iter().all(|c| n.s.holds(c, None))
    }

    fn key(&self, n: &Node) -> (Key, Visit) {
        let mut r: Vec<(u32, f64)> = n.running.iter().map(|r| (r.action, r.end)).collect();
        r.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut s = n.s.clone();
        for (v, keep) in s.vals.iter_mut().zip(&self.relevant) {
            // Only definedness of an unread variable can affect the future.
            if !keep && !v.is_nan() {
                *v = 0.0;
            }
        }
        let key = Key { s, running: r.iter().map(|x| x.0).collect(), ev: n.ev, happened: n.happened };
        (key, (n.t, r.into_iter().map(|x| x.1).collect()))
    }

    fn push(&mut self, mut n: Node, bound: Option<f64>, preferred: bool) {
        self.stats.generated += 1;
        if let Some(b) = bound {
            let horizon = n.running.last().map_or(n.t, |r| r.end.max(n.t));
            if horizon >= b - TOL {
                return;
            }
        }
        if self.fixed_goals.iter().any(|&g| !n.s.atoms.contains(g)) {
            return;
        }
        let (key, visit) = self.key(&n);
        if self.seen.get(&key).is_some_and(|v| v.iter().any(|o| dominates(o, &visit))) {
            return;
        }
        let (h, helpful) = self.heuristic(&n);
        if h == INF {
            return;
        }
        n.helpful = helpful;
        let front = self.seen.entry(key).or_default();
        front.retain(|o| !dominates(&visit, o));
        front.push(visit);
        let t = (n.t * 1e6).round() as i64;
        self.nodes.push(n);
        self.expanded.push(false);
        let id = self.nodes.len() - 1;
        self.open.push(Reverse((h, t, id)));
        if preferred {
            self.preferred.push(Reverse((h, t, id)));
        }
    }

    fn pop(&mut self, turn: usize) -> Option<usize> {
        loop {
            let from_pref = turn.is_multiple_of(2) && !self.preferred.is_empty();
            let Reverse((_, _, i)) = if from_pref { self.preferred.pop()? } else { self.open.pop()? };
            if !self.expanded[i] {
                self.expanded[i] = true;
                return Some(i);
            }
        }
    }

    fn reset(&mut self) {
        self.nodes.clear();
        self.expanded.clear();
        self.seen.clear();
        self.open.clear();
        self.preferred.clear();
    }

    /// Greedy search, then restarts bounded by the best makespan so far
    /// until the improvement budget runs out or the bound is exhausted.
    fn run(&mut self, clock: Clock) -> (Vec<Plan>, End) {
        let mut plans: Vec<Plan> = Vec::new();
        let mut bound = None;
        loop {
            let limit = if bound.is_none() { self.limits.nodes } else { self.limits.improve };
            match self.search_once(clock, limit, bound) {
                Once::Found(m, p) => {
                    bound = Some(m);
                    plans.push(p);
                }
                Once::Exhausted => return (plans, End::Exhausted),
                Once::Budget => return (plans, End::Budget),
            }
        }
    }

    fn search_once(&mut self, clock: Clock, limit: usize, bound: Option<f64>) -> Once {
        self.reset();
        let root = Node {
            t: 0.0,
            happened: false,
            s: self.task.init.clone(),
            running: Vec::new(),
            ev: 0,
            parent: usize::MAX,
            step: None,
            helpful: Vec::new(),
        };
        self.push(root, bound, true);
        let mut expansions = 0usize;
        let mut turn = 0usize;
        while let Some(i) = self.pop(turn) {
            turn += 1;
            if clock.cancelled() || clock.elapsed() >= self.limits.time || expansions >= limit {
                return Once::Budget;
            }
            if self.is_goal(&self.nodes[i]) {
                let n = &self.nodes[i];
                return Once::Found(n.t, self.extract(i));
            }
            expansions += 1;
            self.stats.expanded += 1;
            let n = self.nodes[i].clone();
            self.expand(&n, i, bound);
        }
        Once::Exhausted
    }

    fn extract(&self, mut i: usize) -> Plan {
        let mut acts = Vec::new();
        while i != usize::MAX {
            let n = &self.nodes[i];
            if let Some(st) = n.step {
                acts.push(TimedAction {
                    action: self.task.actions[st.action as usize].aref.clone(),
                    dispatch: st.dispatch,
                    duration: st.dur,
                });
            }
            i = n.parent;
        }
        acts.reverse();
        Plan::new(acts)
    }

    fn overall_ok(&self, s: &IState, running: &[Running]) -> bool {
        running
            .iter()
            .all(|r| self.task.actions[r.action as usize].over.iter().all(|c| s.holds(c, Some(r.dur))))
    }

    /// Earliest start at or after `ts` whose end keeps epsilon from every
    /// pending item, if it still precedes the next pending item.
    fn place(&self, n: &Node, ts: f64, d: f64, next: f64) -> Option<f64> {
        let mut ts = ts;
        for _ in 0..16 {
            if ts > next - self.eps + TOL {
                return None;
            }
            let te = round9(ts + d);
            let clash = n
                .running
                .iter()
                .map(|r| r.end)
                .chain(self.task.events[n.ev..].iter().map(|e| e.time).take_while(|&t| t < te + self.eps))
                .filter(|&p| (te - p).abs() < self.eps - TOL)
                .fold(f64::NEG_INFINITY, f64::max);
            if clash == f64::NEG_INFINITY {
                return Some(ts);
            }
            ts = round9(clash + self.eps - d);
        }
        None
    }

    fn expand(&mut self, n: &Node, i: usize, bound: Option<f64>) {
        let next = self.next_pending(n);
        let ts0 = if n.happened { round9(n.t + self.eps) } else { 0.0 };
        if ts0 <= next - self.eps + TOL {
            for a in 0..self.task.actions.len() {
                if !self.usable[a] || n.running.iter().any(|r| r.action as usize == a) {
                    continue;
                }
                if let Some(child) = self.start(n, i, a, ts0, next) {
                    let pref = n.helpful.contains(&(a as u32));
                    self.push(child, bound, pref);
                }
            }
        }
        if next.is_finite() {
            if let Some(child) = self.advance(n, i, next) {
                self.push(child, bound, true);
            }
        }
    }

    fn start(&self, n: &Node, i: usize, a: usize, ts0: f64, next: f64) -> Option<Node> {
        let act = &self.task.actions[a];
        if !act.start.pre.iter().all(|c| match c {
            crate::task::ICond::Lit(..) => n.s.holds(c, None),
            _ => true,
        }) {
            return None;
        }
        let d = self.task.pick_duration(act, &n.s)?;
        if d < self.eps - 1e-6 {
            return None;
        }
        if !act.start.pre.iter().all(|c| n.s.holds(c, Some(d))) {
            return None;
        }
        let ts = self.place(n, ts0, d, next)?;
        let mut s = n.s.clone();
        if !s.apply_num(&n.s, &act.start.num, Some(d)) {
            return None;
        }
        s.apply_props(&act.start);
        if !act.over.iter().all(|c| s.holds(c, Some(d))) || !self.overall_ok(&s, &n.running) {
            return None;
        }
        let mut running = n.running.clone();
        let end = round9(ts + d);
        let pos = running.partition_point(|r| r.end <= end);
        running.insert(pos, Running { action: a as u32, end, dur: d });
        Some(Node {
            t: ts,
            happened: true,
            s,
            running,
            ev: n.ev,
            parent: i,
            step: Some(TimedStep { action: a as u32, dispatch: ts, dur: d }),
            helpful: Vec::new(),
        })
    }

    fn advance(&self, n: &Node, i: usize, t: f64) -> Option<Node> {
        let before = &n.s;
        let mut s = before.clone();
        let mut ev = n.ev;
        while ev < self.task.events.len() && self.task.events[ev].time <= t + 1e-6 {
            if !s.apply_event(&self.task.events[ev].kind) {
                return None;
            }
            ev += 1;
        }
        let split = n.running.partition_point(|r| r.end <= t + 1e-6);
        let (ending, rest) = n.running.split_at(split);
        for r in ending {
            let act = &self.task.actions[r.action as usize];
            if !act.end.pre.iter().all(|c| before.holds(c, Some(r.dur))) {
                return None;
            }
        }
        for r in ending {
            let act = &self.task.actions[r.action as usize];
            if !s.apply_num(before, &act.end.num, Some(r.dur)) {
                return None;
            }
            s.apply_props(&act.end);
        }
        if !self.overall_ok(&s, rest) {
            return None;
        }
        Some(Node { t, happened: true, s, running: rest.to_vec(), ev, parent: i, step: None, helpful: Vec::new() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Atom, Cond, Term};
    use crate::pddl::parse_model;

    const DOMAIN: &str = include_str!("../../fixtures/warehouse/domain.pddl");
    const PROBLEM: &str = include_str!("../../fixtures/warehouse/problem.pddl");

    fn model() -> PlanningModel {
        parse_model(DOMAIN, PROBLEM).unwrap()
    }

    #[test]
    fn solves_warehouse() {
        let m = model();
        let out = super::super::solve(&m, &PlannerConfig::builtin());
        assert_eq!(out.status, OutcomeStatus::Solved, "{}", out.log);
        let p = out.best().unwrap();
        assert!(crate::validator::simulate(&m, p).valid);
        let spans: Vec<f64> = out.plans.iter().map(|p| p.makespan()).collect();
        assert!(spans.windows(2).all(|w| w[1] < w[0]), "{spans:?}");
    }

    #[test]
    fn satisfied_goal_gives_empty_plan() {
        let mut m = model();
        m.problem.goal = vec![Cond::Lit { atom: Atom { pred: "robot_at".into(), args: vec![Term::Obj("jerry".into()), Term::Obj("sh3".into())] }, positive: true }];
        let out = super::super::solve(&m, &PlannerConfig::builtin());
        assert_eq!(out.status, OutcomeStatus::Solved);
        assert!(out.best().unwrap().is_empty());
    }

    #[test]
    fn reports_exhaustion() {
        let mut m = model();
        m.problem.goal.push(Cond::Lit {
            atom: Atom { pred: "robot_at".into(), args: vec![Term::Obj("tom".into()), Term::Obj("p1".into())] },
            positive: true,
        });
        let out = super::super::solve(&m, &PlannerConfig::builtin());
        assert_eq!(out.status, OutcomeStatus::ProvenUnsolvable);
        m.domain.operators.clear();
        let out = super::super::solve(&m, &PlannerConfig::builtin());
        assert_eq!(out.status, OutcomeStatus::ProvenUnsolvable);
    }

    #[test]
    fn deterministic() {
        let m = model();
        let a = super::super::solve(&m, &PlannerConfig::builtin());
        let b = super::super::solve(&m, &PlannerConfig::builtin());
        assert_eq!(a.plans, b.plans);
    }

    const ZENO_D: &str = include_str!("../../fixtures/zeno/domain.pddl");
    const ZENO_P: &str = include_str!("../../fixtures/zeno/problem.pddl");

    #[test]
    fn metric_only_counters_do_not_split_states() {
        let m = parse_model(ZENO_D, ZENO_P).unwrap();
        let task = Task::build(&m, &ground_all(&m, true).actions);
        let rel = relevant_vars(&task);
        let name = |i: usize| task.names.pnes[i].to_string();
        let irrelevant: Vec<String> = (0..rel.len()).filter(|&i| !rel[i]).map(name).collect();
        assert!(irrelevant.contains(&"(total-fuel-used)".to_string()), "{irrelevant:?}");
        assert!(rel.iter().enumerate().any(|(i, &r)| r && name(i) == "(fuel plane1)"));
        // Without the counter split, the bounded state space is exhausted.
        let mut m = m;
        m.problem.init.retain(|a| !(a.pred.as_str() == "at" && a.args[0].as_str() == "alice"));
        let out = super::super::solve(&m, &PlannerConfig::builtin());
        assert_eq!(out.status, OutcomeStatus::ProvenUnsolvable, "{}", out.log);
    }

    #[test]
    fn goal_atoms_nothing_adds_prune_at_once() {
        let mut m = model();
        let args = vec![Term::Obj("sh1".into()), Term::Obj("sh3".into())];
        m.problem.goal.push(Cond::Lit { atom: Atom { pred: "connected".into(), args }, positive: true });
        let out = super::super::solve(&m, &PlannerConfig::builtin());
        assert_eq!(out.status, OutcomeStatus::ProvenUnsolvable, "{}", out.log);
        assert!(out.stats.unwrap().expanded <= 1);
    }
}
