//! Plan validation by happening simulation.
//!
//! A happening groups every action start, action end and window event whose
//! times chain within [`TIME_TOL`]. At each happening:
//!
//! * start and end conditions are checked in the state before it;
//! * items must not interfere pairwise (see [`Footprint::interferes`]);
//! * a happening closer than ε to an earlier one must be executable as a
//!   single merged happening from the earlier one's prior state;
//! * after applying effects, over-all conditions of running actions hold.
//!
//! The goal is checked in the final state at the makespan.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::grounder::{ground_action_with, GroundError, StaticInfo};
use crate::model::*;
use crate::pddl::{format_time, normalize_windows};
use crate::task::{EventKind, Footprint, ICond, IState, Task};
use crate::TIME_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Precondition,
    Invariant,
    Goal,
    Mutex,
    Duration,
}

impl fmt::Display for FailureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FailureKind::Precondition => "precondition",
            FailureKind::Invariant => "invariant",
            FailureKind::Goal => "goal",
            FailureKind::Mutex => "mutex",
            FailureKind::Duration => "duration",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Subject {
    /// A plan action, by position in the sorted plan.
    Action { index: usize, action: ActionRef },
    Goal,
    Window { index: usize },
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::Action { index, action } => write!(f, "#{index} {action}"),
            Subject::Goal => f.write_str("goal"),
            Subject::Window { index } => write!(f, "window {index}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub time: f64,
    pub subject: Subject,
    pub condition: String,
    pub kind: FailureKind,
    /// Other plan actions involved (mutex failures).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub with: Vec<usize>,
}

impl Failure {
    fn involves(&self, index: usize) -> bool {
        matches!(self.subject, Subject::Action { index: i, .. } if i == index) || self.with.contains(&index)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} failure at {}: {}", format_time(self.time), self.kind, self.subject, self.condition)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub failures: Vec<Failure>,
    pub trace: Vec<State>,
    pub makespan: f64,
    pub metric: Option<f64>,
}

impl ValidationReport {
    pub fn final_state(&self) -> Option<&State> {
        self.trace.last()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "valid: {}", self.valid)?;
        writeln!(f, "makespan: {}", format_time(self.makespan))?;
        match self.metric {
            Some(m) => writeln!(f, "metric: {}", format_time(m))?,
            None => writeln!(f, "metric: undefined")?,
        }
        for x in &self.failures {
            writeln!(f, "  {x}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum ItemKind {
    Event(usize),
    End(usize),
    Start(usize),
}

#[derive(Debug, Clone, Copy)]
struct Item {
    time: f64,
    kind: ItemKind,
}

struct Happening {
    time: f64,
    items: Vec<Item>,
    before: IState,
    after: IState,
}

/// Who made an atom true, for causal-link extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Producer {
    InitialState,
    Window { index: usize, time: f64 },
    Action { index: usize, action: ActionRef, when: When, time: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Consumer {
    Action { index: usize, action: ActionRef, when: When, time: f64 },
    Goal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalLink {
    pub producer: Producer,
    pub atom: GroundAtom,
    pub consumer: Consumer,
}

struct Engine<'a> {
    task: Task,
    plan: &'a Plan,
    /// Task action per plan position; `None` when grounding failed.
    act: Vec<Option<usize>>,
    ground_failures: Vec<Failure>,
}

struct RunOutput {
    failures: Vec<Failure>,
    happenings: Vec<Happening>,
    last: IState,
}

impl<'a> Engine<'a> {
    fn new(model: &PlanningModel, plan: &'a Plan) -> Engine<'a> {
        let st = StaticInfo::new(model);
        let mut ground = Vec::new();
        let mut pos: HashMap<ActionRef, usize> = HashMap::new();
        let mut act = Vec::with_capacity(plan.len());
        let mut ground_failures = Vec::new();
        for (i, ta) in plan.actions.iter().enumerate() {
            if let Some(&k) = pos.get(&ta.action) {
                act.push(Some(k));
                continue;
            }
            match ground_action_with(&ta.action, model, &st) {
                Ok(g) => {
                    pos.insert(ta.action.clone(), ground.len());
                    act.push(Some(ground.len()));
                    ground.push(g);
                }
                Err(e) => {
                    act.push(None);
                    ground_failures.push(Failure {
                        time: ta.dispatch,
                        subject: Subject::Action { index: i, action: ta.action.clone() },
                        condition: ground_message(&e),
                        kind: FailureKind::Precondition,
                        with: vec![],
                    });
                }
            }
        }
        Engine { task: Task::build(model, &ground), plan, act, ground_failures }
    }

    fn subject(&self, k: ItemKind) -> Subject {
        match k {
            ItemKind::Start(i) | ItemKind::End(i) => {
                Subject::Action { index: i, action: self.plan.actions[i].action.clone() }
            }
            ItemKind::Event(e) => Subject::Window { index: self.task.events[e].window },
        }
    }

    fn owner(k: ItemKind) -> Option<usize> {
        match k {
            ItemKind::Start(i) | ItemKind::End(i) => Some(i),
            ItemKind::Event(_) => None,
        }
    }

    fn conds(&self, k: ItemKind) -> &[ICond] {
        match k {
            ItemKind::Start(i) => &self.task.actions[self.act[i].unwrap()].start.pre,
            ItemKind::End(i) => &self.task.actions[self.act[i].unwrap()].end.pre,
            ItemKind::Event(_) => &[],
        }
    }

    fn fp(&self, k: ItemKind) -> &Footprint {
        match k {
            ItemKind::Start(i) => &self.task.actions[self.act[i].unwrap()].fp_start,
            ItemKind::End(i) => &self.task.actions[self.act[i].unwrap()].fp_end,
            ItemKind::Event(e) => &self.task.events[e].fp,
        }
    }

    fn dur(&self, k: ItemKind) -> Option<f64> {
        match k {
            ItemKind::Start(i) | ItemKind::End(i) => Some(self.plan.actions[i].duration),
            ItemKind::Event(_) => None,
        }
    }

    fn label(&self, k: ItemKind) -> String {
        match k {
            ItemKind::Start(i) => format!("start of {}", self.plan.actions[i].action),
            ItemKind::End(i) => format!("end of {}", self.plan.actions[i].action),
            ItemKind::Event(e) => format!("window {} event", self.task.events[e].window),
        }
    }

    /// Items up to `horizon`. Ends of actions finishing later are omitted.
    fn items(&self, include: &dyn Fn(usize) -> bool, horizon: f64) -> Vec<Item> {
        let mut items = Vec::new();
        for (i, ta) in self.plan.actions.iter().enumerate() {
            if self.act[i].is_none() || !include(i) {
                continue;
            }
            if ta.dispatch <= horizon + TIME_TOL {
                items.push(Item { time: ta.dispatch, kind: ItemKind::Start(i) });
            }
            if ta.end() <= horizon + TIME_TOL {
                items.push(Item { time: ta.end(), kind: ItemKind::End(i) });
            }
        }
        for (e, ev) in self.task.events.iter().enumerate() {
            if ev.time <= horizon + TIME_TOL {
                items.push(Item { time: ev.time, kind: ItemKind::Event(e) });
            }
        }
        items.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.kind.cmp(&b.kind)));
        items
    }

    fn run(&self, include: &dyn Fn(usize) -> bool, horizon: f64) -> RunOutput {
        let items = self.items(include, horizon);
        let eps = self.task.epsilon;
        let mut failures = Vec::new();
        let mut happenings: Vec<Happening> = Vec::new();
        let mut state = self.task.init.clone();
        let mut k = 0;
        while k < items.len() {
            let mut group = vec![items[k]];
            k += 1;
            while k < items.len() && items[k].time - items[k - 1].time <= TIME_TOL {
                group.push(items[k]);
                k += 1;
            }
            let t = group[0].time;
            let before = state.clone();

            for it in &group {
                let d = self.dur(it.kind);
                if let ItemKind::Start(i) = it.kind {
                    let a = &self.task.actions[self.act[i].unwrap()];
                    let dv = self.plan.actions[i].duration;
                    if dv < eps - TIME_TOL {
                        failures.push(self.fail(t, it.kind, format!("duration {} is below epsilon", format_time(dv)), FailureKind::Duration));
                    } else if !self.task.duration_ok(a, &before, dv) {
                        let want: Vec<String> = a
                            .dur
                            .iter()
                            .map(|(op, e)| format!("(?duration {} {})", op.symbol(), self.task.expr_str(e)))
                            .collect();
                        failures.push(self.fail(
                            t,
                            it.kind,
                            format!("duration {} violates {}", format_time(dv), want.join(" ")),
                            FailureKind::Duration,
                        ));
                    }
                }
                for c in self.conds(it.kind) {
                    if !before.holds(c, d) {
                        failures.push(self.fail(t, it.kind, self.task.describe(c), FailureKind::Precondition));
                    }
                }
            }

            for (x, a) in group.iter().enumerate() {
                for b in &group[x + 1..] {
                    let (oa, ob) = (Self::owner(a.kind), Self::owner(b.kind));
                    if oa.is_some() && oa == ob {
                        continue;
                    }
                    if self.fp(a.kind).interferes(self.fp(b.kind)) {
                        failures.push(self.mutex(t, *a, *b, "simultaneous"));
                    }
                }
            }

            for h in happenings.iter().rev() {
                if t - h.time >= eps - TIME_TOL {
                    break;
                }
                let mut ok = true;
                for it in &group {
                    if Self::owner(it.kind).is_some_and(|o| h.items.iter().any(|p| Self::owner(p.kind) == Some(o))) {
                        continue;
                    }
                    if self.conds(it.kind).iter().any(|c| !h.before.holds(c, self.dur(it.kind))) {
                        failures.push(Failure {
                            time: t,
                            subject: self.subject(it.kind),
                            condition: format!(
                                "{} depends on a happening at {} closer than epsilon",
                                self.label(it.kind),
                                format_time(h.time)
                            ),
                            kind: FailureKind::Mutex,
                            with: h.items.iter().filter_map(|p| Self::owner(p.kind)).collect(),
                        });
                        ok = false;
                    }
                }
                if !ok {
                    continue;
                }
                'pairs: for p in &h.items {
                    for it in &group {
                        let (op, oi) = (Self::owner(p.kind), Self::owner(it.kind));
                        if op.is_some() && op == oi {
                            continue;
                        }
                        if self.fp(p.kind).interferes(self.fp(it.kind)) {
                            failures.push(self.mutex(t, *it, *p, "closer than epsilon to"));
                            break 'pairs;
                        }
                    }
                }
            }

            let mut after = before.clone();
            for it in &group {
                match it.kind {
                    ItemKind::Start(i) | ItemKind::End(i) => {
                        let a = &self.task.actions[self.act[i].unwrap()];
                        let side = if matches!(it.kind, ItemKind::Start(_)) { &a.start } else { &a.end };
                        after.apply_props(side);
                        if !after.apply_num(&before, &side.num, self.dur(it.kind)) {
                            failures.push(self.fail(
                                t,
                                it.kind,
                                "numeric effect reads an undefined value".into(),
                                FailureKind::Precondition,
                            ));
                        }
                    }
                    ItemKind::Event(e) => {
                        if !after.apply_event(&self.task.events[e].kind) {
                            failures.push(self.fail(
                                t,
                                it.kind,
                                "numeric window updates an undefined value".into(),
                                FailureKind::Precondition,
                            ));
                        }
                    }
                }
            }

            for (i, ta) in self.plan.actions.iter().enumerate() {
                let Some(ai) = self.act[i] else { continue };
                if !include(i) || ta.dispatch > t + TIME_TOL || ta.end() <= t + TIME_TOL {
                    continue;
                }
                for c in &self.task.actions[ai].over {
                    if !after.holds(c, Some(ta.duration)) {
                        failures.push(Failure {
                            time: t,
                            subject: Subject::Action { index: i, action: ta.action.clone() },
                            condition: self.task.describe(c),
                            kind: FailureKind::Invariant,
                            with: vec![],
                        });
                    }
                }
            }

            state = after.clone();
            happenings.push(Happening { time: t, items: group, before, after });
        }
        RunOutput { failures, happenings, last: state }
    }

    fn fail(&self, t: f64, k: ItemKind, condition: String, kind: FailureKind) -> Failure {
        Failure { time: t, subject: self.subject(k), condition, kind, with: vec![] }
    }

    fn mutex(&self, t: f64, a: Item, b: Item, how: &str) -> Failure {
        Failure {
            time: t,
            subject: self.subject(a.kind),
            condition: format!("{} is {how} interfering {}", self.label(a.kind), self.label(b.kind)),
            kind: FailureKind::Mutex,
            with: Self::owner(b.kind).into_iter().collect(),
        }
    }
}

fn ground_message(e: &GroundError) -> String {
    match e {
        GroundError::UnknownOperator(op) => format!("unknown operator `{op}`"),
        other => other.to_string(),
    }
}

fn check_goal(task: &Task, s: &IState, t: f64, out: &mut Vec<Failure>) {
    for c in &task.goal {
        if !s.holds(c, None) {
            out.push(Failure {
                time: t,
                subject: Subject::Goal,
                condition: task.describe(c),
                kind: FailureKind::Goal,
                with: vec![],
            });
        }
    }
}

/// Simulates `plan` on `model` and reports every failure found.
pub fn simulate(model: &PlanningModel, plan: &Plan) -> ValidationReport {
    let eng = Engine::new(model, plan);
    let makespan = plan.makespan();
    let out = eng.run(&|_| true, makespan);
    let mut failures = eng.ground_failures.clone();
    failures.extend(out.failures);
    check_goal(&eng.task, &out.last, makespan, &mut failures);
    let mut trace = vec![eng.task.to_state(&eng.task.init, 0.0)];
    trace.extend(out.happenings.iter().map(|h| eng.task.to_state(&h.after, h.time)));
    let final_state = trace.last().cloned().expect("trace has the initial state");
    let metric = evaluate_metric(model, plan, &final_state).ok();
    ValidationReport { valid: failures.is_empty(), failures, trace, makespan, metric }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("division by zero in metric subexpression {0}")]
    DivisionByZero(String),
    #[error("metric refers to undefined value {0}")]
    Undefined(String),
    #[error("metric mentions ?duration")]
    Duration,
}

/// Evaluates the metric with `total-time` bound to the plan's makespan.
pub fn evaluate_metric(model: &PlanningModel, plan: &Plan, final_state: &State) -> Result<f64, MetricError> {
    fn ev(e: &NumExpr, s: &State, total: f64) -> Result<f64, MetricError> {
        Ok(match e {
            NumExpr::Num(v) => *v,
            NumExpr::TotalTime => total,
            NumExpr::Duration => return Err(MetricError::Duration),
            NumExpr::Fluent(f) => {
                let p = bind_fterm(f, &Binding::new())
                    .ok_or_else(|| MetricError::Undefined(crate::pddl::printer::expr(e)))?;
                *s.values.get(&p).ok_or_else(|| MetricError::Undefined(p.to_string()))?
            }
            NumExpr::Neg(a) => -ev(a, s, total)?,
            NumExpr::Bin(op, a, b) => {
                let (x, y) = (ev(a, s, total)?, ev(b, s, total)?);
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            return Err(MetricError::DivisionByZero(crate::pddl::printer::expr(e)));
                        }
                        x / y
                    }
                }
            }
        })
    }
    ev(&model.problem.metric.expr, final_state, plan.makespan())
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PrefixError {
    #[error("cut index {index} is outside the plan (length {len})")]
    Range { index: usize, len: usize },
    #[error("replacement {action} is not applicable: {}", failed.join("; "))]
    Inapplicable { action: ActionRef, failed: Vec<String> },
}

/// Result of executing a plan prefix followed by a replacement action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixExecution {
    /// Dispatch time of the replacement.
    pub dispatch: f64,
    /// Time at which the replacement finishes; the new time origin.
    pub t0: f64,
    /// The executed prefix plus the replacement, in absolute time.
    pub prefix: Plan,
    /// Position of the replacement inside `prefix`.
    pub replacement_index: usize,
    /// Positions in `prefix` of actions still running at `t0`.
    pub in_flight: Vec<usize>,
    pub init: Vec<GroundAtom>,
    pub init_values: Vec<(Pne, f64)>,
    /// In-flight end effects and the original windows, relative to `t0`.
    pub windows: Vec<TimeWindow>,
}

fn round9(t: f64) -> f64 {
    (t * 1e9).round() / 1e9
}

/// Executes the actions before `cut` and then `replacement`, dispatched at the
/// time of the action at `cut`, and returns the state when the replacement
/// ends together with the pending effects as windows.
pub fn execute_prefix(
    model: &PlanningModel,
    plan: &Plan,
    cut: usize,
    replacement: &ActionRef,
) -> Result<PrefixExecution, PrefixError> {
    if cut >= plan.len() {
        return Err(PrefixError::Range { index: cut, len: plan.len() });
    }
    let t_cut = plan.actions[cut].dispatch;
    let before_plan = Plan { actions: plan.actions[..cut].to_vec() };
    let eng0 = Engine::new(model, &before_plan);
    let st = StaticInfo::new(model);
    let g = ground_action_with(replacement, model, &st).map_err(|e| PrefixError::Inapplicable {
        action: replacement.clone(),
        failed: vec![ground_message(&e)],
    })?;
    let probe = Task::build(model, std::slice::from_ref(&g));
    // State before the cut happening, for the replacement's duration.
    let out0 = eng0.run(&|_| true, t_cut - 2.0 * TIME_TOL);
    let s_cut = project(&eng0.task, &out0.last, &probe);
    let dur = probe.pick_duration(&probe.actions[0], &s_cut).ok_or_else(|| PrefixError::Inapplicable {
        action: replacement.clone(),
        failed: vec!["duration cannot be evaluated".into()],
    })?;
    let mut actions = before_plan.actions.clone();
    let b = TimedAction { action: replacement.clone(), dispatch: t_cut, duration: dur };
    actions.push(b.clone());
    let prefix = Plan { actions };
    let bi = prefix.len() - 1;
    let t0 = round9(t_cut + dur);

    let eng = Engine::new(model, &prefix);
    let out = eng.run(&|_| true, t0);
    let failed: Vec<String> = eng
        .ground_failures
        .iter()
        .chain(out.failures.iter())
        .filter(|f| f.involves(bi))
        .map(|f| f.to_string())
        .collect();
    if !failed.is_empty() {
        return Err(PrefixError::Inapplicable { action: replacement.clone(), failed });
    }
    let state = eng.task.to_state(&out.last, t0);

    let mut windows = Vec::new();
    let mut in_flight = Vec::new();
    for (i, ta) in prefix.actions.iter().enumerate() {
        let Some(ai) = eng.act[i] else { continue };
        if ta.end() <= t0 + TIME_TOL {
            continue;
        }
        in_flight.push(i);
        let a = &eng.task.actions[ai];
        let lb = round9(ta.end() - t0);
        for &x in &a.end.add {
            windows.push(TimeWindow::atom(lb, f64::INFINITY, eng.task.names.atoms[x as usize].clone()));
        }
        for &x in &a.end.del {
            if !a.end.add.contains(&x) {
                windows.push(TimeWindow {
                    lb,
                    ub: f64::INFINITY,
                    payload: WindowPayload::Atom { atom: eng.task.names.atoms[x as usize].clone(), positive: false },
                });
            }
        }
        for n in &a.end.num {
            if let Some(v) = n.value.eval(&out.last.vals, Some(ta.duration), None) {
                windows.push(TimeWindow {
                    lb,
                    ub: f64::INFINITY,
                    payload: WindowPayload::Numeric {
                        op: n.op,
                        target: eng.task.names.pnes[n.target as usize].clone(),
                        value: v,
                    },
                });
            }
        }
    }
    for w in &model.problem.windows {
        match &w.payload {
            WindowPayload::Atom { atom, positive: true } => {
                if w.lb > t0 + TIME_TOL {
                    windows.push(TimeWindow { lb: round9(w.lb - t0), ub: shift_ub(w.ub, t0), payload: w.payload.clone() });
                } else if w.ub.is_finite() && w.ub > t0 + TIME_TOL {
                    windows.push(TimeWindow {
                        lb: round9(w.ub - t0),
                        ub: f64::INFINITY,
                        payload: WindowPayload::Atom { atom: atom.clone(), positive: false },
                    });
                }
            }
            _ => {
                if w.lb > t0 + TIME_TOL {
                    windows.push(TimeWindow { lb: round9(w.lb - t0), ub: shift_ub(w.ub, t0), payload: w.payload.clone() });
                }
            }
        }
    }
    windows.sort_by(|a, b| a.lb.total_cmp(&b.lb));
    Ok(PrefixExecution {
        dispatch: t_cut,
        t0,
        prefix,
        replacement_index: bi,
        in_flight,
        init: state.atoms.into_iter().collect(),
        init_values: state.values.into_iter().collect(),
        windows: normalize_windows(windows),
    })
}

fn shift_ub(ub: f64, t0: f64) -> f64 {
    if ub.is_finite() {
        round9(ub - t0)
    } else {
        ub
    }
}

/// Re-expresses a state of one task in the ids of another.
fn project(from: &Task, s: &IState, to: &Task) -> IState {
    let mut out = to.init.clone();
    out.atoms = Default::default();
    for a in s.atoms.iter() {
        if let Some(id) = to.names.atom_id(&from.names.atoms[a as usize]) {
            out.atoms.insert(id);
        }
    }
    for v in out.vals.iter_mut() {
        *v = f64::NAN;
    }
    for (i, v) in s.vals.iter().enumerate() {
        if let Some(id) = to.names.pne_id(&from.names.pnes[i]) {
            out.vals[id as usize] = *v;
        }
    }
    out
}

/// Links every positive atom condition, and every goal atom, to the most
/// recent item that made it true.
pub fn extract_causal_links(model: &PlanningModel, plan: &Plan) -> Vec<CausalLink> {
    let eng = Engine::new(model, plan);
    let out = eng.run(&|_| true, plan.makespan());
    let task = &eng.task;
    let mut last: HashMap<u32, Producer> = HashMap::new();
    for a in task.init.atoms.iter() {
        last.insert(a, Producer::InitialState);
    }
    let mut links = Vec::new();
    let consumer = |i: usize, when: When, time: f64| Consumer::Action {
        index: i,
        action: plan.actions[i].action.clone(),
        when,
        time,
    };
    for h in &out.happenings {
        for it in &h.items {
            let (i, when, conds) = match it.kind {
                ItemKind::Start(i) => (i, When::Start, &task.actions[eng.act[i].unwrap()].start.pre),
                ItemKind::End(i) => (i, When::End, &task.actions[eng.act[i].unwrap()].end.pre),
                ItemKind::Event(_) => continue,
            };
            for c in conds {
                if let ICond::Lit(x, true) = c {
                    if let Some(p) = last.get(x) {
                        links.push(CausalLink {
                            producer: p.clone(),
                            atom: task.names.atoms[*x as usize].clone(),
                            consumer: consumer(i, when, h.time),
                        });
                    }
                }
            }
        }
        for it in &h.items {
            match it.kind {
                ItemKind::Start(i) | ItemKind::End(i) => {
                    let a = &task.actions[eng.act[i].unwrap()];
                    let (side, when) =
                        if matches!(it.kind, ItemKind::Start(_)) { (&a.start, When::Start) } else { (&a.end, When::End) };
                    for d in &side.del {
                        last.remove(d);
                    }
                    for x in &side.add {
                        last.insert(
                            *x,
                            Producer::Action { index: i, action: plan.actions[i].action.clone(), when, time: h.time },
                        );
                    }
                }
                ItemKind::Event(e) => {
                    let ev = &task.events[e];
                    match ev.kind {
                        EventKind::Add(x) => {
                            last.insert(x, Producer::Window { index: ev.window, time: h.time });
                        }
                        EventKind::Del(x) => {
                            last.remove(&x);
                        }
                        EventKind::Num(..) => {}
                    }
                }
            }
        }
        for it in &h.items {
            if let ItemKind::Start(i) = it.kind {
                for c in &task.actions[eng.act[i].unwrap()].over {
                    if let ICond::Lit(x, true) = c {
                        if let Some(p) = last.get(x) {
                            links.push(CausalLink {
                                producer: p.clone(),
                                atom: task.names.atoms[*x as usize].clone(),
                                consumer: consumer(i, When::OverAll, h.time),
                            });
                        }
                    }
                }
            }
        }
    }
    for c in &task.goal {
        if let ICond::Lit(x, true) = c {
            if let Some(p) = last.get(x) {
                links.push(CausalLink {
                    producer: p.clone(),
                    atom: task.names.atoms[*x as usize].clone(),
                    consumer: Consumer::Goal,
                });
            }
        }
    }
    links
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("action {0} at {1} is not in the plan")]
pub struct NotInPlan(pub ActionRef, pub String);

/// True iff removing exactly this occurrence makes the plan invalid.
pub fn action_is_justified(model: &PlanningModel, plan: &Plan, a: &TimedAction) -> Result<bool, NotInPlan> {
    let i = plan
        .actions
        .iter()
        .position(|x| x.action == a.action && (x.dispatch - a.dispatch).abs() <= TIME_TOL)
        .ok_or_else(|| NotInPlan(a.action.clone(), format_time(a.dispatch)))?;
    Ok(!simulate(model, &plan.without(i)).valid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pddl::{parse_model, parse_plan};

    const DOMAIN: &str = include_str!("../fixtures/warehouse/domain.pddl");
    const PROBLEM: &str = include_str!("../fixtures/warehouse/problem.pddl");
    const FIG4: &str = include_str!("../fixtures/warehouse/plan_original.plan");

    fn model() -> PlanningModel {
        parse_model(DOMAIN, PROBLEM).unwrap()
    }

    #[test]
    fn figure_four_is_valid() {
        let m = model();
        let p = parse_plan(FIG4, &m).unwrap();
        let r = simulate(&m, &p);
        assert!(r.valid, "{r}");
        assert!((r.makespan - 20.003).abs() < 1e-6);
        assert!((r.metric.unwrap() - 20.003).abs() < 1e-6);
    }

    #[test]
    fn empty_plan_fails_both_goals() {
        let m = model();
        let r = simulate(&m, &Plan::default());
        assert!(!r.valid);
        assert_eq!(r.failures.len(), 2);
        assert!(r.failures.iter().all(|f| f.kind == FailureKind::Goal));
    }

    #[test]
    fn dropping_last_unload_fails_goal() {
        let m = model();
        let p = parse_plan(FIG4, &m).unwrap();
        let r = simulate(&m, &p.without(12));
        assert_eq!(r.failures.len(), 1);
        assert_eq!(r.failures[0].kind, FailureKind::Goal);
        assert_eq!(r.failures[0].condition, "(pallet_at p2 sh1)");
    }

    #[test]
    fn epsilon_violation_is_a_mutex() {
        let m = model();
        let mut p = parse_plan(FIG4, &m).unwrap();
        // load_pallet Jerry p2 sh6 needs not_holding_pallet from the unload ending at 12.502
        p.actions[11].dispatch = 12.5025;
        let r = simulate(&m, &p);
        assert!(r.failures.iter().any(|f| f.kind == FailureKind::Mutex), "{r}");
    }

    #[test]
    fn wrong_duration_is_reported() {
        let m = model();
        let mut p = parse_plan(FIG4, &m).unwrap();
        p.actions[3].duration = 1.5;
        let r = simulate(&m, &p);
        assert!(r.failures.iter().any(|f| f.kind == FailureKind::Duration));
    }

    #[test]
    fn justified_checks() {
        let m = model();
        let p = parse_plan(FIG4, &m).unwrap();
        assert!(action_is_justified(&m, &p, &p.actions[12]).unwrap());
        let ghost = TimedAction { action: ActionRef::new("set_shelf", &["tom", "sh2"]), dispatch: 1.0, duration: 1.0 };
        assert!(action_is_justified(&m, &p, &ghost).is_err());
    }

    #[test]
    fn causal_links_of_figure_four() {
        let m = model();
        let p = parse_plan(FIG4, &m).unwrap();
        let links = extract_causal_links(&m, &p);
        assert!(links.iter().any(|l| {
            l.atom == GroundAtom::new("set_shelf", &["sh1"])
                && matches!(&l.producer, Producer::Action { action, .. } if *action == ActionRef::new("set_shelf", &["tom", "sh1"]))
                && matches!(&l.consumer, Consumer::Action { action, .. } if *action == ActionRef::new("unload_pallet", &["jerry", "p2", "sh1"]))
        }));
        assert_eq!(links.iter().filter(|l| l.consumer == Consumer::Goal).count(), 2);
    }

    #[test]
    fn prefix_execution_matches_worked_example() {
        let m = model();
        let p = parse_plan(FIG4, &m).unwrap();
        let x = execute_prefix(&m, &p, 3, &ActionRef::new("load_pallet", &["tom", "p2", "sh6"])).unwrap();
        assert!((x.t0 - 5.001).abs() < 1e-9);
        assert!(x.init.contains(&GroundAtom::new("pallet_at", &["p2", "tom"])));
        assert!(x.init.contains(&GroundAtom::new("robot_at", &["tom", "sh6"])));
        assert!(!x.init.contains(&GroundAtom::new("pallet_at", &["p2", "sh6"])));
        let w = x
            .windows
            .iter()
            .find(|w| w.payload == WindowPayload::Atom { atom: GroundAtom::new("robot_at", &["jerry", "sh4"]), positive: true })
            .unwrap();
        assert!((w.lb - 1.999).abs() < 1e-9);
    }

    #[test]
    fn prefix_rejects_inapplicable_replacement() {
        let m = model();
        let p = parse_plan(FIG4, &m).unwrap();
        let e = execute_prefix(&m, &p, 3, &ActionRef::new("load_pallet", &["tom", "p1", "sh6"])).unwrap_err();
        assert!(matches!(e, PrefixError::Inapplicable { .. }));
        assert!(matches!(execute_prefix(&m, &p, 99, &p.actions[0].action), Err(PrefixError::Range { .. })));
    }
}
