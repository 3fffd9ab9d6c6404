//! Interned ground task shared by the validator and the planner.
//!
//! Atoms and numeric variables are mapped to dense `u32` ids. A state is a
//! bit set of true atoms plus a value vector where NaN marks an undefined
//! variable.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::{Hash, Hasher};

use crate::bitset::BitSet;
use crate::grounder::{ground_cond, ground_expr, GCond, GEffect, GExpr, GroundAction};
use crate::model::*;

#[derive(Debug, Clone, PartialEq)]
pub enum IExpr {
    Num(f64),
    Var(u32),
    Duration,
    TotalTime,
    Bin(BinOp, Box<IExpr>, Box<IExpr>),
    Neg(Box<IExpr>),
}

impl IExpr {
    pub fn vars(&self, out: &mut Vec<u32>) {
        match self {
            IExpr::Var(v) => out.push(*v),
            IExpr::Bin(_, a, b) => {
                a.vars(out);
                b.vars(out);
            }
            IExpr::Neg(a) => a.vars(out),
            _ => {}
        }
    }

    /// Evaluates against a value vector. `None` for undefined variables,
    /// division by zero, or a missing `?duration`/`total-time`.
    pub fn eval(&self, vals: &[f64], dur: Option<f64>, total: Option<f64>) -> Option<f64> {
        let v = match self {
            IExpr::Num(v) => *v,
            IExpr::Var(i) => *vals.get(*i as usize)?,
            IExpr::Duration => dur?,
            IExpr::TotalTime => total?,
            IExpr::Bin(op, a, b) => {
                let (x, y) = (a.eval(vals, dur, total)?, b.eval(vals, dur, total)?);
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            return None;
                        }
                        x / y
                    }
                }
            }
            IExpr::Neg(a) => -a.eval(vals, dur, total)?,
        };
        if v.is_nan() {
            None
        } else {
            Some(v)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ICond {
    Lit(u32, bool),
    Cmp(CmpOp, IExpr, IExpr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct INum {
    pub op: AssignOp,
    pub target: u32,
    pub value: IExpr,
}

/// Conditions and effects at one end point of an action.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Side {
    pub pre: Vec<ICond>,
    pub add: Vec<u32>,
    pub del: Vec<u32>,
    pub num: Vec<INum>,
}

/// What an instantaneous item reads and writes, for interference checks.
/// `del` holds net deletes only (deleted and not re-added).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Footprint {
    pub pos: Vec<u32>,
    pub neg: Vec<u32>,
    pub add: Vec<u32>,
    pub del: Vec<u32>,
    pub reads: Vec<u32>,
    pub writes: Vec<u32>,
}

fn sorted(mut v: Vec<u32>) -> Vec<u32> {
    v.sort_unstable();
    v.dedup();
    v
}

fn meets(a: &[u32], b: &[u32]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

impl Footprint {
    fn from_side(side: &Side, extra_reads: &[u32]) -> Self {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        let mut reads = extra_reads.to_vec();
        for c in &side.pre {
            match c {
                ICond::Lit(a, true) => pos.push(*a),
                ICond::Lit(a, false) => neg.push(*a),
                ICond::Cmp(_, l, r) => {
                    l.vars(&mut reads);
                    r.vars(&mut reads);
                }
            }
        }
        for n in &side.num {
            n.value.vars(&mut reads);
        }
        let add = sorted(side.add.clone());
        let del = sorted(side.del.iter().copied().filter(|d| !side.add.contains(d)).collect());
        Footprint {
            pos: sorted(pos),
            neg: sorted(neg),
            add,
            del,
            reads: sorted(reads),
            writes: sorted(side.num.iter().map(|n| n.target).collect()),
        }
    }

    /// Two items interfere when one could change the outcome of the other.
    pub fn interferes(&self, o: &Footprint) -> bool {
        meets(&self.add, &o.del)
            || meets(&self.del, &o.add)
            || meets(&self.del, &o.pos)
            || meets(&o.del, &self.pos)
            || meets(&self.add, &o.neg)
            || meets(&o.add, &self.neg)
            || meets(&self.writes, &o.writes)
            || meets(&self.writes, &o.reads)
            || meets(&o.writes, &self.reads)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IAction {
    pub aref: ActionRef,
    pub dur: Vec<(CmpOp, IExpr)>,
    pub start: Side,
    pub over: Vec<ICond>,
    pub end: Side,
    pub fp_start: Footprint,
    pub fp_end: Footprint,
    /// Duration when fixed by an `=` constraint on constants.
    pub fixed_duration: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    Add(u32),
    Del(u32),
    Num(AssignOp, u32, f64),
}

/// A timed change imposed by a window.
#[derive(Debug, Clone, PartialEq)]
pub struct IEvent {
    pub time: f64,
    pub window: usize,
    pub kind: EventKind,
    pub fp: Footprint,
}

#[derive(Debug, Clone)]
pub struct IState {
    pub atoms: BitSet,
    pub vals: Vec<f64>,
}

impl PartialEq for IState {
    fn eq(&self, o: &Self) -> bool {
        self.atoms == o.atoms
            && self.vals.len() == o.vals.len()
            && self.vals.iter().zip(&o.vals).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Eq for IState {}

impl Hash for IState {
    fn hash<H: Hasher>(&self, h: &mut H) {
        self.atoms.hash(h);
        for v in &self.vals {
            v.to_bits().hash(h);
        }
    }
}

impl IState {
    pub fn holds(&self, c: &ICond, dur: Option<f64>) -> bool {
        match c {
            ICond::Lit(a, pos) => self.atoms.contains(*a) == *pos,
            ICond::Cmp(op, l, r) => match (l.eval(&self.vals, dur, None), r.eval(&self.vals, dur, None)) {
                (Some(x), Some(y)) => op.holds(x, y),
                _ => false,
            },
        }
    }

    /// First condition that fails, if any.
    pub fn first_failure<'a>(&self, cs: &'a [ICond], dur: Option<f64>) -> Option<&'a ICond> {
        cs.iter().find(|c| !self.holds(c, dur))
    }

    /// Numeric updates computed against `before` and written into `self`.
    /// Returns false when an update reads an undefined value.
    pub fn apply_num(&mut self, before: &IState, num: &[INum], dur: Option<f64>) -> bool {
        for n in num {
            let Some(v) = n.value.eval(&before.vals, dur, None) else { return false };
            let cur = self.vals[n.target as usize];
            let cur = if cur.is_nan() { None } else { Some(cur) };
            match n.op.apply(cur, v) {
                Some(x) => self.vals[n.target as usize] = x,
                None => return false,
            }
        }
        true
    }

    pub fn apply_props(&mut self, side: &Side) {
        for d in &side.del {
            self.atoms.remove(*d);
        }
        for a in &side.add {
            self.atoms.insert(*a);
        }
    }

    pub fn apply_event(&mut self, e: &EventKind) -> bool {
        match e {
            EventKind::Add(a) => self.atoms.insert(*a),
            EventKind::Del(a) => self.atoms.remove(*a),
            EventKind::Num(op, t, v) => {
                let cur = self.vals[*t as usize];
                let cur = if cur.is_nan() { None } else { Some(cur) };
                match op.apply(cur, *v) {
                    Some(x) => self.vals[*t as usize] = x,
                    None => return false,
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone, Default)]
pub struct Interner {
    pub atoms: Vec<GroundAtom>,
    atom_ix: HashMap<GroundAtom, u32>,
    pub pnes: Vec<Pne>,
    pne_ix: HashMap<Pne, u32>,
}

impl Interner {
    pub fn atom(&mut self, a: &GroundAtom) -> u32 {
        if let Some(&i) = self.atom_ix.get(a) {
            return i;
        }
        let i = self.atoms.len() as u32;
        self.atoms.push(a.clone());
        self.atom_ix.insert(a.clone(), i);
        i
    }

    pub fn pne(&mut self, p: &Pne) -> u32 {
        if let Some(&i) = self.pne_ix.get(p) {
            return i;
        }
        let i = self.pnes.len() as u32;
        self.pnes.push(p.clone());
        self.pne_ix.insert(p.clone(), i);
        i
    }

    pub fn atom_id(&self, a: &GroundAtom) -> Option<u32> {
        self.atom_ix.get(a).copied()
    }

    pub fn pne_id(&self, p: &Pne) -> Option<u32> {
        self.pne_ix.get(p).copied()
    }

    pub fn expr(&mut self, e: &GExpr) -> IExpr {
        match e {
            GExpr::Num(v) => IExpr::Num(*v),
            GExpr::Pne(p) => IExpr::Var(self.pne(p)),
            GExpr::Duration => IExpr::Duration,
            GExpr::TotalTime => IExpr::TotalTime,
            GExpr::Bin(op, a, b) => IExpr::Bin(*op, Box::new(self.expr(a)), Box::new(self.expr(b))),
            GExpr::Neg(a) => IExpr::Neg(Box::new(self.expr(a))),
        }
    }

    pub fn cond(&mut self, c: &GCond) -> ICond {
        match c {
            GCond::Lit { atom, positive } => ICond::Lit(self.atom(atom), *positive),
            GCond::Cmp { op, lhs, rhs } => ICond::Cmp(*op, self.expr(lhs), self.expr(rhs)),
        }
    }
}

/// A fully interned problem instance over a fixed set of ground actions.
#[derive(Debug, Clone)]
pub struct Task {
    pub names: Interner,
    pub actions: Vec<IAction>,
    pub index: HashMap<ActionRef, usize>,
    pub init: IState,
    /// Window events sorted by time, stable in window order.
    pub events: Vec<IEvent>,
    pub goal: Vec<ICond>,
    pub metric: (Direction, IExpr),
    pub epsilon: f64,
}

impl Task {
    pub fn build(model: &PlanningModel, ground: &[GroundAction]) -> Task {
        let mut n = Interner::default();
        for a in &model.problem.init {
            n.atom(a);
        }
        for (p, _) in &model.problem.init_values {
            n.pne(p);
        }
        let mut actions = Vec::with_capacity(ground.len());
        for g in ground {
            actions.push(intern_action(&mut n, g));
        }
        let empty = Binding::new();
        let goal: Vec<ICond> = model.problem.goal.iter().map(|c| n.cond(&ground_cond(c, &empty, None))).collect();
        let metric_expr = n.expr(&ground_expr(&model.problem.metric.expr, &empty, None));
        let mut events = Vec::new();
        for (wi, w) in model.problem.windows.iter().enumerate() {
            match &w.payload {
                WindowPayload::Atom { atom, positive } => {
                    let id = n.atom(atom);
                    if *positive {
                        events.push(event(w.lb, wi, EventKind::Add(id)));
                        if w.ub.is_finite() {
                            events.push(event(w.ub, wi, EventKind::Del(id)));
                        }
                    } else {
                        events.push(event(w.lb, wi, EventKind::Del(id)));
                    }
                }
                WindowPayload::Numeric { op, target, value } => {
                    let id = n.pne(target);
                    events.push(event(w.lb, wi, EventKind::Num(*op, id, *value)));
                }
            }
        }
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        let mut init = IState { atoms: BitSet::new(), vals: vec![f64::NAN; n.pnes.len()] };
        for a in &model.problem.init {
            init.atoms.insert(n.atom(a));
        }
        for (p, v) in &model.problem.init_values {
            init.vals[n.pne(p) as usize] = *v;
        }
        let index = actions.iter().enumerate().map(|(i, a)| (a.aref.clone(), i)).collect();
        Task {
            names: n,
            actions,
            index,
            init,
            events,
            goal,
            metric: (model.problem.metric.direction, metric_expr),
            epsilon: model.epsilon,
        }
    }

    pub fn to_state(&self, s: &IState, time: f64) -> State {
        let atoms: BTreeSet<GroundAtom> = s.atoms.iter().map(|i| self.names.atoms[i as usize].clone()).collect();
        let values: BTreeMap<Pne, f64> = s
            .vals
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_nan())
            .map(|(i, v)| (self.names.pnes[i].clone(), *v))
            .collect();
        State { time, atoms, values }
    }

    pub fn describe(&self, c: &ICond) -> String {
        match c {
            ICond::Lit(a, true) => self.names.atoms[*a as usize].to_string(),
            ICond::Lit(a, false) => format!("(not {})", self.names.atoms[*a as usize]),
            ICond::Cmp(op, l, r) => format!("({} {} {})", op.symbol(), self.expr_str(l), self.expr_str(r)),
        }
    }

    pub fn expr_str(&self, e: &IExpr) -> String {
        match e {
            IExpr::Num(v) => crate::pddl::fmt_num(*v),
            IExpr::Var(i) => self.names.pnes[*i as usize].to_string(),
            IExpr::Duration => "?duration".into(),
            IExpr::TotalTime => "total-time".into(),
            IExpr::Bin(op, a, b) => format!("({} {} {})", op.symbol(), self.expr_str(a), self.expr_str(b)),
            IExpr::Neg(a) => format!("(- {})", self.expr_str(a)),
        }
    }

    /// Checks the duration constraints of an action in state `s`.
    pub fn duration_ok(&self, a: &IAction, s: &IState, d: f64) -> bool {
        a.dur.iter().all(|(op, e)| match e.eval(&s.vals, Some(d), None) {
            Some(v) => op.holds(d, v),
            None => false,
        })
    }

    /// Chooses a duration in state `s`: the `=` value, else the lower bound,
    /// else the upper bound.
    pub fn pick_duration(&self, a: &IAction, s: &IState) -> Option<f64> {
        let mut lower = None;
        let mut upper = None;
        for (op, e) in &a.dur {
            let v = e.eval(&s.vals, None, None)?;
            match op {
                CmpOp::Eq => return Some(v),
                CmpOp::Ge | CmpOp::Gt => lower = Some(lower.map_or(v, |l: f64| l.max(v))),
                CmpOp::Le | CmpOp::Lt => upper = Some(upper.map_or(v, |u: f64| u.min(v))),
            }
        }
        let d = match (lower, upper) {
            (Some(l), _) => l.max(self.epsilon),
            (None, Some(u)) => u,
            (None, None) => return None,
        };
        if self.duration_ok(a, s, d) {
            Some(d)
        } else {
            None
        }
    }
}

fn event(time: f64, window: usize, kind: EventKind) -> IEvent {
    let mut fp = Footprint::default();
    match &kind {
        EventKind::Add(a) => fp.add.push(*a),
        EventKind::Del(a) => fp.del.push(*a),
        EventKind::Num(_, t, _) => fp.writes.push(*t),
    }
    IEvent { time, window, kind, fp }
}

fn intern_action(n: &mut Interner, g: &GroundAction) -> IAction {
    let mut start = Side::default();
    let mut end = Side::default();
    let mut over = Vec::new();
    for (w, c) in &g.conditions {
        let ic = n.cond(c);
        match w {
            When::Start => start.pre.push(ic),
            When::OverAll => over.push(ic),
            When::End => end.pre.push(ic),
        }
    }
    for (w, e) in &g.effects {
        let side = if *w == When::Start { &mut start } else { &mut end };
        match e {
            GEffect::Add(a) => side.add.push(n.atom(a)),
            GEffect::Del(a) => side.del.push(n.atom(a)),
            GEffect::Num { op, target, value } => {
                let target = n.pne(target);
                let value = n.expr(value);
                side.num.push(INum { op: *op, target, value });
            }
        }
    }
    let dur: Vec<(CmpOp, IExpr)> = g.duration.iter().map(|(op, e)| (*op, n.expr(e))).collect();
    let mut dur_reads = Vec::new();
    for (_, e) in &dur {
        e.vars(&mut dur_reads);
    }
    let fixed_duration = dur.iter().find(|(op, _)| *op == CmpOp::Eq).and_then(|(_, e)| match e {
        IExpr::Num(v) => Some(*v),
        _ => None,
    });
    let fp_start = Footprint::from_side(&start, &dur_reads);
    let fp_end = Footprint::from_side(&end, &[]);
    IAction { aref: g.aref(), dur, start, over, end, fp_start, fp_end, fixed_duration }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fp(add: &[u32], del: &[u32], pos: &[u32]) -> Footprint {
        Footprint { add: add.to_vec(), del: del.to_vec(), pos: pos.to_vec(), ..Default::default() }
    }

    #[test]
    fn interference_is_symmetric_on_examples() {
        let a = fp(&[1], &[], &[]);
        let b = fp(&[], &[1], &[]);
        let c = fp(&[], &[], &[1]);
        let d = fp(&[2], &[], &[3]);
        assert!(a.interferes(&b) && b.interferes(&a));
        assert!(b.interferes(&c) && c.interferes(&b));
        assert!(!a.interferes(&c));
        assert!(!a.interferes(&d));
    }

    #[test]
    fn eval_handles_undefined_and_division() {
        let e = IExpr::Bin(BinOp::Div, Box::new(IExpr::Var(0)), Box::new(IExpr::Num(0.0)));
        assert_eq!(e.eval(&[1.0], None, None), None);
        assert_eq!(IExpr::Var(0).eval(&[f64::NAN], None, None), None);
        let f = IExpr::Bin(BinOp::Mul, Box::new(IExpr::Var(0)), Box::new(IExpr::Duration));
        assert_eq!(f.eval(&[2.0], Some(3.0), None), Some(6.0));
    }

    #[test]
    fn state_hash_treats_undefined_consistently() {
        use std::collections::HashSet;
        let s1 = IState { atoms: BitSet::new(), vals: vec![f64::NAN, 1.0] };
        let s2 = s1.clone();
        let mut set = HashSet::new();
        set.insert(s1);
        assert!(set.contains(&s2));
    }
}
