//! Instantiation of operators and predicates over the problem's objects.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::model::*;
use crate::name::Name;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GroundError {
    #[error("unknown operator `{0}`")]
    UnknownOperator(Name),
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(Name),
    #[error("unknown object `{0}`")]
    UnknownObject(Name),
    #[error("`{what}` expects {expected} arguments, got {got}")]
    Arity { what: Name, expected: usize, got: usize },
    #[error("object `{object}` is not of type `{expected}` (argument {index} of `{what}`)")]
    Type { what: Name, index: usize, object: Name, expected: Name },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GExpr {
    Num(f64),
    Pne(Pne),
    Duration,
    TotalTime,
    Bin(BinOp, Box<GExpr>, Box<GExpr>),
    Neg(Box<GExpr>),
}

impl GExpr {
    pub fn pnes(&self, out: &mut Vec<Pne>) {
        match self {
            GExpr::Pne(p) => out.push(p.clone()),
            GExpr::Bin(_, a, b) => {
                a.pnes(out);
                b.pnes(out);
            }
            GExpr::Neg(a) => a.pnes(out),
            _ => {}
        }
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            GExpr::Num(v) => Some(*v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GCond {
    Lit { atom: GroundAtom, positive: bool },
    Cmp { op: CmpOp, lhs: GExpr, rhs: GExpr },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GEffect {
    Add(GroundAtom),
    Del(GroundAtom),
    Num { op: AssignOp, target: Pne, value: GExpr },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundAction {
    pub op: Name,
    pub args: Vec<Name>,
    pub duration: Vec<(CmpOp, GExpr)>,
    pub conditions: Vec<(When, GCond)>,
    pub effects: Vec<(When, GEffect)>,
}

impl GroundAction {
    pub fn aref(&self) -> ActionRef {
        ActionRef { op: self.op.clone(), args: self.args.clone() }
    }

    /// Duration fixed by the constraints when it does not depend on the state.
    pub fn fixed_duration(&self) -> Option<f64> {
        self.duration.iter().find(|(op, _)| *op == CmpOp::Eq).and_then(|(_, e)| e.as_const())
    }
}

/// Which symbols can change and what the static functions evaluate to.
#[derive(Debug, Clone)]
pub struct StaticInfo {
    pub fluent_preds: HashSet<Name>,
    pub fluent_funcs: HashSet<Name>,
    pub static_values: HashMap<Pne, f64>,
    pub init: HashSet<GroundAtom>,
}

impl StaticInfo {
    pub fn new(model: &PlanningModel) -> Self {
        let (fluent_preds, fluent_funcs) = fluent_symbols(model);
        let static_values = model
            .problem
            .init_values
            .iter()
            .filter(|(p, _)| !fluent_funcs.contains(&p.func))
            .cloned()
            .collect();
        StaticInfo { fluent_preds, fluent_funcs, static_values, init: model.problem.init.iter().cloned().collect() }
    }

    pub fn is_static_pred(&self, p: &Name) -> bool {
        !self.fluent_preds.contains(p)
    }
}

fn fold(op: BinOp, a: GExpr, b: GExpr) -> GExpr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => {
            let v = match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div if y != 0.0 => x / y,
                BinOp::Div => return GExpr::Bin(op, Box::new(a), Box::new(b)),
            };
            GExpr::Num(v)
        }
        _ => GExpr::Bin(op, Box::new(a), Box::new(b)),
    }
}

pub(crate) fn ground_expr(e: &NumExpr, b: &Binding, st: Option<&StaticInfo>) -> GExpr {
    match e {
        NumExpr::Num(v) => GExpr::Num(*v),
        NumExpr::Fluent(f) => {
            let p = bind_fterm(f, b).expect("bound term");
            if let Some(st) = st {
                if !st.fluent_funcs.contains(&p.func) {
                    if let Some(v) = st.static_values.get(&p) {
                        return GExpr::Num(*v);
                    }
                }
            }
            GExpr::Pne(p)
        }
        NumExpr::Duration => GExpr::Duration,
        NumExpr::TotalTime => GExpr::TotalTime,
        NumExpr::Bin(op, x, y) => fold(*op, ground_expr(x, b, st), ground_expr(y, b, st)),
        NumExpr::Neg(x) => match ground_expr(x, b, st) {
            GExpr::Num(v) => GExpr::Num(-v),
            g => GExpr::Neg(Box::new(g)),
        },
    }
}

pub(crate) fn ground_cond(c: &Cond, b: &Binding, st: Option<&StaticInfo>) -> GCond {
    match c {
        Cond::Lit { atom, positive } => GCond::Lit { atom: bind_atom(atom, b).expect("bound atom"), positive: *positive },
        Cond::Cmp { op, lhs, rhs } => GCond::Cmp { op: *op, lhs: ground_expr(lhs, b, st), rhs: ground_expr(rhs, b, st) },
    }
}

fn check_args(what: &Name, params: &[Typed], args: &[Name], model: &PlanningModel) -> Result<(), GroundError> {
    if params.len() != args.len() {
        return Err(GroundError::Arity { what: what.clone(), expected: params.len(), got: args.len() });
    }
    for (i, (a, p)) in args.iter().zip(params).enumerate() {
        if model.object_type(a).is_none() {
            return Err(GroundError::UnknownObject(a.clone()));
        }
        if !model.is_object_of_type(a, &p.ty) {
            return Err(GroundError::Type { what: what.clone(), index: i, object: a.clone(), expected: p.ty.clone() });
        }
    }
    Ok(())
}

/// Builds a typed ground atom.
pub fn ground_atom(pred: &Name, args: &[Name], model: &PlanningModel) -> Result<GroundAtom, GroundError> {
    let decl = model.domain.predicate(pred).ok_or_else(|| GroundError::UnknownPredicate(pred.clone()))?;
    check_args(pred, &decl.params, args, model)?;
    Ok(GroundAtom { pred: pred.clone(), args: args.to_vec() })
}

fn instantiate(op: &Operator, args: &[Name], st: Option<&StaticInfo>) -> GroundAction {
    let b: Binding = op.params.iter().map(|p| p.name.clone()).zip(args.iter().cloned()).collect();
    GroundAction {
        op: op.name.clone(),
        args: args.to_vec(),
        duration: op.duration.iter().map(|d| (d.op, ground_expr(&d.expr, &b, st))).collect(),
        conditions: op.conditions.iter().map(|c| (c.when, ground_cond(&c.cond, &b, st))).collect(),
        effects: op
            .effects
            .iter()
            .map(|e| {
                let g = match &e.effect {
                    Effect::Add(a) => GEffect::Add(bind_atom(a, &b).expect("bound atom")),
                    Effect::Del(a) => GEffect::Del(bind_atom(a, &b).expect("bound atom")),
                    Effect::Num { op, target, value } => GEffect::Num {
                        op: *op,
                        target: bind_fterm(target, &b).expect("bound term"),
                        value: ground_expr(value, &b, st),
                    },
                };
                (e.when, g)
            })
            .collect(),
    }
}

/// Substitutes a typed argument tuple into an operator. Static numeric terms
/// are replaced by their initial values.
pub fn ground_operator(op: &Operator, args: &[Name], model: &PlanningModel) -> Result<GroundAction, GroundError> {
    check_args(&op.name, &op.params, args, model)?;
    let st = StaticInfo::new(model);
    Ok(instantiate(op, args, Some(&st)))
}

/// Grounds an action identity against the model.
pub fn ground_action(a: &ActionRef, model: &PlanningModel) -> Result<GroundAction, GroundError> {
    let op = model.domain.operator(&a.op).ok_or_else(|| GroundError::UnknownOperator(a.op.clone()))?;
    ground_operator(op, &a.args, model)
}

pub(crate) fn ground_action_with(a: &ActionRef, model: &PlanningModel, st: &StaticInfo) -> Result<GroundAction, GroundError> {
    let op = model.domain.operator(&a.op).ok_or_else(|| GroundError::UnknownOperator(a.op.clone()))?;
    check_args(&op.name, &op.params, &a.args, model)?;
    Ok(instantiate(op, &a.args, Some(st)))
}

#[derive(Debug, Clone)]
pub struct GroundingTable {
    pub atoms: Vec<GroundAtom>,
    pub pnes: Vec<Pne>,
    pub actions: Vec<GroundAction>,
    pub index: HashMap<ActionRef, usize>,
}

impl GroundingTable {
    pub fn get(&self, a: &ActionRef) -> Option<&GroundAction> {
        self.index.get(a).map(|&i| &self.actions[i])
    }
}

fn typed_product(params: &[Typed], model: &PlanningModel) -> Vec<Vec<Name>> {
    let domains: Vec<Vec<Name>> = params.iter().map(|p| model.objects_of_type(&p.ty)).collect();
    let mut out = vec![Vec::new()];
    for d in &domains {
        let mut next = Vec::with_capacity(out.len() * d.len());
        for prefix in &out {
            for o in d {
                let mut v = prefix.clone();
                v.push(o.clone());
                next.push(v);
            }
        }
        out = next;
    }
    out
}

/// True if a static condition on fully bound arguments rules the grounding out.
fn static_violation(op: &Operator, b: &Binding, st: &StaticInfo) -> bool {
    for c in &op.conditions {
        match &c.cond {
            Cond::Lit { atom, positive } if st.is_static_pred(&atom.pred) => {
                if let Some(g) = bind_atom(atom, b) {
                    if st.init.contains(&g) != *positive {
                        return true;
                    }
                }
            }
            Cond::Cmp { op: cmp, lhs, rhs } => {
                let mut fl = Vec::new();
                lhs.fluents(&mut fl);
                rhs.fluents(&mut fl);
                let bound = fl.iter().all(|f| bind_fterm(f, b).is_some());
                if bound && !matches!(lhs, NumExpr::Duration) && !matches!(rhs, NumExpr::Duration) {
                    let (l, r) = (ground_expr(lhs, b, Some(st)), ground_expr(rhs, b, Some(st)));
                    if let (Some(l), Some(r)) = (l.as_const(), r.as_const()) {
                        if !cmp.holds(l, r) {
                            return true;
                        }
                    }
                }
            }
            _ => {}
        }
    }
    false
}

fn enumerate_pruned(op: &Operator, model: &PlanningModel, st: &StaticInfo, out: &mut Vec<Vec<Name>>) {
    let domains: Vec<Vec<Name>> = op.params.iter().map(|p| model.objects_of_type(&p.ty)).collect();
    let mut b = Binding::new();
    let mut cur = Vec::new();
    fn rec(
        i: usize,
        op: &Operator,
        domains: &[Vec<Name>],
        b: &mut Binding,
        cur: &mut Vec<Name>,
        st: &StaticInfo,
        out: &mut Vec<Vec<Name>>,
    ) {
        if static_violation(op, b, st) {
            return;
        }
        if i == domains.len() {
            out.push(cur.clone());
            return;
        }
        for o in &domains[i] {
            b.insert(op.params[i].name.clone(), o.clone());
            cur.push(o.clone());
            rec(i + 1, op, domains, b, cur, st, out);
            cur.pop();
            b.remove(&op.params[i].name);
        }
    }
    rec(0, op, &domains, &mut b, &mut cur, st, out);
}

/// Enumerates every typed ground action, atom and PNE. With `prune_static`,
/// groundings whose static conditions are false in the initial state are
/// dropped. Actions are ordered by operator name, then argument tuple.
pub fn ground_all(model: &PlanningModel, prune_static: bool) -> GroundingTable {
    let st = StaticInfo::new(model);
    let mut atoms = Vec::new();
    for p in &model.domain.predicates {
        for args in typed_product(&p.params, model) {
            atoms.push(GroundAtom { pred: p.name.clone(), args });
        }
    }
    let mut pnes = Vec::new();
    for f in &model.domain.functions {
        for args in typed_product(&f.params, model) {
            pnes.push(Pne { func: f.name.clone(), args });
        }
    }
    let mut ops: Vec<&Operator> = model.domain.operators.iter().collect();
    ops.sort_by(|a, b| a.name.cmp(&b.name));
    let mut actions = Vec::new();
    for op in ops {
        let tuples = if prune_static {
            let mut v = Vec::new();
            enumerate_pruned(op, model, &st, &mut v);
            v
        } else {
            typed_product(&op.params, model)
        };
        for args in tuples {
            actions.push(instantiate(op, &args, Some(&st)));
        }
    }
    let index = actions.iter().enumerate().map(|(i, a)| (a.aref(), i)).collect();
    GroundingTable { atoms, pnes, actions, index }
}
