//! Model restriction: compiling formal questions into hypothetical models.
//!
//! Every compiled operator remembers its origin: the original operator it was
//! derived from, how many leading parameters are the original ones, and
//! whether it is a pure bookkeeping action. Plans of a hypothetical model are
//! mapped back to the original vocabulary through these records.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::grounder::{ground_action, GCond, GEffect};
use crate::model::*;
use crate::name::Name;
use crate::pddl::format_time;
use crate::validator::{execute_prefix, simulate, FailureKind, PrefixError};
use crate::TIME_TOL;

/// Duration of the synthesized goal-check actions of a justified addition.
pub const CHECK_DURATION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeDirection {
    Before,
    After,
}

/// The seven contrastive question types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FormalQuestion {
    /// FQ1: why is `action` not in the plan?
    AddAction {
        action: ActionRef,
        #[serde(default)]
        justified: bool,
    },
    /// FQ2: why is `action` in the plan?
    RemoveAction { action: ActionRef },
    /// FQ3: why `plan[index]` rather than `replacement` in that state?
    ReplaceInState {
        replaced: usize,
        replacement: ActionRef,
        /// The plan the index refers to, in the vocabulary of the model the
        /// question is asked of.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        plan: Option<Plan>,
    },
    /// FQ4: why not `a` before `b` for each edge?
    Reorder { edges: Vec<(ActionRef, ActionRef)> },
    /// FQ5: why is `action` not confined to `[lb, ub]`?
    ForbidOutsideWindow {
        action: ActionRef,
        lb: f64,
        #[serde(with = "crate::model::inf_as_null")]
        ub: f64,
    },
    /// FQ6: why is `action` not used within `[lb, ub]`?
    RequireWithinWindow {
        action: ActionRef,
        lb: f64,
        #[serde(with = "crate::model::inf_as_null")]
        ub: f64,
    },
    /// FQ7: why not do `action` at least `offset` before/after `t`?
    DelayAdvance { action: ActionRef, t: f64, offset: f64, direction: TimeDirection },
}

impl FormalQuestion {
    pub fn kind(&self) -> &'static str {
        match self {
            FormalQuestion::AddAction { .. } => "fq1",
            FormalQuestion::RemoveAction { .. } => "fq2",
            FormalQuestion::ReplaceInState { .. } => "fq3",
            FormalQuestion::Reorder { .. } => "fq4",
            FormalQuestion::ForbidOutsideWindow { .. } => "fq5",
            FormalQuestion::RequireWithinWindow { .. } => "fq6",
            FormalQuestion::DelayAdvance { .. } => "fq7",
        }
    }

    /// Every action the question names, in original vocabulary.
    pub fn actions(&self) -> Vec<&ActionRef> {
        match self {
            FormalQuestion::AddAction { action, .. }
            | FormalQuestion::RemoveAction { action }
            | FormalQuestion::ForbidOutsideWindow { action, .. }
            | FormalQuestion::RequireWithinWindow { action, .. }
            | FormalQuestion::DelayAdvance { action, .. } => vec![action],
            FormalQuestion::ReplaceInState { replacement, .. } => vec![replacement],
            FormalQuestion::Reorder { edges } => edges.iter().flat_map(|(a, b)| [a, b]).collect(),
        }
    }

    /// The window `[0, tReal]` or `[tReal, inf)` of a delay/advance question.
    pub fn delay_window(t: f64, offset: f64, direction: TimeDirection) -> (f64, f64) {
        match direction {
            TimeDirection::Before => (0.0, t - offset),
            TimeDirection::After => (t + offset, f64::INFINITY),
        }
    }
}

impl fmt::Display for FormalQuestion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ub = |u: f64| if u.is_finite() { format_time(u) } else { "inf".into() };
        match self {
            FormalQuestion::AddAction { action, justified } => {
                write!(f, "add {action}{}", if *justified { " (justified)" } else { "" })
            }
            FormalQuestion::RemoveAction { action } => write!(f, "remove {action}"),
            FormalQuestion::ReplaceInState { replaced, replacement, .. } => {
                write!(f, "replace action #{replaced} with {replacement}")
            }
            FormalQuestion::Reorder { edges } => {
                let e: Vec<String> = edges.iter().map(|(a, b)| format!("{a} < {b}")).collect();
                write!(f, "reorder {}", e.join(", "))
            }
            FormalQuestion::ForbidOutsideWindow { action, lb, ub: u } => {
                write!(f, "only {action} within [{}, {}]", format_time(*lb), ub(*u))
            }
            FormalQuestion::RequireWithinWindow { action, lb, ub: u } => {
                write!(f, "require {action} within [{}, {}]", format_time(*lb), ub(*u))
            }
            FormalQuestion::DelayAdvance { action, t, offset, direction } => {
                let d = match direction {
                    TimeDirection::Before => "before",
                    TimeDirection::After => "after",
                };
                write!(f, "{action} at least {} {d} {}", format_time(*offset), format_time(*t))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpOrigin {
    pub root: Name,
    /// Leading parameters that are the root operator's parameters.
    pub keep: usize,
    /// Bookkeeping action dropped by normalization.
    pub check: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Synthesized {
    pub predicates: Vec<Name>,
    pub operators: Vec<Name>,
}

/// Where a replace-in-state question cut the plan, in absolute time and
/// original vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutRecord {
    pub dispatch: f64,
    pub replaced: ActionRef,
    pub replacement: ActionRef,
    /// Operator actually dispatched in the compiled model.
    pub replacement_op: Name,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Restriction {
    pub question: FormalQuestion,
    pub symbols: Synthesized,
    pub init_additions: Vec<GroundAtom>,
    pub goal_additions: Vec<GroundAtom>,
    pub window_additions: Vec<TimeWindow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cut: Option<CutRecord>,
    /// Set when the compilation proved the restricted model has no plan.
    #[serde(default)]
    pub unsolvable: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Restriction {
    /// Checks a normalized, absolute-time plan against this restriction.
    pub fn satisfied_by(&self, plan: &Plan, original: &PlanningModel) -> bool {
        match (&self.question, &self.cut) {
            (FormalQuestion::ReplaceInState { .. }, Some(c)) => cut_satisfied(c, plan),
            (q, _) => check_constraint(q, plan, original),
        }
    }
}

fn cut_satisfied(c: &CutRecord, plan: &Plan) -> bool {
    let at = |a: &ActionRef| plan.actions.iter().any(|x| &x.action == a && (x.dispatch - c.dispatch).abs() <= TIME_TOL);
    at(&c.replacement) && (c.replaced == c.replacement || !at(&c.replaced))
}

/// A hypothetical model together with how it was derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HModel {
    pub model: PlanningModel,
    pub provenance: Vec<Restriction>,
    pub origins: BTreeMap<Name, OpOrigin>,
    /// Operators of the original domain, the vocabulary questions use.
    pub roots: Vec<Operator>,
    /// Actions fixed by replace-in-state questions, normalized, absolute time.
    #[serde(default)]
    pub fixed_prefix: Plan,
    /// Absolute time corresponding to time 0 of `model`.
    #[serde(default)]
    pub time_offset: f64,
}

impl HModel {
    pub fn root(model: &PlanningModel) -> HModel {
        let origins = model
            .domain
            .operators
            .iter()
            .map(|o| (o.name.clone(), OpOrigin { root: o.name.clone(), keep: o.params.len(), check: false }))
            .collect();
        HModel {
            model: model.clone(),
            provenance: Vec::new(),
            origins,
            roots: model.domain.operators.clone(),
            fixed_prefix: Plan::default(),
            time_offset: 0.0,
        }
    }

    pub fn is_unsolvable(&self) -> bool {
        self.provenance.iter().any(|r| r.unsolvable)
    }

    /// Maps one action of this model to the original vocabulary; `None` for
    /// bookkeeping actions.
    pub fn normalize_action(&self, a: &ActionRef) -> Result<Option<ActionRef>, CompileError> {
        let o = self.origins.get(&a.op).ok_or_else(|| CompileError::Provenance(a.op.to_string()))?;
        if o.check {
            return Ok(None);
        }
        if a.args.len() < o.keep {
            return Err(CompileError::Provenance(a.to_string()));
        }
        Ok(Some(ActionRef { op: o.root.clone(), args: a.args[..o.keep].to_vec() }))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompileError {
    #[error("ill-typed question: {0}")]
    IllTyped(String),
    #[error("`{0}` is a synthesized operator; questions use the original vocabulary")]
    Vocabulary(String),
    #[error("window violates lb < ub ({lb} >= {ub})")]
    Window { lb: f64, ub: f64 },
    #[error("invalid question: {0}")]
    Invalid(String),
    #[error("reorder edges do not form a DAG")]
    Cycle,
    #[error("replace-in-state needs the plan the index refers to")]
    NeedsPlan,
    #[error(transparent)]
    Prefix(#[from] PrefixError),
    #[error("unknown synthesized operator `{0}`: provenance mismatch")]
    Provenance(String),
    #[error("question {index} of the chain failed: {source}")]
    Chain { index: usize, source: Box<CompileError> },
}

/// Maps a plan of `h.model` back to the original vocabulary and absolute time,
/// prepending any fixed prefix.
pub fn normalize_plan(hplan: &Plan, h: &HModel) -> Result<Plan, CompileError> {
    let mut actions = h.fixed_prefix.actions.clone();
    for a in &hplan.actions {
        if let Some(n) = h.normalize_action(&a.action)? {
            actions.push(TimedAction { action: n, dispatch: a.dispatch + h.time_offset, duration: a.duration });
        }
    }
    Ok(Plan::new(actions))
}

fn inside(a: &TimedAction, lb: f64, ub: f64) -> bool {
    lb - TIME_TOL <= a.dispatch && a.end() <= ub + TIME_TOL
}

/// Direct check of a question's constraint on a normalized plan.
pub fn check_constraint(q: &FormalQuestion, plan: &Plan, _original: &PlanningModel) -> bool {
    fn occ<'p>(plan: &'p Plan, x: &'p ActionRef) -> impl Iterator<Item = &'p TimedAction> + 'p {
        plan.actions.iter().filter(move |a| &a.action == x)
    }
    match q {
        FormalQuestion::AddAction { action, .. } => plan.contains(action),
        FormalQuestion::RemoveAction { action } => !plan.contains(action),
        FormalQuestion::ReplaceInState { replaced, replacement, plan: Some(p) } => match p.actions.get(*replaced) {
            Some(cut) => cut_satisfied(
                &CutRecord {
                    dispatch: cut.dispatch,
                    replaced: cut.action.clone(),
                    replacement: replacement.clone(),
                    replacement_op: replacement.op.clone(),
                },
                plan,
            ),
            None => false,
        },
        FormalQuestion::ReplaceInState { plan: None, .. } => false,
        FormalQuestion::Reorder { edges } => edges.iter().all(|(a, b)| {
            occ(plan, b).all(|bo| occ(plan, a).any(|ao| ao.end() <= bo.dispatch + TIME_TOL))
        }),
        FormalQuestion::ForbidOutsideWindow { action, lb, ub } => occ(plan, action).all(|a| inside(a, *lb, *ub)),
        FormalQuestion::RequireWithinWindow { action, lb, ub } => occ(plan, action).any(|a| inside(a, *lb, *ub)),
        FormalQuestion::DelayAdvance { action, t, offset, direction } => {
            let (lb, ub) = FormalQuestion::delay_window(*t, *offset, *direction);
            plan.contains(action) && occ(plan, action).all(|a| inside(a, lb, ub))
        }
    }
}

/// Compiles a question against an unrestricted model.
pub fn compile(model: &PlanningModel, q: &FormalQuestion) -> Result<HModel, CompileError> {
    restrict(&HModel::root(model), q)
}

/// Left fold of [`restrict`] over the questions.
pub fn compose(model: &PlanningModel, qs: &[FormalQuestion]) -> Result<HModel, CompileError> {
    let mut h = HModel::root(model);
    for (index, q) in qs.iter().enumerate() {
        h = restrict(&h, q).map_err(|e| CompileError::Chain { index, source: Box::new(e) })?;
    }
    Ok(h)
}

/// Applies one more restriction to a hypothetical model.
pub fn restrict(h: &HModel, q: &FormalQuestion) -> Result<HModel, CompileError> {
    let mut c = Ctx::new(h, q);
    c.advise();
    match q {
        FormalQuestion::AddAction { action, justified: false } => c.add(action)?,
        FormalQuestion::AddAction { action, justified: true } => c.add_justified(action)?,
        FormalQuestion::RemoveAction { action } => c.remove(action)?,
        FormalQuestion::ReplaceInState { replaced, replacement, plan } => {
            c.replace(*replaced, replacement, plan.as_ref().ok_or(CompileError::NeedsPlan)?)?
        }
        FormalQuestion::Reorder { edges } => c.reorder(edges)?,
        FormalQuestion::ForbidOutsideWindow { action, lb, ub } => {
            check_window(*lb, *ub)?;
            c.forbid_outside(action, *lb, *ub, false)?
        }
        FormalQuestion::RequireWithinWindow { action, lb, ub } => {
            check_window(*lb, *ub)?;
            c.require_within(action, *lb, *ub)?
        }
        FormalQuestion::DelayAdvance { action, t, offset, direction } => {
            if !(*offset > 0.0) || !t.is_finite() || *t < 0.0 {
                return Err(CompileError::Invalid("delay/advance needs t >= 0 and offset > 0".into()));
            }
            let (lb, ub) = FormalQuestion::delay_window(*t, *offset, *direction);
            if ub <= 0.0 {
                return Err(CompileError::Invalid(format!(
                    "advancing by {} from {} leaves no time before the deadline",
                    format_time(*offset),
                    format_time(*t)
                )));
            }
            c.forbid_outside(action, lb, ub, true)?
        }
    }
    Ok(c.finish())
}

fn check_window(lb: f64, ub: f64) -> Result<(), CompileError> {
    if !(lb < ub) || lb.is_nan() {
        return Err(CompileError::Window { lb, ub });
    }
    if lb < 0.0 {
        return Err(CompileError::Invalid("window lower bound is negative".into()));
    }
    Ok(())
}

fn round9(t: f64) -> f64 {
    (t * 1e9).round() / 1e9
}

fn var_terms(params: &[Typed]) -> Vec<Term> {
    params.iter().map(|p| Term::Var(p.name.clone())).collect()
}

fn obj_terms(args: &[Name]) -> Vec<Term> {
    args.iter().map(|a| Term::Obj(a.clone())).collect()
}

fn lit(pred: &Name, args: Vec<Term>, positive: bool) -> Cond {
    Cond::Lit { atom: Atom { pred: pred.clone(), args }, positive }
}

fn decl_params(params: &[Typed]) -> Vec<Typed> {
    params.iter().enumerate().map(|(i, p)| Typed::new(format!("x{}", i + 1).as_str(), p.ty.clone())).collect()
}

fn key(a: &ActionRef) -> String {
    let mut s = a.op.as_str().to_string();
    for x in &a.args {
        s.push('_');
        s.push_str(x.as_str());
    }
    s
}

struct Ctx<'a> {
    h: &'a HModel,
    q: &'a FormalQuestion,
    m: PlanningModel,
    origins: BTreeMap<Name, OpOrigin>,
    r: Restriction,
    fixed_prefix: Plan,
    time_offset: f64,
    not_done: HashMap<Name, Name>,
}

impl<'a> Ctx<'a> {
    fn new(h: &'a HModel, q: &'a FormalQuestion) -> Self {
        Ctx {
            h,
            q,
            m: h.model.clone(),
            origins: h.origins.clone(),
            r: Restriction {
                question: q.clone(),
                symbols: Synthesized::default(),
                init_additions: vec![],
                goal_additions: vec![],
                window_additions: vec![],
                cut: None,
                unsolvable: false,
                notes: vec![],
            },
            fixed_prefix: h.fixed_prefix.clone(),
            time_offset: h.time_offset,
            not_done: HashMap::new(),
        }
    }

    fn finish(self) -> HModel {
        let mut provenance = self.h.provenance.clone();
        provenance.push(self.r);
        HModel {
            model: self.m,
            provenance,
            origins: self.origins,
            roots: self.h.roots.clone(),
            fixed_prefix: self.fixed_prefix,
            time_offset: self.time_offset,
        }
    }

    fn advise(&mut self) {
        if matches!(self.q, FormalQuestion::RemoveAction { .. }) {
            return;
        }
        for a in self.q.actions() {
            for (i, prev) in self.h.provenance.iter().enumerate() {
                if let FormalQuestion::RemoveAction { action } = &prev.question {
                    if action == a {
                        self.r.notes.push(format!("{a} was removed by restriction {}", i + 1));
                    }
                }
            }
        }
    }

    fn fresh(&self, base: &str, op_namespace: bool) -> Name {
        let taken = |n: &Name| {
            if op_namespace {
                self.m.domain.operator(n).is_some()
            } else {
                self.m.domain.predicate(n).is_some() || self.m.domain.function(n).is_some()
            }
        };
        let b = Name::new(base);
        if !taken(&b) {
            return b;
        }
        (1..).map(|i| Name::new(&format!("{base}_{i}"))).find(|n| !taken(n)).expect("unbounded suffixes")
    }

    fn new_pred(&mut self, base: &str, params: &[Typed]) -> Name {
        let name = self.fresh(base, false);
        self.m.domain.predicates.push(PredicateDecl { name: name.clone(), params: decl_params(params) });
        self.r.symbols.predicates.push(name.clone());
        name
    }

    fn push_op(&mut self, op: Operator, origin: OpOrigin) {
        self.r.symbols.operators.push(op.name.clone());
        self.origins.insert(op.name.clone(), origin);
        self.m.domain.operators.push(op);
    }

    fn require(&mut self, r: &str) {
        if !self.m.domain.requirements.iter().any(|x| x == r) {
            self.m.domain.requirements.push(r.to_string());
        }
    }

    fn root_op(&self, a: &ActionRef) -> Result<&'a Operator, CompileError> {
        let Some(op) = self.h.roots.iter().find(|o| o.name == a.op) else {
            if self.m.domain.operator(&a.op).is_some() || self.origins.contains_key(&a.op) {
                return Err(CompileError::Vocabulary(a.op.to_string()));
            }
            return Err(CompileError::IllTyped(format!("unknown operator `{}`", a.op)));
        };
        if op.params.len() != a.args.len() {
            return Err(CompileError::IllTyped(format!(
                "action `{}` expects {} arguments, got {}",
                a.op,
                op.params.len(),
                a.args.len()
            )));
        }
        for (x, p) in a.args.iter().zip(&op.params) {
            if self.m.object_type(x).is_none() {
                return Err(CompileError::IllTyped(format!("unknown object `{x}` in {a}")));
            }
            if !self.m.is_object_of_type(x, &p.ty) {
                return Err(CompileError::IllTyped(format!("object `{x}` is not of type `{}` in {a}", p.ty)));
            }
        }
        Ok(op)
    }

    /// Positions of current non-check operators derived from `root`.
    fn derived(&self, root: &Name) -> Vec<usize> {
        self.m
            .domain
            .operators
            .iter()
            .enumerate()
            .filter(|(_, o)| self.origins.get(&o.name).is_some_and(|g| &g.root == root && !g.check))
            .map(|(i, _)| i)
            .collect()
    }

    fn root_terms(&self, op: &Operator) -> Vec<Term> {
        let keep = self.origins[&op.name].keep;
        var_terms(&op.params[..keep])
    }

    fn init(&mut self, a: GroundAtom) {
        if !self.m.problem.init.contains(&a) {
            self.m.problem.init.push(a.clone());
        }
        self.r.init_additions.push(a);
    }

    fn goal(&mut self, a: GroundAtom) {
        self.m.problem.goal.push(Cond::Lit { atom: Atom { pred: a.pred.clone(), args: obj_terms(&a.args) }, positive: true });
        self.r.goal_additions.push(a);
    }

    /// Adds a window given in absolute time, shifted into this model's frame.
    fn window(&mut self, lb: f64, ub: f64, atom: GroundAtom) {
        let (lb, ub) = (round9((lb - self.time_offset).max(0.0)), if ub.is_finite() { round9(ub - self.time_offset) } else { ub });
        if ub <= 0.0 {
            return;
        }
        let w = TimeWindow::atom(lb, ub, atom);
        self.require(":timed-initial-literals");
        self.m.problem.windows.push(w.clone());
        self.r.window_additions.push(w);
    }

    fn unreachable(&mut self, why: String) {
        let p = self.new_pred("xaip_unreachable", &[]);
        self.goal(GroundAtom { pred: p, args: vec![] });
        self.r.unsolvable = true;
        self.r.notes.push(why);
    }

    fn prefix_occurrences(&self, a: &ActionRef) -> Vec<TimedAction> {
        self.fixed_prefix.actions.iter().filter(|x| &x.action == a).cloned().collect()
    }

    fn not_done_pred(&mut self, o: &Operator) -> Name {
        if let Some(n) = self.not_done.get(&o.name) {
            return n.clone();
        }
        let n = self.new_pred(&format!("not_done_{}", o.name), &o.params);
        self.not_done.insert(o.name.clone(), n.clone());
        n
    }

    fn add(&mut self, a: &ActionRef) -> Result<(), CompileError> {
        let o = self.root_op(a)?;
        let hd = self.new_pred(&format!("has_done_{}", o.name), &o.params);
        for i in self.derived(&o.name) {
            let terms = self.root_terms(&self.m.domain.operators[i]);
            self.m.domain.operators[i]
                .effects
                .push(TimedEffect { when: When::End, effect: Effect::Add(Atom { pred: hd.clone(), args: terms }) });
        }
        let g = GroundAtom { pred: hd, args: a.args.clone() };
        if !self.prefix_occurrences(a).is_empty() {
            self.init(g.clone());
        }
        self.goal(g);
        Ok(())
    }

    fn add_justified(&mut self, a: &ActionRef) -> Result<(), CompileError> {
        let o = self.root_op(a)?;
        let hd = self.new_pred(&format!("has_done_{}", o.name), &o.params);
        let cd = self.new_pred(&format!("can_do_{}", o.name), &o.params);
        self.init(GroundAtom { pred: cd.clone(), args: a.args.clone() });

        let current: Vec<Operator> = self
            .m
            .domain
            .operators
            .iter()
            .filter(|x| !self.origins[&x.name].check)
            .cloned()
            .collect();
        let mut added: BTreeSet<Name> = BTreeSet::new();
        for x in &current {
            for e in &x.effects {
                if let Effect::Add(at) = &e.effect {
                    added.insert(at.pred.clone());
                }
            }
        }
        let decls: Vec<PredicateDecl> =
            self.m.domain.predicates.iter().filter(|p| added.contains(&p.name)).cloned().collect();
        let mut prime: HashMap<Name, Name> = HashMap::new();
        for p in &decls {
            let n = self.new_pred(&format!("prime_{}", p.name), &p.params);
            prime.insert(p.name.clone(), n);
        }
        let goal_atoms: Vec<GroundAtom> = self
            .m
            .problem
            .goal
            .iter()
            .filter_map(|c| match c {
                Cond::Lit { atom, positive: true } if prime.contains_key(&atom.pred) => {
                    bind_atom(atom, &Binding::new())
                }
                _ => None,
            })
            .collect();
        let mut goal_prime: BTreeMap<Name, Name> = BTreeMap::new();
        for p in &decls {
            if goal_atoms.iter().any(|g| g.pred == p.name) {
                let n = self.new_pred(&format!("goal_prime_{}", p.name), &p.params);
                goal_prime.insert(p.name.clone(), n);
            }
        }
        for g in &goal_atoms {
            self.init(GroundAtom { pred: goal_prime[&g.pred].clone(), args: g.args.clone() });
        }
        let truep = self.new_pred("xaip_true", &[]);

        let primed_adds = |x: &Operator| -> Vec<TimedEffect> {
            x.effects
                .iter()
                .filter_map(|e| match &e.effect {
                    Effect::Add(at) => prime.get(&at.pred).map(|p| TimedEffect {
                        when: e.when,
                        effect: Effect::Add(Atom { pred: p.clone(), args: at.args.clone() }),
                    }),
                    _ => None,
                })
                .collect()
        };

        for i in self.derived(&o.name) {
            let d = self.m.domain.operators[i].clone();
            let terms = self.root_terms(&d);
            let mut v = d.clone();
            v.name = self.fresh(&format!("{}_a", d.name), true);
            v.conditions.push(TimedCond { when: When::Start, cond: lit(&cd, terms.clone(), true) });
            v.effects.push(TimedEffect { when: When::End, effect: Effect::Add(Atom { pred: hd.clone(), args: terms }) });
            v.effects.extend(primed_adds(&d));
            let origin = self.origins[&d.name].clone();
            self.push_op(v, origin);
        }

        for x in &current {
            for (k, (when, at)) in x.positive_atom_conditions().into_iter().enumerate() {
                let Some(pp) = prime.get(&at.pred) else { continue };
                let mut v = x.clone();
                v.name = self.fresh(&format!("conjunct_{}_{k}", x.name), true);
                v.conditions.push(TimedCond { when, cond: lit(pp, at.args.clone(), true) });
                v.effects.extend(primed_adds(x));
                let origin = self.origins[&x.name].clone();
                self.push_op(v, origin);
            }
        }

        for (p, gp) in &goal_prime {
            let decl = self.m.domain.predicate(p).expect("declared").clone();
            let params = decl_params(&decl.params);
            let vars = var_terms(&params);
            let name = self.fresh(&format!("check_conjunct_{p}"), true);
            let op = Operator {
                name: name.clone(),
                params,
                duration: vec![DurationConstraint { op: CmpOp::Eq, expr: NumExpr::Num(CHECK_DURATION) }],
                conditions: vec![
                    TimedCond { when: When::OverAll, cond: lit(&prime[p], vars.clone(), true) },
                    TimedCond { when: When::OverAll, cond: lit(gp, vars.clone(), true) },
                    TimedCond { when: When::OverAll, cond: lit(p, vars, true) },
                ],
                effects: vec![TimedEffect { when: When::End, effect: Effect::Add(Atom { pred: truep.clone(), args: vec![] }) }],
            };
            self.push_op(op, OpOrigin { root: name, keep: 0, check: true });
        }

        let names: BTreeSet<Name> = current.iter().map(|x| x.name.clone()).collect();
        for op in self.m.domain.operators.iter_mut().filter(|x| names.contains(&x.name)) {
            let dels: Vec<TimedEffect> = op
                .effects
                .iter()
                .filter_map(|e| match &e.effect {
                    Effect::Add(at) => goal_prime.get(&at.pred).map(|gp| TimedEffect {
                        when: When::End,
                        effect: Effect::Del(Atom { pred: gp.clone(), args: at.args.clone() }),
                    }),
                    _ => None,
                })
                .collect();
            op.effects.extend(dels);
        }

        self.goal(GroundAtom { pred: hd, args: a.args.clone() });
        self.goal(GroundAtom { pred: truep, args: vec![] });
        Ok(())
    }

    fn remove(&mut self, a: &ActionRef) -> Result<(), CompileError> {
        let o = self.root_op(a)?;
        let nd = self.not_done_pred(o);
        for i in self.derived(&o.name) {
            let terms = self.root_terms(&self.m.domain.operators[i]);
            self.m.domain.operators[i]
                .effects
                .push(TimedEffect { when: When::Start, effect: Effect::Del(Atom { pred: nd.clone(), args: terms }) });
        }
        let g = GroundAtom { pred: nd, args: a.args.clone() };
        self.init(g.clone());
        self.goal(g);
        if !self.prefix_occurrences(a).is_empty() {
            self.unreachable(format!("{a} already occurs in the fixed prefix"));
        }
        Ok(())
    }

    /// Shared by forbid-outside-window and delay/advance; the latter also
    /// requires the action to occur.
    fn forbid_outside(&mut self, a: &ActionRef, lb: f64, ub: f64, require: bool) -> Result<(), CompileError> {
        let o = self.root_op(a)?;
        let nd = self.not_done_pred(o);
        let cd = self.new_pred(&format!("can_do_{}", o.name), &o.params);
        let hd = if require { Some(self.new_pred(&format!("has_done_{}", o.name), &o.params)) } else { None };
        for i in self.derived(&o.name).into_iter().rev() {
            let d = self.m.domain.operators.remove(i);
            let origin = self.origins.remove(&d.name).expect("origin");
            let terms = var_terms(&d.params[..origin.keep]);
            let mut nota = d.clone();
            nota.name = self.fresh(&format!("{}_nota", d.name), true);
            nota.effects.push(TimedEffect { when: When::Start, effect: Effect::Del(Atom { pred: nd.clone(), args: terms.clone() }) });
            let mut v = d.clone();
            v.name = self.fresh(&format!("{}_a", d.name), true);
            if v.name == nota.name {
                v.name = Name::new(&format!("{}_1", v.name));
            }
            v.conditions.push(TimedCond { when: When::OverAll, cond: lit(&cd, terms.clone(), true) });
            if let Some(hd) = &hd {
                v.effects.push(TimedEffect { when: When::End, effect: Effect::Add(Atom { pred: hd.clone(), args: terms }) });
            }
            for (k, op) in [nota, v].into_iter().enumerate() {
                self.r.symbols.operators.push(op.name.clone());
                self.origins.insert(op.name.clone(), origin.clone());
                self.m.domain.operators.insert(i + k, op);
            }
        }
        let nda = GroundAtom { pred: nd, args: a.args.clone() };
        self.init(nda.clone());
        self.goal(nda);
        self.window(lb, ub, GroundAtom { pred: cd, args: a.args.clone() });
        let occ = self.prefix_occurrences(a);
        if occ.iter().any(|x| !inside(x, lb, ub)) {
            self.unreachable(format!("{a} occurs outside the window in the fixed prefix"));
        }
        if let Some(hd) = hd {
            let g = GroundAtom { pred: hd, args: a.args.clone() };
            if !occ.is_empty() {
                self.init(g.clone());
            }
            self.goal(g);
        }
        Ok(())
    }

    fn require_within(&mut self, a: &ActionRef, lb: f64, ub: f64) -> Result<(), CompileError> {
        let o = self.root_op(a)?;
        let hd = self.new_pred(&format!("has_done_{}", o.name), &o.params);
        let cd = self.new_pred(&format!("can_do_{}", o.name), &o.params);
        for i in self.derived(&o.name).into_iter().rev() {
            let d = self.m.domain.operators[i].clone();
            let terms = self.root_terms(&d);
            let mut v = d.clone();
            v.name = self.fresh(&format!("{}_a", d.name), true);
            v.conditions.push(TimedCond { when: When::OverAll, cond: lit(&cd, terms.clone(), true) });
            v.effects.push(TimedEffect { when: When::End, effect: Effect::Add(Atom { pred: hd.clone(), args: terms }) });
            let origin = self.origins[&d.name].clone();
            self.r.symbols.operators.push(v.name.clone());
            self.origins.insert(v.name.clone(), origin);
            self.m.domain.operators.insert(i + 1, v);
        }
        let g = GroundAtom { pred: hd, args: a.args.clone() };
        if self.prefix_occurrences(a).iter().any(|x| inside(x, lb, ub)) {
            self.init(g.clone());
        }
        self.goal(g);
        self.window(lb, ub, GroundAtom { pred: cd, args: a.args.clone() });
        Ok(())
    }

    fn reorder(&mut self, edges: &[(ActionRef, ActionRef)]) -> Result<(), CompileError> {
        if edges.is_empty() {
            return Err(CompileError::Invalid("reorder needs at least one edge".into()));
        }
        let mut nodes: Vec<ActionRef> = Vec::new();
        for (a, b) in edges {
            self.root_op(a)?;
            self.root_op(b)?;
            if a == b {
                return Err(CompileError::Cycle);
            }
            for x in [a, b] {
                if !nodes.contains(x) {
                    nodes.push(x.clone());
                }
            }
        }
        let idx = |x: &ActionRef| nodes.iter().position(|n| n == x).unwrap();
        let mut indeg = vec![0usize; nodes.len()];
        for (_, b) in edges {
            indeg[idx(b)] += 1;
        }
        let mut queue: Vec<usize> = (0..nodes.len()).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(n) = queue.pop() {
            seen += 1;
            for (a, b) in edges {
                if idx(a) == n {
                    indeg[idx(b)] -= 1;
                    if indeg[idx(b)] == 0 {
                        queue.push(idx(b));
                    }
                }
            }
        }
        if seen != nodes.len() {
            return Err(CompileError::Cycle);
        }

        let mut ordered = Vec::new();
        let mut traversed = Vec::new();
        for (a, b) in edges {
            let (oa, ob) = (self.root_op(a)?, self.root_op(b)?);
            let both: Vec<Typed> = oa.params.iter().chain(&ob.params).cloned().collect();
            let op_ = self.new_pred(&format!("ordered_{}_{}", key(a), key(b)), &both);
            let tp = self.new_pred(&format!("traversed_{}_{}", key(a), key(b)), &ob.params);
            let mut args = a.args.clone();
            args.extend(b.args.iter().cloned());
            self.init(GroundAtom { pred: op_.clone(), args });
            ordered.push(op_);
            traversed.push(tp);
        }

        let variants: Vec<(Name, Vec<usize>)> = {
            let mut v: Vec<(Name, Vec<usize>)> = Vec::new();
            for n in &nodes {
                if !v.iter().any(|(o, _)| o == &n.op) {
                    v.push((n.op.clone(), self.derived(&n.op)));
                }
            }
            v
        };
        let base_ops = self.m.domain.operators.clone();
        for n in &nodes {
            let ds = &variants.iter().find(|(o, _)| o == &n.op).unwrap().1;
            for &di in ds {
                let d = &base_ops[di];
                let origin = self.origins[&d.name].clone();
                let terms = var_terms(&d.params[..origin.keep]);
                let mut v = d.clone();
                v.name = self.fresh(&format!("node_{}", key(n)), true);
                for (e, (a, b)) in edges.iter().enumerate() {
                    if a == n {
                        let ob = self.root_op(b)?;
                        let sink: Vec<Typed> = ob
                            .params
                            .iter()
                            .enumerate()
                            .map(|(i, p)| Typed::new(format!("sink{e}_{}", i + 1).as_str(), p.ty.clone()))
                            .collect();
                        let st = var_terms(&sink);
                        v.params.extend(sink);
                        let mut oargs = terms.clone();
                        oargs.extend(st.iter().cloned());
                        v.conditions.push(TimedCond { when: When::Start, cond: lit(&ordered[e], oargs, true) });
                        v.effects.push(TimedEffect {
                            when: When::End,
                            effect: Effect::Add(Atom { pred: traversed[e].clone(), args: st }),
                        });
                    }
                    if b == n {
                        v.conditions.push(TimedCond { when: When::Start, cond: lit(&traversed[e], terms.clone(), true) });
                    }
                }
                self.push_op(v, origin);
            }
        }

        for (opname, ds) in &variants {
            let o = self.root_op(&nodes.iter().find(|n| &n.op == opname).unwrap().clone())?;
            let nd = self.not_done_pred(o);
            for &di in ds {
                let terms = self.root_terms(&self.m.domain.operators[di]);
                self.m.domain.operators[di]
                    .effects
                    .push(TimedEffect { when: When::Start, effect: Effect::Del(Atom { pred: nd.clone(), args: terms }) });
            }
        }
        for n in &nodes {
            let nd = self.not_done[&n.op].clone();
            let g = GroundAtom { pred: nd, args: n.args.clone() };
            self.init(g.clone());
            self.goal(g);
        }

        let off = self.time_offset;
        for (e, (a, b)) in edges.iter().enumerate() {
            let t_atom = GroundAtom { pred: traversed[e].clone(), args: b.args.clone() };
            let a_occ = self.prefix_occurrences(a);
            for b_occ in self.prefix_occurrences(b) {
                if !a_occ.iter().any(|x| x.end() <= b_occ.dispatch + TIME_TOL) {
                    self.unreachable(format!("{b} precedes {a} in the fixed prefix"));
                }
            }
            if let Some(first) = a_occ.iter().map(|x| x.end()).min_by(|x, y| x.total_cmp(y)) {
                if first <= off + TIME_TOL {
                    self.init(t_atom);
                } else {
                    self.window(first, f64::INFINITY, t_atom);
                }
            }
        }
        Ok(())
    }

    fn replace(&mut self, index: usize, replacement: &ActionRef, plan: &Plan) -> Result<(), CompileError> {
        let o = self.root_op(replacement)?;
        if index >= plan.len() {
            return Err(PrefixError::Range { index, len: plan.len() }.into());
        }
        let replaced = self
            .h
            .normalize_action(&plan.actions[index].action)?
            .ok_or_else(|| CompileError::Invalid("cannot cut at a bookkeeping action".into()))?;
        let mut last = None;
        let mut found = None;
        for i in self.derived(&o.name) {
            let d = &self.m.domain.operators[i];
            if self.origins[&d.name].keep != d.params.len() {
                continue;
            }
            let b = ActionRef { op: d.name.clone(), args: replacement.args.clone() };
            match execute_prefix(&self.m, plan, index, &b) {
                Ok(x) => {
                    found = Some((b, x));
                    break;
                }
                Err(e) => last = Some(e),
            }
        }
        let (b, x) = match (found, last) {
            (Some(f), _) => f,
            (None, Some(e)) => return Err(e.into()),
            (None, None) => {
                return Err(CompileError::IllTyped(format!("no operator can dispatch {replacement}")));
            }
        };

        let full = simulate(&self.m, &x.prefix);
        let broken: Vec<String> =
            full.failures.iter().filter(|f| f.kind != FailureKind::Goal).map(|f| f.to_string()).collect();

        let old_offset = self.time_offset;
        let mut fixed = self.fixed_prefix.actions.clone();
        for a in &x.prefix.actions {
            if let Some(n) = self.h.normalize_action(&a.action)? {
                fixed.push(TimedAction { action: n, dispatch: a.dispatch + old_offset, duration: a.duration });
            }
        }
        self.fixed_prefix = Plan::new(fixed);
        self.time_offset = round9(old_offset + x.t0);
        self.r.cut = Some(CutRecord {
            dispatch: x.dispatch + old_offset,
            replaced,
            replacement: replacement.clone(),
            replacement_op: b.op.clone(),
        });

        let (fluent_preds, fluent_funcs) = fluent_symbols(&self.m);
        self.m.problem.init = x.init.clone();
        self.m.problem.init_values = x.init_values.clone();
        self.m.problem.windows = x.windows.clone();
        self.require(":timed-initial-literals");

        let resume = self.new_pred("xaip_resume", &[]);
        let rw = TimeWindow::atom(0.0, f64::INFINITY, GroundAtom { pred: resume.clone(), args: vec![] });
        self.m.problem.windows.insert(0, rw.clone());
        self.r.window_additions.push(rw);
        for op in &mut self.m.domain.operators {
            op.conditions.push(TimedCond { when: When::Start, cond: lit(&resume, vec![], true) });
        }

        let mut keep: BTreeMap<Name, Name> = BTreeMap::new();
        let mut keepnot: BTreeMap<Name, Name> = BTreeMap::new();
        let mut freeze: BTreeMap<Name, Name> = BTreeMap::new();
        // One window per guard atom, lasting until the last in-flight reader ends.
        let mut guard_windows: BTreeMap<GroundAtom, f64> = BTreeMap::new();
        let mut guard = |atom: GroundAtom, ub: f64| {
            let e = guard_windows.entry(atom).or_insert(ub);
            *e = e.max(ub);
        };
        for &j in &x.in_flight {
            let ta = &x.prefix.actions[j];
            let g = ground_action(&ta.action, &self.m).map_err(|e| CompileError::IllTyped(e.to_string()))?;
            let ub = round9(ta.end() - x.t0 + self.m.epsilon);
            let mut reads: Vec<Pne> = Vec::new();
            for (w, c) in &g.conditions {
                if *w == When::Start {
                    continue;
                }
                match c {
                    GCond::Lit { atom, positive } if fluent_preds.contains(&atom.pred) => {
                        let table = if *positive { &mut keep } else { &mut keepnot };
                        let base = if *positive { "xaip_keep_" } else { "xaip_keepnot_" };
                        let gp = match table.get(&atom.pred) {
                            Some(p) => p.clone(),
                            None => {
                                let params = self.m.domain.predicate(&atom.pred).expect("declared").params.clone();
                                let p = self.new_pred(&format!("{base}{}", atom.pred), &params);
                                let table = if *positive { &mut keep } else { &mut keepnot };
                                table.insert(atom.pred.clone(), p.clone());
                                p
                            }
                        };
                        guard(GroundAtom { pred: gp, args: atom.args.clone() }, ub);
                    }
                    GCond::Cmp { lhs, rhs, .. } => {
                        lhs.pnes(&mut reads);
                        rhs.pnes(&mut reads);
                    }
                    _ => {}
                }
            }
            for (w, e) in &g.effects {
                if let (When::End, GEffect::Num { value, .. }) = (w, e) {
                    value.pnes(&mut reads);
                }
            }
            for p in reads {
                if !fluent_funcs.contains(&p.func) {
                    continue;
                }
                let gp = match freeze.get(&p.func) {
                    Some(x) => x.clone(),
                    None => {
                        let params = self.m.domain.function(&p.func).expect("declared").params.clone();
                        let n = self.new_pred(&format!("xaip_freeze_{}", p.func), &params);
                        freeze.insert(p.func.clone(), n.clone());
                        n
                    }
                };
                guard(GroundAtom { pred: gp, args: p.args.clone() }, ub);
            }
        }
        if !guard_windows.is_empty() {
            self.require(":negative-preconditions");
            for op in &mut self.m.domain.operators {
                let mut extra = Vec::new();
                for e in &op.effects {
                    let (table, atom) = match &e.effect {
                        Effect::Del(a) => (&keep, Atom { pred: a.pred.clone(), args: a.args.clone() }),
                        Effect::Add(a) => (&keepnot, Atom { pred: a.pred.clone(), args: a.args.clone() }),
                        Effect::Num { target, .. } => {
                            (&freeze, Atom { pred: target.func.clone(), args: target.args.clone() })
                        }
                    };
                    if let Some(gp) = table.get(&atom.pred) {
                        let c = TimedCond { when: e.when, cond: lit(gp, atom.args, false) };
                        if !op.conditions.contains(&c) && !extra.contains(&c) {
                            extra.push(c);
                        }
                    }
                }
                op.conditions.extend(extra);
            }
            for (atom, ub) in guard_windows {
                let w = TimeWindow::atom(0.0, ub, atom);
                if !self.m.problem.windows.contains(&w) {
                    self.m.problem.windows.push(w.clone());
                    self.r.window_additions.push(w);
                }
            }
        }
        if !broken.is_empty() {
            self.unreachable(format!("the replacement breaks the running actions: {}", broken.join("; ")));
        }
        Ok(())
    }
}
