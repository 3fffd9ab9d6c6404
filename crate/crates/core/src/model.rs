//! Planning model types: domains, problems, ground structures, plans and states.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::name::Name;

/// A term inside a lifted atom or fluent: a parameter variable (stored without
/// the leading `?`) or an object/constant.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Term {
    Var(Name),
    Obj(Name),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub pred: Name,
    pub args: Vec<Term>,
}

/// Function term, lifted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FTerm {
    pub func: Name,
    pub args: Vec<Term>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NumExpr {
    Num(f64),
    Fluent(FTerm),
    Duration,
    TotalTime,
    Bin(BinOp, Box<NumExpr>, Box<NumExpr>),
    Neg(Box<NumExpr>),
}

impl NumExpr {
    pub fn fluents(&self, out: &mut Vec<FTerm>) {
        match self {
            NumExpr::Fluent(f) => out.push(f.clone()),
            NumExpr::Bin(_, a, b) => {
                a.fluents(out);
                b.fluents(out);
            }
            NumExpr::Neg(a) => a.fluents(out),
            _ => {}
        }
    }

    pub fn mentions_total_time(&self) -> bool {
        match self {
            NumExpr::TotalTime => true,
            NumExpr::Bin(_, a, b) => a.mentions_total_time() || b.mentions_total_time(),
            NumExpr::Neg(a) => a.mentions_total_time(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "=",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
        }
    }

    /// Comparison with the shared time tolerance on equality and the
    /// non-strict forms.
    pub fn holds(self, a: f64, b: f64) -> bool {
        let tol = crate::TIME_TOL;
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b + tol,
            CmpOp::Eq => (a - b).abs() <= tol,
            CmpOp::Ge => a + tol >= b,
            CmpOp::Gt => a > b,
        }
    }
}

/// Temporal qualifier of a condition or effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum When {
    Start,
    OverAll,
    End,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cond {
    Lit { atom: Atom, positive: bool },
    Cmp { op: CmpOp, lhs: NumExpr, rhs: NumExpr },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedCond {
    pub when: When,
    pub cond: Cond,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AssignOp {
    Assign,
    Increase,
    Decrease,
    ScaleUp,
    ScaleDown,
}

impl AssignOp {
    pub fn keyword(self) -> &'static str {
        match self {
            AssignOp::Assign => "assign",
            AssignOp::Increase => "increase",
            AssignOp::Decrease => "decrease",
            AssignOp::ScaleUp => "scale-up",
            AssignOp::ScaleDown => "scale-down",
        }
    }

    /// Applies the update to the current value. `None` current value is only
    /// legal for `assign`.
    pub fn apply(self, current: Option<f64>, v: f64) -> Option<f64> {
        match self {
            AssignOp::Assign => Some(v),
            AssignOp::Increase => current.map(|c| c + v),
            AssignOp::Decrease => current.map(|c| c - v),
            AssignOp::ScaleUp => current.map(|c| c * v),
            AssignOp::ScaleDown => current.map(|c| c / v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Effect {
    Add(Atom),
    Del(Atom),
    Num { op: AssignOp, target: FTerm, value: NumExpr },
}

/// An effect tagged with `Start` or `End`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedEffect {
    pub when: When,
    pub effect: Effect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationConstraint {
    pub op: CmpOp,
    pub expr: NumExpr,
}

/// A typed name: a parameter variable or an object.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Typed {
    pub name: Name,
    pub ty: Name,
}

impl Typed {
    pub fn new(name: impl Into<Name>, ty: impl Into<Name>) -> Self {
        Typed { name: name.into(), ty: ty.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateDecl {
    pub name: Name,
    pub params: Vec<Typed>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionDecl {
    pub name: Name,
    pub params: Vec<Typed>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Operator {
    pub name: Name,
    pub params: Vec<Typed>,
    pub duration: Vec<DurationConstraint>,
    pub conditions: Vec<TimedCond>,
    pub effects: Vec<TimedEffect>,
}

impl Operator {
    /// Positive atom conditions ordered by qualifier (start, over all, end),
    /// declaration order inside each qualifier.
    pub fn positive_atom_conditions(&self) -> Vec<(When, &Atom)> {
        let mut out = Vec::new();
        for w in [When::Start, When::OverAll, When::End] {
            for c in &self.conditions {
                if c.when != w {
                    continue;
                }
                if let Cond::Lit { atom, positive: true } = &c.cond {
                    out.push((w, atom));
                }
            }
        }
        out
    }
}

/// Child type to parent type. `object` is the implicit root.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TypeHierarchy {
    pub parents: BTreeMap<Name, Name>,
}

impl TypeHierarchy {
    pub fn object() -> Name {
        Name::new("object")
    }

    pub fn is_declared(&self, t: &Name) -> bool {
        t.as_str() == "object" || self.parents.contains_key(t)
    }

    /// True if `sub` equals `sup` or reaches it through parent links.
    pub fn is_subtype(&self, sub: &Name, sup: &Name) -> bool {
        if sup.as_str() == "object" {
            return true;
        }
        let mut cur = sub.clone();
        for _ in 0..=self.parents.len() {
            if &cur == sup {
                return true;
            }
            match self.parents.get(&cur) {
                Some(p) => cur = p.clone(),
                None => return false,
            }
        }
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub name: Name,
    pub requirements: Vec<String>,
    pub types: TypeHierarchy,
    pub constants: Vec<Typed>,
    pub predicates: Vec<PredicateDecl>,
    pub functions: Vec<FunctionDecl>,
    pub operators: Vec<Operator>,
}

impl Domain {
    pub fn operator(&self, name: &Name) -> Option<&Operator> {
        self.operators.iter().find(|o| &o.name == name)
    }

    pub fn predicate(&self, name: &Name) -> Option<&PredicateDecl> {
        self.predicates.iter().find(|p| &p.name == name)
    }

    pub fn function(&self, name: &Name) -> Option<&FunctionDecl> {
        self.functions.iter().find(|p| &p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroundAtom {
    pub pred: Name,
    pub args: Vec<Name>,
}

impl GroundAtom {
    pub fn new(pred: impl Into<Name>, args: &[&str]) -> Self {
        GroundAtom { pred: pred.into(), args: args.iter().map(|a| Name::new(a)).collect() }
    }
}

impl fmt::Display for GroundAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.pred)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, ")")
    }
}

/// Ground primitive numeric expression.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pne {
    pub func: Name,
    pub args: Vec<Name>,
}

impl fmt::Display for Pne {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.func)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WindowPayload {
    /// Positive: true at `lb`, false again at `ub`. Negative: false at `lb`.
    Atom { atom: GroundAtom, positive: bool },
    /// Applied once at `lb`.
    Numeric { op: AssignOp, target: Pne, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub lb: f64,
    #[serde(with = "inf_as_null")]
    pub ub: f64,
    pub payload: WindowPayload,
}

impl TimeWindow {
    pub fn atom(lb: f64, ub: f64, atom: GroundAtom) -> Self {
        TimeWindow { lb, ub, payload: WindowPayload::Atom { atom, positive: true } }
    }
}

pub(crate) mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub direction: Direction,
    pub expr: NumExpr,
}

impl Default for Metric {
    fn default() -> Self {
        Metric { direction: Direction::Minimize, expr: NumExpr::TotalTime }
    }
}

impl Metric {
    pub fn is_default(&self) -> bool {
        *self == Metric::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub name: Name,
    pub domain: Name,
    pub objects: Vec<Typed>,
    pub init: Vec<GroundAtom>,
    pub init_values: Vec<(Pne, f64)>,
    pub windows: Vec<TimeWindow>,
    /// Ground goal conditions (all terms are objects).
    pub goal: Vec<Cond>,
    pub metric: Metric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningModel {
    pub domain: Domain,
    pub problem: Problem,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    crate::DEFAULT_EPSILON
}

impl PlanningModel {
    pub fn new(domain: Domain, problem: Problem) -> Self {
        PlanningModel { domain, problem, epsilon: crate::DEFAULT_EPSILON }
    }

    /// Objects and constants with their types, constants first.
    pub fn all_objects(&self) -> Vec<Typed> {
        let mut out: Vec<Typed> = self.domain.constants.clone();
        for o in &self.problem.objects {
            if !out.iter().any(|c| c.name == o.name) {
                out.push(o.clone());
            }
        }
        out
    }

    pub fn object_type(&self, obj: &Name) -> Option<Name> {
        self.domain
            .constants
            .iter()
            .chain(self.problem.objects.iter())
            .find(|o| &o.name == obj)
            .map(|o| o.ty.clone())
    }

    /// Objects whose declared type is a subtype of `ty`, sorted by name.
    pub fn objects_of_type(&self, ty: &Name) -> Vec<Name> {
        let mut v: Vec<Name> = self
            .all_objects()
            .into_iter()
            .filter(|o| self.domain.types.is_subtype(&o.ty, ty))
            .map(|o| o.name)
            .collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn is_object_of_type(&self, obj: &Name, ty: &Name) -> bool {
        match self.object_type(obj) {
            Some(t) => self.domain.types.is_subtype(&t, ty),
            None => false,
        }
    }
}

/// Identity of a ground action: operator plus argument tuple. Serialized as
/// the literal `(op arg ...)`; the `{op, args}` form is also read.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionRef {
    pub op: Name,
    pub args: Vec<Name>,
}

impl ActionRef {
    pub fn new(op: impl Into<Name>, args: &[&str]) -> Self {
        ActionRef { op: op.into(), args: args.iter().map(|a| Name::new(a)).collect() }
    }
}

impl std::str::FromStr for ActionRef {
    type Err = String;

    /// Syntax only; see `pddl::parse_action_literal` for checking against a model.
    fn from_str(s: &str) -> Result<Self, String> {
        let inner = s
            .trim()
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| format!("`{s}` is not an action literal `(op arg ...)`"))?;
        let mut words = inner.split_whitespace();
        let op = words.next().filter(|w| Name::is_valid_ident(w)).ok_or_else(|| format!("`{s}` lacks an operator name"))?;
        let args: Vec<Name> = words.map(Name::new).collect();
        if args.iter().any(|a| a.as_str().contains(['(', ')'])) {
            return Err(format!("`{s}` has nested parentheses"));
        }
        Ok(ActionRef { op: Name::new(op), args })
    }
}

impl Serialize for ActionRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ActionRef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Wire {
            Text(String),
            Parts { op: Name, args: Vec<Name> },
        }
        match Wire::deserialize(d)? {
            Wire::Text(t) => t.parse().map_err(serde::de::Error::custom),
            Wire::Parts { op, args } => Ok(ActionRef { op, args }),
        }
    }
}

impl fmt::Display for ActionRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.op)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedAction {
    pub action: ActionRef,
    pub dispatch: f64,
    pub duration: f64,
}

impl TimedAction {
    pub fn end(&self) -> f64 {
        self.dispatch + self.duration
    }
}

/// A temporal plan, kept sorted by dispatch time (stable for ties).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub actions: Vec<TimedAction>,
}

impl Plan {
    pub fn new(mut actions: Vec<TimedAction>) -> Self {
        actions.sort_by(|a, b| a.dispatch.total_cmp(&b.dispatch));
        Plan { actions }
    }

    pub fn push(&mut self, a: TimedAction) {
        self.actions.push(a);
        self.actions.sort_by(|a, b| a.dispatch.total_cmp(&b.dispatch));
    }

    pub fn makespan(&self) -> f64 {
        self.actions.iter().map(|a| a.end()).fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn contains(&self, a: &ActionRef) -> bool {
        self.actions.iter().any(|t| &t.action == a)
    }

    pub fn without(&self, index: usize) -> Plan {
        let mut p = self.clone();
        p.actions.remove(index);
        p
    }

    pub fn shifted(&self, offset: f64) -> Plan {
        Plan {
            actions: self
                .actions
                .iter()
                .map(|a| TimedAction { dispatch: a.dispatch + offset, ..a.clone() })
                .collect(),
        }
    }
}

/// A state in a state trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub time: f64,
    pub atoms: BTreeSet<GroundAtom>,
    #[serde(with = "pne_pairs")]
    pub values: BTreeMap<Pne, f64>,
}

/// JSON maps need string keys, so numeric state is written as pairs.
mod pne_pairs {
    use super::Pne;
    use serde::{Deserialize, Deserializer, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(m: &BTreeMap<Pne, f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(m.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<Pne, f64>, D::Error> {
        Ok(Vec::<(Pne, f64)>::deserialize(d)?.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub location: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}: {}: {}", self.location, self.message)
    }
}

struct Checker<'a> {
    model: &'a PlanningModel,
    out: Vec<Diagnostic>,
}

impl<'a> Checker<'a> {
    fn err(&mut self, loc: impl Into<String>, msg: impl Into<String>) {
        self.out.push(Diagnostic { severity: Severity::Error, location: loc.into(), message: msg.into() });
    }

    fn ident(&mut self, loc: &str, n: &Name) {
        if !n.is_valid() {
            self.err(loc, format!("invalid identifier `{}`", n.display()));
        }
    }

    fn ty(&mut self, loc: &str, t: &Name) {
        if !self.model.domain.types.is_declared(t) {
            self.err(loc, format!("undeclared type `{t}`"));
        }
    }

    fn term_type(&self, t: &Term, params: &[Typed]) -> Option<Name> {
        match t {
            Term::Var(v) => params.iter().find(|p| &p.name == v).map(|p| p.ty.clone()),
            Term::Obj(o) => self.model.object_type(o),
        }
    }

    fn terms(&mut self, loc: &str, what: &str, args: &[Term], decl: &[Typed], params: &[Typed]) {
        if args.len() != decl.len() {
            self.err(loc, format!("`{what}` expects {} arguments, got {}", decl.len(), args.len()));
            return;
        }
        for (a, d) in args.iter().zip(decl) {
            match a {
                Term::Var(v) if !params.iter().any(|p| &p.name == v) => {
                    self.err(loc, format!("free variable `?{v}` in `{what}`"));
                }
                Term::Obj(o) if self.model.object_type(o).is_none() => {
                    self.err(loc, format!("unknown object `{o}` in `{what}`"));
                }
                _ => {
                    if let Some(t) = self.term_type(a, params) {
                        if !self.model.domain.types.is_subtype(&t, &d.ty) {
                            self.err(loc, format!("argument of type `{t}` where `{what}` expects `{}`", d.ty));
                        }
                    }
                }
            }
        }
    }

    fn atom(&mut self, loc: &str, a: &Atom, params: &[Typed]) {
        match self.model.domain.predicate(&a.pred) {
            None => self.err(loc, format!("undeclared predicate `{}`", a.pred)),
            Some(decl) => {
                let decl = decl.params.clone();
                self.terms(loc, a.pred.as_str(), &a.args, &decl, params)
            }
        }
    }

    fn fterm(&mut self, loc: &str, f: &FTerm, params: &[Typed]) {
        match self.model.domain.function(&f.func) {
            None => self.err(loc, format!("undeclared function `{}`", f.func)),
            Some(decl) => {
                let decl = decl.params.clone();
                self.terms(loc, f.func.as_str(), &f.args, &decl, params)
            }
        }
    }

    fn expr(&mut self, loc: &str, e: &NumExpr, params: &[Typed], allow_duration: bool, allow_total: bool) {
        match e {
            NumExpr::Fluent(f) => self.fterm(loc, f, params),
            NumExpr::Duration if !allow_duration => self.err(loc, "`?duration` outside a duration context"),
            NumExpr::TotalTime if !allow_total => self.err(loc, "`total-time` outside the metric"),
            NumExpr::Bin(_, a, b) => {
                self.expr(loc, a, params, allow_duration, allow_total);
                self.expr(loc, b, params, allow_duration, allow_total);
            }
            NumExpr::Neg(a) => self.expr(loc, a, params, allow_duration, allow_total),
            NumExpr::Num(v) if !v.is_finite() => self.err(loc, "non-finite numeric literal"),
            _ => {}
        }
    }

    fn cond(&mut self, loc: &str, c: &Cond, params: &[Typed], allow_duration: bool) {
        match c {
            Cond::Lit { atom, .. } => self.atom(loc, atom, params),
            Cond::Cmp { lhs, rhs, .. } => {
                self.expr(loc, lhs, params, allow_duration, false);
                self.expr(loc, rhs, params, allow_duration, false);
            }
        }
    }

    fn ground_atom(&mut self, loc: &str, a: &GroundAtom) {
        let args: Vec<Term> = a.args.iter().cloned().map(Term::Obj).collect();
        self.atom(loc, &Atom { pred: a.pred.clone(), args }, &[]);
    }

    fn pne(&mut self, loc: &str, p: &Pne) {
        let args: Vec<Term> = p.args.iter().cloned().map(Term::Obj).collect();
        self.fterm(loc, &FTerm { func: p.func.clone(), args }, &[]);
    }
}

fn duplicates<'n>(names: impl Iterator<Item = &'n Name>) -> Vec<Name> {
    let mut seen = HashSet::new();
    let mut dups = Vec::new();
    for n in names {
        if !seen.insert(n.clone()) && !dups.contains(n) {
            dups.push(n.clone());
        }
    }
    dups
}

/// Checks every structural invariant of a model and returns the violations.
/// An empty list means the model is well formed.
pub fn validate_model_wellformed(model: &PlanningModel) -> Vec<Diagnostic> {
    let mut c = Checker { model, out: Vec::new() };
    let d = &model.domain;
    c.ident("domain", &d.name);

    for (child, parent) in &d.types.parents {
        c.ident("types", child);
        c.ty("types", parent);
        let mut cur = parent.clone();
        let mut steps = 0;
        while let Some(p) = d.types.parents.get(&cur) {
            if &cur == child || steps > d.types.parents.len() {
                c.err("types", format!("type `{child}` is part of a cycle"));
                break;
            }
            cur = p.clone();
            steps += 1;
        }
        if &cur == child {
            c.err("types", format!("type `{child}` is part of a cycle"));
        }
    }

    for (what, dups) in [
        ("predicate", duplicates(d.predicates.iter().map(|p| &p.name))),
        ("function", duplicates(d.functions.iter().map(|p| &p.name))),
        ("operator", duplicates(d.operators.iter().map(|p| &p.name))),
        ("object", duplicates(d.constants.iter().chain(&model.problem.objects).map(|p| &p.name))),
    ] {
        for n in dups {
            c.err("declarations", format!("duplicate {what} `{n}`"));
        }
    }

    for p in &d.predicates {
        let loc = format!("predicate {}", p.name);
        c.ident(&loc, &p.name);
        for t in &p.params {
            c.ty(&loc, &t.ty);
        }
    }
    for f in &d.functions {
        let loc = format!("function {}", f.name);
        c.ident(&loc, &f.name);
        for t in &f.params {
            c.ty(&loc, &t.ty);
        }
    }
    for o in d.constants.iter().chain(&model.problem.objects) {
        c.ident("objects", &o.name);
        c.ty("objects", &o.ty);
    }

    for op in &d.operators {
        let loc = format!("operator {}", op.name);
        c.ident(&loc, &op.name);
        for p in &op.params {
            c.ty(&loc, &p.ty);
        }
        if let Some(dup) = duplicates(op.params.iter().map(|p| &p.name)).first() {
            c.err(&loc, format!("duplicate parameter `?{dup}`"));
        }
        if op.duration.is_empty() {
            c.err(&loc, "missing duration constraint");
        }
        for dc in &op.duration {
            c.expr(&loc, &dc.expr, &op.params, false, false);
        }
        for tc in &op.conditions {
            c.cond(&loc, &tc.cond, &op.params, true);
        }
        for te in &op.effects {
            if te.when == When::OverAll {
                c.err(&loc, "continuous effects are not supported");
            }
            match &te.effect {
                Effect::Add(a) | Effect::Del(a) => c.atom(&loc, a, &op.params),
                Effect::Num { target, value, .. } => {
                    c.fterm(&loc, target, &op.params);
                    c.expr(&loc, value, &op.params, true, false);
                }
            }
        }
        for te in &op.effects {
            if let Effect::Add(a) = &te.effect {
                let clash = op.effects.iter().any(|o| o.when == te.when && o.effect == Effect::Del(a.clone()));
                if clash {
                    c.err(&loc, format!("atom `{}` is both added and deleted at the same time", a.pred));
                }
            }
        }
    }

    let pb = &model.problem;
    for a in &pb.init {
        c.ground_atom("init", a);
    }
    for (p, v) in &pb.init_values {
        c.pne("init", p);
        if !v.is_finite() {
            c.err("init", format!("non-finite value for {p}"));
        }
    }
    for (i, w) in pb.windows.iter().enumerate() {
        let loc = format!("window {i}");
        if w.lb < 0.0 || !w.lb.is_finite() {
            c.err(&loc, format!("window lower bound {} must be a finite time >= 0", w.lb));
        }
        if !(w.lb < w.ub) {
            c.err(&loc, format!("window violates lb < ub (lb = {}, ub = {})", w.lb, w.ub));
        }
        match &w.payload {
            WindowPayload::Atom { atom, .. } => c.ground_atom(&loc, atom),
            WindowPayload::Numeric { target, .. } => c.pne(&loc, target),
        }
    }
    for g in &pb.goal {
        c.cond("goal", g, &[], false);
    }
    c.expr("metric", &pb.metric.expr, &[], false, true);
    if pb.domain != d.name {
        c.out.push(Diagnostic {
            severity: Severity::Warning,
            location: "problem".into(),
            message: format!("problem names domain `{}` but the domain is `{}`", pb.domain, d.name),
        });
    }
    c.out
}

/// Every PNE mentioned by the metric expression.
pub fn metric_symbols(model: &PlanningModel) -> BTreeSet<Pne> {
    let mut fl = Vec::new();
    model.problem.metric.expr.fluents(&mut fl);
    fl.into_iter()
        .filter_map(|f| {
            let args: Option<Vec<Name>> = f
                .args
                .iter()
                .map(|t| match t {
                    Term::Obj(o) => Some(o.clone()),
                    Term::Var(_) => None,
                })
                .collect();
            args.map(|args| Pne { func: f.func, args })
        })
        .collect()
}

/// Predicates and functions that some operator effect or window can change.
pub fn fluent_symbols(model: &PlanningModel) -> (HashSet<Name>, HashSet<Name>) {
    let mut preds = HashSet::new();
    let mut funcs = HashSet::new();
    for op in &model.domain.operators {
        for e in &op.effects {
            match &e.effect {
                Effect::Add(a) | Effect::Del(a) => {
                    preds.insert(a.pred.clone());
                }
                Effect::Num { target, .. } => {
                    funcs.insert(target.func.clone());
                }
            }
        }
    }
    for w in &model.problem.windows {
        match &w.payload {
            WindowPayload::Atom { atom, .. } => {
                preds.insert(atom.pred.clone());
            }
            WindowPayload::Numeric { target, .. } => {
                funcs.insert(target.func.clone());
            }
        }
    }
    (preds, funcs)
}

/// Substitution from parameter variables to objects.
pub type Binding = HashMap<Name, Name>;

pub fn bind_term(t: &Term, b: &Binding) -> Option<Name> {
    match t {
        Term::Obj(o) => Some(o.clone()),
        Term::Var(v) => b.get(v).cloned(),
    }
}

pub fn bind_atom(a: &Atom, b: &Binding) -> Option<GroundAtom> {
    let args: Option<Vec<Name>> = a.args.iter().map(|t| bind_term(t, b)).collect();
    args.map(|args| GroundAtom { pred: a.pred.clone(), args })
}

pub fn bind_fterm(f: &FTerm, b: &Binding) -> Option<Pne> {
    let args: Option<Vec<Name>> = f.args.iter().map(|t| bind_term(t, b)).collect();
    args.map(|args| Pne { func: f.func.clone(), args })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_makespan_and_order() {
        let p = Plan::new(vec![
            TimedAction { action: ActionRef::new("b", &[]), dispatch: 2.0, duration: 1.0 },
            TimedAction { action: ActionRef::new("a", &[]), dispatch: 0.0, duration: 5.0 },
        ]);
        assert_eq!(p.actions[0].action.op.as_str(), "a");
        assert!((p.makespan() - 5.0).abs() < 1e-9);
        assert_eq!(Plan::default().makespan(), 0.0);
    }

    #[test]
    fn subtype_walks_parents() {
        let mut th = TypeHierarchy::default();
        th.parents.insert(Name::new("robot"), Name::new("locatable"));
        th.parents.insert(Name::new("locatable"), Name::new("object"));
        assert!(th.is_subtype(&Name::new("robot"), &Name::new("locatable")));
        assert!(th.is_subtype(&Name::new("robot"), &Name::new("object")));
        assert!(!th.is_subtype(&Name::new("locatable"), &Name::new("robot")));
    }

    #[test]
    fn window_ub_serializes_infinity_as_null() {
        let w = TimeWindow::atom(1.0, f64::INFINITY, GroundAtom::new("p", &[]));
        let s = serde_json::to_string(&w).unwrap();
        assert!(s.contains("\"ub\":null"));
        let back: TimeWindow = serde_json::from_str(&s).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn action_refs_serialize_as_literals() {
        let a = ActionRef::new("goto_waypoint", &["tom", "sh1", "sh2"]);
        assert_eq!(serde_json::to_string(&a).unwrap(), r#""(goto_waypoint tom sh1 sh2)""#);
        let b: ActionRef = serde_json::from_str(r#""( goto_waypoint  Tom sh1 sh2 )""#).unwrap();
        assert_eq!(a, b);
        let c: ActionRef = serde_json::from_str(r#"{"op":"goto_waypoint","args":["tom","sh1","sh2"]}"#).unwrap();
        assert_eq!(a, c);
        assert!(serde_json::from_str::<ActionRef>(r#""goto_waypoint tom""#).is_err());
        assert!(serde_json::from_str::<ActionRef>(r#""()""#).is_err());
    }
}
