//! Domain, problem and action-literal parsing.

use super::sexpr::{read, SExpr};
use super::{ParseError, ParseErrorKind, SourceSpan};
use crate::model::*;
use crate::name::Name;

type R<T> = Result<T, ParseError>;

fn syntax(msg: impl Into<String>, at: &SExpr) -> ParseError {
    ParseError::new(ParseErrorKind::Syntax, msg, at.span().clone())
}

fn unsupported(what: &str, at: &SExpr) -> ParseError {
    ParseError::new(ParseErrorKind::Unsupported, format!("unsupported feature: {what}"), at.span().clone())
}

fn ident(e: &SExpr) -> R<Name> {
    match e {
        SExpr::Sym(s, _) if Name::is_valid_ident(s) => Ok(Name::new(s)),
        SExpr::Sym(s, _) => Err(syntax(format!("invalid identifier `{s}`"), e).expected("identifier")),
        SExpr::List(..) => Err(syntax("found a list", e).expected("identifier")),
    }
}

fn variable(e: &SExpr) -> R<Name> {
    match e {
        SExpr::Sym(s, _) if s.starts_with('?') && Name::is_valid_ident(&s[1..]) => Ok(Name::new(&s[1..])),
        _ => Err(syntax("bad variable", e).expected("variable `?name`")),
    }
}

fn number(e: &SExpr) -> Option<f64> {
    e.sym().and_then(|s| s.parse::<f64>().ok()).filter(|v| v.is_finite())
}

fn list<'a>(e: &'a SExpr, what: &str) -> R<&'a [SExpr]> {
    e.list().ok_or_else(|| syntax(format!("found `{}`", e.sym().unwrap_or("")), e).expected(what.to_string()))
}

/// Parses `a b - t c` style lists. `var` selects `?x` entries over plain names.
fn typed_list(items: &[SExpr], var: bool) -> R<Vec<Typed>> {
    let mut out = Vec::new();
    let mut pending: Vec<Name> = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let it = &items[i];
        if it.sym() == Some("-") {
            let ty = items.get(i + 1).ok_or_else(|| syntax("missing type after `-`", it).expected("type name"))?;
            if ty.head().as_deref() == Some("either") {
                return Err(unsupported("`either` types", ty));
            }
            let ty = ident(ty)?;
            if pending.is_empty() {
                return Err(syntax("type without names", it));
            }
            for n in pending.drain(..) {
                out.push(Typed { name: n, ty: ty.clone() });
            }
            i += 2;
            continue;
        }
        pending.push(if var { variable(it)? } else { ident(it)? });
        i += 1;
    }
    for n in pending {
        out.push(Typed { name: n, ty: TypeHierarchy::object() });
    }
    Ok(out)
}

fn term(e: &SExpr) -> R<Term> {
    match e.sym() {
        Some(s) if s.starts_with('?') => Ok(Term::Var(variable(e)?)),
        Some(_) => Ok(Term::Obj(ident(e)?)),
        None => Err(syntax("found a list", e).expected("term")),
    }
}

fn atom(e: &SExpr) -> R<Atom> {
    let l = list(e, "atom")?;
    let head = l.first().ok_or_else(|| syntax("empty atom", e).expected("predicate name"))?;
    let pred = ident(head)?;
    let args = l[1..].iter().map(term).collect::<R<Vec<_>>>()?;
    Ok(Atom { pred, args })
}

fn fterm(e: &SExpr) -> R<FTerm> {
    let l = list(e, "function term")?;
    let head = l.first().ok_or_else(|| syntax("empty function term", e).expected("function name"))?;
    let func = ident(head)?;
    let args = l[1..].iter().map(term).collect::<R<Vec<_>>>()?;
    Ok(FTerm { func, args })
}

fn num_expr(e: &SExpr) -> R<NumExpr> {
    match e {
        SExpr::Sym(s, _) => {
            if let Some(v) = number(e) {
                return Ok(NumExpr::Num(v));
            }
            let low = s.to_ascii_lowercase();
            if low == "?duration" {
                return Ok(NumExpr::Duration);
            }
            if low == "#t" {
                return Err(unsupported("continuous effects (`#t`)", e));
            }
            if low == "total-time" {
                return Ok(NumExpr::TotalTime);
            }
            Err(syntax(format!("found `{s}`"), e).expected("numeric expression"))
        }
        SExpr::List(l, _) => {
            let head = e.head().ok_or_else(|| syntax("empty expression", e).expected("numeric expression"))?;
            let op = match head.as_str() {
                "+" => Some(BinOp::Add),
                "-" => Some(BinOp::Sub),
                "*" => Some(BinOp::Mul),
                "/" => Some(BinOp::Div),
                _ => None,
            };
            if let Some(op) = op {
                let args = l[1..].iter().map(num_expr).collect::<R<Vec<_>>>()?;
                return match (op, args.len()) {
                    (BinOp::Sub, 1) => Ok(NumExpr::Neg(Box::new(args.into_iter().next().unwrap()))),
                    (BinOp::Add | BinOp::Mul, n) if n >= 2 => {
                        let mut it = args.into_iter();
                        let first = it.next().unwrap();
                        Ok(it.fold(first, |a, b| NumExpr::Bin(op, Box::new(a), Box::new(b))))
                    }
                    (_, 2) => {
                        let mut it = args.into_iter();
                        let a = it.next().unwrap();
                        let b = it.next().unwrap();
                        Ok(NumExpr::Bin(op, Box::new(a), Box::new(b)))
                    }
                    _ => Err(syntax(format!("wrong operand count for `{head}`"), e)),
                };
            }
            if head == "total-time" && l.len() == 1 {
                return Ok(NumExpr::TotalTime);
            }
            Ok(NumExpr::Fluent(fterm(e)?))
        }
    }
}

fn cmp_op(s: &str) -> Option<CmpOp> {
    match s {
        "<" => Some(CmpOp::Lt),
        "<=" => Some(CmpOp::Le),
        "=" => Some(CmpOp::Eq),
        ">=" => Some(CmpOp::Ge),
        ">" => Some(CmpOp::Gt),
        _ => None,
    }
}

fn assign_op(s: &str) -> Option<AssignOp> {
    match s {
        "assign" => Some(AssignOp::Assign),
        "increase" => Some(AssignOp::Increase),
        "decrease" => Some(AssignOp::Decrease),
        "scale-up" => Some(AssignOp::ScaleUp),
        "scale-down" => Some(AssignOp::ScaleDown),
        _ => None,
    }
}

/// Untimed goal description: a conjunction of literals and comparisons.
fn gd(e: &SExpr, out: &mut Vec<Cond>) -> R<()> {
    let head = e.head().ok_or_else(|| syntax("bad condition", e).expected("condition list"))?;
    let l = e.list().unwrap();
    match head.as_str() {
        "and" => {
            for c in &l[1..] {
                gd(c, out)?;
            }
        }
        "not" => {
            if l.len() != 2 {
                return Err(syntax("`not` takes one argument", e));
            }
            if l[1].head().as_deref().and_then(cmp_op).is_some() {
                return Err(unsupported("negated comparisons", e));
            }
            out.push(Cond::Lit { atom: atom(&l[1])?, positive: false });
        }
        "or" | "imply" | "forall" | "exists" | "preference" => return Err(unsupported(&format!("`{head}` conditions"), e)),
        "at" | "over" if qualifier(l).is_some() => return Err(syntax("temporal qualifier in an untimed context", e)),
        h if cmp_op(h).is_some() => {
            if l.len() != 3 {
                return Err(syntax("comparison takes two operands", e));
            }
            out.push(Cond::Cmp { op: cmp_op(h).unwrap(), lhs: num_expr(&l[1])?, rhs: num_expr(&l[2])? });
        }
        _ => out.push(Cond::Lit { atom: atom(e)?, positive: true }),
    }
    Ok(())
}

fn qualifier(l: &[SExpr]) -> Option<When> {
    let a = l.first()?.sym()?.to_ascii_lowercase();
    let b = l.get(1)?.sym()?.to_ascii_lowercase();
    match (a.as_str(), b.as_str()) {
        ("at", "start") => Some(When::Start),
        ("at", "end") => Some(When::End),
        ("over", "all") => Some(When::OverAll),
        _ => None,
    }
}

fn timed_gd(e: &SExpr, out: &mut Vec<TimedCond>) -> R<()> {
    let l = list(e, "timed condition")?;
    if l.is_empty() {
        return Ok(());
    }
    if e.head().as_deref() == Some("and") {
        for c in &l[1..] {
            timed_gd(c, out)?;
        }
        return Ok(());
    }
    let when = qualifier(l).ok_or_else(|| {
        syntax("condition lacks a temporal qualifier", e).expected("`at start`, `at end` or `over all`")
    })?;
    if l.len() != 3 {
        return Err(syntax("qualified condition takes one argument", e));
    }
    let mut conds = Vec::new();
    gd(&l[2], &mut conds)?;
    out.extend(conds.into_iter().map(|cond| TimedCond { when, cond }));
    Ok(())
}

fn contains_hash_t(e: &SExpr) -> bool {
    match e {
        SExpr::Sym(s, _) => s == "#t",
        SExpr::List(l, _) => l.iter().any(contains_hash_t),
    }
}

fn effect(e: &SExpr, when: When, out: &mut Vec<TimedEffect>) -> R<()> {
    let head = e.head().ok_or_else(|| syntax("bad effect", e).expected("effect list"))?;
    let l = e.list().unwrap();
    match head.as_str() {
        "and" => {
            for c in &l[1..] {
                effect(c, when, out)?;
            }
        }
        "not" => {
            if l.len() != 2 {
                return Err(syntax("`not` takes one argument", e));
            }
            out.push(TimedEffect { when, effect: Effect::Del(atom(&l[1])?) });
        }
        "forall" | "when" => return Err(unsupported(&format!("`{head}` effects"), e)),
        h if assign_op(h).is_some() => {
            if contains_hash_t(e) {
                return Err(unsupported("continuous effects (`#t`)", e));
            }
            if l.len() != 3 {
                return Err(syntax(format!("`{h}` takes two arguments"), e));
            }
            out.push(TimedEffect {
                when,
                effect: Effect::Num { op: assign_op(h).unwrap(), target: fterm(&l[1])?, value: num_expr(&l[2])? },
            });
        }
        _ => out.push(TimedEffect { when, effect: Effect::Add(atom(e)?) }),
    }
    Ok(())
}

fn timed_effect(e: &SExpr, out: &mut Vec<TimedEffect>) -> R<()> {
    let l = list(e, "timed effect")?;
    if l.is_empty() {
        return Ok(());
    }
    if e.head().as_deref() == Some("and") {
        for c in &l[1..] {
            timed_effect(c, out)?;
        }
        return Ok(());
    }
    if e.head().as_deref().and_then(assign_op).is_some() && contains_hash_t(e) {
        return Err(unsupported("continuous effects (`#t`)", e));
    }
    let when = match qualifier(l) {
        Some(When::OverAll) => return Err(unsupported("continuous effects (`over all` effects)", e)),
        Some(w) => w,
        None => return Err(syntax("effect lacks a temporal qualifier", e).expected("`at start` or `at end`")),
    };
    if l.len() != 3 {
        return Err(syntax("qualified effect takes one argument", e));
    }
    effect(&l[2], when, out)
}

fn duration(e: &SExpr, out: &mut Vec<DurationConstraint>) -> R<()> {
    let l = list(e, "duration constraint")?;
    let head = e.head().unwrap_or_default();
    if head == "and" {
        for c in &l[1..] {
            duration(c, out)?;
        }
        return Ok(());
    }
    if head == "at" {
        return Err(unsupported("timed duration constraints", e));
    }
    let op = cmp_op(&head).ok_or_else(|| syntax("bad duration constraint", e).expected("`(= ?duration ...)`"))?;
    if l.len() != 3 || l[1].sym().map(|s| s.to_ascii_lowercase()) != Some("?duration".into()) {
        return Err(syntax("bad duration constraint", e).expected("`(= ?duration ...)`"));
    }
    out.push(DurationConstraint { op, expr: num_expr(&l[2])? });
    Ok(())
}

fn durative_action(e: &SExpr) -> R<Operator> {
    let l = e.list().unwrap();
    let name = ident(l.get(1).ok_or_else(|| syntax("missing action name", e).expected("action name"))?)?;
    let mut op = Operator { name, params: Vec::new(), duration: Vec::new(), conditions: Vec::new(), effects: Vec::new() };
    let mut i = 2;
    let mut saw_duration = false;
    while i < l.len() {
        let key = l[i].sym().map(|s| s.to_ascii_lowercase()).ok_or_else(|| {
            syntax("expected a keyword", &l[i]).expected("`:parameters`, `:duration`, `:condition` or `:effect`")
        })?;
        let val = l.get(i + 1).ok_or_else(|| syntax(format!("missing value for `{key}`"), &l[i]))?;
        match key.as_str() {
            ":parameters" => op.params = typed_list(list(val, "parameter list")?, true)?,
            ":duration" => {
                duration(val, &mut op.duration)?;
                saw_duration = true;
            }
            ":condition" => timed_gd(val, &mut op.conditions)?,
            ":effect" => timed_effect(val, &mut op.effects)?,
            k => {
                return Err(syntax(format!("unknown keyword `{k}`"), &l[i])
                    .expected("`:parameters`, `:duration`, `:condition` or `:effect`"))
            }
        }
        i += 2;
    }
    if !saw_duration {
        return Err(syntax(format!("durative action `{}` has no `:duration`", op.name), e));
    }
    Ok(op)
}

fn define_block<'a>(top: &'a [SExpr], kind: &str, text_end: &SourceSpan) -> R<&'a [SExpr]> {
    let first = top.first().ok_or_else(|| {
        ParseError::new(ParseErrorKind::Syntax, "empty input", SourceSpan { line: 1, column: 1, ..text_end.clone() })
            .expected("`(define ...)`")
    })?;
    if first.head().as_deref() != Some("define") {
        return Err(syntax("expected `(define ...)`", first).expected("`(define ...)`"));
    }
    if let Some(extra) = top.get(1) {
        return Err(syntax("trailing input after `define`", extra));
    }
    let l = first.list().unwrap();
    let h = l.get(1).ok_or_else(|| syntax(format!("missing `({kind} name)`"), first))?;
    if h.head().as_deref() != Some(kind) {
        return Err(syntax(format!("expected `({kind} name)`"), h).expected(format!("`({kind} name)`")));
    }
    Ok(l)
}

fn with_pending<T>(res: R<T>, pending: Option<ParseError>) -> R<T> {
    match (res, pending) {
        (Err(e), _) => Err(e),
        (Ok(_), Some(p)) => Err(p),
        (Ok(v), None) => Ok(v),
    }
}

/// Parses a domain file.
pub fn parse_domain(text: &str) -> R<Domain> {
    let (top, pending) = read(text)?;
    with_pending(domain_from(&top), pending)
}

fn domain_from(top: &[SExpr]) -> R<Domain> {
    let l = define_block(top, "domain", &SourceSpan::default())?;
    let hl = l[1].list().unwrap();
    let name = ident(hl.get(1).ok_or_else(|| syntax("missing domain name", &l[1]))?)?;
    let mut d = Domain {
        name,
        requirements: Vec::new(),
        types: TypeHierarchy::default(),
        constants: Vec::new(),
        predicates: Vec::new(),
        functions: Vec::new(),
        operators: Vec::new(),
    };
    for sec in &l[2..] {
        let head = sec.head().ok_or_else(|| syntax("expected a section", sec).expected("`(:keyword ...)`"))?;
        let items = &sec.list().unwrap()[1..];
        match head.as_str() {
            ":requirements" => {
                for r in items {
                    let s = r.sym().ok_or_else(|| syntax("bad requirement", r))?;
                    d.requirements.push(s.to_ascii_lowercase());
                }
            }
            ":types" => {
                let mut declared = Vec::new();
                for t in typed_list(items, false)? {
                    if t.name.as_str() == "object" {
                        continue;
                    }
                    declared.push(t.name.clone());
                    d.types.parents.insert(t.name, t.ty);
                }
                let parents: Vec<Name> = d.types.parents.values().cloned().collect();
                for p in parents {
                    if p.as_str() != "object" && !d.types.parents.contains_key(&p) {
                        d.types.parents.insert(p, TypeHierarchy::object());
                    }
                }
            }
            ":constants" => d.constants.extend(typed_list(items, false)?),
            ":predicates" => {
                for p in items {
                    let pl = list(p, "predicate declaration")?;
                    let name = ident(pl.first().ok_or_else(|| syntax("empty predicate", p))?)?;
                    d.predicates.push(PredicateDecl { name, params: typed_list(&pl[1..], true)? });
                }
            }
            ":functions" => {
                let mut i = 0;
                while i < items.len() {
                    let f = &items[i];
                    if f.sym() == Some("-") {
                        match items.get(i + 1).and_then(|t| t.sym()) {
                            Some(t) if t.eq_ignore_ascii_case("number") => {}
                            _ => return Err(unsupported("non-numeric function types", f)),
                        }
                        i += 2;
                        continue;
                    }
                    let fl = list(f, "function declaration")?;
                    let name = ident(fl.first().ok_or_else(|| syntax("empty function", f))?)?;
                    d.functions.push(FunctionDecl { name, params: typed_list(&fl[1..], true)? });
                    i += 1;
                }
            }
            ":durative-action" => d.operators.push(durative_action(sec)?),
            ":action" => return Err(unsupported("instantaneous actions (`:action`)", sec)),
            ":derived" => return Err(unsupported("derived predicates (`:derived`)", sec)),
            ":constraints" => return Err(unsupported("trajectory constraints (`:constraints`)", sec)),
            ":process" | ":event" => return Err(unsupported("processes and events", sec)),
            h => return Err(syntax(format!("unknown section `{h}`"), sec)),
        }
    }
    Ok(d)
}

fn ground_args(args: &[SExpr]) -> R<Vec<Name>> {
    args.iter()
        .map(|a| match a.sym() {
            Some(s) if s.starts_with('?') => Err(syntax("variable in a ground context", a).expected("object name")),
            _ => ident(a),
        })
        .collect()
}

fn ground_atom(e: &SExpr) -> R<GroundAtom> {
    let l = list(e, "ground atom")?;
    let pred = ident(l.first().ok_or_else(|| syntax("empty atom", e))?)?;
    Ok(GroundAtom { pred, args: ground_args(&l[1..])? })
}

fn pne(e: &SExpr) -> R<Pne> {
    let l = list(e, "function term")?;
    let func = ident(l.first().ok_or_else(|| syntax("empty function term", e))?)?;
    Ok(Pne { func, args: ground_args(&l[1..])? })
}

fn is_ground_cond(c: &Cond) -> bool {
    fn term_ok(t: &Term) -> bool {
        matches!(t, Term::Obj(_))
    }
    fn expr_ok(e: &NumExpr) -> bool {
        match e {
            NumExpr::Fluent(f) => f.args.iter().all(term_ok),
            NumExpr::Bin(_, a, b) => expr_ok(a) && expr_ok(b),
            NumExpr::Neg(a) => expr_ok(a),
            NumExpr::Duration | NumExpr::TotalTime => false,
            NumExpr::Num(_) => true,
        }
    }
    match c {
        Cond::Lit { atom, .. } => atom.args.iter().all(term_ok),
        Cond::Cmp { lhs, rhs, .. } => expr_ok(lhs) && expr_ok(rhs),
    }
}

/// Folds timed literals into windows: a negative event closes the most recent
/// open positive window on the same atom; otherwise it becomes a negative
/// window of its own.
pub fn normalize_windows(windows: Vec<TimeWindow>) -> Vec<TimeWindow> {
    let mut out: Vec<TimeWindow> = Vec::new();
    for w in windows {
        if let WindowPayload::Atom { atom, positive: false } = &w.payload {
            let open = out.iter_mut().rev().find(|o| {
                matches!(&o.payload, WindowPayload::Atom { atom: a, positive: true } if a == atom)
                    && o.ub.is_infinite()
                    && o.lb < w.lb
            });
            if let Some(o) = open {
                o.ub = w.lb;
                continue;
            }
        }
        out.push(w);
    }
    out
}

/// Parses a problem file. The domain is accepted for symmetry with the
/// checking entry points; symbol resolution happens in the model checks.
pub fn parse_problem(text: &str, _domain: &Domain) -> R<Problem> {
    let (top, pending) = read(text)?;
    with_pending(problem_from(&top), pending)
}

fn problem_from(top: &[SExpr]) -> R<Problem> {
    let l = define_block(top, "problem", &SourceSpan::default())?;
    let hl = l[1].list().unwrap();
    let name = ident(hl.get(1).ok_or_else(|| syntax("missing problem name", &l[1]))?)?;
    let mut p = Problem {
        name,
        domain: Name::new("unknown"),
        objects: Vec::new(),
        init: Vec::new(),
        init_values: Vec::new(),
        windows: Vec::new(),
        goal: Vec::new(),
        metric: Metric::default(),
    };
    let mut raw_windows = Vec::new();
    for sec in &l[2..] {
        let head = sec.head().ok_or_else(|| syntax("expected a section", sec).expected("`(:keyword ...)`"))?;
        let items = &sec.list().unwrap()[1..];
        match head.as_str() {
            ":domain" => p.domain = ident(items.first().ok_or_else(|| syntax("missing domain name", sec))?)?,
            ":requirements" => {}
            ":objects" => p.objects.extend(typed_list(items, false)?),
            ":init" => {
                for it in items {
                    let ih = it.head().ok_or_else(|| syntax("bad init entry", it).expected("atom or assignment"))?;
                    let il = it.list().unwrap();
                    if ih == "=" {
                        if il.len() != 3 {
                            return Err(syntax("assignment takes two arguments", it));
                        }
                        let v = number(&il[2]).ok_or_else(|| syntax("bad value", &il[2]).expected("number"))?;
                        p.init_values.push((pne(&il[1])?, v));
                    } else if ih == "at" && il.len() == 3 && number(&il[1]).is_some() && il[2].list().is_some() {
                        let t = number(&il[1]).unwrap();
                        raw_windows.push(timed_literal(t, &il[2])?);
                    } else if ih == "not" {
                        return Err(syntax("negative literal in the initial state", it));
                    } else {
                        p.init.push(ground_atom(it)?);
                    }
                }
            }
            ":goal" => {
                let g = items.first().ok_or_else(|| syntax("missing goal", sec))?;
                let mut conds = Vec::new();
                gd(g, &mut conds)?;
                if let Some(c) = conds.iter().find(|c| !is_ground_cond(c)) {
                    return Err(syntax(format!("goal is not ground: {c:?}"), g));
                }
                p.goal = conds;
            }
            ":metric" => {
                let dir = items.first().and_then(|d| d.sym()).map(|s| s.to_ascii_lowercase());
                let direction = match dir.as_deref() {
                    Some("minimize") => Direction::Minimize,
                    Some("maximize") => Direction::Maximize,
                    _ => return Err(syntax("bad metric direction", sec).expected("`minimize` or `maximize`")),
                };
                let e = items.get(1).ok_or_else(|| syntax("missing metric expression", sec))?;
                p.metric = Metric { direction, expr: num_expr(e)? };
            }
            ":constraints" => return Err(unsupported("trajectory constraints (`:constraints`)", sec)),
            h => return Err(syntax(format!("unknown section `{h}`"), sec)),
        }
    }
    p.windows = normalize_windows(raw_windows);
    Ok(p)
}

fn timed_literal(t: f64, e: &SExpr) -> R<TimeWindow> {
    let head = e.head().unwrap_or_default();
    let l = e.list().unwrap();
    let payload = if head == "not" {
        if l.len() != 2 {
            return Err(syntax("`not` takes one argument", e));
        }
        WindowPayload::Atom { atom: ground_atom(&l[1])?, positive: false }
    } else if head == "=" || assign_op(&head).is_some() {
        let op = if head == "=" { AssignOp::Assign } else { assign_op(&head).unwrap() };
        if l.len() != 3 {
            return Err(syntax("timed assignment takes two arguments", e));
        }
        let v = number(&l[2]).ok_or_else(|| syntax("bad value", &l[2]).expected("number"))?;
        WindowPayload::Numeric { op, target: pne(&l[1])?, value: v }
    } else {
        WindowPayload::Atom { atom: ground_atom(e)?, positive: true }
    };
    Ok(TimeWindow { lb: t, ub: f64::INFINITY, payload })
}

/// Parses both files into a model.
pub fn parse_model(domain_text: &str, problem_text: &str) -> R<PlanningModel> {
    let d = parse_domain(domain_text)?;
    let p = parse_problem(problem_text, &d)?;
    Ok(PlanningModel::new(d, p))
}

/// Parses `(op arg ...)` into an action identity checked against the
/// operator's arity and parameter types.
pub fn parse_action_literal(text: &str, model: &PlanningModel) -> R<ActionRef> {
    let (top, pending) = read(text)?;
    if let Some(p) = pending {
        return Err(p);
    }
    let e = match top.as_slice() {
        [e] => e,
        _ => {
            return Err(ParseError::new(ParseErrorKind::Syntax, "expected one action literal", SourceSpan::default())
                .expected("`(operator arg ...)`"))
        }
    };
    let l = list(e, "`(operator arg ...)`")?;
    let op = ident(l.first().ok_or_else(|| syntax("empty action", e))?)?;
    let args = ground_args(&l[1..])?;
    let a = ActionRef { op, args };
    check_action(&a, model).map_err(|msg| {
        let kind = if msg.contains("arguments") { ParseErrorKind::Arity } else { ParseErrorKind::UnknownSymbol };
        ParseError::new(kind, msg, e.span().clone())
    })?;
    Ok(a)
}

/// Checks operator existence, arity and argument types.
pub(crate) fn check_action(a: &ActionRef, model: &PlanningModel) -> Result<(), String> {
    let op = model.domain.operator(&a.op).ok_or_else(|| format!("unknown operator `{}`", a.op))?;
    if op.params.len() != a.args.len() {
        return Err(format!(
            "action `{}` expects {} arguments, got {}",
            a.op,
            op.params.len(),
            a.args.len()
        ));
    }
    for (arg, p) in a.args.iter().zip(&op.params) {
        if model.object_type(arg).is_none() {
            return Err(format!("unknown object `{arg}` in action `{}`", a.op));
        }
        if !model.is_object_of_type(arg, &p.ty) {
            return Err(format!("object `{arg}` is not of type `{}` in action `{}`", p.ty, a.op));
        }
    }
    Ok(())
}
