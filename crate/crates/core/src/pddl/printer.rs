//! PDDL text output.

use std::fmt::Write;

use crate::model::*;

/// Integers print without a fractional part; other values use the shortest
/// representation that reads back exactly.
pub fn fmt_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn term(t: &Term) -> String {
    match t {
        Term::Var(v) => format!("?{v}"),
        Term::Obj(o) => o.to_string(),
    }
}

fn app(head: &str, args: impl Iterator<Item = String>) -> String {
    let mut s = format!("({head}");
    for a in args {
        s.push(' ');
        s.push_str(&a);
    }
    s.push(')');
    s
}

fn atom(a: &Atom) -> String {
    app(a.pred.display(), a.args.iter().map(term))
}

fn fterm(f: &FTerm) -> String {
    app(f.func.display(), f.args.iter().map(term))
}

pub(crate) fn expr(e: &NumExpr) -> String {
    match e {
        NumExpr::Num(v) => fmt_num(*v),
        NumExpr::Fluent(f) => fterm(f),
        NumExpr::Duration => "?duration".into(),
        NumExpr::TotalTime => "(total-time)".into(),
        NumExpr::Bin(op, a, b) => format!("({} {} {})", op.symbol(), expr(a), expr(b)),
        NumExpr::Neg(a) => format!("(- {})", expr(a)),
    }
}

pub(crate) fn cond(c: &Cond) -> String {
    match c {
        Cond::Lit { atom: a, positive: true } => atom(a),
        Cond::Lit { atom: a, positive: false } => format!("(not {})", atom(a)),
        Cond::Cmp { op, lhs, rhs } => format!("({} {} {})", op.symbol(), expr(lhs), expr(rhs)),
    }
}

fn qualifier(w: When) -> &'static str {
    match w {
        When::Start => "at start",
        When::OverAll => "over all",
        When::End => "at end",
    }
}

fn effect(e: &Effect) -> String {
    match e {
        Effect::Add(a) => atom(a),
        Effect::Del(a) => format!("(not {})", atom(a)),
        Effect::Num { op, target, value } => format!("({} {} {})", op.keyword(), fterm(target), expr(value)),
    }
}

fn typed(items: &[Typed], var: bool) -> String {
    let mut out = String::new();
    let mut i = 0;
    while i < items.len() {
        let ty = &items[i].ty;
        let mut j = i;
        while j < items.len() && &items[j].ty == ty {
            if !out.is_empty() {
                out.push(' ');
            }
            if var {
                out.push('?');
            }
            out.push_str(items[j].name.display());
            j += 1;
        }
        write!(out, " - {ty}").unwrap();
        i = j;
    }
    out
}

fn ground_atom(a: &GroundAtom) -> String {
    app(a.pred.display(), a.args.iter().map(|x| x.to_string()))
}

fn pne(p: &Pne) -> String {
    app(p.func.display(), p.args.iter().map(|x| x.to_string()))
}

pub fn print_domain(d: &Domain) -> String {
    let mut s = String::new();
    writeln!(s, "(define (domain {})", d.name).unwrap();
    if !d.requirements.is_empty() {
        writeln!(s, "  (:requirements {})", d.requirements.join(" ")).unwrap();
    }
    if !d.types.parents.is_empty() {
        let mut by_parent: std::collections::BTreeMap<&crate::Name, Vec<&crate::Name>> = Default::default();
        for (c, p) in &d.types.parents {
            by_parent.entry(p).or_default().push(c);
        }
        s.push_str("  (:types");
        for (p, cs) in by_parent {
            for c in cs {
                write!(s, " {c}").unwrap();
            }
            write!(s, " - {p}").unwrap();
        }
        s.push_str(")\n");
    }
    if !d.constants.is_empty() {
        writeln!(s, "  (:constants {})", typed(&d.constants, false)).unwrap();
    }
    if !d.predicates.is_empty() {
        s.push_str("  (:predicates\n");
        for p in &d.predicates {
            let params = typed(&p.params, true);
            if params.is_empty() {
                writeln!(s, "    ({})", p.name).unwrap();
            } else {
                writeln!(s, "    ({} {})", p.name, params).unwrap();
            }
        }
        s.push_str("  )\n");
    }
    if !d.functions.is_empty() {
        s.push_str("  (:functions\n");
        for f in &d.functions {
            let params = typed(&f.params, true);
            if params.is_empty() {
                writeln!(s, "    ({}) - number", f.name).unwrap();
            } else {
                writeln!(s, "    ({} {}) - number", f.name, params).unwrap();
            }
        }
        s.push_str("  )\n");
    }
    for op in &d.operators {
        writeln!(s, "  (:durative-action {}", op.name).unwrap();
        writeln!(s, "    :parameters ({})", typed(&op.params, true)).unwrap();
        let durs: Vec<String> =
            op.duration.iter().map(|dc| format!("({} ?duration {})", dc.op.symbol(), expr(&dc.expr))).collect();
        if durs.len() == 1 {
            writeln!(s, "    :duration {}", durs[0]).unwrap();
        } else {
            writeln!(s, "    :duration (and {})", durs.join(" ")).unwrap();
        }
        s.push_str("    :condition (and");
        for c in &op.conditions {
            write!(s, "\n      ({} {})", qualifier(c.when), cond(&c.cond)).unwrap();
        }
        s.push_str(")\n    :effect (and");
        for e in &op.effects {
            write!(s, "\n      ({} {})", qualifier(e.when), effect(&e.effect)).unwrap();
        }
        s.push_str(")\n  )\n");
    }
    s.push_str(")\n");
    s
}

fn window(w: &TimeWindow, out: &mut String) {
    match &w.payload {
        WindowPayload::Atom { atom, positive: true } => {
            writeln!(out, "    (at {} {})", fmt_num(w.lb), ground_atom(atom)).unwrap();
            if w.ub.is_finite() {
                writeln!(out, "    (at {} (not {}))", fmt_num(w.ub), ground_atom(atom)).unwrap();
            }
        }
        WindowPayload::Atom { atom, positive: false } => {
            writeln!(out, "    (at {} (not {}))", fmt_num(w.lb), ground_atom(atom)).unwrap();
        }
        WindowPayload::Numeric { op, target, value } => {
            let head = if *op == AssignOp::Assign { "=" } else { op.keyword() };
            writeln!(out, "    (at {} ({} {} {}))", fmt_num(w.lb), head, pne(target), fmt_num(*value)).unwrap();
        }
    }
}

pub fn print_problem(p: &Problem) -> String {
    let mut s = String::new();
    writeln!(s, "(define (problem {})", p.name).unwrap();
    writeln!(s, "  (:domain {})", p.domain).unwrap();
    if !p.objects.is_empty() {
        writeln!(s, "  (:objects {})", typed(&p.objects, false)).unwrap();
    }
    s.push_str("  (:init\n");
    for a in &p.init {
        writeln!(s, "    {}", ground_atom(a)).unwrap();
    }
    for (f, v) in &p.init_values {
        writeln!(s, "    (= {} {})", pne(f), fmt_num(*v)).unwrap();
    }
    for w in &p.windows {
        window(w, &mut s);
    }
    s.push_str("  )\n  (:goal (and");
    for g in &p.goal {
        write!(s, "\n    {}", cond(g)).unwrap();
    }
    s.push_str("))\n");
    if !p.metric.is_default() {
        let dir = match p.metric.direction {
            Direction::Minimize => "minimize",
            Direction::Maximize => "maximize",
        };
        writeln!(s, "  (:metric {dir} {})", expr(&p.metric.expr)).unwrap();
    }
    s.push_str(")\n");
    s
}

/// Prints the domain and problem of a model.
pub fn print_model(m: &PlanningModel) -> (String, String) {
    (print_domain(&m.domain), print_problem(&m.problem))
}
