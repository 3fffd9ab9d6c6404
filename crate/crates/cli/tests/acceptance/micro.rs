//! Random micro-models and a brute-force happening checker.
//!
//! The checker works on its own representation and shares nothing with the
//! library validator. At each happening it enumerates every serialization of
//! the happening's events (by dynamic programming over event subsets): each
//! event's conditions must hold when it fires and all orders must end in the
//! same state. Numeric fluents follow the no-moving-targets rule. Happenings
//! closer than ε are also serialized together from the earlier one's state.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write;

use rand::seq::SliceRandom;
use rand::Rng;

const EPS: f64 = 0.001;
const TOL: f64 = 1e-6;
const MAX_ATOMS: usize = 20;

type Atom = (usize, Vec<usize>);

#[derive(Debug, Clone)]
pub struct Lit {
    pred: usize,
    /// Parameter positions.
    args: Vec<usize>,
    pos: bool,
}

#[derive(Debug, Clone)]
pub struct Op {
    params: usize,
    dur: f64,
    pre_start: Vec<Lit>,
    over: Vec<Lit>,
    pre_end: Vec<Lit>,
    eff_start: Vec<Lit>,
    eff_end: Vec<Lit>,
    /// `(<= (c) k)` at start.
    cap: Option<i64>,
    inc_start: bool,
    inc_end: bool,
}

#[derive(Debug, Clone)]
pub struct Micro {
    objects: usize,
    arity: Vec<usize>,
    counter: bool,
    ops: Vec<Op>,
    init: BTreeSet<Atom>,
    goal: Vec<Atom>,
}

#[derive(Debug, Clone)]
pub struct Step {
    op: usize,
    args: Vec<usize>,
    start: f64,
    dur: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct St {
    atoms: BTreeSet<Atom>,
    c: i64,
}

#[derive(Debug, Clone, Copy)]
struct Ev {
    step: usize,
    end: bool,
}

fn all_atoms(m: &Micro) -> Vec<Atom> {
    let mut out = Vec::new();
    for (p, &a) in m.arity.iter().enumerate() {
        let mut tuple = vec![0; a];
        loop {
            out.push((p, tuple.clone()));
            let mut i = 0;
            while i < a {
                tuple[i] += 1;
                if tuple[i] < m.objects {
                    break;
                }
                tuple[i] = 0;
                i += 1;
            }
            if i == a {
                break;
            }
        }
    }
    out
}

fn lit<R: Rng>(rng: &mut R, arity: &[usize], params: usize) -> Option<Lit> {
    let usable: Vec<usize> = (0..arity.len()).filter(|&p| arity[p] == 0 || params > 0).collect();
    let &pred = usable.choose(rng)?;
    let args = (0..arity[pred]).map(|_| rng.gen_range(0..params)).collect();
    Some(Lit { pred, args, pos: rng.gen_bool(0.7) })
}

fn lits<R: Rng>(rng: &mut R, arity: &[usize], params: usize, max: usize) -> Vec<Lit> {
    (0..rng.gen_range(0..=max)).filter_map(|_| lit(rng, arity, params)).collect()
}

/// A random model and schedule. Initial state and goal are often fitted to
/// the schedule so that valid cases are common.
pub fn generate<R: Rng>(rng: &mut R) -> (Micro, Vec<Step>) {
    let objects: usize = rng.gen_range(1..=6);
    let mut arity = Vec::new();
    let mut atoms = 0;
    for _ in 0..rng.gen_range(1..=4) {
        let a = rng.gen_range(0..=2);
        let a = (0..=a).rev().find(|&k| atoms + objects.pow(k as u32) <= MAX_ATOMS).unwrap_or(0);
        atoms += objects.pow(a as u32);
        arity.push(a);
    }
    let counter = rng.gen_bool(0.4);
    let ops = (0..rng.gen_range(1..=4))
        .map(|_| {
            let params = rng.gen_range(0..=2);
            Op {
                params,
                dur: *[0.5, 1.0, 1.5, 2.0, 3.0].choose(rng).unwrap(),
                pre_start: lits(rng, &arity, params, 2),
                over: lits(rng, &arity, params, 1),
                pre_end: lits(rng, &arity, params, 1),
                eff_start: lits(rng, &arity, params, 2),
                eff_end: lits(rng, &arity, params, 2),
                cap: (counter && rng.gen_bool(0.3)).then(|| rng.gen_range(0..=2)),
                inc_start: counter && rng.gen_bool(0.2),
                inc_end: counter && rng.gen_bool(0.3),
            }
        })
        .collect::<Vec<_>>();
    let mut m = Micro { objects, arity, counter, ops, init: BTreeSet::new(), goal: vec![] };
    let universe = all_atoms(&m);
    m.init = universe.iter().filter(|_| rng.gen_bool(0.4)).cloned().collect();

    let mut steps: Vec<Step> = (0..rng.gen_range(1..=5))
        .map(|_| {
            let op = rng.gen_range(0..m.ops.len());
            let base: f64 = *[0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0].choose(rng).unwrap();
            let jitter: f64 = *[0.0, 0.0, 0.0, 0.0005, 0.001, 0.0015].choose(rng).unwrap();
            let mut dur = m.ops[op].dur;
            if rng.gen_bool(0.05) {
                dur += 0.5;
            }
            Step { op, args: (0..m.ops[op].params).map(|_| rng.gen_range(0..objects)).collect(), start: base + jitter, dur }
        })
        .collect();
    steps.sort_by(|a, b| a.start.total_cmp(&b.start));

    if rng.gen_bool(0.6) {
        // Make start conditions hold initially where nothing earlier decided them.
        let mut fixed = BTreeSet::new();
        for s in &steps {
            for l in &m.ops[s.op].pre_start {
                let a = ground(l, &s.args);
                if fixed.insert(a.clone()) {
                    if l.pos {
                        m.init.insert(a);
                    } else {
                        m.init.remove(&a);
                    }
                }
            }
            for l in m.ops[s.op].eff_start.iter().chain(&m.ops[s.op].eff_end) {
                fixed.insert(ground(l, &s.args));
            }
        }
    }
    let reached = run(&m, &steps).map(|s| s.atoms.into_iter().collect::<Vec<_>>()).unwrap_or_default();
    let pool = if !reached.is_empty() && rng.gen_bool(0.7) { reached } else { universe };
    m.goal = (0..rng.gen_range(1..=2)).map(|_| pool.choose(rng).unwrap().clone()).collect();
    (m, steps)
}

fn ground(l: &Lit, args: &[usize]) -> Atom {
    (l.pred, l.args.iter().map(|&i| args[i]).collect())
}

fn holds(l: &Lit, args: &[usize], s: &St) -> bool {
    s.atoms.contains(&ground(l, args)) == l.pos
}

fn conds_hold(m: &Micro, steps: &[Step], e: Ev, s: &St) -> bool {
    let st = &steps[e.step];
    let op = &m.ops[st.op];
    if e.end {
        op.pre_end.iter().all(|l| holds(l, &st.args, s))
    } else {
        op.pre_start.iter().all(|l| holds(l, &st.args, s)) && op.cap.is_none_or(|k| s.c <= k)
    }
}

fn apply(m: &Micro, steps: &[Step], e: Ev, s: &St) -> St {
    let st = &steps[e.step];
    let op = &m.ops[st.op];
    let (effs, inc) = if e.end { (&op.eff_end, op.inc_end) } else { (&op.eff_start, op.inc_start) };
    let mut out = s.clone();
    for l in effs.iter().filter(|l| !l.pos) {
        out.atoms.remove(&ground(l, &st.args));
    }
    for l in effs.iter().filter(|l| l.pos) {
        out.atoms.insert(ground(l, &st.args));
    }
    if inc {
        out.c += 1;
    }
    out
}

/// No event may write the counter while an event of another action reads or writes it.
fn no_moving_targets(m: &Micro, steps: &[Step], evs: &[Ev]) -> bool {
    let writes = |e: &Ev| {
        let op = &m.ops[steps[e.step].op];
        if e.end { op.inc_end } else { op.inc_start }
    };
    let reads = |e: &Ev| !e.end && m.ops[steps[e.step].op].cap.is_some();
    for (i, a) in evs.iter().enumerate() {
        for b in &evs[i + 1..] {
            if a.step != b.step && ((writes(a) && (writes(b) || reads(b))) || (writes(b) && reads(a))) {
                return false;
            }
        }
    }
    true
}

/// The common result of every serialization of `evs` from `s0`, if all succeed and agree.
fn serialize(m: &Micro, steps: &[Step], evs: &[Ev], s0: &St) -> Option<St> {
    if !no_moving_targets(m, steps, evs) {
        return None;
    }
    let n = evs.len();
    let mut states: HashMap<u32, St> = HashMap::from([(0, s0.clone())]);
    let mut masks: Vec<u32> = (0..1u32 << n).collect();
    masks.sort_by_key(|k| k.count_ones());
    for mask in masks {
        let Some(s) = states.get(&mask).cloned() else { continue };
        for (i, &e) in evs.iter().enumerate() {
            if mask & (1 << i) != 0 {
                continue;
            }
            if !conds_hold(m, steps, e, &s) {
                return None;
            }
            let next = apply(m, steps, e, &s);
            match states.get(&(mask | 1 << i)) {
                Some(prev) if *prev != next => return None,
                Some(_) => {}
                None => {
                    states.insert(mask | 1 << i, next);
                }
            }
        }
    }
    states.remove(&((1u32 << n) - 1))
}

/// Executes the schedule; the final state when every happening succeeds.
fn run(m: &Micro, steps: &[Step]) -> Option<St> {
    for s in steps {
        if (s.dur - m.ops[s.op].dur).abs() > TOL {
            return None;
        }
    }
    let mut evs: Vec<(f64, Ev)> = Vec::new();
    for (i, s) in steps.iter().enumerate() {
        evs.push((s.start, Ev { step: i, end: false }));
        evs.push((s.start + s.dur, Ev { step: i, end: true }));
    }
    evs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut haps: Vec<(f64, Vec<Ev>)> = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for (t, e) in evs {
        match haps.last_mut() {
            Some(h) if t - last <= TOL => h.1.push(e),
            _ => haps.push((t, vec![e])),
        }
        last = t;
    }
    let mut state = St { atoms: m.init.clone(), c: 0 };
    let mut befores: Vec<St> = Vec::new();
    for (k, (t, group)) in haps.iter().enumerate() {
        let after = serialize(m, steps, group, &state)?;
        for j in (0..k).rev() {
            let (tj, gj) = &haps[j];
            if t - tj >= EPS - TOL {
                break;
            }
            let mut merged = gj.clone();
            merged.extend(group.iter().filter(|e| !gj.iter().any(|p| p.step == e.step)));
            serialize(m, steps, &merged, &befores[j])?;
        }
        for s in steps {
            if s.start <= t + TOL && s.start + s.dur > t + TOL && !m.ops[s.op].over.iter().all(|l| holds(l, &s.args, &after)) {
                return None;
            }
        }
        befores.push(state);
        state = after;
    }
    Some(state)
}

/// Valid iff every happening executes and the goal holds at the end.
pub fn check(m: &Micro, steps: &[Step]) -> bool {
    run(m, steps).is_some_and(|s| m.goal.iter().all(|a| s.atoms.contains(a)))
}

fn atom_text(a: &Atom) -> String {
    let mut s = format!("(p{}", a.0);
    for o in &a.1 {
        write!(s, " o{o}").unwrap();
    }
    s + ")"
}

fn lit_text(l: &Lit) -> String {
    let mut s = format!("(p{}", l.pred);
    for i in &l.args {
        write!(s, " ?x{i}").unwrap();
    }
    s.push(')');
    if l.pos { s } else { format!("(not {s})") }
}

/// Domain and problem text.
pub fn pddl(m: &Micro) -> (String, String) {
    let mut d = String::from("(define (domain micro)\n  (:requirements :typing :durative-actions :negative-preconditions");
    if m.counter {
        d.push_str(" :numeric-fluents");
    }
    d.push_str(")\n  (:types obj)\n  (:predicates");
    for (p, &a) in m.arity.iter().enumerate() {
        write!(d, " (p{p}").unwrap();
        for i in 0..a {
            write!(d, " ?x{i} - obj").unwrap();
        }
        d.push(')');
    }
    d.push_str(")\n");
    if m.counter {
        d.push_str("  (:functions (c))\n");
    }
    for (k, op) in m.ops.iter().enumerate() {
        write!(d, "  (:durative-action a{k}\n    :parameters (").unwrap();
        for i in 0..op.params {
            write!(d, "{}?x{i} - obj", if i > 0 { " " } else { "" }).unwrap();
        }
        write!(d, ")\n    :duration (= ?duration {})\n    :condition (and", op.dur).unwrap();
        for (q, ls) in [("at start", &op.pre_start), ("over all", &op.over), ("at end", &op.pre_end)] {
            for l in ls {
                write!(d, " ({q} {})", lit_text(l)).unwrap();
            }
        }
        if let Some(k) = op.cap {
            write!(d, " (at start (<= (c) {k}))").unwrap();
        }
        d.push_str(")\n    :effect (and");
        for (q, ls) in [("at start", &op.eff_start), ("at end", &op.eff_end)] {
            for l in ls {
                write!(d, " ({q} {})", lit_text(l)).unwrap();
            }
        }
        if op.inc_start {
            d.push_str(" (at start (increase (c) 1))");
        }
        if op.inc_end {
            d.push_str(" (at end (increase (c) 1))");
        }
        d.push_str("))\n");
    }
    d.push_str(")\n");
    let mut p = String::from("(define (problem m) (:domain micro)\n  (:objects");
    for o in 0..m.objects {
        write!(p, " o{o}").unwrap();
    }
    p.push_str(" - obj)\n  (:init");
    for a in &m.init {
        write!(p, " {}", atom_text(a)).unwrap();
    }
    if m.counter {
        p.push_str(" (= (c) 0)");
    }
    p.push_str(")\n  (:goal (and");
    for a in &m.goal {
        write!(p, " {}", atom_text(a)).unwrap();
    }
    p.push_str(")))\n");
    (d, p)
}

pub fn plan_text(steps: &[Step]) -> String {
    let mut s = String::new();
    for st in steps {
        write!(s, "{:.4}: (a{}", st.start, st.op).unwrap();
        for o in &st.args {
            write!(s, " o{o}").unwrap();
        }
        writeln!(s, ") [{}]", st.dur).unwrap();
    }
    s
}
