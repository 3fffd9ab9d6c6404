//! Acceptance suite P1-P7: one PASS/FAIL line per criterion.
//!
//! P1, P2, P4 and P5 drive the `xaip` binary; P3, P6 and P7 call the library.
//! `XAIP_ACCEPTANCE_SMOKE=1` limits P3 to its 5-per-type subset.

mod micro;

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use xaip_core::compiler::{check_constraint, compile, normalize_plan, FormalQuestion, HModel, TimeDirection};
use xaip_core::pddl::{parse_model, parse_plan, print_model, print_plan};
use xaip_core::planner::{solve, OutcomeStatus, PlannerConfig};
use xaip_core::questions::{QuestionSampler, QUESTION_KINDS};
use xaip_core::session::Session;
use xaip_core::validator::simulate;
use xaip_core::{ActionRef, PlanningModel};

const PER_TYPE: usize = 50;
const SMOKE_PER_TYPE: usize = 5;
const BUDGET: f64 = 30.0;
const MICRO_CASES: usize = 2000;

type Check = Result<String, String>;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn wh(file: &str) -> String {
    fixtures().join("warehouse").join(file).display().to_string()
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn xaip(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_xaip")).args(args).env_remove("XAIP_PLANNER").output().expect("run xaip");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn xaip_ok(args: &[&str]) -> Result<Run, String> {
    let r = xaip(args);
    if r.code == 0 {
        Ok(r)
    } else {
        Err(format!("`xaip {}` exited {}: {}", args.join(" "), r.code, r.stderr.trim()))
    }
}

fn json(r: &Run) -> Result<Value, String> {
    serde_json::from_str(&r.stdout).map_err(|e| format!("bad json output ({e}): {}", r.stdout))
}

fn close(v: &Value, want: f64) -> bool {
    v.as_f64().is_some_and(|x| (x - want).abs() <= 1e-6)
}

fn within(t: Instant, limit: Duration, what: &str) -> Result<f64, String> {
    let e = t.elapsed();
    if e < limit {
        Ok(e.as_secs_f64())
    } else {
        Err(format!("{what} took {:.2}s, limit {}s", e.as_secs_f64(), limit.as_secs()))
    }
}

fn load(name: &str) -> PlanningModel {
    let dir = fixtures().join(name);
    let read = |f: &str| std::fs::read_to_string(dir.join(f)).expect("fixture");
    parse_model(&read("domain.pddl"), &read("problem.pddl")).expect("fixture parses")
}

fn p1() -> Check {
    let t = Instant::now();
    let args = ["validate", "--domain", &wh("domain.pddl"), "--problem", &wh("problem.pddl"), "--plan", &wh("plan_original.plan")];
    let text = xaip_ok(&args)?;
    if !text.stdout.lines().any(|l| l == "makespan: 20.003") {
        return Err(format!("no `makespan: 20.003` line in:\n{}", text.stdout));
    }
    let r = json(&xaip_ok(&[&["--format", "json"], &args[..]].concat())?)?;
    let secs = within(t, Duration::from_secs(1), "validation")?;
    if r["valid"] != Value::Bool(true) || !close(&r["makespan"], 20.003) || !close(&r["metric"], 20.003) {
        return Err(format!("unexpected report {r}"));
    }
    Ok(format!("valid, makespan 20.003, metric 20.003 in {secs:.2}s"))
}

fn p2() -> Check {
    let t = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let s = dir.path().join("p2.json").display().to_string();
    xaip_ok(&["session", "new", "--domain", &wh("domain.pddl"), "--problem", &wh("problem.pddl"), "--out", &s])?;
    let cases: [(&str, &[&str], &str, Option<f64>); 7] = [
        ("add", &["--type", "fq1", "--action", "(load_pallet tom p2 sh6)"], "plan_add.plan", Some(23.502)),
        ("add set_shelf", &["--type", "fq1", "--action", "(set_shelf tom sh4)"], "plan_add_unjustified.plan", Some(23.004)),
        ("add justified", &["--type", "fq1", "--action", "(set_shelf tom sh4)", "--justified"], "plan_add_justified.hplan", Some(29.003)),
        ("remove", &["--type", "fq2", "--action", "(goto_waypoint tom sh1 sh2)"], "plan_remove.plan", Some(23.502)),
        (
            "reorder",
            &["--type", "fq4", "--action", "(unload_pallet jerry p2 sh1)", "--before", "(unload_pallet jerry p1 sh6)"],
            "plan_reorder.hplan",
            Some(27.503),
        ),
        ("window", &["--type", "fq5", "--action", "(unload_pallet jerry p2 sh1)", "--lb", "11", "--ub", "13"], "plan_window.hplan", None),
        (
            "delay",
            &["--type", "fq7", "--action", "(set_shelf tom sh1)", "--t", "8.001", "--offset", "8", "--dir", "after"],
            "plan_delay.hplan",
            None,
        ),
    ];
    let mut seen = Vec::new();
    for (label, ask, file, makespan) in cases {
        let node = xaip_ok(&[&["ask", "--session", &s, "--node", "0"], ask].concat())?.stdout.trim().to_string();
        let r = xaip(&["--format", "json", "validate", "--session", &s, "--node", &node, "--plan", &wh(file)]);
        let v = json(&r)?;
        if r.code != 0 || v["node_report"]["valid"] != Value::Bool(true) || v["original_report"]["valid"] != Value::Bool(true) {
            return Err(format!("{label}: not valid: {}", r.stdout));
        }
        if v["checks"].as_array().is_none_or(|c| c.iter().any(|c| c["satisfied"] != Value::Bool(true))) {
            return Err(format!("{label}: constraint check failed"));
        }
        let got = &v["original_report"]["makespan"];
        if let Some(m) = makespan {
            if !close(got, m) {
                return Err(format!("{label}: makespan {got}, expected {m}"));
            }
        }
        seen.push(format!("{label} {}", xaip_core::pddl::format_time(got.as_f64().unwrap_or(f64::NAN))));
    }
    let secs = within(t, Duration::from_secs(5), "reference plan suite")?;
    Ok(format!("{} in {secs:.2}s", seen.join(", ")))
}

#[derive(Default)]
struct Tally {
    asked: usize,
    solved: usize,
    unsolvable: usize,
    timeouts: usize,
    /// Every HModel asked, when `keep` is set.
    models: Vec<HModel>,
    keep: bool,
}

/// Asks `n` sampled questions of kind `kind` on the root of `session`.
/// Returns an error naming the first violation.
fn sweep(name: &str, session: &mut Session, sampler: &QuestionSampler, kind: &str, rng: &mut ChaCha8Rng, n: usize, t: &mut Tally) -> Result<(), String> {
    let cfg = PlannerConfig::builtin().with_time_budget(BUDGET);
    for _ in 0..n {
        let q = sampler.sample(kind, rng).ok_or_else(|| format!("{name}: cannot generate a {kind} question"))?;
        let id = session.ask(session.root, &q).map_err(|e| format!("{name} `{q}`: {e}"))?;
        let out = session.plan_node(id, &cfg).map_err(|e| format!("{name} `{q}`: {e}"))?;
        t.asked += 1;
        let node = session.node(id).map_err(|e| e.to_string())?;
        if t.keep {
            t.models.push(node.hmodel.clone());
        }
        match out.status {
            _ if out.is_solved() => {}
            OutcomeStatus::ProvenUnsolvable => {
                t.unsolvable += 1;
                continue;
            }
            _ => {
                t.timeouts += 1;
                continue;
            }
        }
        t.solved += 1;
        let hplan = node.hplan.as_ref().ok_or("solved node without a plan")?;
        let plan = normalize_plan(hplan, &node.hmodel).map_err(|e| format!("{name} `{q}`: {e}"))?;
        let r = simulate(&session.original, &plan);
        if !r.valid {
            return Err(format!("{name} `{q}`: normalized plan invalid on the original model:\n{r}\n{}", print_plan(&plan)));
        }
        let asked = &node.hmodel.provenance.last().ok_or("no provenance")?.question;
        if !check_constraint(asked, &plan, &session.original) {
            return Err(format!("{name} `{q}`: constraint not satisfied by\n{}", print_plan(&plan)));
        }
    }
    Ok(())
}

/// P3, collecting the smoke-subset HModels for P7.
fn p3(smoke_only: bool, smoke_models: &mut Vec<HModel>) -> Check {
    let t0 = Instant::now();
    let mut smoke = Tally { keep: true, ..Tally::default() };
    let mut rest = Tally::default();
    let mut state = Vec::new();
    for (f, name) in ["warehouse", "zeno", "depots"].into_iter().enumerate() {
        let model = load(name);
        let base = solve(&model, &PlannerConfig::builtin().with_time_budget(BUDGET));
        let plan = base.best().cloned().ok_or_else(|| format!("{name}: fixture not solved ({})", base.status))?;
        state.push((name, Session::new(model.clone()), model, plan, f as u64));
    }
    let mut rngs = Vec::new();
    for (name, session, model, plan, f) in state.iter_mut() {
        let sampler = QuestionSampler::new(model, plan);
        for (k, kind) in QUESTION_KINDS.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 * *f + k as u64);
            sweep(name, session, &sampler, kind, &mut rng, SMOKE_PER_TYPE, &mut smoke)?;
            rngs.push(rng);
        }
    }
    let smoke_secs = within(t0, Duration::from_secs(120), "smoke subset")?;
    smoke_models.append(&mut smoke.models);
    let summary = |t: &Tally| format!("{} asked, {} solved, {} proven unsolvable, {} timed out", t.asked, t.solved, t.unsolvable, t.timeouts);
    if smoke_only {
        return Ok(format!("smoke {SMOKE_PER_TYPE}/type: {} in {smoke_secs:.1}s, 0 violations", summary(&smoke)));
    }
    let mut rngs = rngs.into_iter();
    for (name, session, model, plan, _) in state.iter_mut() {
        let sampler = QuestionSampler::new(model, plan);
        for kind in QUESTION_KINDS {
            let mut rng = rngs.next().expect("one rng per kind");
            sweep(name, session, &sampler, kind, &mut rng, PER_TYPE - SMOKE_PER_TYPE, &mut rest)?;
        }
    }
    let secs = within(t0, Duration::from_secs(1800), "full sweep")?;
    let all = Tally {
        asked: smoke.asked + rest.asked,
        solved: smoke.solved + rest.solved,
        unsolvable: smoke.unsolvable + rest.unsolvable,
        timeouts: smoke.timeouts + rest.timeouts,
        ..Tally::default()
    };
    Ok(format!("{PER_TYPE}/type x 3 fixtures: {} in {secs:.1}s (smoke subset {smoke_secs:.1}s), 0 violations", summary(&all)))
}

fn p4() -> Check {
    let t = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let s = dir.path().join("p4.json").display().to_string();
    xaip_ok(&["session", "new", "--domain", &wh("domain.pddl"), "--problem", &wh("problem.pddl"), "--out", &s])?;
    let chain: [&[&str]; 5] = [
        &["--type", "fq1", "--action", "(load_pallet tom p2 sh6)"],
        &["--type", "fq5", "--action", "(load_pallet tom p2 sh6)", "--lb", "10", "--ub", "20"],
        &["--type", "fq7", "--action", "(goto_waypoint jerry sh3 sh4)", "--t", "2.002", "--offset", "1", "--dir", "after"],
        &["--type", "fq2", "--action", "(goto_waypoint tom sh1 sh2)"],
        &["--type", "fq4", "--action", "(set_shelf tom sh1)", "--before", "(goto_waypoint jerry sh4 sh5)"],
    ];
    let mut node = "0".to_string();
    for (depth, ask) in chain.iter().enumerate() {
        node = xaip_ok(&[&["ask", "--session", &s, "--node", &node], *ask].concat())?.stdout.trim().to_string();
        xaip_ok(&["plan", "--session", &s, "--node", &node])?;
        let shown = json(&xaip_ok(&["--format", "json", "session", "show", "--session", &s, "--node", &node, "--model"])?)?;
        let (d, p) = (shown["domain_text"].as_str().unwrap_or_default(), shown["problem_text"].as_str().unwrap_or_default());
        let session = Session::load(Path::new(&s)).map_err(|e| e.to_string())?;
        let n = session.node(node.parse().map_err(|_| "bad node id")?).map_err(|e| e.to_string())?;
        let reparsed = parse_model(d, p).map_err(|e| format!("depth {}: printed model does not parse: {e}", depth + 1))?;
        if reparsed != n.hmodel.model {
            return Err(format!("depth {}: printed model parses to a different model", depth + 1));
        }
        let hplan = n.hplan.as_ref().ok_or(format!("depth {}: no plan", depth + 1))?;
        let file = dir.path().join(format!("d{}.plan", depth + 1));
        std::fs::write(&file, print_plan(hplan)).map_err(|e| e.to_string())?;
        let v = json(&xaip_ok(&["--format", "json", "validate", "--session", &s, "--node", &node, "--plan", &file.display().to_string()])?)?;
        let checks = v["checks"].as_array().map(Vec::len).unwrap_or(0);
        if checks != depth + 1 || v["valid"] != Value::Bool(true) {
            return Err(format!("depth {}: provenance checks failed: {v}", depth + 1));
        }
    }
    xaip_ok(&["session", "load", "--session", &s])?;
    Ok(format!("5 stacked restrictions printed, re-parsed, solved and checked in {:.2}s", t.elapsed().as_secs_f64()))
}

fn p5() -> Check {
    let t = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let s = dir.path().join("p5.json").display().to_string();
    xaip_ok(&["session", "new", "--domain", &wh("domain.pddl"), "--problem", &wh("problem.pddl"), "--out", &s])?;
    let node = xaip_ok(&["ask", "--session", &s, "--node", "0", "--type", "fq6", "--action", "(unload_pallet jerry p2 sh1)", "--lb", "11", "--ub", "13"])?;
    let node = node.stdout.trim().to_string();
    let r = xaip(&["plan", "--session", &s, "--node", &node, "--timeout", "30"]);
    if r.code != 3 {
        return Err(format!("planning exited {}, expected 3 (no plan): {}", r.code, r.stdout));
    }
    let session = Session::load(Path::new(&s)).map_err(|e| format!("session corrupted: {e}"))?;
    let n = session.node(node.parse().map_err(|_| "bad node id")?).map_err(|e| e.to_string())?;
    let status = n.outcome.as_ref().map(|o| o.status.to_string()).unwrap_or_default();
    if n.plan.is_some() || !(status == "proven-unsolvable" || status == "timeout-no-plan") {
        return Err(format!("failure not recorded (status `{status}`)"));
    }
    xaip_ok(&["session", "load", "--session", &s])?;
    let next = xaip_ok(&["ask", "--session", &s, "--node", "0", "--type", "fq2", "--action", "(goto_waypoint tom sh1 sh2)"])?;
    xaip_ok(&["plan", "--session", &s, "--node", next.stdout.trim()])?;
    let secs = within(t, Duration::from_secs(35), "unsolvability check")?;
    Ok(format!("no plan ({status}), tree intact and still usable, {secs:.2}s"))
}

fn p6() -> Check {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut valid, mut invalid) = (0, 0);
    for case in 0..MICRO_CASES {
        let (m, steps) = micro::generate(&mut rng);
        let (d, p) = micro::pddl(&m);
        let text = micro::plan_text(&steps);
        let model = parse_model(&d, &p).map_err(|e| format!("case {case}: {e}\n{d}\n{p}"))?;
        let plan = parse_plan(&text, &model).map_err(|e| format!("case {case}: {e}\n{text}"))?;
        let lib = simulate(&model, &plan);
        let oracle = micro::check(&m, &steps);
        if lib.valid != oracle {
            return Err(format!("case {case}: simulate says {}, oracle says {oracle}\n{d}\n{p}\n{text}\n{lib}", lib.valid));
        }
        if oracle {
            valid += 1;
        } else {
            invalid += 1;
        }
    }
    let secs = within(t, Duration::from_secs(120), "oracle comparison")?;
    Ok(format!("{MICRO_CASES} micro-models agree ({valid} valid, {invalid} invalid) in {secs:.2}s"))
}

/// The question each restricted-model reference plan answers.
fn plan_question(file: &str) -> Option<FormalQuestion> {
    let a = |op: &str, args: &[&str]| ActionRef::new(op, args);
    Some(match file {
        "plan_add_justified.hplan" => FormalQuestion::AddAction { action: a("set_shelf", &["tom", "sh4"]), justified: true },
        "plan_reorder.hplan" => FormalQuestion::Reorder {
            edges: vec![(a("unload_pallet", &["jerry", "p2", "sh1"]), a("unload_pallet", &["jerry", "p1", "sh6"]))],
        },
        "plan_window.hplan" => FormalQuestion::ForbidOutsideWindow { action: a("unload_pallet", &["jerry", "p2", "sh1"]), lb: 11.0, ub: 13.0 },
        "plan_delay.hplan" => {
            FormalQuestion::DelayAdvance { action: a("set_shelf", &["tom", "sh1"]), t: 8.001, offset: 8.0, direction: TimeDirection::After }
        }
        _ => return None,
    })
}

fn p7(hmodels: &[HModel]) -> Check {
    let mut n = 0;
    for name in ["warehouse", "zeno", "depots"] {
        let m = load(name);
        let (d, p) = print_model(&m);
        if parse_model(&d, &p).map_err(|e| format!("{name}: {e}"))? != m {
            return Err(format!("{name}: model changed across print and parse"));
        }
        n += 1;
        let dir = fixtures().join(name);
        let mut files: Vec<_> = std::fs::read_dir(&dir).map_err(|e| e.to_string())?.flatten().map(|e| e.path()).collect();
        files.sort();
        for f in &files {
            let file = f.file_name().and_then(|x| x.to_str()).unwrap_or_default();
            let vocabulary = match f.extension().and_then(|e| e.to_str()) {
                Some("plan") => m.clone(),
                Some("hplan") => {
                    let q = plan_question(file).ok_or(format!("{file}: no question known for this plan"))?;
                    compile(&m, &q).map_err(|e| format!("{file}: {e}"))?.model
                }
                _ => continue,
            };
            let text = std::fs::read_to_string(f).map_err(|e| e.to_string())?;
            let plan = parse_plan(&text, &vocabulary).map_err(|e| format!("{file}: {e}"))?;
            if parse_plan(&print_plan(&plan), &vocabulary).map_err(|e| format!("{file}: {e}"))? != plan {
                return Err(format!("{file}: plan changed across print and parse"));
            }
            n += 1;
        }
    }
    if hmodels.is_empty() {
        return Err("no HModels from the P3 smoke subset".into());
    }
    for (i, h) in hmodels.iter().enumerate() {
        let (d, p) = print_model(&h.model);
        let again = parse_model(&d, &p).map_err(|e| format!("smoke HModel {i}: {e}"))?;
        if again != h.model {
            return Err(format!("smoke HModel {i} ({}) changed across print and parse", h.provenance.last().map(|r| r.question.to_string()).unwrap_or_default()));
        }
    }
    Ok(format!("{n} fixture files and {} smoke HModels round-trip", hmodels.len()))
}

fn main() -> ExitCode {
    let smoke = std::env::var("XAIP_ACCEPTANCE_SMOKE").is_ok_and(|v| v != "0" && !v.is_empty());
    let mut hmodels = Vec::new();
    let p3_result = p3(smoke, &mut hmodels);
    let results: Vec<(&str, &str, Check)> = vec![
        ("P1", "fixture validation", p1()),
        ("P2", "reference plan suite", p2()),
        ("P3", "restriction property", p3_result),
        ("P4", "stacked restrictions", p4()),
        ("P5", "unsolvability surfacing", p5()),
        ("P6", "validator oracle equivalence", p6()),
        ("P7", "round trip", p7(&hmodels)),
    ];
    let mut failed = 0;
    for (id, name, r) in &results {
        match r {
            Ok(msg) => println!("{id} PASS {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("{id} FAIL {name}: {msg}");
            }
        }
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
