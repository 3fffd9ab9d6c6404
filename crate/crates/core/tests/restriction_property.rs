//! Every plan found for a restricted model is, once normalized, a valid plan
//! of the original model that satisfies the restriction.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xaip_core::pddl::parse_model;
use xaip_core::planner::{solve, PlannerConfig};
use xaip_core::questions::{QuestionSampler, QUESTION_KINDS};
use xaip_core::session::Session;

fn per_type() -> usize {
    std::env::var("XAIP_QUESTIONS_PER_TYPE").ok().and_then(|v| v.parse().ok()).unwrap_or(3)
}

fn sweep(name: &str, seed: u64) {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name);
    let read = |f: &str| std::fs::read_to_string(dir.join(f)).unwrap();
    let model = parse_model(&read("domain.pddl"), &read("problem.pddl")).unwrap();
    let cfg = PlannerConfig::builtin().with_time_budget(30.0);
    let plan = solve(&model, &cfg).best().cloned().expect("fixture is solvable");
    let sampler = QuestionSampler::new(&model, &plan);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut session = Session::new(model.clone());
    let mut solved = 0;
    for kind in QUESTION_KINDS {
        for _ in 0..per_type() {
            let q = sampler.sample(kind, &mut rng).expect("fixture plan supports every kind");
            let t = std::time::Instant::now();
            let id = session.ask(0, &q).unwrap();
            let out = session.plan_node(id, &cfg).unwrap();
            let n = session.node(id).unwrap();
            eprintln!("{name} {kind} {} {:.2}s", out.status, t.elapsed().as_secs_f64());
            if out.is_solved() {
                solved += 1;
                let report = n.report.as_ref().unwrap();
                assert!(report.valid, "{name} `{q}`: {report}");
                assert!(n.checks.as_ref().unwrap().iter().all(|c| c.satisfied), "{name} `{q}` violated");
            }
        }
    }
    assert!(solved > 0, "{name}: no question was solved");
}

#[test]
fn warehouse() {
    sweep("warehouse", 1);
}

#[test]
fn zeno() {
    sweep("zeno", 2);
}

#[test]
fn depots() {
    sweep("depots", 3);
}
