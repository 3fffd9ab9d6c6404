//! Every bundled fixture parses, round-trips through the printer, and is
//! solved by the built-in planner with a plan the validator accepts.

use std::path::PathBuf;

use xaip_core::pddl::{parse_model, print_model};
use xaip_core::planner::{solve, PlannerConfig};
use xaip_core::validator::simulate;

fn load(name: &str) -> (String, String) {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name);
    (
        std::fs::read_to_string(dir.join("domain.pddl")).unwrap(),
        std::fs::read_to_string(dir.join("problem.pddl")).unwrap(),
    )
}

fn check(name: &str) {
    let (d, p) = load(name);
    let model = parse_model(&d, &p).unwrap();
    let (d2, p2) = print_model(&model);
    let again = parse_model(&d2, &p2).unwrap();
    assert_eq!(again, model, "{name} round trip");
    let out = solve(&model, &PlannerConfig::builtin().with_time_budget(30.0));
    assert!(out.is_solved(), "{name}: {}\n{}", out.status, out.log);
    for plan in &out.plans {
        let r = simulate(&model, plan);
        assert!(r.valid, "{name}: {r}");
    }
}

#[test]
fn warehouse() {
    check("warehouse");
}

#[test]
fn zeno() {
    check("zeno");
}

#[test]
fn depots() {
    check("depots");
}
