//! Planning-time comparison: original model against restricted models.
//!
//! For each fixture and question type, samples questions from the fixture's
//! plan, plans the restricted model with the configured planner and prints
//! one row per question plus the median time increase per type.
//!
//! ```text
//! XAIP_PLANNER='exec:optic {domain} {problem}' \
//!     cargo run --release -p xaip-cli --example planning_time -- 10
//! ```
//!
//! Arguments: questions per type (default 5), then fixture directories
//! (default: the bundled warehouse, zeno and depots).

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xaip_core::compiler::compile;
use xaip_core::pddl::parse_model;
use xaip_core::planner::{solve, PlannerConfig, PLANNER_ENV};
use xaip_core::questions::{QuestionSampler, QUESTION_KINDS};

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

fn main() {
    let mut args = std::env::args().skip(1);
    let per_type: usize = args.next().map(|a| a.parse().expect("questions per type")).unwrap_or(5);
    let mut dirs: Vec<PathBuf> = args.map(PathBuf::from).collect();
    if dirs.is_empty() {
        let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures");
        dirs = ["warehouse", "zeno", "depots"].iter().map(|n| root.join(n)).collect();
    }
    if std::env::var_os(PLANNER_ENV).is_none() {
        eprintln!("note: ${PLANNER_ENV} is unset; timing the built-in planner");
    }
    let cfg = PlannerConfig::from_env();
    println!("planner: {}", cfg.label());
    println!("{:<10} {:<4} {:>9} {:>9} {:>9} {:<18} question", "fixture", "type", "orig s", "hmodel s", "delta s", "status");
    let mut deltas: Vec<Vec<f64>> = vec![Vec::new(); QUESTION_KINDS.len()];
    for (f, dir) in dirs.iter().enumerate() {
        let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let read = |file: &str| std::fs::read_to_string(dir.join(file)).unwrap_or_else(|e| panic!("{}: {e}", dir.join(file).display()));
        let model = parse_model(&read("domain.pddl"), &read("problem.pddl")).unwrap_or_else(|e| panic!("{name}: {e}"));
        let base = solve(&model, &cfg);
        let Some(plan) = base.best().cloned() else {
            println!("{name:<10} original model not solved ({})", base.status);
            continue;
        };
        let sampler = QuestionSampler::new(&model, &plan);
        for (k, kind) in QUESTION_KINDS.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 * f as u64 + k as u64);
            for _ in 0..per_type {
                let Some(q) = sampler.sample(kind, &mut rng) else { break };
                let h = match compile(&model, &q) {
                    Ok(h) => h,
                    Err(e) => {
                        println!("{name:<10} {kind:<4} compile error: {e}");
                        continue;
                    }
                };
                let out = solve(&h.model, &cfg);
                let delta = out.wall_time - base.wall_time;
                if out.is_solved() {
                    deltas[k].push(delta);
                }
                println!(
                    "{name:<10} {kind:<4} {:>9.3} {:>9.3} {:>+9.3} {:<18} {q}",
                    base.wall_time,
                    out.wall_time,
                    delta,
                    out.status.to_string()
                );
            }
        }
    }
    println!("\nmedian increase over solved restricted models:");
    for (kind, d) in QUESTION_KINDS.iter().zip(deltas) {
        let n = d.len();
        match median(d) {
            Some(m) => println!("{kind}: {m:+.3} s over {n}"),
            None => println!("{kind}: none solved"),
        }
    }
}
