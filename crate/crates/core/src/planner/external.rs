//! Runs an external PDDL2.1 planner and scans its output for plans.
//!
//! The command template may contain `{domain}` and `{problem}`; when absent
//! the two file paths are appended. Planners that print improving plans in
//! sequence yield one candidate per plan block.

use std::io::Read;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use super::{keep_valid, Clock, Extraction, OutcomeStatus, PlannerConfig, PlanningOutcome};
use crate::model::PlanningModel;
use crate::pddl::{print_model, scan_plans};

/// Time allowed for a killed process to be reaped.
const GRACE: Duration = Duration::from_secs(5);

fn command_line(template: &str, domain: &str, problem: &str) -> String {
    if template.contains("{domain}") || template.contains("{problem}") {
        template.replace("{domain}", domain).replace("{problem}", problem)
    } else {
        format!("{template} {domain} {problem}")
    }
}

fn failed(label: String, log: String) -> PlanningOutcome {
    PlanningOutcome { status: OutcomeStatus::PlannerError, plans: vec![], wall_time: 0.0, planner: label, stats: None, log }
}

/// Kills the planner and everything it spawned.
fn kill_group(child: &mut std::process::Child) {
    #[cfg(unix)]
    {
        let _ = Command::new("kill").arg("-KILL").arg("--").arg(format!("-{}", child.id())).status();
    }
    let _ = child.kill();
}

pub(super) fn solve(model: &PlanningModel, cfg: &PlannerConfig, clock: Clock) -> PlanningOutcome {
    let PlannerConfig::External { command, timeout, extraction, keep_files } = cfg else {
        unreachable!("external solve needs an external config")
    };
    let label = cfg.label();
    let dir = match tempfile::Builder::new().prefix("xaip-planner-").tempdir() {
        Ok(d) => d,
        Err(e) => return failed(label, format!("cannot create workspace: {e}")),
    };
    let (d, p) = print_model(model);
    let dp = dir.path().join("domain.pddl");
    let pp = dir.path().join("problem.pddl");
    if let Err(e) = std::fs::write(&dp, d).and_then(|_| std::fs::write(&pp, p)) {
        return failed(label, format!("cannot write model files: {e}"));
    }
    let line = command_line(command, &dp.display().to_string(), &pp.display().to_string());
    let mut log = format!("$ {line}\n");
    let mut cmd = Command::new("sh");
    cmd.arg("-c").arg(&line);
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        cmd.process_group(0);
    }
    let mut child = match cmd
        .current_dir(dir.path())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
    {
        Ok(c) => c,
        Err(e) => return failed(label, format!("{log}cannot launch planner: {e}")),
    };
    let pipe = |mut r: Box<dyn Read + Send>| {
        std::thread::spawn(move || {
            let mut s = String::new();
            let _ = r.read_to_string(&mut s);
            s
        })
    };
    let out_t = pipe(Box::new(child.stdout.take().expect("piped stdout")));
    let err_t = pipe(Box::new(child.stderr.take().expect("piped stderr")));
    let limit = Duration::from_secs_f64(*timeout);
    let mut timed_out = false;
    let exit = loop {
        match child.try_wait() {
            Ok(Some(s)) => break Some(s),
            Ok(None) => {}
            Err(e) => {
                log.push_str(&format!("wait failed: {e}\n"));
                break None;
            }
        }
        if clock.cancelled() || clock.elapsed() >= limit {
            timed_out = !clock.cancelled();
            kill_group(&mut child);
            let reap = Instant::now();
            while reap.elapsed() < GRACE {
                if let Ok(Some(_)) = child.try_wait() {
                    break;
                }
                std::thread::sleep(Duration::from_millis(20));
            }
            break None;
        }
        std::thread::sleep(Duration::from_millis(20));
    };
    let stdout = out_t.join().unwrap_or_default();
    let stderr = err_t.join().unwrap_or_default();
    log.push_str(&stdout);
    if !stderr.is_empty() {
        log.push_str("--- stderr ---\n");
        log.push_str(&stderr);
    }
    let text = match extraction {
        Extraction::Stdout => stdout,
        Extraction::Files { prefix } => {
            let mut names: Vec<_> = std::fs::read_dir(dir.path())
                .into_iter()
                .flatten()
                .flatten()
                .filter(|e| e.file_name().to_string_lossy().starts_with(prefix.as_str()))
                .map(|e| e.path())
                .collect();
            names.sort();
            names.iter().filter_map(|n| std::fs::read_to_string(n).ok()).collect::<Vec<_>>().join("\n;\n")
        }
    };
    let plans = keep_valid(model, scan_plans(&text), &mut log);
    let status = if !plans.is_empty() {
        OutcomeStatus::Solved
    } else if timed_out {
        OutcomeStatus::TimeoutNoPlan
    } else {
        if let Some(s) = exit {
            log.push_str(&format!("planner exited with {s} and no valid plan\n"));
        }
        OutcomeStatus::PlannerError
    };
    if *keep_files || status == OutcomeStatus::PlannerError {
        let kept = dir.keep();
        log.push_str(&format!("workspace kept at {}\n", kept.display()));
    }
    PlanningOutcome { status, plans, wall_time: 0.0, planner: label, stats: None, log }
}
