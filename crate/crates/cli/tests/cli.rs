use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn wh(file: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/warehouse").join(file).display().to_string()
}

fn xaip(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xaip")).args(args).env_remove("XAIP_PLANNER").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn new_session(dir: &Path) -> String {
    let s = dir.join("s.json").display().to_string();
    let o = xaip(&["session", "new", "--domain", &wh("domain.pddl"), "--problem", &wh("problem.pddl"), "--out", &s]);
    assert!(o.status.success(), "{}", stderr(&o));
    s
}

#[test]
fn unknown_question_type_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let s = new_session(dir.path());
    let o = xaip(&["ask", "--session", &s, "--node", "0", "--type", "fq9", "--action", "(set_shelf tom sh4)"]);
    assert_eq!(o.status.code(), Some(2));
    let o = xaip(&["ask", "--session", &s, "--node", "0", "--type", "fq6", "--action", "(set_shelf tom sh4)", "--lb", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--ub"));
}

#[test]
fn domain_errors_print_the_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let bad: PathBuf = dir.path().join("bad.pddl");
    std::fs::write(&bad, std::fs::read_to_string(wh("domain.pddl")).unwrap().replacen("(:predicates", "(:predicates (", 1)).unwrap();
    let o = xaip(&["validate", "--domain", &bad.display().to_string(), "--problem", &wh("problem.pddl"), "--plan", &wh("plan_original.plan")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.pddl:"), "{}", stderr(&o));

    let s = new_session(dir.path());
    let o = xaip(&["ask", "--session", &s, "--node", "0", "--type", "fq2", "--action", "(fly tom sh4)"]);
    assert_eq!(o.status.code(), Some(1));
    let o = xaip(&["ask", "--session", &s, "--node", "0", "--type", "fq5", "--action", "(set_shelf tom sh4)", "--lb", "5", "--ub", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("lb < ub"), "{}", stderr(&o));
}

#[test]
fn invalid_plans_exit_one_and_name_the_failure() {
    let o = xaip(&["validate", "--domain", &wh("domain.pddl"), "--problem", &wh("problem.pddl"), "--plan", &wh("plan_original.plan")]);
    assert!(o.status.success());
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.plan");
    let text = std::fs::read_to_string(wh("plan_original.plan")).unwrap();
    std::fs::write(&bad, text.lines().skip(1).collect::<Vec<_>>().join("\n")).unwrap();
    let o = xaip(&["validate", "--domain", &wh("domain.pddl"), "--problem", &wh("problem.pddl"), "--plan", &bad.display().to_string()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("valid: false"), "{}", stdout(&o));
}

#[test]
fn model_planning_writes_a_plan_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.plan").display().to_string();
    let o = xaip(&["--format", "json", "plan", "--domain", &wh("domain.pddl"), "--problem", &wh("problem.pddl"), "--out", &out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["status"], "solved");
    let o = xaip(&["validate", "--domain", &wh("domain.pddl"), "--problem", &wh("problem.pddl"), "--plan", &out]);
    assert!(o.status.success());
}

#[test]
fn planner_failures_exit_three() {
    let o = xaip(&["plan", "--domain", &wh("domain.pddl"), "--problem", &wh("problem.pddl"), "--planner", "exec:true #"]);
    assert_eq!(o.status.code(), Some(3));
    let o = xaip(&["plan", "--domain", &wh("domain.pddl"), "--problem", &wh("problem.pddl"), "--planner", "nonsense"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn diff_is_plain_off_a_terminal_and_colored_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let s = new_session(dir.path());
    let o = xaip(&["ask", "--session", &s, "--node", "0", "--type", "fq1", "--action", "(load_pallet tom p2 sh6)"]);
    assert_eq!(stdout(&o).trim(), "1");
    for n in ["0", "1"] {
        assert!(xaip(&["plan", "--session", &s, "--node", n]).status.success());
    }
    let plain = stdout(&xaip(&["diff", "--session", &s, "--node", "1"]));
    assert!(!plain.contains('\x1b'));
    assert!(plain.lines().any(|l| l.starts_with("new") && l.contains("(load_pallet Tom p2 sh6)")), "{plain}");
    let colored = stdout(&xaip(&["--color", "always", "diff", "--session", &s, "--node", "1"]));
    assert!(colored.contains("\x1b[33mnew"));
    let v: serde_json::Value = serde_json::from_str(&stdout(&xaip(&["--format", "json", "diff", "--session", &s, "--node", "1", "--against", "0"]))).unwrap();
    assert!(v["entries"].as_array().unwrap().iter().any(|e| e["category"] == "new"));
}

#[test]
fn session_files_copy_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let s = new_session(dir.path());
    xaip(&["ask", "--session", &s, "--node", "0", "--type", "fq2", "--action", "(goto_waypoint tom sh1 sh2)"]);
    let copy = dir.path().join("copy.json").display().to_string();
    assert!(xaip(&["session", "save", "--session", &s, "--out", &copy]).status.success());
    let o = xaip(&["session", "load", "--session", &copy]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("2 nodes"));
    let tree = stdout(&xaip(&["session", "tree", "--session", &copy]));
    assert!(tree.contains("[1] remove (goto_waypoint tom sh1 sh2) (unplanned)"), "{tree}");
    let o = xaip(&["session", "show", "--session", &copy, "--node", "9"]);
    assert_eq!(o.status.code(), Some(1));
}
