//! `xaip`: validate plans, plan, ask contrastive questions, inspect session
//! trees and diffs, or serve the HTTP API.
//!
//! Exit codes: 0 success, 1 domain error (bad input, invalid plan), 2 usage
//! error, 3 planner failure.

mod render;

use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use xaip_core::compiler::{normalize_plan, FormalQuestion, TimeDirection};
use xaip_core::model::{ActionRef, PlanningModel};
use xaip_core::pddl::{parse_action_literal, parse_domain, parse_plan, parse_problem, print_model, print_plan, ParseError};
use xaip_core::planner::{solve, PlannerConfig};
use xaip_core::session::{NodeId, Session, SessionError};
use xaip_core::validator::simulate;
use xaip_service::{ServiceConfig, DEFAULT_PORT, PORT_ENV};

#[derive(Parser)]
#[command(name = "xaip", version, about = "Contrastive explanation of temporal plans")]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Colored output; `auto` colors only on a terminal.
    #[arg(long, global = true, value_enum, default_value_t = Color::Auto)]
    color: Color,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Color {
    Auto,
    Always,
    Never,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate a plan against a model, or against a session node's model.
    Validate {
        #[command(flatten)]
        src: Source,
        #[arg(long)]
        plan: PathBuf,
    },
    /// Plan for a model (writes a plan file) or for a session node (cached in the session).
    Plan {
        #[command(flatten)]
        src: Source,
        #[command(flatten)]
        planner: PlannerArgs,
        /// Plan file to write (model mode; default: the problem path with `.plan`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ask a question about a session node; creates and prints a child node.
    Ask(AskArgs),
    /// Session lifecycle.
    Session {
        #[command(subcommand)]
        cmd: SessionCmd,
    },
    /// Compare a node's plan with its parent's or another node's.
    Diff {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        node: NodeId,
        #[arg(long)]
        against: Option<NodeId>,
    },
    /// Serve the HTTP API.
    Serve {
        /// Port; defaults to $XAIP_PORT, then 8080.
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value = "sessions")]
        session_dir: PathBuf,
        /// Planning jobs run at once.
        #[arg(long, default_value_t = 2)]
        workers: usize,
        /// Allowed browser origin (default: any).
        #[arg(long)]
        cors_origin: Option<String>,
    },
}

#[derive(Args)]
struct Source {
    #[arg(long, requires = "problem", conflicts_with_all = ["session", "node"])]
    domain: Option<PathBuf>,
    #[arg(long, requires = "domain")]
    problem: Option<PathBuf>,
    #[arg(long, requires = "node")]
    session: Option<PathBuf>,
    #[arg(long, requires = "session")]
    node: Option<NodeId>,
}

#[derive(Args)]
struct PlannerArgs {
    /// `builtin` or `exec:COMMAND` with `{domain}` and `{problem}` placeholders.
    /// Defaults to $XAIP_PLANNER, then `builtin`.
    #[arg(long)]
    planner: Option<String>,
    /// Planning time limit in seconds.
    #[arg(long)]
    timeout: Option<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum QType {
    Fq1,
    Fq2,
    Fq3,
    Fq4,
    Fq5,
    Fq6,
    Fq7,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Dir {
    Before,
    After,
}

#[derive(Args)]
struct AskArgs {
    #[arg(long)]
    session: PathBuf,
    #[arg(long)]
    node: NodeId,
    /// fq1 add, fq2 remove, fq3 replace, fq4 reorder, fq5 forbid outside a
    /// window, fq6 require within a window, fq7 delay or advance.
    #[arg(long = "type", value_enum)]
    qtype: QType,
    #[arg(long)]
    action: Option<String>,
    #[arg(long)]
    replacement: Option<String>,
    /// Position (from 0) of the replaced action in the node's plan.
    #[arg(long)]
    at_index: Option<usize>,
    /// fq4: `--action` must finish before this action starts.
    #[arg(long, conflicts_with = "after")]
    before: Option<String>,
    /// fq4: `--action` must start after this action finishes.
    #[arg(long)]
    after: Option<String>,
    #[arg(long)]
    lb: Option<f64>,
    #[arg(long)]
    ub: Option<f64>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    offset: Option<f64>,
    #[arg(long, value_enum)]
    dir: Option<Dir>,
    /// fq1: the added action must be needed by the plan.
    #[arg(long)]
    justified: bool,
}

#[derive(Subcommand)]
enum SessionCmd {
    /// Create a session file rooted at a model.
    New {
        #[arg(long)]
        domain: PathBuf,
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Show a node (default: the root).
    Show {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        node: Option<NodeId>,
        /// Also print the node's domain and problem.
        #[arg(long)]
        model: bool,
    },
    /// Print the tree of restrictions.
    Tree {
        #[arg(long)]
        session: PathBuf,
    },
    /// Write the session to another file.
    Save {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a session file and summarize it.
    Load {
        #[arg(long)]
        session: PathBuf,
    },
}

enum Fail {
    Domain(String),
    Usage(String),
    Planner(String),
}

impl From<SessionError> for Fail {
    fn from(e: SessionError) -> Self {
        Fail::Domain(e.to_string())
    }
}

type Res = Result<(), Fail>;

struct Out {
    format: Format,
    color: bool,
}

impl Out {
    fn emit(&self, text: impl FnOnce() -> String, value: impl FnOnce() -> serde_json::Value) {
        match self.format {
            Format::Text => print!("{}", text()),
            Format::Json => println!("{}", serde_json::to_string_pretty(&value()).expect("json")),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let color = match cli.color {
        Color::Always => true,
        Color::Never => false,
        Color::Auto => std::io::stdout().is_terminal() && std::env::var_os("NO_COLOR").is_none(),
    };
    let out = Out { format: cli.format, color };
    let (code, msg) = match run(cli.cmd, &out) {
        Ok(()) => return ExitCode::SUCCESS,
        Err(Fail::Domain(m)) => (1, m),
        Err(Fail::Usage(m)) => (2, m),
        Err(Fail::Planner(m)) => (3, m),
    };
    if out.format == Format::Json {
        println!("{}", json!({ "error": { "exit_code": code, "message": msg } }));
    }
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn run(cmd: Cmd, out: &Out) -> Res {
    match cmd {
        Cmd::Validate { src, plan } => validate(src, &plan, out),
        Cmd::Plan { src, planner, out: file } => plan(src, planner, file, out),
        Cmd::Ask(a) => ask(a, out),
        Cmd::Session { cmd } => session(cmd, out),
        Cmd::Diff { session, node, against } => {
            let s = load_session(&session)?;
            let d = s.diff(node, against)?;
            out.emit(|| render::diff(&d, out.color), || serde_json::to_value(&d).expect("json"));
            Ok(())
        }
        Cmd::Serve { port, host, session_dir, workers, cors_origin } => {
            let port = match port {
                Some(p) => p,
                None => match std::env::var(PORT_ENV) {
                    Ok(v) => v.parse().map_err(|_| Fail::Usage(format!("${PORT_ENV} is not a port: `{v}`")))?,
                    Err(_) => DEFAULT_PORT,
                },
            };
            if workers == 0 {
                return Err(Fail::Usage("--workers must be at least 1".into()));
            }
            let cfg = ServiceConfig { host, port, session_dir, workers, planner: PlannerConfig::from_env(), cors_origin };
            xaip_service::run(cfg).map_err(|e| Fail::Domain(format!("service: {e}")))
        }
    }
}

fn read(path: &Path) -> Result<String, Fail> {
    std::fs::read_to_string(path).map_err(|e| Fail::Domain(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Res {
    std::fs::write(path, text).map_err(|e| Fail::Domain(format!("cannot write {}: {e}", path.display())))
}

fn in_file(path: &Path) -> impl Fn(ParseError) -> Fail + '_ {
    move |e| Fail::Domain(e.in_file(&path.display().to_string()).to_string())
}

fn load_model(domain: &Path, problem: &Path) -> Result<PlanningModel, Fail> {
    let d = parse_domain(&read(domain)?).map_err(in_file(domain))?;
    let p = parse_problem(&read(problem)?, &d).map_err(in_file(problem))?;
    Ok(PlanningModel::new(d, p))
}

fn load_session(path: &Path) -> Result<Session, Fail> {
    Session::load(path).map_err(Fail::from)
}

fn save_session(s: &Session, path: &Path) -> Res {
    s.save(path).map_err(Fail::from)
}

enum Target {
    Model(PathBuf, PathBuf),
    Node(PathBuf, NodeId),
}

fn target(src: Source) -> Result<Target, Fail> {
    match src {
        Source { domain: Some(d), problem: Some(p), .. } => Ok(Target::Model(d, p)),
        Source { session: Some(s), node: Some(n), .. } => Ok(Target::Node(s, n)),
        _ => Err(Fail::Usage("give either --domain and --problem, or --session and --node".into())),
    }
}

fn planner_config(a: &PlannerArgs) -> Result<PlannerConfig, Fail> {
    let cfg = match &a.planner {
        Some(spec) => PlannerConfig::from_spec(spec).map_err(|m| Fail::Usage(format!("--planner: {m}")))?,
        None => PlannerConfig::from_env(),
    };
    let cfg = match a.timeout {
        Some(t) => cfg.with_time_budget(t),
        None => cfg,
    };
    cfg.validate().map_err(|m| Fail::Usage(format!("--timeout: {m}")))?;
    Ok(cfg)
}

fn validate(src: Source, plan_path: &Path, out: &Out) -> Res {
    match target(src)? {
        Target::Model(d, p) => {
            let m = load_model(&d, &p)?;
            let plan = parse_plan(&read(plan_path)?, &m).map_err(in_file(plan_path))?;
            let r = simulate(&m, &plan);
            out.emit(|| r.to_string(), || serde_json::to_value(&r).expect("json"));
            if r.valid {
                Ok(())
            } else {
                Err(Fail::Domain(format!("{} is not a valid plan", plan_path.display())))
            }
        }
        Target::Node(s, n) => {
            let s = load_session(&s)?;
            let node = s.node(n)?;
            let h = &node.hmodel;
            let plan = parse_plan(&read(plan_path)?, &h.model).map_err(in_file(plan_path))?;
            let local = simulate(&h.model, &plan);
            let normalized = normalize_plan(&plan, h).map_err(|e| Fail::Domain(e.to_string()))?;
            let original = simulate(&s.original, &normalized);
            let checks: Vec<(String, bool)> = h
                .provenance
                .iter()
                .map(|r| (r.question.to_string(), r.satisfied_by(&normalized, &s.original)))
                .collect();
            let ok = local.valid && original.valid && checks.iter().all(|c| c.1);
            out.emit(
                || {
                    let mut t = format!("node {n} model:\n{local}\nnormalized plan on the original model:\n{original}\n");
                    for (q, sat) in &checks {
                        t.push_str(&format!("{}: {q}\n", if *sat { "satisfied" } else { "VIOLATED" }));
                    }
                    t
                },
                || {
                    json!({
                        "node": n,
                        "node_report": local,
                        "normalized_plan": print_plan(&normalized),
                        "original_report": original,
                        "checks": checks.iter().map(|(q, s)| json!({ "question": q, "satisfied": s })).collect::<Vec<_>>(),
                        "valid": ok,
                    })
                },
            );
            if ok {
                Ok(())
            } else {
                Err(Fail::Domain(format!("{} does not hold for node {n}", plan_path.display())))
            }
        }
    }
}

fn plan(src: Source, pa: PlannerArgs, file: Option<PathBuf>, out: &Out) -> Res {
    let cfg = planner_config(&pa)?;
    match target(src)? {
        Target::Model(d, p) => {
            let m = load_model(&d, &p)?;
            let o = solve(&m, &cfg);
            let Some(best) = o.best() else {
                return Err(Fail::Planner(format!("{}: no plan ({})\n{}", cfg.label(), o.status, o.log.trim_end())));
            };
            let file = file.unwrap_or_else(|| p.with_extension("plan"));
            write(&file, &print_plan(best))?;
            let r = simulate(&m, best);
            out.emit(
                || {
                    let metric = r.metric.map(|v| format!("metric: {}\n", xaip_core::pddl::format_time(v))).unwrap_or_default();
                    format!(
                        "status: {}\nmakespan: {}\n{metric}plan written to {}\n",
                        o.status,
                        xaip_core::pddl::format_time(r.makespan),
                        file.display()
                    )
                },
                || json!({ "status": o.status, "makespan": r.makespan, "metric": r.metric, "plan_file": file, "plan": print_plan(best), "wall_time": o.wall_time }),
            );
            Ok(())
        }
        Target::Node(sp, n) => {
            if file.is_some() {
                return Err(Fail::Usage("--out applies to model planning only".into()));
            }
            let mut s = load_session(&sp)?;
            let o = s.plan_node(n, &cfg)?;
            save_session(&s, &sp)?;
            if !o.is_solved() {
                return Err(Fail::Planner(format!("node {n}: no plan ({}) after {:.2}s", o.status, o.wall_time)));
            }
            let node = s.node(n)?;
            out.emit(|| render::node(node, false), || serde_json::to_value(node).expect("json"));
            Ok(())
        }
    }
}

fn need<T>(v: Option<T>, flag: &str, qtype: &str) -> Result<T, Fail> {
    v.ok_or_else(|| Fail::Usage(format!("--type {qtype} needs {flag}")))
}

fn ask(a: AskArgs, out: &Out) -> Res {
    let mut s = load_session(&a.session)?;
    let model = s.original.clone();
    let lit = |text: &str| -> Result<ActionRef, Fail> {
        parse_action_literal(text, &model).map_err(|e| Fail::Domain(format!("{text}: {e}")))
    };
    let name = a.qtype.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
    let name = name.as_str();
    let q = match a.qtype {
        QType::Fq1 => FormalQuestion::AddAction { action: lit(&need(a.action, "--action", name)?)?, justified: a.justified },
        QType::Fq2 => FormalQuestion::RemoveAction { action: lit(&need(a.action, "--action", name)?)? },
        QType::Fq3 => {
            let k = need(a.at_index, "--at-index", name)?;
            let replacement = lit(&need(a.replacement, "--replacement", name)?)?;
            if let Some(expected) = &a.action {
                let expected = lit(expected)?;
                let plan = s.node(a.node)?.plan.as_ref().ok_or(SessionError::NoPlan(a.node))?;
                match plan.actions.get(k) {
                    Some(x) if x.action == expected => {}
                    Some(x) => return Err(Fail::Usage(format!("--action {expected} is not action #{k} ({})", x.action))),
                    None => return Err(Fail::Usage(format!("--at-index {k} is past the end of the plan"))),
                }
            }
            FormalQuestion::ReplaceInState { replaced: k, replacement, plan: None }
        }
        QType::Fq4 => {
            let x = lit(&need(a.action, "--action", name)?)?;
            let edge = match (a.before, a.after) {
                (Some(b), None) => (x, lit(&b)?),
                (None, Some(b)) => (lit(&b)?, x),
                _ => return Err(Fail::Usage("--type fq4 needs --before or --after".into())),
            };
            FormalQuestion::Reorder { edges: vec![edge] }
        }
        QType::Fq5 | QType::Fq6 => {
            let action = lit(&need(a.action, "--action", name)?)?;
            let lb = need(a.lb, "--lb", name)?;
            let ub = need(a.ub, "--ub", name)?;
            if a.qtype == QType::Fq5 {
                FormalQuestion::ForbidOutsideWindow { action, lb, ub }
            } else {
                FormalQuestion::RequireWithinWindow { action, lb, ub }
            }
        }
        QType::Fq7 => FormalQuestion::DelayAdvance {
            action: lit(&need(a.action, "--action", name)?)?,
            t: need(a.t, "--t", name)?,
            offset: need(a.offset, "--offset", name)?,
            direction: match need(a.dir, "--dir", name)? {
                Dir::Before => TimeDirection::Before,
                Dir::After => TimeDirection::After,
            },
        },
    };
    let child = s.ask(a.node, &q)?;
    save_session(&s, &a.session)?;
    let r = s.node(child)?.hmodel.provenance.last().expect("restriction").clone();
    for n in &r.notes {
        eprintln!("note: {n}");
    }
    out.emit(
        || format!("{child}\n"),
        || json!({ "node_id": child, "parent": a.node, "question": r.question, "summary": r.question.to_string(), "synthesized": r.symbols, "unsolvable": r.unsolvable, "notes": r.notes }),
    );
    Ok(())
}

fn session(cmd: SessionCmd, out: &Out) -> Res {
    match cmd {
        SessionCmd::New { domain, problem, out: file } => {
            let s = Session::new(load_model(&domain, &problem)?);
            save_session(&s, &file)?;
            out.emit(
                || format!("session {} written to {}\n", s.id, file.display()),
                || json!({ "session_id": s.id, "root": s.root, "file": file }),
            );
        }
        SessionCmd::Show { session, node, model } => {
            let s = load_session(&session)?;
            let n = s.node(node.unwrap_or(s.root))?;
            let (d, p) = print_model(&n.hmodel.model);
            out.emit(
                || {
                    let mut t = render::node(n, true);
                    if model {
                        t.push_str(&format!("\n{d}\n{p}"));
                    }
                    t
                },
                || {
                    let mut v = serde_json::to_value(n).expect("json");
                    v["status"] = json!(n.status());
                    if model {
                        v["domain_text"] = json!(d);
                        v["problem_text"] = json!(p);
                    }
                    v
                },
            );
        }
        SessionCmd::Tree { session } => {
            let s = load_session(&session)?;
            out.emit(
                || s.render_tree(),
                || {
                    let nodes: Vec<_> = s
                        .nodes
                        .values()
                        .map(|n| json!({ "id": n.id, "parent": n.parent, "summary": n.summary(), "status": n.status(), "makespan": n.plan.as_ref().map(|p| p.makespan()) }))
                        .collect();
                    json!({ "session_id": s.id, "root": s.root, "nodes": nodes })
                },
            );
        }
        SessionCmd::Save { session, out: file } => {
            let s = load_session(&session)?;
            save_session(&s, &file)?;
            out.emit(|| format!("saved to {}\n", file.display()), || json!({ "session_id": s.id, "file": file }));
        }
        SessionCmd::Load { session } => {
            let s = load_session(&session)?;
            for id in s.nodes.keys() {
                let again = s.recompile(*id)?;
                if again != s.node(*id)?.hmodel {
                    return Err(Fail::Domain(format!("node {id} does not match its recompiled provenance")));
                }
            }
            out.emit(
                || format!("session {}: {} nodes, provenance verified\n", s.id, s.nodes.len()),
                || json!({ "session_id": s.id, "nodes": s.nodes.len(), "verified": true }),
            );
        }
    }
    Ok(())
}
