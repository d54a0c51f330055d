//! The `afem` command line: `run` drives the adaptive (or uniform) loop and
//! writes its artifacts, `verify` executes the named-inequality suite,
//! `study` compares two run configurations on one problem, and `mesh-info`
//! prints mesh statistics.
//!
//! Exit codes: 0 success, 1 failed verification check, 2 configuration
//! error (no artifacts are written), 3 solver failure, 4 refinement
//! failure.

mod output;
mod verify;

pub use output::{svg_loglog, Series};
pub use verify::{run_suite, CheckOutcome, CheckStatus};

use std::fmt;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::adapt::{run_loop_observed, AdaptConfig, AdaptError, RunOutcome, StopReason};
use crate::estimator::EstimatorOptions;
use crate::fem::FeSpace;
use crate::mesh::Mesh;
use crate::problem::{builtin_problem, parse_problem_spec, ProblemSpec};
use crate::solver::SolverConfig;

#[derive(Parser, Debug)]
#[command(
    name = "afem",
    version,
    about = "Adaptive P1 finite elements for quasi-linear elliptic problems"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run the adaptive (or uniform) loop and write run artifacts.
    Run(RunFlags),
    /// Execute the verification suite of named inequalities.
    Verify(RunFlags),
    /// Compare two run configurations of the same problem.
    Study(StudyFlags),
    /// Print statistics of a mesh file or a built-in problem's mesh.
    MeshInfo(MeshInfoFlags),
}

#[derive(Args, Debug, Default, Clone)]
struct RunFlags {
    /// Plain-text `key = value` config file; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in problem name or path to a problem spec file.
    #[arg(long)]
    problem: Option<String>,
    /// Dörfler marking parameter in (0,1).
    #[arg(long)]
    theta: Option<f64>,
    /// Bisections per marked element.
    #[arg(long)]
    n_bisect: Option<u32>,
    /// Refinement step cap.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Stop before refining past this element count.
    #[arg(long)]
    max_elements: Option<usize>,
    /// Stop once the global estimator falls below this value.
    #[arg(long)]
    eta_tol: Option<f64>,
    /// `adaptive` (Dörfler marking) or `uniform` (mark everything).
    #[arg(long)]
    mode: Option<String>,
    /// Seed for randomized verification checks.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Negative control: break the estimator's jump sign.
    #[arg(long, hide = true)]
    break_jump_sign: bool,
}

#[derive(Args, Debug)]
struct StudyFlags {
    /// Config file of the first run (series `a`).
    config_a: PathBuf,
    /// Config file of the second run (series `b`).
    config_b: PathBuf,
    /// Output directory for study.csv / study.txt / study.svg.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MeshInfoFlags {
    /// Mesh file in the plain-text mesh format.
    path: Option<PathBuf>,
    /// Built-in problem whose initial mesh to inspect.
    #[arg(long)]
    problem: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Adaptive,
    Uniform,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Adaptive => "adaptive",
            Mode::Uniform => "uniform",
        })
    }
}

/// Fully resolved run configuration: defaults, then config file, then flags.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: String,
    pub theta: f64,
    pub n_bisect: u32,
    pub max_iters: usize,
    pub max_elements: Option<usize>,
    pub eta_tol: Option<f64>,
    pub mode: Mode,
    pub seed: u64,
    pub out: PathBuf,
    pub newton_tol: f64,
    pub cg_tol_factor: f64,
    pub break_jump_sign: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: String::new(),
            theta: 0.5,
            n_bisect: 1,
            max_iters: 20,
            max_elements: None,
            eta_tol: None,
            mode: Mode::Adaptive,
            seed: 0,
            out: PathBuf::from("out"),
            newton_tol: 1e-10,
            cg_tol_factor: 1e-2,
            break_jump_sign: false,
        }
    }
}

impl RunConfig {
    pub fn adapt_config(&self) -> AdaptConfig {
        AdaptConfig {
            theta: self.theta,
            n_bisect: self.n_bisect,
            eta_tol: self.eta_tol,
            max_elements: self.max_elements,
            max_iters: self.max_iters,
            solver: SolverConfig {
                newton_tol: self.newton_tol,
                cg_tol_factor: self.cg_tol_factor,
                ..SolverConfig::default()
            },
            mark_all: self.mode == Mode::Uniform,
            estimator: EstimatorOptions { flip_jump_sign: self.break_jump_sign },
            keep_history: false,
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration; nothing was written.
    Config(String),
    /// The nonlinear solver failed mid-run.
    Solver(String),
    /// Refinement failed mid-run.
    Refine(String),
    /// One or more verification checks failed.
    ChecksFailed(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ChecksFailed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Refine(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Solver(m) => write!(f, "solver failure: {m}"),
            CliError::Refine(m) => write!(f, "refinement failure: {m}"),
            CliError::ChecksFailed(names) => {
                write!(f, "failed checks: {}", names.join(", "))
            }
        }
    }
}

fn map_run_error(e: AdaptError) -> CliError {
    match e {
        AdaptError::BadConfig(m) => CliError::Config(m),
        AdaptError::Mesh(m) => CliError::Refine(m.to_string()),
        other => CliError::Solver(other.to_string()),
    }
}

/// Entry point used by the binary and by tests; returns the process exit
/// code instead of exiting.
pub fn main_entry(args: &[String]) -> i32 {
    let mut argv = vec!["afem".to_string()];
    argv.extend_from_slice(args);
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.cmd {
        Cmd::Run(flags) => resolve(&flags).and_then(|(cfg, problem)| cmd_run(&cfg, &problem)),
        Cmd::Verify(flags) => {
            resolve(&flags).and_then(|(cfg, problem)| cmd_verify(&cfg, &problem))
        }
        Cmd::Study(flags) => cmd_study(&flags),
        Cmd::MeshInfo(flags) => cmd_mesh_info(&flags),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("afem: {e}");
            e.exit_code()
        }
    }
}

/// Applies one `key = value` config line onto the configuration.
fn apply_key(cfg: &mut RunConfig, key: &str, value: &str) -> Result<(), CliError> {
    let bad = |what: &str| CliError::Config(format!("{what} `{value}` for key `{key}`"));
    match key {
        "problem" => cfg.problem = value.to_string(),
        "theta" => cfg.theta = value.parse().map_err(|_| bad("invalid number"))?,
        "n_bisect" => cfg.n_bisect = value.parse().map_err(|_| bad("invalid integer"))?,
        "max_iters" => cfg.max_iters = value.parse().map_err(|_| bad("invalid integer"))?,
        "max_elements" => {
            cfg.max_elements = Some(value.parse().map_err(|_| bad("invalid integer"))?)
        }
        "eta_tol" => cfg.eta_tol = Some(value.parse().map_err(|_| bad("invalid number"))?),
        "mode" => cfg.mode = parse_mode(value)?,
        "seed" => cfg.seed = value.parse().map_err(|_| bad("invalid integer"))?,
        "out" => cfg.out = PathBuf::from(value),
        "newton_tol" => cfg.newton_tol = value.parse().map_err(|_| bad("invalid number"))?,
        "cg_tol_factor" => {
            cfg.cg_tol_factor = value.parse().map_err(|_| bad("invalid number"))?
        }
        "break_jump_sign" => {
            cfg.break_jump_sign = value.parse().map_err(|_| bad("invalid boolean"))?
        }
        _ => return Err(CliError::Config(format!("unknown config key `{key}`"))),
    }
    Ok(())
}

fn parse_mode(value: &str) -> Result<Mode, CliError> {
    match value {
        "adaptive" => Ok(Mode::Adaptive),
        "uniform" => Ok(Mode::Uniform),
        other => Err(CliError::Config(format!(
            "mode must be `adaptive` or `uniform`, got `{other}`"
        ))),
    }
}

/// Parses a `key = value` config file: `#` starts a comment, blank lines
/// are skipped, unknown keys are rejected, later duplicates win.
pub fn parse_config_file(text: &str, cfg: &mut RunConfig) -> Result<(), CliError> {
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!("line {}: expected `key = value`, got `{line}`", lineno + 1))
        })?;
        apply_key(cfg, key.trim(), value.trim())?;
    }
    Ok(())
}

/// Builds the final RunConfig (defaults → file → flags) and loads its
/// problem. All validation happens here, before any artifact is written.
fn resolve(flags: &RunFlags) -> Result<(RunConfig, ProblemSpec), CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &flags.config {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        parse_config_file(&text, &mut cfg)?;
    }
    if let Some(v) = &flags.problem {
        cfg.problem = v.clone();
    }
    if let Some(v) = flags.theta {
        cfg.theta = v;
    }
    if let Some(v) = flags.n_bisect {
        cfg.n_bisect = v;
    }
    if let Some(v) = flags.max_iters {
        cfg.max_iters = v;
    }
    if let Some(v) = flags.max_elements {
        cfg.max_elements = Some(v);
    }
    if let Some(v) = flags.eta_tol {
        cfg.eta_tol = Some(v);
    }
    if let Some(v) = &flags.mode {
        cfg.mode = parse_mode(v)?;
    }
    if let Some(v) = flags.seed {
        cfg.seed = v;
    }
    if let Some(v) = &flags.out {
        cfg.out = v.clone();
    }
    if flags.break_jump_sign {
        cfg.break_jump_sign = true;
    }
    validate(&cfg)?;
    let problem = load_problem(&cfg.problem)?;
    Ok((cfg, problem))
}

fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.problem.is_empty() {
        return Err(CliError::Config("no problem given (flag --problem or config key)".into()));
    }
    if !(cfg.theta > 0.0 && cfg.theta < 1.0) {
        return Err(CliError::Config(format!("theta must lie in (0,1), got {}", cfg.theta)));
    }
    if cfg.n_bisect < 1 {
        return Err(CliError::Config("n_bisect must be at least 1".into()));
    }
    if let Some(tol) = cfg.eta_tol {
        if !(tol > 0.0) {
            return Err(CliError::Config(format!("eta_tol must be positive, got {tol}")));
        }
    }
    if !(cfg.newton_tol > 0.0) || !(cfg.cg_tol_factor > 0.0) {
        return Err(CliError::Config("solver tolerances must be positive".into()));
    }
    Ok(())
}

/// A problem is either a built-in name or a path to a spec file.
fn load_problem(name: &str) -> Result<ProblemSpec, CliError> {
    let path = Path::new(name);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read problem file {}: {e}", path.display()))
        })?;
        return parse_problem_spec(&text).map_err(|e| CliError::Config(e.to_string()));
    }
    builtin_problem(name).map_err(|e| CliError::Config(e.to_string()))
}

pub(crate) fn stop_reason_name(stop: StopReason) -> &'static str {
    match stop {
        StopReason::EtaTol => "eta-tol",
        StopReason::MaxElements => "max-elements",
        StopReason::MaxIters => "max-iters",
        StopReason::Converged => "converged",
    }
}

/// `run`: executes the loop, streaming run.csv rows as they are produced,
/// then writes mesh.txt, solution.txt, estimator.csv, and constants.txt.
fn cmd_run(cfg: &RunConfig, problem: &ProblemSpec) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.out)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", cfg.out.display())))?;
    let mut log = output::RunLog::create(&cfg.out.join("run.csv"))
        .map_err(|e| CliError::Config(e.to_string()))?;
    let outcome = run_loop_observed(problem, &cfg.adapt_config(), &mut |record| {
        log.append(record);
    })
    .map_err(map_run_error)?;
    log.finish().map_err(|e| CliError::Config(e.to_string()))?;

    output::write_run_artifacts(&cfg.out, cfg, &outcome)
        .map_err(|e| CliError::Config(e.to_string()))?;

    let last = outcome.records.last().expect("at least one record");
    println!(
        "run {}: {} iterations, {} elements, eta {:.6e}, stop {}",
        outcome.constants.run_id,
        last.iteration,
        last.num_elements,
        last.eta,
        stop_reason_name(outcome.stop),
    );
    Ok(())
}

/// `verify`: runs the named-inequality suite and reports per-check status.
fn cmd_verify(cfg: &RunConfig, problem: &ProblemSpec) -> Result<(), CliError> {
    let outcomes = run_suite(problem, cfg).map_err(map_run_error)?;
    let mut failed = Vec::new();
    for o in &outcomes {
        println!("CHECK {}: {} ({})", o.name, o.status, o.details);
        if o.status == CheckStatus::Fail {
            failed.push(o.name.clone());
        }
    }
    if failed.is_empty() {
        println!("verify: all {} checks passed", outcomes.len());
        Ok(())
    } else {
        Err(CliError::ChecksFailed(failed))
    }
}

/// `study`: runs both configurations, emits the joint table, fitted slopes,
/// and a log-log SVG plot.
fn cmd_study(flags: &StudyFlags) -> Result<(), CliError> {
    let load = |path: &PathBuf| -> Result<(RunConfig, ProblemSpec), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        let mut cfg = RunConfig::default();
        parse_config_file(&text, &mut cfg)?;
        validate(&cfg)?;
        let problem = load_problem(&cfg.problem)?;
        Ok((cfg, problem))
    };
    let (cfg_a, problem_a) = load(&flags.config_a)?;
    let (cfg_b, problem_b) = load(&flags.config_b)?;
    if problem_a.name != problem_b.name {
        return Err(CliError::Config(format!(
            "study requires one problem for both runs, got `{}` and `{}`",
            problem_a.name, problem_b.name
        )));
    }
    let out = flags.out.clone().unwrap_or_else(|| PathBuf::from("out-study"));

    let run = |cfg: &RunConfig, problem: &ProblemSpec| -> Result<RunOutcome, CliError> {
        crate::adapt::run_loop(problem, &cfg.adapt_config()).map_err(map_run_error)
    };
    let outcome_a = run(&cfg_a, &problem_a)?;
    let outcome_b = run(&cfg_b, &problem_b)?;

    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", out.display())))?;
    let summary = output::write_study_artifacts(&out, &cfg_a, &outcome_a, &cfg_b, &outcome_b)
        .map_err(|e| CliError::Config(e.to_string()))?;
    print!("{summary}");
    Ok(())
}

/// `mesh-info`: prints vertex/element/edge counts, area, shape regularity,
/// and the conformity verdict.
fn cmd_mesh_info(flags: &MeshInfoFlags) -> Result<(), CliError> {
    let mesh = match (&flags.path, &flags.problem) {
        (Some(path), None) => Mesh::read_file(path).map_err(|e| {
            CliError::Config(format!("cannot load mesh {}: {e}", path.display()))
        })?,
        (None, Some(name)) => load_problem(name)?.domain,
        _ => {
            return Err(CliError::Config(
                "give exactly one of a mesh file path or --problem".into(),
            ))
        }
    };
    let space = FeSpace::build(std::sync::Arc::new(mesh));
    let mesh = space.mesh();
    let boundary_edges = mesh.edges().iter().filter(|e| e.is_boundary()).count();
    let area: f64 = (0..mesh.num_elements()).map(|t| mesh.element_area(t)).sum();
    let conformity = mesh.check_conformity();
    println!("vertices = {}", mesh.num_vertices());
    println!("elements = {}", mesh.num_elements());
    println!("edges = {}", mesh.edges().len());
    println!("boundary_edges = {boundary_edges}");
    println!("interior_dofs = {}", space.num_dofs());
    println!("area = {area}");
    println!(
        "shape_regularity = {}",
        mesh.shape_regularity().map_err(|e| CliError::Refine(e.to_string()))?
    );
    println!("conforming = {}", conformity.is_conforming);
    for issue in &conformity.issues {
        println!("issue = {issue}");
    }
    Ok(())
}
