//! `riskfsc` command-line front end.
//!
//! Exit codes: 0 success, 1 internal failure, 2 usage error, 3 infeasible
//! obstacle placement, 4 semantic input error.

pub mod manifest;
pub mod plot;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bpi::{default_initial_fsc, run_bpi, BpiConfig};
use crate::error::Error;
use crate::eval::{evaluate_fsc, residual, ValueTable, DEFAULT_TOL};
use crate::fsc::Fsc;
use crate::pomdp::grid::{make_gridworld_with_discount, random_obstacles, Cell, GRID_FORMAT};
use crate::pomdp::{parse_pomdp_unchecked, validate_pomdp, write_pomdp, GridWorldSpec, Pomdp};
use crate::risk::RiskSpec;
use crate::sim::{run_scenarios, DEFAULT_MAX_STEPS};
use manifest::{companion, prefixed, write_manifest, Recorder};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_INPUT: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "riskfsc", version, about = "Risk-averse finite-state controllers for POMDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a grid-world navigation benchmark.
    Gridworld(GridworldArgs),
    /// Synthesize a controller with bounded policy iteration.
    Solve(SolveArgs),
    /// Evaluate a controller under a risk measure.
    Evaluate(EvaluateArgs),
    /// Run a controller on perturbed copies of a grid world.
    Simulate(SimulateArgs),
    /// Emit a value heat map with greedy-action arrows.
    Plot(PlotArgs),
}

fn parse_cell(text: &str) -> Result<Cell, String> {
    let (r, c) = text
        .split_once(',')
        .ok_or_else(|| format!("expected ROW,COL, got '{text}'"))?;
    let num = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("bad cell '{text}': {e}"));
    Ok((num(r)?, num(c)?))
}

#[derive(Debug, Args, Serialize)]
struct GridworldArgs {
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    /// Number of obstacles placed by seeded rejection sampling.
    #[arg(long, conflicts_with = "obstacle_file", required_unless_present = "obstacle_file")]
    obstacles: Option<usize>,
    /// File listing one `ROW,COL` obstacle per line (`#` starts a comment).
    #[arg(long)]
    obstacle_file: Option<PathBuf>,
    /// Goal cell; defaults to the top-right corner.
    #[arg(long, value_parser = parse_cell)]
    goal: Option<Cell>,
    /// Start cell; the initial belief is uniform over free cells when absent.
    #[arg(long, value_parser = parse_cell)]
    start: Option<Cell>,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 0.1)]
    fn_rate: f64,
    #[arg(long, default_value_t = 0.1)]
    fp_rate: f64,
    #[arg(long, default_value_t = 1.0)]
    move_cost: f64,
    #[arg(long, default_value_t = 10.0)]
    crash_cost: f64,
    #[arg(long, default_value_t = 0.95)]
    gamma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix: writes PREFIX.toml, PREFIX.pomdp and PREFIX.manifest.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum RiskKind {
    Expectation,
    Cvar,
}

#[derive(Debug, Args, Serialize)]
struct RiskArgs {
    #[arg(long, value_enum)]
    risk: RiskKind,
    /// CVaR level in (0, 1]; required with `--risk cvar`.
    #[arg(long)]
    alpha: Option<f64>,
}

impl RiskArgs {
    fn spec(&self) -> Result<RiskSpec, CliError> {
        let kind = match self.risk {
            RiskKind::Expectation => "expectation",
            RiskKind::Cvar => "cvar",
        };
        RiskSpec::from_flags(kind, self.alpha).map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[derive(Debug, Args, Serialize)]
struct SolveArgs {
    /// POMDP model file, or a grid-world config.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    risk: RiskArgs,
    /// Discount; defaults to the model's.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    max_nodes: usize,
    #[arg(long, default_value_t = 1)]
    new_nodes: usize,
    /// Nodes of the uniform starting controller; defaults to 2 for grid-world
    /// configs (capped by --max-nodes) and 1 otherwise.
    #[arg(long)]
    init_nodes: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Accept only uniform-ε improvements (no per-state slack fallback).
    #[arg(long)]
    uniform_only: bool,
    /// Controller output; value tables, trace and manifest go next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    fsc: PathBuf,
    #[command(flatten)]
    risk: RiskArgs,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Output prefix: writes PREFIX.values.csv, PREFIX.optimum.csv and PREFIX.manifest.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    /// Grid-world config the controller was synthesized on.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    fsc: PathBuf,
    #[arg(long, default_value_t = 100)]
    scenarios: usize,
    #[arg(long, default_value_t = 0.2)]
    perturb: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    max_steps: usize,
    /// Level of the empirical CVaR reported in the summary.
    #[arg(long, default_value_t = 0.1)]
    cvar_alpha: f64,
    /// Output prefix: writes PREFIX.csv, PREFIX.summary.json and PREFIX.manifest.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum PlotFormat {
    Svg,
    Csv,
}

#[derive(Debug, Args, Serialize)]
struct PlotArgs {
    /// Grid-world config.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    fsc: PathBuf,
    /// Value table written by `solve` or `evaluate`.
    #[arg(long)]
    values: PathBuf,
    #[arg(long, value_enum, default_value_t = PlotFormat::Svg)]
    format: PlotFormat,
    /// Output prefix: writes PREFIX.svg or PREFIX.csv, plus PREFIX.manifest.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        Error::Syntax { .. }
        | Error::Semantic { .. }
        | Error::DimensionMismatch(_)
        | Error::InvalidInput(_)
        | Error::Json(_)
        | Error::Csv(_)
        | Error::EmptyDistribution => EXIT_INPUT,
        _ => EXIT_FAILURE,
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run(args: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let started = Instant::now();
    let result = match &cli.command {
        Command::Gridworld(a) => cmd_gridworld(a, started),
        Command::Solve(a) => cmd_solve(a, started),
        Command::Evaluate(a) => cmd_evaluate(a, started),
        Command::Simulate(a) => cmd_simulate(a, started),
        Command::Plot(a) => cmd_plot(a, started),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            let name = match &cli.command {
                Command::Gridworld(_) => "gridworld",
                Command::Solve(_) => "solve",
                Command::Evaluate(_) => "evaluate",
                Command::Simulate(_) => "simulate",
                Command::Plot(_) => "plot",
            };
            eprintln!("error: {msg}\n");
            let mut cmd = Cli::command();
            if let Some(sub) = cmd.find_subcommand_mut(name) {
                eprintln!("{}", sub.render_usage());
            }
            EXIT_USAGE
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn finish<A: Serialize>(
    rec: Recorder,
    command: &str,
    args: &A,
    seed: Option<u64>,
    manifest_path: &Path,
    started: Instant,
) -> CliResult {
    let config = serde_json::to_value(args).map_err(Error::from)?;
    let manifest = rec.finish(command, config, seed, started.elapsed().as_secs_f64());
    write_manifest(manifest_path, &manifest)?;
    Ok(())
}

/// Loads a POMDP file, or builds the model from a grid-world config.
fn load_model(rec: &mut Recorder, path: &Path) -> CliResult<Pomdp> {
    Ok(load_model_kind(rec, path)?.0)
}

/// The model and whether it came from a grid-world config.
fn load_model_kind(rec: &mut Recorder, path: &Path) -> CliResult<(Pomdp, bool)> {
    let text = rec.read(path)?;
    if let Some(spec) = try_grid(&text)? {
        return Ok((make_gridworld_with_discount(&spec, 0.95)?, true));
    }
    let m = parse_pomdp_unchecked(&text)?;
    let violations = validate_pomdp(&m);
    if let Some(first) = violations.first() {
        for v in &violations {
            eprintln!("violation: {v}");
        }
        return Err(Error::Semantic { location: first.location.clone(), message: first.to_string() }.into());
    }
    Ok((m, false))
}

/// Parses `text` as a grid-world config when it declares the grid format.
fn try_grid(text: &str) -> CliResult<Option<GridWorldSpec>> {
    let declares_grid = text
        .lines()
        .map(str::trim)
        .any(|l| l.starts_with("format") && l.contains(&format!("\"{GRID_FORMAT}\"")));
    if !declares_grid {
        return Ok(None);
    }
    Ok(Some(GridWorldSpec::from_toml(text)?))
}

fn load_fsc(rec: &mut Recorder, path: &Path) -> CliResult<Fsc> {
    Ok(Fsc::from_json(&rec.read(path)?)?)
}

fn check_gamma(gamma: f64) -> CliResult {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--gamma must lie in (0, 1), got {gamma}")))
    }
}

fn read_obstacles(rec: &mut Recorder, path: &Path) -> CliResult<Vec<Cell>> {
    let text = rec.read(path)?;
    let mut cells = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let cell = parse_cell(line).map_err(|message| Error::Syntax { line: i + 1, message })?;
        cells.push(cell);
    }
    Ok(cells)
}

fn cmd_gridworld(a: &GridworldArgs, started: Instant) -> CliResult {
    check_gamma(a.gamma)?;
    if a.rows == 0 || a.cols == 0 {
        return Err(CliError::Usage("--rows and --cols must be positive".into()));
    }
    let mut rec = Recorder::default();
    let goal = a.goal.unwrap_or((0, a.cols - 1));
    let obstacles = match (&a.obstacle_file, a.obstacles) {
        (Some(path), _) => read_obstacles(&mut rec, path)?,
        (None, Some(n)) => random_obstacles(a.rows, a.cols, n, goal, a.start, a.seed)?,
        (None, None) => unreachable!("clap requires one obstacle source"),
    };
    let mut spec = GridWorldSpec::new(a.rows, a.cols, obstacles, goal);
    spec.start = a.start;
    spec.delta = a.delta;
    spec.fn_rate = a.fn_rate;
    spec.fp_rate = a.fp_rate;
    spec.move_cost = a.move_cost;
    spec.crash_cost = a.crash_cost;
    spec.validate()?;
    let m = make_gridworld_with_discount(&spec, a.gamma)?;
    rec.write(&prefixed(&a.out, "toml"), spec.to_toml().as_bytes())?;
    rec.write(&prefixed(&a.out, "pomdp"), write_pomdp(&m).as_bytes())?;
    eprintln!(
        "grid {}x{} with {} obstacles: |S| = {}, |A| = {}, |O| = {}",
        spec.rows,
        spec.cols,
        spec.obstacles.len(),
        m.num_states(),
        m.num_actions(),
        m.num_observations()
    );
    finish(rec, "gridworld", a, Some(a.seed), &prefixed(&a.out, "manifest.json"), started)
}

fn cmd_solve(a: &SolveArgs, started: Instant) -> CliResult {
    let spec = a.risk.spec()?;
    if let Some(g) = a.gamma {
        check_gamma(g)?;
    }
    let mut rec = Recorder::default();
    let (m, is_grid) = load_model_kind(&mut rec, &a.model)?;
    let gamma = a.gamma.unwrap_or(m.discount());
    let mut cfg = BpiConfig::new(spec, gamma, a.max_nodes, a.new_nodes);
    cfg.tol = a.tol;
    cfg.max_iterations = a.max_iterations;
    cfg.seed = a.seed;
    cfg.per_state_fallback = !a.uniform_only;
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let init_nodes = a.init_nodes.unwrap_or(if is_grid { 2.min(a.max_nodes) } else { 1 });
    if init_nodes == 0 || init_nodes > a.max_nodes {
        return Err(CliError::Usage(format!("--init-nodes must lie in 1..={}", a.max_nodes)));
    }
    let f0 = default_initial_fsc(&m, init_nodes, a.seed)?;
    let (f, v, trace) = run_bpi(&m, &f0, &cfg)?;

    rec.write(&a.out, f.to_json().as_bytes())?;
    let mut buf = Vec::new();
    v.write_csv(&mut buf)?;
    rec.write(&companion(&a.out, "values.csv"), &buf)?;
    buf.clear();
    v.write_optimum_csv(&mut buf)?;
    rec.write(&companion(&a.out, "optimum.csv"), &buf)?;
    rec.write(&companion(&a.out, "trace.json"), trace.to_json().as_bytes())?;
    buf.clear();
    trace.write_csv(&mut buf)?;
    rec.write(&companion(&a.out, "trace.csv"), &buf)?;

    eprintln!(
        "{} iterations, {} nodes{}",
        trace.iterations.len(),
        f.num_nodes(),
        if trace.cap_reached { " (iteration cap reached)" } else { "" }
    );
    println!("objective {}", trace.final_objective);
    finish(rec, "solve", a, Some(a.seed), &companion(&a.out, "manifest.json"), started)
}

fn cmd_evaluate(a: &EvaluateArgs, started: Instant) -> CliResult {
    let spec = a.risk.spec()?;
    if let Some(g) = a.gamma {
        check_gamma(g)?;
    }
    if !(a.tol > 0.0) {
        return Err(CliError::Usage("--tol must be positive".into()));
    }
    let mut rec = Recorder::default();
    let mut m = load_model(&mut rec, &a.model)?;
    if let Some(g) = a.gamma {
        m.set_discount(g);
    }
    let f = load_fsc(&mut rec, &a.fsc)?;
    f.check_compatible(&m)?;
    let v = evaluate_fsc(&m, &f, &spec, a.tol)?;
    let r = residual(&m, &f, &spec, &v)?;

    let mut buf = Vec::new();
    v.write_csv(&mut buf)?;
    rec.write(&prefixed(&a.out, "values.csv"), &buf)?;
    buf.clear();
    v.write_optimum_csv(&mut buf)?;
    rec.write(&prefixed(&a.out, "optimum.csv"), &buf)?;
    println!("objective {}", v.objective(m.initial()));
    println!("residual {r:e}");
    finish(rec, "evaluate", a, None, &prefixed(&a.out, "manifest.json"), started)
}

#[derive(Debug, Serialize)]
struct ScenarioSummary {
    format: &'static str,
    version: u32,
    scenarios: usize,
    failures: usize,
    successes: usize,
    timeouts: usize,
    mean_cost: f64,
    cvar_alpha: f64,
    cvar_cost: f64,
}

fn cmd_simulate(a: &SimulateArgs, started: Instant) -> CliResult {
    if !(a.cvar_alpha > 0.0 && a.cvar_alpha <= 1.0) {
        return Err(CliError::Usage(format!("--cvar-alpha must lie in (0, 1], got {}", a.cvar_alpha)));
    }
    if a.scenarios == 0 || a.max_steps == 0 || !(0.0..=1.0).contains(&a.perturb) {
        return Err(CliError::Usage("--scenarios and --max-steps must be positive, --perturb in [0, 1]".into()));
    }
    let mut rec = Recorder::default();
    let text = rec.read(&a.spec)?;
    let spec = GridWorldSpec::from_toml(&text)?;
    let f = load_fsc(&mut rec, &a.fsc)?;
    let report = run_scenarios(&spec, &f, a.scenarios, a.perturb, a.seed, a.max_steps)?;

    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    rec.write(&prefixed(&a.out, "csv"), &buf)?;
    let summary = ScenarioSummary {
        format: "riskfsc-scenario-summary",
        version: 1,
        scenarios: report.count(),
        failures: report.failures,
        successes: report.successes,
        timeouts: report.timeouts,
        mean_cost: report.mean_cost(),
        cvar_alpha: a.cvar_alpha,
        cvar_cost: report.cvar_cost(a.cvar_alpha),
    };
    let mut text = serde_json::to_string_pretty(&summary).map_err(Error::from)?;
    text.push('\n');
    rec.write(&prefixed(&a.out, "summary.json"), text.as_bytes())?;
    println!(
        "failures {} successes {} timeouts {} mean {} cvar({}) {}",
        summary.failures, summary.successes, summary.timeouts, summary.mean_cost, a.cvar_alpha, summary.cvar_cost
    );
    finish(rec, "simulate", a, Some(a.seed), &prefixed(&a.out, "manifest.json"), started)
}

fn cmd_plot(a: &PlotArgs, started: Instant) -> CliResult {
    let mut rec = Recorder::default();
    let text = rec.read(&a.model)?;
    let Some(spec) = try_grid(&text)? else {
        return Err(Error::InvalidInput(format!("{} is not a grid-world config", a.model.display())).into());
    };
    let m = make_gridworld_with_discount(&spec, 0.95)?;
    let f = load_fsc(&mut rec, &a.fsc)?;
    let values_text = rec.read(&a.values)?;
    let v = ValueTable::read_csv(&values_text, RiskSpec::Expectation, m.discount())?;
    let cells = plot::cell_views(&spec, &m, &f, &v)?;
    let g0 = plot::initial_node(&f);
    match a.format {
        PlotFormat::Svg => rec.write(&prefixed(&a.out, "svg"), plot::render_svg(&spec, &cells, g0).as_bytes())?,
        PlotFormat::Csv => rec.write(&prefixed(&a.out, "csv"), plot::render_csv(&cells, g0)?.as_bytes())?,
    }
    finish(rec, "plot", a, None, &prefixed(&a.out, "manifest.json"), started)
}
