//! Subcommands and exit codes.
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | configuration, input or output error |
//! | 2 | the continuity path or the ε-sweep stopped early |
//! | 3 | a verified property failed |

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use plateau_core::continuation::run_epsilon_path;
use plateau_core::grid::{build_domain, GridDomain};
use plateau_core::solver::{solve_dirichlet, PathStatus, SolverReport};
use plateau_core::verify::{check_conditions, interior_samples, HypothesisReport};

use crate::config::{ConfigError, RunConfig};
use crate::io::{self, IoError, ScheduleRow};
use crate::suite::run_suite;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_PATH: u8 = 2;
pub const EXIT_PROPERTY: u8 = 3;

/// Built-in problem used by `verify` without `--config`.
pub const DEFAULT_CONFIG: &str = r#"[problem]
n = 2
k = 2
sigma = 0.55
psi = { family = "constant", c = 0.36 }
subsolution = { family = "cap", sigma = 0.7, radius = 0.5, center = [0.0, 0.0] }

[grid]
h = 0.03125

[path]
eps = [0.1]
"#;

#[derive(Debug, Parser)]
#[command(name = "plateau", version, about = "Prescribed curvature graphs in hyperbolic half-space")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for assembly; defaults to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed of the randomized checks; overrides `verify.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Solve at the first ε of the schedule.
    Solve,
    /// Solve along the whole ε-schedule.
    Plateau,
    /// Run the property suite.
    Verify,
    /// Turn the outputs of `plateau` or `solve` into plot tables.
    PlotData,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{0}")]
    Core(#[from] plateau_core::Error),
    #[error("{0}")]
    Setup(String),
    #[error("{0}")]
    Path(String),
    #[error("{0}")]
    Property(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Path(_) => EXIT_PATH,
            CliError::Property(_) => EXIT_PROPERTY,
            _ => EXIT_CONFIG,
        }
    }
}

/// Run a parsed command line and map the outcome to an exit code, with
/// diagnostics on standard error.
pub fn run(cli: &Cli) -> u8 {
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("plateau: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    if cli.command == Command::PlotData {
        let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        return plot_data(&out);
    }
    let cfg = match (&cli.config, cli.command) {
        (Some(p), _) => RunConfig::load(p)?,
        (None, Command::Verify) => RunConfig::from_toml(DEFAULT_CONFIG)?,
        (None, _) => return Err(CliError::Setup("--config is required".into())),
    };
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    std::fs::create_dir_all(&out)
        .map_err(|source| IoError::File { path: out.display().to_string(), source })?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| CliError::Setup(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Solve => solve(&cfg, &out),
        Command::Plateau => plateau(&cfg, &out),
        Command::Verify => verify(&cfg, &out, cli.seed.unwrap_or(cfg.verify.seed)),
        Command::PlotData => unreachable!(),
    })
}

#[derive(Serialize)]
struct DomainSummary {
    n: usize,
    h: f64,
    eps: f64,
    eps_requested: f64,
    dofs: usize,
    components: usize,
    warnings: Vec<String>,
}

impl DomainSummary {
    fn of(d: &GridDomain) -> Self {
        DomainSummary {
            n: d.n,
            h: d.h,
            eps: d.eps,
            eps_requested: d.eps_requested,
            dofs: d.num_dofs(),
            components: d.components,
            warnings: d.warnings.clone(),
        }
    }
}

#[derive(Serialize)]
struct SolveDoc<'a> {
    config: &'a RunConfig,
    domain: DomainSummary,
    solver: &'a SolverReport,
    hypotheses: Option<HypothesisReport>,
}

fn path_failure(status: &PathStatus) -> Option<String> {
    match status {
        PathStatus::Completed => None,
        PathStatus::Failed { stage, last_good_t, attempted_t, reason } => Some(format!(
            "continuity path failed in stage {stage} at t = {attempted_t} (last good t = {last_good_t}): {reason}"
        )),
    }
}

fn solve(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let spec = cfg.problem_spec()?;
    let dom = build_domain(&spec.sub, spec.eps, cfg.h_policy().h(spec.eps))?;
    let (field, report) = solve_dirichlet(&spec, &dom, &cfg.solver)?;
    let samples = interior_samples(&spec, spec.eps, 2.0 * dom.h);
    let hypotheses = check_conditions(&spec, &samples, &cfg.verify.conditions).ok();
    io::write_field_csv(&out.join("field.csv"), &dom, &field.values)?;
    if cfg.output.node_table {
        io::write_node_table(&out.join("nodes.csv"), &dom)?;
    }
    let doc = SolveDoc { config: cfg, domain: DomainSummary::of(&dom), solver: &report, hypotheses };
    io::write_json(&out.join("report.json"), "solve", &doc)?;
    match path_failure(&report.status) {
        Some(msg) => Err(CliError::Path(msg)),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct LevelDoc<'a> {
    eps: f64,
    domain: DomainSummary,
    field: String,
    solver: &'a SolverReport,
    diagnostics: &'a plateau_core::continuation::StabilityDiagnostics,
    warm_started: bool,
}

#[derive(Serialize)]
struct PlateauDoc<'a> {
    config: &'a RunConfig,
    levels: Vec<LevelDoc<'a>>,
    failure: Option<&'a str>,
    probe_points: &'a [Vec<f64>],
    extrapolated: Option<&'a [f64]>,
}

fn plateau(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let spec = cfg.problem_spec()?;
    let run = run_epsilon_path(&spec, &cfg.schedule(), &cfg.continuation_options())?;
    let mut rows = Vec::new();
    let mut levels = Vec::new();
    for (j, s) in run.levels.iter().enumerate() {
        let name = format!("field_{j:02}.csv");
        io::write_field_csv(&out.join(&name), &s.domain, &s.field.values)?;
        if cfg.output.node_table {
            io::write_node_table(&out.join(format!("nodes_{j:02}.csv")), &s.domain)?;
        }
        rows.push(ScheduleRow::from_level(j, s));
        levels.push(LevelDoc {
            eps: s.eps,
            domain: DomainSummary::of(&s.domain),
            field: name,
            solver: &s.report,
            diagnostics: &s.diagnostics,
            warm_started: s.warm_started,
        });
    }
    io::write_schedule_csv(&out.join("summary.csv"), &rows)?;
    let doc = PlateauDoc {
        config: cfg,
        levels,
        failure: run.failure.as_deref(),
        probe_points: &run.probe_points,
        extrapolated: run.extrapolated.as_deref(),
    };
    io::write_json(&out.join("report.json"), "plateau", &doc)?;
    match &run.failure {
        Some(f) => Err(CliError::Path(format!("sweep stopped after {} levels: {f}", run.levels.len()))),
        None => Ok(()),
    }
}

fn verify(cfg: &RunConfig, out: &Path, seed: u64) -> Result<(), CliError> {
    let report = run_suite(cfg, seed);
    io::write_json(&out.join("verify.json"), "verify", &report)?;
    for c in &report.checks {
        eprintln!("{:<20} {:?} passed={} value={:e} tol={:e} {}", c.name, c.kind, c.passed, c.value, c.tolerance, c.detail);
    }
    match report.first_failure() {
        Some(c) => Err(CliError::Property(format!(
            "check {} failed: {}",
            c.name,
            c.witness.clone().unwrap_or_else(|| format!("{:e} exceeds {:e}", c.value, c.tolerance))
        ))),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct ProfileRow {
    coordinate: f64,
    u: f64,
}

fn plot_data(out: &Path) -> Result<(), CliError> {
    let plot = out.join("plot");
    let mut wrote = false;
    let summary = out.join("summary.csv");
    if summary.exists() {
        std::fs::create_dir_all(&plot).map_err(|source| IoError::File { path: plot.display().to_string(), source })?;
        let rows = io::read_schedule_csv(&summary)?;
        io::write_rows(&plot.join("schedule.csv"), &io::schedule_plot_rows(&rows))?;
        wrote = true;
    }
    let mut fields: Vec<PathBuf> = std::fs::read_dir(out)
        .map_err(|source| IoError::File { path: out.display().to_string(), source })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|s| s.to_str()).unwrap_or("");
            name.starts_with("field") && name.ends_with(".csv")
        })
        .collect();
    fields.sort();
    for f in fields {
        let table = io::read_field_csv(&f)?;
        let Some(prof) = io::centerline_profile(&table) else { continue };
        std::fs::create_dir_all(&plot).map_err(|source| IoError::File { path: plot.display().to_string(), source })?;
        let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or("field");
        let rows: Vec<ProfileRow> = prof.into_iter().map(|(coordinate, u)| ProfileRow { coordinate, u }).collect();
        io::write_rows(&plot.join(format!("profile_{stem}.csv")), &rows)?;
        wrote = true;
    }
    if wrote {
        Ok(())
    } else {
        Err(CliError::Setup(format!("no summary.csv or field CSV found in {}", out.display())))
    }
}
