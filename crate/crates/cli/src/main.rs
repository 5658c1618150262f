use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lrlab_core::adiabatic::{condition_report, run_adiabatic, RunSummary, DEFAULT_CLUSTER_TOL};
use lrlab_core::basis_blocks::{bandwidth, pairwise_decompose};
use lrlab_core::experiment::{reproduce_figure1, ExperimentConfig, MU_SEARCH_RANGE};
use lrlab_core::locality::{a_mu_pointwise, optimize_mu_with, Certifier};
use lrlab_core::plot::{LinePlot, Scale};
use lrlab_core::propagation::{bound_audit, check_spread_bound, evolve, propagator_spread};
use lrlab_core::{
    Block, ErrorKind, LabError, LocalityCertificate, Permutation, Result, TimeDependentHamiltonian,
    TimeGrid,
};

const DEFAULT_TOTAL_TIME: f64 = 25.0;

#[derive(Parser, Debug)]
#[command(
    name = "lrlab",
    version,
    about = "Light-cone bounds in a basis labeling and adiabatic diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config (JSON)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Decay rate of the locality certificate
    #[arg(long, global = true)]
    mu: Option<f64>,
    /// Choose μ by minimising the time-averaged speed
    #[arg(long, global = true)]
    optimize: bool,
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Number of grid points
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Integrator tolerance
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Detect crossings in the t = 0 eigenbasis
    #[arg(long, global = true)]
    fixed_basis: bool,
    /// Total time for single-run subcommands
    #[arg(long, global = true)]
    total_time: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Block decomposition statistics of H(0) and H(T)
    Decompose,
    /// Emit a locality certificate as JSON
    Locality,
    /// Audit the commutator bound for two disjoint supports
    BoundCheck {
        /// Comma-separated labels, e.g. 0,1,2
        #[arg(long, value_parser = parse_block)]
        supp_a: Block,
        #[arg(long, value_parser = parse_block)]
        supp_b: Block,
    },
    /// Propagator amplitudes out of one source label
    Spread {
        #[arg(long, default_value_t = 0)]
        source: usize,
    },
    /// Single-T adiabatic run summary
    Adiabatic,
    /// Sweep T and write fig1.csv plus plots
    Fig1,
}

fn parse_block(s: &str) -> std::result::Result<Block, String> {
    let labels = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|e| format!("bad label {p:?}: {e}"))
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Block::new(labels).map_err(|e| e.to_string())
}

fn resolve_config(common: &Common) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::new(vec![DEFAULT_TOTAL_TIME]),
    };
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    if let Some(mu) = common.mu {
        config.mu = Some(mu);
    }
    if let Some(t) = common.threshold {
        config.threshold = t;
    }
    if let Some(n) = common.grid {
        config.grid_points = n;
    }
    if let Some(tol) = common.tol {
        config.integrator_tol = tol;
    }
    if common.seed.is_some() {
        config.seed = common.seed;
    }
    config.fixed_basis |= common.fixed_basis;
    if let Some(t) = common.total_time {
        config.t_values = vec![t];
    }
    config.validate()?;
    Ok(config)
}

struct Setup {
    config: ExperimentConfig,
    total_time: f64,
    h: TimeDependentHamiltonian,
    grid: TimeGrid,
}

fn setup(common: &Common) -> Result<Setup> {
    let config = resolve_config(common)?;
    let total_time = config.t_values[0];
    let h = config.build_hamiltonian(total_time)?;
    let grid = config.grid(total_time)?;
    Ok(Setup {
        config,
        total_time,
        h,
        grid,
    })
}

fn certificate(s: &Setup, optimize: bool) -> Result<LocalityCertificate> {
    let certifier = Certifier::new(&s.h, &s.grid, Permutation::identity(s.h.dimension()))?;
    match (optimize, s.config.mu) {
        (true, _) => Ok(optimize_mu_with(&certifier, MU_SEARCH_RANGE)?.1),
        (false, Some(mu)) => certifier.certificate(mu),
        (false, None) => Err(LabError::Config("pass --mu or --optimize".into())),
    }
}

fn emit(out: Option<&Path>, name: &str, body: &str) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(name), body)?;
        }
        None => print!("{body}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    let out = common.out.as_deref();
    match cli.command {
        Command::Decompose => {
            let s = setup(common)?;
            let mut rows = Vec::new();
            for t in [0.0, s.total_time] {
                let m = s.h.evaluate(t)?;
                let d = pairwise_decompose(&m)?;
                let mut row = serde_json::json!({
                    "t": t,
                    "dimension": d.dimension,
                    "singletons": d.singleton_count(),
                    "pairs": d.pair_count(),
                    "bandwidth": bandwidth(&m),
                });
                if let Some(mu) = s.config.mu {
                    row["a_mu"] = serde_json::json!(a_mu_pointwise(&d, mu));
                }
                rows.push(row);
            }
            emit(
                out,
                "decompose.json",
                &(serde_json::to_string_pretty(&rows)? + "\n"),
            )
        }
        Command::Locality => {
            let s = setup(common)?;
            let cert = certificate(&s, common.optimize)?;
            emit(out, "locality.json", &(cert.to_json()? + "\n"))
        }
        Command::BoundCheck { supp_a, supp_b } => {
            if supp_a.intersects(&supp_b) {
                return Err(LabError::Precondition(
                    "operator supports must be disjoint".into(),
                ));
            }
            let s = setup(common)?;
            let cert = certificate(&s, common.optimize)?;
            let report = bound_audit(&s.h, &supp_a, &supp_b, &cert, &s.grid)?;
            if let Some(dir) = out {
                emit(Some(dir), "audit.csv", &report.to_csv())?;
            }
            println!("{}", report.summary_json());
            report.ensure_clean()
        }
        Command::Spread { source } => {
            let s = setup(common)?;
            let u = evolve(&s.h, &s.grid, s.config.integrator_tol)?;
            let spread = propagator_spread(&u, source)?;
            emit(out, "spread.csv", &spread.to_csv())?;
            if let Some(dir) = out {
                let last = spread.amplitudes.last().expect("grid has points");
                let plot = LinePlot {
                    title: format!("amplitudes from label {source} at t = {}", s.total_time),
                    x_label: "label".into(),
                    y_label: "|<j|U|i>|".into(),
                    x_scale: Scale::Linear,
                    y_scale: Scale::Log10,
                    points: last
                        .iter()
                        .enumerate()
                        .map(|(j, a)| (j as f64, *a))
                        .collect(),
                };
                emit(Some(dir), "spread.svg", &plot.to_svg())?;
            }
            if common.optimize || s.config.mu.is_some() {
                let audit = check_spread_bound(&spread, &certificate(&s, common.optimize)?)?;
                if audit.violations > 0 {
                    return Err(LabError::BoundViolation {
                        violations: audit.violations,
                        min_margin: audit.min_margin,
                    });
                }
            }
            Ok(())
        }
        Command::Adiabatic => {
            let s = setup(common)?;
            let run = run_adiabatic(&s.h, &s.grid, s.config.integrator_tol, DEFAULT_CLUSTER_TOL)?;
            let cert = match s.config.mu {
                None => certificate(&s, true)?,
                Some(_) => certificate(&s, common.optimize)?,
            };
            let report = condition_report(&s.h, &run.flow, &cert)?;
            let summary = RunSummary::new(s.total_time, &run, &report);
            emit(
                out,
                "adiabatic.json",
                &(serde_json::to_string_pretty(&summary)? + "\n"),
            )
        }
        Command::Fig1 => {
            let config = resolve_config(common)?;
            let outcome = reproduce_figure1(&config)?;
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            for (t, e) in &outcome.failures {
                eprintln!("T = {t}: {e}");
            }
            for path in &outcome.files {
                println!("{}", path.display());
            }
            match outcome.failures.into_iter().next() {
                Some((_, e)) => Err(e),
                None => Ok(()),
            }
        }
    }
}

fn exit_code(e: &LabError) -> u8 {
    match e.kind() {
        ErrorKind::Validation => 1,
        ErrorKind::Numerical => 2,
        ErrorKind::BoundViolation => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
