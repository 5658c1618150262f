//! Experiment configuration and the δ_ad versus V_LR sweep: empirical light-cone
//! speeds from threshold crossings, adiabatic errors, CSV/JSON/SVG output.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adiabatic::{
    condition_report, run_adiabatic, RunSummary, SpectralFlow, DEFAULT_CLUSTER_TOL,
};
use crate::basis_blocks::Permutation;
use crate::error::{LabError, Result};
use crate::hamiltonian_model::{
    build_paper_example, random_exp_local, ExpLocalSpec, TimeDependentHamiltonian,
};
use crate::locality::{optimize_mu_with, Certifier};
use crate::numerics::{operator_norm_unchecked, CMatrix, TimeGrid};
use crate::plot::LinePlot;
use crate::propagation::{fmt17, Propagator};

pub const DEFAULT_THRESHOLD: f64 = 6e-4;
pub const DEFAULT_GRID_POINTS: usize = 2001;
pub const DEFAULT_INTEGRATOR_TOL: f64 = 1e-9;
/// Search range for μ when the config leaves it open.
pub const MU_SEARCH_RANGE: (f64, f64) = (0.05, 5.0);
pub const GAP_WINDOW: (f64, f64) = (0.095, 0.105);
pub const NORM_WINDOW: (f64, f64) = (0.95, 1.85);
pub const CSV_HEADER: &str = "T,v_lr,delta_ad,gap_min,h_norm_min,h_norm_max";
pub const THREADS_ENV: &str = "LRLAB_THREADS";

/// Dense matrix as rows of `[re, im]` pairs.
pub type MatrixSpec = Vec<Vec<[f64; 2]>>;

pub fn matrix_from_spec(spec: &MatrixSpec) -> Result<CMatrix> {
    let n = spec.len();
    if n == 0 || spec.iter().any(|row| row.len() != n) {
        return Err(LabError::Config(
            "matrix must be a nonempty square array".into(),
        ));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| {
        let [re, im] = spec[i][j];
        Complex64::new(re, im)
    }))
}

pub fn matrix_to_spec(m: &CMatrix) -> MatrixSpec {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| [m[(i, j)].re, m[(i, j)].im])
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HamiltonianSpec {
    #[default]
    PaperExample,
    /// `H(t) = (1 − t/T)·initial + (t/T)·final`.
    Linear {
        initial: MatrixSpec,
        r#final: MatrixSpec,
    },
    Constant {
        matrix: MatrixSpec,
    },
    /// Constant member of the exponential-envelope ensemble; uses the config seed.
    RandomExpLocal {
        dimension: usize,
        amplitude: f64,
        decay: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub hamiltonian: HamiltonianSpec,
    #[serde(rename = "T_values")]
    pub t_values: Vec<f64>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_tol")]
    pub integrator_tol: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Detect crossings in the t = 0 eigenbasis instead of the instantaneous one.
    #[serde(default)]
    pub fixed_basis: bool,
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}
fn default_grid_points() -> usize {
    DEFAULT_GRID_POINTS
}
fn default_tol() -> f64 {
    DEFAULT_INTEGRATOR_TOL
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn new(t_values: Vec<f64>) -> Self {
        ExperimentConfig {
            hamiltonian: HamiltonianSpec::PaperExample,
            t_values,
            threshold: DEFAULT_THRESHOLD,
            mu: None,
            grid_points: DEFAULT_GRID_POINTS,
            integrator_tol: DEFAULT_INTEGRATOR_TOL,
            output_dir: default_output_dir(),
            seed: None,
            fixed_basis: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(LabError::Config(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        if self.t_values.is_empty() {
            return Err(LabError::Config("T_values must be nonempty".into()));
        }
        if let Some(t) = self.t_values.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(LabError::Config(format!(
                "T values must be positive, got {t}"
            )));
        }
        if self.grid_points < 2 {
            return Err(LabError::Config("grid_points must be at least 2".into()));
        }
        if !(self.integrator_tol > 0.0) {
            return Err(LabError::Config("integrator_tol must be positive".into()));
        }
        if let Some(mu) = self.mu {
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(LabError::Config(format!("mu must be positive, got {mu}")));
            }
        }
        Ok(())
    }

    pub fn build_hamiltonian(&self, total_time: f64) -> Result<TimeDependentHamiltonian> {
        match &self.hamiltonian {
            HamiltonianSpec::PaperExample => build_paper_example(total_time),
            HamiltonianSpec::Linear { initial, r#final } => TimeDependentHamiltonian::linear(
                matrix_from_spec(initial)?,
                matrix_from_spec(r#final)?,
                total_time,
            ),
            HamiltonianSpec::Constant { matrix } => {
                TimeDependentHamiltonian::constant(matrix_from_spec(matrix)?)
            }
            HamiltonianSpec::RandomExpLocal {
                dimension,
                amplitude,
                decay,
            } => {
                let spec = ExpLocalSpec {
                    dimension: *dimension,
                    amplitude: *amplitude,
                    decay: *decay,
                    seed: self.seed.unwrap_or(0),
                };
                TimeDependentHamiltonian::constant(random_exp_local(&spec)?)
            }
        }
    }

    pub fn grid(&self, total_time: f64) -> Result<TimeGrid> {
        TimeGrid::uniform(total_time, self.grid_points)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrossingBasis {
    #[default]
    Instantaneous,
    Initial,
}

/// Threshold crossings of `|⟨E_k(t)|U(t)|E_0(0)⟩|`.
#[derive(Debug, Clone, Serialize)]
pub struct CrossingAnalysis {
    pub v_lr: f64,
    /// Indexed by level; level 0 is the source and never has an entry.
    pub crossing_times: Vec<Option<f64>>,
    /// `(ℓ₁, ℓ₂, (ℓ₂ − ℓ₁)/(t₂ − t₁))` for every crossed pair `ℓ₁ < ℓ₂`.
    pub pairwise: Vec<(usize, usize, f64)>,
}

impl CrossingAnalysis {
    pub fn crossed_levels(&self) -> Vec<(usize, f64)> {
        self.crossing_times
            .iter()
            .enumerate()
            .filter_map(|(k, t)| t.map(|t| (k, t)))
            .collect()
    }
}

/// Amplitudes `|⟨E_k|U(t_j)|E_0(0)⟩|`, indexed `[j][k]`.
pub fn level_amplitudes(
    u: &Propagator,
    flow: &SpectralFlow,
    basis: CrossingBasis,
) -> Vec<Vec<f64>> {
    let source = flow.frames[0].column(0).clone_owned();
    u.unitaries
        .iter()
        .enumerate()
        .map(|(j, uj)| {
            let psi = uj * &source;
            let frame = match basis {
                CrossingBasis::Instantaneous => &flow.frames[j],
                CrossingBasis::Initial => &flow.frames[0],
            };
            (frame.adjoint() * psi).iter().map(|c| c.norm()).collect()
        })
        .collect()
}

/// First time each level's amplitude exceeds `threshold`, linearly
/// interpolated between the bracketing grid points.
pub fn crossing_times(amplitudes: &[Vec<f64>], times: &[f64], threshold: f64) -> Vec<Option<f64>> {
    let n = amplitudes.first().map_or(0, Vec::len);
    (0..n)
        .map(|k| {
            if k == 0 {
                return None;
            }
            let j = amplitudes.iter().position(|a| a[k] > threshold)?;
            if j == 0 {
                return Some(times[0]);
            }
            let (a0, a1) = (amplitudes[j - 1][k], amplitudes[j][k]);
            let frac = (threshold - a0) / (a1 - a0);
            Some(times[j - 1] + frac * (times[j] - times[j - 1]))
        })
        .collect()
}

/// Least-squares slope of `y` against `x`.
pub fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

pub fn analyze_crossings(
    u: &Propagator,
    flow: &SpectralFlow,
    threshold: f64,
    basis: CrossingBasis,
) -> Result<CrossingAnalysis> {
    if !(threshold > 0.0) {
        return Err(LabError::Domain(format!(
            "threshold must be positive, got {threshold}"
        )));
    }
    let amplitudes = level_amplitudes(u, flow, basis);
    let times = crossing_times(&amplitudes, &u.times, threshold);
    let crossed: Vec<(usize, f64)> = times
        .iter()
        .enumerate()
        .filter_map(|(k, t)| t.map(|t| (k, t)))
        .collect();
    if crossed.len() < 2 {
        return Err(LabError::InsufficientCrossings {
            crossed: crossed.len(),
            crossing_times: times,
        });
    }
    let slope_points: Vec<(f64, f64)> = crossed.iter().map(|&(k, t)| (t, k as f64)).collect();
    let v_lr = least_squares_slope(&slope_points);
    let mut pairwise = Vec::new();
    for (a, &(l1, t1)) in crossed.iter().enumerate() {
        for &(l2, t2) in &crossed[a + 1..] {
            pairwise.push((l1, l2, (l2 - l1) as f64 / (t2 - t1)));
        }
    }
    Ok(CrossingAnalysis {
        v_lr,
        crossing_times: times,
        pairwise,
    })
}

/// Evolves `h` on `grid` and measures the empirical light-cone speed.
pub fn empirical_v_lr(
    h: &TimeDependentHamiltonian,
    grid: &TimeGrid,
    threshold: f64,
    tol: f64,
    basis: CrossingBasis,
) -> Result<CrossingAnalysis> {
    let flow = crate::adiabatic::spectral_flow(h, grid, DEFAULT_CLUSTER_TOL)?;
    let u = crate::propagation::evolve(h, grid, tol)?;
    analyze_crossings(&u, &flow, threshold, basis)
}

#[derive(Debug, Clone, Serialize)]
pub struct Figure1Record {
    #[serde(rename = "T")]
    pub total_time: f64,
    pub v_lr_empirical: f64,
    pub v_lr_pairwise: Vec<(usize, usize, f64)>,
    pub crossing_times: Vec<Option<f64>>,
    pub delta_ad: f64,
    pub gap_min: f64,
    pub h_norm_min: f64,
    pub h_norm_max: f64,
    pub mu: f64,
    pub summary: RunSummary,
}

impl Figure1Record {
    pub fn csv_row(&self) -> String {
        [
            self.total_time,
            self.v_lr_empirical,
            self.delta_ad,
            self.gap_min,
            self.h_norm_min,
            self.h_norm_max,
        ]
        .iter()
        .map(|v| fmt17(*v))
        .collect::<Vec<_>>()
        .join(",")
    }
}

pub fn run_single(config: &ExperimentConfig, total_time: f64) -> Result<Figure1Record> {
    let h = config.build_hamiltonian(total_time)?;
    let grid = config.grid(total_time)?;
    let run = run_adiabatic(&h, &grid, config.integrator_tol, DEFAULT_CLUSTER_TOL)?;
    let basis = if config.fixed_basis {
        CrossingBasis::Initial
    } else {
        CrossingBasis::Instantaneous
    };
    let crossings = analyze_crossings(&run.u, &run.flow, config.threshold, basis)?;

    let certifier = Certifier::new(&h, &grid, Permutation::identity(h.dimension()))?;
    let (mu, certificate) = match config.mu {
        Some(mu) => (mu, certifier.certificate(mu)?),
        None => optimize_mu_with(&certifier, MU_SEARCH_RANGE)?,
    };
    let report = condition_report(&h, &run.flow, &certificate)?;

    let norms = grid
        .points()
        .iter()
        .map(|&t| Ok(operator_norm_unchecked(&h.evaluate(t)?)))
        .collect::<Result<Vec<f64>>>()?;
    let h_norm_min = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let h_norm_max = norms.iter().copied().fold(0.0, f64::max);

    let record = Figure1Record {
        total_time,
        v_lr_empirical: crossings.v_lr,
        v_lr_pairwise: crossings.pairwise,
        crossing_times: crossings.crossing_times,
        delta_ad: run.delta_ad_final,
        gap_min: run.flow.gap_min,
        h_norm_min,
        h_norm_max,
        mu,
        summary: RunSummary::new(total_time, &run, &report),
    };
    let finite = [
        record.v_lr_empirical,
        record.delta_ad,
        record.gap_min,
        record.h_norm_min,
        record.h_norm_max,
    ]
    .iter()
    .all(|v| v.is_finite());
    if !finite || !(0.0..=1.0).contains(&record.delta_ad) {
        return Err(LabError::NonFinite(format!("record for T = {total_time}")));
    }
    Ok(record)
}

#[derive(Debug)]
pub struct Figure1Outcome {
    /// Successful runs, ordered by `T`.
    pub records: Vec<Figure1Record>,
    pub failures: Vec<(f64, LabError)>,
    pub warnings: Vec<String>,
    pub files: Vec<PathBuf>,
}

fn window_warnings(record: &Figure1Record) -> Vec<String> {
    let mut out = Vec::new();
    let t = record.total_time;
    if !(GAP_WINDOW.0..=GAP_WINDOW.1).contains(&record.gap_min) {
        out.push(format!(
            "T = {t}: minimum gap {} outside [{}, {}]",
            record.gap_min, GAP_WINDOW.0, GAP_WINDOW.1
        ));
    }
    for (name, v) in [
        ("minimum", record.h_norm_min),
        ("maximum", record.h_norm_max),
    ] {
        if !(NORM_WINDOW.0..=NORM_WINDOW.1).contains(&v) {
            out.push(format!(
                "T = {t}: {name} norm {v} outside [{}, {}]",
                NORM_WINDOW.0, NORM_WINDOW.1
            ));
        }
    }
    out
}

fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().map_err(|_| {
            LabError::Config(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))
        })?;
        builder = builder.num_threads(n.max(1));
    }
    builder
        .build()
        .map_err(|e| LabError::Config(format!("worker pool: {e}")))
}

pub fn figure1_csv(records: &[Figure1Record]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

fn t_tag(t: f64) -> String {
    format!("{t}").replace('.', "p")
}

/// Runs every `T`, then writes `fig1.csv`, both SVG plots and one JSON
/// summary per successful run into `config.output_dir`.
pub fn reproduce_figure1(config: &ExperimentConfig) -> Result<Figure1Outcome> {
    config.validate()?;
    let pool = worker_pool()?;
    let results: Vec<(f64, Result<Figure1Record>)> = pool.install(|| {
        config
            .t_values
            .par_iter()
            .map(|&t| (t, run_single(config, t)))
            .collect()
    });

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (t, r) in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => failures.push((t, e)),
        }
    }
    records.sort_by(|a, b| a.total_time.total_cmp(&b.total_time));
    failures.sort_by(|a, b| a.0.total_cmp(&b.0));
    let warnings = records.iter().flat_map(window_warnings).collect();

    let dir = &config.output_dir;
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut write = |name: String, body: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, body)?;
        files.push(path);
        Ok(())
    };
    write("fig1.csv".into(), figure1_csv(&records))?;
    write(
        "fig1_dad_vs_vlr.svg".into(),
        LinePlot::log_log(
            "adiabatic error vs light-cone speed",
            "V_LR",
            "delta_ad",
            records
                .iter()
                .map(|r| (r.v_lr_empirical, r.delta_ad))
                .collect(),
        )
        .to_svg(),
    )?;
    write(
        "fig1_vlr_vs_T.svg".into(),
        LinePlot::log_log(
            "light-cone speed vs total time",
            "T",
            "V_LR",
            records
                .iter()
                .map(|r| (r.total_time, r.v_lr_empirical))
                .collect(),
        )
        .to_svg(),
    )?;
    for r in &records {
        write(
            format!("run_T{}.json", t_tag(r.total_time)),
            serde_json::to_string_pretty(r)? + "\n",
        )?;
    }
    Ok(Figure1Outcome {
        records,
        failures,
        warnings,
        files,
    })
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties; NaN when either
/// input is constant or the lengths differ or are below 2.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    if x.len() != y.len() || x.len() < 2 {
        return f64::NAN;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    cov / (vx * vy).sqrt()
}
