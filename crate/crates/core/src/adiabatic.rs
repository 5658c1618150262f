//! Adiabatic diagnostics: spectral flow of the ground cluster, the adiabatic
//! Hamiltonian `H_ad = H + i[Ġ, G]`, its intertwiner `U_ad`, the kernel
//! `K = U_ad†(H − H_ad)U_ad`, the wave operator `Ω = U_ad†U`, and the
//! chain of adiabatic conditions.

use std::cell::RefCell;

use num_complex::Complex64;
use serde::Serialize;

use crate::basis_blocks::{pairwise_decompose_unchecked, Block, Permutation};
use crate::error::{LabError, Result};
use crate::hamiltonian_model::TimeDependentHamiltonian;
use crate::locality::LocalityCertificate;
use crate::numerics::{
    eigh_unchecked, identity, operator_norm_unchecked, CMatrix, EigenSystem, TimeGrid,
};
use crate::propagation::{evolve_fixed, evolve_from, integrate_adaptive, Propagator};

pub const DEFAULT_CLUSTER_TOL: f64 = 1e-8;
/// Below this gap the perturbative `Ġ` is refused.
pub const MIN_DERIVATIVE_GAP: f64 = 1e-8;
/// Slack for the pointwise inequalities in [`ConditionReport`].
pub const INEQUALITY_SLACK: f64 = 1e-9;

/// Ground cluster and gap along a time grid.
#[derive(Debug, Clone)]
pub struct SpectralFlow {
    pub grid: TimeGrid,
    pub eigenvalues: Vec<Vec<f64>>,
    /// Eigenvectors as columns, ascending, phases continued along the grid.
    pub frames: Vec<CMatrix>,
    pub ground_projectors: Vec<CMatrix>,
    pub gaps: Vec<f64>,
    pub gap_min: f64,
    pub ground_dim: usize,
    pub cluster_tol: f64,
    /// Smallest `|⟨E_k(t_{j+1})|E_k(t_j)⟩|` over levels and steps.
    pub min_overlap: f64,
}

impl SpectralFlow {
    pub fn ground_labels(&self) -> Block {
        Block::interval(0, self.ground_dim - 1).expect("ground cluster is nonempty")
    }

    pub fn initial_projector(&self) -> &CMatrix {
        &self.ground_projectors[0]
    }

    pub fn final_projector(&self) -> &CMatrix {
        self.ground_projectors.last().expect("flow is nonempty")
    }
}

fn cluster_dim(values: &[f64], cluster_tol: f64) -> usize {
    values
        .iter()
        .take_while(|&&v| v - values[0] <= cluster_tol)
        .count()
}

fn projector_from(vectors: &CMatrix, dim: usize) -> CMatrix {
    let cols = vectors.columns(0, dim);
    cols * cols.adjoint()
}

/// Rotates each column so its largest-magnitude component is real positive.
fn fix_phases_absolute(v: &mut CMatrix) {
    for mut col in v.column_iter_mut() {
        let pivot = col
            .iter()
            .copied()
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .unwrap_or(Complex64::new(1.0, 0.0));
        if pivot.norm() > 0.0 {
            col *= pivot.conj() / pivot.norm();
        }
    }
}

/// Rotates each column so its overlap with the previous frame is real
/// positive; returns the smallest overlap modulus.
fn fix_phases_continuous(v: &mut CMatrix, previous: &CMatrix) -> f64 {
    let mut min_overlap = f64::INFINITY;
    for (k, mut col) in v.column_iter_mut().enumerate() {
        let overlap = previous.column(k).dotc(&col);
        min_overlap = min_overlap.min(overlap.norm());
        if overlap.norm() > 0.0 {
            col *= overlap.conj() / overlap.norm();
        }
    }
    min_overlap
}

pub fn spectral_flow(
    h: &TimeDependentHamiltonian,
    grid: &TimeGrid,
    cluster_tol: f64,
) -> Result<SpectralFlow> {
    let n = h.dimension();
    let mut eigenvalues = Vec::with_capacity(grid.len());
    let mut frames: Vec<CMatrix> = Vec::with_capacity(grid.len());
    let mut ground_projectors = Vec::with_capacity(grid.len());
    let mut gaps = Vec::with_capacity(grid.len());
    let mut ground_dim = 0;
    let mut min_overlap = f64::INFINITY;

    for (k, &t) in grid.points().iter().enumerate() {
        let eig = eigh_unchecked(&h.evaluate(t)?);
        let dim = cluster_dim(&eig.values, cluster_tol);
        if k == 0 {
            if dim == n {
                return Err(LabError::Validation(
                    "the whole spectrum lies in the ground cluster".into(),
                ));
            }
            ground_dim = dim;
        } else if dim != ground_dim {
            return Err(LabError::LevelCrossing {
                expected: ground_dim,
                found: dim,
                time: t,
            });
        }
        let gap = eig.values[dim] - eig.values[dim - 1];
        if !(gap > 0.0) {
            return Err(LabError::GapClosure { gap, time: t });
        }
        let mut vectors = eig.vectors;
        match frames.last() {
            None => fix_phases_absolute(&mut vectors),
            Some(prev) => min_overlap = min_overlap.min(fix_phases_continuous(&mut vectors, prev)),
        }
        ground_projectors.push(projector_from(&vectors, dim));
        frames.push(vectors);
        eigenvalues.push(eig.values);
        gaps.push(gap);
    }
    let gap_min = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(SpectralFlow {
        grid: grid.clone(),
        eigenvalues,
        frames,
        ground_projectors,
        gaps,
        gap_min,
        ground_dim,
        cluster_tol,
        min_overlap: if grid.len() > 1 { min_overlap } else { 1.0 },
    })
}

/// Everything needed about the ground cluster at one instant.
#[derive(Debug, Clone)]
pub struct GroundData {
    pub eigen: EigenSystem,
    pub projector: CMatrix,
    /// `Ġ` in the computational basis.
    pub projector_derivative: CMatrix,
    /// `H − H_ad = −i[Ġ, G]` in the computational basis.
    pub adiabatic_correction: CMatrix,
    pub gap: f64,
}

/// First-order perturbation theory: with `X = Σ_{k∉G, g∈G} ⟨k|Ḣ|g⟩/(E_g − E_k) |k⟩⟨g|`
/// one has `Ġ = X + X†` and `[Ġ, G] = X − X†`.
pub fn ground_data(h: &TimeDependentHamiltonian, t: f64, ground_dim: usize) -> Result<GroundData> {
    let n = h.dimension();
    let eig = eigh_unchecked(&h.evaluate(t)?);
    if ground_dim == 0 || ground_dim >= n {
        return Err(LabError::Validation(format!(
            "ground cluster dimension {ground_dim} invalid for dimension {n}"
        )));
    }
    let gap = eig.values[ground_dim] - eig.values[ground_dim - 1];
    if gap < MIN_DERIVATIVE_GAP {
        return Err(LabError::IllConditioned { gap, time: t });
    }
    let v = &eig.vectors;
    let hdot = v.adjoint() * h.derivative(t)? * v;
    let mut x = CMatrix::zeros(n, n);
    for k in ground_dim..n {
        for g in 0..ground_dim {
            x[(k, g)] = hdot[(k, g)] / (eig.values[g] - eig.values[k]);
        }
    }
    let x_adj = x.adjoint();
    let pdot = v * (&x + &x_adj) * v.adjoint();
    let comm = v * (&x - &x_adj) * v.adjoint();
    let correction = comm * Complex64::new(0.0, -1.0);
    let projector = projector_from(v, ground_dim);
    Ok(GroundData {
        eigen: eig,
        projector,
        projector_derivative: pdot,
        adiabatic_correction: correction,
        gap,
    })
}

/// `Ġ(t)` for the flow's ground cluster.
pub fn ground_projector_derivative(
    h: &TimeDependentHamiltonian,
    flow: &SpectralFlow,
    t: f64,
) -> Result<CMatrix> {
    Ok(ground_data(h, t, flow.ground_dim)?.projector_derivative)
}

/// `H_ad(t) = H(t) + i[Ġ(t), G(t)]`.
pub fn h_ad(h: &TimeDependentHamiltonian, flow: &SpectralFlow, t: f64) -> Result<CMatrix> {
    let data = ground_data(h, t, flow.ground_dim)?;
    Ok(h.evaluate(t)? - data.adiabatic_correction)
}

/// `max_k ‖U_ad(t_k) G(0) U_ad†(t_k) − G(t_k)‖`.
pub fn intertwining_defect(u_ad: &Propagator, flow: &SpectralFlow) -> Result<f64> {
    check_alignment(u_ad, flow)?;
    let g0 = flow.initial_projector();
    Ok(u_ad
        .unitaries
        .iter()
        .zip(&flow.ground_projectors)
        .map(|(u, g)| operator_norm_unchecked(&(u * g0 * u.adjoint() - g)))
        .fold(0.0, f64::max))
}

/// Propagator generated by `H_ad` on the flow's grid.
pub fn evolve_adiabatic(
    h: &TimeDependentHamiltonian,
    flow: &SpectralFlow,
    tol: f64,
) -> Result<Propagator> {
    evolve_adiabatic_from(h, flow, tol, 1)
}

fn evolve_adiabatic_from(
    h: &TimeDependentHamiltonian,
    flow: &SpectralFlow,
    tol: f64,
    min_substeps: usize,
) -> Result<Propagator> {
    let failure: RefCell<Option<LabError>> = RefCell::new(None);
    let generator = |t: f64| match ground_data(h, t, flow.ground_dim) {
        Ok(data) => h.evaluate_unchecked(t) - data.adiabatic_correction,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            h.evaluate_unchecked(t)
        }
    };
    let result = integrate_adaptive(
        h.dimension(),
        0.0,
        &flow.grid,
        tol,
        min_substeps,
        &generator,
        h.is_constant(),
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let u_ad = result?;
    let defect = intertwining_defect(&u_ad, flow)?;
    let limit = 10.0 * tol;
    if defect > limit {
        return Err(LabError::Intertwining { defect, limit });
    }
    Ok(u_ad)
}

fn check_alignment(u: &Propagator, flow: &SpectralFlow) -> Result<()> {
    let grid = flow.grid.points();
    if u.times.len() != grid.len()
        || u.times
            .iter()
            .zip(grid)
            .any(|(a, b)| (a - b).abs() > 1e-12 * b.abs().max(1.0))
    {
        return Err(LabError::Alignment(
            "propagator checkpoints do not match the flow grid".into(),
        ));
    }
    Ok(())
}

/// `K(t_k) = U_ad†(H − H_ad)U_ad` at checkpoint `k`.
pub fn kernel_k(
    h: &TimeDependentHamiltonian,
    flow: &SpectralFlow,
    u_ad: &Propagator,
    k: usize,
) -> Result<CMatrix> {
    check_alignment(u_ad, flow)?;
    let t = flow.grid.points()[k];
    let d = ground_data(h, t, flow.ground_dim)?.adiabatic_correction;
    let u = &u_ad.unitaries[k];
    Ok(u.adjoint() * d * u)
}

/// `1 − ⟨ψ(T)|G(T)|ψ(T)⟩` with `ψ(T) = U(T)|E_0(0)⟩`; for a degenerate
/// ground cluster the evolved maximally mixed ground state is used instead.
pub fn adiabatic_error(u_final: &CMatrix, flow: &SpectralFlow) -> f64 {
    let g_final = flow.final_projector();
    if flow.ground_dim == 1 {
        let psi = u_final * flow.frames[0].column(0);
        let p = psi.dotc(&(g_final * &psi));
        (1.0 - p.norm()).max(0.0)
    } else {
        let rho0 = flow.initial_projector() / Complex64::new(flow.ground_dim as f64, 0.0);
        let rho = u_final * rho0 * u_final.adjoint();
        (1.0 - (g_final * rho).trace().re).max(0.0)
    }
}

/// `δ(t_k) = ‖1 − U_ad†U‖` on the grid and `δ_ad(T)`.
pub fn wave_operator_errors(
    u: &Propagator,
    u_ad: &Propagator,
    flow: &SpectralFlow,
) -> Result<(Vec<f64>, f64)> {
    check_alignment(u, flow)?;
    check_alignment(u_ad, flow)?;
    let n = u.dimension();
    let one = identity(n);
    let delta = u
        .unitaries
        .iter()
        .zip(&u_ad.unitaries)
        .map(|(uu, ua)| operator_norm_unchecked(&(&one - ua.adjoint() * uu)))
        .collect();
    Ok((delta, adiabatic_error(u.final_unitary(), flow)))
}

/// Full diabatic-error run for one schedule.
#[derive(Debug, Clone)]
pub struct AdiabaticRun {
    pub flow: SpectralFlow,
    pub u: Propagator,
    pub u_ad: Propagator,
    pub delta_t: Vec<f64>,
    pub delta_ad_final: f64,
    pub intertwining_defect: f64,
}

/// Evolves under `H` and `H_ad` with identical step sequences.
pub fn run_adiabatic(
    h: &TimeDependentHamiltonian,
    grid: &TimeGrid,
    tol: f64,
    cluster_tol: f64,
) -> Result<AdiabaticRun> {
    let flow = spectral_flow(h, grid, cluster_tol)?;
    let mut u = evolve_from(h, 0.0, grid, tol, 1)?;
    let u_ad = evolve_adiabatic_from(h, &flow, tol, (u.substeps / 2).max(1))?;
    if u_ad.substeps > u.substeps {
        let refined = evolve_fixed(h, grid, u_ad.substeps)?;
        u = Propagator {
            tolerance: u.tolerance,
            convergence_defect: u.convergence_defect,
            ..refined
        };
    }
    let (delta_t, delta_ad_final) = wave_operator_errors(&u, &u_ad, &flow)?;
    let intertwining_defect = intertwining_defect(&u_ad, &flow)?;
    Ok(AdiabaticRun {
        flow,
        u,
        u_ad,
        delta_t,
        delta_ad_final,
        intertwining_defect,
    })
}

/// Ratios entering the adiabatic conditions, evaluated on the flow grid.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    /// `max_t ‖H − H_ad‖ / Δ_min`.
    pub eq8_ratio: f64,
    /// `max_t ‖Ḣ‖ / Δ_min²`.
    pub eq9_ratio: f64,
    /// `V_LR^m / Δ_min`.
    pub eq11_ratio: f64,
    /// `(1/(μ|G|Δ_min))·max_t Σ_{Z∩G≠∅} ‖(H − H_ad)_Z‖` over instantaneous
    /// eigenbasis pair blocks.
    pub eq12_block_sum: f64,
    /// `(1/(μ|G|Δ_min))·max_t ‖H − H_ad‖`.
    pub eq12_norm: f64,
    /// Pointwise block sums, before normalisation.
    pub block_sums: Vec<f64>,
    /// Pointwise `(‖H − H_ad‖, ‖Ḣ‖/Δ_min)`.
    pub hdiff_vs_hdot: Vec<(f64, f64)>,
    /// `|G|·μ`, so that `ε = epsilon_factor · ε̃`.
    pub epsilon_factor: f64,
    pub eq12_ordering_holds: bool,
    pub norm_inequality_holds: bool,
}

impl ConditionReport {
    pub fn epsilon_from(&self, eps_tilde: f64) -> f64 {
        self.epsilon_factor * eps_tilde
    }
}

/// Off-diagonal block of `H − H_ad` in the instantaneous eigenbasis,
/// pairwise-decomposed; returns `(Σ ‖·‖, Σ ‖·‖·e^{μ·diam})` over blocks that
/// meet the ground labels.
fn eigenbasis_block_sums(data: &GroundData, ground_dim: usize, mu: f64) -> (f64, f64) {
    let v = &data.eigen.vectors;
    let rotated = v.adjoint() * &data.adiabatic_correction * v;
    let decomp = pairwise_decompose_unchecked(&rotated);
    let ground = Block::interval(0, ground_dim - 1).expect("nonempty ground cluster");
    decomp
        .terms
        .iter()
        .filter(|term| term.block.intersects(&ground))
        .fold((0.0, 0.0), |(plain, weighted), term| {
            (
                plain + term.norm,
                weighted + term.norm * (mu * term.block.diameter() as f64).exp(),
            )
        })
}

pub fn condition_report(
    h: &TimeDependentHamiltonian,
    flow: &SpectralFlow,
    certificate: &LocalityCertificate,
) -> Result<ConditionReport> {
    let gap_min = flow.gap_min;
    let mu = certificate.mu;
    let g = flow.ground_dim as f64;
    let mut block_sums = Vec::with_capacity(flow.grid.len());
    let mut hdiff_vs_hdot = Vec::with_capacity(flow.grid.len());
    let mut max_diff = 0.0f64;
    let mut max_hdot = 0.0f64;
    let mut ordering = true;
    let mut norm_ineq = true;
    for &t in flow.grid.points() {
        let data = ground_data(h, t, flow.ground_dim)?;
        let diff = operator_norm_unchecked(&data.adiabatic_correction);
        let hdot = operator_norm_unchecked(&h.derivative(t)?);
        let (block_sum, _) = eigenbasis_block_sums(&data, flow.ground_dim, mu);
        ordering &= block_sum >= diff - 1e-12 * diff.max(1e-300);
        norm_ineq &= diff <= hdot / gap_min + INEQUALITY_SLACK;
        max_diff = max_diff.max(diff);
        max_hdot = max_hdot.max(hdot);
        block_sums.push(block_sum);
        hdiff_vs_hdot.push((diff, hdot / gap_min));
    }
    let normaliser = 1.0 / (mu * g * gap_min);
    let max_block = block_sums.iter().copied().fold(0.0, f64::max);
    let report = ConditionReport {
        eq8_ratio: max_diff / gap_min,
        eq9_ratio: max_hdot / (gap_min * gap_min),
        eq11_ratio: certificate.v_lr_max / gap_min,
        eq12_block_sum: normaliser * max_block,
        eq12_norm: normaliser * max_diff,
        block_sums,
        hdiff_vs_hdot,
        epsilon_factor: g * mu,
        eq12_ordering_holds: ordering,
        norm_inequality_holds: norm_ineq,
    };
    let finite = [
        report.eq8_ratio,
        report.eq9_ratio,
        report.eq11_ratio,
        report.eq12_block_sum,
        report.eq12_norm,
    ]
    .iter()
    .all(|r| r.is_finite() && *r >= 0.0);
    if !finite {
        return Err(LabError::NonFinite("condition ratios".into()));
    }
    Ok(report)
}

/// `(1/|G|)·Σ_{Z∩G≠∅} ‖(H − H_ad)_Z‖·e^{μ·diam Z}` with `Z` the pair blocks
/// of `H − H_ad` written in the instantaneous eigenbasis of `H(t)`.
pub fn instantaneous_locality(
    h: &TimeDependentHamiltonian,
    flow: &SpectralFlow,
    mu: f64,
    t: f64,
) -> Result<f64> {
    let data = ground_data(h, t, flow.ground_dim)?;
    let (_, weighted) = eigenbasis_block_sums(&data, flow.ground_dim, mu);
    Ok(weighted / flow.ground_dim as f64)
}

/// Certificate whose samples are [`instantaneous_locality`] on the flow grid.
pub fn adiabatic_certificate(
    h: &TimeDependentHamiltonian,
    flow: &SpectralFlow,
    mu: f64,
) -> Result<LocalityCertificate> {
    let samples = flow
        .grid
        .points()
        .iter()
        .map(|&t| instantaneous_locality(h, flow, mu, t))
        .collect::<Result<Vec<_>>>()?;
    LocalityCertificate::from_samples(
        mu,
        &flow.grid,
        samples,
        Permutation::identity(h.dimension()),
    )
}

/// Per-run JSON summary.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    #[serde(rename = "T")]
    pub total_time: f64,
    pub delta_ad: f64,
    pub gap_min: f64,
    pub eq8_ratio: f64,
    pub eq9_ratio: f64,
    pub eq11_ratio: f64,
    pub intertwining_defect: f64,
    /// Largest `‖U†U − 1‖` over both propagators.
    pub unitarity_defect: f64,
}

impl RunSummary {
    pub fn new(total_time: f64, run: &AdiabaticRun, report: &ConditionReport) -> Self {
        RunSummary {
            total_time,
            delta_ad: run.delta_ad_final,
            gap_min: run.flow.gap_min,
            eq8_ratio: report.eq8_ratio,
            eq9_ratio: report.eq9_ratio,
            eq11_ratio: report.eq11_ratio,
            intertwining_defect: run.intertwining_defect,
            unitarity_defect: run.u.unitarity_defect.max(run.u_ad.unitarity_defect),
        }
    }
}
