//! Representation-locality certificates.
//!
//! For a block decomposition `H = Σ_Z H_Z` the per-level weight
//! `Σ_{Z∋i} |Z|·‖H_Z‖·e^{μ·diam Z}` bounds how strongly level `i` couples
//! to distant levels. Its maximum over levels is `a_μ(t)`, and
//! `V_LR = ⟨a_μ⟩_t / μ` is the resulting light-cone speed in label space.

use rayon::prelude::*;
use serde::Serialize;

use crate::basis_blocks::{pairwise_decompose_unchecked, Block, BlockDecomposition, Permutation};
use crate::error::{LabError, Result};
use crate::hamiltonian_model::TimeDependentHamiltonian;
use crate::numerics::{cumulative_integral, lambert_w, time_average, TimeGrid};

const PRESCAN_POINTS: usize = 100;
const GOLDEN_REL_TOL: f64 = 1e-6;

/// Locality data for one Hamiltonian, one `μ`, one basis ordering.
#[derive(Debug, Clone, Serialize)]
pub struct LocalityCertificate {
    pub mu: f64,
    pub a_mu_max: f64,
    pub a_mu_timeavg: f64,
    pub v_lr: f64,
    /// `a_μ^m / μ`, the speed built from the supremum instead of the average.
    pub v_lr_max: f64,
    pub grid: Vec<f64>,
    pub a_mu: Vec<f64>,
    pub basis_permutation: Permutation,
}

impl LocalityCertificate {
    pub fn from_samples(
        mu: f64,
        grid: &TimeGrid,
        a_mu: Vec<f64>,
        basis_permutation: Permutation,
    ) -> Result<Self> {
        check_mu(mu)?;
        let a_mu_max = a_mu.iter().copied().fold(0.0f64, f64::max);
        let a_mu_timeavg = time_average(&a_mu, grid)?;
        Ok(LocalityCertificate {
            mu,
            a_mu_max,
            a_mu_timeavg,
            v_lr: a_mu_timeavg / mu,
            v_lr_max: a_mu_max / mu,
            grid: grid.points().to_vec(),
            a_mu,
            basis_permutation,
        })
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.grid.clone())
    }

    /// `∫_0^{t_k} a_μ(τ) dτ = ⟨a_μ⟩_{t_k}·t_k` at every grid point.
    pub fn integrated_a(&self) -> Result<Vec<f64>> {
        cumulative_integral(&self.a_mu, &self.time_grid()?)
    }

    /// A copy claiming a different `μ` with the same `a_μ` samples. Such a
    /// certificate is in general not valid; audits use it as a negative
    /// control.
    pub fn with_overridden_mu(&self, mu: f64) -> Self {
        LocalityCertificate {
            mu,
            v_lr: self.a_mu_timeavg / mu,
            v_lr_max: self.a_mu_max / mu,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(LabError::Domain(format!("mu must be positive, got {mu}")));
    }
    Ok(())
}

/// `Σ_{Z∋i} |Z|·‖H_Z‖·e^{μ·diam Z}` for every level `i`.
pub fn level_weights(decomp: &BlockDecomposition, mu: f64) -> Vec<f64> {
    let mut sums = vec![0.0; decomp.dimension];
    for term in &decomp.terms {
        let q = term_weight(term.block.size(), term.norm, term.block.diameter(), mu);
        for &label in term.block.labels() {
            sums[label] += q;
        }
    }
    sums
}

fn term_weight(size: usize, norm: f64, diameter: usize, mu: f64) -> f64 {
    size as f64 * norm * (mu * diameter as f64).exp()
}

/// The smallest `a` for which every level satisfies the per-level locality
/// condition at this instant.
pub fn a_mu_pointwise(decomp: &BlockDecomposition, mu: f64) -> f64 {
    assert!(
        mu >= 0.0 && mu.is_finite(),
        "mu must be finite and nonnegative"
    );
    level_weights(decomp, mu).into_iter().fold(0.0, f64::max)
}

/// For each probe `P`: does `Σ_{Z∩P≠∅} |Z|·‖H_Z‖·e^{μ·diam Z} ≤ |P|·a` hold?
pub fn check_condition_eq1(
    decomp: &BlockDecomposition,
    mu: f64,
    a: f64,
    probes: &[Block],
) -> Vec<bool> {
    probes
        .iter()
        .map(|probe| {
            let lhs: f64 = decomp
                .terms
                .iter()
                .filter(|term| term.block.intersects(probe))
                .map(|term| term_weight(term.block.size(), term.norm, term.block.diameter(), mu))
                .sum();
            lhs <= probe.size() as f64 * a * (1.0 + 1e-12)
        })
        .collect()
}

/// Pairwise decompositions of `H(t)` on a grid, reused across many `μ`.
#[derive(Debug, Clone)]
pub struct Certifier {
    grid: TimeGrid,
    decompositions: Vec<BlockDecomposition>,
    permutation: Permutation,
}

impl Certifier {
    pub fn new(
        h: &TimeDependentHamiltonian,
        grid: &TimeGrid,
        permutation: Permutation,
    ) -> Result<Self> {
        if permutation.len() != h.dimension() || !permutation.is_valid() {
            return Err(LabError::Validation(format!(
                "basis permutation of length {} does not fit dimension {}",
                permutation.len(),
                h.dimension()
            )));
        }
        let decompositions = grid
            .points()
            .par_iter()
            .map(|&t| {
                let m = h.evaluate(t)?;
                Ok(pairwise_decompose_unchecked(
                    &permutation.apply_to_matrix(&m),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Certifier {
            grid: grid.clone(),
            decompositions,
            permutation,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn decompositions(&self) -> &[BlockDecomposition] {
        &self.decompositions
    }

    pub fn a_mu_samples(&self, mu: f64) -> Vec<f64> {
        self.decompositions
            .iter()
            .map(|d| a_mu_pointwise(d, mu))
            .collect()
    }

    pub fn certificate(&self, mu: f64) -> Result<LocalityCertificate> {
        check_mu(mu)?;
        LocalityCertificate::from_samples(
            mu,
            &self.grid,
            self.a_mu_samples(mu),
            self.permutation.clone(),
        )
    }

    /// `⟨a_μ⟩_t / μ` at the final grid time.
    pub fn v_lr(&self, mu: f64) -> f64 {
        match time_average(&self.a_mu_samples(mu), &self.grid) {
            Ok(avg) => avg / mu,
            Err(_) => f64::NAN,
        }
    }
}

pub fn certify(
    h: &TimeDependentHamiltonian,
    mu: f64,
    grid: &TimeGrid,
    permutation: Permutation,
) -> Result<LocalityCertificate> {
    check_mu(mu)?;
    Certifier::new(h, grid, permutation)?.certificate(mu)
}

/// Closed-form per-level bound `4h / (1 − e^{μ−μ′})` for matrices inside the
/// envelope `|H_ij| ≤ h·e^{−μ′|i−j|}`.
pub fn exp_local_bound(h: f64, mu_prime: f64, mu: f64) -> Result<f64> {
    if !(h > 0.0) || !(mu_prime > 0.0) || !(mu >= 0.0) {
        return Err(LabError::Domain("need h > 0, mu' > 0 and mu >= 0".into()));
    }
    if mu >= mu_prime {
        return Err(LabError::Domain(format!(
            "divergent regime: mu = {mu} >= mu' = {mu_prime}"
        )));
    }
    Ok(4.0 * h / (1.0 - (mu - mu_prime).exp()))
}

/// Minimises `4h / [μ(1 − e^{μ−μ′})]` over `μ`: the minimiser is
/// `w(e^{1+μ′}) − 1`. Returns `(μ_min, V_LR at μ_min)`.
pub fn optimal_mu_exp_local(h: f64, mu_prime: f64) -> Result<(f64, f64)> {
    if !(h > 0.0) || !(mu_prime > 0.0) {
        return Err(LabError::Domain("need h > 0 and mu' > 0".into()));
    }
    let mu_min = lambert_w((1.0 + mu_prime).exp())? - 1.0;
    let v = 4.0 * h / (mu_min * (1.0 - (mu_min - mu_prime).exp()));
    Ok((mu_min, v))
}

/// Result of a bracketed one-dimensional minimisation.
#[derive(Debug, Clone, Copy)]
pub struct ScalarMinimum {
    pub argmin: f64,
    pub value: f64,
    /// Whether the pre-scan saw a single local minimum.
    pub unimodal: bool,
}

/// Grid pre-scan followed by golden-section refinement around the best grid
/// point. Falls back to the grid minimum if the scan is multimodal.
pub fn minimize_prescanned(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<ScalarMinimum> {
    if !(lo > 0.0) || !(hi > lo) || !hi.is_finite() {
        return Err(LabError::Domain(format!("invalid mu range ({lo}, {hi})")));
    }
    let n = PRESCAN_POINTS;
    let xs: Vec<f64> = (0..n)
        .map(|k| {
            if k == n - 1 {
                hi
            } else {
                lo + (hi - lo) * k as f64 / (n - 1) as f64
            }
        })
        .collect();
    let finite = |v: f64| if v.is_finite() { v } else { f64::INFINITY };
    let ys: Vec<f64> = xs.iter().map(|&x| finite(f(x))).collect();
    let (best, &best_y) = ys
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("prescan is nonempty");
    if !best_y.is_finite() {
        return Err(LabError::NonFinite(format!(
            "objective is non-finite across ({lo}, {hi})"
        )));
    }

    let minima = count_local_minima(&ys);
    if minima > 1 {
        return Ok(ScalarMinimum {
            argmin: xs[best],
            value: best_y,
            unimodal: false,
        });
    }

    let a = xs[best.saturating_sub(1)];
    let b = xs[(best + 1).min(n - 1)];
    let (x_gs, y_gs) = golden_section(|x| finite(f(x)), a, b);
    let mut candidates = [
        (x_gs, y_gs),
        (xs[best], best_y),
        (lo, ys[0]),
        (hi, ys[n - 1]),
    ];
    candidates.sort_by(|p, q| p.1.total_cmp(&q.1));
    Ok(ScalarMinimum {
        argmin: candidates[0].0,
        value: candidates[0].1,
        unimodal: true,
    })
}

fn count_local_minima(ys: &[f64]) -> usize {
    let n = ys.len();
    (0..n)
        .filter(|&k| {
            let left = k == 0 || ys[k] < ys[k - 1];
            let right = k == n - 1 || ys[k] <= ys[k + 1];
            left && right && ys[k].is_finite()
        })
        .count()
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > GOLDEN_REL_TOL * 0.5 * (a.abs() + b.abs()) {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Minimises the time-averaged speed `V_LR(μ)` over `μ ∈ [lo, hi]`.
pub fn optimize_mu_generic(
    h: &TimeDependentHamiltonian,
    grid: &TimeGrid,
    mu_range: (f64, f64),
) -> Result<(f64, LocalityCertificate)> {
    let certifier = Certifier::new(h, grid, Permutation::identity(h.dimension()))?;
    optimize_mu_with(&certifier, mu_range)
}

pub fn optimize_mu_with(
    certifier: &Certifier,
    (lo, hi): (f64, f64),
) -> Result<(f64, LocalityCertificate)> {
    let best = minimize_prescanned(|mu| certifier.v_lr(mu), lo, hi)?;
    Ok((best.argmin, certifier.certificate(best.argmin)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis_blocks::pairwise_decompose;
    use crate::hamiltonian_model::{random_exp_local, reference_final_hamiltonian, ExpLocalSpec};
    use crate::numerics::CMatrix;
    use num_complex::Complex64;

    #[test]
    fn diagonal_a_mu_is_largest_entry() {
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(0.3, 0.0),
            Complex64::new(-1.7, 0.0),
            Complex64::new(0.9, 0.0),
        ]));
        let dec = pairwise_decompose(&d).unwrap();
        for mu in [0.1, 1.0, 5.0] {
            assert!((a_mu_pointwise(&dec, mu) - 1.7).abs() < 1e-15);
        }
        let zero = pairwise_decompose(&CMatrix::zeros(4, 4)).unwrap();
        assert_eq!(a_mu_pointwise(&zero, 1.0), 0.0);
    }

    #[test]
    fn reference_final_a_mu_against_direct_sum() {
        let h = reference_final_hamiltonian();
        let dec = pairwise_decompose(&h).unwrap();
        let mu = 0.5;
        // Independent direct summation over the matrix entries.
        let direct = (0..11)
            .map(|i| {
                let mut s = h[(i, i)].norm();
                for j in 0..11 {
                    if j != i && h[(i, j)].norm() > 0.0 {
                        s += 2.0 * h[(i, j)].norm() * (mu * i.abs_diff(j) as f64).exp();
                    }
                }
                s
            })
            .fold(0.0, f64::max);
        let got = a_mu_pointwise(&dec, mu);
        assert!((got - direct).abs() < 1e-14);
        // The maximum sits on level 9: 0.9 + 2·e^{1/2}.
        assert!((got - (0.9 + 2.0 * 0.5f64.exp())).abs() < 1e-14);
    }

    #[test]
    fn eq1_with_zero_a_fails() {
        let h = random_exp_local(&ExpLocalSpec {
            dimension: 6,
            amplitude: 1.0,
            decay: 1.0,
            seed: 9,
        })
        .unwrap();
        let dec = pairwise_decompose(&h).unwrap();
        let probes: Vec<Block> = (0..6).map(Block::singleton).collect();
        assert!(check_condition_eq1(&dec, 0.5, 0.0, &probes)
            .iter()
            .any(|ok| !ok));
        let a = a_mu_pointwise(&dec, 0.5);
        assert!(check_condition_eq1(&dec, 0.5, a, &probes)
            .iter()
            .all(|ok| *ok));
    }

    #[test]
    fn exp_local_bound_values() {
        let expected = 4.0 / (1.0 - (-1.0f64).exp());
        assert!((exp_local_bound(1.0, 2.0, 1.0).unwrap() - expected).abs() < 1e-12);
        assert!((exp_local_bound(1.0, 1.0, 0.0).unwrap() - expected).abs() < 1e-12);
        assert!((exp_local_bound(1.0, 1.0, 1e-12).unwrap() - expected).abs() < 1e-9);
        assert!(matches!(
            exp_local_bound(1.0, 1.0, 1.0),
            Err(LabError::Domain(_))
        ));
        assert!(matches!(
            exp_local_bound(1.0, 1.0, 2.0),
            Err(LabError::Domain(_))
        ));
    }

    #[test]
    fn optimal_mu_scales_with_h() {
        let (m1, v1) = optimal_mu_exp_local(1.0, 1.7).unwrap();
        let (m2, v2) = optimal_mu_exp_local(2.0, 1.7).unwrap();
        assert_eq!(m1, m2);
        assert!((v2 - 2.0 * v1).abs() < 1e-12 * v2);
    }

    #[test]
    fn overridden_mu_keeps_samples() {
        let grid = TimeGrid::uniform(1.0, 5).unwrap();
        let cert = LocalityCertificate::from_samples(
            0.5,
            &grid,
            vec![1.0, 2.0, 3.0, 2.0, 1.0],
            Permutation::identity(3),
        )
        .unwrap();
        assert!((cert.a_mu_timeavg - 2.0).abs() < 1e-15);
        assert_eq!(cert.a_mu_max, 3.0);
        assert!((cert.v_lr - 4.0).abs() < 1e-15);
        let bad = cert.with_overridden_mu(1.0);
        assert_eq!(bad.a_mu, cert.a_mu);
        assert!((bad.v_lr - 2.0).abs() < 1e-15);
    }

    #[test]
    fn certificate_json_fields() {
        let grid = TimeGrid::uniform(1.0, 3).unwrap();
        let cert =
            LocalityCertificate::from_samples(1.0, &grid, vec![1.0; 3], Permutation::identity(2))
                .unwrap();
        let v: serde_json::Value = serde_json::from_str(&cert.to_json().unwrap()).unwrap();
        for key in ["mu", "a_mu_max", "a_mu_timeavg", "v_lr", "grid", "a_mu"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let m = minimize_prescanned(|x| (x - 0.7).powi(2) + 1.0, 0.1, 2.0).unwrap();
        assert!(m.unimodal);
        assert!((m.argmin - 0.7).abs() < 1e-5);
    }

    #[test]
    fn prescan_rejects_bad_range_and_nan() {
        assert!(minimize_prescanned(|x| x, 0.0, 1.0).is_err());
        assert!(matches!(
            minimize_prescanned(|_| f64::NAN, 0.1, 1.0),
            Err(LabError::NonFinite(_))
        ));
    }
}
