//! Time-ordered propagators and direct checks of the light-cone bounds.
//!
//! Propagators are built by midpoint-exponential stepping
//! `U(t+h, t) ≈ exp(−i·h·H(t + h/2))`, so every step is exactly unitary.
//! The step is halved globally until two successive final-time propagators
//! agree to the requested tolerance.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::basis_blocks::{block_distance, Block, Label, Permutation};
use crate::error::{LabError, Result};
use crate::hamiltonian_model::TimeDependentHamiltonian;
use crate::locality::LocalityCertificate;
use crate::numerics::{
    commutator, exp_minus_i, identity, operator_norm_unchecked, reunitarize, unitarity_defect,
    CMatrix, TimeGrid,
};

pub const MAX_HALVINGS: u32 = 20;
/// From this halving on, a defect that fails to shrink means round-off has
/// taken over and further halving is abandoned.
pub const STAGNATION_AFTER: u32 = 3;
pub const DEFAULT_TOL: f64 = 1e-9;
/// Integrator tolerance used by bound audits.
pub const AUDIT_TOL: f64 = 1e-10;
/// Margins below `-VIOLATION_SLACK` count as bound violations.
pub const VIOLATION_SLACK: f64 = 1e-9;

/// Checkpointed `U(t, 0)` on an output grid.
#[derive(Debug, Clone)]
pub struct Propagator {
    pub times: Vec<f64>,
    pub unitaries: Vec<CMatrix>,
    /// Largest substep actually used.
    pub step: f64,
    /// Substeps per output interval.
    pub substeps: usize,
    pub tolerance: f64,
    /// `‖U_h(T) − U_{h/2}(T)‖` at acceptance.
    pub convergence_defect: f64,
    /// `max_k ‖U_k†U_k − 1‖`.
    pub unitarity_defect: f64,
}

impl Propagator {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.unitaries[0].nrows()
    }

    pub fn final_unitary(&self) -> &CMatrix {
        self.unitaries.last().expect("propagator has checkpoints")
    }

    fn from_checkpoints(
        grid: &TimeGrid,
        unitaries: Vec<CMatrix>,
        substeps: usize,
        tolerance: f64,
        convergence_defect: f64,
    ) -> Self {
        let max_dt = grid
            .points()
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max);
        let unitarity = unitaries.iter().map(unitarity_defect).fold(0.0, f64::max);
        Propagator {
            times: grid.points().to_vec(),
            unitaries,
            step: max_dt / substeps as f64,
            substeps,
            tolerance,
            convergence_defect,
            unitarity_defect: unitarity,
        }
    }
}

/// Integrates a Hermitian generator with a fixed number of midpoint substeps
/// per output interval. `t0` offsets the grid in absolute time.
pub(crate) fn integrate_fixed<F>(
    dimension: usize,
    t0: f64,
    grid: &TimeGrid,
    substeps: usize,
    generator: &F,
    constant: bool,
) -> Vec<CMatrix>
where
    F: Fn(f64) -> CMatrix + ?Sized,
{
    let mut cache: HashMap<u64, CMatrix> = HashMap::new();
    let constant_h = constant.then(|| generator(t0));
    let mut u = identity(dimension);
    let mut out = Vec::with_capacity(grid.len());
    out.push(u.clone());
    for w in grid.points().windows(2) {
        let h = (w[1] - w[0]) / substeps as f64;
        for s in 0..substeps {
            let step = match &constant_h {
                Some(hm) => cache
                    .entry(h.to_bits())
                    .or_insert_with(|| exp_minus_i(hm, h))
                    .clone(),
                None => {
                    let mid = t0 + w[0] + (s as f64 + 0.5) * h;
                    exp_minus_i(&generator(mid), h)
                }
            };
            u = step * u;
        }
        u = reunitarize(&u);
        out.push(u.clone());
    }
    out
}

/// Global step halving until successive final propagators agree to `tol`.
pub(crate) fn integrate_adaptive<F>(
    dimension: usize,
    t0: f64,
    grid: &TimeGrid,
    tol: f64,
    min_substeps: usize,
    generator: &F,
    constant: bool,
) -> Result<Propagator>
where
    F: Fn(f64) -> CMatrix + ?Sized,
{
    if !(tol > 0.0) {
        return Err(LabError::Domain(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let mut substeps = min_substeps.max(1);
    let mut previous = integrate_fixed(dimension, t0, grid, substeps, generator, constant);
    let mut defect = f64::INFINITY;
    for halving in 1..=MAX_HALVINGS {
        substeps *= 2;
        let current = integrate_fixed(dimension, t0, grid, substeps, generator, constant);
        let diff = current.last().unwrap() - previous.last().unwrap();
        let last = defect;
        defect = operator_norm_unchecked(&diff);
        if defect < tol {
            return Ok(Propagator::from_checkpoints(
                grid, current, substeps, tol, defect,
            ));
        }
        if halving >= STAGNATION_AFTER && defect >= last {
            return Err(LabError::Integration {
                halvings: halving,
                defect,
                tol,
            });
        }
        previous = current;
    }
    Err(LabError::Integration {
        halvings: MAX_HALVINGS,
        defect,
        tol,
    })
}

/// Integrates with exactly `substeps` midpoint steps per output interval.
pub fn evolve_fixed(
    h: &TimeDependentHamiltonian,
    grid: &TimeGrid,
    substeps: usize,
) -> Result<Propagator> {
    check_window(h, 0.0, grid)?;
    let generator = |t: f64| h.evaluate_unchecked(t);
    let unitaries = integrate_fixed(
        h.dimension(),
        0.0,
        grid,
        substeps.max(1),
        &generator,
        h.is_constant(),
    );
    Ok(Propagator::from_checkpoints(
        grid,
        unitaries,
        substeps.max(1),
        f64::NAN,
        f64::NAN,
    ))
}

/// `U(t, 0)` on the output grid, converged to `tol` in the final-time
/// operator norm.
pub fn evolve(h: &TimeDependentHamiltonian, grid: &TimeGrid, tol: f64) -> Result<Propagator> {
    evolve_from(h, 0.0, grid, tol, 1)
}

/// `U(t_start + τ, t_start)` for `τ` on the grid, starting the halving
/// sequence at `min_substeps`.
pub fn evolve_from(
    h: &TimeDependentHamiltonian,
    t_start: f64,
    grid: &TimeGrid,
    tol: f64,
    min_substeps: usize,
) -> Result<Propagator> {
    check_window(h, t_start, grid)?;
    let generator = |t: f64| h.evaluate_unchecked(t);
    integrate_adaptive(
        h.dimension(),
        t_start,
        grid,
        tol,
        min_substeps,
        &generator,
        h.is_constant(),
    )
}

fn check_window(h: &TimeDependentHamiltonian, t_start: f64, grid: &TimeGrid) -> Result<()> {
    h.evaluate(t_start)?;
    h.evaluate(t_start + grid.t_final())?;
    Ok(())
}

fn check_dims(a: &CMatrix, u: &CMatrix) -> Result<()> {
    if !a.is_square() || !u.is_square() || a.nrows() != u.nrows() {
        return Err(LabError::Validation(format!(
            "dimension mismatch: {}x{} operator with {}x{} unitary",
            a.nrows(),
            a.ncols(),
            u.nrows(),
            u.ncols()
        )));
    }
    Ok(())
}

/// `A^t = U†AU`.
pub fn heisenberg(a: &CMatrix, u: &CMatrix) -> Result<CMatrix> {
    check_dims(a, u)?;
    Ok(u.adjoint() * a * u)
}

/// `‖[U†AU, B]‖`.
pub fn commutator_norm(a: &CMatrix, b: &CMatrix, u: &CMatrix) -> Result<f64> {
    check_dims(a, u)?;
    check_dims(b, u)?;
    let at = heisenberg(a, u)?;
    Ok(operator_norm_unchecked(&commutator(&at, b)))
}

/// Right-hand side of the light-cone bound on `‖[A^t, B]‖`:
/// `2·min(|A|,|B|)·‖A‖·‖B‖·e^{−μ·d(A,B)}·(e^{⟨a_μ⟩_t·|t|} − 1)`.
pub fn lr_bound_rhs(
    supp_a: &Block,
    supp_b: &Block,
    norm_a: f64,
    norm_b: f64,
    mu: f64,
    a_timeavg: f64,
    t: f64,
) -> Result<f64> {
    if supp_a.intersects(supp_b) {
        return Err(LabError::Precondition(
            "operator supports must be disjoint".into(),
        ));
    }
    let d = block_distance(supp_a, supp_b) as f64;
    let size = supp_a.size().min(supp_b.size()) as f64;
    Ok(2.0 * size * norm_a * norm_b * (-mu * d).exp() * (a_timeavg * t.abs()).exp_m1())
}

/// Projector onto the labels of a block.
pub fn block_projector(block: &Block, dimension: usize) -> Result<CMatrix> {
    block.check_dimension(dimension)?;
    let mut p = CMatrix::zeros(dimension, dimension);
    for &i in block.labels() {
        p[(i, i)] = num_complex::Complex64::new(1.0, 0.0);
    }
    Ok(p)
}

/// `|⟨j|U(t,0)|source⟩|` for every checkpoint (rows) and level `j` (columns).
#[derive(Debug, Clone, Serialize)]
pub struct Spread {
    pub source: Label,
    pub times: Vec<f64>,
    pub amplitudes: Vec<Vec<f64>>,
}

impl Spread {
    pub fn to_csv(&self) -> String {
        let n = self.amplitudes.first().map_or(0, Vec::len);
        let mut out = String::from("t");
        for j in 0..n {
            let _ = write!(out, ",level_{j}");
        }
        out.push('\n');
        for (t, row) in self.times.iter().zip(&self.amplitudes) {
            let _ = write!(out, "{}", fmt17(*t));
            for a in row {
                let _ = write!(out, ",{}", fmt17(*a));
            }
            out.push('\n');
        }
        out
    }
}

pub fn propagator_spread(u: &Propagator, source: Label) -> Result<Spread> {
    let n = u.dimension();
    if source >= n {
        return Err(LabError::Validation(format!(
            "source label {source} out of range for dimension {n}"
        )));
    }
    let amplitudes = u
        .unitaries
        .iter()
        .map(|m| (0..n).map(|j| m[(j, source)].norm()).collect())
        .collect();
    Ok(Spread {
        source,
        times: u.times.clone(),
        amplitudes,
    })
}

/// Result of checking `|⟨j|U|i⟩| ≤ e^{−μ|j−i|}(e^{⟨a_μ⟩_t·t} − 1)` for `j ≠ i`.
#[derive(Debug, Clone, Serialize)]
pub struct SpreadAudit {
    pub checked: usize,
    pub violations: usize,
    pub min_margin: f64,
}

pub fn check_spread_bound(
    spread: &Spread,
    certificate: &LocalityCertificate,
) -> Result<SpreadAudit> {
    check_alignment(&spread.times, &certificate.grid)?;
    let integrated = certificate.integrated_a()?;
    let mut audit = SpreadAudit {
        checked: 0,
        violations: 0,
        min_margin: f64::INFINITY,
    };
    for (k, row) in spread.amplitudes.iter().enumerate() {
        for (j, &amp) in row.iter().enumerate() {
            if j == spread.source {
                continue;
            }
            let d = j.abs_diff(spread.source) as f64;
            let rhs = (-certificate.mu * d).exp() * integrated[k].exp_m1();
            let margin = rhs - amp;
            audit.checked += 1;
            audit.min_margin = audit.min_margin.min(margin);
            if margin < -VIOLATION_SLACK {
                audit.violations += 1;
            }
        }
    }
    Ok(audit)
}

fn check_alignment(times: &[f64], grid: &[f64]) -> Result<()> {
    if times.len() != grid.len()
        || times
            .iter()
            .zip(grid)
            .any(|(a, b)| (a - b).abs() > 1e-12 * b.abs().max(1.0))
    {
        return Err(LabError::Alignment(
            "certificate grid and propagator checkpoints differ".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AuditRow {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
}

/// Measured `‖[A^t, B]‖` against the bound, point by point.
#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub supp_a: Block,
    pub supp_b: Block,
    pub mu: f64,
    pub rows: Vec<AuditRow>,
    pub violations: usize,
    pub min_margin: f64,
    pub tol: f64,
}

impl AuditReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,lhs,rhs,margin\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                fmt17(r.t),
                fmt17(r.lhs),
                fmt17(r.rhs),
                fmt17(r.margin)
            );
        }
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "violations": self.violations,
            "min_margin": self.min_margin,
            "tol": self.tol,
        })
    }

    pub fn ensure_clean(&self) -> Result<()> {
        if self.violations == 0 {
            Ok(())
        } else {
            Err(LabError::BoundViolation {
                violations: self.violations,
                min_margin: self.min_margin,
            })
        }
    }
}

/// 17 significant digits, '.' decimal separator.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// A propagator in a certificate's basis, reusable for many audits.
#[derive(Debug, Clone)]
pub struct BoundAuditor {
    propagator: Propagator,
    permutation: Permutation,
}

impl BoundAuditor {
    /// Evolves `H` (relabelled by `permutation`) on `grid` with tolerance `tol`.
    pub fn new(
        h: &TimeDependentHamiltonian,
        grid: &TimeGrid,
        permutation: Permutation,
        tol: f64,
    ) -> Result<Self> {
        let propagator = if permutation.is_identity() {
            evolve(h, grid, tol)?
        } else {
            check_window(h, 0.0, grid)?;
            let generator = |t: f64| permutation.apply_to_matrix(&h.evaluate_unchecked(t));
            integrate_adaptive(
                h.dimension(),
                0.0,
                grid,
                tol,
                1,
                &generator,
                h.is_constant(),
            )?
        };
        Ok(BoundAuditor {
            propagator,
            permutation,
        })
    }

    pub fn propagator(&self) -> &Propagator {
        &self.propagator
    }

    /// Audit with projectors onto the two supports.
    pub fn audit(
        &self,
        supp_a: &Block,
        supp_b: &Block,
        certificate: &LocalityCertificate,
    ) -> Result<AuditReport> {
        let n = self.propagator.dimension();
        let a = block_projector(supp_a, n)?;
        let b = block_projector(supp_b, n)?;
        self.audit_operators(supp_a, &a, supp_b, &b, certificate)
    }

    /// Audit for arbitrary operators `a` and `b`, which must vanish outside
    /// `supp_a × supp_a` and `supp_b × supp_b` (in the audited labelling).
    pub fn audit_operators(
        &self,
        supp_a: &Block,
        a: &CMatrix,
        supp_b: &Block,
        b: &CMatrix,
        certificate: &LocalityCertificate,
    ) -> Result<AuditReport> {
        if supp_a.intersects(supp_b) {
            return Err(LabError::Precondition(
                "operator supports must be disjoint".into(),
            ));
        }
        if certificate.basis_permutation != self.permutation {
            return Err(LabError::Alignment(
                "certificate basis ordering differs from the audited one".into(),
            ));
        }
        check_alignment(&self.propagator.times, &certificate.grid)?;
        let n = self.propagator.dimension();
        check_supported(a, supp_a, n, "A")?;
        check_supported(b, supp_b, n, "B")?;
        let norm_a = operator_norm_unchecked(a);
        let norm_b = operator_norm_unchecked(b);
        let integrated = certificate.integrated_a()?;

        let mut rows = Vec::with_capacity(self.propagator.len());
        let mut violations = 0;
        let mut min_margin = f64::INFINITY;
        for (k, u) in self.propagator.unitaries.iter().enumerate() {
            let t = self.propagator.times[k];
            let at = u.adjoint() * a * u;
            let lhs = operator_norm_unchecked(&commutator(&at, b));
            let a_avg = if t > 0.0 { integrated[k] / t } else { 0.0 };
            let rhs = lr_bound_rhs(supp_a, supp_b, norm_a, norm_b, certificate.mu, a_avg, t)?;
            let margin = rhs - lhs;
            min_margin = min_margin.min(margin);
            if margin < -VIOLATION_SLACK {
                violations += 1;
            }
            rows.push(AuditRow {
                t,
                lhs,
                rhs,
                margin,
            });
        }
        Ok(AuditReport {
            supp_a: supp_a.clone(),
            supp_b: supp_b.clone(),
            mu: certificate.mu,
            rows,
            violations,
            min_margin,
            tol: self.propagator.tolerance,
        })
    }
}

fn check_supported(op: &CMatrix, support: &Block, n: usize, name: &str) -> Result<()> {
    if op.nrows() != n || op.ncols() != n {
        return Err(LabError::Validation(format!(
            "operator {name} is {}x{}, expected {n}x{n}",
            op.nrows(),
            op.ncols()
        )));
    }
    support.check_dimension(n)?;
    let inside = |i: usize| support.labels().binary_search(&i).is_ok();
    let scale = op.camax().max(1.0);
    for i in 0..n {
        for j in 0..n {
            if !(inside(i) && inside(j)) && op[(i, j)].norm() > 1e-12 * scale {
                return Err(LabError::Validation(format!(
                    "operator {name} has entry ({i}, {j}) outside its support"
                )));
            }
        }
    }
    Ok(())
}

/// End-to-end check of the commutator bound for projectors onto two
/// disjoint blocks. `grid` must be the certificate's grid.
pub fn bound_audit(
    h: &TimeDependentHamiltonian,
    supp_a: &Block,
    supp_b: &Block,
    certificate: &LocalityCertificate,
    grid: &TimeGrid,
) -> Result<AuditReport> {
    if supp_a.intersects(supp_b) {
        return Err(LabError::Precondition(
            "operator supports must be disjoint".into(),
        ));
    }
    supp_a.check_dimension(h.dimension())?;
    supp_b.check_dimension(h.dimension())?;
    check_alignment(grid.points(), &certificate.grid)?;
    BoundAuditor::new(h, grid, certificate.basis_permutation.clone(), AUDIT_TOL)?.audit(
        supp_a,
        supp_b,
        certificate,
    )
}
