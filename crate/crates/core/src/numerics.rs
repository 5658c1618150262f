//! Dense numerical kernels shared by every other module.
//!
//! All matrices are small dense complex matrices; decompositions are exact
//! (no iterative truncation), which keeps the bound checks free of
//! convergence ambiguity.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{LabError, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

const HERMITIAN_REL_TOL: f64 = 1e-10;
const ANTI_HERMITIAN_REL_TOL: f64 = 1e-10;

/// Ascending eigenvalues with the matching orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl EigenSystem {
    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, k: usize) -> CVector {
        self.vectors.column(k).into_owned()
    }

    /// `Σ_k f(λ_k) |v_k⟩⟨v_k|`.
    pub fn apply_function(&self, f: impl Fn(f64) -> Complex64) -> CMatrix {
        let mut scaled = self.vectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.values[k]);
        }
        scaled * self.vectors.adjoint()
    }
}

/// Uniform time discretisation used by quadratures and propagators.
///
/// Starts at 0, strictly increasing, at least two points.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(LabError::Validation(
                "time grid needs at least 2 points".into(),
            ));
        }
        if points[0] != 0.0 {
            return Err(LabError::Validation(format!(
                "time grid must start at 0, got {}",
                points[0]
            )));
        }
        if points.iter().any(|t| !t.is_finite()) {
            return Err(LabError::Validation(
                "time grid has non-finite points".into(),
            ));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LabError::Validation(
                "time grid must be strictly increasing".into(),
            ));
        }
        Ok(TimeGrid { points })
    }

    pub fn uniform(t_final: f64, n_points: usize) -> Result<Self> {
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(LabError::Domain(format!(
                "final time must be positive, got {t_final}"
            )));
        }
        if n_points < 2 {
            return Err(LabError::Validation(
                "time grid needs at least 2 points".into(),
            ));
        }
        let last = (n_points - 1) as f64;
        let mut points: Vec<f64> = (0..n_points).map(|k| t_final * (k as f64) / last).collect();
        points[n_points - 1] = t_final;
        TimeGrid::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn t_final(&self) -> f64 {
        *self.points.last().expect("grid is nonempty")
    }
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// Largest entrywise deviation `max |M_ij - conj(M_ji)|`.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn anti_hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] + m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs_entry(m: &CMatrix) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

pub fn check_finite(m: &CMatrix, what: &str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(LabError::Validation(format!("{what} has NaN/Inf entries")))
    }
}

pub fn check_square(m: &CMatrix, what: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(LabError::Validation(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// Validates that `m` is Hermitian to `rel_tol` relative to its largest entry
/// (absolute `rel_tol` for matrices with entries below 1).
pub fn check_hermitian(m: &CMatrix, rel_tol: f64, what: &str) -> Result<()> {
    check_square(m, what)?;
    check_finite(m, what)?;
    let defect = hermiticity_defect(m);
    let scale = max_abs_entry(m).max(1.0);
    if defect <= rel_tol * scale {
        Ok(())
    } else {
        Err(LabError::Validation(format!(
            "{what} is not Hermitian (defect {defect:.3e})"
        )))
    }
}

fn is_real(m: &CMatrix) -> bool {
    m.iter().all(|z| z.im == 0.0)
}

/// Eigen-decomposition without validation. The input is symmetrised first so
/// that round-off asymmetry never reaches the solver.
pub(crate) fn eigh_unchecked(m: &CMatrix) -> EigenSystem {
    let n = m.nrows();
    let (values, vectors): (Vec<f64>, CMatrix) = if is_real(m) {
        let re = DMatrix::<f64>::from_fn(n, n, |i, j| 0.5 * (m[(i, j)].re + m[(j, i)].re));
        let eig = SymmetricEigen::new(re);
        (
            eig.eigenvalues.iter().copied().collect(),
            eig.eigenvectors.map(|x| Complex64::new(x, 0.0)),
        )
    } else {
        let sym = CMatrix::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5);
        let eig = SymmetricEigen::new(sym);
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted_values = order.iter().map(|&k| values[k]).collect();
    let sorted_vectors = CMatrix::from_fn(n, n, |i, j| vectors[(i, order[j])]);
    EigenSystem {
        values: sorted_values,
        vectors: sorted_vectors,
    }
}

fn eigenvalues_unchecked(m: &CMatrix) -> Vec<f64> {
    let n = m.nrows();
    let mut values: Vec<f64> = if is_real(m) {
        let re = DMatrix::<f64>::from_fn(n, n, |i, j| 0.5 * (m[(i, j)].re + m[(j, i)].re));
        re.symmetric_eigenvalues().iter().copied().collect()
    } else {
        let sym = CMatrix::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5);
        sym.symmetric_eigenvalues().iter().copied().collect()
    };
    values.sort_by(f64::total_cmp);
    values
}

/// Ascending eigenvalues and orthonormal eigenvectors of a Hermitian matrix.
pub fn hermitian_eigensystem(m: &CMatrix) -> Result<EigenSystem> {
    check_square(m, "matrix")?;
    check_finite(m, "matrix")?;
    let defect = hermiticity_defect(m);
    let scale = m.norm();
    if defect > HERMITIAN_REL_TOL * scale {
        return Err(LabError::Validation(format!(
            "matrix is not Hermitian (defect {defect:.3e})"
        )));
    }
    Ok(eigh_unchecked(m))
}

/// Operator (spectral) norm: the largest singular value.
///
/// Hermitian and anti-Hermitian inputs go through a single eigenvalue solve;
/// everything else through the eigenvalues of `M†M`.
pub fn operator_norm(m: &CMatrix) -> Result<f64> {
    check_finite(m, "matrix")?;
    if m.is_empty() {
        return Ok(0.0);
    }
    Ok(operator_norm_unchecked(m))
}

pub(crate) fn operator_norm_unchecked(m: &CMatrix) -> f64 {
    if m.is_square() {
        let scale = max_abs_entry(m);
        if scale == 0.0 {
            return 0.0;
        }
        let exact = 1e-14 * scale;
        if hermiticity_defect(m) <= exact {
            return spectral_radius_hermitian(m);
        }
        if anti_hermiticity_defect(m) <= exact {
            let h = m * Complex64::i();
            return spectral_radius_hermitian(&h);
        }
    }
    let gram = m.adjoint() * m;
    let top = eigenvalues_unchecked(&gram).last().copied().unwrap_or(0.0);
    top.max(0.0).sqrt()
}

fn spectral_radius_hermitian(m: &CMatrix) -> f64 {
    let values = eigenvalues_unchecked(m);
    let lo = values.first().copied().unwrap_or(0.0).abs();
    let hi = values.last().copied().unwrap_or(0.0).abs();
    lo.max(hi)
}

/// `‖U†U − 1‖`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.nrows();
    let gram = u.adjoint() * u - identity(n);
    operator_norm_unchecked(&gram)
}

/// `exp(A)` for anti-Hermitian `A`, through the eigendecomposition of the
/// Hermitian matrix `iA`. The result is unitary up to round-off.
pub fn unitary_exponential(a: &CMatrix) -> Result<CMatrix> {
    check_square(a, "generator")?;
    check_finite(a, "generator")?;
    let defect = anti_hermiticity_defect(a);
    if defect > ANTI_HERMITIAN_REL_TOL * a.norm() {
        return Err(LabError::Validation(format!(
            "generator is not anti-Hermitian (defect {defect:.3e})"
        )));
    }
    let h = a * Complex64::i();
    Ok(exp_minus_i(&h, 1.0))
}

/// `exp(−i·dt·H)` for Hermitian `H`, no validation.
pub(crate) fn exp_minus_i(h: &CMatrix, dt: f64) -> CMatrix {
    let n = h.nrows();
    if is_real(h) {
        let re = DMatrix::<f64>::from_fn(n, n, |i, j| 0.5 * (h[(i, j)].re + h[(j, i)].re));
        let eig = SymmetricEigen::new(re);
        let v = &eig.eigenvectors;
        let (mut vc, mut vs) = (v.clone(), v.clone());
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            let (sin, cos) = (lambda * dt).sin_cos();
            vc.column_mut(k).scale_mut(cos);
            vs.column_mut(k).scale_mut(sin);
        }
        let vt = v.transpose();
        let (c, s) = (vc * &vt, vs * &vt);
        return CMatrix::from_fn(n, n, |i, j| Complex64::new(c[(i, j)], -s[(i, j)]));
    }
    eigh_unchecked(h).apply_function(|lambda| Complex64::from_polar(1.0, -lambda * dt))
}

/// One Newton-Schulz step `U(3 − U†U)/2` towards the nearest unitary.
pub(crate) fn reunitarize(u: &CMatrix) -> CMatrix {
    let n = u.nrows();
    let gram = u.adjoint() * u;
    let correction = CMatrix::from_fn(n, n, |i, j| {
        let delta = if i == j { 3.0 } else { 0.0 };
        (Complex64::new(delta, 0.0) - gram[(i, j)]) * 0.5
    });
    u * correction
}

/// Principal branch of the product logarithm on `x ≥ 0`: the `w ≥ 0` with
/// `w·e^w = x`. Newton iteration started from `ln(1 + x)`, which lies above
/// the root, so the iterates decrease monotonically.
pub fn lambert_w(x: f64) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(LabError::Domain(format!(
            "lambert_w is only defined here for x >= 0, got {x}"
        )));
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let mut w = x.ln_1p();
    for _ in 0..200 {
        let ew = w.exp();
        let f = w * ew - x;
        let step = f / (ew * (w + 1.0));
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * w.abs().max(1.0) {
            break;
        }
    }
    let residual = (w * w.exp() - x).abs();
    if residual > 1e-12 * x.max(1.0) {
        return Err(LabError::NonFinite(format!(
            "lambert_w({x}) did not converge (residual {residual:.3e})"
        )));
    }
    Ok(w)
}

/// Running trapezoidal integral `∫_0^{t_k} f` at every grid point.
pub fn cumulative_integral(samples: &[f64], grid: &TimeGrid) -> Result<Vec<f64>> {
    if samples.len() != grid.len() {
        return Err(LabError::Validation(format!(
            "{} samples for a {}-point grid",
            samples.len(),
            grid.len()
        )));
    }
    let t = grid.points();
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(samples.len());
    out.push(0.0);
    for k in 1..samples.len() {
        acc += 0.5 * (samples[k] + samples[k - 1]) * (t[k] - t[k - 1]);
        out.push(acc);
    }
    Ok(out)
}

/// Trapezoidal time average `(1/t) ∫_0^t f` with `t` the last grid point.
/// Exact for affine `f`.
pub fn time_average(samples: &[f64], grid: &TimeGrid) -> Result<f64> {
    let t = grid.t_final();
    if !(t > 0.0) {
        return Err(LabError::Domain(format!(
            "averaging window must be positive, got {t}"
        )));
    }
    let integral = cumulative_integral(samples, grid)?;
    Ok(integral[integral.len() - 1] / t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn operator_norm_of_identity_and_diagonal() {
        for n in [1, 3, 7] {
            assert!((operator_norm(&identity(n)).unwrap() - 1.0).abs() < 1e-14);
        }
        let d = CMatrix::from_diagonal(&CVector::from_fn(11, |k, _| c(0.1 * k as f64, 0.0)));
        assert!((operator_norm(&d).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn operator_norm_rejects_nan() {
        let mut m = identity(2);
        m[(0, 1)] = c(f64::NAN, 0.0);
        assert!(matches!(operator_norm(&m), Err(LabError::Validation(_))));
    }

    #[test]
    fn eigensystem_sorts_diagonal() {
        let d = CMatrix::from_diagonal(&CVector::from_vec(vec![
            c(3.0, 0.0),
            c(1.0, 0.0),
            c(2.0, 0.0),
        ]));
        let eig = hermitian_eigensystem(&d).unwrap();
        assert_eq!(eig.values, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn eigensystem_of_pauli_x() {
        let x =
            CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let eig = hermitian_eigensystem(&x).unwrap();
        assert!((eig.values[0] + 1.0).abs() < 1e-14);
        assert!((eig.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eigensystem_rejects_non_hermitian() {
        let m =
            CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(
            hermitian_eigensystem(&m),
            Err(LabError::Validation(_))
        ));
    }

    #[test]
    fn exponential_of_zero_is_identity() {
        let u = unitary_exponential(&CMatrix::zeros(4, 4)).unwrap();
        assert!((u - identity(4)).norm() < 1e-15);
    }

    #[test]
    fn exponential_pauli_rotation() {
        let a = CMatrix::from_row_slice(
            2,
            2,
            &[
                c(0.0, 0.0),
                c(0.0, -PI / 2.0),
                c(0.0, -PI / 2.0),
                c(0.0, 0.0),
            ],
        );
        let u = unitary_exponential(&a).unwrap();
        let expected = CMatrix::from_row_slice(
            2,
            2,
            &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, -1.0), c(0.0, 0.0)],
        );
        assert!((u - expected).camax() < 1e-12);
    }

    #[test]
    fn exponential_rejects_hermitian_generator() {
        assert!(unitary_exponential(&identity(2)).is_err());
    }

    #[test]
    fn lambert_w_special_values() {
        assert_eq!(lambert_w(0.0).unwrap(), 0.0);
        assert!((lambert_w(E).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(lambert_w(-0.1), Err(LabError::Domain(_))));
        for x in [1e-300, 1e-8, 0.3, 7.0, 1e5, 1e200] {
            let w = lambert_w(x).unwrap();
            assert!((w * w.exp() - x).abs() <= 1e-12 * x.max(1.0), "x = {x}");
        }
    }

    #[test]
    fn time_average_cases() {
        let grid = TimeGrid::new(vec![0.0, 0.1, 0.35, 0.8, 1.0]).unwrap();
        let constant = vec![2.5; grid.len()];
        assert!((time_average(&constant, &grid).unwrap() - 2.5).abs() < 1e-15);
        let linear: Vec<f64> = grid.points().to_vec();
        assert!((time_average(&linear, &grid).unwrap() - 0.5).abs() < 1e-15);

        let fine = TimeGrid::uniform(1.0, 1001).unwrap();
        let squares: Vec<f64> = fine.points().iter().map(|t| t * t).collect();
        assert!((time_average(&squares, &fine).unwrap() - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn time_grid_validation() {
        assert!(TimeGrid::new(vec![0.0]).is_err());
        assert!(TimeGrid::new(vec![0.1, 0.2]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.2, 0.2]).is_err());
        assert!(TimeGrid::uniform(0.0, 10).is_err());
        let g = TimeGrid::uniform(3.0, 4).unwrap();
        assert_eq!(g.points(), &[0.0, 1.0, 2.0, 3.0]);
    }
}
