//! Time-dependent Hamiltonian families with analytic time derivatives.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::numerics::{check_hermitian, CMatrix};

const MODEL_HERMITIAN_TOL: f64 = 1e-12;

/// Dimension of the built-in eleven-level example.
pub const REFERENCE_DIM: usize = 11;

#[derive(Debug, Clone, PartialEq)]
pub enum Variant {
    Constant(CMatrix),
    /// `H(t) = (1 − t/T)·initial + (t/T)·target` on `[0, T]`.
    LinearInterpolation {
        initial: CMatrix,
        target: CMatrix,
        total_time: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeDependentHamiltonian {
    variant: Variant,
    dimension: usize,
}

impl TimeDependentHamiltonian {
    pub fn constant(h: CMatrix) -> Result<Self> {
        check_hermitian(&h, MODEL_HERMITIAN_TOL, "Hamiltonian")?;
        let dimension = h.nrows();
        Ok(TimeDependentHamiltonian {
            variant: Variant::Constant(h),
            dimension,
        })
    }

    pub fn linear(initial: CMatrix, target: CMatrix, total_time: f64) -> Result<Self> {
        check_hermitian(&initial, MODEL_HERMITIAN_TOL, "initial Hamiltonian")?;
        check_hermitian(&target, MODEL_HERMITIAN_TOL, "final Hamiltonian")?;
        if initial.shape() != target.shape() {
            return Err(LabError::Validation(format!(
                "initial and final Hamiltonians differ in dimension ({} vs {})",
                initial.nrows(),
                target.nrows()
            )));
        }
        if !(total_time > 0.0) || !total_time.is_finite() {
            return Err(LabError::Domain(format!(
                "total time must be positive, got {total_time}"
            )));
        }
        let dimension = initial.nrows();
        Ok(TimeDependentHamiltonian {
            variant: Variant::LinearInterpolation {
                initial,
                target,
                total_time,
            },
            dimension,
        })
    }

    pub fn variant(&self) -> &Variant {
        &self.variant
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// `T` for interpolations, `None` for constant Hamiltonians.
    pub fn total_time(&self) -> Option<f64> {
        match &self.variant {
            Variant::Constant(_) => None,
            Variant::LinearInterpolation { total_time, .. } => Some(*total_time),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.variant, Variant::Constant(_))
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !t.is_finite() {
            return Err(LabError::Domain(format!("time must be finite, got {t}")));
        }
        if let Variant::LinearInterpolation { total_time, .. } = &self.variant {
            // One ulp of slack so grids built as k·T/N land inside.
            let slack = 4.0 * f64::EPSILON * total_time;
            if t < -slack || t > total_time + slack {
                return Err(LabError::Domain(format!(
                    "t = {t} outside the schedule [0, {total_time}]"
                )));
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, t: f64) -> Result<CMatrix> {
        self.check_time(t)?;
        Ok(self.evaluate_unchecked(t))
    }

    pub(crate) fn evaluate_unchecked(&self, t: f64) -> CMatrix {
        match &self.variant {
            Variant::Constant(h) => h.clone(),
            Variant::LinearInterpolation {
                initial,
                target,
                total_time,
            } => {
                let s = (t / total_time).clamp(0.0, 1.0);
                initial * Complex64::new(1.0 - s, 0.0) + target * Complex64::new(s, 0.0)
            }
        }
    }

    /// `∂_t H`.
    pub fn derivative(&self, t: f64) -> Result<CMatrix> {
        self.check_time(t)?;
        Ok(self.derivative_unchecked())
    }

    pub(crate) fn derivative_unchecked(&self) -> CMatrix {
        match &self.variant {
            Variant::Constant(h) => CMatrix::zeros(h.nrows(), h.ncols()),
            Variant::LinearInterpolation {
                initial,
                target,
                total_time,
            } => (target - initial) / Complex64::new(*total_time, 0.0),
        }
    }

    /// The same family multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let k = Complex64::new(c, 0.0);
        let variant = match &self.variant {
            Variant::Constant(h) => Variant::Constant(h * k),
            Variant::LinearInterpolation {
                initial,
                target,
                total_time,
            } => Variant::LinearInterpolation {
                initial: initial * k,
                target: target * k,
                total_time: *total_time,
            },
        };
        TimeDependentHamiltonian {
            variant,
            dimension: self.dimension,
        }
    }
}

/// `0.1·Σ_k k|k⟩⟨k|` on eleven levels.
pub fn reference_initial_hamiltonian() -> CMatrix {
    let mut h = CMatrix::zeros(REFERENCE_DIM, REFERENCE_DIM);
    for k in 0..REFERENCE_DIM {
        h[(k, k)] = Complex64::new(0.1 * k as f64, 0.0);
    }
    h
}

/// The initial Hamiltonian plus `1/2` on both first off-diagonals.
pub fn reference_final_hamiltonian() -> CMatrix {
    let mut h = reference_initial_hamiltonian();
    for k in 0..REFERENCE_DIM - 1 {
        h[(k, k + 1)] = Complex64::new(0.5, 0.0);
        h[(k + 1, k)] = Complex64::new(0.5, 0.0);
    }
    h
}

/// Eleven-level linear sweep from a ladder of levels to the same ladder with
/// nearest-neighbour couplings, over total time `T`.
pub fn build_paper_example(total_time: f64) -> Result<TimeDependentHamiltonian> {
    TimeDependentHamiltonian::linear(
        reference_initial_hamiltonian(),
        reference_final_hamiltonian(),
        total_time,
    )
}

/// Ensemble of random Hermitian matrices inside an exponential envelope
/// `|H_ij| ≤ h·e^{−μ′|i−j|}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpLocalSpec {
    pub dimension: usize,
    pub amplitude: f64,
    pub decay: f64,
    pub seed: u64,
}

/// Draws one member of the exponential-envelope ensemble.
///
/// Each entry has modulus uniform in `[0, h·e^{−μ′|i−j|}]`; off-diagonal
/// phases are uniform, diagonal entries real with a random sign.
pub fn random_exp_local(spec: &ExpLocalSpec) -> Result<CMatrix> {
    if spec.dimension < 2 {
        return Err(LabError::Domain(format!(
            "dimension must be at least 2, got {}",
            spec.dimension
        )));
    }
    if !(spec.amplitude > 0.0) || !(spec.decay > 0.0) {
        return Err(LabError::Domain(
            "amplitude and decay rate must be positive".into(),
        ));
    }
    let n = spec.dimension;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut h = CMatrix::zeros(n, n);
    for i in 0..n {
        let magnitude = spec.amplitude * rng.random::<f64>();
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        h[(i, i)] = Complex64::new(sign * magnitude, 0.0);
        for j in (i + 1)..n {
            let envelope = spec.amplitude * (-spec.decay * (j - i) as f64).exp();
            let magnitude = envelope * rng.random::<f64>();
            let phase = std::f64::consts::TAU * rng.random::<f64>();
            let z = Complex64::from_polar(magnitude, phase);
            h[(i, j)] = z;
            h[(j, i)] = z.conj();
        }
    }
    Ok(h)
}
