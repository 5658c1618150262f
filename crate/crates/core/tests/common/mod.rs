//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use lrlab_core::CMatrix;
use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_complex(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

pub fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    let m = random_complex(rng, n);
    (&m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

pub fn random_anti_hermitian(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    random_hermitian(rng, n) * Complex64::new(0.0, 1.0)
}

/// Haar-ish unitary from the QR factor of a random complex matrix.
pub fn random_unitary(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    random_complex(rng, n).qr().q()
}

/// `exp(A)` by scaling and squaring a 30-term Taylor series, carried in
/// `expm1` form so that small exponents keep full relative precision.
pub fn taylor_expm(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    let scale = 2f64.powi(-20);
    let x = a * Complex64::new(scale, 0.0);
    let mut term = x.clone();
    let mut e = x.clone();
    for k in 2..=30 {
        term = &term * &x * Complex64::new(1.0 / k as f64, 0.0);
        e += &term;
    }
    for _ in 0..20 {
        e = &e * Complex64::new(2.0, 0.0) + &e * &e;
    }
    CMatrix::identity(n, n) + e
}

/// Classical RK4 for `i dU/dt = H(t) U` from `U(0) = 1`, reporting `U` at
/// every multiple of `steps_per_checkpoint`.
pub fn rk4_propagator(
    h: impl Fn(f64) -> CMatrix,
    n: usize,
    checkpoints: &[f64],
    steps_per_checkpoint: usize,
) -> Vec<CMatrix> {
    let minus_i = Complex64::new(0.0, -1.0);
    let f = |t: f64, u: &CMatrix| h(t) * u * minus_i;
    let mut u = CMatrix::identity(n, n);
    let mut out = vec![u.clone()];
    for w in checkpoints.windows(2) {
        let dt = (w[1] - w[0]) / steps_per_checkpoint as f64;
        let half = Complex64::new(dt / 2.0, 0.0);
        let full = Complex64::new(dt, 0.0);
        for s in 0..steps_per_checkpoint {
            let t = w[0] + s as f64 * dt;
            let k1 = f(t, &u);
            let k2 = f(t + dt / 2.0, &(&u + &k1 * half));
            let k3 = f(t + dt / 2.0, &(&u + &k2 * half));
            let k4 = f(t + dt, &(&u + &k3 * full));
            u += (k1 + k2 * Complex64::new(2.0, 0.0) + k3 * Complex64::new(2.0, 0.0) + k4)
                * Complex64::new(dt / 6.0, 0.0);
        }
        out.push(u.clone());
    }
    out
}

pub fn svd_norm(m: &CMatrix) -> f64 {
    m.clone().singular_values().max()
}

/// Lower bound on `‖M‖` from random unit vectors, then polished by power
/// iteration on `M†M` from the best sample.
pub fn sampled_norm(m: &CMatrix, rng: &mut ChaCha8Rng, samples: usize) -> f64 {
    let n = m.ncols();
    let mut best = (0.0f64, DVector::zeros(n));
    for _ in 0..samples {
        let v = DVector::from_fn(n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let v = &v / Complex64::new(v.norm(), 0.0);
        let value = (m * &v).norm();
        if value > best.0 {
            best = (value, v);
        }
    }
    let gram = m.adjoint() * m;
    let mut v = best.1;
    let mut value = best.0;
    for _ in 0..2000 {
        let w = &gram * &v;
        let norm = w.norm();
        if norm == 0.0 {
            break;
        }
        v = w / Complex64::new(norm, 0.0);
        value = value.max((m * &v).norm());
    }
    value
}

/// Solves `w·e^w = x` for `x ≥ 0` by bisection.
pub fn lambert_bisect(x: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, x.max(1.0));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid * mid.exp() < x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `max_i [|H_ii| + Σ_{j≠i} 2|H_ij| e^{μ|i−j|}]`, summed entry by entry.
pub fn a_mu_direct(h: &CMatrix, mu: f64) -> f64 {
    let n = h.nrows();
    (0..n)
        .map(|i| {
            let mut s = h[(i, i)].norm();
            for j in 0..n {
                if j != i && h[(i, j)].norm() >= 1e-14 {
                    s += 2.0 * h[(i, j)].norm() * (mu * i.abs_diff(j) as f64).exp();
                }
            }
            s
        })
        .fold(0.0, f64::max)
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Uniform grid search for the minimum of `f` on `(lo, hi)`, endpoints excluded.
pub fn grid_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> (f64, f64) {
    (1..=points)
        .map(|k| lo + (hi - lo) * k as f64 / (points + 1) as f64)
        .map(|x| (x, f(x)))
        .fold((f64::NAN, f64::INFINITY), |best, p| {
            if p.1 < best.1 {
                p
            } else {
                best
            }
        })
}

use lrlab_core::basis_blocks::pairwise_decompose;
use lrlab_core::hamiltonian_model::{random_exp_local, ExpLocalSpec};
use lrlab_core::locality::{a_mu_pointwise, certify};
use lrlab_core::{Block, LocalityCertificate, Permutation, TimeDependentHamiltonian, TimeGrid};

/// One seeded member of the exponential-envelope ensemble with its
/// certificate at `μ = μ′/2` and a window where `⟨a_μ⟩·t = 5`.
pub struct EnsembleMember {
    pub spec: ExpLocalSpec,
    pub h: TimeDependentHamiltonian,
    pub grid: TimeGrid,
    pub certificate: LocalityCertificate,
}

pub fn ensemble_member(seed: u64, points: usize) -> EnsembleMember {
    let mut r = rng(seed ^ 0x5eed);
    let spec = ExpLocalSpec {
        dimension: r.random_range(4..=16),
        amplitude: 1.0,
        decay: r.random_range(1.0..=3.0),
        seed,
    };
    let m = random_exp_local(&spec).unwrap();
    let mu = spec.decay / 2.0;
    let a = a_mu_pointwise(&pairwise_decompose(&m).unwrap(), mu);
    let h = TimeDependentHamiltonian::constant(m).unwrap();
    let grid = TimeGrid::uniform(5.0 / a, points).unwrap();
    let certificate = certify(&h, mu, &grid, Permutation::identity(spec.dimension)).unwrap();
    EnsembleMember {
        spec,
        h,
        grid,
        certificate,
    }
}

/// Singleton source `{0}` against every `{j}` with `j ≥ 2`, plus
/// complementary intervals separated by one label.
pub fn support_pairs(n: usize) -> Vec<(Block, Block)> {
    let mut pairs: Vec<(Block, Block)> = (2..n)
        .map(|j| (Block::singleton(0), Block::singleton(j)))
        .collect();
    for m in 0..n.saturating_sub(2) {
        pairs.push((
            Block::interval(0, m).unwrap(),
            Block::interval(m + 2, n - 1).unwrap(),
        ));
    }
    pairs
}
