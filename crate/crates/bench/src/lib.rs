//! Criterion benchmarks for the numerical kernels.

use std::hint::black_box;

use criterion::Criterion;
use lrlab_core::basis_blocks::pairwise_decompose;
use lrlab_core::hamiltonian_model::{
    build_paper_example, random_exp_local, reference_final_hamiltonian, ExpLocalSpec,
};
use lrlab_core::locality::{a_mu_pointwise, Certifier};
use lrlab_core::numerics::{hermitian_eigensystem, operator_norm};
use lrlab_core::propagation::evolve_fixed;
use lrlab_core::{Permutation, TimeGrid};

pub fn kernels(c: &mut Criterion) {
    let h = reference_final_hamiltonian();
    let dense = random_exp_local(&ExpLocalSpec {
        dimension: 16,
        amplitude: 1.0,
        decay: 1.0,
        seed: 7,
    })
    .expect("valid ensemble spec");

    c.bench_function("eigensystem_real_11", |b| {
        b.iter(|| hermitian_eigensystem(black_box(&h)))
    });
    c.bench_function("eigensystem_complex_16", |b| {
        b.iter(|| hermitian_eigensystem(black_box(&dense)))
    });
    c.bench_function("operator_norm_16", |b| {
        b.iter(|| operator_norm(black_box(&dense)))
    });
    c.bench_function("a_mu_pointwise_16", |b| {
        let d = pairwise_decompose(&dense).expect("hermitian");
        b.iter(|| a_mu_pointwise(black_box(&d), 0.5))
    });
}

pub fn pipelines(c: &mut Criterion) {
    let h = build_paper_example(25.0).expect("positive T");
    let grid = TimeGrid::uniform(25.0, 201).expect("valid grid");
    let mut group = c.benchmark_group("pipelines");
    group.sample_size(10);
    group.bench_function("evolve_fixed_reference_201x8", |b| {
        b.iter(|| evolve_fixed(black_box(&h), &grid, 8))
    });
    group.bench_function("certificate_reference_201", |b| {
        b.iter(|| {
            Certifier::new(black_box(&h), &grid, Permutation::identity(11))
                .and_then(|c| c.certificate(0.5))
        })
    });
    group.finish();
}
