//! Benchmarks for the data-parallel inner loops (correlation matrix rows and
//! band-scan samples).
//!
//! The parallel/sequential choice is a compile-time feature, so the
//! comparison runs as two invocations against a saved criterion baseline:
//!
//! ```text
//! cargo bench --bench par_vs_seq -- --save-baseline parallel
//! cargo bench --bench par_vs_seq --no-default-features -- --baseline parallel
//! ```
//!
//! The second run reports each benchmark's change relative to the parallel
//! baseline.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use zigzag::bands::{band_scan, BandPath};
use zigzag::dmrg::{build_lattice_hamiltonian, dmrg_ground_state, DmrgControls};
use zigzag::localbasis::{solve_local_basis_well, LocalBasis, SolveOptions, WellParameters};
use zigzag::model::CoefficientTable;
use zigzag::mps::{InitStrategy, MatrixProductState};
use zigzag::observables::correlation_matrix;

fn prepared_state(l: usize, d: usize) -> (MatrixProductState, LocalBasis) {
    let coeffs = CoefficientTable::compute(1.0, 2).expect("coefficients");
    let well = WellParameters {
        g: 0.1,
        mu: 2.0 - coeffs.m1(),
        quartic: coeffs.m2(),
    };
    let basis =
        solve_local_basis_well(&well, d, None, &SolveOptions::default()).expect("local basis");
    let h = build_lattice_hamiltonian(&basis, coeffs.n1(), l).expect("hamiltonian");
    let init = MatrixProductState::initialize(l, d, InitStrategy::Staggered).expect("init");
    let controls = DmrgControls {
        d_max: 20,
        sweep_limit: 6,
        ..Default::default()
    };
    let (state, _) = dmrg_ground_state(&h, init, &controls).expect("dmrg");
    (state, basis)
}

fn bench_correlation_matrix(c: &mut Criterion) {
    let mut group = c.benchmark_group("correlation_matrix");
    group.sample_size(10);
    for &l in &[32usize, 64] {
        let (state, basis) = prepared_state(l, 6);
        group.bench_with_input(BenchmarkId::from_parameter(l), &l, |b, _| {
            b.iter(|| correlation_matrix(&state, &basis.y_op).expect("correlators"))
        });
    }
    group.finish();
}

fn bench_band_scan(c: &mut Criterion) {
    let mut group = c.benchmark_group("band_scan");
    for &samples in &[129usize, 513] {
        group.bench_with_input(
            BenchmarkId::from_parameter(samples),
            &samples,
            |b, &samples| {
                b.iter(|| band_scan(BandPath::Line1d, 2, 1.0, samples, 1e-10).expect("scan"))
            },
        );
    }
    group.finish();
}

criterion_group!(benches, bench_correlation_matrix, bench_band_scan);
criterion_main!(benches);
