//! Microbenchmarks for the long-time stepping core: spectral primitives, the
//! Bloch transform, the PDE right-hand side and a full RK4 step, and the cell
//! eigensolve that dominates band-structure assembly.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use bloch_boussinesq::cell::{assemble_bloch_matrix, band_eigenpairs};
use bloch_boussinesq::coeffs::PeriodicCoefficients;
use bloch_boussinesq::grid::{GridField, SpectralGrid};
use bloch_boussinesq::sim::{evolve, MediumOnGrid, SimState, StepperConfig};
use bloch_boussinesq::{bloch, spectral};

fn bench_spectral(c: &mut Criterion) {
    let mut group = c.benchmark_group("spectral");
    for cells in [64usize, 256] {
        let grid = SpectralGrid::new(cells, 16);
        let f = GridField::from_fn(grid, |x| (x / cells as f64).sin() + 0.3 * x.cos());
        let g = GridField::from_fn(grid, |x| (2.0 * x / cells as f64).cos());
        group.bench_with_input(BenchmarkId::new("derivative", grid.n()), &grid, |b, _| {
            b.iter(|| spectral::derivative(black_box(&f), 2))
        });
        group.bench_with_input(
            BenchmarkId::new("dealiased_product", grid.n()),
            &grid,
            |b, _| b.iter(|| spectral::dealiased_product(black_box(&f), black_box(&g))),
        );
        group.bench_with_input(BenchmarkId::new("bloch_roundtrip", grid.n()), &grid, |b, _| {
            b.iter(|| {
                let fwd = bloch::forward(black_box(&f));
                bloch::inverse(&fwd)
            })
        });
    }
    group.finish();
}

fn bench_stepping(c: &mut Criterion) {
    let coeffs = PeriodicCoefficients::periodic();
    let mut group = c.benchmark_group("stepping");
    group.sample_size(20);
    for cells in [64usize, 256] {
        let grid = SpectralGrid::new(cells, 16);
        let medium = MediumOnGrid::new(&coeffs, grid);
        let mut state = SimState::rest(grid);
        state.u = GridField::from_fn(grid, |x| 0.02 * (x / cells as f64).sin());
        group.bench_with_input(BenchmarkId::new("rhs", grid.n()), &grid, |b, _| {
            b.iter(|| bloch_boussinesq::sim::rhs(black_box(&state), &medium, false))
        });
        let config = StepperConfig::at_margin(&coeffs, grid, 0.4);
        group.bench_with_input(BenchmarkId::new("rk4_step", grid.n()), &grid, |b, _| {
            b.iter(|| {
                evolve(state.clone(), &coeffs, config.dt, &config, &[], |_| {}).unwrap()
            })
        });
    }
    group.finish();
}

fn bench_eigensolve(c: &mut Criterion) {
    let coeffs = PeriodicCoefficients::periodic();
    let mut group = c.benchmark_group("cell_eigensolve");
    for m in [16usize, 32] {
        group.bench_with_input(BenchmarkId::new("band1", 2 * m + 1), &m, |b, &m| {
            b.iter(|| {
                let matrix = assemble_bloch_matrix(&coeffs, black_box(0.17), m);
                band_eigenpairs(&matrix, 2)
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_spectral, bench_stepping, bench_eigensolve);
criterion_main!(benches);
