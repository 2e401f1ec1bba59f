//! Sequential vs parallel kernel comparison.
//!
//! Run with `cargo bench --bench kernels`. The parallel arms only exist when
//! the `parallel` feature (default) is enabled; both paths produce
//! bit-identical results, so this suite is purely about throughput.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mdaa_core::linalg::{kernels, rank_k_update, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let a = random_matrix(rng, n + 8, n);
    rank_k_update(&Matrix::identity(n), &a).unwrap()
}

fn lower_of(m: &Matrix) -> Matrix {
    let n = m.rows();
    let mut lower = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            lower[(i, j)] = m[(i, j)];
        }
    }
    lower
}

fn bench_cholesky(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("cholesky");
    for n in [128usize, 256, 512] {
        let spd = random_spd(&mut rng, n);
        let lower = lower_of(&spd);
        group.bench_function(BenchmarkId::new("seq", n), |b| {
            b.iter(|| {
                let mut work = lower.clone();
                kernels::cholesky_in_place_seq(black_box(work.as_mut_slice()), n).unwrap();
                work
            })
        });
        #[cfg(feature = "parallel")]
        group.bench_function(BenchmarkId::new("par", n), |b| {
            b.iter(|| {
                let mut work = lower.clone();
                kernels::cholesky_in_place_par(black_box(work.as_mut_slice()), n).unwrap();
                work
            })
        });
    }
    group.finish();
}

fn bench_rank_k(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut group = c.benchmark_group("rank_k_update");
    for (n, k) in [(256usize, 64usize), (512, 64), (512, 256)] {
        let p = random_spd(&mut rng, n);
        let x = random_matrix(&mut rng, k, n);
        let xt = x.transpose();
        let id = format!("{n}x{k}");
        group.bench_function(BenchmarkId::new("seq", &id), |b| {
            b.iter(|| {
                let mut out = vec![0.0; n * n];
                kernels::gram_update_lower_seq(
                    black_box(p.as_slice()),
                    xt.as_slice(),
                    &mut out,
                    n,
                    k,
                    None,
                );
                kernels::mirror_lower(&mut out, n);
                out
            })
        });
        #[cfg(feature = "parallel")]
        group.bench_function(BenchmarkId::new("par", &id), |b| {
            b.iter(|| {
                let mut out = vec![0.0; n * n];
                kernels::gram_update_lower_par(
                    black_box(p.as_slice()),
                    xt.as_slice(),
                    &mut out,
                    n,
                    k,
                    None,
                );
                kernels::mirror_lower(&mut out, n);
                out
            })
        });
    }
    group.finish();
}

fn bench_matmul(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut group = c.benchmark_group("matmul");
    for (m, k, n) in [(64usize, 64usize, 512usize), (256, 64, 512), (512, 512, 64)] {
        let a = random_matrix(&mut rng, m, k);
        let b_m = random_matrix(&mut rng, k, n);
        let id = format!("{m}x{k}x{n}");
        group.bench_function(BenchmarkId::new("seq", &id), |bench| {
            bench.iter(|| {
                let mut out = vec![0.0; m * n];
                kernels::matmul_seq(black_box(a.as_slice()), b_m.as_slice(), &mut out, m, k, n);
                out
            })
        });
        #[cfg(feature = "parallel")]
        group.bench_function(BenchmarkId::new("par", &id), |bench| {
            bench.iter(|| {
                let mut out = vec![0.0; m * n];
                kernels::matmul_par(black_box(a.as_slice()), b_m.as_slice(), &mut out, m, k, n);
                out
            })
        });
    }
    group.finish();
}

fn bench_solve(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut group = c.benchmark_group("spd_solve");
    for (n, rhs) in [(256usize, 10usize), (512, 10), (512, 64)] {
        let spd = random_spd(&mut rng, n);
        let mut lower = lower_of(&spd);
        kernels::cholesky_in_place_seq(lower.as_mut_slice(), n).unwrap();
        let lt = lower.transpose();
        let b_m = random_matrix(&mut rng, n, rhs);
        let id = format!("{n}x{rhs}");
        group.bench_function(BenchmarkId::new("seq", &id), |bench| {
            bench.iter(|| {
                let mut bt = b_m.transpose();
                kernels::solve_factored_seq(
                    black_box(lower.as_slice()),
                    lt.as_slice(),
                    bt.as_mut_slice(),
                    n,
                );
                bt
            })
        });
        #[cfg(feature = "parallel")]
        group.bench_function(BenchmarkId::new("par", &id), |bench| {
            bench.iter(|| {
                let mut bt = b_m.transpose();
                kernels::solve_factored_par(
                    black_box(lower.as_slice()),
                    lt.as_slice(),
                    bt.as_mut_slice(),
                    n,
                );
                bt
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_cholesky, bench_rank_k, bench_matmul, bench_solve);
criterion_main!(benches);
