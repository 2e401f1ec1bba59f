//! Brute-force cross-check of the recursive classifier.
//!
//! Builds the full joint ridge system over the source set and every target
//! sample ever accepted, then solves it in one shot through an LU path that
//! shares no code with the incremental Cholesky machinery. If the recursion
//! is right, both routes agree to near machine precision regardless of how
//! the stream was batched.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classifier::{compute_class_weights, init_source, one_hot};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::Branch;

/// Solve `a·x = b` by LU with partial pivoting. Deliberately naive; this is
/// the referee, not the fast path.
pub fn lu_solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if a.cols() != n || b.rows() != n {
        return Err(Error::dim("lu_solve", (n, n), b.shape()));
    }
    let c = b.cols();
    let mut lu = a.clone();
    let mut x = b.clone();
    let mut perm: Vec<usize> = (0..n).collect();

    for k in 0..n {
        let mut pivot_row = k;
        let mut pivot_val = lu[(k, k)].abs();
        for i in k + 1..n {
            if lu[(i, k)].abs() > pivot_val {
                pivot_val = lu[(i, k)].abs();
                pivot_row = i;
            }
        }
        if pivot_val == 0.0 || !pivot_val.is_finite() {
            return Err(Error::NotPositiveDefinite {
                pivot: k,
                value: lu[(pivot_row, k)],
            });
        }
        if pivot_row != k {
            perm.swap(k, pivot_row);
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(pivot_row, j)];
                lu[(pivot_row, j)] = tmp;
            }
            for j in 0..c {
                let tmp = x[(k, j)];
                x[(k, j)] = x[(pivot_row, j)];
                x[(pivot_row, j)] = tmp;
            }
        }
        for i in k + 1..n {
            let f = lu[(i, k)] / lu[(k, k)];
            lu[(i, k)] = f;
            for j in k + 1..n {
                let sub = f * lu[(k, j)];
                lu[(i, j)] -= sub;
            }
            for j in 0..c {
                let sub = f * x[(k, j)];
                x[(i, j)] -= sub;
            }
        }
    }
    // Back substitution.
    for i in (0..n).rev() {
        for j in 0..c {
            let mut s = x[(i, j)];
            for k in i + 1..n {
                s -= lu[(i, k)] * x[(k, j)];
            }
            x[(i, j)] = s / lu[(i, i)];
        }
    }
    Ok(x)
}

/// One-shot weighted ridge solution over stacked source and target blocks:
/// source rows scaled by √ω (the algebraic twin of direct ω-weighting),
/// target rows at weight 1.
pub fn joint_ridge_solve(
    src_x: &Matrix,
    src_y: &Matrix,
    src_w: &[f64],
    tgt_x: &Matrix,
    tgt_y: &Matrix,
    gamma: f64,
) -> Result<Matrix> {
    if src_x.rows() != src_y.rows() || src_x.rows() != src_w.len() {
        return Err(Error::LengthMismatch {
            context: "joint solve source block",
            expected: src_x.rows(),
            found: src_w.len(),
        });
    }
    if tgt_x.rows() != tgt_y.rows() {
        return Err(Error::dim(
            "joint solve target block",
            (tgt_x.rows(), tgt_y.cols()),
            tgt_y.shape(),
        ));
    }
    let phi = src_x.cols();
    let classes = src_y.cols();
    let total = src_x.rows() + tgt_x.rows();

    let mut a = Matrix::zeros(total, phi);
    let mut b = Matrix::zeros(total, classes);
    for k in 0..src_x.rows() {
        let s = src_w[k].sqrt();
        for j in 0..phi {
            a[(k, j)] = s * src_x[(k, j)];
        }
        for j in 0..classes {
            b[(k, j)] = s * src_y[(k, j)];
        }
    }
    for k in 0..tgt_x.rows() {
        let r = src_x.rows() + k;
        for j in 0..phi {
            a[(r, j)] = tgt_x[(k, j)];
        }
        for j in 0..classes {
            b[(r, j)] = tgt_y[(k, j)];
        }
    }

    // Normal equations by plain triple loops; no shared kernels.
    let mut m = Matrix::zeros(phi, phi);
    for i in 0..phi {
        for j in 0..phi {
            let mut s = 0.0;
            for k in 0..total {
                s += a[(k, i)] * a[(k, j)];
            }
            m[(i, j)] = s;
        }
        m[(i, i)] += gamma;
    }
    let mut rhs = Matrix::zeros(phi, classes);
    for i in 0..phi {
        for j in 0..classes {
            let mut s = 0.0;
            for k in 0..total {
                s += a[(k, i)] * b[(k, j)];
            }
            rhs[(i, j)] = s;
        }
    }
    lu_solve(&m, &rhs)
}

/// Configuration for the randomized equivalence suite.
#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub cases: usize,
    pub phis: Vec<usize>,
    pub classes: Vec<usize>,
    pub source_size: usize,
    pub max_batches: usize,
    pub max_batch_size: usize,
    pub gamma: f64,
    pub tolerance: f64,
    pub near_duplicate: bool,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            cases: 50,
            phis: vec![8, 32, 128],
            classes: vec![2, 10],
            source_size: 200,
            max_batches: 100,
            max_batch_size: 17,
            gamma: 1.0,
            tolerance: 1e-8,
            near_duplicate: false,
            seed: 0xda7a,
        }
    }
}

/// The joint solve is only tractable densely; keep it desk-sized.
pub const MAX_ORACLE_PHI: usize = 256;

#[derive(Debug, Clone, serde::Serialize)]
pub struct CaseResult {
    pub case: usize,
    pub phi: usize,
    pub classes: usize,
    pub batches: usize,
    pub target_samples: usize,
    pub rel_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SuiteReport {
    pub cases: Vec<CaseResult>,
    pub tolerance: f64,
    pub max_rel_error: f64,
    pub all_pass: bool,
}

/// Run randomized recursive-vs-joint equivalence cases.
pub fn run_equivalence_suite(config: &SuiteConfig) -> Result<SuiteReport> {
    if let Some(&phi) = config.phis.iter().find(|&&p| p > MAX_ORACLE_PHI) {
        return Err(Error::InvalidConfig(format!(
            "oracle phi {phi} exceeds cap {MAX_ORACLE_PHI}"
        )));
    }
    if config.cases == 0 || config.phis.is_empty() || config.classes.is_empty() {
        return Err(Error::InvalidConfig("empty oracle suite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut cases = Vec::with_capacity(config.cases);
    let mut max_rel_error = 0.0f64;

    for case in 0..config.cases {
        let phi = config.phis[case % config.phis.len()];
        let num_classes = config.classes[(case / config.phis.len()) % config.classes.len()];

        // Imbalanced source: every class present, counts otherwise random.
        let mut labels: Vec<usize> = (0..num_classes).collect();
        while labels.len() < config.source_size {
            let c = rng.random_range(0..num_classes);
            // Skew mass toward low class indices.
            if c == 0 || rng.random_range(0.0..1.0) < 0.6 {
                labels.push(c);
            }
        }
        let src_x = Matrix::from_fn(labels.len(), phi, |_, _| rng.random_range(-1.0..1.0));
        let src_y = one_hot(&labels, num_classes);
        let weights = compute_class_weights(&labels, num_classes)?;
        let sample_w: Vec<f64> = labels.iter().map(|&l| weights.weight_for(l)).collect();

        let mut ac = init_source(Branch::Fused, &src_x, &src_y, &weights, config.gamma)?;

        let batches = rng.random_range(1..=config.max_batches);
        let mut tgt_x_parts: Vec<Matrix> = Vec::new();
        let mut tgt_y_parts: Vec<Matrix> = Vec::new();
        for _ in 0..batches {
            let k = rng.random_range(1..=config.max_batch_size);
            let x = if config.near_duplicate {
                let base: Vec<f64> = src_x.row(rng.random_range(0..src_x.rows())).to_vec();
                Matrix::from_fn(k, phi, |_, j| base[j] + 1e-9 * rng.random_range(-1.0..1.0))
            } else {
                Matrix::from_fn(k, phi, |_, _| rng.random_range(-1.0..1.0))
            };
            let mut y = Matrix::zeros(k, num_classes);
            for i in 0..k {
                // Soft-label-shaped rows: top-2 when the label space allows.
                let top = rng.random_range(0..num_classes);
                if num_classes >= 2 {
                    y[(i, top)] = 2.0 / 3.0;
                    y[(i, (top + 1) % num_classes)] = 1.0 / 3.0;
                } else {
                    y[(i, top)] = 1.0;
                }
            }
            ac.adapt(&x, &y)?;
            tgt_x_parts.push(x);
            tgt_y_parts.push(y);
        }

        let tx_refs: Vec<&Matrix> = tgt_x_parts.iter().collect();
        let ty_refs: Vec<&Matrix> = tgt_y_parts.iter().collect();
        let tgt_x = Matrix::vconcat(&tx_refs)?;
        let tgt_y = Matrix::vconcat(&ty_refs)?;

        let joint = joint_ridge_solve(&src_x, &src_y, &sample_w, &tgt_x, &tgt_y, config.gamma)?;
        let rel_error = ac.weights()?.rel_frobenius_diff(&joint);
        max_rel_error = max_rel_error.max(rel_error);
        cases.push(CaseResult {
            case,
            phi,
            classes: num_classes,
            batches,
            target_samples: tgt_x.rows(),
            rel_error,
            pass: rel_error <= config.tolerance,
        });
    }

    Ok(SuiteReport {
        tolerance: config.tolerance,
        max_rel_error,
        all_pass: cases.iter().all(|c| c.pass),
        cases,
    })
}

/// Force γ = 0 on a rank-deficient source; the expected outcome is a
/// NotPositiveDefinite diagnosis from the factorization.
pub fn probe_gamma_zero(phi: usize, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = phi / 2 + 1; // fewer samples than dimensions: singular Gram
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let src_x = Matrix::from_fn(n, phi, |_, _| rng.random_range(-1.0..1.0));
    let src_y = one_hot(&labels, 2);
    let weights = compute_class_weights(&labels, 2)?;
    init_source(Branch::Audio, &src_x, &src_y, &weights, 0.0).map(|_| ())
}
