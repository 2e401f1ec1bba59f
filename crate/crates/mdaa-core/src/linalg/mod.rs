//! Dense real linear algebra: SPD factor-and-solve, symmetric rank-k
//! accumulation, and the cross-correlation updates the classifiers live on.
//!
//! Everything is double precision and row-major. Symmetric results are built
//! by computing one triangle and mirroring it, so symmetry holds bit-for-bit.
//! No explicit matrix inverse is ever formed; solves go through a Cholesky
//! factor.

pub mod kernels;

use crate::error::{Error, Result};

/// Dense row-major matrix of f64.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Matrix {
        Matrix::scaled_identity(n, 1.0)
    }

    /// `s·I`, the ridge seed for a Gram accumulator.
    pub fn scaled_identity(n: usize, s: f64) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = s;
        }
        m
    }

    /// Wrap an existing row-major buffer. Panics if the length is wrong;
    /// that is a programming error, not a domain condition.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Matrix {
        assert_eq!(
            data.len(),
            rows * cols,
            "buffer length {} does not match {rows}x{cols}",
            data.len()
        );
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Matrix {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Matrix {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = vec![0.0; self.data.len()];
        kernels::transpose(&self.data, &mut out, self.rows, self.cols);
        Matrix {
            rows: self.cols,
            cols: self.rows,
            data: out,
        }
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::dim(
                "matmul",
                (self.cols, self.cols),
                (other.rows, other.cols),
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        kernels::matmul(
            &self.data,
            &other.data,
            &mut out.data,
            self.rows,
            self.cols,
            other.cols,
        );
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Relative Frobenius distance, with a unit floor on the denominator.
    pub fn rel_frobenius_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        let mut num = 0.0;
        for (a, b) in self.data.iter().zip(&other.data) {
            num += (a - b) * (a - b);
        }
        num.sqrt() / other.frobenius_norm().max(1e-30)
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        for i in 0..self.rows {
            for j in 0..i {
                if (self.data[i * self.cols + j] - self.data[j * self.cols + i]).abs()
                    > rel_tol * scale
                {
                    return false;
                }
            }
        }
        true
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Stack matrices with equal column counts on top of each other.
    pub fn vconcat(parts: &[&Matrix]) -> Result<Matrix> {
        let cols = parts.first().map_or(0, |m| m.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols != cols {
                return Err(Error::dim("vconcat", (0, cols), (p.rows, p.cols)));
            }
            data.extend_from_slice(&p.data);
            rows += p.rows;
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Place matrices with equal row counts side by side.
    pub fn hconcat(a: &Matrix, b: &Matrix) -> Result<Matrix> {
        if a.rows != b.rows {
            return Err(Error::dim("hconcat", (a.rows, 0), (b.rows, b.cols)));
        }
        let cols = a.cols + b.cols;
        let mut data = Vec::with_capacity(a.rows * cols);
        for i in 0..a.rows {
            data.extend_from_slice(a.row(i));
            data.extend_from_slice(b.row(i));
        }
        Ok(Matrix {
            rows: a.rows,
            cols,
            data,
        })
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower-triangular Cholesky factor of an SPD matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    lower: Matrix,
}

impl SpdFactor {
    pub fn dimension(&self) -> usize {
        self.lower.rows
    }

    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    /// `L·Lᵀ`; used by reconstruction checks.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.dimension();
        let l = &self.lower.data;
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = 0.0;
                for k in 0..=j {
                    s += l[i * n + k] * l[j * n + k];
                }
                out.data[i * n + j] = s;
            }
        }
        kernels::mirror_lower(&mut out.data, n);
        out
    }

    /// Fold `+ x·xᵀ` into the factor in O(n²) without refactorizing.
    pub fn rank_one_update(&mut self, x: &[f64]) {
        let n = self.dimension();
        assert_eq!(x.len(), n, "update vector length");
        let mut scratch = x.to_vec();
        kernels::cholesky_rank_one_update(&mut self.lower.data, &mut scratch, n);
    }
}

/// Cholesky-factorize a symmetric positive definite matrix. Only the lower
/// triangle of `m` is read, which also absorbs sub-tolerance asymmetry.
pub fn spd_factorize(m: &Matrix) -> Result<SpdFactor> {
    if m.rows != m.cols {
        return Err(Error::dim("spd_factorize", (m.rows, m.rows), m.shape()));
    }
    let n = m.rows;
    let mut lower = Matrix::zeros(n, n);
    for i in 0..n {
        lower.data[i * n..i * n + i + 1].copy_from_slice(&m.data[i * n..i * n + i + 1]);
    }
    kernels::cholesky_in_place(&mut lower.data, n)
        .map_err(|(pivot, value)| Error::NotPositiveDefinite { pivot, value })?;
    Ok(SpdFactor { lower })
}

/// Solve `(L·Lᵀ)·X = rhs` by forward/back substitution.
pub fn spd_solve(f: &SpdFactor, rhs: &Matrix) -> Result<Matrix> {
    let n = f.dimension();
    if rhs.rows != n {
        return Err(Error::dim("spd_solve", (n, rhs.cols), rhs.shape()));
    }
    let lt = f.lower.transpose();
    let mut bt = rhs.transpose();
    kernels::solve_factored(&f.lower.data, &lt.data, &mut bt.data, n);
    Ok(bt.transpose())
}

/// `p + xᵀx`, computed on the lower triangle and mirrored.
pub fn rank_k_update(p: &Matrix, x: &Matrix) -> Result<Matrix> {
    weighted_gram(p, x, None)
}

/// `p + xᵀ·diag(w)·x` for per-row weights.
pub fn weighted_rank_k_update(p: &Matrix, x: &Matrix, w: &[f64]) -> Result<Matrix> {
    check_weights(x, w)?;
    weighted_gram(p, x, Some(w))
}

fn weighted_gram(p: &Matrix, x: &Matrix, w: Option<&[f64]>) -> Result<Matrix> {
    if p.rows != p.cols {
        return Err(Error::dim("rank_k_update", (p.rows, p.rows), p.shape()));
    }
    if x.cols != p.rows {
        return Err(Error::dim("rank_k_update", (x.rows, p.rows), x.shape()));
    }
    let n = p.rows;
    if x.rows == 0 {
        return Ok(p.clone());
    }
    let xt = x.transpose();
    let mut out = Matrix::zeros(n, n);
    kernels::gram_update_lower(&p.data, &xt.data, &mut out.data, n, x.rows, w);
    kernels::mirror_lower(&mut out.data, n);
    Ok(out)
}

/// `q + xᵀy`.
pub fn cross_update(q: &Matrix, x: &Matrix, y: &Matrix) -> Result<Matrix> {
    weighted_cross(q, x, y, None)
}

/// `q + xᵀ·diag(w)·y`.
pub fn weighted_cross_update(q: &Matrix, x: &Matrix, y: &Matrix, w: &[f64]) -> Result<Matrix> {
    check_weights(x, w)?;
    weighted_cross(q, x, y, Some(w))
}

fn weighted_cross(q: &Matrix, x: &Matrix, y: &Matrix, w: Option<&[f64]>) -> Result<Matrix> {
    if x.cols != q.rows || y.cols != q.cols || x.rows != y.rows {
        return Err(Error::dim("cross_update", (x.rows, q.rows), y.shape()));
    }
    if x.rows == 0 {
        return Ok(q.clone());
    }
    let xt = x.transpose();
    let mut out = Matrix::zeros(q.rows, q.cols);
    kernels::cross_update(
        &q.data, &xt.data, &y.data, &mut out.data, q.rows, x.rows, q.cols, w,
    );
    Ok(out)
}

fn check_weights(x: &Matrix, w: &[f64]) -> Result<()> {
    if w.len() != x.rows {
        return Err(Error::LengthMismatch {
            context: "sample weights",
            expected: x.rows,
            found: w.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
        let a = random_matrix(rng, n, n);
        rank_k_update(&Matrix::identity(n), &a).unwrap()
    }

    #[test]
    fn factorize_diagonal() {
        let m = Matrix::from_rows(&[&[4.0, 0.0], &[0.0, 9.0]]);
        let f = spd_factorize(&m).unwrap();
        assert_eq!(f.lower()[(0, 0)], 2.0);
        assert_eq!(f.lower()[(1, 1)], 3.0);
        assert_eq!(f.lower()[(0, 1)], 0.0);
        assert_eq!(f.lower()[(1, 0)], 0.0);
    }

    #[test]
    fn factorize_identity() {
        let f = spd_factorize(&Matrix::identity(5)).unwrap();
        assert_eq!(f.lower(), &Matrix::identity(5));
    }

    #[test]
    fn factorize_reconstruction_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [3, 17, 64] {
            let m = random_spd(&mut rng, n);
            let f = spd_factorize(&m).unwrap();
            let rec = f.reconstruct();
            assert!(
                rec.rel_frobenius_diff(&m) <= 1e-10,
                "reconstruction error {} at n={n}",
                rec.rel_frobenius_diff(&m)
            );
        }
    }

    #[test]
    fn factorize_scaled_identity_always_succeeds() {
        for gamma in [1e-6, 1e-3, 1.0, 1e3] {
            let f = spd_factorize(&Matrix::scaled_identity(16, gamma)).unwrap();
            assert!((f.lower()[(0, 0)] - gamma.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn factorize_rejects_indefinite() {
        let m = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]);
        match spd_factorize(&m) {
            Err(Error::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
    }

    #[test]
    fn solve_identity_returns_rhs() {
        let f = spd_factorize(&Matrix::identity(4)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_matrix(&mut rng, 4, 3);
        let x = spd_solve(&f, &q).unwrap();
        assert_eq!(x, q);
    }

    #[test]
    fn solve_scalar() {
        let f = spd_factorize(&Matrix::from_rows(&[&[2.0]])).unwrap();
        let x = spd_solve(&f, &Matrix::from_rows(&[&[1.0]])).unwrap();
        assert!((x[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn solve_residual_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for n in [5, 32, 96] {
            let p = random_spd(&mut rng, n);
            let q = random_matrix(&mut rng, n, 7);
            let f = spd_factorize(&p).unwrap();
            let x = spd_solve(&f, &q).unwrap();
            let residual = p.matmul(&x).unwrap().rel_frobenius_diff(&q);
            assert!(residual <= 1e-10, "residual {residual} at n={n}");
        }
    }

    #[test]
    fn solve_dimension_mismatch() {
        let f = spd_factorize(&Matrix::identity(3)).unwrap();
        assert!(matches!(
            spd_solve(&f, &Matrix::zeros(4, 2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rank_k_single_outer_product() {
        let p = Matrix::zeros(2, 2);
        let x = Matrix::from_rows(&[&[1.0, 2.0]]);
        let r = rank_k_update(&p, &x).unwrap();
        assert_eq!(r, Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]));
    }

    #[test]
    fn rank_k_empty_update_is_identity_op() {
        let p = Matrix::identity(3);
        let x = Matrix::zeros(0, 3);
        assert_eq!(rank_k_update(&p, &x).unwrap(), p);
    }

    #[test]
    fn rank_k_matches_naive_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20;
        let k = 9;
        let p = random_spd(&mut rng, n);
        let x = random_matrix(&mut rng, k, n);
        let r = rank_k_update(&p, &x).unwrap();
        let mut naive = p.clone();
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for t in 0..k {
                    s += x[(t, i)] * x[(t, j)];
                }
                naive[(i, j)] += s;
            }
        }
        assert!(r.max_abs_diff(&naive) <= 1e-12);
    }

    #[test]
    fn rank_k_symmetry_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = random_spd(&mut rng, 33);
        let x = random_matrix(&mut rng, 11, 33);
        let r = rank_k_update(&p, &x).unwrap();
        for i in 0..33 {
            for j in 0..33 {
                assert_eq!(r[(i, j)].to_bits(), r[(j, i)].to_bits());
            }
        }
    }

    #[test]
    fn rank_k_additivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 16;
        let p = random_spd(&mut rng, n);
        let a = random_matrix(&mut rng, 6, n);
        let b = random_matrix(&mut rng, 4, n);
        let joint = Matrix::vconcat(&[&a, &b]).unwrap();
        let one_shot = rank_k_update(&p, &joint).unwrap();
        let stepped = rank_k_update(&rank_k_update(&p, &a).unwrap(), &b).unwrap();
        assert!(one_shot.max_abs_diff(&stepped) <= 1e-12);
    }

    #[test]
    fn cross_update_basic() {
        let q = Matrix::zeros(1, 2);
        let x = Matrix::from_rows(&[&[1.0], &[0.0]]);
        let y = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let r = cross_update(&q, &x, &y).unwrap();
        assert_eq!(r, Matrix::from_rows(&[&[1.0, 0.0]]));
    }

    #[test]
    fn cross_update_empty_is_identity_op() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = random_matrix(&mut rng, 5, 3);
        let r = cross_update(&q, &Matrix::zeros(0, 5), &Matrix::zeros(0, 3)).unwrap();
        assert_eq!(r, q);
    }

    #[test]
    fn cross_update_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (n, k, c) = (14, 8, 3);
        let q = random_matrix(&mut rng, n, c);
        let x = random_matrix(&mut rng, k, n);
        let y = random_matrix(&mut rng, k, c);
        let r = cross_update(&q, &x, &y).unwrap();
        let mut naive = q.clone();
        for i in 0..n {
            for j in 0..c {
                for t in 0..k {
                    naive[(i, j)] += x[(t, i)] * y[(t, j)];
                }
            }
        }
        assert!(r.max_abs_diff(&naive) <= 1e-12);
    }

    #[test]
    fn weighted_updates_match_sqrt_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (n, k, c) = (12, 30, 4);
        let p = Matrix::scaled_identity(n, 0.5);
        let q = Matrix::zeros(n, c);
        let x = random_matrix(&mut rng, k, n);
        let y = random_matrix(&mut rng, k, c);
        let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..3.0)).collect();

        let direct_p = weighted_rank_k_update(&p, &x, &w).unwrap();
        let direct_q = weighted_cross_update(&q, &x, &y, &w).unwrap();

        let mut xs = x.clone();
        let mut ys = y.clone();
        for t in 0..k {
            let s = w[t].sqrt();
            for v in xs.row_mut(t) {
                *v *= s;
            }
            for v in ys.row_mut(t) {
                *v *= s;
            }
        }
        let scaled_p = rank_k_update(&p, &xs).unwrap();
        let scaled_q = cross_update(&q, &xs, &ys).unwrap();

        assert!(direct_p.max_abs_diff(&scaled_p) <= 1e-12);
        assert!(direct_q.max_abs_diff(&scaled_q) <= 1e-12);
    }

    #[test]
    fn rank_one_factor_update_tracks_refactorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 24;
        let mut p = random_spd(&mut rng, n);
        let mut f = spd_factorize(&p).unwrap();
        for _ in 0..40 {
            let x = random_matrix(&mut rng, 1, n);
            p = rank_k_update(&p, &x).unwrap();
            f.rank_one_update(x.row(0));
        }
        let rec = f.reconstruct();
        assert!(
            rec.rel_frobenius_diff(&p) <= 1e-12,
            "drift {}",
            rec.rel_frobenius_diff(&p)
        );
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_paths_bit_identical_to_sequential() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        // Sizes above every dispatch threshold.
        let (m, k, n) = (96, 130, 140);
        let a = random_matrix(&mut rng, m, k);
        let b = random_matrix(&mut rng, k, n);

        let mut seq = vec![0.0; m * n];
        kernels::matmul_seq(a.as_slice(), b.as_slice(), &mut seq, m, k, n);
        let mut par = vec![0.0; m * n];
        kernels::matmul_par(a.as_slice(), b.as_slice(), &mut par, m, k, n);
        assert!(seq.iter().zip(&par).all(|(x, y)| x.to_bits() == y.to_bits()));

        let nn = 160;
        let p = random_spd(&mut rng, nn);
        let x = random_matrix(&mut rng, 40, nn);
        let xt = x.transpose();
        let mut gseq = vec![0.0; nn * nn];
        kernels::gram_update_lower_seq(p.as_slice(), xt.as_slice(), &mut gseq, nn, 40, None);
        let mut gpar = vec![0.0; nn * nn];
        kernels::gram_update_lower_par(p.as_slice(), xt.as_slice(), &mut gpar, nn, 40, None);
        assert!(gseq.iter().zip(&gpar).all(|(x, y)| x.to_bits() == y.to_bits()));

        let spd = rank_k_update(&Matrix::scaled_identity(nn, 1.0), &random_matrix(&mut rng, nn + 8, nn)).unwrap();
        let mut lower_seq = Matrix::zeros(nn, nn);
        let mut lower_par = Matrix::zeros(nn, nn);
        for i in 0..nn {
            for j in 0..=i {
                lower_seq[(i, j)] = spd[(i, j)];
                lower_par[(i, j)] = spd[(i, j)];
            }
        }
        kernels::cholesky_in_place_seq(lower_seq.as_mut_slice(), nn).unwrap();
        kernels::cholesky_in_place_par(lower_par.as_mut_slice(), nn).unwrap();
        assert!(lower_seq
            .as_slice()
            .iter()
            .zip(lower_par.as_slice())
            .all(|(x, y)| x.to_bits() == y.to_bits()));

        let rhs = random_matrix(&mut rng, nn, 12);
        let lt = lower_seq.transpose();
        let mut bt_seq = rhs.transpose();
        let mut bt_par = rhs.transpose();
        kernels::solve_factored_seq(lower_seq.as_slice(), lt.as_slice(), bt_seq.as_mut_slice(), nn);
        kernels::solve_factored_par(lower_seq.as_slice(), lt.as_slice(), bt_par.as_mut_slice(), nn);
        assert!(bt_seq
            .as_slice()
            .iter()
            .zip(bt_par.as_slice())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
