//! Low-level dense kernels, sequential and rayon-parallel.
//!
//! Public so the bench suite can compare both paths directly. Every parallel
//! kernel splits work across independent output slices only; inner
//! accumulation loops run in the same fixed order as the sequential kernel,
//! so the two paths produce bit-identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Work sizes below these thresholds stay on the sequential path even when
/// the `parallel` feature is enabled; rayon overhead dominates otherwise.
pub const PAR_FLOP_THRESHOLD: usize = 1 << 17;

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn dot_weighted(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    debug_assert_eq!(a.len(), w.len());
    let mut s = 0.0;
    for i in 0..a.len() {
        s += w[i] * a[i] * b[i];
    }
    s
}

#[inline]
fn matmul_row(out_row: &mut [f64], a_row: &[f64], b: &[f64], n: usize) {
    for (l, &a_val) in a_row.iter().enumerate() {
        let b_row = &b[l * n..l * n + n];
        for j in 0..n {
            out_row[j] += a_val * b_row[j];
        }
    }
}

/// `out += a * b` where `a` is m×k, `b` is k×n, `out` is m×n, all row-major.
/// `out` is expected zeroed by the caller.
pub fn matmul_seq(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        matmul_row(&mut out[i * n..i * n + n], &a[i * k..i * k + k], b, n);
    }
}

#[cfg(feature = "parallel")]
pub fn matmul_par(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    out.par_chunks_mut(n)
        .zip(a.par_chunks(k))
        .for_each(|(out_row, a_row)| matmul_row(out_row, a_row, b, n));
}

pub fn matmul(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    #[cfg(feature = "parallel")]
    if m * k * n >= PAR_FLOP_THRESHOLD && m > 1 {
        return matmul_par(a, b, out, m, k, n);
    }
    matmul_seq(a, b, out, m, k, n)
}

/// Lower-triangle pass of `out = p + xtᵀ diag(w) xt` style updates.
///
/// `xt` holds the k×n update block already transposed to n×k so each
/// pairwise accumulation streams two contiguous rows. Only entries with
/// j ≤ i are written; the caller mirrors.
fn gram_lower_row(
    out_row: &mut [f64],
    p_row: &[f64],
    i: usize,
    xt: &[f64],
    k: usize,
    w: Option<&[f64]>,
) {
    let xi = &xt[i * k..i * k + k];
    for j in 0..=i {
        let xj = &xt[j * k..j * k + k];
        let s = match w {
            Some(w) => dot_weighted(xi, xj, w),
            None => dot(xi, xj),
        };
        out_row[j] = p_row[j] + s;
    }
}

pub fn gram_update_lower_seq(
    p: &[f64],
    xt: &[f64],
    out: &mut [f64],
    n: usize,
    k: usize,
    w: Option<&[f64]>,
) {
    for i in 0..n {
        gram_lower_row(&mut out[i * n..i * n + n], &p[i * n..i * n + n], i, xt, k, w);
    }
}

#[cfg(feature = "parallel")]
pub fn gram_update_lower_par(
    p: &[f64],
    xt: &[f64],
    out: &mut [f64],
    n: usize,
    k: usize,
    w: Option<&[f64]>,
) {
    out.par_chunks_mut(n)
        .zip(p.par_chunks(n))
        .enumerate()
        .for_each(|(i, (out_row, p_row))| gram_lower_row(out_row, p_row, i, xt, k, w));
}

pub fn gram_update_lower(
    p: &[f64],
    xt: &[f64],
    out: &mut [f64],
    n: usize,
    k: usize,
    w: Option<&[f64]>,
) {
    #[cfg(feature = "parallel")]
    if n * n / 2 * k >= PAR_FLOP_THRESHOLD && n > 1 {
        return gram_update_lower_par(p, xt, out, n, k, w);
    }
    gram_update_lower_seq(p, xt, out, n, k, w)
}

/// Mirror the lower triangle into the upper one. Sequential by design: it is
/// O(n²) copies against the O(n²k) accumulation above.
pub fn mirror_lower(out: &mut [f64], n: usize) {
    for i in 1..n {
        for j in 0..i {
            out[j * n + i] = out[i * n + j];
        }
    }
}

fn cross_row(
    out_row: &mut [f64],
    q_row: &[f64],
    xt_row: &[f64],
    y: &[f64],
    k: usize,
    c: usize,
    w: Option<&[f64]>,
) {
    out_row.copy_from_slice(q_row);
    for t in 0..k {
        let xv = match w {
            Some(w) => w[t] * xt_row[t],
            None => xt_row[t],
        };
        let y_row = &y[t * c..t * c + c];
        for j in 0..c {
            out_row[j] += xv * y_row[j];
        }
    }
}

/// `out = q + xtᵀ·(diag(w)·y)` with `xt` the n×k transposed feature block and
/// `y` the k×c label block.
pub fn cross_update_seq(
    q: &[f64],
    xt: &[f64],
    y: &[f64],
    out: &mut [f64],
    n: usize,
    k: usize,
    c: usize,
    w: Option<&[f64]>,
) {
    for i in 0..n {
        cross_row(
            &mut out[i * c..i * c + c],
            &q[i * c..i * c + c],
            &xt[i * k..i * k + k],
            y,
            k,
            c,
            w,
        );
    }
}

#[cfg(feature = "parallel")]
pub fn cross_update_par(
    q: &[f64],
    xt: &[f64],
    y: &[f64],
    out: &mut [f64],
    _n: usize,
    k: usize,
    c: usize,
    w: Option<&[f64]>,
) {
    out.par_chunks_mut(c)
        .zip(q.par_chunks(c))
        .zip(xt.par_chunks(k))
        .for_each(|((out_row, q_row), xt_row)| cross_row(out_row, q_row, xt_row, y, k, c, w));
}

pub fn cross_update(
    q: &[f64],
    xt: &[f64],
    y: &[f64],
    out: &mut [f64],
    n: usize,
    k: usize,
    c: usize,
    w: Option<&[f64]>,
) {
    #[cfg(feature = "parallel")]
    if n * k * c >= PAR_FLOP_THRESHOLD && n > 1 {
        return cross_update_par(q, xt, y, out, n, k, c, w);
    }
    cross_update_seq(q, xt, y, out, n, k, c, w)
}

/// In-place left-looking Cholesky on the lower triangle of `m` (row-major
/// n×n, upper triangle already zeroed). Returns the index and value of the
/// first bad pivot on failure.
pub fn cholesky_in_place_seq(m: &mut [f64], n: usize) -> Result<(), (usize, f64)> {
    let mut col_scratch = vec![0.0f64; n];
    for j in 0..n {
        let (pivot, scratch) = cholesky_column_head(m, n, j, &mut col_scratch)?;
        for i in j + 1..n {
            cholesky_column_tail(&mut m[i * n..i * n + n], scratch, j, pivot);
        }
    }
    Ok(())
}

#[cfg(feature = "parallel")]
pub fn cholesky_in_place_par(m: &mut [f64], n: usize) -> Result<(), (usize, f64)> {
    let mut col_scratch = vec![0.0f64; n];
    for j in 0..n {
        let (pivot, scratch) = cholesky_column_head(m, n, j, &mut col_scratch)?;
        let tail = &mut m[(j + 1) * n..];
        if (n - j - 1) * j >= PAR_FLOP_THRESHOLD / 8 {
            tail.par_chunks_mut(n)
                .for_each(|row| cholesky_column_tail(row, scratch, j, pivot));
        } else {
            for row in tail.chunks_mut(n) {
                cholesky_column_tail(row, scratch, j, pivot);
            }
        }
    }
    Ok(())
}

/// Finalize the diagonal entry of column `j` and stage row `j`'s prefix in
/// `scratch` so the tail rows can read it while being mutated.
fn cholesky_column_head<'a>(
    m: &mut [f64],
    n: usize,
    j: usize,
    scratch: &'a mut [f64],
) -> Result<(f64, &'a [f64]), (usize, f64)> {
    let row_j = &m[j * n..j * n + n];
    let pivot = m[j * n + j] - dot(&row_j[..j], &row_j[..j]);
    if !(pivot > 0.0) || !pivot.is_finite() {
        return Err((j, pivot));
    }
    let pivot = pivot.sqrt();
    m[j * n + j] = pivot;
    scratch[..j].copy_from_slice(&m[j * n..j * n + j]);
    Ok((pivot, &scratch[..j]))
}

#[inline]
fn cholesky_column_tail(row_i: &mut [f64], row_j_prefix: &[f64], j: usize, pivot: f64) {
    let s = dot(&row_i[..j], row_j_prefix);
    row_i[j] = (row_i[j] - s) / pivot;
}

pub fn cholesky_in_place(m: &mut [f64], n: usize) -> Result<(), (usize, f64)> {
    #[cfg(feature = "parallel")]
    if n * n * n / 3 >= PAR_FLOP_THRESHOLD {
        return cholesky_in_place_par(m, n);
    }
    cholesky_in_place_seq(m, n)
}

/// Solve L·Lᵀ·x = b for one right-hand side laid out contiguously.
/// `l` is the factor, `lt` its transpose (both row-major n×n).
fn solve_one(l: &[f64], lt: &[f64], b: &mut [f64], n: usize) {
    // Forward: L y = b.
    for i in 0..n {
        let row = &l[i * n..i * n + n];
        let s = dot(&row[..i], &b[..i]);
        b[i] = (b[i] - s) / row[i];
    }
    // Backward: Lᵀ x = y; row i of Lᵀ is contiguous.
    for i in (0..n).rev() {
        let row = &lt[i * n..i * n + n];
        let s = dot(&row[i + 1..], &b[i + 1..]);
        b[i] = (b[i] - s) / row[i];
    }
}

/// Solve for all columns of `bt` (rhs transposed to c×n so each system is a
/// contiguous row; the caller transposes back).
pub fn solve_factored_seq(l: &[f64], lt: &[f64], bt: &mut [f64], n: usize) {
    for b in bt.chunks_mut(n) {
        solve_one(l, lt, b, n);
    }
}

#[cfg(feature = "parallel")]
pub fn solve_factored_par(l: &[f64], lt: &[f64], bt: &mut [f64], n: usize) {
    bt.par_chunks_mut(n).for_each(|b| solve_one(l, lt, b, n));
}

pub fn solve_factored(l: &[f64], lt: &[f64], bt: &mut [f64], n: usize) {
    let c = bt.len() / n.max(1);
    #[cfg(feature = "parallel")]
    if c > 1 && c * n * n >= PAR_FLOP_THRESHOLD {
        return solve_factored_par(l, lt, bt, n);
    }
    solve_factored_seq(l, lt, bt, n)
}

/// Rank-one Cholesky factor update: after the call, L·Lᵀ gains + x·xᵀ.
/// Classic Givens-style sweep; `x` is consumed as scratch. O(n²), always
/// succeeds for finite inputs since the update is positive semidefinite.
pub fn cholesky_rank_one_update(l: &mut [f64], x: &mut [f64], n: usize) {
    for k in 0..n {
        let xk = x[k];
        if xk == 0.0 {
            // Rotation is the identity; skipping keeps the column bit-exact.
            continue;
        }
        let lkk = l[k * n + k];
        let r = (lkk * lkk + xk * xk).sqrt();
        let c = r / lkk;
        let s = xk / lkk;
        l[k * n + k] = r;
        for i in k + 1..n {
            let lik = (l[i * n + k] + s * x[i]) / c;
            x[i] = c * x[i] - s * lik;
            l[i * n + k] = lik;
        }
    }
}

/// Transpose `a` (m×n) into `out` (n×m). Pure data movement.
pub fn transpose(a: &[f64], out: &mut [f64], m: usize, n: usize) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
}
