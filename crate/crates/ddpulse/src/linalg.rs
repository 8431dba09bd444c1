//! Dense kernels the MMSE detector and the matrix model lean on. Working
//! copies are row-major with split real/imaginary planes so the inner loops
//! are contiguous real dot products.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::{CMatrix, Result, C64};

/// Row-major split copy of a complex matrix.
pub(crate) struct SplitRows {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl SplitRows {
    pub fn of(a: &CMatrix) -> Self {
        let (rows, cols) = a.shape();
        let mut re = vec![0.0; rows * cols];
        let mut im = vec![0.0; rows * cols];
        for c in 0..cols {
            for (r, v) in a.column(c).iter().enumerate() {
                re[r * cols + c] = v.re;
                im[r * cols + c] = v.im;
            }
        }
        SplitRows { rows, cols, re, im }
    }

    fn row(&self, r: usize) -> (&[f64], &[f64]) {
        let s = r * self.cols..(r + 1) * self.cols;
        (&self.re[s.clone()], &self.im[s])
    }
}

/// `Σ_k x_k·conj(y_k)` over split slices. Four independent lanes per
/// accumulator let the compiler vectorize the loop.
#[inline]
fn dot_conj(xr: &[f64], xi: &[f64], yr: &[f64], yi: &[f64]) -> C64 {
    let n = xr.len();
    let (xr, xi, yr, yi) = (&xr[..n], &xi[..n], &yr[..n], &yi[..n]);
    let mut acc = [[0.0f64; 4]; 4];
    let body = n - n % 4;
    for k in (0..body).step_by(4) {
        for t in 0..4 {
            acc[0][t] += xr[k + t] * yr[k + t];
            acc[1][t] += xi[k + t] * yi[k + t];
            acc[2][t] += xi[k + t] * yr[k + t];
            acc[3][t] += xr[k + t] * yi[k + t];
        }
    }
    for k in body..n {
        acc[0][0] += xr[k] * yr[k];
        acc[1][0] += xi[k] * yi[k];
        acc[2][0] += xi[k] * yr[k];
        acc[3][0] += xr[k] * yi[k];
    }
    let sum = |a: [f64; 4]| (a[0] + a[1]) + (a[2] + a[3]);
    C64::new(sum(acc[0]) + sum(acc[1]), sum(acc[2]) - sum(acc[3]))
}

/// Dot products `x_a·y_bᴴ` of two `x` rows against two `y` rows in one
/// pass (each load feeds four products).
#[inline]
fn dot_conj_2x2(x: [(&[f64], &[f64]); 2], y: [(&[f64], &[f64]); 2]) -> [[C64; 2]; 2] {
    const L: usize = 2;
    let n = x[0].0.len();
    let (x0r, x0i, x1r, x1i) = (&x[0].0[..n], &x[0].1[..n], &x[1].0[..n], &x[1].1[..n]);
    let (y0r, y0i, y1r, y1i) = (&y[0].0[..n], &y[0].1[..n], &y[1].0[..n], &y[1].1[..n]);
    let mut re = [[[0.0f64; L]; 2]; 2];
    let mut im = [[[0.0f64; L]; 2]; 2];
    let body = n - n % L;
    for k in (0..body).step_by(L) {
        for t in 0..L {
            let (a0r, a0i, a1r, a1i) = (x0r[k + t], x0i[k + t], x1r[k + t], x1i[k + t]);
            let (b0r, b0i, b1r, b1i) = (y0r[k + t], y0i[k + t], y1r[k + t], y1i[k + t]);
            re[0][0][t] += a0r * b0r + a0i * b0i;
            im[0][0][t] += a0i * b0r - a0r * b0i;
            re[0][1][t] += a0r * b1r + a0i * b1i;
            im[0][1][t] += a0i * b1r - a0r * b1i;
            re[1][0][t] += a1r * b0r + a1i * b0i;
            im[1][0][t] += a1i * b0r - a1r * b0i;
            re[1][1][t] += a1r * b1r + a1i * b1i;
            im[1][1][t] += a1i * b1r - a1r * b1i;
        }
    }
    let mut out = [[C64::new(0.0, 0.0); 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            let mut v = C64::new(re[a][b].iter().sum(), im[a][b].iter().sum());
            for k in body..n {
                v += C64::new(x[a].0[k], x[a].1[k]) * C64::new(y[b].0[k], -y[b].1[k]);
            }
            out[a][b] = v;
        }
    }
    out
}

/// `A·Aᴴ`, computed on the lower triangle and mirrored. Blocked over rows
/// (2×2 register tiles inside 32-row tiles) and over columns so the
/// working set stays in cache.
pub(crate) fn gram(a: &CMatrix) -> CMatrix {
    const TILE: usize = 32;
    const KC: usize = 256;
    let s = SplitRows::of(a);
    let (n, cols) = (s.rows, s.cols);
    // Lower triangle accumulated row-major.
    let mut acc = vec![C64::new(0.0, 0.0); n * n];
    for k0 in (0..cols).step_by(KC) {
        let k1 = (k0 + KC).min(cols);
        let row = |i: usize| {
            let (r, im) = s.row(i);
            (&r[k0..k1], &im[k0..k1])
        };
        for i0 in (0..n).step_by(TILE) {
            let i_end = (i0 + TILE).min(n);
            for j0 in (0..=i0).step_by(TILE) {
                let mut i = i0;
                while i < i_end {
                    let pair = i + 1 < i_end;
                    let j_end = (j0 + TILE).min(i + 1 + pair as usize);
                    let mut j = j0;
                    while j < j_end {
                        if pair && j + 1 < j_end {
                            let v = dot_conj_2x2([row(i), row(i + 1)], [row(j), row(j + 1)]);
                            for (da, r) in v.iter().enumerate() {
                                for (db, &x) in r.iter().enumerate() {
                                    acc[(i + da) * n + j + db] += x;
                                }
                            }
                            j += 2;
                        } else {
                            for da in 0..1 + pair as usize {
                                let (xr, xi) = row(i + da);
                                let (yr, yi) = row(j);
                                acc[(i + da) * n + j] += dot_conj(xr, xi, yr, yi);
                            }
                            j += 1;
                        }
                    }
                    i += 1 + pair as usize;
                }
            }
        }
    }
    CMatrix::from_fn(n, n, |i, j| if j <= i { acc[i * n + j] } else { acc[j * n + i].conj() })
}

/// `A·B`, skipping zero entries of `A`. The structured matrices of the
/// effective-channel model are mostly zeros, so this is the product that
/// keeps their literal assembly affordable.
pub(crate) fn matmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.ncols(), b.nrows(), "matmul: inner dimensions differ");
    let (m, p) = (a.nrows(), b.ncols());
    let zero = C64::new(0.0, 0.0);
    // Row-major output accumulates rows of B scaled by A's nonzeros.
    let bt = SplitRows::of(b);
    let mut re = vec![0.0; m * p];
    let mut im = vec![0.0; m * p];
    for k in 0..a.ncols() {
        let (br, bi) = bt.row(k);
        for (i, &v) in a.column(k).iter().enumerate() {
            if v == zero {
                continue;
            }
            let (or, oi) = (&mut re[i * p..(i + 1) * p], &mut im[i * p..(i + 1) * p]);
            for j in 0..p {
                or[j] += v.re * br[j] - v.im * bi[j];
                oi[j] += v.re * bi[j] + v.im * br[j];
            }
        }
    }
    CMatrix::from_fn(m, p, |i, j| C64::new(re[i * p + j], im[i * p + j]))
}

/// `A·x`.
#[cfg(test)]
pub(crate) fn matvec(a: &CMatrix, x: &[C64]) -> Vec<C64> {
    assert_eq!(a.ncols(), x.len(), "matvec: dimension mismatch");
    let mut y = vec![C64::new(0.0, 0.0); a.nrows()];
    for (k, &xv) in x.iter().enumerate() {
        if xv == C64::new(0.0, 0.0) {
            continue;
        }
        for (yv, av) in y.iter_mut().zip(a.column(k).iter()) {
            *yv += av * xv;
        }
    }
    y
}

/// `Aᴴ·x`.
pub(crate) fn matvec_adjoint(a: &CMatrix, x: &[C64]) -> Vec<C64> {
    assert_eq!(a.nrows(), x.len(), "matvec_adjoint: dimension mismatch");
    (0..a.ncols()).map(|k| a.column(k).iter().zip(x).map(|(av, xv)| av.conj() * xv).sum()).collect()
}

/// Lower Cholesky factor `G = L·Lᴴ` of a Hermitian positive definite
/// matrix, row-major split.
pub(crate) struct Cholesky {
    l: SplitRows,
}

impl Cholesky {
    /// Fails when a pivot drops below `rel_tol` times the largest diagonal
    /// entry of `G`.
    pub fn new(g: &CMatrix, rel_tol: f64) -> Result<Self> {
        let n = g.nrows();
        if g.ncols() != n {
            return Err(Error::Dimension(format!("Cholesky of a {}×{} matrix", n, g.ncols())));
        }
        let mut l = SplitRows::of(g);
        let scale = (0..n).map(|i| g[(i, i)].re).fold(0.0, f64::max);
        let floor = rel_tol * scale;
        for i in 0..n {
            for j in 0..=i {
                let (lr, li) = (&l.re, &l.im);
                let s = C64::new(lr[i * n + j], li[i * n + j])
                    - dot_conj(&lr[i * n..i * n + j], &li[i * n..i * n + j], &lr[j * n..j * n + j], &li[j * n..j * n + j]);
                if i == j {
                    if !(s.re > floor) {
                        return Err(Error::Singular(format!(
                            "pivot {:.3e} at row {i} of {n} (largest diagonal {:.3e}, tolerance {:.1e})",
                            s.re, scale, rel_tol
                        )));
                    }
                    l.re[i * n + i] = libm::sqrt(s.re);
                    l.im[i * n + i] = 0.0;
                } else {
                    let d = l.re[j * n + j];
                    l.re[i * n + j] = s.re / d;
                    l.im[i * n + j] = s.im / d;
                }
            }
            for j in i + 1..n {
                l.re[i * n + j] = 0.0;
                l.im[i * n + j] = 0.0;
            }
        }
        Ok(Cholesky { l })
    }

    /// Solves `L·y = b`.
    pub fn solve_lower(&self, b: &[C64]) -> Vec<C64> {
        let n = self.l.rows;
        assert_eq!(b.len(), n, "Cholesky::solve_lower: dimension mismatch");
        let (lr, li) = (&self.l.re, &self.l.im);
        let mut y: Vec<C64> = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= C64::new(lr[i * n + k], li[i * n + k]) * y[k];
            }
            y[i] = s / lr[i * n + i];
        }
        y
    }

    /// Solves `G·x = b`.
    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let n = self.l.rows;
        let (lr, li) = (&self.l.re, &self.l.im);
        let mut y = self.solve_lower(b);
        // Lᴴ·x = y, column-oriented so rows of L are read contiguously.
        for i in (0..n).rev() {
            let xi = y[i] / lr[i * n + i];
            y[i] = xi;
            for k in 0..i {
                y[k] -= C64::new(lr[i * n + k], -li[i * n + k]) * xi;
            }
        }
        y
    }
}
