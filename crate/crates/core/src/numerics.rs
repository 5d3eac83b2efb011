//! Complex vector and matrix kernels.
//!
//! Matrices are stored column-major, so `vec` is a reinterpretation of the
//! storage rather than a copy. Only the handful of operations the diagnosis
//! algorithms need are provided: vectorization, elementwise products, the
//! Kronecker measurement row, and least-squares solving.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};

pub type C64 = Complex64;
pub type CVec = Vec<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Dense complex matrix in column-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMat")]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

#[derive(Deserialize)]
struct RawMat {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl TryFrom<RawMat> for CMat {
    type Error = Error;

    fn try_from(raw: RawMat) -> Result<Self> {
        CMat::from_col_major(raw.rows, raw.cols, raw.data)
    }
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        CMat { rows, cols, data }
    }

    /// Builds a matrix from column-major entries, rejecting shape mismatches
    /// and non-finite values.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return dim_err(format!("matrix must be non-empty, got {rows}x{cols}"));
        }
        if data.len() != rows * cols {
            return dim_err(format!(
                "{} entries cannot fill a {rows}x{cols} matrix",
                data.len()
            ));
        }
        if let Some(pos) = data.iter().position(|z| !z.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "matrix entry {pos} is not finite"
            )));
        }
        Ok(CMat { rows, cols, data })
    }

    /// Builds a matrix whose k-th row is `rows[k]`.
    pub fn from_rows(rows: &[CVec]) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return dim_err("rows have unequal lengths");
        }
        let m = CMat::from_fn(rows.len(), n, |i, j| rows[i][j]);
        if m.data.is_empty() {
            return dim_err("matrix must be non-empty");
        }
        Ok(m)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[j * self.rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[j * self.rows + i] = v;
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[C64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn row(&self, i: usize) -> CVec {
        (0..self.cols).map(|j| self.get(i, j)).collect()
    }

    /// Column-major view of the entries, i.e. `vec(self)` without a copy.
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn into_vec(self) -> CVec {
        self.data
    }

    pub fn mul_vec(&self, x: &[C64]) -> Result<CVec> {
        if x.len() != self.cols {
            return dim_err(format!(
                "cannot multiply {}x{} matrix by vector of length {}",
                self.rows,
                self.cols,
                x.len()
            ));
        }
        let mut out = vec![ZERO; self.rows];
        for (j, &xj) in x.iter().enumerate() {
            if xj == ZERO {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.col(j)) {
                *o += a * xj;
            }
        }
        Ok(out)
    }

    pub fn mul(&self, other: &CMat) -> Result<CMat> {
        if self.cols != other.rows {
            return dim_err(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            ));
        }
        let mut out = CMat::zeros(self.rows, other.cols);
        for j in 0..other.cols {
            let col = self.mul_vec(other.col(j))?;
            out.data[j * self.rows..(j + 1) * self.rows].copy_from_slice(&col);
        }
        Ok(out)
    }

    pub fn adjoint(&self) -> CMat {
        CMat::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    /// Submatrix made of the listed columns, in the listed order.
    pub fn select_columns(&self, idx: &[usize]) -> CMat {
        let mut data = Vec::with_capacity(self.rows * idx.len());
        for &j in idx {
            data.extend_from_slice(self.col(j));
        }
        CMat {
            rows: self.rows,
            cols: idx.len(),
            data,
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> CMat {
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }
}

/// Column-major stacking of the matrix entries.
pub fn vec(m: &CMat) -> CVec {
    m.data.clone()
}

/// Inverse of [`vec`].
pub fn ivec(v: &[C64], rows: usize, cols: usize) -> Result<CMat> {
    if v.len() != rows * cols {
        return dim_err(format!(
            "vector of length {} cannot be reshaped to {rows}x{cols}",
            v.len()
        ));
    }
    CMat::from_col_major(rows, cols, v.to_vec())
}

pub fn hadamard(a: &[C64], b: &[C64]) -> Result<CVec> {
    if a.len() != b.len() {
        return dim_err(format!("hadamard of lengths {} and {}", a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).collect())
}

/// Measurement row `f^T ⊗ w^H`.
///
/// For an `N_r x N_t` matrix `Q`, `dot(kron_row(f, w), vec(Q)) == w^H Q f`.
pub fn kron_row(f: &[C64], w: &[C64]) -> CVec {
    let mut u = Vec::with_capacity(f.len() * w.len());
    for &fn_ in f {
        for &wm in w {
            u.push(fn_ * wm.conj());
        }
    }
    u
}

/// Bilinear dot product without conjugation.
pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Inner product `a^H b`.
pub fn dotc(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm2(v: &[C64]) -> f64 {
    norm_sqr(v).sqrt()
}

pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub fn sub(a: &[C64], b: &[C64]) -> CVec {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// How a least-squares solution was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LsPath {
    /// Cholesky factorization of the normal equations.
    Normal,
    /// Householder QR with column pivoting.
    Qr,
    /// Ridge-regularized normal equations (rank deficient or underdetermined).
    Ridge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsSolution {
    pub x: CVec,
    pub path: LsPath,
}

const RANK_TOL: f64 = 1e-10;
const RIDGE_SCALE: f64 = 1e-10;

/// Least-squares solution of `A x ≈ y`.
///
/// Full column rank systems with `N <= K` go through pivoted QR. Rank
/// deficient or underdetermined systems fall back to ridge-regularized normal
/// equations with `λ = 1e-10 · tr(A^H A) / N`, which approximates the
/// minimum-norm solution.
pub fn ls_solve(a: &CMat, y: &[C64]) -> LsSolution {
    assert_eq!(a.rows(), y.len(), "ls_solve: row count must match y");
    let (k, n) = (a.rows(), a.cols());
    if n <= k {
        if let Some(x) = qr_pivoted_solve(a, y) {
            return LsSolution {
                x,
                path: LsPath::Qr,
            };
        }
    }
    LsSolution {
        x: ridge_solve(a, y),
        path: LsPath::Ridge,
    }
}

/// Returns `None` when the numerical rank is below the column count.
fn qr_pivoted_solve(a: &CMat, y: &[C64]) -> Option<CVec> {
    let (m, n) = (a.rows(), a.cols());
    let mut r = a.data.clone();
    let mut rhs = y.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut diag = vec![ZERO; n];
    let mut first_diag = 0.0;

    for k in 0..n {
        // pivot: largest remaining column norm
        let mut best = k;
        let mut best_norm = -1.0;
        for j in k..n {
            let nrm = norm_sqr(&r[j * m + k..(j + 1) * m]);
            if nrm > best_norm {
                best_norm = nrm;
                best = j;
            }
        }
        if best != k {
            for i in 0..m {
                r.swap(k * m + i, best * m + i);
            }
            perm.swap(k, best);
        }

        let col_norm = best_norm.sqrt();
        if k == 0 {
            first_diag = col_norm;
        }
        if col_norm <= RANK_TOL * first_diag || col_norm == 0.0 {
            return None;
        }

        let x0 = r[k * m + k];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { ONE };
        let alpha = -phase * col_norm;
        // v = x - alpha e1, stored in place of the column
        let mut v: CVec = r[k * m + k..(k + 1) * m].to_vec();
        v[0] -= alpha;
        let vnorm_sqr = norm_sqr(&v);
        if vnorm_sqr > 0.0 {
            let scale = 2.0 / vnorm_sqr;
            for j in k..n {
                let colj = &mut r[j * m + k..(j + 1) * m];
                let s = dotc(&v, colj) * scale;
                for (c, vi) in colj.iter_mut().zip(&v) {
                    *c -= vi * s;
                }
            }
            let s = dotc(&v, &rhs[k..]) * scale;
            for (c, vi) in rhs[k..].iter_mut().zip(&v) {
                *c -= vi * s;
            }
        }
        diag[k] = r[k * m + k];
    }

    let mut z = vec![ZERO; n];
    for k in (0..n).rev() {
        let mut acc = rhs[k];
        for j in k + 1..n {
            acc -= r[j * m + k] * z[j];
        }
        z[k] = acc / diag[k];
    }
    let mut x = vec![ZERO; n];
    for (pos, &orig) in perm.iter().enumerate() {
        x[orig] = z[pos];
    }
    Some(x)
}

fn ridge_solve(a: &CMat, y: &[C64]) -> CVec {
    let (k, n) = (a.rows(), a.cols());
    let trace = norm_sqr(a.as_slice());
    if trace == 0.0 {
        return vec![ZERO; n];
    }
    let lambda = RIDGE_SCALE * trace / n as f64;
    if n > k {
        // x = A^H (A A^H + λI)^{-1} y, same solution as the N×N ridge system
        let mut m = CMat::zeros(k, k);
        for i in 0..k {
            for j in 0..=i {
                let s: C64 = (0..n).map(|c| a.get(i, c) * a.get(j, c).conj()).sum();
                m.set(i, j, s);
                m.set(j, i, s.conj());
            }
            m.set(i, i, m.get(i, i) + lambda);
        }
        let z = cholesky(&m, 0.0)
            .map(|l| cholesky_solve(&l, y))
            .unwrap_or_else(|| vec![ZERO; k]);
        (0..n).map(|c| dotc(a.col(c), &z)).collect()
    } else {
        let mut g = gram(a);
        for i in 0..n {
            g.set(i, i, g.get(i, i) + lambda);
        }
        let rhs: CVec = (0..n).map(|c| dotc(a.col(c), y)).collect();
        cholesky(&g, 0.0)
            .map(|l| cholesky_solve(&l, &rhs))
            .unwrap_or_else(|| vec![ZERO; n])
    }
}

/// `A^H A`.
pub fn gram(a: &CMat) -> CMat {
    let n = a.cols();
    let mut g = CMat::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let s = dotc(a.col(i), a.col(j));
            g.set(i, j, s);
            g.set(j, i, s.conj());
        }
    }
    g
}

/// Lower Cholesky factor of a Hermitian matrix. Fails when a pivot drops to
/// `rel_tol` times the largest diagonal entry or below.
fn cholesky(m: &CMat, rel_tol: f64) -> Option<CMat> {
    let n = m.rows();
    let max_diag = (0..n).map(|i| m.get(i, i).re).fold(0.0, f64::max);
    let floor = rel_tol * max_diag;
    let mut l = CMat::zeros(n, n);
    for j in 0..n {
        let mut d = m.get(j, j).re;
        for p in 0..j {
            d -= l.get(j, p).norm_sqr();
        }
        if !(d > floor) || d <= 0.0 {
            return None;
        }
        let d = d.sqrt();
        l.set(j, j, C64::new(d, 0.0));
        for i in j + 1..n {
            let mut s = m.get(i, j);
            for p in 0..j {
                s -= l.get(i, p) * l.get(j, p).conj();
            }
            l.set(i, j, s / d);
        }
    }
    Some(l)
}

fn cholesky_solve(l: &CMat, b: &[C64]) -> CVec {
    let n = l.rows();
    let mut z = b.to_vec();
    for i in 0..n {
        let mut s = z[i];
        for p in 0..i {
            s -= l.get(i, p) * z[p];
        }
        z[i] = s / l.get(i, i);
    }
    for i in (0..n).rev() {
        let mut s = z[i];
        for p in i + 1..n {
            s -= l.get(p, i).conj() * z[p];
        }
        z[i] = s / l.get(i, i);
    }
    z
}

/// Repeated least-squares fits of `y` against column subsets of one matrix.
///
/// `A^H A` and `A^H y` are formed once; each subset fit then only factors the
/// gathered `|S| x |S|` block. Subsets that are underdetermined or whose
/// normal matrix is too ill-conditioned for Cholesky go through [`ls_solve`].
#[derive(Debug, Clone)]
pub struct SubsetSolver<'a> {
    a: &'a CMat,
    y: &'a [C64],
    gram: CMat,
    rhs: CVec,
}

const SUBSET_PIVOT_TOL: f64 = 1e-8;

impl<'a> SubsetSolver<'a> {
    pub fn new(a: &'a CMat, y: &'a [C64]) -> Self {
        assert_eq!(a.rows(), y.len(), "SubsetSolver: row count must match y");
        let gram = gram(a);
        let rhs = (0..a.cols()).map(|c| dotc(a.col(c), y)).collect();
        SubsetSolver { a, y, gram, rhs }
    }

    /// Least-squares coefficients for the columns in `support`, in order.
    pub fn solve(&self, support: &[usize]) -> LsSolution {
        let s = support.len();
        if s == 0 {
            return LsSolution {
                x: Vec::new(),
                path: LsPath::Normal,
            };
        }
        if s <= self.a.rows() {
            let g = CMat::from_fn(s, s, |i, j| self.gram.get(support[i], support[j]));
            if let Some(l) = cholesky(&g, SUBSET_PIVOT_TOL) {
                let rhs: CVec = support.iter().map(|&c| self.rhs[c]).collect();
                return LsSolution {
                    x: cholesky_solve(&l, &rhs),
                    path: LsPath::Normal,
                };
            }
        }
        ls_solve(&self.a.select_columns(support), self.y)
    }

    /// `y - A_S x`.
    pub fn residual(&self, support: &[usize], x: &[C64]) -> CVec {
        let mut r = self.y.to_vec();
        for (&c, &xc) in support.iter().zip(x) {
            for (ri, &a) in r.iter_mut().zip(self.a.col(c)) {
                *ri -= a * xc;
            }
        }
        r
    }
}
