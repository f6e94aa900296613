//! Dense small-matrix kernels: determinants, column minors, subset
//! enumeration, and the Cauchy–Binet / weighted minor expansions.
//!
//! Everything here works on matrices of dimension at most [`MAX_DIM`];
//! subset enumeration is exponential in the worst case and the cap keeps
//! it tractable (C(20,10) ≈ 184k subsets). All arithmetic is `f64` and
//! tolerances are expressed relative to `max(1, |value|)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on matrix dimension and subset universe size.
pub const MAX_DIM: usize = 20;

/// A strictly increasing k-subset of `{1, …, n}` (1-based, as column labels).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSubset {
    indices: Vec<usize>,
    n: usize,
}

impl IndexSubset {
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        if indices.len() > n {
            return Err(Error::invalid(format!(
                "subset size {} exceeds universe {}",
                indices.len(),
                n
            )));
        }
        for w in indices.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::invalid("subset indices must be strictly increasing"));
            }
        }
        if let (Some(&first), Some(&last)) = (indices.first(), indices.last()) {
            if first < 1 || last > n {
                return Err(Error::invalid(format!(
                    "subset indices must lie in [1, {n}]"
                )));
            }
        }
        Ok(IndexSubset { indices, n })
    }

    /// 1-based labels, strictly increasing.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn universe(&self) -> usize {
        self.n
    }

    /// 0-based positions, for column selection.
    pub fn positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().map(|&i| i - 1)
    }
}

/// Streaming lexicographic enumeration of all k-subsets of `{1, …, n}`.
///
/// Subsets are produced on demand and never materialized as a list, so
/// full sweeps stay within O(k) memory even near the [`MAX_DIM`] cap.
pub struct SubsetIter {
    n: usize,
    k: usize,
    state: Option<Vec<usize>>,
}

impl Iterator for SubsetIter {
    type Item = IndexSubset;

    fn next(&mut self) -> Option<IndexSubset> {
        let current = self.state.as_ref()?.clone();
        // advance to the lexicographic successor
        let state = self.state.as_mut().unwrap();
        let (n, k) = (self.n, self.k);
        let mut i = k;
        loop {
            if i == 0 {
                self.state = None;
                break;
            }
            i -= 1;
            if state[i] < n - (k - 1 - i) {
                state[i] += 1;
                for j in i + 1..k {
                    state[j] = state[j - 1] + 1;
                }
                break;
            }
        }
        Some(IndexSubset {
            indices: current,
            n,
        })
    }
}

/// All k-subsets of `{1, …, n}` in lexicographic order.
pub fn enumerate_subsets(n: usize, k: usize) -> Result<SubsetIter> {
    if k > n {
        return Err(Error::invalid(format!("k = {k} exceeds n = {n}")));
    }
    if n > MAX_DIM {
        return Err(Error::invalid(format!(
            "n = {n} exceeds the enumeration cap {MAX_DIM}"
        )));
    }
    Ok(SubsetIter {
        n,
        k,
        state: Some((1..=k).collect()),
    })
}

/// Dense row-major matrix of `f64` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "entry count {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("matrix entries must be finite"));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::invalid("ragged rows"));
        }
        DenseMatrix::new(r, c, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::invalid(format!(
                "shape mismatch: {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self.get(i, l);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.set(i, j, out.get(i, j) + a * other.get(l, j));
                }
            }
        }
        Ok(out)
    }

    /// `A · Aᵀ` as a symmetric `rows×rows` Gram matrix.
    pub fn gram(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.rows);
        for i in 0..self.rows {
            for j in i..self.rows {
                let mut s = 0.0;
                for l in 0..self.cols {
                    s += self.get(i, l) * self.get(j, l);
                }
                out.set(i, j, s);
                out.set(j, i, s);
            }
        }
        out
    }

    /// `A · diag(w) · Aᵀ`.
    pub fn weighted_gram(&self, w: &[f64]) -> Result<DenseMatrix> {
        if w.len() != self.cols {
            return Err(Error::invalid("weight length must match column count"));
        }
        let mut out = DenseMatrix::zeros(self.rows, self.rows);
        for i in 0..self.rows {
            for j in i..self.rows {
                let mut s = 0.0;
                for l in 0..self.cols {
                    s += w[l] * self.get(i, l) * self.get(j, l);
                }
                out.set(i, j, s);
                out.set(j, i, s);
            }
        }
        Ok(out)
    }

    /// The square matrix formed by the columns at the subset's indices.
    pub fn select_columns(&self, s: &IndexSubset) -> Result<DenseMatrix> {
        if s.universe() != self.cols {
            return Err(Error::invalid(format!(
                "subset universe {} does not match column count {}",
                s.universe(),
                self.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, s.len());
        for (jj, j) in s.positions().enumerate() {
            for i in 0..self.rows {
                out.set(i, jj, self.get(i, j));
            }
        }
        Ok(out)
    }
}

/// Determinant by Gaussian elimination with partial pivoting.
///
/// The pivot sign is tracked exactly, so permutation matrices come out
/// as exactly ±1.
pub fn det(a: &DenseMatrix) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::invalid(format!(
            "determinant of non-square {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    if a.rows() > MAX_DIM {
        return Err(Error::invalid(format!(
            "dimension {} exceeds cap {MAX_DIM}",
            a.rows()
        )));
    }
    let n = a.rows();
    if n == 0 {
        return Ok(1.0);
    }
    let mut m = a.clone();
    let mut sign = 1.0;
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_abs = m.get(col, col).abs();
        for r in col + 1..n {
            let v = m.get(r, col).abs();
            if v > pivot_abs {
                pivot_abs = v;
                pivot_row = r;
            }
        }
        if pivot_abs == 0.0 {
            return Ok(0.0);
        }
        if pivot_row != col {
            for j in 0..n {
                let tmp = m.get(col, j);
                m.set(col, j, m.get(pivot_row, j));
                m.set(pivot_row, j, tmp);
            }
            sign = -sign;
        }
        let pivot = m.get(col, col);
        for r in col + 1..n {
            let factor = m.get(r, col) / pivot;
            if factor == 0.0 {
                continue;
            }
            m.set(r, col, 0.0);
            for j in col + 1..n {
                m.set(r, j, m.get(r, j) - factor * m.get(col, j));
            }
        }
    }
    let mut d = sign;
    for i in 0..n {
        d *= m.get(i, i);
    }
    Ok(d)
}

/// `det(A_S)`: the minor of a k×n matrix on the columns selected by `S`.
pub fn minor(a: &DenseMatrix, s: &IndexSubset) -> Result<f64> {
    if s.len() != a.rows() {
        return Err(Error::invalid(format!(
            "subset size {} must equal row count {}",
            s.len(),
            a.rows()
        )));
    }
    det(&a.select_columns(s)?)
}

/// Both sides of the Cauchy–Binet identity for a k×n matrix:
/// `det(A·Aᵀ)` on the left, `Σ_{|S|=k} det(A_S)²` on the right.
///
/// The two sides are computed along independent paths (elimination on the
/// Gram matrix versus streamed minor enumeration); they agree up to
/// roundoff.
pub fn cauchy_binet_check(a: &DenseMatrix) -> Result<(f64, f64)> {
    if a.rows() > a.cols() {
        return Err(Error::invalid(format!(
            "need k <= n, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let lhs = det(&a.gram())?;
    let mut rhs = 0.0;
    for s in enumerate_subsets(a.cols(), a.rows())? {
        let m = minor(a, &s)?;
        rhs += m * m;
    }
    Ok((lhs, rhs))
}

/// Weighted minor expansion `Σ_S (Π_{l∈S} w_l) · det(B_S)²`.
///
/// This is the subset-weighted form of the Cauchy–Binet expansion: it
/// equals `det(B·diag(w)·Bᵀ)` for positive weights. Note that for k < n
/// the weight product attached to each term runs over the subset `S`
/// only; pulling the full product `w_1⋯w_n` out of the sum is not an
/// identity (a single-row `B = [1 1 0]` already separates the two).
pub fn weighted_minor_expansion(b: &DenseMatrix, w: &[f64]) -> Result<f64> {
    if b.rows() > b.cols() {
        return Err(Error::invalid(format!(
            "need k <= n, got {}x{}",
            b.rows(),
            b.cols()
        )));
    }
    if w.len() != b.cols() {
        return Err(Error::invalid("weight length must match column count"));
    }
    if w.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::invalid("weights must be positive"));
    }
    let mut sum = 0.0;
    for s in enumerate_subsets(b.cols(), b.rows())? {
        let m = minor(b, &s)?;
        if m == 0.0 {
            continue;
        }
        let wprod: f64 = s.positions().map(|l| w[l]).product();
        sum += wprod * m * m;
    }
    Ok(sum)
}

/// Cholesky factor `L` (lower triangular) of a symmetric positive
/// definite matrix, or a degeneracy error if a pivot fails.
pub fn cholesky(a: &DenseMatrix) -> Result<DenseMatrix> {
    if !a.is_square() {
        return Err(Error::invalid("cholesky of non-square matrix"));
    }
    let n = a.rows();
    let mut l = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::Degeneracy(format!(
                        "cholesky pivot {s:e} at index {i}; matrix not positive definite"
                    )));
                }
                l.set(i, j, s.sqrt());
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Forward-substitution solve `L x = b` for lower-triangular `L`.
pub fn solve_lower(l: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = l.rows();
    if b.len() != n {
        return Err(Error::invalid("rhs length mismatch"));
    }
    let mut x = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for j in 0..i {
            s -= l.get(i, j) * x[j];
        }
        let d = l.get(i, i);
        if d == 0.0 {
            return Err(Error::Degeneracy("zero diagonal in triangular solve".into()));
        }
        x[i] = s / d;
    }
    Ok(x)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations,
/// ascending. Intended for the small PSD checks in tests and validation.
pub fn sym_eigenvalues(a: &DenseMatrix) -> Result<Vec<f64>> {
    if !a.is_square() {
        return Err(Error::invalid("eigenvalues of non-square matrix"));
    }
    let n = a.rows();
    let mut m = a.clone();
    // symmetrize to guard against roundoff asymmetry in the input
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m.get(i, j) + m.get(j, i));
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    for _ in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m.get(i, j).abs();
            }
        }
        if off < 1e-300 || off < 1e-15 * (0..n).map(|i| m.get(i, i).abs()).sum::<f64>().max(1.0) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m.get(i, i)).collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(eig)
}
