//! Small dense linear-algebra helpers on top of `nalgebra`.
//!
//! Every decomposition returned from here follows one convention: values are
//! sorted in descending order (stable, so ties keep their original index
//! order) and each left vector is flipped so that its largest-magnitude entry
//! is positive. Right vectors are flipped along with their left partner.

use nalgebra::{DMatrix, DVector};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Thin singular value decomposition `m = u * diag(s) * v^T`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl Svd {
    pub fn rank(&self, tol: f64) -> usize {
        rank_of(&self.s, tol)
    }

    /// Keeps only the leading `k` triples.
    pub fn truncate(&self, k: usize) -> Svd {
        let k = k.min(self.s.len());
        Svd { u: self.u.columns(0, k).into_owned(), s: self.s[..k].to_vec(), v: self.v.columns(0, k).into_owned() }
    }

    pub fn reconstruct(&self) -> Matrix {
        let s = Matrix::from_diagonal(&Vector::from_column_slice(&self.s));
        &self.u * s * self.v.transpose()
    }
}

/// Symmetric eigendecomposition `m = vectors * diag(values) * vectors^T`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

fn sorted_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    // sort_by is stable: equal values keep ascending index order
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap_or(std::cmp::Ordering::Equal));
    order
}

fn largest_entry_sign(col: &[f64]) -> f64 {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in col {
        // strict comparison keeps the first of several equal-magnitude entries
        if x.abs() > best + 1e-12 {
            best = x.abs();
            sign = if x < 0.0 { -1.0 } else { 1.0 };
        }
    }
    sign
}

pub fn svd(m: &Matrix) -> Svd {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Svd { u: Matrix::zeros(rows, 0), s: vec![], v: Matrix::zeros(cols, 0) };
    }
    let dec = m.clone().svd(true, true);
    let u_raw = dec.u.expect("svd requested u");
    let vt_raw = dec.v_t.expect("svd requested v_t");
    let s_raw: Vec<f64> = dec.singular_values.iter().copied().collect();
    let order = sorted_order(&s_raw);

    let mut u = Matrix::zeros(rows, k);
    let mut v = Matrix::zeros(cols, k);
    let mut s = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let ucol: Vec<f64> = u_raw.column(src).iter().copied().collect();
        let sign = largest_entry_sign(&ucol);
        for r in 0..rows {
            u[(r, dst)] = sign * u_raw[(r, src)];
        }
        for c in 0..cols {
            v[(c, dst)] = sign * vt_raw[(src, c)];
        }
        s.push(s_raw[src].max(0.0));
    }
    Svd { u, s, v }
}

pub fn singular_values(m: &Matrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return vec![];
    }
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    s
}

pub fn sym_eigen(m: &Matrix) -> SymEigen {
    assert_eq!(m.nrows(), m.ncols(), "sym_eigen needs a square matrix");
    let n = m.nrows();
    if n == 0 {
        return SymEigen { values: vec![], vectors: Matrix::zeros(0, 0) };
    }
    // symmetrize to kill rounding asymmetry before decomposing
    let sym = (m + m.transpose()) * 0.5;
    let dec = sym.symmetric_eigen();
    let raw: Vec<f64> = dec.eigenvalues.iter().copied().collect();
    let order = sorted_order(&raw);
    let mut vectors = Matrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let col: Vec<f64> = dec.eigenvectors.column(src).iter().copied().collect();
        let sign = largest_entry_sign(&col);
        for r in 0..n {
            vectors[(r, dst)] = sign * dec.eigenvectors[(r, src)];
        }
        values.push(raw[src]);
    }
    SymEigen { values, vectors }
}

/// Number of values above `tol` times the largest value.
pub fn rank_of(values: &[f64], tol: f64) -> usize {
    let top = values.iter().cloned().fold(0.0f64, f64::max);
    if top <= 0.0 {
        return 0;
    }
    values.iter().filter(|&&x| x > tol * top).count()
}

pub fn matrix_rank(m: &Matrix) -> usize {
    rank_of(&singular_values(m), 1e-10)
}

/// Frobenius norm of the off-diagonal part of a (possibly rectangular) matrix.
pub fn offdiag_frobenius(m: &Matrix) -> f64 {
    let mut acc = 0.0;
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if r != c {
                acc += m[(r, c)] * m[(r, c)];
            }
        }
    }
    acc.sqrt()
}

pub fn diagonal(m: &Matrix) -> Vec<f64> {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).collect()
}

/// Selects a subset of rows, in the given order.
pub fn select_rows(m: &Matrix, rows: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), m.ncols(), |r, c| m[(rows[r], c)])
}

pub fn select_cols(m: &Matrix, cols: &[usize]) -> Matrix {
    Matrix::from_fn(m.nrows(), cols.len(), |r, c| m[(r, cols[c])])
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Multiplies each column `i` of `m` by `mask[i]` in place.
pub fn scale_columns(m: &mut Matrix, mask: &[f64]) {
    assert_eq!(m.ncols(), mask.len());
    for (c, &g) in mask.iter().enumerate() {
        if g != 1.0 {
            m.column_mut(c).scale_mut(g);
        }
    }
}

pub fn from_rows(rows: &[Vec<f64>]) -> Matrix {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    Matrix::from_fn(r, c, |i, j| rows[i][j])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svd_reconstructs_and_is_sorted() {
        let m = from_rows(&[vec![3.0, 1.0, 0.0], vec![1.0, 2.0, 4.0]]);
        let d = svd(&m);
        assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
        assert!(max_abs_diff(&d.reconstruct(), &m) < 1e-12);
    }

    #[test]
    fn svd_sign_convention_largest_entry_positive() {
        let m = from_rows(&[vec![-5.0, 0.0], vec![0.0, -1.0]]);
        let d = svd(&m);
        for k in 0..d.s.len() {
            let col: Vec<f64> = d.u.column(k).iter().copied().collect();
            let big = col.iter().cloned().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
            assert!(big > 0.0);
        }
        assert!(max_abs_diff(&d.reconstruct(), &m) < 1e-12);
    }

    #[test]
    fn degenerate_values_keep_index_order() {
        let m = Matrix::identity(3, 3) * 2.0;
        let e = sym_eigen(&m);
        assert_eq!(e.values, vec![2.0, 2.0, 2.0]);
        let d = svd(&m);
        assert!(max_abs_diff(&d.reconstruct(), &m) < 1e-12);
    }

    #[test]
    fn rank_and_offdiag() {
        let m = from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert_eq!(matrix_rank(&m), 1);
        assert!((offdiag_frobenius(&m) - (8.0f64).sqrt()).abs() < 1e-12);
    }
}
