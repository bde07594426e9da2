//! Dense matrix and vector kernels.
//!
//! `Matrix` stores entries row-major, but [`vectorize`] stacks columns, so
//! that `vec(ABC) = (Cᵀ ⊗ A) vec(B)` holds without any transposition.

use std::fmt;
use std::ops::{Index, IndexMut};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch in {op}: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    DimensionMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("factor {index} in right-to-left product has {found} columns, expected {expected}")]
    ProductMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("matrix needs {expected} entries, got {found}")]
    BadLength { expected: usize, found: usize },
    #[error("matrix must have at least one row and one column")]
    Empty,
}

/// Dense real matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::Empty);
        }
        if data.len() != rows * cols {
            return Err(LinalgError::BadLength {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.as_ref().len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.as_ref().len(), c, "ragged rows");
            data.extend_from_slice(row.as_ref());
        }
        Self { rows: r, cols: c, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Square diagonal matrix.
    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Column vector (n×1).
    pub fn column(v: &[f64]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    /// Row vector (1×n).
    pub fn row(v: &[f64]) -> Self {
        Self {
            rows: 1,
            cols: v.len(),
            data: v.to_vec(),
        }
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

    /// Row-major view of the entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row_slice(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column_vec(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, LinalgError> {
        self.check_same(other, "add")?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, LinalgError> {
        self.check_same(other, "sub")?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.cols != other.rows {
            return Err(self.mismatch(other, "matmul"));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self[(i, l)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row_slice(l);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if self.cols != v.len() {
            return Err(LinalgError::DimensionMismatch {
                op: "matvec",
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: v.len(),
                right_cols: 1,
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row_slice(i), v)).collect())
    }

    /// Frobenius norm.
    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn check_same(&self, other: &Self, op: &'static str) -> Result<(), LinalgError> {
        if self.shape() != other.shape() {
            return Err(self.mismatch(other, op));
        }
        Ok(())
    }

    fn mismatch(&self, other: &Self, op: &'static str) -> LinalgError {
        LinalgError::DimensionMismatch {
            op,
            left_rows: self.rows,
            left_cols: self.cols,
            right_rows: other.rows,
            right_cols: other.cols,
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row_slice(i))?;
        }
        write!(f, "]")
    }
}

/// Column-stacking vectorization: `[a_11, a_21, …, a_m1, a_12, …]`.
pub fn vectorize(a: &Matrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.rows * a.cols);
    for j in 0..a.cols {
        for i in 0..a.rows {
            out.push(a[(i, j)]);
        }
    }
    out
}

/// Inverse of [`vectorize`] for a known shape.
pub fn unvectorize(v: &[f64], rows: usize, cols: usize) -> Result<Matrix, LinalgError> {
    if v.len() != rows * cols {
        return Err(LinalgError::BadLength {
            expected: rows * cols,
            found: v.len(),
        });
    }
    Ok(Matrix::from_fn(rows, cols, |i, j| v[j * rows + i]))
}

/// Kronecker product: for `a` m×n and `b` p×q, the (mp)×(nq) matrix whose
/// (i, j) block is `a[i][j] · b`.
pub fn kronecker(a: &Matrix, b: &Matrix) -> Matrix {
    let (p, q) = b.shape();
    let mut out = Matrix::zeros(a.rows * p, a.cols * q);
    for i in 0..a.rows {
        for j in 0..a.cols {
            let s = a[(i, j)];
            if s == 0.0 {
                continue;
            }
            for r in 0..p {
                for c in 0..q {
                    out[(i * p + r, j * q + c)] = s * b[(r, c)];
                }
            }
        }
    }
    out
}

/// `A_m ⋯ A_2 A_1` for `factors = [A_1, …, A_m]`.
///
/// `dim` is the column count of `A_1`; an empty product is `I_dim`.
pub fn right_to_left_product(factors: &[Matrix], dim: usize) -> Result<Matrix, LinalgError> {
    let mut acc = Matrix::identity(dim);
    for (index, f) in factors.iter().enumerate() {
        if f.cols != acc.rows {
            return Err(LinalgError::ProductMismatch {
                index,
                expected: acc.rows,
                found: f.cols,
            });
        }
        acc = f.matmul(&acc)?;
    }
    Ok(acc)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn norm_sq(v: &[f64]) -> f64 {
    dot(v, v)
}

/// `a - b` elementwise.
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// `y += alpha * x`.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows)
    }

    #[test]
    fn vectorize_stacks_columns() {
        assert_eq!(vectorize(&m(&[&[1., 2.], &[3., 4.]])), vec![1., 3., 2., 4.]);
        assert_eq!(vectorize(&Matrix::identity(2)), vec![1., 0., 0., 1.]);
        assert_eq!(vectorize(&Matrix::zeros(3, 4)), vec![0.0; 12]);
    }

    #[test]
    fn unvectorize_inverts_vectorize() {
        let a = Matrix::from_fn(3, 2, |i, j| (i * 7 + j) as f64);
        assert_eq!(unvectorize(&vectorize(&a), 3, 2).unwrap(), a);
    }

    #[test]
    fn kronecker_examples() {
        assert_eq!(
            kronecker(&Matrix::identity(2), &Matrix::identity(2)),
            Matrix::identity(4)
        );
        let a = m(&[&[1., 2.], &[3., 4.]]);
        let b = m(&[&[0., 1.], &[1., 0.]]);
        let expected = m(&[
            &[0., 1., 0., 2.],
            &[1., 0., 2., 0.],
            &[0., 3., 0., 4.],
            &[3., 0., 4., 0.],
        ]);
        assert_eq!(kronecker(&a, &b), expected);
        let c = m(&[&[2.5]]);
        assert_eq!(kronecker(&a, &c), a.scale(2.5));
    }

    #[test]
    fn kronecker_shape() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(4, 5);
        assert_eq!(kronecker(&a, &b).shape(), (8, 15));
    }

    #[test]
    fn right_to_left_product_cases() {
        let a1 = m(&[&[1., 2.], &[0., 1.], &[3., -1.]]);
        let a2 = m(&[&[2., 0., 1.]]);
        assert_eq!(right_to_left_product(std::slice::from_ref(&a1), 2).unwrap(), a1);
        assert_eq!(right_to_left_product(&[], 3).unwrap(), Matrix::identity(3));
        let direct = a2.matmul(&a1).unwrap();
        assert_eq!(right_to_left_product(&[a1.clone(), a2.clone()], 2).unwrap(), direct);
    }

    #[test]
    fn right_to_left_product_reports_offending_index() {
        let a1 = Matrix::zeros(3, 2);
        let bad = Matrix::zeros(2, 2);
        let err = right_to_left_product(&[a1, bad], 2).unwrap_err();
        assert_eq!(
            err,
            LinalgError::ProductMismatch {
                index: 1,
                expected: 3,
                found: 2
            }
        );
    }

    #[test]
    fn matmul_rejects_mismatch() {
        assert!(Matrix::zeros(2, 3).matmul(&Matrix::zeros(2, 3)).is_err());
        assert!(Matrix::from_row_major(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::from_row_major(0, 2, vec![]).is_err());
    }

    fn matrix_strategy(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-2.0f64..2.0, rows * cols)
            .prop_map(move |d| Matrix::from_row_major(rows, cols, d).unwrap())
    }

    proptest! {
        #[test]
        fn kronecker_is_bilinear(
            (a1, a2, b) in (1usize..4, 1usize..4, 1usize..4, 1usize..4).prop_flat_map(|(m, n, p, q)| {
                (matrix_strategy(m, n), matrix_strategy(m, n), matrix_strategy(p, q))
            }),
            s in -3.0f64..3.0,
        ) {
            let lhs = kronecker(&a1.scale(s).add(&a2).unwrap(), &b);
            let rhs = kronecker(&a1, &b).scale(s).add(&kronecker(&a2, &b)).unwrap();
            prop_assert!(lhs.sub(&rhs).unwrap().max_abs() <= 1e-12);
            let lhs = kronecker(&b, &a1.add(&a2).unwrap());
            let rhs = kronecker(&b, &a1).add(&kronecker(&b, &a2)).unwrap();
            prop_assert!(lhs.sub(&rhs).unwrap().max_abs() <= 1e-12);
        }

        #[test]
        fn vectorize_is_linear(
            (a, b) in (1usize..5, 1usize..5).prop_flat_map(|(r, c)| (matrix_strategy(r, c), matrix_strategy(r, c))),
            s in -3.0f64..3.0,
        ) {
            let lhs = vectorize(&a.scale(s).add(&b).unwrap());
            let mut rhs = vectorize(&b);
            axpy(s, &vectorize(&a), &mut rhs);
            for (l, r) in lhs.iter().zip(&rhs) {
                prop_assert!((l - r).abs() <= 1e-12);
            }
        }
    }
}
