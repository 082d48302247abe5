//! Compressed sparse row matrices over any [`Scalar`] field.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use num_traits::Zero;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Builds a matrix from `(row, col, value)` triplets. Duplicates are summed;
    /// explicit zeros are kept so the pattern is predictable.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, T)]) -> Result<Self> {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::InvalidInput(format!(
                    "triplet ({r}, {c}) outside {nrows}x{ncols} matrix"
                )));
            }
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![T::zero(); triplets.len()];
        let mut next = counts.clone();
        for &(r, c, v) in triplets {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        indptr.push(0);
        let mut row: Vec<(usize, T)> = Vec::new();
        for r in 0..nrows {
            row.clear();
            row.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            row.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut v = row[k].1;
                k += 1;
                while k < row.len() && row[k].0 == c {
                    v += row[k].1;
                    k += 1;
                }
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![T::one(); n])
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let n = diag.len();
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[T]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => T::zero(),
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.ncols, "mul_vec: x length");
        assert_eq!(y.len(), self.nrows, "mul_vec: y length");
        for (r, yr) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            let mut acc = T::zero();
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c];
            }
            *yr = acc;
        }
    }

    /// `y = A^H x`
    pub fn conj_transpose_mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.nrows, "conj_transpose_mul_vec: x length");
        let mut y = vec![T::zero(); self.ncols];
        for (r, &xr) in x.iter().enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                y[c] += v.conj() * xr;
            }
        }
        y
    }

    /// `y = A^T x`
    pub fn transpose_mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.nrows, "transpose_mul_vec: x length");
        let mut y = vec![T::zero(); self.ncols];
        for (r, &xr) in x.iter().enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                y[c] += v * xr;
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        self.transpose_with(|v| v)
    }

    pub fn conj_transpose(&self) -> Self {
        self.transpose_with(|v| v.conj())
    }

    fn transpose_with(&self, f: impl Fn(T) -> T) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for i in 0..self.ncols {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut indices = vec![0usize; self.nnz()];
        let mut values = vec![T::zero(); self.nnz()];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                indices[next[c]] = r;
                values[next[c]] = f(v);
                next[c] += 1;
            }
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            indptr: counts,
            indices,
            values,
        }
    }

    pub fn map_values(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn scaled(&self, s: T) -> Self {
        self.map_values(|v| v * s)
    }

    /// `alpha * self + beta * other`
    pub fn add_scaled(&self, alpha: T, other: &Self, beta: T) -> Result<Self> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::DimensionMismatch {
                what: "matrix sum",
                expected: self.nrows * self.ncols,
                got: other.nrows * other.ncols,
            });
        }
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        let mut indices = Vec::with_capacity(self.nnz() + other.nnz());
        let mut values = Vec::with_capacity(self.nnz() + other.nnz());
        indptr.push(0);
        for r in 0..self.nrows {
            let (ca, va) = self.row(r);
            let (cb, vb) = other.row(r);
            let (mut i, mut j) = (0, 0);
            while i < ca.len() || j < cb.len() {
                if j == cb.len() || (i < ca.len() && ca[i] < cb[j]) {
                    indices.push(ca[i]);
                    values.push(alpha * va[i]);
                    i += 1;
                } else if i == ca.len() || cb[j] < ca[i] {
                    indices.push(cb[j]);
                    values.push(beta * vb[j]);
                    j += 1;
                } else {
                    indices.push(ca[i]);
                    values.push(alpha * va[i] + beta * vb[j]);
                    i += 1;
                    j += 1;
                }
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr,
            indices,
            values,
        })
    }

    /// Adds `d` to the diagonal, inserting entries where the pattern lacks them.
    pub fn add_diagonal(&self, d: &[T]) -> Result<Self> {
        let n = self.nrows.min(self.ncols);
        if d.len() != n {
            return Err(Error::DimensionMismatch {
                what: "diagonal length",
                expected: n,
                got: d.len(),
            });
        }
        self.add_scaled(T::one(), &Self::rect_diagonal(self.nrows, self.ncols, d), T::one())
    }

    fn rect_diagonal(nrows: usize, ncols: usize, d: &[T]) -> Self {
        let mut indptr = Vec::with_capacity(nrows + 1);
        indptr.push(0);
        for r in 0..nrows {
            indptr.push(indptr[r] + usize::from(r < d.len()));
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices: (0..d.len()).collect(),
            values: d.to_vec(),
        }
    }

    /// Sparse product `self * other` (Gustavson's row-by-row algorithm).
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.ncols != other.nrows {
            return Err(Error::DimensionMismatch {
                what: "matrix product inner dimension",
                expected: self.ncols,
                got: other.nrows,
            });
        }
        let mut marker = vec![usize::MAX; other.ncols];
        let mut acc = vec![T::zero(); other.ncols];
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        let mut row_cols: Vec<usize> = Vec::new();
        for r in 0..self.nrows {
            row_cols.clear();
            let (ca, va) = self.row(r);
            for (&k, &a) in ca.iter().zip(va) {
                let (cb, vb) = other.row(k);
                for (&c, &b) in cb.iter().zip(vb) {
                    if marker[c] != r {
                        marker[c] = r;
                        acc[c] = T::zero();
                        row_cols.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            row_cols.sort_unstable();
            for &c in &row_cols {
                indices.push(c);
                values.push(acc[c]);
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            nrows: self.nrows,
            ncols: other.ncols,
            indptr,
            indices,
            values,
        })
    }

    /// `A^H A`
    pub fn gram(&self) -> Self {
        self.conj_transpose()
            .matmul(self)
            .expect("A^H A dimensions always agree")
    }

    pub fn max_abs(&self) -> T::Real {
        self.values
            .iter()
            .map(|v| v.modulus())
            .fold(T::Real::zero(), |a, b| if b > a { b } else { a })
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut dense = vec![vec![T::zero(); self.ncols]; self.nrows];
        for (r, c, v) in self.iter() {
            dense[r][c] += v;
        }
        dense
    }

    /// Coordinate-list text dump: `row col re im` per line, 17 significant digits.
    pub fn to_coo_text(&self) -> String {
        let mut out = String::with_capacity(self.nnz() * 64);
        for (r, c, v) in self.iter() {
            let re: f64 = num_traits::ToPrimitive::to_f64(&v.real()).unwrap_or(f64::NAN);
            let im: f64 = num_traits::ToPrimitive::to_f64(&v.imag()).unwrap_or(f64::NAN);
            let _ = writeln!(out, "{r} {c} {re:.16e} {im:.16e}");
        }
        out
    }
}

impl CsrMatrix<num_complex::Complex64> {
    /// Elementwise real part.
    pub fn real_part(&self) -> CsrMatrix<f64> {
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| v.re).collect(),
        }
    }
}
