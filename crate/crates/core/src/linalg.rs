//! Dense symmetric matrices and their Cholesky factorization.
//!
//! Everything here is row-major `Vec<f64>` storage. The dimensions used by the
//! estimators stay in the low hundreds, so dense O(d³) kernels are adequate.

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, PrecisError, Result};

const SYMMETRY_TOL: f64 = 1e-9;

/// Dense symmetric `d x d` matrix. Construction enforces exact symmetry.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSym", into = "RawSym")]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawSym {
    dim: usize,
    entries: Vec<f64>,
}

impl TryFrom<RawSym> for SymMatrix {
    type Error = PrecisError;
    fn try_from(raw: RawSym) -> Result<Self> {
        SymMatrix::new(raw.dim, raw.entries)
    }
}

impl From<SymMatrix> for RawSym {
    fn from(m: SymMatrix) -> Self {
        RawSym {
            dim: m.dim,
            entries: m.data,
        }
    }
}

impl SymMatrix {
    /// Builds a matrix from row-major entries.
    ///
    /// The input is symmetrized as `(m + mᵀ)/2`; an asymmetry above `1e-9`
    /// (relative to the largest entry, floored at 1) is rejected.
    pub fn new(dim: usize, mut entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(PrecisError::InvalidInput("matrix dimension must be >= 1".into()));
        }
        if entries.len() != dim * dim {
            return Err(dim_mismatch("matrix entries", dim * dim, entries.len()));
        }
        if let Some(bad) = entries.iter().position(|v| !v.is_finite()) {
            return Err(PrecisError::InvalidInput(format!(
                "non-finite matrix entry at ({}, {})",
                bad / dim,
                bad % dim
            )));
        }
        let scale = entries.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        for i in 0..dim {
            for j in (i + 1)..dim {
                let a = entries[i * dim + j];
                let b = entries[j * dim + i];
                if (a - b).abs() > SYMMETRY_TOL * scale {
                    return Err(PrecisError::InvalidInput(format!(
                        "matrix is not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
                let avg = 0.5 * (a + b);
                entries[i * dim + j] = avg;
                entries[j * dim + i] = avg;
            }
        }
        Ok(SymMatrix { dim, data: entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        let mut entries = Vec::with_capacity(d * d);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(dim_mismatch(&format!("matrix row {i}"), d, r.len()));
            }
            entries.extend_from_slice(r);
        }
        Self::new(d, entries)
    }

    /// Fills the upper triangle from `f(i, j)` (with `i <= j`) and mirrors it.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(dim >= 1, "matrix dimension must be >= 1");
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                data[i * dim + j] = v;
                data[j * dim + i] = v;
            }
        }
        SymMatrix { dim, data }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_fn(dim, |_, _| 0.0)
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        Self::from_fn(diag.len(), |i, j| if i == j { diag[i] } else { 0.0 })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
        self.data[j * self.dim + i] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `tr(self · other)`; for symmetric arguments this is the entrywise inner product.
    pub fn trace_product(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix {
            dim: self.dim,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add_diag(&self, diag: &[f64]) -> SymMatrix {
        assert_eq!(diag.len(), self.dim);
        let mut out = self.clone();
        for (i, v) in diag.iter().enumerate() {
            out.data[i * self.dim + i] += v;
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        (0..self.dim)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn cholesky(&self) -> Result<Cholesky> {
        Cholesky::new(self)
    }

    pub fn is_positive_definite(&self) -> bool {
        self.cholesky().is_ok()
    }

    pub fn log_det(&self) -> Result<f64> {
        Ok(self.cholesky()?.log_det())
    }

    pub fn inverse(&self) -> Result<SymMatrix> {
        Ok(self.cholesky()?.inverse())
    }

    /// Smallest eigenvalue, via a dense symmetric eigensolver. Not for hot paths.
    pub fn min_eigenvalue(&self) -> f64 {
        let m = nalgebra::DMatrix::from_row_slice(self.dim, self.dim, &self.data);
        m.symmetric_eigen().eigenvalues.min()
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "SymMatrix({}x{})", self.dim, self.dim)?;
        for i in 0..self.dim {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        Ok(())
    }
}

impl Add for &SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: &SymMatrix) -> SymMatrix {
        assert_eq!(self.dim, rhs.dim);
        SymMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: &SymMatrix) -> SymMatrix {
        assert_eq!(self.dim, rhs.dim);
        SymMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

/// Lower-triangular factor `L` with `m = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    dim: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn new(m: &SymMatrix) -> Result<Self> {
        let d = m.dim;
        let mut l = vec![0.0; d * d];
        for j in 0..d {
            let mut diag = m.get(j, j);
            for k in 0..j {
                diag -= l[j * d + k] * l[j * d + k];
            }
            if diag <= 0.0 || !diag.is_finite() {
                return Err(PrecisError::NotPositiveDefinite {
                    pivot: j,
                    value: diag,
                });
            }
            let ljj = diag.sqrt();
            l[j * d + j] = ljj;
            for i in (j + 1)..d {
                let mut s = m.get(i, j);
                for k in 0..j {
                    s -= l[i * d + k] * l[j * d + k];
                }
                l[i * d + j] = s / ljj;
            }
        }
        Ok(Cholesky { dim: d, l })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn l(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.dim + j]
    }

    /// Row-major lower factor, zeros above the diagonal.
    pub fn factor(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| self.l[i * self.dim..(i + 1) * self.dim].to_vec())
            .collect()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim).map(|i| self.l(i, i).ln()).sum::<f64>()
    }

    /// Solves `L y = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut y = b.to_vec();
        for i in 0..d {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l(i, k) * y[k];
            }
            y[i] = s / self.l(i, i);
        }
        y
    }

    /// Solves `Lᵀ x = y`.
    pub fn solve_upper(&self, y: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut x = y.to_vec();
        for i in (0..d).rev() {
            let mut s = x[i];
            for k in (i + 1)..d {
                s -= self.l(k, i) * x[k];
            }
            x[i] = s / self.l(i, i);
        }
        x
    }

    /// Solves `m x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `L z`.
    pub fn mul_lower(&self, z: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| (0..=i).map(|k| self.l(i, k) * z[k]).sum())
            .collect()
    }

    pub fn inverse(&self) -> SymMatrix {
        let d = self.dim;
        // inv(m) = inv(L)ᵀ inv(L); build inv(L) column by column.
        let mut linv = vec![0.0; d * d];
        let mut e = vec![0.0; d];
        for c in 0..d {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[c] = 1.0;
            let col = self.solve_lower(&e);
            for r in 0..d {
                linv[r * d + c] = col[r];
            }
        }
        SymMatrix::from_fn(d, |i, j| {
            (j.max(i)..d).map(|k| linv[k * d + i] * linv[k * d + j]).sum()
        })
    }

    pub fn reconstruct(&self) -> SymMatrix {
        let d = self.dim;
        SymMatrix::from_fn(d, |i, j| (0..=i.min(j)).map(|k| self.l(i, k) * self.l(j, k)).sum())
    }
}
