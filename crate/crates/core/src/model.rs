//! Domain types shared by the estimators and the contaminated-model identities.

use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, PrecisError, Result};
use crate::linalg::SymMatrix;

/// `n x d` observations, one row per subject.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl Dataset {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(PrecisError::InvalidInput("dataset has no rows".into()));
        }
        let d = rows[0].len();
        if d == 0 {
            return Err(PrecisError::InvalidInput("dataset has no columns".into()));
        }
        let mut data = Vec::with_capacity(n * d);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(dim_mismatch(&format!("dataset row {i}"), d, r.len()));
            }
            data.extend_from_slice(r);
        }
        Self::from_flat(n, d, data)
    }

    pub fn from_flat(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(PrecisError::InvalidInput("dataset must be non-empty".into()));
        }
        if data.len() != n * d {
            return Err(dim_mismatch("dataset entries", n * d, data.len()));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(PrecisError::InvalidInput(format!(
                "non-finite value at row {}, column {}",
                bad / d,
                bad % d
            )));
        }
        Ok(Dataset { n, d, data })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }
}

/// Diagonal measurement-error covariance, stored as per-coordinate variances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementErrorModel {
    variances: Vec<f64>,
}

/// Smallest error variance the correction loop accepts.
pub const MIN_ERROR_VARIANCE: f64 = 1e-10;

impl MeasurementErrorModel {
    /// Accepts non-negative finite variances. Zero entries are allowed here so
    /// degenerate models can be represented; [`Self::check_positive`] guards the
    /// paths that need `Σ_u⁻¹`.
    pub fn new(variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() {
            return Err(PrecisError::InvalidInput("empty error-variance vector".into()));
        }
        if let Some(v) = variances.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(PrecisError::InvalidInput(format!(
                "error variance {v} must be finite and non-negative"
            )));
        }
        Ok(MeasurementErrorModel { variances })
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn dim(&self) -> usize {
        self.variances.len()
    }

    pub fn check_positive(&self) -> Result<()> {
        match self
            .variances
            .iter()
            .enumerate()
            .find(|(_, v)| **v < MIN_ERROR_VARIANCE)
        {
            Some((j, v)) => Err(PrecisError::InvalidInput(format!(
                "error variance {v:e} at coordinate {j} is below {MIN_ERROR_VARIANCE:e}; \
                 use a naive fit for error-free data"
            ))),
            None => Ok(()),
        }
    }

    /// `Ω_u = Σ_u⁻¹` diagonal.
    pub fn precisions(&self) -> Vec<f64> {
        self.variances.iter().map(|v| 1.0 / v).collect()
    }
}

/// Hyperparameters for one spike-and-slab Lasso fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BagusHyperparams {
    pub v0: f64,
    pub v1: f64,
    pub eta: f64,
    pub tau: f64,
    #[serde(rename = "B")]
    pub spec_b: f64,
    pub em_tol: f64,
    pub em_max_iter: usize,
    /// Cap on coordinate-descent sweeps inside one M-step.
    pub max_sweeps: usize,
}

impl BagusHyperparams {
    pub const DEFAULT_B: f64 = 10.0;
    pub const DEFAULT_EM_TOL: f64 = 1e-4;
    pub const DEFAULT_EM_MAX_ITER: usize = 50;
    pub const DEFAULT_MAX_SWEEPS: usize = 200;

    /// `η = 0.5`, `τ = v0`, `B = 10`.
    pub fn with_scales(v0: f64, v1: f64) -> Self {
        BagusHyperparams {
            v0,
            v1,
            eta: 0.5,
            tau: v0,
            spec_b: Self::DEFAULT_B,
            em_tol: Self::DEFAULT_EM_TOL,
            em_max_iter: Self::DEFAULT_EM_MAX_ITER,
            max_sweeps: Self::DEFAULT_MAX_SWEEPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.v0 > 0.0
            && self.v0 < self.v1
            && self.v1.is_finite()
            && self.eta > 0.0
            && self.eta < 1.0
            && self.tau > 0.0
            && self.spec_b > 0.0
            && self.em_tol > 0.0
            && self.em_max_iter >= 1
            && self.max_sweeps >= 1;
        if ok {
            Ok(())
        } else {
            Err(PrecisError::InvalidInput(format!(
                "invalid hyperparameters (need 0 < v0 < v1, 0 < eta < 1, tau, B, tol > 0): {self:?}"
            )))
        }
    }
}

/// A fitted precision matrix with its slab-inclusion probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionEstimate {
    pub omega: SymMatrix,
    /// Off-diagonal slab probabilities; diagonal fixed at 1.
    pub inclusion_prob: SymMatrix,
    /// Objective value after each EM iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Undirected graph on `d` nodes without self-loops.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjacency {
    dim: usize,
    edges: Vec<bool>,
}

impl Adjacency {
    pub fn empty(dim: usize) -> Self {
        Adjacency {
            dim,
            edges: vec![false; dim * dim],
        }
    }

    pub fn from_edges(dim: usize, edges: &[(usize, usize)]) -> Self {
        let mut a = Self::empty(dim);
        for &(i, j) in edges {
            a.insert(i, j);
        }
        a
    }

    /// Edges at the non-zero off-diagonal entries of `m`.
    pub fn from_support(m: &SymMatrix) -> Self {
        let d = m.dim();
        let mut a = Self::empty(d);
        for i in 0..d {
            for j in (i + 1)..d {
                if m.get(i, j) != 0.0 {
                    a.insert(i, j);
                }
            }
        }
        a
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn insert(&mut self, i: usize, j: usize) {
        assert!(i != j, "self-loops are not edges");
        self.edges[i * self.dim + j] = true;
        self.edges[j * self.dim + i] = true;
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.edges[i * self.dim + j]
    }

    /// Edges as `(i, j)` with `i < j`, in row order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let d = self.dim;
        (0..d)
            .flat_map(|i| ((i + 1)..d).map(move |j| (i, j)))
            .filter(|&(i, j)| self.contains(i, j))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().filter(|&&e| e).count() / 2
    }

    pub fn degree(&self, i: usize) -> usize {
        (0..self.dim).filter(|&j| self.contains(i, j)).count()
    }
}

/// Sample covariance with divisor `n`, centred at the sample mean.
pub fn sample_covariance(x: &Dataset) -> Result<SymMatrix> {
    if x.n() < 2 {
        return Err(PrecisError::InvalidInput(
            "sample covariance needs at least 2 observations".into(),
        ));
    }
    let (n, d) = (x.n(), x.d());
    let mut mean = vec![0.0; d];
    for r in x.rows() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut acc = vec![0.0; d * d];
    let mut centred = vec![0.0; d];
    for r in x.rows() {
        for j in 0..d {
            centred[j] = r[j] - mean[j];
        }
        for i in 0..d {
            let ci = centred[i];
            let row = &mut acc[i * d..];
            for j in i..d {
                row[j] += ci * centred[j];
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    Ok(SymMatrix::from_fn(d, |i, j| acc[i * d + j] * inv_n))
}

/// Precision of `w = x + u` given `Ω_x` and diagonal `Σ_u`.
///
/// Uses the symmetric form `Ω_w = Ω − Ω D (I + D Ω D)⁻¹ D Ω` with `D = Σ_u^{1/2}`,
/// which equals `Ω − Ω (I + Σ_u Ω)⁻¹ Σ_u Ω` and tolerates zero variances.
pub fn contaminated_precision(
    omega_x: &SymMatrix,
    sigma_u: &MeasurementErrorModel,
) -> Result<SymMatrix> {
    let d = omega_x.dim();
    if sigma_u.dim() != d {
        return Err(dim_mismatch("error variances", d, sigma_u.dim()));
    }
    omega_x.cholesky()?;
    let root: Vec<f64> = sigma_u.variances().iter().map(|v| v.sqrt()).collect();
    let inner = SymMatrix::from_fn(d, |i, j| {
        root[i] * omega_x.get(i, j) * root[j] + if i == j { 1.0 } else { 0.0 }
    });
    let chol = inner.cholesky()?;
    // G = D Ω, so Ω_w = Ω - Gᵀ inner⁻¹ G.
    let g: Vec<Vec<f64>> = (0..d)
        .map(|c| (0..d).map(|r| root[r] * omega_x.get(r, c)).collect())
        .collect();
    let half: Vec<Vec<f64>> = g.iter().map(|col| chol.solve_lower(col)).collect();
    Ok(SymMatrix::from_fn(d, |i, j| {
        let corr: f64 = half[i].iter().zip(&half[j]).map(|(a, b)| a * b).sum();
        omega_x.get(i, j) - corr
    }))
}

/// Moment correction `S_w − Σ_u`. The result is frequently indefinite.
pub fn naive_moment_correction(
    s_w: &SymMatrix,
    sigma_u: &MeasurementErrorModel,
) -> Result<SymMatrix> {
    if s_w.dim() != sigma_u.dim() {
        return Err(dim_mismatch("error variances", s_w.dim(), sigma_u.dim()));
    }
    let neg: Vec<f64> = sigma_u.variances().iter().map(|v| -v).collect();
    Ok(s_w.add_diag(&neg))
}
