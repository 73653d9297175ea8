//! Synthetic ground truth: hub and random graphs, Gaussian samples and
//! additive measurement error.

mod experiment;

pub use experiment::{
    replicate_data, run_cell, ArmSummary, CellReport, ExperimentSettings, Method, ReplicateData,
    ReplicateRecord, SimCell, Tuning,
};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, PrecisError, Result};
use crate::linalg::SymMatrix;
use crate::model::{Adjacency, Dataset, MeasurementErrorModel};
use crate::rng::{self, Domain};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Structure {
    Hub,
    Random,
}

/// Hub graphs: `Star` links each group's first node to the rest of the group,
/// `Block` links every pair inside a group.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HubStyle {
    #[default]
    Star,
    Block,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GraphSpec {
    pub structure: Structure,
    pub d: usize,
    /// Random graphs only; defaults to `3/d`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_probability: Option<f64>,
    #[serde(default = "default_group_size")]
    pub group_size: usize,
    #[serde(default)]
    pub hub_style: HubStyle,
}

fn default_group_size() -> usize {
    20
}

impl GraphSpec {
    pub fn hub(d: usize, group_size: usize) -> Self {
        GraphSpec {
            structure: Structure::Hub,
            d,
            edge_probability: None,
            group_size,
            hub_style: HubStyle::Star,
        }
    }

    pub fn random(d: usize) -> Self {
        GraphSpec {
            structure: Structure::Random,
            d,
            edge_probability: None,
            group_size: default_group_size(),
            hub_style: HubStyle::Star,
        }
    }

    pub fn edge_probability(&self) -> f64 {
        self.edge_probability.unwrap_or(3.0 / self.d as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(PrecisError::InvalidInput("graph needs d >= 2".into()));
        }
        match self.structure {
            Structure::Hub => {
                if self.group_size < 2 || self.d % self.group_size != 0 {
                    return Err(PrecisError::InvalidInput(format!(
                        "hub graph needs d ({}) divisible by a group size >= 2 ({})",
                        self.d, self.group_size
                    )));
                }
            }
            Structure::Random => {
                let p = self.edge_probability();
                // 0 is accepted so edgeless truths can be generated on purpose
                if !(0.0..=1.0).contains(&p) {
                    return Err(PrecisError::InvalidInput(format!(
                        "edge probability {p} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Ground-truth precision matrix and its graph.
///
/// Edges get weight 1. The diagonal is set uniformly to `|λ_min(A)| + 0.5`,
/// where `A` is the 0/1 adjacency matrix, which makes the result positive
/// definite with smallest eigenvalue 0.5.
pub fn gen_precision(spec: &GraphSpec, seed: u64) -> Result<(SymMatrix, Adjacency)> {
    spec.validate()?;
    let d = spec.d;
    let mut adj = Adjacency::empty(d);
    match spec.structure {
        Structure::Hub => {
            let g = spec.group_size;
            for start in (0..d).step_by(g) {
                match spec.hub_style {
                    HubStyle::Star => {
                        for leaf in (start + 1)..(start + g) {
                            adj.insert(start, leaf);
                        }
                    }
                    HubStyle::Block => {
                        for i in start..(start + g) {
                            for j in (i + 1)..(start + g) {
                                adj.insert(i, j);
                            }
                        }
                    }
                }
            }
        }
        Structure::Random => {
            let p = spec.edge_probability();
            let mut rng = rng::stream(seed, Domain::Graph, 0, 0);
            for i in 0..d {
                for j in (i + 1)..d {
                    if rng.gen::<f64>() < p {
                        adj.insert(i, j);
                    }
                }
            }
        }
    }
    let pattern = SymMatrix::from_fn(d, |i, j| if i != j && adj.contains(i, j) { 1.0 } else { 0.0 });
    let diag = pattern.min_eigenvalue().abs() + 0.5;
    let omega = SymMatrix::from_fn(d, |i, j| if i == j { diag } else { pattern.get(i, j) });
    omega.cholesky()?;
    Ok((omega, adj))
}

/// `n` zero-mean rows with covariance `sigma`; row `i` draws from its own stream.
pub fn sample_mvn(n: usize, sigma: &SymMatrix, seed: u64) -> Result<Dataset> {
    let chol = sigma.cholesky()?;
    let d = sigma.dim();
    let mut data = Vec::with_capacity(n * d);
    for i in 0..n {
        let mut rng = rng::stream(seed, Domain::Sample, 0, i as u32);
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        data.extend(chol.mul_lower(&z));
    }
    Dataset::from_flat(n, d, data)
}

/// Contaminated observations and the error model that produced them.
#[derive(Clone, Debug)]
pub struct Contamination {
    pub w: Dataset,
    pub me: MeasurementErrorModel,
    /// The added noise; `w = x + noise` entrywise.
    pub noise: Dataset,
}

/// Adds `u_i ~ N(0, diag(γ σ²_x,jj))` to every row of `x`.
pub fn contaminate(x: &Dataset, sigma_x_diag: &[f64], gamma: f64, seed: u64) -> Result<Contamination> {
    if sigma_x_diag.len() != x.d() {
        return Err(dim_mismatch("variance vector", x.d(), sigma_x_diag.len()));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(PrecisError::InvalidInput(format!(
            "noise-to-signal ratio must be positive, got {gamma}; use a naive fit for clean data"
        )));
    }
    if sigma_x_diag.iter().any(|v| !(*v > 0.0)) {
        return Err(PrecisError::InvalidInput("signal variances must be positive".into()));
    }
    let variances: Vec<f64> = sigma_x_diag.iter().map(|v| gamma * v).collect();
    let sds: Vec<f64> = variances.iter().map(|v| v.sqrt()).collect();
    let (n, d) = (x.n(), x.d());
    let mut noise = Vec::with_capacity(n * d);
    let mut w = Vec::with_capacity(n * d);
    for i in 0..n {
        let mut rng = rng::stream(seed, Domain::Noise, 0, i as u32);
        for (j, xv) in x.row(i).iter().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            let u = sds[j] * z;
            noise.push(u);
            w.push(xv + u);
        }
    }
    Ok(Contamination {
        w: Dataset::from_flat(n, d, w)?,
        me: MeasurementErrorModel::new(variances)?,
        noise: Dataset::from_flat(n, d, noise)?,
    })
}
