//! Imputation-regularization loop for contaminated data.
//!
//! Each iteration draws latent clean rows from
//! `x_i | w_i ~ N(Λ⁻¹ Ω_u w_i, Λ⁻¹)` with `Λ = Ω_x + Ω_u`, then refits the
//! spike-and-slab estimate on the imputed sample, warm-started from the
//! previous precision. The final estimate averages post-burn-in iterates;
//! averages of positive definite matrices stay positive definite.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bagus::{bic, default_init, fit_bagus, fit_bagus_lenient, FitInput};
use crate::error::{dim_mismatch, PrecisError, Result};
use crate::linalg::SymMatrix;
use crate::model::{
    contaminated_precision, sample_covariance, Adjacency, BagusHyperparams, Dataset, MeasurementErrorModel,
    PrecisionEstimate,
};
use crate::rng::{self, Domain};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IroConfig {
    pub iterations: usize,
    pub burn_in_fraction: f64,
    pub seed: u64,
    pub hp: BagusHyperparams,
}

impl IroConfig {
    pub const DEFAULT_ITERATIONS: usize = 50;
    pub const DEFAULT_BURN_IN: f64 = 0.2;

    pub fn new(hp: BagusHyperparams, seed: u64) -> Self {
        IroConfig {
            iterations: Self::DEFAULT_ITERATIONS,
            burn_in_fraction: Self::DEFAULT_BURN_IN,
            seed,
            hp,
        }
    }

    /// `floor(T · burn_in_fraction)`.
    pub fn burn_in_count(&self) -> usize {
        (self.iterations as f64 * self.burn_in_fraction).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(PrecisError::InvalidInput("IRO needs at least one iteration".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(PrecisError::InvalidInput(format!(
                "burn-in fraction {} must lie in [0, 1)",
                self.burn_in_fraction
            )));
        }
        if self.burn_in_count() >= self.iterations {
            return Err(PrecisError::InvalidInput("burn-in discards every iterate".into()));
        }
        self.hp.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IroTrace {
    /// The naive fit on the contaminated data that seeds the chain.
    pub initial: PrecisionEstimate,
    pub per_iteration: Vec<PrecisionEstimate>,
    pub averaged: PrecisionEstimate,
    pub burn_in_count: usize,
    /// Mean sample covariance of the imputed data over retained iterations.
    pub mean_imputed_covariance: SymMatrix,
    /// Iterations (1-based) whose EM hit its cap; their last iterate was kept.
    pub non_converged: Vec<usize>,
}

/// Seed and iteration index selecting the imputation streams. Row `i` of
/// iteration `t` always draws from the same stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ImputeStream {
    pub seed: u64,
    pub iteration: u32,
}

/// Draws every latent row from its Gaussian full conditional given `w_i`.
pub fn impute_latent(
    w: &Dataset,
    omega_prev: &SymMatrix,
    me: &MeasurementErrorModel,
    stream: ImputeStream,
) -> Result<Dataset> {
    let d = w.d();
    if omega_prev.dim() != d {
        return Err(dim_mismatch("precision dimension", d, omega_prev.dim()));
    }
    if me.dim() != d {
        return Err(dim_mismatch("error variances", d, me.dim()));
    }
    me.check_positive()?;
    let omega_u = me.precisions();
    let lambda = omega_prev.add_diag(&omega_u);
    let chol = lambda.cholesky()?;

    let rows: Vec<Vec<f64>> = (0..w.n())
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(stream.seed, Domain::Imputation, stream.iteration, i as u32);
            let scaled: Vec<f64> = w.row(i).iter().zip(&omega_u).map(|(a, b)| a * b).collect();
            let mean = chol.solve(&scaled);
            let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            // Λ = L Lᵀ, so L⁻ᵀ z has covariance Λ⁻¹
            let noise = chol.solve_upper(&z);
            mean.iter().zip(&noise).map(|(m, e)| m + e).collect()
        })
        .collect();
    Dataset::from_rows(&rows)
}

/// Elementwise mean of the omegas and inclusion matrices after `burn_in`.
pub fn average_estimates(trace: &[PrecisionEstimate], burn_in: usize) -> Result<PrecisionEstimate> {
    let kept = trace.get(burn_in..).unwrap_or(&[]);
    let first = kept.first().ok_or(PrecisError::EmptyAverage)?;
    let k = kept.len() as f64;
    let mut omega = first.omega.clone();
    let mut prob = first.inclusion_prob.clone();
    for est in &kept[1..] {
        omega = &omega + &est.omega;
        prob = &prob + &est.inclusion_prob;
    }
    let omega = omega.scale(1.0 / k);
    omega.cholesky()?;
    Ok(PrecisionEstimate {
        omega,
        inclusion_prob: prob.scale(1.0 / k),
        objective_trace: Vec::new(),
        iterations: kept.len(),
        converged: kept.iter().all(|e| e.converged),
    })
}

/// Edges `(i, j)` with `p_ij ≥ threshold`.
pub fn select_edges(p: &SymMatrix, threshold: f64) -> Adjacency {
    let d = p.dim();
    let mut adj = Adjacency::empty(d);
    for i in 0..d {
        for j in (i + 1)..d {
            if p.get(i, j) >= threshold {
                adj.insert(i, j);
            }
        }
    }
    adj
}

/// BIC of a corrected estimate scored on the observed data: the fit
/// `Ω_x` is mapped to the precision of `W` and compared with the sample
/// covariance of `W`, so the score never depends on the imputations.
pub fn corrected_bic(w: &Dataset, me: &MeasurementErrorModel, est: &PrecisionEstimate) -> Result<f64> {
    let s_w = sample_covariance(w)?;
    let omega_w = contaminated_precision(&est.omega, me)?;
    bic(&s_w, &omega_w, &est.inclusion_prob, w.n())
}

/// Naive fit on the raw contaminated data, started from [`default_init`].
pub fn naive_fit(w: &Dataset, hp: &BagusHyperparams) -> Result<PrecisionEstimate> {
    let s = sample_covariance(w)?;
    let init = default_init(&s)?;
    fit_bagus_lenient(&FitInput::new(s, w.n())?, hp, &init)
}

/// Full correction loop, seeded by a naive fit on `w`.
pub fn run_iro(w: &Dataset, me: &MeasurementErrorModel, cfg: &IroConfig) -> Result<IroTrace> {
    cfg.validate()?;
    me.check_positive()?;
    if me.dim() != w.d() {
        return Err(dim_mismatch("error variances", w.d(), me.dim()));
    }
    let initial = naive_fit(w, &cfg.hp)?;
    run_iro_from(w, me, cfg, initial)
}

/// Correction loop seeded by an existing estimate (normally the naive fit).
pub fn run_iro_from(
    w: &Dataset,
    me: &MeasurementErrorModel,
    cfg: &IroConfig,
    initial: PrecisionEstimate,
) -> Result<IroTrace> {
    cfg.validate()?;
    me.check_positive()?;
    if me.dim() != w.d() || initial.omega.dim() != w.d() {
        return Err(dim_mismatch("IRO inputs", w.d(), me.dim()));
    }
    let burn_in = cfg.burn_in_count();
    let mut per_iteration: Vec<PrecisionEstimate> = Vec::with_capacity(cfg.iterations);
    let mut non_converged = Vec::new();
    let mut cov_sum: Option<SymMatrix> = None;

    for t in 1..=cfg.iterations {
        let wrap = |e: PrecisError| PrecisError::Iteration {
            iteration: t,
            source: Box::new(e),
        };
        let prev = per_iteration.last().unwrap_or(&initial).omega.clone();
        let stream = ImputeStream {
            seed: cfg.seed,
            iteration: t as u32,
        };
        let x = impute_latent(w, &prev, me, stream).map_err(wrap)?;
        let s = sample_covariance(&x).map_err(wrap)?;
        let input = FitInput::new(s, x.n()).map_err(wrap)?;
        let est = match fit_bagus(&input, &cfg.hp, &prev) {
            Ok(est) => est,
            Err(PrecisError::NonConvergence { best, .. }) => {
                non_converged.push(t);
                *best
            }
            Err(e) => return Err(wrap(e)),
        };
        if t > burn_in {
            cov_sum = Some(match cov_sum {
                Some(acc) => &acc + &input.s,
                None => input.s,
            });
        }
        per_iteration.push(est);
    }
    if !non_converged.is_empty() {
        log::warn!(
            "{} of {} IRO iterations hit the EM cap",
            non_converged.len(),
            cfg.iterations
        );
    }
    let averaged = average_estimates(&per_iteration, burn_in)?;
    let retained = (cfg.iterations - burn_in) as f64;
    let mean_imputed_covariance = cov_sum.ok_or(PrecisError::EmptyAverage)?.scale(1.0 / retained);
    Ok(IroTrace {
        initial,
        per_iteration,
        averaged,
        burn_in_count: burn_in,
        mean_imputed_covariance,
        non_converged,
    })
}
