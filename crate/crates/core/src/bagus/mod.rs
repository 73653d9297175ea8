//! Spike-and-slab Lasso MAP estimation of a precision matrix.
//!
//! The off-diagonal prior is a two-component Laplace mixture (spike scale
//! `v0`, slab scale `v1`, slab weight `η`); diagonals get an exponential prior
//! with rate `τ`. EM alternates:
//!
//! * E-step: the posterior slab probability `p_ij` of each off-diagonal entry,
//!   which turns the mixture penalty into an ℓ₁ weight
//!   `d_ij = p_ij / v1 + (1 − p_ij) / v0`;
//! * M-step: a weighted graphical-lasso problem solved by column-wise block
//!   coordinate descent (see [`mstep`]).
//!
//! Every entry of an iterate is held to `|ω_ij| ≤ B`.

mod mstep;
mod tune;

pub use mstep::{mstep, surrogate_objective};
pub use tune::{default_grid, tune, tune_with, TauRule, TuneCell, TuneOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, PrecisError, Result};
use crate::linalg::SymMatrix;
use crate::model::{BagusHyperparams, PrecisionEstimate};

/// Sample covariance of the working data together with its sample size.
#[derive(Clone, Debug)]
pub struct FitInput {
    pub s: SymMatrix,
    pub n: usize,
}

impl FitInput {
    pub fn new(s: SymMatrix, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(PrecisError::InvalidInput(format!(
                "fit needs n >= 2 observations, got {n}"
            )));
        }
        Ok(FitInput { s, n })
    }

    pub fn dim(&self) -> usize {
        self.s.dim()
    }
}

/// Expected ℓ₁ weights from the E-step. The diagonal holds `τ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyWeights(pub SymMatrix);

impl PenaltyWeights {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }
}

/// Posterior probability that an entry of magnitude `|ω|` comes from the slab.
pub fn slab_inclusion_prob(omega_ij: f64, hp: &BagusHyperparams) -> f64 {
    // log of the spike-to-slab posterior odds
    let log_odds = (hp.v1 / hp.v0).ln()
        + ((1.0 - hp.eta) / hp.eta).ln()
        + omega_ij.abs() * (1.0 / hp.v1 - 1.0 / hp.v0);
    if log_odds > 0.0 {
        let e = (-log_odds).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + log_odds.exp())
    }
}

/// Slab probabilities and the ℓ₁ weights they imply.
pub fn estep(omega: &SymMatrix, hp: &BagusHyperparams) -> (SymMatrix, PenaltyWeights) {
    let d = omega.dim();
    let p = SymMatrix::from_fn(d, |i, j| {
        if i == j {
            1.0
        } else {
            slab_inclusion_prob(omega.get(i, j), hp)
        }
    });
    let w = SymMatrix::from_fn(d, |i, j| {
        if i == j {
            hp.tau
        } else {
            let pij = p.get(i, j);
            pij / hp.v1 + (1.0 - pij) / hp.v0
        }
    });
    (p, PenaltyWeights(w))
}

/// Negative log of the Laplace-mixture prior density of one off-diagonal entry.
pub fn mixture_penalty(omega_ij: f64, hp: &BagusHyperparams) -> f64 {
    let a = omega_ij.abs();
    let slab = hp.eta.ln() - (2.0 * hp.v1).ln() - a / hp.v1;
    let spike = (1.0 - hp.eta).ln() - (2.0 * hp.v0).ln() - a / hp.v0;
    let m = slab.max(spike);
    -(m + ((slab - m).exp() + (spike - m).exp()).ln())
}

/// Negative log-posterior up to its normalizing constant:
/// `(n/2)(tr(SΩ) − logdet Ω) + Σ_{i<j} pen(ω_ij) + τ Σ ω_ii`.
pub fn objective(omega: &SymMatrix, input: &FitInput, hp: &BagusHyperparams) -> Result<f64> {
    check_dims(omega, input)?;
    let logdet = omega.log_det()?;
    let d = omega.dim();
    let mut pen = 0.0;
    for i in 0..d {
        for j in (i + 1)..d {
            pen += mixture_penalty(omega.get(i, j), hp);
        }
    }
    let n = input.n as f64;
    Ok(0.5 * n * (input.s.trace_product(omega) - logdet) + pen + hp.tau * omega.trace())
}

/// `n(tr(SΩ) − logdet Ω) + log(n)·q`, where `q` counts upper-triangle entries
/// whose inclusion probability is at least 0.5.
pub fn bic(s: &SymMatrix, omega: &SymMatrix, inclusion: &SymMatrix, n: usize) -> Result<f64> {
    if s.dim() != omega.dim() || inclusion.dim() != omega.dim() {
        return Err(dim_mismatch("BIC inputs", omega.dim(), s.dim()));
    }
    let logdet = omega.log_det()?;
    let q = selected_count(inclusion, 0.5);
    let n = n as f64;
    Ok(n * (s.trace_product(omega) - logdet) + n.ln() * q as f64)
}

fn selected_count(p: &SymMatrix, threshold: f64) -> usize {
    let d = p.dim();
    (0..d)
        .flat_map(|i| ((i + 1)..d).map(move |j| (i, j)))
        .filter(|&(i, j)| p.get(i, j) >= threshold)
        .count()
}

/// Starting point when the caller has none: `S⁻¹`, or `(S + εI)⁻¹` with
/// `ε = 0.01·tr(S)/d` when `S` is singular.
pub fn default_init(s: &SymMatrix) -> Result<SymMatrix> {
    match s.inverse() {
        Ok(inv) => Ok(inv),
        Err(PrecisError::NotPositiveDefinite { .. }) => {
            let d = s.dim();
            let mut eps = 1e-2 * s.trace() / d as f64;
            if eps <= 0.0 {
                eps = 1e-2;
            }
            s.add_diag(&vec![eps; d]).inverse()
        }
        Err(e) => Err(e),
    }
}

fn check_dims(omega: &SymMatrix, input: &FitInput) -> Result<()> {
    if omega.dim() != input.dim() {
        return Err(dim_mismatch("precision dimension", input.dim(), omega.dim()));
    }
    Ok(())
}

/// Runs EM from `omega_init` until the largest entrywise change falls below
/// `hp.em_tol` or `hp.em_max_iter` iterations have run.
///
/// Hitting the cap returns [`PrecisError::NonConvergence`] carrying the last
/// iterate.
pub fn fit_bagus(
    input: &FitInput,
    hp: &BagusHyperparams,
    omega_init: &SymMatrix,
) -> Result<PrecisionEstimate> {
    hp.validate()?;
    check_dims(omega_init, input)?;
    omega_init.cholesky()?;

    let mut omega = omega_init.clone();
    let mut trace = Vec::with_capacity(hp.em_max_iter);
    let mut converged = false;
    let mut last_change = f64::INFINITY;
    let mut iterations = 0;
    for _ in 0..hp.em_max_iter {
        iterations += 1;
        let (_, weights) = estep(&omega, hp);
        let next = mstep(input, &weights, &omega, hp)?;
        last_change = next.max_abs_diff(&omega);
        omega = next;
        let f = objective(&omega, input, hp)?;
        debug_assert!(
            trace.last().is_none_or(|&prev: &f64| f <= prev + 1e-8),
            "EM objective increased: {:?} -> {f}",
            trace.last()
        );
        debug_assert!(omega.max_abs() <= hp.spec_b * (1.0 + 1e-12), "entry {} exceeds bound {}", omega.max_abs(), hp.spec_b);
        trace.push(f);
        if last_change < hp.em_tol {
            converged = true;
            break;
        }
    }
    let (p, _) = estep(&omega, hp);
    let est = PrecisionEstimate {
        omega,
        inclusion_prob: p,
        objective_trace: trace,
        iterations,
        converged,
    };
    if converged {
        Ok(est)
    } else {
        Err(PrecisError::NonConvergence {
            iterations,
            last_change,
            best: Box::new(est),
        })
    }
}

/// Like [`fit_bagus`], but keeps the last iterate on non-convergence.
pub fn fit_bagus_lenient(
    input: &FitInput,
    hp: &BagusHyperparams,
    omega_init: &SymMatrix,
) -> Result<PrecisionEstimate> {
    match fit_bagus(input, hp, omega_init) {
        Err(PrecisError::NonConvergence { best, iterations, last_change }) => {
            log::warn!("BAGUS stopped after {iterations} EM iterations (max change {last_change:e})");
            Ok(*best)
        }
        other => other,
    }
}
