//! One simulation cell: seeded replicates, three estimation arms, averaged metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{contaminate, gen_precision, sample_mvn, Contamination, GraphSpec};
use crate::bagus::{tune, tune_with, FitInput, TauRule};
use crate::error::{PrecisError, Result};
use crate::iro::{corrected_bic, naive_fit, run_iro, IroConfig};
use crate::linalg::SymMatrix;
use crate::metrics::{evaluate, Evaluation};
use crate::model::{sample_covariance, Adjacency, BagusHyperparams, Dataset, PrecisionEstimate};
use crate::rng::{child_seed, Domain};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimCell {
    pub graph: GraphSpec,
    pub n: usize,
    pub gamma: f64,
    pub seed: u64,
}

impl SimCell {
    pub fn validate(&self) -> Result<()> {
        self.graph.validate()?;
        if self.n < 2 {
            return Err(PrecisError::InvalidInput("a cell needs n >= 2".into()));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(PrecisError::InvalidInput(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        Ok(())
    }

    pub fn replicate_seed(&self, r: usize) -> u64 {
        child_seed(self.seed, Domain::Replicate, r as u64)
    }
}

/// The three arms, in reporting order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Fit on the clean sample `X`.
    True,
    /// Fit on the contaminated sample `W`, ignoring the error.
    Naive,
    /// IRO on `W` with the known error variances.
    Corrected,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::True, Method::Naive, Method::Corrected];
}

/// How each arm's `(v0, v1)` is chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "kind")]
pub enum Tuning {
    /// Same scales for every arm.
    Fixed { v0: f64, v1: f64 },
    /// BIC search per arm on replicate 0; the winner is reused for all replicates.
    PerArm { grid: Vec<(f64, f64)> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentSettings {
    pub methods: Vec<Method>,
    pub replicates: usize,
    pub tuning: Tuning,
    /// Everything except `v0`, `v1`, `tau` (set as `τ = v0`).
    pub base: BagusHyperparams,
    pub iro_iterations: usize,
    pub burn_in_fraction: f64,
    pub threshold: f64,
}

impl ExperimentSettings {
    pub fn new(replicates: usize, tuning: Tuning) -> Self {
        ExperimentSettings {
            methods: Method::ALL.to_vec(),
            replicates,
            tuning,
            base: BagusHyperparams::with_scales(0.05, 1.0),
            iro_iterations: IroConfig::DEFAULT_ITERATIONS,
            burn_in_fraction: IroConfig::DEFAULT_BURN_IN,
            threshold: 0.5,
        }
    }

    fn hp(&self, v0: f64, v1: f64) -> BagusHyperparams {
        BagusHyperparams {
            v0,
            v1,
            tau: v0,
            ..self.base.clone()
        }
    }

    fn iro_config(&self, hp: BagusHyperparams, seed: u64) -> IroConfig {
        IroConfig {
            iterations: self.iro_iterations,
            burn_in_fraction: self.burn_in_fraction,
            seed,
            hp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(PrecisError::InvalidInput("replicates must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(PrecisError::InvalidInput("no methods selected".into()));
        }
        match &self.tuning {
            Tuning::Fixed { v0, v1 } => self.hp(*v0, *v1).validate()?,
            Tuning::PerArm { grid } if grid.is_empty() => {
                return Err(PrecisError::InvalidInput("tuning grid is empty".into()))
            }
            Tuning::PerArm { .. } => {}
        }
        self.iro_config(self.base.clone(), 0).validate()
    }
}

/// Everything generated for one replicate.
#[derive(Clone, Debug)]
pub struct ReplicateData {
    pub omega_true: SymMatrix,
    pub truth: Adjacency,
    pub x: Dataset,
    pub contamination: Contamination,
}

/// Regenerates replicate `r` of `cell`; the same inputs always give the same data.
pub fn replicate_data(cell: &SimCell, r: usize) -> Result<ReplicateData> {
    cell.validate()?;
    let seed = cell.replicate_seed(r);
    let (omega_true, truth) = gen_precision(&cell.graph, seed)?;
    let sigma = omega_true.inverse()?;
    let x = sample_mvn(cell.n, &sigma, seed)?;
    let contamination = contaminate(&x, &sigma.diag(), cell.gamma, seed)?;
    Ok(ReplicateData {
        omega_true,
        truth,
        x,
        contamination,
    })
}

fn fit_arm(
    method: Method,
    data: &ReplicateData,
    hp: &BagusHyperparams,
    settings: &ExperimentSettings,
    seed: u64,
) -> Result<PrecisionEstimate> {
    match method {
        Method::True => naive_fit(&data.x, hp),
        Method::Naive => naive_fit(&data.contamination.w, hp),
        Method::Corrected => {
            let cfg = settings.iro_config(hp.clone(), seed);
            Ok(run_iro(&data.contamination.w, &data.contamination.me, &cfg)?.averaged)
        }
    }
}

fn tune_arm(
    method: Method,
    data: &ReplicateData,
    settings: &ExperimentSettings,
    grid: &[(f64, f64)],
    seed: u64,
) -> Result<BagusHyperparams> {
    let outcome = match method {
        Method::True | Method::Naive => {
            let sample = if method == Method::True { &data.x } else { &data.contamination.w };
            let input = FitInput::new(sample_covariance(sample)?, sample.n())?;
            tune(&input, grid, &settings.base, TauRule::EqualV0)?
        }
        Method::Corrected => {
            let w = &data.contamination.w;
            tune_with(grid, &settings.base, TauRule::EqualV0, |hp| {
                let me = &data.contamination.me;
                let trace = run_iro(w, me, &settings.iro_config(hp.clone(), seed))?;
                corrected_bic(w, me, &trace.averaged)
            })?
        }
    };
    Ok(outcome.best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<Evaluation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Per-method means over successful replicates, fields in table column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ArmSummary {
    pub method: Method,
    pub sen: f64,
    pub spe: f64,
    pub pre: f64,
    pub acc: f64,
    pub mcc: f64,
    pub frob: f64,
    /// Mean over replicates whose truth had both classes; `None` if none did.
    pub auc: Option<f64>,
    pub v0: f64,
    pub v1: f64,
    pub succeeded: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CellReport {
    pub cell: SimCell,
    pub arms: Vec<ArmSummary>,
    pub replicates: Vec<ReplicateRecord>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

fn summarize(method: Method, hp: &BagusHyperparams, records: &[ReplicateRecord]) -> ArmSummary {
    let evals: Vec<&Evaluation> = records
        .iter()
        .filter(|r| r.method == method)
        .filter_map(|r| r.evaluation.as_ref())
        .collect();
    let total = records.iter().filter(|r| r.method == method).count();
    let m = |f: fn(&Evaluation) -> f64| mean(evals.iter().map(|e| f(e))).unwrap_or(f64::NAN);
    ArmSummary {
        method,
        sen: m(|e| e.sen),
        spe: m(|e| e.spe),
        pre: m(|e| e.pre),
        acc: m(|e| e.acc),
        mcc: m(|e| e.mcc),
        frob: m(|e| e.frob),
        auc: mean(evals.iter().filter_map(|e| e.auc)),
        v0: hp.v0,
        v1: hp.v1,
        succeeded: evals.len(),
        failed: total - evals.len(),
    }
}

/// Runs every replicate of `cell` (in parallel) and averages each arm.
///
/// A failing replicate is recorded with its error and left out of the means.
/// Tuning failures are fatal since no arm could then be fitted.
pub fn run_cell(cell: &SimCell, settings: &ExperimentSettings) -> Result<CellReport> {
    cell.validate()?;
    settings.validate()?;

    let hps: Vec<(Method, BagusHyperparams)> = match &settings.tuning {
        Tuning::Fixed { v0, v1 } => settings
            .methods
            .iter()
            .map(|&m| (m, settings.hp(*v0, *v1)))
            .collect(),
        Tuning::PerArm { grid } => {
            let data = replicate_data(cell, 0)?;
            let seed = cell.replicate_seed(0);
            settings
                .methods
                .iter()
                .map(|&m| Ok((m, tune_arm(m, &data, settings, grid, seed)?)))
                .collect::<Result<_>>()?
        }
    };

    let records: Vec<ReplicateRecord> = (0..settings.replicates)
        .into_par_iter()
        .flat_map_iter(|r| {
            let data = replicate_data(cell, r);
            let seed = cell.replicate_seed(r);
            hps.iter()
                .map(|(method, hp)| {
                    let outcome = match &data {
                        Ok(data) => fit_arm(*method, data, hp, settings, seed).and_then(|est| {
                            evaluate(
                                &est.omega,
                                &est.inclusion_prob,
                                &data.omega_true,
                                &data.truth,
                                settings.threshold,
                            )
                        }),
                        Err(e) => Err(PrecisError::InvalidInput(e.to_string())),
                    };
                    match outcome {
                        Ok(e) => ReplicateRecord {
                            replicate: r,
                            method: *method,
                            evaluation: Some(e),
                            error: None,
                        },
                        Err(e) => {
                            log::warn!("replicate {r} {method:?} failed: {e}");
                            ReplicateRecord {
                                replicate: r,
                                method: *method,
                                evaluation: None,
                                error: Some(e.to_string()),
                            }
                        }
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();

    let arms = hps.iter().map(|(m, hp)| summarize(*m, hp, &records)).collect();
    Ok(CellReport {
        cell: cell.clone(),
        arms,
        replicates: records,
    })
}
