//! Preparing replicate-based expression summaries for the corrected fit.
//!
//! Input is one table of per-subject expression means (log scale) and one of
//! their posterior variances, produced by an external probe-level model, plus
//! optional raw intensities for the intensity filter.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, PrecisError, Result};
use crate::io::read_dataset_csv;
use crate::model::{Dataset, MeasurementErrorModel};

#[derive(Clone, Debug, PartialEq)]
pub struct ExpressionTable {
    means: Dataset,
    posterior_variances: Dataset,
    raw_intensities: Option<Dataset>,
    feature_ids: Vec<String>,
}

impl ExpressionTable {
    pub fn new(
        means: Dataset,
        posterior_variances: Dataset,
        raw_intensities: Option<Dataset>,
        feature_ids: Vec<String>,
    ) -> Result<Self> {
        let shape = (means.n(), means.d());
        for (name, m) in [("posterior variances", Some(&posterior_variances)), ("raw intensities", raw_intensities.as_ref())] {
            if let Some(m) = m {
                if (m.n(), m.d()) != shape {
                    return Err(PrecisError::DimensionMismatch(format!(
                        "{name} are {}x{}, means are {}x{}",
                        m.n(),
                        m.d(),
                        shape.0,
                        shape.1
                    )));
                }
            }
        }
        if feature_ids.len() != shape.1 {
            return Err(dim_mismatch("feature labels", shape.1, feature_ids.len()));
        }
        if posterior_variances.as_slice().iter().any(|v| *v < 0.0) {
            return Err(PrecisError::InvalidInput("posterior variances must be non-negative".into()));
        }
        Ok(ExpressionTable {
            means,
            posterior_variances,
            raw_intensities,
            feature_ids,
        })
    }

    /// Reads the CSV trio; each file has one header row of feature labels and
    /// the subjects in the same order. Labels are taken from the means file.
    pub fn from_csv(means: &Path, variances: &Path, intensities: Option<&Path>) -> Result<Self> {
        let (labels, m) = read_dataset_csv(means)?;
        let labels = labels.ok_or_else(|| {
            PrecisError::InvalidInput(format!("{}: missing header row of feature labels", means.display()))
        })?;
        let (_, v) = read_dataset_csv(variances)?;
        let raw = intensities.map(|p| read_dataset_csv(p).map(|t| t.1)).transpose()?;
        Self::new(m, v, raw, labels)
    }

    pub fn n(&self) -> usize {
        self.means.n()
    }

    pub fn p(&self) -> usize {
        self.means.d()
    }

    pub fn means(&self) -> &Dataset {
        &self.means
    }

    pub fn posterior_variances(&self) -> &Dataset {
        &self.posterior_variances
    }

    pub fn raw_intensities(&self) -> Option<&Dataset> {
        self.raw_intensities.as_ref()
    }

    pub fn feature_ids(&self) -> &[String] {
        &self.feature_ids
    }

    /// The table restricted to `features`, in the given order.
    pub fn select(&self, features: &[usize]) -> Result<Self> {
        if features.is_empty() {
            return Err(PrecisError::InvalidInput("no features selected".into()));
        }
        if let Some(&bad) = features.iter().find(|&&j| j >= self.p()) {
            return Err(PrecisError::InvalidInput(format!("feature index {bad} out of range")));
        }
        let pick = |m: &Dataset| {
            let data = m.rows().flat_map(|r| features.iter().map(move |&j| r[j])).collect();
            Dataset::from_flat(m.n(), features.len(), data)
        };
        Self::new(
            pick(&self.means)?,
            pick(&self.posterior_variances)?,
            self.raw_intensities.as_ref().map(pick).transpose()?,
            features.iter().map(|&j| self.feature_ids[j].clone()).collect(),
        )
    }
}

/// Per-feature mean and variance over subjects, divisor `n`.
fn column_moments(m: &Dataset) -> Vec<(f64, f64)> {
    let n = m.n() as f64;
    (0..m.d())
        .into_par_iter()
        .map(|j| {
            let col = m.column(j);
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            (mean, var)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Standardized {
    pub w: Dataset,
    pub feature_means: Vec<f64>,
    pub feature_sds: Vec<f64>,
}

/// Centres each feature and scales it to unit variance (divisor `n`).
pub fn standardize(t: &ExpressionTable) -> Result<Standardized> {
    let moments = column_moments(&t.means);
    let zero: Vec<String> = moments
        .iter()
        .zip(&t.feature_ids)
        .filter(|((_, var), _)| !(*var > 0.0))
        .map(|(_, id)| id.clone())
        .collect();
    if !zero.is_empty() {
        return Err(PrecisError::ZeroVarianceFeature(zero));
    }
    let feature_means: Vec<f64> = moments.iter().map(|m| m.0).collect();
    let feature_sds: Vec<f64> = moments.iter().map(|m| m.1.sqrt()).collect();
    let data = t
        .means
        .rows()
        .flat_map(|r| r.iter().enumerate().map(|(j, v)| (v - feature_means[j]) / feature_sds[j]))
        .collect();
    Ok(Standardized {
        w: Dataset::from_flat(t.n(), t.p(), data)?,
        feature_means,
        feature_sds,
    })
}

/// Per-feature raw error variance: the subject average of posterior variances.
fn raw_error_variances(t: &ExpressionTable) -> Vec<f64> {
    column_moments(&t.posterior_variances).iter().map(|m| m.0).collect()
}

/// Error variances on the standardized scale: mean posterior variance over
/// subjects divided by the feature variance.
pub fn estimate_sigma_u(t: &ExpressionTable, feature_sds: &[f64]) -> Result<MeasurementErrorModel> {
    if feature_sds.len() != t.p() {
        return Err(dim_mismatch("feature standard deviations", t.p(), feature_sds.len()));
    }
    if let Some(j) = feature_sds.iter().position(|s| !(*s > 0.0)) {
        return Err(PrecisError::InvalidInput(format!(
            "feature {} has non-positive standard deviation",
            t.feature_ids[j]
        )));
    }
    let raw = raw_error_variances(t);
    MeasurementErrorModel::new(raw.iter().zip(feature_sds).map(|(v, s)| v / (s * s)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FilterConfig {
    /// `None` disables the intensity filter.
    pub intensity: Option<IntensityFilter>,
    /// Minimum interquartile range of the means; `None` disables.
    pub min_iqr: Option<f64>,
    /// Remove when error variance / feature variance reaches this; `None` disables.
    pub max_noise_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IntensityFilter {
    /// Fraction of subjects that must exceed `min_intensity`.
    pub min_fraction: f64,
    pub min_intensity: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            intensity: Some(IntensityFilter {
                min_fraction: 0.25,
                min_intensity: 100.0,
            }),
            min_iqr: Some(0.6),
            max_noise_ratio: Some(0.5),
        }
    }
}

/// Features removed by each filter, counted in application order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FilterCounts {
    pub intensity: usize,
    pub iqr: usize,
    pub noise_ratio: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FilterOutcome {
    pub kept: Vec<usize>,
    pub removed: FilterCounts,
}

/// Linear-interpolation quantile of sorted data (the "type 7" rule).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn iqr(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25)
}

/// Applies the intensity, interquartile-range and noise-ratio filters, in
/// that order. Each is a per-feature predicate, so the kept set does not
/// depend on the order; only the per-filter counts do.
pub fn apply_filters(t: &ExpressionTable, cfg: &FilterConfig) -> Result<FilterOutcome> {
    let n = t.n() as f64;
    let intensity_ok: Vec<bool> = match &cfg.intensity {
        Some(f) => {
            let raw = t.raw_intensities.as_ref().ok_or(PrecisError::MissingRawIntensities)?;
            (0..t.p())
                .into_par_iter()
                .map(|j| {
                    let above = raw.column(j).iter().filter(|v| **v > f.min_intensity).count();
                    above as f64 >= f.min_fraction * n
                })
                .collect()
        }
        None => vec![true; t.p()],
    };
    let iqr_ok: Vec<bool> = match cfg.min_iqr {
        Some(min) => (0..t.p())
            .into_par_iter()
            .map(|j| iqr(&t.means.column(j)) >= min)
            .collect(),
        None => vec![true; t.p()],
    };
    let noise_ok: Vec<bool> = match cfg.max_noise_ratio {
        Some(max) => {
            let moments = column_moments(&t.means);
            raw_error_variances(t)
                .iter()
                .zip(&moments)
                .map(|(u, (_, var))| *u < max * var)
                .collect()
        }
        None => vec![true; t.p()],
    };
    let mut removed = FilterCounts::default();
    let mut kept = Vec::new();
    for j in 0..t.p() {
        if !intensity_ok[j] {
            removed.intensity += 1;
        } else if !iqr_ok[j] {
            removed.iqr += 1;
        } else if !noise_ok[j] {
            removed.noise_ratio += 1;
        } else {
            kept.push(j);
        }
    }
    Ok(FilterOutcome { kept, removed })
}
