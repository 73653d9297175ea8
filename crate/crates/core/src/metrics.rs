//! Edge-selection and estimation quality metrics.
//!
//! All counts run over the strict upper triangle, so a `d`-node graph has
//! `d(d−1)/2` candidate edges.

use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, PrecisError, Result};
use crate::linalg::SymMatrix;
use crate::model::Adjacency;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(estimated: &Adjacency, truth: &Adjacency) -> Result<ConfusionCounts> {
    if estimated.dim() != truth.dim() {
        return Err(dim_mismatch("adjacency dimension", truth.dim(), estimated.dim()));
    }
    let d = truth.dim();
    let mut c = ConfusionCounts::default();
    for i in 0..d {
        for j in (i + 1)..d {
            match (estimated.contains(i, j), truth.contains(i, j)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
    }
    Ok(c)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub sen: f64,
    pub spe: f64,
    pub pre: f64,
    pub acc: f64,
    pub mcc: f64,
    /// Names of metrics whose denominator was zero (reported as 0).
    pub degenerate: Vec<String>,
}

fn ratio(num: f64, den: f64, name: &str, flags: &mut Vec<String>) -> f64 {
    if den == 0.0 {
        flags.push(name.to_string());
        0.0
    } else {
        num / den
    }
}

/// Sensitivity, specificity, precision, accuracy and Matthews correlation.
pub fn classification_metrics(c: &ConfusionCounts) -> ClassificationMetrics {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let mut flags = Vec::new();
    let sen = ratio(tp, tp + fn_, "sen", &mut flags);
    let spe = ratio(tn, tn + fp, "spe", &mut flags);
    let pre = ratio(tp, tp + fp, "pre", &mut flags);
    let acc = ratio(tp + tn, tp + fp + tn + fn_, "acc", &mut flags);
    let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    let mcc = ratio(tp * tn - fp * fn_, den, "mcc", &mut flags);
    ClassificationMetrics {
        sen,
        spe,
        pre,
        acc,
        mcc,
        degenerate: flags,
    }
}

/// ROC AUC of `scores` against `truth` over the upper triangle, with ties
/// counted as one half.
pub fn auc(scores: &SymMatrix, truth: &Adjacency) -> Result<f64> {
    if scores.dim() != truth.dim() {
        return Err(dim_mismatch("score dimension", truth.dim(), scores.dim()));
    }
    let d = truth.dim();
    let mut entries: Vec<(f64, bool)> = Vec::with_capacity(d * (d.saturating_sub(1)) / 2);
    for i in 0..d {
        for j in (i + 1)..d {
            entries.push((scores.get(i, j), truth.contains(i, j)));
        }
    }
    let pos = entries.iter().filter(|e| e.1).count();
    let neg = entries.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(PrecisError::SingleClass);
    }
    entries.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Mann-Whitney: count negatives strictly below each positive plus half the ties.
    let mut acc = 0.0;
    let mut below_neg = 0usize;
    let mut k = 0;
    while k < entries.len() {
        let mut end = k;
        while end < entries.len() && entries[end].0 == entries[k].0 {
            end += 1;
        }
        let group = &entries[k..end];
        let gp = group.iter().filter(|e| e.1).count();
        let gn = group.len() - gp;
        acc += gp as f64 * (below_neg as f64 + 0.5 * gn as f64);
        below_neg += gn;
        k = end;
    }
    Ok(acc / (pos as f64 * neg as f64))
}

pub fn frobenius_error(estimate: &SymMatrix, truth: &SymMatrix) -> Result<f64> {
    if estimate.dim() != truth.dim() {
        return Err(dim_mismatch("matrix dimension", truth.dim(), estimate.dim()));
    }
    Ok((estimate - truth).frobenius_norm())
}

/// Everything reported for one estimate against a known truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Evaluation {
    pub sen: f64,
    pub spe: f64,
    pub pre: f64,
    pub acc: f64,
    pub mcc: f64,
    pub frob: f64,
    /// `None` when the truth has a single class.
    pub auc: Option<f64>,
    pub confusion: ConfusionCounts,
    pub degenerate_flags: Vec<String>,
}

/// Scores an estimate: edges are `p_ij ≥ threshold`, AUC ranks `p_ij`.
pub fn evaluate(
    omega_hat: &SymMatrix,
    inclusion: &SymMatrix,
    omega_true: &SymMatrix,
    truth: &Adjacency,
    threshold: f64,
) -> Result<Evaluation> {
    let selected = crate::iro::select_edges(inclusion, threshold);
    let counts = confusion(&selected, truth)?;
    let cm = classification_metrics(&counts);
    let frob = frobenius_error(omega_hat, omega_true)?;
    let mut flags = cm.degenerate;
    let auc = match auc(inclusion, truth) {
        Ok(a) => Some(a),
        Err(PrecisError::SingleClass) => {
            flags.push("auc".into());
            None
        }
        Err(e) => return Err(e),
    };
    Ok(Evaluation {
        sen: cm.sen,
        spe: cm.spe,
        pre: cm.pre,
        acc: cm.acc,
        mcc: cm.mcc,
        frob,
        auc,
        confusion: counts,
        degenerate_flags: flags,
    })
}
