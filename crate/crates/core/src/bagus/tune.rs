//! BIC grid search over `(v0, v1)`.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bagus::{bic, default_init, fit_bagus_lenient, FitInput};
use crate::error::{PrecisError, Result};
use crate::model::BagusHyperparams;

/// How `τ` follows the grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauRule {
    /// `τ = v0` for every cell.
    EqualV0,
    Fixed(f64),
}

impl TauRule {
    pub fn tau(&self, v0: f64) -> f64 {
        match *self {
            TauRule::EqualV0 => v0,
            TauRule::Fixed(t) => t,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneCell {
    pub v0: f64,
    pub v1: f64,
    /// `None` when the fit failed; `error` then says why.
    pub bic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub best: BagusHyperparams,
    pub best_bic: f64,
    pub cells: Vec<TuneCell>,
}

/// Default search grid: `v0 ∈ {¼, ½, 1, 2} / √(n ln d)` crossed with
/// `v1 ∈ {1, 2, 5}`.
///
/// Keeping `v0` on the `1/√(n log d)` scale matters: with a wide spike every
/// inclusion probability falls below one half, the edge count in BIC drops to
/// zero and BIC rewards the nearly unpenalized fit.
pub fn default_grid(n: usize, d: usize) -> Vec<(f64, f64)> {
    let base = 1.0 / (n as f64 * (d.max(2) as f64).ln()).sqrt();
    let mut grid = Vec::with_capacity(12);
    for k in [0.25, 0.5, 1.0, 2.0] {
        for v1 in [1.0, 2.0, 5.0] {
            grid.push((k * base, v1));
        }
    }
    grid
}

/// Lower BIC wins; exact ties go to the larger `v0`, then the larger `v1`.
fn rank(a: &TuneCell, b: &TuneCell) -> Ordering {
    let (ba, bb) = (a.bic.unwrap_or(f64::INFINITY), b.bic.unwrap_or(f64::INFINITY));
    ba.total_cmp(&bb)
        .then_with(|| b.v0.total_cmp(&a.v0))
        .then_with(|| b.v1.total_cmp(&a.v1))
}

/// Evaluates `score` on every grid cell (in parallel) and returns the BIC
/// minimizer. `base` supplies everything but `v0`, `v1` and `τ`.
pub fn tune_with<F>(
    grid: &[(f64, f64)],
    base: &BagusHyperparams,
    tau_rule: TauRule,
    score: F,
) -> Result<TuneOutcome>
where
    F: Fn(&BagusHyperparams) -> Result<f64> + Sync,
{
    if grid.is_empty() {
        return Err(PrecisError::InvalidInput("tuning grid is empty".into()));
    }
    if let Some(&(v0, v1)) = grid.iter().find(|(v0, v1)| !(*v0 > 0.0 && v0 < v1)) {
        return Err(PrecisError::InvalidInput(format!(
            "grid cell (v0={v0}, v1={v1}) violates 0 < v0 < v1"
        )));
    }
    let hp_for = |v0: f64, v1: f64| BagusHyperparams {
        v0,
        v1,
        tau: tau_rule.tau(v0),
        ..base.clone()
    };
    let cells: Vec<TuneCell> = grid
        .par_iter()
        .map(|&(v0, v1)| match score(&hp_for(v0, v1)) {
            Ok(b) => TuneCell { v0, v1, bic: Some(b), error: None },
            Err(e) => {
                log::warn!("tuning cell v0={v0} v1={v1} failed: {e}");
                TuneCell { v0, v1, bic: None, error: Some(e.to_string()) }
            }
        })
        .collect();
    let best = cells
        .iter()
        .filter(|c| c.bic.is_some())
        .min_by(|a, b| rank(a, b))
        .ok_or(PrecisError::AllCellsFailed)?;
    Ok(TuneOutcome {
        best: hp_for(best.v0, best.v1),
        best_bic: best.bic.unwrap_or(f64::NAN),
        cells,
    })
}

/// Grid search for a plain fit on `input`, each cell started from
/// [`default_init`].
pub fn tune(
    input: &FitInput,
    grid: &[(f64, f64)],
    base: &BagusHyperparams,
    tau_rule: TauRule,
) -> Result<TuneOutcome> {
    let init = default_init(&input.s)?;
    tune_with(grid, base, tau_rule, |hp| {
        let est = fit_bagus_lenient(input, hp, &init)?;
        bic(&input.s, &est.omega, &est.inclusion_prob, input.n)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymMatrix;

    fn base() -> BagusHyperparams {
        BagusHyperparams::with_scales(0.1, 1.0)
    }

    #[test]
    fn single_cell() {
        let out = tune_with(&[(0.2, 2.0)], &base(), TauRule::EqualV0, |_| Ok(3.0)).unwrap();
        assert_eq!((out.best.v0, out.best.v1, out.best.tau), (0.2, 2.0, 0.2));
    }

    #[test]
    fn ties_prefer_stronger_shrinkage() {
        let grid = [(0.1, 1.0), (0.2, 1.0), (0.2, 3.0), (0.05, 5.0)];
        let out = tune_with(&grid, &base(), TauRule::Fixed(0.5), |_| Ok(1.0)).unwrap();
        assert_eq!((out.best.v0, out.best.v1), (0.2, 3.0));
        assert_eq!(out.best.tau, 0.5);
    }

    #[test]
    fn failing_cells_are_skipped() {
        let grid = [(0.1, 1.0), (0.2, 1.0)];
        let out = tune_with(&grid, &base(), TauRule::EqualV0, |hp| {
            if hp.v0 == 0.2 {
                Err(PrecisError::InvalidInput("boom".into()))
            } else {
                Ok(5.0)
            }
        })
        .unwrap();
        assert_eq!(out.best.v0, 0.1);
        assert!(out.cells[1].error.is_some());

        let all_bad = tune_with(&grid, &base(), TauRule::EqualV0, |_| {
            Err(PrecisError::InvalidInput("boom".into()))
        });
        assert!(matches!(all_bad, Err(PrecisError::AllCellsFailed)));
    }

    #[test]
    fn rejects_bad_grid() {
        assert!(tune_with(&[], &base(), TauRule::EqualV0, |_| Ok(0.0)).is_err());
        assert!(tune_with(&[(1.0, 0.5)], &base(), TauRule::EqualV0, |_| Ok(0.0)).is_err());
    }

    #[test]
    fn duplicate_cells_score_identically() {
        let s = SymMatrix::from_rows(&[
            vec![1.0, 0.3, 0.0],
            vec![0.3, 1.0, 0.2],
            vec![0.0, 0.2, 1.0],
        ])
        .unwrap();
        let input = FitInput::new(s, 50).unwrap();
        let out = tune(&input, &[(0.05, 1.0), (0.05, 1.0)], &base(), TauRule::EqualV0).unwrap();
        assert_eq!(out.cells[0].bic, out.cells[1].bic);
        assert!(out.cells[0].bic.unwrap().is_finite());
    }
}
