//! Column-wise block coordinate descent for the weighted graphical-lasso
//! M-step.
//!
//! For column `j`, write `Ω₁₁` for the block without row/column `j`, `ω₁₂`
//! for the off-diagonal column, and `c = ω₂₂ − ω₁₂ᵀ Ω₁₁⁻¹ ω₁₂` for the Schur
//! complement. With `Ω₁₁` held fixed the M-step objective separates into
//!
//! ```text
//!   (n/2)(s₂₂ + 2τ/n) c − (n/2) log c
//! + ½ a ω₁₂ᵀ Ω₁₁⁻¹ ω₁₂ + n s₁₂ᵀ ω₁₂ + Σ_k d_k |ω₁₂,k|,    a = n s₂₂ + 2τ
//! ```
//!
//! so `c = 1/(s₂₂ + 2τ/n)` in closed form and `ω₁₂` is a weighted lasso solved
//! by cyclic soft-thresholding. Off-diagonals are boxed to `[−B, B]`; when the
//! diagonal would exceed `B` the column is re-solved with the KKT multiplier of
//! `ω₂₂ ≤ B` folded into `τ`. `Ω₁₁⁻¹ = Σ₁₁ − σ₁₂σ₁₂ᵀ/σ₂₂` comes from the
//! running covariance `Σ = Ω⁻¹`, which is rank-updated after every column and
//! refactorized at the start of each sweep.

use crate::bagus::{FitInput, PenaltyWeights};
use crate::error::{dim_mismatch, Result};
use crate::linalg::SymMatrix;
use crate::model::BagusHyperparams;

const MAX_LASSO_PASSES: usize = 1000;

/// The M-step's convex surrogate:
/// `(n/2)(tr(SΩ) − logdet Ω) + Σ_{i<j} d_ij |ω_ij| + τ Σ ω_ii`.
pub fn surrogate_objective(
    omega: &SymMatrix,
    input: &FitInput,
    weights: &PenaltyWeights,
    tau: f64,
) -> Result<f64> {
    let d = omega.dim();
    let logdet = omega.log_det()?;
    let mut pen = 0.0;
    for i in 0..d {
        for j in (i + 1)..d {
            pen += weights.get(i, j) * omega.get(i, j).abs();
        }
    }
    let n = input.n as f64;
    Ok(0.5 * n * (input.s.trace_product(omega) - logdet) + pen + tau * omega.trace())
}

#[inline]
fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Minimizes the surrogate from `omega_init`, sweeping columns `0..d` until the
/// largest entrywise change in a sweep drops below `hp.em_tol` or
/// `hp.max_sweeps` sweeps have run.
pub fn mstep(
    input: &FitInput,
    weights: &PenaltyWeights,
    omega_init: &SymMatrix,
    hp: &BagusHyperparams,
) -> Result<SymMatrix> {
    let d = input.dim();
    if omega_init.dim() != d || weights.0.dim() != d {
        return Err(dim_mismatch("M-step inputs", d, omega_init.dim()));
    }
    let mut state = ColumnState::new(omega_init.clone(), input, hp)?;
    for sweep in 0..hp.max_sweeps {
        if sweep > 0 {
            state.refresh_covariance()?;
        }
        let mut change = 0.0_f64;
        for j in 0..d {
            change = change.max(state.update_column(j, weights));
        }
        if change < hp.em_tol {
            break;
        }
    }
    // catches drift in the rank-updated covariance as well as genuine failures
    state.omega.cholesky()?;
    Ok(state.omega)
}

struct ColumnState<'a> {
    omega: SymMatrix,
    sigma: Vec<f64>,
    input: &'a FitInput,
    hp: &'a BagusHyperparams,
    inner_tol: f64,
    // scratch
    a: Vec<f64>,
    x: Vec<f64>,
    v: Vec<f64>,
    idx: Vec<usize>,
}

impl<'a> ColumnState<'a> {
    fn new(omega: SymMatrix, input: &'a FitInput, hp: &'a BagusHyperparams) -> Result<Self> {
        let d = omega.dim();
        let sigma = omega.inverse()?.as_slice().to_vec();
        Ok(ColumnState {
            omega,
            sigma,
            input,
            hp,
            inner_tol: (hp.em_tol * 1e-2).min(1e-12),
            a: vec![0.0; d * d],
            x: vec![0.0; d],
            v: vec![0.0; d],
            idx: Vec::with_capacity(d),
        })
    }

    fn refresh_covariance(&mut self) -> Result<()> {
        self.sigma = self.omega.inverse()?.as_slice().to_vec();
        Ok(())
    }

    /// Cyclic soft-thresholding for `min ½ quad·xᵀAx + n s₁₂ᵀx + Σ d_k|x_k|`
    /// with `|x_k| ≤ B`, warm-started from `self.x` (`self.v = A x` on entry and
    /// exit). Returns `xᵀAx`.
    fn solve_lasso(&mut self, j: usize, quad: f64, weights: &PenaltyWeights) -> f64 {
        let m = self.idx.len();
        let n = self.input.n as f64;
        let s = &self.input.s;
        let bound = self.hp.spec_b;
        for _ in 0..MAX_LASSO_PASSES {
            let mut max_step = 0.0_f64;
            for r in 0..m {
                let k = self.idx[r];
                let arr = self.a[r * m + r];
                let lin = quad * (self.v[r] - arr * self.x[r]) + n * s.get(k, j);
                let new =
                    (-soft_threshold(lin, weights.get(k, j)) / (quad * arr)).clamp(-bound, bound);
                let delta = new - self.x[r];
                if delta != 0.0 {
                    for c in 0..m {
                        self.v[c] += self.a[c * m + r] * delta;
                    }
                    self.x[r] = new;
                    max_step = max_step.max(delta.abs());
                }
            }
            if max_step < self.inner_tol {
                break;
            }
        }
        (0..m).map(|r| self.x[r] * self.v[r]).sum()
    }

    /// Updates column `j` and returns the largest change among its entries.
    fn update_column(&mut self, j: usize, weights: &PenaltyWeights) -> f64 {
        let d = self.omega.dim();
        let n = self.input.n as f64;
        let s = &self.input.s;
        let tau = self.hp.tau;
        let bound = self.hp.spec_b;

        self.idx.clear();
        self.idx.extend((0..d).filter(|&k| k != j));
        let m = d - 1;
        let sig_jj = self.sigma[j * d + j];

        // A = Ω₁₁⁻¹
        for (r, &kr) in self.idx.iter().enumerate() {
            let skr = self.sigma[kr * d + j];
            for (c, &kc) in self.idx.iter().enumerate().skip(r) {
                let val = self.sigma[kr * d + kc] - skr * self.sigma[kc * d + j] / sig_jj;
                self.a[r * m + c] = val;
                self.a[c * m + r] = val;
            }
        }

        for (r, &k) in self.idx.iter().enumerate() {
            self.x[r] = self.omega.get(k, j).clamp(-bound, bound);
        }
        for r in 0..m {
            self.v[r] = (0..m).map(|c| self.a[r * m + c] * self.x[c]).sum();
        }

        let quad = n * s.get(j, j) + 2.0 * tau;
        let mut q = self.solve_lasso(j, quad, weights);
        let mut c = n / quad;
        if c + q > bound {
            // Ω₂₂ = c + q ≤ B is active. A multiplier μ on it acts like a larger
            // diagonal rate (τ + μ); bisect for the μ that lands on the boundary.
            let at = |this: &mut Self, mu: f64| {
                let qd = quad + 2.0 * mu;
                let qq = this.solve_lasso(j, qd, weights);
                (n / qd, qq)
            };
            let mut lo = 0.0;
            let mut hi = quad.max(1.0);
            loop {
                let (cc, qq) = at(self, hi);
                if cc + qq <= bound {
                    break;
                }
                lo = hi;
                hi *= 2.0;
            }
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                let (cc, qq) = at(self, mid);
                if cc + qq > bound {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-13 * hi {
                    break;
                }
            }
            let (cc, qq) = at(self, hi);
            q = qq;
            // the warm-started re-solve can overshoot by rounding; land exactly on B
            c = if cc + qq > bound && qq < bound { bound - qq } else { cc };
        }

        let mut change = 0.0_f64;
        for (r, &k) in self.idx.iter().enumerate() {
            change = change.max((self.omega.get(k, j) - self.x[r]).abs());
            self.omega.set(k, j, self.x[r]);
        }
        let new_diag = c + q;
        change = change.max((self.omega.get(j, j) - new_diag).abs());
        self.omega.set(j, j, new_diag);

        // Σ from the block inverse of the updated column.
        let inv_c = 1.0 / c;
        self.sigma[j * d + j] = inv_c;
        for (r, &kr) in self.idx.iter().enumerate() {
            let val = -self.v[r] * inv_c;
            self.sigma[kr * d + j] = val;
            self.sigma[j * d + kr] = val;
            for (cc, &kc) in self.idx.iter().enumerate() {
                self.sigma[kr * d + kc] = self.a[r * m + cc] + self.v[r] * self.v[cc] * inv_c;
            }
        }
        change
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bagus::estep;

    fn weights_const(d: usize, w: f64, tau: f64) -> PenaltyWeights {
        PenaltyWeights(SymMatrix::from_fn(d, |i, j| if i == j { tau } else { w }))
    }

    fn s3() -> SymMatrix {
        SymMatrix::from_rows(&[
            vec![1.2, 0.4, -0.1],
            vec![0.4, 0.9, 0.3],
            vec![-0.1, 0.3, 1.1],
        ])
        .unwrap()
    }

    #[test]
    fn total_shrinkage_gives_diagonal_solution() {
        let hp = BagusHyperparams::with_scales(0.1, 1.0);
        let input = FitInput::new(s3(), 40).unwrap();
        let w = weights_const(3, 1e12, hp.tau);
        let out = mstep(&input, &w, &SymMatrix::identity(3), &hp).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(out.get(i, j), 0.0);
                }
            }
            let want = 1.0 / (input.s.get(i, i) + 2.0 * hp.tau / 40.0);
            assert!((out.get(i, i) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn objective_does_not_increase() {
        let hp = BagusHyperparams::with_scales(0.05, 1.0);
        let input = FitInput::new(s3(), 30).unwrap();
        let init = input.s.inverse().unwrap();
        let (_, w) = estep(&init, &hp);
        let before = surrogate_objective(&init, &input, &w, hp.tau).unwrap();
        let out = mstep(&input, &w, &init, &hp).unwrap();
        let after = surrogate_objective(&out, &input, &w, hp.tau).unwrap();
        assert!(after <= before + 1e-8, "{after} > {before}");
        assert!(out.is_positive_definite());
    }

    #[test]
    fn fixed_point_is_stable() {
        let mut hp = BagusHyperparams::with_scales(0.05, 1.0);
        hp.em_tol = 1e-10;
        let input = FitInput::new(s3(), 30).unwrap();
        let w = weights_const(3, 2.0, hp.tau);
        let opt = mstep(&input, &w, &SymMatrix::identity(3), &hp).unwrap();
        let hp_default = BagusHyperparams::with_scales(0.05, 1.0);
        let again = mstep(&input, &w, &opt, &hp_default).unwrap();
        assert!(again.max_abs_diff(&opt) < hp_default.em_tol);
    }

    #[test]
    fn entries_respect_bound() {
        let mut hp = BagusHyperparams::with_scales(0.5, 5.0);
        hp.spec_b = 1.5;
        // nearly collinear data push the unconstrained solution far past B
        let s = SymMatrix::from_rows(&[vec![1.0, 0.95], vec![0.95, 1.0]]).unwrap();
        let input = FitInput::new(s, 200).unwrap();
        let w = weights_const(2, 0.1, hp.tau);
        let out = mstep(&input, &w, &SymMatrix::identity(2), &hp).unwrap();
        assert!(out.max_abs() <= hp.spec_b + 1e-12, "{out:?}");
        assert!(out.is_positive_definite());
    }

    #[test]
    fn one_dimensional_problem() {
        let hp = BagusHyperparams::with_scales(0.1, 1.0);
        let input = FitInput::new(SymMatrix::from_diag(&[2.0]), 10).unwrap();
        let w = weights_const(1, 0.0, hp.tau);
        let out = mstep(&input, &w, &SymMatrix::identity(1), &hp).unwrap();
        assert!((out.get(0, 0) - 1.0 / (2.0 + 0.02)).abs() < 1e-14);
    }
}
