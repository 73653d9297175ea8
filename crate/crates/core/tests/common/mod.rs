//! Independent oracles shared by the integration tests. Nothing here calls the
//! optimizer or samplers under test.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use precis::SymMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random SPD matrix `G Gᵀ + δI`.
pub fn random_spd(d: usize, r: &mut ChaCha8Rng) -> SymMatrix {
    let g: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..d).map(|_| r.gen_range(-1.0..1.0)).collect())
        .collect();
    SymMatrix::from_fn(d, |i, j| {
        let v: f64 = (0..d).map(|k| g[i][k] * g[j][k]).sum();
        v + if i == j { 0.5 } else { 0.0 }
    })
}

/// Plain Gauss-Jordan inverse with partial pivoting.
pub fn gauss_jordan_inverse(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = m.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..d).map(|k| if k == i { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..d {
        let piv = (col..d)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        a.swap(col, piv);
        let p = a[col][col];
        for v in a[col].iter_mut() {
            *v /= p;
        }
        for r in 0..d {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for c in 0..2 * d {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
    a.into_iter().map(|r| r[d..].to_vec()).collect()
}

/// Minimizes a convex function of `(a, c)` on a box by repeated grid zooming.
fn zoom_2d(f: &dyn Fn(f64, f64) -> f64, mut lo: [f64; 2], mut hi: [f64; 2]) -> (f64, f64, f64) {
    const K: usize = 17;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for _ in 0..20 {
        let step = [(hi[0] - lo[0]) / (K - 1) as f64, (hi[1] - lo[1]) / (K - 1) as f64];
        for i in 0..K {
            let a = lo[0] + step[0] * i as f64;
            for j in 0..K {
                let c = lo[1] + step[1] * j as f64;
                let v = f(a, c);
                if v < best.0 {
                    best = (v, a, c);
                }
            }
        }
        lo = [(best.1 - 2.0 * step[0]).max(lo[0]), (best.2 - 2.0 * step[1]).max(lo[1])];
        hi = [(best.1 + 2.0 * step[0]).min(hi[0]), (best.2 + 2.0 * step[1]).min(hi[1])];
    }
    best
}

/// Dense grid-search minimizer of `f(ω11, ω12, ω22)` over
/// `0 < ω11, ω22 ≤ bound`, `|ω12| ≤ bound`, with `f = ∞` off the PD cone.
///
/// The off-diagonal is scanned on a fine grid (each point profiled over the
/// diagonal by a 2-D zoom, which is convex for fixed `ω12`), then refined
/// around the best scan point.
pub fn grid_map_2x2(f: &dyn Fn(f64, f64, f64) -> f64, bound: f64) -> [f64; 3] {
    let profile = |b: f64| {
        let g = |a: f64, c: f64| {
            if a <= 0.0 || c <= 0.0 || a * c - b * b <= 0.0 {
                f64::INFINITY
            } else {
                f(a, b, c)
            }
        };
        zoom_2d(&g, [1e-9, 1e-9], [bound, bound])
    };
    const SCAN: usize = 401;
    let span = bound.min(6.0);
    let mut best = (f64::INFINITY, 0.0, 0.0, 0.0);
    for i in 0..SCAN {
        let b = -span + 2.0 * span * i as f64 / (SCAN - 1) as f64;
        let (v, a, c) = profile(b);
        if v < best.0 {
            best = (v, a, b, c);
        }
    }
    let mut half = 2.0 * span / (SCAN - 1) as f64;
    for _ in 0..16 {
        let center = best.2;
        for k in 0..=20 {
            let b = center - half + half * k as f64 / 10.0;
            let (v, a, c) = profile(b);
            if v < best.0 {
                best = (v, a, b, c);
            }
        }
        half /= 4.0;
    }
    [best.1, best.2, best.3]
}

/// Pairwise AUC: `(concordant + ½ ties) / (positives · negatives)`.
pub fn brute_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &p in pos {
        for &q in neg {
            if p > q {
                acc += 1.0;
            } else if p == q {
                acc += 0.5;
            }
        }
    }
    acc / (pos.len() * neg.len()) as f64
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn det(m: &[Vec<f64>]) -> f64 {
    let d = m.len();
    let mut a = m.to_vec();
    let mut det = 1.0;
    for col in 0..d {
        let piv = (col..d)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        if piv != col {
            a.swap(col, piv);
            det = -det;
        }
        let p = a[col][col];
        det *= p;
        for r in (col + 1)..d {
            let f = a[r][col] / p;
            for c in col..d {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    det
}

/// `n(tr(SΩ) − ln det Ω) + ln(n)·#{i<j : p_ij ≥ ½}` from plain loops.
pub fn bic_direct(s: &SymMatrix, omega: &SymMatrix, p: &SymMatrix, n: usize) -> f64 {
    let d = s.dim();
    let mut tr = 0.0;
    for i in 0..d {
        for j in 0..d {
            tr += s.get(i, j) * omega.get(j, i);
        }
    }
    let mut q = 0;
    for i in 0..d {
        for j in (i + 1)..d {
            if p.get(i, j) >= 0.5 {
                q += 1;
            }
        }
    }
    let n = n as f64;
    n * (tr - det(&omega.to_rows()).ln()) + n.ln() * q as f64
}

/// Worst relative Frobenius gap between `contaminated_precision` and
/// `(Ω_x⁻¹ + Σ_u)⁻¹` by Gauss-Jordan, over `cases` random problems with
/// `d ∈ {2, …, 6}`.
pub fn contaminated_precision_gap(cases: usize, seed: u64) -> f64 {
    use precis::model::contaminated_precision;
    use precis::MeasurementErrorModel;
    let mut r = rng(seed);
    let mut worst = 0.0_f64;
    for _ in 0..cases {
        let d = r.gen_range(2..=6);
        let omega = random_spd(d, &mut r);
        let su: Vec<f64> = (0..d).map(|_| r.gen_range(0.01..2.0)).collect();
        let mut sigma = gauss_jordan_inverse(&omega.to_rows());
        for (i, row) in sigma.iter_mut().enumerate() {
            row[i] += su[i];
        }
        let want = gauss_jordan_inverse(&sigma);
        let got = contaminated_precision(&omega, &MeasurementErrorModel::new(su).unwrap()).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..d {
            for j in 0..d {
                num += (got.get(i, j) - want[i][j]).powi(2);
                den += want[i][j].powi(2);
            }
        }
        worst = worst.max((num / den).sqrt());
    }
    worst
}

/// Worst gap between `auc` and brute-force pair counting over random
/// instances with 10 or 15 scored pairs (scores rounded to force ties).
pub fn auc_gap(instances: usize, seed: u64) -> f64 {
    use precis::metrics::auc;
    use precis::Adjacency;
    let mut r = rng(seed);
    let mut worst = 0.0_f64;
    let mut done = 0;
    while done < instances {
        let d = if r.gen_bool(0.5) { 5 } else { 6 };
        let mut table = vec![vec![1.0; d]; d];
        for i in 0..d {
            for j in (i + 1)..d {
                let v = r.gen_range(0..10) as f64 / 10.0;
                table[i][j] = v;
                table[j][i] = v;
            }
        }
        let scores = SymMatrix::from_rows(&table).unwrap();
        let mut truth = Adjacency::empty(d);
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for i in 0..d {
            for j in (i + 1)..d {
                if r.gen_bool(0.4) {
                    truth.insert(i, j);
                    pos.push(scores.get(i, j));
                } else {
                    neg.push(scores.get(i, j));
                }
            }
        }
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        worst = worst.max((auc(&scores, &truth).unwrap() - brute_auc(&pos, &neg)).abs());
        done += 1;
    }
    worst
}

/// Largest |z| over the mean and covariance entries of 200k conditional
/// draws of `x | w` for `pairs` random `(Ω_x, Σ_u)` at `d = 3`, against
/// `Λ⁻¹Ω_u w` and `Λ⁻¹` computed by Gauss-Jordan.
pub fn imputation_moment_z(pairs: usize, draws: usize, seed: u64) -> f64 {
    use precis::iro::{impute_latent, ImputeStream};
    use precis::{Dataset, MeasurementErrorModel};
    let d = 3;
    let mut r = rng(seed);
    let mut worst = 0.0_f64;
    for pair in 0..pairs {
        let omega = random_spd(d, &mut r);
        let su: Vec<f64> = (0..d).map(|_| r.gen_range(0.1..1.5)).collect();
        let w_row: Vec<f64> = (0..d).map(|_| r.gen_range(-2.0..2.0)).collect();
        let lambda: Vec<Vec<f64>> = (0..d)
            .map(|i| (0..d).map(|j| omega.get(i, j) + if i == j { 1.0 / su[i] } else { 0.0 }).collect())
            .collect();
        let cov = gauss_jordan_inverse(&lambda);
        let mean: Vec<f64> = (0..d).map(|i| (0..d).map(|j| cov[i][j] * w_row[j] / su[j]).sum()).collect();

        let w = Dataset::from_rows(&vec![w_row; draws]).unwrap();
        let me = MeasurementErrorModel::new(su).unwrap();
        let stream = ImputeStream { seed: seed + pair as u64, iteration: 1 };
        let x = impute_latent(&w, &omega, &me, stream).unwrap();

        let nf = draws as f64;
        for i in 0..d {
            let m = x.column(i).iter().sum::<f64>() / nf;
            worst = worst.max((m - mean[i]).abs() / (cov[i][i] / nf).sqrt());
        }
        for i in 0..d {
            for j in i..d {
                let c = x.rows().map(|row| (row[i] - mean[i]) * (row[j] - mean[j])).sum::<f64>() / nf;
                let se = ((cov[i][i] * cov[j][j] + cov[i][j] * cov[i][j]) / nf).sqrt();
                worst = worst.max((c - cov[i][j]).abs() / se);
            }
        }
    }
    worst
}

/// Random 2x2 sample covariance.
pub fn random_s2(r: &mut impl Rng) -> SymMatrix {
    let a: f64 = r.gen_range(0.5..2.0);
    let c: f64 = r.gen_range(0.5..2.0);
    let rho: f64 = r.gen_range(-0.8..0.8);
    SymMatrix::from_rows(&[vec![a, rho * (a * c).sqrt()], vec![rho * (a * c).sqrt(), c]]).unwrap()
}

pub struct BatteryOutcome {
    pub worst_gap: f64,
    pub monotone: bool,
    pub within_bound: bool,
}

/// Runs `fit_bagus` on 20 random 2x2 problems at three `(v0, v1)` levels and
/// compares each fit with the grid-search MAP.
///
/// With entries bounded by `B`, the spectral norm of a 2x2 iterate is at most
/// `2B`, so the log-det term has curvature at least `n/(2B)²` along `ω12`,
/// which dominates the largest concavity of the mixture penalty,
/// `(1/v0 − 1/v1)²/4`; the MAP is then unique.
pub fn two_by_two_battery() -> BatteryOutcome {
    use precis::bagus::{fit_bagus, objective, FitInput};
    use precis::BagusHyperparams;
    let levels = [(0.2, 2.0), (0.3, 3.0), (0.5, 5.0)];
    let bound = 2.0;
    let mut r = rng(2024);
    let mut out = BatteryOutcome { worst_gap: 0.0, monotone: true, within_bound: true };
    for _ in 0..20 {
        let s = random_s2(&mut r);
        let n = r.gen_range(90..200);
        let input = FitInput::new(s.clone(), n).unwrap();
        for &(v0, v1) in &levels {
            let concavity = (1.0 / v0 - 1.0 / v1) * (1.0 / v0 - 1.0 / v1) / 4.0;
            assert!(n as f64 / (2.0 * bound * 2.0 * bound) > concavity);
            let mut hp = BagusHyperparams::with_scales(v0, v1);
            hp.spec_b = bound;
            hp.em_tol = 1e-10;
            hp.em_max_iter = 5000;
            let est = fit_bagus(&input, &hp, &s.inverse().unwrap()).unwrap();
            out.monotone &= est.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-8);
            out.within_bound &= est.omega.max_abs() <= bound;
            let f = |a: f64, b: f64, c: f64| {
                let om = SymMatrix::from_rows(&[vec![a, b], vec![b, c]]).unwrap();
                objective(&om, &input, &hp).unwrap_or(f64::INFINITY)
            };
            let want = grid_map_2x2(&f, hp.spec_b);
            let got = [est.omega.get(0, 0), est.omega.get(0, 1), est.omega.get(1, 1)];
            for (g, o) in got.iter().zip(want) {
                out.worst_gap = out.worst_gap.max((g - o).abs());
            }
        }
    }
    out
}
