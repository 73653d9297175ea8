//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines print in order; exits non-zero if any criterion fails.

mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::Rng;

use common::{auc_gap, bic_direct, contaminated_precision_gap, imputation_moment_z, random_spd, rng, two_by_two_battery};
use precis::bagus::{bic, default_grid};
use precis::iro::{naive_fit, run_iro, IroConfig};
use precis::metrics::{classification_metrics, ConfusionCounts};
use precis::simgen::{
    contaminate, gen_precision, run_cell, sample_mvn, ExperimentSettings, GraphSpec, Method, SimCell, Tuning,
};
use precis::{BagusHyperparams, MeasurementErrorModel, SymMatrix};

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Hub d=50 (groups of 10), n=100, γ=0.25, 10 replicates, per-arm BIC tuning
/// on the default grid: corrected FROB at least 5% below naive and a higher AUC.
fn directional_benchmark() -> Outcome {
    let cell = SimCell { graph: GraphSpec::hub(50, 10), n: 100, gamma: 0.25, seed: 2024 };
    let mut settings = ExperimentSettings::new(10, Tuning::PerArm { grid: default_grid(100, 50) });
    settings.methods = vec![Method::Naive, Method::Corrected];
    let started = Instant::now();
    let report = run_cell(&cell, &settings).map_err(|e| e.to_string())?;
    let arm = |m| report.arms.iter().find(|a| a.method == m).expect("arm present");
    let (naive, corr) = (arm(Method::Naive), arm(Method::Corrected));
    let (na, ca) = (naive.auc.unwrap_or(f64::NAN), corr.auc.unwrap_or(f64::NAN));
    let detail = format!(
        "FROB corrected {:.3} vs naive {:.3} ({:.1}% lower), AUC {:.4} vs {:.4}, {}/{} replicates ok, {:.0}s",
        corr.frob,
        naive.frob,
        100.0 * (1.0 - corr.frob / naive.frob),
        ca,
        na,
        corr.succeeded.min(naive.succeeded),
        settings.replicates,
        started.elapsed().as_secs_f64()
    );
    ensure(corr.frob <= 0.95 * naive.frob && ca > na && corr.failed == 0 && naive.failed == 0, detail)
}

/// σ²_u = 1e-10 on hub d=10, n=100: the averaged corrected estimate matches
/// the plain fit on the same data.
fn no_error_limit() -> Outcome {
    let (omega, _) = gen_precision(&GraphSpec::hub(10, 5), 10).map_err(|e| e.to_string())?;
    let x = sample_mvn(100, &omega.inverse().unwrap(), 10).map_err(|e| e.to_string())?;
    let hp = BagusHyperparams::with_scales(1.0 / (100.0 * 10f64.ln()).sqrt(), 1.0);
    let plain = naive_fit(&x, &hp).map_err(|e| e.to_string())?;
    let me = MeasurementErrorModel::new(vec![1e-10; 10]).unwrap();
    let cfg = IroConfig { iterations: 20, ..IroConfig::new(hp, 1) };
    let trace = run_iro(&x, &me, &cfg).map_err(|e| e.to_string())?;
    let gap = trace.averaged.omega.max_abs_diff(&plain.omega);
    ensure(gap < 1e-2, format!("max entry gap {gap:.2e} (limit 1e-2)"))
}

fn contamination_identity() -> Outcome {
    let gap = contaminated_precision_gap(25, 77);
    ensure(gap < 1e-8, format!("25 cases, worst relative Frobenius gap {gap:.2e} (limit 1e-8)"))
}

/// The 2x2 battery against grid search, plus trace monotonicity. Every EM run
/// in a debug-assertion build also asserts monotonicity internally.
fn optimizer_oracle() -> Outcome {
    let out = two_by_two_battery();
    let runs = invariant_runs()?;
    let monotone = out.monotone && runs.monotone;
    ensure(
        out.worst_gap < 2e-3 && monotone,
        format!(
            "60 fits, worst coordinate gap {:.2e} (limit 2e-3); traces non-increasing in {} further EM runs: {}; suite-wide assertion {}",
            out.worst_gap,
            runs.em_runs,
            runs.monotone,
            if cfg!(debug_assertions) { "active" } else { "inactive (release build)" }
        ),
    )
}

struct InvariantRuns {
    averaged: usize,
    em_runs: usize,
    monotone: bool,
    pd_symmetric_bounded: bool,
    worst_entry_ratio: f64,
}

fn symmetric(m: &SymMatrix) -> bool {
    let d = m.dim();
    (0..d).all(|i| (0..d).all(|j| m.get(i, j) == m.get(j, i)))
}

/// IRO chains over a spread of graphs, noise levels, bounds and seeds; checks
/// every iterate and every average.
fn invariant_runs() -> Result<InvariantRuns, String> {
    let mut out = InvariantRuns { averaged: 0, em_runs: 0, monotone: true, pd_symmetric_bounded: true, worst_entry_ratio: 0.0 };
    let specs = [GraphSpec::hub(20, 10), GraphSpec::random(15), GraphSpec::hub(12, 4)];
    for (k, spec) in specs.iter().enumerate() {
        for (gamma, bound) in [(0.1, 10.0), (0.5, 10.0), (0.25, 2.0)] {
            let seed = 100 + k as u64;
            let (omega, _) = gen_precision(spec, seed).map_err(|e| e.to_string())?;
            let sigma = omega.inverse().unwrap();
            let x = sample_mvn(60, &sigma, seed).map_err(|e| e.to_string())?;
            let c = contaminate(&x, &sigma.diag(), gamma, seed).map_err(|e| e.to_string())?;
            let mut hp = BagusHyperparams::with_scales(0.05, 1.0);
            hp.spec_b = bound;
            let cfg = IroConfig { iterations: 10, ..IroConfig::new(hp, seed) };
            let trace = run_iro(&c.w, &c.me, &cfg).map_err(|e| e.to_string())?;
            for est in std::iter::once(&trace.initial).chain(&trace.per_iteration) {
                out.em_runs += 1;
                out.monotone &= est.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-8);
                out.pd_symmetric_bounded &= symmetric(&est.omega) && est.omega.max_abs() <= bound;
                out.worst_entry_ratio = out.worst_entry_ratio.max(est.omega.max_abs() / bound);
            }
            let avg = &trace.averaged.omega;
            out.averaged += 1;
            out.pd_symmetric_bounded &= avg.cholesky().is_ok() && symmetric(avg) && avg.max_abs() <= bound;
        }
    }
    Ok(out)
}

fn pd_symmetric_bounded() -> Outcome {
    let runs = invariant_runs()?;
    ensure(
        runs.pd_symmetric_bounded,
        format!(
            "{} averaged estimates PD, {} iterates symmetric, largest |ω|/B = {:.4}",
            runs.averaged, runs.em_runs, runs.worst_entry_ratio
        ),
    )
}

fn sampler_moments() -> Outcome {
    let z = imputation_moment_z(5, 200_000, 31);
    ensure(z < 4.0, format!("5 pairs x 200000 draws, largest |z| = {z:.2} (limit 4)"))
}

fn metric_oracles() -> Outcome {
    let m = classification_metrics(&ConfusionCounts { tp: 10, fp: 5, tn: 80, fn_: 5 });
    let auc = auc_gap(50, 6);
    let mut r = rng(3);
    let mut bic_gap = 0.0_f64;
    for _ in 0..10 {
        let s = random_spd(4, &mut r);
        let omega = random_spd(4, &mut r);
        let p = SymMatrix::from_fn(4, |_, _| r.gen_range(0.0..1.0));
        let n = r.gen_range(10..300);
        let got = bic(&s, &omega, &p, n).map_err(|e| e.to_string())?;
        let want = bic_direct(&s, &omega, &p, n);
        bic_gap = bic_gap.max((got - want).abs() / want.abs().max(1.0));
    }
    ensure(
        (m.mcc - 0.60784).abs() < 5e-6 && auc <= 1e-12 && bic_gap < 1e-10,
        format!("mcc {:.5}; AUC worst gap {auc:.1e} over 50 instances; BIC relative gap {bic_gap:.1e}", m.mcc),
    )
}

fn run_cli(dir: &Path, threads: &str, args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_precis"))
        .current_dir(dir)
        .env("PRECIS_THREADS", threads)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    match o.status.code() {
        Some(0) | Some(4) => Ok(()),
        c => Err(format!("{args:?} exited {c:?}: {}", String::from_utf8_lossy(&o.stderr))),
    }
}

/// Every file under `a` equals its twin under `b`; manifests are compared
/// with their timestamps removed.
fn same_tree(a: &Path, b: &Path) -> Result<usize, String> {
    let mut count = 0;
    for entry in fs::read_dir(a).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        let name = entry.file_name();
        let (pa, pb) = (entry.path(), b.join(&name));
        if pa.is_dir() {
            count += same_tree(&pa, &pb)?;
            continue;
        }
        let (ba, bb) = (fs::read(&pa).map_err(|e| e.to_string())?, fs::read(&pb).map_err(|e| format!("{}: {e}", pb.display()))?);
        let equal = if name == "manifest.json" {
            let strip = |bytes: &[u8]| {
                let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
                let obj = v.as_object_mut().unwrap();
                obj.remove("startedAt");
                obj.remove("finishedAt");
                v
            };
            strip(&ba) == strip(&bb)
        } else {
            ba == bb
        };
        if !equal {
            return Err(format!("{} differs", pa.display()));
        }
        count += 1;
    }
    Ok(count)
}

/// Runs simulate, a corrected fit and an experiment in a fresh directory.
fn cli_session(dir: &Path, threads: &str) -> Result<(), String> {
    run_cli(dir, threads, &["simulate", "--structure", "hub", "--d", "20", "--n", "80", "--gamma", "0.25", "--seed", "11", "--group-size", "10", "--out-dir", "sim"])?;
    run_cli(
        dir,
        threads,
        &["fit", "--data", "sim/w.csv", "--method", "corrected", "--sigma-u", "sim/sigma_u.csv", "--v0", "0.05", "--v1", "1", "--iterations", "10", "--seed", "3", "--out-dir", "fit"],
    )?;
    fs::write(
        dir.join("exp.json"),
        r#"{"cells": [{"structure": "hub", "d": 20, "n": 60, "gamma": 0.25, "replicates": 3, "seed": 5, "groupSize": 10, "fixed": [0.05, 1.0]},
                      {"structure": "random", "d": 15, "n": 60, "gamma": 0.5, "replicates": 2, "seed": 6}],
            "iroIterations": 8}"#,
    )
    .map_err(|e| e.to_string())?;
    run_cli(dir, threads, &["experiment", "--config", "exp.json", "--dump-replicates", "--out-dir", "exp"])
}

/// The same command lines in two directories, with different thread counts.
fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
    cli_session(a.path(), "1")?;
    cli_session(b.path(), "4")?;
    let files = same_tree(&a.path().join("fit"), &b.path().join("fit"))? + same_tree(&a.path().join("exp"), &b.path().join("exp"))?;
    Ok(format!("fit and experiment reruns (1 vs 4 threads): {files} files byte-identical, manifests equal up to timestamps"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("directional benchmark, hub d=50", directional_benchmark),
        ("no-error limit", no_error_limit),
        ("contaminated precision identity", contamination_identity),
        ("optimizer oracle and monotone traces", optimizer_oracle),
        ("PD, symmetric and bounded estimates", pd_symmetric_bounded),
        ("imputation sampler moments", sampler_moments),
        ("metric oracles", metric_oracles),
        ("CLI determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {}. {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name}: {detail}", k + 1);
            }
        }
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
