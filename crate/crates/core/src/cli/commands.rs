use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::Manifest;
use super::{EvaluateArgs, ExperimentArgs, FitArgs, FitMethod, PrepArgs, PriorArgs, SimulateArgs, Status, TuneArgs};
use crate::bagus::{self, bic, default_grid, default_init, fit_bagus, tune_with, FitInput, TauRule};
use crate::error::{PrecisError, Result};
use crate::ingest::{apply_filters, estimate_sigma_u, standardize, ExpressionTable, FilterConfig, FilterCounts, IntensityFilter};
use crate::io::{read_dataset_csv, read_matrix_csv, read_sigma_u, write_dataset_csv, write_json, write_matrix_csv, write_vector_csv};
use crate::iro::{corrected_bic, run_iro, select_edges, IroConfig};
use crate::metrics::evaluate as score;
use crate::model::{sample_covariance, Adjacency, BagusHyperparams, Dataset, MeasurementErrorModel, PrecisionEstimate};
use crate::simgen::{
    contaminate, gen_precision, replicate_data, run_cell, sample_mvn, ArmSummary, CellReport, ExperimentSettings,
    GraphSpec, HubStyle, Method, ReplicateRecord, SimCell, Structure, Tuning,
};

fn prepare_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn invalid(msg: impl Into<String>) -> PrecisError {
    PrecisError::InvalidInput(msg.into())
}

pub fn simulate(a: SimulateArgs) -> Result<Status> {
    if !(a.gamma > 0.0) || !a.gamma.is_finite() {
        return Err(invalid(format!(
            "--gamma must be positive (got {}); for error-free data fit with `--method naive`",
            a.gamma
        )));
    }
    if a.n < 2 {
        return Err(invalid("--n must be at least 2"));
    }
    let spec = GraphSpec {
        structure: a.structure.into(),
        d: a.d,
        edge_probability: a.edge_probability,
        group_size: a.group_size,
        hub_style: a.hub_style.into(),
    };
    spec.validate()?;
    let manifest = Manifest::start("simulate", &a, Some(a.seed), &[])?;
    let (omega, truth) = gen_precision(&spec, a.seed)?;
    let sigma = omega.inverse()?;
    let x = sample_mvn(a.n, &sigma, a.seed)?;
    let c = contaminate(&x, &sigma.diag(), a.gamma, a.seed)?;

    prepare_out_dir(&a.out_dir)?;
    write_dataset_csv(&a.out_dir.join("w.csv"), &c.w, None)?;
    write_dataset_csv(&a.out_dir.join("x.csv"), &x, None)?;
    write_matrix_csv(&a.out_dir.join("omega_true.csv"), &omega)?;
    write_vector_csv(&a.out_dir.join("sigma_u.csv"), c.me.variances())?;
    println!("{} true edges, d = {}, n = {}", truth.edge_count(), a.d, a.n);
    manifest.finish(&a.out_dir, &["w.csv", "x.csv", "omega_true.csv", "sigma_u.csv"])?;
    Ok(Status::Ok)
}

fn base_hp(v0: f64, v1: f64, tau: Option<f64>, p: &PriorArgs) -> BagusHyperparams {
    BagusHyperparams {
        eta: p.eta,
        tau: tau.unwrap_or(v0),
        spec_b: p.b,
        em_tol: p.em_tol,
        em_max_iter: p.em_max_iter,
        ..BagusHyperparams::with_scales(v0, v1)
    }
}

fn iro_config(hp: BagusHyperparams, a: &super::IroArgs) -> IroConfig {
    IroConfig {
        iterations: a.iterations,
        burn_in_fraction: a.burn_in,
        seed: a.seed,
        hp,
    }
}

fn load_sigma_u(method: FitMethod, path: Option<&Path>, w: &Dataset) -> Result<Option<MeasurementErrorModel>> {
    match (method, path) {
        (FitMethod::Naive, _) => Ok(None),
        (FitMethod::Corrected, None) => Err(invalid("--sigma-u is required for the corrected method")),
        (FitMethod::Corrected, Some(p)) => {
            let me = read_sigma_u(p)?;
            if me.dim() != w.d() {
                return Err(PrecisError::DimensionMismatch(format!(
                    "{} has {} error variances for {} columns",
                    p.display(),
                    me.dim(),
                    w.d()
                )));
            }
            me.check_positive()?;
            Ok(Some(me))
        }
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct EmRun {
    em_iterations: usize,
    converged: bool,
    objective_trace: Vec<f64>,
}

impl From<&PrecisionEstimate> for EmRun {
    fn from(e: &PrecisionEstimate) -> Self {
        EmRun {
            em_iterations: e.iterations,
            converged: e.converged,
            objective_trace: e.objective_trace.clone(),
        }
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct FitTrace {
    method: FitMethod,
    converged: bool,
    selected_edges: usize,
    bic: f64,
    hyperparameters: BagusHyperparams,
    /// The naive fit, or the naive fit that seeds the corrected chain.
    initial: EmRun,
    #[serde(skip_serializing_if = "Option::is_none")]
    burn_in_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    non_converged_iterations: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    per_iteration: Option<Vec<EmRun>>,
}

pub fn fit(a: FitArgs) -> Result<Status> {
    let hp = base_hp(a.v0, a.v1, a.tau, &a.prior);
    hp.validate()?;
    let (_, w) = read_dataset_csv(&a.data)?;
    let me = load_sigma_u(a.method, a.sigma_u.as_deref(), &w)?;
    let mut inputs = vec![a.data.as_path()];
    inputs.extend(a.sigma_u.as_deref());
    let seed = (a.method == FitMethod::Corrected).then_some(a.iro.seed);
    let manifest = Manifest::start("fit", &a, seed, &inputs)?;

    let (estimate, trace) = match &me {
        None => {
            let s = sample_covariance(&w)?;
            let input = FitInput::new(s, w.n())?;
            let est = match fit_bagus(&input, &hp, &default_init(&input.s)?) {
                Ok(e) => e,
                Err(PrecisError::NonConvergence { best, .. }) => *best,
                Err(e) => return Err(e),
            };
            let trace = FitTrace {
                method: a.method,
                converged: est.converged,
                selected_edges: select_edges(&est.inclusion_prob, 0.5).edge_count(),
                bic: bic(&input.s, &est.omega, &est.inclusion_prob, w.n())?,
                hyperparameters: hp.clone(),
                initial: EmRun::from(&est),
                burn_in_count: None,
                non_converged_iterations: None,
                per_iteration: None,
            };
            (est, trace)
        }
        Some(me) => {
            let cfg = iro_config(hp.clone(), &a.iro);
            let run = run_iro(&w, me, &cfg)?;
            let converged = run.initial.converged && run.non_converged.is_empty();
            let trace = FitTrace {
                method: a.method,
                converged,
                selected_edges: select_edges(&run.averaged.inclusion_prob, 0.5).edge_count(),
                bic: corrected_bic(&w, me, &run.averaged)?,
                hyperparameters: hp.clone(),
                initial: EmRun::from(&run.initial),
                burn_in_count: Some(run.burn_in_count),
                non_converged_iterations: Some(run.non_converged.clone()),
                per_iteration: Some(run.per_iteration.iter().map(EmRun::from).collect()),
            };
            (run.averaged, trace)
        }
    };

    prepare_out_dir(&a.out_dir)?;
    write_matrix_csv(&a.out_dir.join("omega_hat.csv"), &estimate.omega)?;
    write_matrix_csv(&a.out_dir.join("p_hat.csv"), &estimate.inclusion_prob)?;
    write_json(&a.out_dir.join("trace.json"), &trace)?;
    manifest.finish(&a.out_dir, &["omega_hat.csv", "p_hat.csv", "trace.json"])?;
    Ok(if trace.converged { Status::Ok } else { Status::NotConverged })
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct TuneReport {
    method: FitMethod,
    best: BestCell,
    cells: Vec<bagus::TuneCell>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct BestCell {
    v0: f64,
    v1: f64,
    tau: f64,
    bic: f64,
}

pub fn tune(a: TuneArgs) -> Result<Status> {
    let (_, w) = read_dataset_csv(&a.data)?;
    let grid = match (&a.v0_grid, &a.v1_grid) {
        (Some(v0s), Some(v1s)) => v0s.iter().flat_map(|&v0| v1s.iter().map(move |&v1| (v0, v1))).collect(),
        (None, None) => default_grid(w.n(), w.d()),
        _ => return Err(invalid("--v0-grid and --v1-grid must be given together")),
    };
    let me = load_sigma_u(a.method, a.sigma_u.as_deref(), &w)?;
    let mut inputs = vec![a.data.as_path()];
    inputs.extend(a.sigma_u.as_deref());
    let seed = (a.method == FitMethod::Corrected).then_some(a.iro.seed);
    let manifest = Manifest::start("tune", &a, seed, &inputs)?;
    // v0/v1 are overwritten per grid cell.
    let base = base_hp(1.0, 2.0, None, &a.prior);

    let outcome = match &me {
        None => {
            let input = FitInput::new(sample_covariance(&w)?, w.n())?;
            bagus::tune(&input, &grid, &base, TauRule::EqualV0)?
        }
        Some(me) => tune_with(&grid, &base, TauRule::EqualV0, |hp| {
            let run = run_iro(&w, me, &iro_config(hp.clone(), &a.iro))?;
            corrected_bic(&w, me, &run.averaged)
        })?,
    };
    let report = TuneReport {
        method: a.method,
        best: BestCell {
            v0: outcome.best.v0,
            v1: outcome.best.v1,
            tau: outcome.best.tau,
            bic: outcome.best_bic,
        },
        cells: outcome.cells,
    };
    prepare_out_dir(&a.out_dir)?;
    write_json(&a.out_dir.join("tune.json"), &report)?;
    manifest.finish(&a.out_dir, &["tune.json"])?;
    Ok(Status::Ok)
}

pub fn evaluate(a: EvaluateArgs) -> Result<Status> {
    let estimate = read_matrix_csv(&a.estimate)?;
    let inclusion = read_matrix_csv(&a.inclusion)?;
    let truth = read_matrix_csv(&a.truth)?;
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(invalid("--threshold must lie in [0, 1]"));
    }
    let manifest = Manifest::start("evaluate", &a, None, &[&a.estimate, &a.inclusion, &a.truth])?;
    let eval = score(&estimate, &inclusion, &truth, &Adjacency::from_support(&truth), a.threshold)?;
    prepare_out_dir(&a.out_dir)?;
    write_json(&a.out_dir.join("evaluation.json"), &eval)?;
    manifest.finish(&a.out_dir, &["evaluation.json"])?;
    Ok(Status::Ok)
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct PrepReport {
    input_features: usize,
    removed: FilterCounts,
    kept: Vec<String>,
    feature_means: Vec<f64>,
    feature_sds: Vec<f64>,
    sigma_u: Vec<f64>,
}

pub fn prep(a: PrepArgs) -> Result<Status> {
    let table = ExpressionTable::from_csv(&a.means, &a.variances, a.intensities.as_deref())?;
    let cfg = FilterConfig {
        intensity: (!a.no_intensity_filter).then_some(IntensityFilter {
            min_fraction: a.min_fraction,
            min_intensity: a.min_intensity,
        }),
        min_iqr: Some(a.min_iqr),
        max_noise_ratio: Some(a.max_noise_ratio),
    };
    let mut inputs = vec![a.means.as_path(), a.variances.as_path()];
    inputs.extend(a.intensities.as_deref());
    let manifest = Manifest::start("prep", &a, None, &inputs)?;

    let filtered = apply_filters(&table, &cfg)?;
    if filtered.kept.is_empty() {
        return Err(invalid("every feature was removed by the filters"));
    }
    let kept = table.select(&filtered.kept)?;
    let std = standardize(&kept)?;
    let me = estimate_sigma_u(&kept, &std.feature_sds)?;

    prepare_out_dir(&a.out_dir)?;
    write_dataset_csv(&a.out_dir.join("w.csv"), &std.w, Some(kept.feature_ids()))?;
    write_vector_csv(&a.out_dir.join("sigma_u.csv"), me.variances())?;
    let report = PrepReport {
        input_features: table.p(),
        removed: filtered.removed,
        kept: kept.feature_ids().to_vec(),
        feature_means: std.feature_means,
        feature_sds: std.feature_sds,
        sigma_u: me.variances().to_vec(),
    };
    write_json(&a.out_dir.join("prep.json"), &report)?;
    manifest.finish(&a.out_dir, &["w.csv", "sigma_u.csv", "prep.json"])?;
    Ok(Status::Ok)
}

/// One entry of the experiment config.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CellConfig {
    pub structure: Structure,
    pub d: usize,
    pub n: usize,
    pub gamma: f64,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_size: Option<usize>,
    #[serde(default)]
    pub hub_style: HubStyle,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_probability: Option<f64>,
    /// `(v0, v1)` pairs searched per arm; defaults to the rate-scaled grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<(f64, f64)>>,
    /// Fixed `(v0, v1)` for every arm, skipping the search.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<(f64, f64)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub cells: Vec<CellConfig>,
    #[serde(default = "all_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_iterations")]
    pub iro_iterations: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn all_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_iterations() -> usize {
    IroConfig::DEFAULT_ITERATIONS
}

fn default_burn_in() -> f64 {
    IroConfig::DEFAULT_BURN_IN
}

fn default_threshold() -> f64 {
    0.5
}

impl CellConfig {
    fn sim_cell(&self) -> SimCell {
        SimCell {
            graph: GraphSpec {
                structure: self.structure,
                d: self.d,
                edge_probability: self.edge_probability,
                group_size: self.group_size.unwrap_or(20),
                hub_style: self.hub_style,
            },
            n: self.n,
            gamma: self.gamma,
            seed: self.seed,
        }
    }

    fn settings(&self, cfg: &ExperimentConfig) -> ExperimentSettings {
        let tuning = match (&self.fixed, &self.grid) {
            (Some((v0, v1)), _) => Tuning::Fixed { v0: *v0, v1: *v1 },
            (None, Some(g)) => Tuning::PerArm { grid: g.clone() },
            (None, None) => Tuning::PerArm {
                grid: default_grid(self.n, self.d),
            },
        };
        ExperimentSettings {
            methods: cfg.methods.clone(),
            iro_iterations: cfg.iro_iterations,
            burn_in_fraction: cfg.burn_in,
            threshold: cfg.threshold,
            ..ExperimentSettings::new(self.replicates, tuning)
        }
    }
}

/// One row of the results table; columns follow the published table order.
#[derive(Serialize)]
struct TableRow {
    method: Method,
    #[serde(rename = "SEN")]
    sen: f64,
    #[serde(rename = "SPE")]
    spe: f64,
    #[serde(rename = "PRE")]
    pre: f64,
    #[serde(rename = "ACC")]
    acc: f64,
    #[serde(rename = "MCC")]
    mcc: f64,
    #[serde(rename = "FROB")]
    frob: f64,
    #[serde(rename = "AUC")]
    auc: Option<f64>,
    v0: f64,
    v1: f64,
    succeeded: usize,
    failed: usize,
}

impl From<&ArmSummary> for TableRow {
    fn from(a: &ArmSummary) -> Self {
        TableRow {
            method: a.method,
            sen: a.sen,
            spe: a.spe,
            pre: a.pre,
            acc: a.acc,
            mcc: a.mcc,
            frob: a.frob,
            auc: a.auc,
            v0: a.v0,
            v1: a.v1,
            succeeded: a.succeeded,
            failed: a.failed,
        }
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct CellResult {
    cell: CellConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    table: Vec<TableRow>,
    replicates: Vec<ReplicateRecord>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ResultsFile {
    columns: [&'static str; 7],
    cells: Vec<CellResult>,
}

const COLUMNS: [&str; 7] = ["SEN", "SPE", "PRE", "ACC", "MCC", "FROB", "AUC"];

fn dump_replicates(out_dir: &Path, k: usize, cell: &SimCell, replicates: usize) -> Result<()> {
    for r in 0..replicates {
        let dir = out_dir.join("replicates").join(format!("cell{k}_rep{r}"));
        fs::create_dir_all(&dir)?;
        let data = replicate_data(cell, r)?;
        write_dataset_csv(&dir.join("w.csv"), &data.contamination.w, None)?;
        write_dataset_csv(&dir.join("x.csv"), &data.x, None)?;
        write_matrix_csv(&dir.join("omega_true.csv"), &data.omega_true)?;
    }
    Ok(())
}

fn results_csv(cells: &[CellResult]) -> String {
    let mut out = String::from("cell,method,SEN,SPE,PRE,ACC,MCC,FROB,AUC\n");
    for (k, c) in cells.iter().enumerate() {
        for row in &c.table {
            let method = serde_json::to_value(row.method).ok().and_then(|v| v.as_str().map(String::from));
            let auc = row.auc.map(crate::io::format_num).unwrap_or_else(|| "NA".into());
            let nums: Vec<String> = [row.sen, row.spe, row.pre, row.acc, row.mcc, row.frob]
                .iter()
                .map(|v| crate::io::format_num(*v))
                .collect();
            out.push_str(&format!("{k},{},{},{auc}\n", method.unwrap_or_default(), nums.join(",")));
        }
    }
    out
}

pub fn experiment(a: ExperimentArgs) -> Result<Status> {
    let text = fs::read_to_string(&a.config)?;
    let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", a.config.display())))?;
    if cfg.cells.is_empty() {
        return Err(invalid("experiment config lists no cells"));
    }
    for c in &cfg.cells {
        c.sim_cell().validate()?;
        c.settings(&cfg).validate()?;
    }
    let manifest = Manifest::start("experiment", &serde_json::json!({ "args": &a, "config": &cfg }), cfg.cells.first().map(|c| c.seed), &[&a.config])?;

    let reports: Vec<Result<CellReport>> = cfg
        .cells
        .par_iter()
        .map(|c| run_cell(&c.sim_cell(), &c.settings(&cfg)))
        .collect();

    prepare_out_dir(&a.out_dir)?;
    let mut first_error = None;
    let mut cells = Vec::with_capacity(reports.len());
    for (c, report) in cfg.cells.iter().zip(reports) {
        match report {
            Ok(r) => cells.push(CellResult {
                cell: c.clone(),
                error: None,
                table: r.arms.iter().map(TableRow::from).collect(),
                replicates: r.replicates,
            }),
            Err(e) => {
                log::error!("cell failed: {e}");
                cells.push(CellResult {
                    cell: c.clone(),
                    error: Some(e.to_string()),
                    table: vec![],
                    replicates: vec![],
                });
                first_error.get_or_insert(e);
            }
        }
    }
    if a.dump_replicates {
        for (k, c) in cfg.cells.iter().enumerate() {
            dump_replicates(&a.out_dir, k, &c.sim_cell(), c.replicates)?;
        }
    }
    fs::write(a.out_dir.join("results.csv"), results_csv(&cells))?;
    write_json(&a.out_dir.join("results.json"), &ResultsFile { columns: COLUMNS, cells })?;
    manifest.finish(&a.out_dir, &["results.json", "results.csv"])?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(Status::Ok),
    }
}
