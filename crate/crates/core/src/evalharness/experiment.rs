//! Scenario orchestration: simulate, recover, score, and write CSV/JSON artifacts.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ingest::{ingest_triplets, IngestOptions};
use super::metrics::{average, fit_log_slope, mse_path, test_mse};
use crate::designs::{DesignFamily, DesignKind, Panel};
use crate::error::{Error, Result};
use crate::estimators::{
    cross_validate_refined, default_lambda_grid, default_sigma_star, recover_with_traces, theory_lambda, CvPlan,
    EstimatorKind,
};
use crate::kernelband::{plug_in_bandwidth, BandwidthPlan, KernelKind, PanelSummary};
use crate::solver::SolverConfig;
use crate::synthgen::{build_panel, n_from_rho, DependentDesignSpec, GroundTruthPath, NoiseSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    RhoTauSweep,
    NoiseDependence,
    DesignDependence,
    BaselineComparison,
    RealData,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthMode {
    /// Plug-in rule with constant `c_h`.
    Auto { c_h: f64 },
    Fixed { h: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    Cv {
        #[serde(default = "default_folds")]
        folds: usize,
        /// Points in the second, finer pass; 0 or 1 skips it.
        #[serde(default = "default_fine_points")]
        fine_points: usize,
        /// Cross-validate on the first replicate only and reuse its λ.
        #[serde(default = "default_true")]
        reuse_across_replicates: bool,
        /// Explicit coarse grid; defaults to multiples of the theoretical λ.
        #[serde(default)]
        grid: Option<Vec<f64>>,
    },
    Fixed {
        value: f64,
    },
}

fn default_folds() -> usize {
    5
}
fn default_fine_points() -> usize {
    5
}
fn default_true() -> bool {
    true
}

impl Default for LambdaMode {
    fn default() -> Self {
        LambdaMode::Cv {
            folds: 5,
            fine_points: 5,
            reuse_across_replicates: true,
            grid: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealDataSpec {
    pub path: PathBuf,
    pub ingest: IngestOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    #[serde(default = "d_m1")]
    pub m1: usize,
    #[serde(default = "d_m2")]
    pub m2: usize,
    #[serde(default = "d_rank")]
    pub rank: usize,
    #[serde(default = "d_horizon")]
    pub horizon: usize,
    /// Observations per time point as a fraction of `m1 m2`.
    #[serde(default = "d_rho")]
    pub rho: f64,
    #[serde(default = "d_family")]
    pub family: DesignKind,
    #[serde(default = "d_one")]
    pub sigma_x: f64,
    #[serde(default)]
    pub kernel: KernelKind,
    #[serde(default = "d_bandwidth")]
    pub bandwidth: BandwidthMode,
    #[serde(default)]
    pub lambda: LambdaMode,
    #[serde(default = "d_one")]
    pub sigma: f64,
    #[serde(default = "d_max_iters")]
    pub max_iters: usize,
    #[serde(default = "d_tol")]
    pub tol: f64,
    #[serde(default = "d_one_u64")]
    pub truth_seed: u64,
    #[serde(default = "d_replicates")]
    pub replicates: Vec<u64>,
    #[serde(default = "d_output")]
    pub output_dir: PathBuf,
    /// `(ρ/τ, T)` pairs; `ρ = (ρ/τ) / T`.
    #[serde(default)]
    pub ratio_pairs: Vec<(f64, usize)>,
    #[serde(default)]
    pub sigmas: Vec<f64>,
    #[serde(default)]
    pub betas: Vec<f64>,
    #[serde(default)]
    pub alphas: Vec<f64>,
    /// Observation rate given to the static and two-step baselines.
    #[serde(default = "d_static_rho")]
    pub static_rho: f64,
    #[serde(default = "d_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default)]
    pub data: Option<RealDataSpec>,
}

fn d_m1() -> usize {
    120
}
fn d_m2() -> usize {
    80
}
fn d_rank() -> usize {
    5
}
fn d_horizon() -> usize {
    50
}
fn d_rho() -> f64 {
    0.2
}
fn d_family() -> DesignKind {
    DesignKind::Completion
}
fn d_one() -> f64 {
    1.0
}
fn d_one_u64() -> u64 {
    1
}
fn d_bandwidth() -> BandwidthMode {
    BandwidthMode::Auto { c_h: 0.2 }
}
fn d_max_iters() -> usize {
    500
}
fn d_tol() -> f64 {
    1e-3
}
fn d_replicates() -> Vec<u64> {
    vec![1, 2, 3]
}
fn d_output() -> PathBuf {
    PathBuf::from("results")
}
fn d_static_rho() -> f64 {
    0.8
}
fn d_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Dlr]
}

impl ExperimentConfig {
    /// Desk-scale defaults for `scenario` with no grids filled in.
    pub fn new(scenario: Scenario) -> Self {
        serde_json::from_value(serde_json::json!({ "scenario": scenario })).expect("defaults deserialize")
    }

    pub fn from_json_reader<R: Read>(r: R) -> Result<Self> {
        Ok(serde_json::from_reader(r)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_reader(File::open(path)?)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn solver(&self, lambda: f64) -> SolverConfig {
        SolverConfig {
            lambda,
            max_iters: self.max_iters,
            tol: self.tol,
            ..SolverConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.replicates.is_empty() {
            return bad("at least one replicate seed is required".into());
        }
        if self.max_iters == 0 || !(self.tol > 0.0) {
            return bad("max_iters and tol must be positive".into());
        }
        match self.bandwidth {
            BandwidthMode::Auto { c_h } if !(c_h > 0.0) => return bad(format!("c_h must be positive, got {c_h}")),
            BandwidthMode::Fixed { h } if !(h >= 0.0) => return bad(format!("h must be >= 0, got {h}")),
            _ => {}
        }
        match &self.lambda {
            LambdaMode::Fixed { value } if !(*value >= 0.0) => return bad(format!("lambda must be >= 0, got {value}")),
            LambdaMode::Cv { folds, grid, .. } => {
                if *folds < 2 {
                    return bad("cv needs at least 2 folds".into());
                }
                if matches!(grid, Some(g) if g.is_empty()) {
                    return Err(Error::EmptyGrid);
                }
            }
            _ => {}
        }
        if self.scenario == Scenario::RealData {
            if self.data.is_none() {
                return bad("real_data scenario needs a `data` section".into());
            }
            if self.estimators.is_empty() {
                return bad("real_data scenario needs at least one estimator".into());
            }
            return Ok(());
        }
        if self.m1 == 0 || self.m2 == 0 || self.rank == 0 || 2 * self.rank > self.m1.min(self.m2) {
            return Err(Error::InvalidDims(format!(
                "need 0 < 2*rank <= min(m1, m2); got {}x{} rank {}",
                self.m1, self.m2, self.rank
            )));
        }
        if self.family == DesignKind::ConvKernel {
            return Err(Error::UnsupportedFamily(
                "synthetic scenarios simulate completion or sensing designs".into(),
            ));
        }
        match self.scenario {
            Scenario::RhoTauSweep => {
                let mut ratios: Vec<f64> = self.ratio_pairs.iter().map(|p| p.0).collect();
                ratios.sort_by(f64::total_cmp);
                ratios.dedup();
                if ratios.len() < 2 {
                    return bad("rho_tau_sweep needs ratio_pairs with at least two distinct ratios".into());
                }
                if self.ratio_pairs.iter().any(|&(r, t)| !(r > 0.0) || t == 0) {
                    return bad("ratio_pairs need positive ratios and horizons".into());
                }
            }
            Scenario::NoiseDependence if self.betas.is_empty() => return bad("noise_dependence needs betas".into()),
            Scenario::DesignDependence => {
                if self.alphas.is_empty() {
                    return bad("design_dependence needs alphas".into());
                }
                if self.family != DesignKind::Completion {
                    return Err(Error::UnsupportedFamily("design dependence is defined for completion".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// One cell of a scenario grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub label: String,
    pub estimator: EstimatorKind,
    pub rho: f64,
    pub horizon: usize,
    pub noise: NoiseSpec,
    pub alpha: f64,
    /// Name and value of the swept parameter.
    pub param: &'static str,
    pub x: f64,
}

pub fn expand_points(cfg: &ExperimentConfig) -> Vec<GridPoint> {
    let sigmas = if cfg.sigmas.is_empty() { vec![cfg.sigma] } else { cfg.sigmas.clone() };
    let iid = |sigma| NoiseSpec::Iid { sigma };
    let dlr = EstimatorKind::Dlr;
    match cfg.scenario {
        Scenario::RhoTauSweep => cfg
            .ratio_pairs
            .iter()
            .map(|&(ratio, t)| GridPoint {
                label: format!("ratio={ratio},T={t}"),
                estimator: dlr,
                rho: ratio / t as f64,
                horizon: t,
                noise: iid(cfg.sigma),
                alpha: 0.0,
                param: "rho_over_tau",
                x: ratio,
            })
            .collect(),
        Scenario::NoiseDependence => sigmas
            .iter()
            .flat_map(|&sigma| {
                cfg.betas.iter().map(move |&beta| GridPoint {
                    label: format!("sigma={sigma},beta={beta}"),
                    estimator: dlr,
                    rho: cfg.rho,
                    horizon: cfg.horizon,
                    noise: NoiseSpec::PhiMixingAr { sigma, beta },
                    alpha: 0.0,
                    param: "beta",
                    x: beta,
                })
            })
            .collect(),
        Scenario::DesignDependence => sigmas
            .iter()
            .flat_map(|&sigma| {
                cfg.alphas.iter().map(move |&alpha| GridPoint {
                    label: format!("sigma={sigma},alpha={alpha}"),
                    estimator: dlr,
                    rho: cfg.rho,
                    horizon: cfg.horizon,
                    noise: NoiseSpec::Iid { sigma },
                    alpha,
                    param: "alpha",
                    x: alpha,
                })
            })
            .collect(),
        Scenario::BaselineComparison => EstimatorKind::ALL
            .iter()
            .map(|&k| {
                let rho = if k == EstimatorKind::Dlr { cfg.rho } else { cfg.static_rho };
                GridPoint {
                    label: format!("{k},rho={rho}"),
                    estimator: k,
                    rho,
                    horizon: cfg.horizon,
                    noise: iid(cfg.sigma),
                    alpha: 0.0,
                    param: "rho",
                    x: rho,
                }
            })
            .collect(),
        Scenario::RealData => Vec::new(),
    }
}

/// One estimator run on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config_hash: String,
    pub scenario: Scenario,
    pub label: String,
    pub estimator: EstimatorKind,
    pub replicate_seed: u64,
    pub rho: f64,
    pub horizon: usize,
    pub n: usize,
    pub sigma: f64,
    pub beta: f64,
    pub alpha: f64,
    pub h: f64,
    pub lambda: f64,
    /// Estimation MSE for synthetic runs, held-out MSE for real data.
    pub mse_by_t: Vec<Option<f64>>,
    pub avg_mse: Option<f64>,
    pub iterations: usize,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    pub config_hash: String,
    pub label: String,
    pub estimator: EstimatorKind,
    pub replicate: u64,
    pub t: usize,
    pub mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub config_hash: String,
    pub scenario: Scenario,
    pub label: String,
    pub estimator: EstimatorKind,
    pub replicates: usize,
    pub param: String,
    pub x: Option<f64>,
    pub avg_mse: Option<f64>,
    pub mean_iterations: Option<f64>,
    pub mean_wall_clock_s: Option<f64>,
    pub lambda: Option<f64>,
    pub h: Option<f64>,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub label: String,
    pub estimator: EstimatorKind,
    pub t: usize,
    pub mean_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub records: Vec<ResultRecord>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentOutput {
    pub fn summary_for(&self, label: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.label == label)
    }

    pub fn slope(&self) -> Option<f64> {
        self.summary.iter().find_map(|r| r.slope)
    }
}

fn mse_rows(rec: &ResultRecord) -> impl Iterator<Item = MseRow> + '_ {
    rec.mse_by_t.iter().enumerate().map(|(i, &mse)| MseRow {
        config_hash: rec.config_hash.clone(),
        label: rec.label.clone(),
        estimator: rec.estimator,
        replicate: rec.replicate_seed,
        t: i + 1,
        mse,
    })
}

pub fn write_csv_rows<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv_rows<R: Read, T: for<'de> Deserialize<'de>>(r: R) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Parse {
                line: i + 2,
                msg: e.to_string(),
            })
        })
        .collect()
}

pub fn read_mse_by_t(path: impl AsRef<Path>) -> Result<Vec<MseRow>> {
    read_csv_rows(File::open(path)?)
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<Vec<SummaryRow>> {
    read_csv_rows(File::open(path)?)
}

/// Selects `h` for a panel according to `mode`.
pub fn choose_bandwidth(mode: BandwidthMode, panel: &Panel, rank_guess: usize) -> Result<f64> {
    match mode {
        BandwidthMode::Fixed { h } => Ok(h),
        BandwidthMode::Auto { c_h } => {
            let summary = PanelSummary::from_panel(panel);
            let plan = BandwidthPlan::from_summary(&summary, c_h, rank_guess);
            let n = summary.mean_batch_size;
            plug_in_bandwidth(&plan, panel.dims, n, panel.horizon(), panel.family.kind, panel.family.sigma_x)
        }
    }
}

/// Cross-validated λ for `kind` on `panel`. The two-step estimator is tuned on
/// its first, static stage.
pub fn choose_lambda(
    cfg: &ExperimentConfig,
    panel: &Panel,
    kind: EstimatorKind,
    h: f64,
    seed: u64,
) -> Result<f64> {
    let LambdaMode::Cv {
        folds,
        fine_points,
        grid,
        ..
    } = &cfg.lambda
    else {
        let LambdaMode::Fixed { value } = cfg.lambda else { unreachable!() };
        return Ok(value);
    };
    let cv_kind = if kind == EstimatorKind::TwoStep { EstimatorKind::Static } else { kind };
    let h_eff = if cv_kind == EstimatorKind::Static { 0.0 } else { h };
    let grid = match grid {
        Some(g) => g.clone(),
        None => {
            let summary = PanelSummary::from_panel(panel);
            let anchor = theory_lambda(
                &panel.family,
                summary.mean_batch_size,
                panel.horizon(),
                h_eff,
                default_sigma_star(&summary, &panel.family),
                1.0,
            )?;
            default_lambda_grid(anchor)
        }
    };
    let plan = CvPlan {
        folds: *folds,
        lambda_grid: grid,
        split_seed: seed,
    };
    Ok(cross_validate_refined(panel, cv_kind, h, cfg.kernel, &plan, &cfg.solver(0.0), *fine_points)?.lambda_star)
}

fn synthetic_family(cfg: &ExperimentConfig) -> DesignFamily {
    DesignFamily::new(cfg.family, cfg.m1, cfg.m2, cfg.sigma_x)
}

fn run_replicate(
    cfg: &ExperimentConfig,
    hash: &str,
    point: &GridPoint,
    path: &GroundTruthPath,
    seed: u64,
    lambda: Option<f64>,
) -> Result<ResultRecord> {
    let start = Instant::now();
    let family = synthetic_family(cfg);
    let n = n_from_rho(point.rho, family.dims);
    let dep = DependentDesignSpec { alpha: point.alpha };
    let (panel, truths) = build_panel(path, &family, n, &point.noise, (point.alpha > 0.0).then_some(&dep), seed)
        .map_err(|e| e.in_stage("simulate"))?;
    let h = choose_bandwidth(cfg.bandwidth, &panel, cfg.rank).map_err(|e| e.in_stage("bandwidth"))?;
    let lambda = match lambda {
        Some(l) => l,
        None => choose_lambda(cfg, &panel, point.estimator, h, seed).map_err(|e| e.in_stage("cv"))?,
    };
    let rec = recover_with_traces(&panel, point.estimator, h, cfg.kernel, &cfg.solver(lambda))
        .map_err(|e| e.in_stage("recover"))?;
    let mse: Vec<Option<f64>> = mse_path(&rec.estimates, &truths)
        .map_err(|e| e.in_stage("metrics"))?
        .into_iter()
        .map(Some)
        .collect();
    let (beta, sigma) = match point.noise {
        NoiseSpec::Iid { sigma } => (0.0, sigma),
        NoiseSpec::PhiMixingAr { sigma, beta } => (beta, sigma),
    };
    Ok(ResultRecord {
        config_hash: hash.to_string(),
        scenario: cfg.scenario,
        label: point.label.clone(),
        estimator: point.estimator,
        replicate_seed: seed,
        rho: point.rho,
        horizon: point.horizon,
        n,
        sigma,
        beta,
        alpha: point.alpha,
        h,
        lambda,
        avg_mse: average(mse.iter().copied()),
        mse_by_t: mse,
        iterations: rec.total_iters(),
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

fn run_point(cfg: &ExperimentConfig, hash: &str, point: &GridPoint) -> Result<Vec<ResultRecord>> {
    let path = GroundTruthPath::new(cfg.m1, cfg.m2, cfg.rank, point.horizon, cfg.truth_seed)
        .map_err(|e| e.in_stage("simulate"))?;
    let reuse = matches!(
        cfg.lambda,
        LambdaMode::Cv {
            reuse_across_replicates: true,
            ..
        }
    );
    if reuse {
        let first = run_replicate(cfg, hash, point, &path, cfg.replicates[0], None)?;
        let lambda = first.lambda;
        let rest: Vec<ResultRecord> = cfg.replicates[1..]
            .par_iter()
            .map(|&s| run_replicate(cfg, hash, point, &path, s, Some(lambda)))
            .collect::<Result<_>>()?;
        Ok(std::iter::once(first).chain(rest).collect())
    } else {
        cfg.replicates
            .par_iter()
            .map(|&s| run_replicate(cfg, hash, point, &path, s, None))
            .collect()
    }
}

fn run_real_data(cfg: &ExperimentConfig, hash: &str) -> Result<Vec<ResultRecord>> {
    let spec = cfg.data.as_ref().expect("validated");
    let data = ingest_triplets(&spec.path, &spec.ingest).map_err(|e| e.in_stage("ingest"))?;
    let seed = cfg.replicates[0];
    cfg.estimators
        .iter()
        .map(|&kind| {
            let start = Instant::now();
            let h = choose_bandwidth(cfg.bandwidth, &data.train, cfg.rank).map_err(|e| e.in_stage("bandwidth"))?;
            let lambda = choose_lambda(cfg, &data.train, kind, h, seed).map_err(|e| e.in_stage("cv"))?;
            let rec = recover_with_traces(&data.train, kind, h, cfg.kernel, &cfg.solver(lambda))
                .map_err(|e| e.in_stage("recover"))?;
            let mse = test_mse(&rec.estimates, &data.test).map_err(|e| e.in_stage("metrics"))?;
            Ok(ResultRecord {
                config_hash: hash.to_string(),
                scenario: cfg.scenario,
                label: kind.to_string(),
                estimator: kind,
                replicate_seed: seed,
                rho: data.train.total_observations() as f64
                    / (data.train.horizon() * data.train.dims.0 * data.train.dims.1) as f64,
                horizon: data.train.horizon(),
                n: data.train.total_observations(),
                sigma: f64::NAN,
                beta: 0.0,
                alpha: 0.0,
                h,
                lambda,
                avg_mse: average(mse.iter().copied()),
                mse_by_t: mse,
                iterations: rec.total_iters(),
                wall_clock_s: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

/// Records grouped by (label, estimator) in first-seen order.
fn group_records(records: &[ResultRecord]) -> Vec<((String, EstimatorKind), Vec<&ResultRecord>)> {
    let mut groups: Vec<((String, EstimatorKind), Vec<&ResultRecord>)> = Vec::new();
    for r in records {
        match groups.iter_mut().find(|(k, _)| k.0 == r.label && k.1 == r.estimator) {
            Some((_, g)) => g.push(r),
            None => groups.push(((r.label.clone(), r.estimator), vec![r])),
        }
    }
    groups
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    average(xs.into_iter().map(Some))
}

/// Per-label summary rows in first-seen order, plus a slope row for the sweep.
pub fn summarize(cfg: &ExperimentConfig, hash: &str, records: &[ResultRecord]) -> Result<Vec<SummaryRow>> {
    let points = expand_points(cfg);
    let mut rows = Vec::new();
    for (key, g) in group_records(records) {
        let point = points.iter().find(|p| p.label == key.0);
        rows.push(SummaryRow {
            config_hash: hash.to_string(),
            scenario: cfg.scenario,
            label: key.0.clone(),
            estimator: key.1,
            replicates: g.len(),
            param: point.map_or("estimator", |p| p.param).to_string(),
            x: point.map(|p| p.x),
            avg_mse: average(g.iter().map(|r| r.avg_mse)),
            mean_iterations: mean(g.iter().map(|r| r.iterations as f64)),
            mean_wall_clock_s: mean(g.iter().map(|r| r.wall_clock_s)),
            lambda: mean(g.iter().map(|r| r.lambda)),
            h: mean(g.iter().map(|r| r.h)),
            slope: None,
            intercept: None,
        });
    }
    if cfg.scenario == Scenario::RhoTauSweep && !rows.is_empty() {
        let mut by_ratio: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for r in &rows {
            if let (Some(x), Some(m)) = (r.x, r.avg_mse) {
                by_ratio.entry(x.to_bits()).or_default().push(m);
            }
        }
        let xs: Vec<f64> = by_ratio.keys().map(|&b| f64::from_bits(b)).collect();
        let ys: Vec<f64> = by_ratio.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
        let (slope, intercept) = fit_log_slope(&xs, &ys).map_err(|e| e.in_stage("slope"))?;
        rows.push(SummaryRow {
            config_hash: hash.to_string(),
            scenario: cfg.scenario,
            label: "slope".into(),
            estimator: EstimatorKind::Dlr,
            replicates: cfg.replicates.len(),
            param: "rho_over_tau".into(),
            x: None,
            avg_mse: None,
            mean_iterations: None,
            mean_wall_clock_s: None,
            lambda: None,
            h: None,
            slope: Some(slope),
            intercept: Some(intercept),
        });
    }
    Ok(rows)
}

/// Mean MSE per `t` across replicates, per label and estimator.
pub fn curves(records: &[ResultRecord]) -> Vec<CurveRow> {
    let mut rows = Vec::new();
    for (key, g) in group_records(records) {
        let horizon = g.iter().map(|r| r.mse_by_t.len()).max().unwrap_or(0);
        for t in 0..horizon {
            rows.push(CurveRow {
                label: key.0.clone(),
                estimator: key.1,
                t: t + 1,
                mean_mse: average(g.iter().map(|r| r.mse_by_t.get(t).copied().flatten())),
            });
        }
    }
    rows
}

struct Artifacts {
    dir: PathBuf,
    mse: csv::Writer<BufWriter<File>>,
}

impl Artifacts {
    const FILES: [&'static str; 4] = ["mse_by_t.csv", "summary.csv", "curves.csv", "results.json"];

    fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let mse = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("mse_by_t.csv.partial"))?));
        Ok(Self {
            dir: dir.to_path_buf(),
            mse,
        })
    }

    fn append(&mut self, records: &[ResultRecord]) -> Result<()> {
        for r in records {
            for row in mse_rows(r) {
                self.mse.serialize(row)?;
            }
        }
        self.mse.flush()?;
        Ok(())
    }

    fn finish(mut self, out: &ExperimentOutput, complete: bool) -> Result<()> {
        self.mse.flush()?;
        let part = |name: &str| self.dir.join(format!("{name}.partial"));
        write_csv_rows(BufWriter::new(File::create(part("summary.csv"))?), &out.summary)?;
        write_csv_rows(BufWriter::new(File::create(part("curves.csv"))?), &curves(&out.records))?;
        serde_json::to_writer_pretty(BufWriter::new(File::create(part("results.json"))?), out)?;
        if complete {
            for name in Self::FILES {
                fs::rename(part(name), self.dir.join(name))?;
            }
        }
        Ok(())
    }
}

/// Runs every grid point and replicate of `cfg` and writes artifacts to `cfg.output_dir`.
///
/// On failure the files written so far keep a `.partial` suffix and the error
/// names the stage that failed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let hash = cfg.hash();
    let mut artifacts = Artifacts::open(&cfg.output_dir).map_err(|e| e.in_stage("write"))?;
    let mut records = Vec::new();
    let mut failure = None;
    if cfg.scenario == Scenario::RealData {
        match run_real_data(cfg, &hash) {
            Ok(r) => records = r,
            Err(e) => failure = Some(e),
        }
        artifacts.append(&records).map_err(|e| e.in_stage("write"))?;
    } else {
        for point in expand_points(cfg) {
            match run_point(cfg, &hash, &point) {
                Ok(r) => {
                    artifacts.append(&r).map_err(|e| e.in_stage("write"))?;
                    records.extend(r);
                }
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            }
        }
    }
    let summary = match failure {
        None => match summarize(cfg, &hash, &records) {
            Ok(s) => s,
            Err(e) => {
                failure = Some(e);
                Vec::new()
            }
        },
        Some(_) => Vec::new(),
    };
    let out = ExperimentOutput {
        config_hash: hash,
        config: cfg.clone(),
        records,
        summary,
    };
    artifacts.finish(&out, failure.is_none()).map_err(|e| e.in_stage("write"))?;
    match failure {
        Some(e) => Err(e),
        None => Ok(out),
    }
}
