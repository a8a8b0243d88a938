//! Dynamic (DLR), static, and two-step estimators, and cross-validation of λ.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::designs::{DesignFamily, DesignKind, Observation, Panel};
use crate::error::{Error, Result};
use crate::kernelband::{weights, KernelKind, PanelSummary};
use crate::matcore::Mat;
use crate::solver::{solve_path, SolveTrace, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Dlr,
    Static,
    TwoStep,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 3] = [EstimatorKind::Dlr, EstimatorKind::Static, EstimatorKind::TwoStep];
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorKind::Dlr => "dlr",
            EstimatorKind::Static => "static",
            EstimatorKind::TwoStep => "twostep",
        })
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dlr" => Ok(EstimatorKind::Dlr),
            "static" => Ok(EstimatorKind::Static),
            "twostep" | "two-step" | "two_step" => Ok(EstimatorKind::TwoStep),
            other => Err(Error::InvalidArgument(format!("unknown estimator {other:?}"))),
        }
    }
}

/// Estimates for every time point plus the solver traces that produced them.
#[derive(Debug, Clone)]
pub struct Recovery {
    pub estimates: Vec<Mat>,
    pub traces: Vec<SolveTrace>,
}

impl Recovery {
    pub fn total_iters(&self) -> usize {
        self.traces.iter().map(|t| t.iters_used).sum()
    }
}

/// Kernel average `Σ_j ω_h(j − t) M_j` for every `t`.
pub fn smooth_estimates(estimates: &[Mat], h: f64, kernel: KernelKind) -> Result<Vec<Mat>> {
    let horizon = estimates.len();
    (1..=horizon)
        .map(|t| {
            let w = weights(t, horizon, h, kernel)?;
            let mut acc = Mat::zeros(estimates[0].rows(), estimates[0].cols());
            for (m, &wj) in estimates.iter().zip(&w) {
                if wj > 0.0 {
                    acc.axpy(wj, m);
                }
            }
            Ok(acc)
        })
        .collect()
}

pub fn recover_with_traces(
    panel: &Panel,
    kind: EstimatorKind,
    h: f64,
    kernel: KernelKind,
    cfg: &SolverConfig,
) -> Result<Recovery> {
    match kind {
        EstimatorKind::Dlr => {
            let (estimates, traces) = solve_path(panel, h, kernel, cfg, true)?;
            Ok(Recovery { estimates, traces })
        }
        EstimatorKind::Static => {
            let (estimates, traces) = solve_path(panel, 0.0, KernelKind::Degenerate, cfg, true)?;
            Ok(Recovery { estimates, traces })
        }
        EstimatorKind::TwoStep => {
            let (stat, traces) = solve_path(panel, 0.0, KernelKind::Degenerate, cfg, true)?;
            Ok(Recovery {
                estimates: smooth_estimates(&stat, h, kernel)?,
                traces,
            })
        }
    }
}

/// Recovers `M_t` for every `t`; `h` is ignored by the static estimator.
pub fn recover(
    panel: &Panel,
    kind: EstimatorKind,
    h: f64,
    kernel: KernelKind,
    cfg: &SolverConfig,
) -> Result<Vec<Mat>> {
    Ok(recover_with_traces(panel, kind, h, kernel, cfg)?.estimates)
}

/// `2 C₁ σ* √(log(m1+m2) / (n ⌈T h⌉))`, with `⌈T h⌉` taken as 1 for `h = 0`.
pub fn theory_lambda(
    family: &DesignFamily,
    n: f64,
    horizon: usize,
    h: f64,
    sigma_star: f64,
    c1: f64,
) -> Result<f64> {
    let (m1, m2) = family.dims;
    let window = ((horizon as f64) * h).ceil().max(1.0);
    let effective = n * window;
    if m1 == 0 || m2 == 0 || !(effective >= 1.0) {
        return Err(Error::InvalidDims(format!(
            "need n*ceil(T h) >= 1 and positive dims; got n={n}, T={horizon}, h={h}"
        )));
    }
    Ok(2.0 * c1 * sigma_star * (((m1 + m2) as f64).ln() / effective).sqrt())
}

/// Noise scale used to anchor the λ grid when none is supplied: the top-decile
/// response magnitude, converted to the spectral scale of one averaged design.
pub fn default_sigma_star(summary: &PanelSummary, family: &DesignFamily) -> f64 {
    let (m1, m2) = family.dims;
    let scale = summary.top_decile;
    match family.kind {
        DesignKind::Completion => scale / (m1.min(m2) as f64).sqrt(),
        DesignKind::Sensing => scale * family.sigma_x * (m1.max(m2) as f64).sqrt(),
        DesignKind::ConvKernel => 6.0 * scale / (m1.min(m2) as f64).sqrt(),
    }
}

/// Eight log-spaced multiples `10^-2, 10^-1.5, …, 10^1.5` of `anchor`.
pub fn default_lambda_grid(anchor: f64) -> Vec<f64> {
    (0..8).map(|i| anchor * 10f64.powf(-2.0 + 0.5 * i as f64)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    pub folds: usize,
    pub lambda_grid: Vec<f64>,
    pub split_seed: u64,
}

impl CvPlan {
    pub fn new(lambda_grid: Vec<f64>, split_seed: u64) -> Self {
        Self {
            folds: 5,
            lambda_grid,
            split_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_grid.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if self.folds < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 folds, got {}", self.folds)));
        }
        if self.lambda_grid.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument("lambda grid must be sorted ascending".into()));
        }
        if self.lambda_grid.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
            return Err(Error::InvalidArgument("lambda grid values must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub lambda_star: f64,
    /// `(λ, mean held-out squared error)` in grid order.
    pub scores: Vec<(f64, f64)>,
}

impl CvReport {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["lambda", "score"])?;
        for (l, s) in &self.scores {
            out.write_record([format!("{l:?}"), format!("{s:?}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Per-batch fold labels. Batches smaller than `folds` get `None` (always training).
pub fn fold_assignment(panel: &Panel, folds: usize, seed: u64) -> Vec<Vec<Option<usize>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    panel
        .batches
        .iter()
        .map(|batch| {
            let n = batch.len();
            if n < folds {
                return vec![None; n];
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut labels = vec![None; n];
            for (pos, &i) in order.iter().enumerate() {
                labels[i] = Some(pos % folds);
            }
            labels
        })
        .collect()
}

/// Splits into (training panel, held-out batches) for one fold.
pub fn split_fold(panel: &Panel, labels: &[Vec<Option<usize>>], fold: usize) -> Result<(Panel, Vec<Vec<Observation>>)> {
    let mut train = Vec::with_capacity(panel.horizon());
    let mut held = Vec::with_capacity(panel.horizon());
    for (batch, lab) in panel.batches.iter().zip(labels) {
        let (mut tr, mut te) = (Vec::new(), Vec::new());
        for (obs, l) in batch.iter().zip(lab) {
            if *l == Some(fold) {
                te.push(obs.clone());
            } else {
                tr.push(obs.clone());
            }
        }
        train.push(tr);
        held.push(te);
    }
    Ok((Panel::new(panel.family, train)?, held))
}

/// Mean over time points with held-out data of the per-time mean squared prediction error.
pub fn heldout_score(estimates: &[Mat], held: &[Vec<Observation>]) -> Option<f64> {
    let per_t: Vec<f64> = estimates
        .iter()
        .zip(held)
        .filter(|(_, b)| !b.is_empty())
        .map(|(m, b)| {
            b.iter()
                .map(|o| (o.design.inner_unchecked(m) - o.y).powi(2))
                .sum::<f64>()
                / b.len() as f64
        })
        .collect();
    if per_t.is_empty() {
        None
    } else {
        Some(per_t.iter().sum::<f64>() / per_t.len() as f64)
    }
}

/// K-fold cross-validation of one universal λ over `plan.lambda_grid`.
///
/// Folds are stratified by time batch. Ties in the score go to the larger λ.
pub fn cross_validate_lambda(
    panel: &Panel,
    kind: EstimatorKind,
    h: f64,
    kernel: KernelKind,
    plan: &CvPlan,
    cfg: &SolverConfig,
) -> Result<CvReport> {
    plan.validate()?;
    let labels = fold_assignment(panel, plan.folds, plan.split_seed);
    let splits: Vec<(Panel, Vec<Vec<Observation>>)> = (0..plan.folds)
        .map(|f| split_fold(panel, &labels, f))
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..plan.lambda_grid.len())
        .flat_map(|li| (0..plan.folds).map(move |f| (li, f)))
        .collect();
    let fold_scores: Vec<Option<f64>> = jobs
        .par_iter()
        .map(|&(li, f)| {
            let cfg = SolverConfig {
                lambda: plan.lambda_grid[li],
                ..cfg.clone()
            };
            let (train, held) = &splits[f];
            let est = recover(train, kind, h, kernel, &cfg)?;
            Ok(heldout_score(&est, held))
        })
        .collect::<Result<_>>()?;

    let mut scores = Vec::with_capacity(plan.lambda_grid.len());
    for (li, &lambda) in plan.lambda_grid.iter().enumerate() {
        let vals: Vec<f64> = fold_scores[li * plan.folds..(li + 1) * plan.folds]
            .iter()
            .flatten()
            .copied()
            .collect();
        if vals.is_empty() {
            return Err(Error::InvalidArgument(
                "no batch has enough observations to hold out a fold".into(),
            ));
        }
        scores.push((lambda, vals.iter().sum::<f64>() / vals.len() as f64));
    }
    let mut best = 0;
    for (i, &(_, s)) in scores.iter().enumerate() {
        if s <= scores[best].1 {
            best = i;
        }
    }
    Ok(CvReport {
        lambda_star: scores[best].0,
        scores,
    })
}

/// Log-spaced grid of `points` values spanning the neighbours of the coarse winner.
pub fn refine_grid(coarse: &[f64], best: f64, points: usize) -> Vec<f64> {
    let i = coarse.iter().position(|&l| l == best).unwrap_or(0);
    let lo = coarse[i.saturating_sub(1)];
    let hi = coarse[(i + 1).min(coarse.len() - 1)];
    if points < 2 || !(lo > 0.0) || lo == hi {
        return vec![best];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp())
        .collect()
}

/// Coarse CV over `plan.lambda_grid`, then a second pass over `fine_points`
/// values between the neighbours of the coarse winner. Scores from both passes
/// are merged in ascending λ order.
pub fn cross_validate_refined(
    panel: &Panel,
    kind: EstimatorKind,
    h: f64,
    kernel: KernelKind,
    plan: &CvPlan,
    cfg: &SolverConfig,
    fine_points: usize,
) -> Result<CvReport> {
    let coarse = cross_validate_lambda(panel, kind, h, kernel, plan, cfg)?;
    let fine_grid: Vec<f64> = refine_grid(&plan.lambda_grid, coarse.lambda_star, fine_points)
        .into_iter()
        .filter(|l| !plan.lambda_grid.contains(l))
        .collect();
    if fine_grid.is_empty() {
        return Ok(coarse);
    }
    let fine_plan = CvPlan {
        lambda_grid: fine_grid,
        ..plan.clone()
    };
    let fine = cross_validate_lambda(panel, kind, h, kernel, &fine_plan, cfg)?;
    let mut scores = coarse.scores;
    scores.extend(fine.scores);
    scores.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = 0;
    for (i, &(_, s)) in scores.iter().enumerate() {
        if s <= scores[best].1 {
            best = i;
        }
    }
    Ok(CvReport {
        lambda_star: scores[best].0,
        scores,
    })
}
