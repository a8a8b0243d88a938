//! Error metrics and synthetic-data diagnostics.

use crate::designs::{DesignFamily, DesignKind, Observation, Panel};
use crate::error::{Error, Result};
use crate::matcore::{frob_norm, spectral_norm, Mat};

/// `‖estimate − truth‖_F² / (m1 m2)`.
pub fn mse_t(estimate: &Mat, truth: &Mat) -> Result<f64> {
    estimate.same_dims(truth)?;
    let d = estimate.sub(truth);
    Ok(d.dot(&d) / (d.rows() * d.cols()) as f64)
}

/// Per-time MSE for a whole path.
pub fn mse_path(estimates: &[Mat], truths: &[Mat]) -> Result<Vec<f64>> {
    if estimates.len() != truths.len() {
        return Err(Error::dims(truths.len(), estimates.len()));
    }
    estimates.iter().zip(truths).map(|(e, m)| mse_t(e, m)).collect()
}

/// Mean of the present values; `None` when nothing is present.
pub fn average(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, count) = values
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Held-out mean squared prediction error per time point; empty batches give `None`.
pub fn test_mse(estimates: &[Mat], heldout: &Panel) -> Result<Vec<Option<f64>>> {
    if estimates.len() != heldout.horizon() {
        return Err(Error::dims(heldout.horizon(), estimates.len()));
    }
    estimates
        .iter()
        .zip(&heldout.batches)
        .map(|(m, batch)| batch_mse(m, batch, heldout.dims))
        .collect()
}

fn batch_mse(m: &Mat, batch: &[Observation], dims: (usize, usize)) -> Result<Option<f64>> {
    if m.dims() != dims {
        return Err(Error::dims(format!("{dims:?}"), format!("{:?}", m.dims())));
    }
    if batch.is_empty() {
        return Ok(None);
    }
    let mut acc = 0.0;
    for o in batch {
        acc += (o.design.inner(m)? - o.y).powi(2);
    }
    Ok(Some(acc / batch.len() as f64))
}

/// Smoothing bias `‖M_t − Σ_j ω_j M_j‖_F` for weights `w` centred at `t` (1-based).
pub fn bias_diagnostic(truths: &[Mat], t: usize, w: &[f64]) -> Result<f64> {
    if t == 0 || t > truths.len() {
        return Err(Error::IndexOutOfRange {
            index: t,
            horizon: truths.len(),
        });
    }
    if w.len() != truths.len() {
        return Err(Error::dims(truths.len(), w.len()));
    }
    let mut acc = truths[t - 1].clone();
    for (m, &wj) in truths.iter().zip(w) {
        if wj != 0.0 {
            acc.axpy(-wj, m);
        }
    }
    Ok(frob_norm(&acc))
}

/// `E[Y X]` under `family` when the truth is `m`.
fn expected_response_design(m: &Mat, family: &DesignFamily) -> Result<Mat> {
    match family.kind {
        DesignKind::Completion | DesignKind::Sensing => Ok(m.scale(family.mu)),
        DesignKind::ConvKernel => Err(Error::UnsupportedFamily(
            "the stencil family has no closed-form second moment".into(),
        )),
    }
}

/// Spectral norm of `Σ_j ω_j Δ_j` with `Δ_j = (1/n_j) Σ_i (y X − E[y X])`.
pub fn noise_diagnostic(panel: &Panel, truths: &[Mat], w: &[f64]) -> Result<f64> {
    if truths.len() != panel.horizon() || w.len() != panel.horizon() {
        return Err(Error::dims(panel.horizon(), truths.len().min(w.len())));
    }
    let (m1, m2) = panel.dims;
    let mut acc = Mat::zeros(m1, m2);
    for ((batch, m), &wj) in panel.batches.iter().zip(truths).zip(w) {
        if wj == 0.0 || batch.is_empty() {
            continue;
        }
        let c = wj / batch.len() as f64;
        for o in batch {
            o.design.accumulate_adjoint(&mut acc, c * o.y)?;
        }
        acc.axpy(-wj, &expected_response_design(m, &panel.family)?);
    }
    spectral_norm(&acc)
}

/// Ordinary least squares of `ln y` on `ln x`; returns `(slope, intercept)`.
pub fn fit_log_slope(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least two (x, y) pairs of equal length, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument("log fit needs positive finite values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit);
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Outcome of checking the error bound that holds once the penalty dominates the noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractCheck {
    /// `true` when `4 λ ≥ 2 𝒲`, the solver's λ being a quarter of the bound's penalty.
    pub penalty_dominates: bool,
    /// Upper bound on `MSE_t` implied by the penalty, bias and truth norm.
    pub mse_bound: f64,
}

/// `(δ + √(δ² + 2 λ' ‖M⁰‖_* / μ))² / (m1 m2)` with `λ' = 4 λ`.
///
/// The solver minimizes `φ + 2λ‖M‖_*` with `φ` halved, so its λ is a quarter of
/// the penalty in the unhalved objective the bound is stated for.
pub fn lambda_contract(
    lambda: f64,
    noise: f64,
    bias: f64,
    truth_nuclear: f64,
    family: &DesignFamily,
) -> Result<ContractCheck> {
    let mu = family.mu_max()?;
    let penalty = 4.0 * lambda;
    let (m1, m2) = family.dims;
    let err = bias + (bias * bias + 2.0 * penalty * truth_nuclear / mu).sqrt();
    Ok(ContractCheck {
        penalty_dominates: penalty >= 2.0 * noise,
        mse_bound: err * err / (m1 * m2) as f64,
    })
}
