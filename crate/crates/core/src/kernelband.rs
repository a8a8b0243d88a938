//! Smoothing kernels, local time weights, and the plug-in bandwidth rule.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::designs::{DesignKind, Panel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    #[default]
    Epanechnikov,
    Uniform,
    Triangular,
    /// Point mass at zero: the `h -> 0` limit.
    Degenerate,
}

impl KernelKind {
    /// Kernel density on `[-1, 1]`; zero for `|x| >= 1`.
    pub fn eval(self, x: f64) -> f64 {
        let a = x.abs();
        match self {
            KernelKind::Degenerate => {
                if x == 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            _ if a >= 1.0 => 0.0,
            KernelKind::Epanechnikov => 0.75 * (1.0 - x * x),
            KernelKind::Uniform => 0.5,
            KernelKind::Triangular => 1.0 - a,
        }
    }

    /// `(alpha(K), R(K)) = (∫x²K, ∫K²)` in closed form.
    pub fn constants(self) -> Result<(f64, f64)> {
        match self {
            KernelKind::Epanechnikov => Ok((1.0 / 5.0, 3.0 / 5.0)),
            KernelKind::Uniform => Ok((1.0 / 3.0, 1.0 / 2.0)),
            KernelKind::Triangular => Ok((1.0 / 6.0, 2.0 / 3.0)),
            KernelKind::Degenerate => Err(Error::Unsupported(
                "kernel constants are undefined for the degenerate kernel".into(),
            )),
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            KernelKind::Epanechnikov => "epanechnikov",
            KernelKind::Uniform => "uniform",
            KernelKind::Triangular => "triangular",
            KernelKind::Degenerate => "degenerate",
        };
        f.write_str(s)
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "epanechnikov" => Ok(KernelKind::Epanechnikov),
            "uniform" => Ok(KernelKind::Uniform),
            "triangular" => Ok(KernelKind::Triangular),
            "degenerate" => Ok(KernelKind::Degenerate),
            other => Err(Error::InvalidArgument(format!("unknown kernel {other:?}"))),
        }
    }
}

pub fn kernel_constants(kind: KernelKind) -> Result<(f64, f64)> {
    kind.constants()
}

/// Normalized weights `ω_h(j - t)` for `j = 1..=horizon`, returned 0-indexed.
///
/// A degenerate kernel or `h == 0` puts all mass on `j = t`. Otherwise the raw
/// weights are `K((j - t) / (T h))`, renormalized over the truncated window at
/// the edges.
pub fn weights(t: usize, horizon: usize, h: f64, kind: KernelKind) -> Result<Vec<f64>> {
    if horizon == 0 || t == 0 || t > horizon {
        return Err(Error::IndexOutOfRange { index: t, horizon });
    }
    if !(h >= 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("bandwidth must be >= 0, got {h}")));
    }
    let mut w = vec![0.0; horizon];
    if kind == KernelKind::Degenerate || h == 0.0 {
        w[t - 1] = 1.0;
        return Ok(w);
    }
    let width = horizon as f64 * h;
    for (j0, wj) in w.iter_mut().enumerate() {
        let d = (j0 + 1) as f64 - t as f64;
        *wj = kind.eval(d / width);
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::EmptyWindow { t });
    }
    w.iter_mut().for_each(|v| *v /= total);
    Ok(w)
}

/// Per-time response means and the top-decile magnitude of all responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSummary {
    pub means: Vec<f64>,
    pub top_decile: f64,
    pub mean_batch_size: f64,
}

impl PanelSummary {
    pub fn from_panel(panel: &Panel) -> Self {
        let means = panel
            .batches
            .iter()
            .map(|b| {
                if b.is_empty() {
                    0.0
                } else {
                    b.iter().map(|o| o.y).sum::<f64>() / b.len() as f64
                }
            })
            .collect();
        let mut mags: Vec<f64> = panel.batches.iter().flatten().map(|o| o.y.abs()).collect();
        mags.sort_by(|a, b| b.total_cmp(a));
        let top = (mags.len() as f64 * 0.1).ceil().max(1.0) as usize;
        let top_decile = if mags.is_empty() {
            0.0
        } else {
            mags[..top.min(mags.len())].iter().sum::<f64>() / top.min(mags.len()) as f64
        };
        let total: usize = panel.batches.iter().map(Vec::len).sum();
        Self {
            means,
            top_decile,
            mean_batch_size: total as f64 / panel.horizon().max(1) as f64,
        }
    }

    /// Sum of absolute successive differences of the per-time means.
    pub fn d2_estimate(&self) -> f64 {
        self.means.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }
}

/// Inputs to the plug-in bandwidth rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthPlan {
    pub c_h: f64,
    /// Estimate of `C_M ∨ σ_ξ` (top-decile response magnitude).
    pub plug_in_scale: f64,
    pub plug_in_d2: f64,
    pub rank_guess: usize,
}

impl BandwidthPlan {
    pub fn from_summary(summary: &PanelSummary, c_h: f64, rank_guess: usize) -> Self {
        Self {
            c_h,
            plug_in_scale: summary.top_decile,
            plug_in_d2: summary.d2_estimate(),
            rank_guess,
        }
    }
}

/// `[(2 + 2√2) C₁ / (α(K) D₂)]^{2/5}`, the constant in front of the optimal bandwidth.
pub fn ch_from_constants(c1: f64, kind: KernelKind, d2: f64) -> Result<f64> {
    let (alpha, _) = kind.constants()?;
    if !(d2 > 0.0) || !(c1 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need positive C1 and D2, got {c1} and {d2}"
        )));
    }
    Ok(((2.0 + 2.0 * 2f64.sqrt()) * c1 / (alpha * d2)).powf(0.4))
}

fn check_dims(m1: usize, m2: usize, n: f64, horizon: usize) -> Result<()> {
    if m1 == 0 || m2 == 0 || !(n > 0.0) || horizon == 0 {
        return Err(Error::InvalidDims(format!(
            "m1={m1}, m2={m2}, n={n}, T={horizon}"
        )));
    }
    Ok(())
}

/// Bandwidth from the closed-form rule before clamping or the degeneracy check.
///
/// Completion uses `(scale² r (m1∨m2) log(m1+m2) / nT)^{1/5}`; sensing uses
/// `((scale/σ_X)² r log(m1+m2) / ((m1∧m2) nT))^{1/5}`.
pub fn unclamped_bandwidth(
    plan: &BandwidthPlan,
    dims: (usize, usize),
    n: f64,
    horizon: usize,
    kind: DesignKind,
    sigma_x: f64,
) -> Result<f64> {
    let (m1, m2) = dims;
    check_dims(m1, m2, n, horizon)?;
    if !(plan.plug_in_scale > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "plug-in scale must be positive, got {}",
            plan.plug_in_scale
        )));
    }
    let log_m = ((m1 + m2) as f64).ln();
    let nt = n * horizon as f64;
    let r = plan.rank_guess.max(1) as f64;
    let inner = match kind {
        DesignKind::Completion => plan.plug_in_scale.powi(2) * r * m1.max(m2) as f64 * log_m / nt,
        DesignKind::Sensing => {
            let eta = plan.plug_in_scale / sigma_x;
            eta * eta * r * log_m / (m1.min(m2) as f64 * nt)
        }
        DesignKind::ConvKernel => {
            return Err(Error::UnsupportedFamily(
                "no plug-in bandwidth for convolution designs; pass a manual bandwidth".into(),
            ))
        }
    };
    Ok(plan.c_h * inner.powf(0.2))
}

/// Plug-in bandwidth clamped to `[1/T, 1]`, or 0 when smoothing cannot help
/// (`n μ² m1 m2 / (T⁴ scale² r log(m1+m2)) >= 1`, or a single time point).
pub fn plug_in_bandwidth(
    plan: &BandwidthPlan,
    dims: (usize, usize),
    n: f64,
    horizon: usize,
    kind: DesignKind,
    sigma_x: f64,
) -> Result<f64> {
    let raw = unclamped_bandwidth(plan, dims, n, horizon, kind, sigma_x)?;
    if horizon == 1 {
        return Ok(0.0);
    }
    let (m1, m2) = dims;
    let mu = match kind {
        DesignKind::Completion => 1.0 / (m1 * m2) as f64,
        _ => sigma_x * sigma_x,
    };
    let log_m = ((m1 + m2) as f64).ln();
    let ratio = n * mu * mu * (m1 * m2) as f64
        / ((horizon as f64).powi(4)
            * plan.plug_in_scale.powi(2)
            * plan.rank_guess.max(1) as f64
            * log_m);
    if ratio >= 1.0 {
        return Ok(0.0);
    }
    Ok(raw.clamp(1.0 / horizon as f64, 1.0))
}
