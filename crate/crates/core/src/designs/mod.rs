//! Measurement operators for trace regression and the panels built from them.

mod io;

pub use io::{
    read_manifest_panel, read_triplets, read_triplets_from, write_manifest_panel, write_triplets,
    write_triplets_to, Manifest, ManifestEntry,
};

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{self, Mat};

/// Convolution stencil `(drow, dcol, weight)`: 4 at the center, 2 on edges, 1 on corners.
pub const CONV_STENCIL: [(isize, isize, f64); 9] = [
    (-1, -1, 1.0),
    (-1, 0, 2.0),
    (-1, 1, 1.0),
    (0, -1, 2.0),
    (0, 0, 4.0),
    (0, 1, 2.0),
    (1, -1, 1.0),
    (1, 0, 2.0),
    (1, 1, 1.0),
];

/// A single measurement matrix `X`.
#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    /// `e_row e_col^T`
    EntryIndex { row: usize, col: usize },
    DenseMat { x: Arc<Mat> },
    /// Stencil centered at `(center_row, center_col)`, truncated at the borders.
    ConvKernel { center_row: usize, center_col: usize },
}

fn stencil_cells(
    center_row: usize,
    center_col: usize,
    dims: (usize, usize),
) -> impl Iterator<Item = (usize, usize, f64)> {
    let (m1, m2) = dims;
    CONV_STENCIL.iter().filter_map(move |&(dr, dc, w)| {
        let r = center_row as isize + dr;
        let c = center_col as isize + dc;
        (r >= 0 && c >= 0 && (r as usize) < m1 && (c as usize) < m2).then_some((r as usize, c as usize, w))
    })
}

impl Design {
    pub fn dense_mat(x: Mat) -> Self {
        Design::DenseMat { x: Arc::new(x) }
    }

    pub fn kind(&self) -> DesignKind {
        match self {
            Design::EntryIndex { .. } => DesignKind::Completion,
            Design::DenseMat { .. } => DesignKind::Sensing,
            Design::ConvKernel { .. } => DesignKind::ConvKernel,
        }
    }

    pub fn check_dims(&self, dims: (usize, usize)) -> Result<()> {
        let ok = match self {
            Design::EntryIndex { row, col } => *row < dims.0 && *col < dims.1,
            Design::DenseMat { x } => x.dims() == dims,
            Design::ConvKernel {
                center_row,
                center_col,
            } => *center_row < dims.0 && *center_col < dims.1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::dims(format!("{}x{}", dims.0, dims.1), format!("{self:?}")))
        }
    }

    /// `⟨X, m⟩ = Tr(X^T m)`.
    pub fn inner(&self, m: &Mat) -> Result<f64> {
        self.check_dims(m.dims())?;
        Ok(self.inner_unchecked(m))
    }

    #[inline]
    pub(crate) fn inner_unchecked(&self, m: &Mat) -> f64 {
        match self {
            Design::EntryIndex { row, col } => m[(*row, *col)],
            Design::DenseMat { x } => x.dot(m),
            Design::ConvKernel {
                center_row,
                center_col,
            } => stencil_cells(*center_row, *center_col, m.dims())
                .map(|(r, c, w)| w * m[(r, c)])
                .sum(),
        }
    }

    /// `acc += scalar * X`, touching only the support of `X`.
    pub fn accumulate_adjoint(&self, acc: &mut Mat, scalar: f64) -> Result<()> {
        self.check_dims(acc.dims())?;
        self.accumulate_unchecked(acc, scalar);
        Ok(())
    }

    #[inline]
    pub(crate) fn accumulate_unchecked(&self, acc: &mut Mat, scalar: f64) {
        match self {
            Design::EntryIndex { row, col } => acc[(*row, *col)] += scalar,
            Design::DenseMat { x } => acc.axpy(scalar, x),
            Design::ConvKernel {
                center_row,
                center_col,
            } => {
                let dims = acc.dims();
                for (r, c, w) in stencil_cells(*center_row, *center_col, dims) {
                    acc[(r, c)] += scalar * w;
                }
            }
        }
    }

    pub fn to_dense(&self, dims: (usize, usize)) -> Result<Mat> {
        let mut m = Mat::zeros(dims.0, dims.1);
        self.accumulate_adjoint(&mut m, 1.0)?;
        Ok(m)
    }

    /// Nonzero cells of `|X|` as `(row, col, |x|)`.
    pub(crate) fn to_abs_dense_parts(&self, dims: (usize, usize)) -> Vec<(usize, usize, f64)> {
        match self {
            Design::EntryIndex { row, col } => vec![(*row, *col, 1.0)],
            Design::DenseMat { x } => (0..x.rows())
                .flat_map(|r| (0..x.cols()).map(move |c| (r, c)))
                .filter(|&(r, c)| x[(r, c)] != 0.0)
                .map(|(r, c)| (r, c, x[(r, c)].abs()))
                .collect(),
            Design::ConvKernel {
                center_row,
                center_col,
            } => stencil_cells(*center_row, *center_col, dims)
                .map(|(r, c, w)| (r, c, w.abs()))
                .collect(),
        }
    }

    /// Frobenius norm of `X`.
    pub fn frob_norm(&self, dims: (usize, usize)) -> f64 {
        match self {
            Design::EntryIndex { .. } => 1.0,
            Design::DenseMat { x } => matcore::frob_norm(x),
            Design::ConvKernel {
                center_row,
                center_col,
            } => stencil_cells(*center_row, *center_col, dims)
                .map(|(_, _, w)| w * w)
                .sum::<f64>()
                .sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    Completion,
    Sensing,
    ConvKernel,
}

impl fmt::Display for DesignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DesignKind::Completion => "completion",
            DesignKind::Sensing => "sensing",
            DesignKind::ConvKernel => "convkernel",
        })
    }
}

impl FromStr for DesignKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "completion" => Ok(DesignKind::Completion),
            "sensing" => Ok(DesignKind::Sensing),
            "convkernel" | "conv" => Ok(DesignKind::ConvKernel),
            other => Err(Error::InvalidArgument(format!("unknown design family {other:?}"))),
        }
    }
}

/// Distribution a panel's designs are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignFamily {
    pub kind: DesignKind,
    pub dims: (usize, usize),
    /// Smallest eigenvalue of the second-moment matrix Σ.
    pub mu: f64,
    /// Entry standard deviation for sensing designs; 1 otherwise.
    pub sigma_x: f64,
}

impl DesignFamily {
    pub fn completion(m1: usize, m2: usize) -> Self {
        Self {
            kind: DesignKind::Completion,
            dims: (m1, m2),
            mu: 1.0 / (m1 * m2) as f64,
            sigma_x: 1.0,
        }
    }

    pub fn sensing(m1: usize, m2: usize, sigma_x: f64) -> Self {
        Self {
            kind: DesignKind::Sensing,
            dims: (m1, m2),
            mu: sigma_x * sigma_x,
            sigma_x,
        }
    }

    /// Convolution stencils have no closed-form Σ; `mu` is left at NaN.
    pub fn conv_kernel(m1: usize, m2: usize) -> Self {
        Self {
            kind: DesignKind::ConvKernel,
            dims: (m1, m2),
            mu: f64::NAN,
            sigma_x: 1.0,
        }
    }

    pub fn new(kind: DesignKind, m1: usize, m2: usize, sigma_x: f64) -> Self {
        match kind {
            DesignKind::Completion => Self::completion(m1, m2),
            DesignKind::Sensing => Self::sensing(m1, m2, sigma_x),
            DesignKind::ConvKernel => Self::conv_kernel(m1, m2),
        }
    }

    /// Largest eigenvalue of Σ (equal to `mu` for both closed-form families).
    pub fn mu_max(&self) -> Result<f64> {
        match self.kind {
            DesignKind::ConvKernel => Err(Error::UnsupportedFamily(
                "convolution designs have no closed-form second moment".into(),
            )),
            _ => Ok(self.mu),
        }
    }
}

/// `Σ vec(m)` reshaped, i.e. the gradient of `vec(m)^T Σ vec(m) / 2`.
pub fn second_moment_gradient(m: &Mat, family: &DesignFamily) -> Result<Mat> {
    if m.dims() != family.dims {
        return Err(Error::dims(
            format!("{}x{}", family.dims.0, family.dims.1),
            format!("{}x{}", m.rows(), m.cols()),
        ));
    }
    Ok(m.scale(family.mu_max()?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub design: Design,
    pub y: f64,
}

/// Per-time batches of observations over a `T`-point horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub dims: (usize, usize),
    pub batches: Vec<Vec<Observation>>,
    pub family: DesignFamily,
}

impl Panel {
    pub fn new(family: DesignFamily, batches: Vec<Vec<Observation>>) -> Result<Self> {
        let panel = Self {
            dims: family.dims,
            batches,
            family,
        };
        panel.validate()?;
        Ok(panel)
    }

    pub fn horizon(&self) -> usize {
        self.batches.len()
    }

    pub fn batch_sizes(&self) -> Vec<usize> {
        self.batches.iter().map(Vec::len).collect()
    }

    pub fn total_observations(&self) -> usize {
        self.batches.iter().map(Vec::len).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.0 == 0 || self.dims.1 == 0 {
            return Err(Error::InvalidDims(format!("{}x{}", self.dims.0, self.dims.1)));
        }
        if self.batches.is_empty() {
            return Err(Error::InvalidDims("panel has no time points".into()));
        }
        for (t, batch) in self.batches.iter().enumerate() {
            for obs in batch {
                obs.design.check_dims(self.dims).map_err(|e| e.at_time(t + 1))?;
                if !obs.y.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "non-finite response at t={}",
                        t + 1
                    ))
                    .at_time(t + 1));
                }
            }
        }
        Ok(())
    }
}

/// Draws one design from `family`.
pub fn sample_design<R: Rng + ?Sized>(family: &DesignFamily, rng: &mut R) -> Design {
    let (m1, m2) = family.dims;
    match family.kind {
        DesignKind::Completion => Design::EntryIndex {
            row: rng.random_range(0..m1),
            col: rng.random_range(0..m2),
        },
        DesignKind::Sensing => {
            let normal = Normal::new(0.0, family.sigma_x).expect("sigma_x is finite and >= 0");
            let data: Vec<f64> = (0..m1 * m2).map(|_| normal.sample(rng)).collect();
            Design::dense_mat(Mat::from_vec(m1, m2, data).expect("sized above"))
        }
        DesignKind::ConvKernel => Design::ConvKernel {
            center_row: rng.random_range(0..m1),
            center_col: rng.random_range(0..m2),
        },
    }
}

pub fn sample_designs_with<R: Rng + ?Sized>(family: &DesignFamily, n: usize, rng: &mut R) -> Vec<Design> {
    (0..n).map(|_| sample_design(family, rng)).collect()
}

/// `n` i.i.d. designs, deterministic in `seed`.
pub fn sample_designs(family: &DesignFamily, n: usize, seed: u64) -> Result<Vec<Design>> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one design".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample_designs_with(family, n, &mut rng))
}
