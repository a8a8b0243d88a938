//! Synthetic ground-truth paths, dependent noise, and dependent designs.

use std::f64::consts::FRAC_PI_2;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::designs::{sample_designs_with, Design, DesignFamily, DesignKind, Observation, Panel};
use crate::error::{Error, Result};
use crate::matcore::{frob_norm, Mat};

/// `M(t) = U(t) D(t) V(t)ᵀ` on `t ∈ [0, 1]`, with `U(t) = cos(πt/2) U0 + sin(πt/2) U1`
/// (same for `V`) and `D(t) = 10 (diag(k²) + t diag(k))` for `k = r, …, 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthPath {
    pub rank: usize,
    pub horizon: usize,
    u0: Mat,
    u1: Mat,
    v0: Mat,
    v1: Mat,
}

/// `n × k` matrix with orthonormal columns from Gram-Schmidt on Gaussian draws.
pub fn random_orthonormal<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Mat> {
    if k > n {
        return Err(Error::InvalidDims(format!("cannot fit {k} orthonormal columns in dimension {n}")));
    }
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    while cols.len() < k {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        // two passes keep orthogonality at rounding level
        for _ in 0..2 {
            for q in &cols {
                let d: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(x, qi)| *x -= d * qi);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            cols.push(v);
        }
    }
    Ok(Mat::from_fn(n, k, |r, c| cols[c][r]))
}

impl GroundTruthPath {
    pub fn new(m1: usize, m2: usize, rank: usize, horizon: usize, seed: u64) -> Result<Self> {
        if rank == 0 || 2 * rank > m1.min(m2) || horizon == 0 {
            return Err(Error::InvalidDims(format!(
                "need 0 < 2r <= min(m1, m2) and T > 0; got m1={m1}, m2={m2}, r={rank}, T={horizon}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let uf = random_orthonormal(m1, 2 * rank, &mut rng)?;
        let vf = random_orthonormal(m2, 2 * rank, &mut rng)?;
        let block = |f: &Mat, off: usize| Mat::from_fn(f.rows(), rank, |r, c| f[(r, c + off)]);
        Ok(Self {
            rank,
            horizon,
            u0: block(&uf, 0),
            u1: block(&uf, rank),
            v0: block(&vf, 0),
            v1: block(&vf, rank),
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.u0.rows(), self.v0.rows())
    }

    pub fn singular_values(&self, t: f64) -> Vec<f64> {
        (1..=self.rank)
            .rev()
            .map(|k| {
                let k = k as f64;
                10.0 * (k * k + t * k)
            })
            .collect()
    }

    pub fn left_factor(&self, t: f64) -> Mat {
        let (c, s) = ((FRAC_PI_2 * t).cos(), (FRAC_PI_2 * t).sin());
        let mut u = self.u0.scale(c);
        u.axpy(s, &self.u1);
        u
    }

    pub fn right_factor(&self, t: f64) -> Mat {
        let (c, s) = ((FRAC_PI_2 * t).cos(), (FRAC_PI_2 * t).sin());
        let mut v = self.v0.scale(c);
        v.axpy(s, &self.v1);
        v
    }

    /// `M(t)` for continuous `t ∈ [0, 1]`.
    pub fn eval_at(&self, t: f64) -> Mat {
        let d = self.singular_values(t);
        let mut u = self.left_factor(t);
        for r in 0..u.rows() {
            for (c, dc) in d.iter().enumerate() {
                u[(r, c)] *= dc;
            }
        }
        u.matmul(&self.right_factor(t).transpose()).expect("conformable factors")
    }

    /// Truth at grid point `j / T`; `j = 0` gives the left endpoint.
    pub fn eval_truth(&self, j: usize) -> Result<Mat> {
        if j > self.horizon {
            return Err(Error::IndexOutOfRange {
                index: j,
                horizon: self.horizon,
            });
        }
        Ok(self.eval_at(j as f64 / self.horizon as f64))
    }

    pub fn truths(&self) -> Vec<Mat> {
        (1..=self.horizon).map(|j| self.eval_at(j as f64 / self.horizon as f64)).collect()
    }

    /// Upper bound on `sup_t ‖M'(t)‖_F`.
    pub fn lipschitz_bound(&self) -> f64 {
        let d1: f64 = self.singular_values(1.0).iter().map(|x| x * x).sum::<f64>().sqrt();
        let dd: f64 = (1..=self.rank).map(|k| (10.0 * k as f64).powi(2)).sum::<f64>().sqrt();
        std::f64::consts::PI * d1 + dd
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    /// Independent `N(0, σ²)` per observation.
    Iid { sigma: f64 },
    /// Stationary AR(1) field `E_t = β E_{t−1} + √(1−β²) U_t` with `N(0, σ²)` entries;
    /// observation noise is `⟨E_t, X⟩`.
    PhiMixingAr { sigma: f64, beta: f64 },
}

impl NoiseSpec {
    pub fn sigma(&self) -> f64 {
        match *self {
            NoiseSpec::Iid { sigma } | NoiseSpec::PhiMixingAr { sigma, .. } => sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.sigma();
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::InvalidArgument(format!("noise sigma must be finite and >= 0, got {s}")));
        }
        if let NoiseSpec::PhiMixingAr { beta, .. } = *self {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::InvalidArgument(format!("beta must lie in [0, 1), got {beta}")));
            }
        }
        Ok(())
    }
}

/// Streaming AR(1) matrix field; each call to `next` advances one time step.
pub struct ArField {
    current: Option<Mat>,
    dims: (usize, usize),
    sigma: f64,
    beta: f64,
    rng: ChaCha8Rng,
}

impl ArField {
    pub fn new(dims: (usize, usize), sigma: f64, beta: f64, seed: u64) -> Self {
        Self {
            current: None,
            dims,
            sigma,
            beta,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn white(&mut self) -> Mat {
        let sigma = self.sigma;
        let rng = &mut self.rng;
        Mat::from_fn(self.dims.0, self.dims.1, |_, _| {
            sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
        })
    }
}

impl Iterator for ArField {
    type Item = Mat;

    fn next(&mut self) -> Option<Mat> {
        let innovation = self.white();
        let next = match self.current.take() {
            None => innovation,
            Some(mut prev) => {
                prev.scale_mut(self.beta);
                prev.axpy((1.0 - self.beta * self.beta).sqrt(), &innovation);
                prev
            }
        };
        self.current = Some(next.clone());
        Some(next)
    }
}

/// Noise for every observation in `designs`, batch by batch.
pub fn gen_noise(spec: &NoiseSpec, designs: &[Vec<Design>], dims: (usize, usize), seed: u64) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    match *spec {
        NoiseSpec::Iid { sigma } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(designs
                .iter()
                .map(|b| {
                    b.iter()
                        .map(|_| sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                        .collect()
                })
                .collect())
        }
        NoiseSpec::PhiMixingAr { sigma, beta } => {
            let field = ArField::new(dims, sigma, beta, seed);
            designs
                .iter()
                .zip(field)
                .map(|(b, e)| b.iter().map(|d| d.inner(&e)).collect())
                .collect()
        }
    }
}

/// Each batch after the first keeps `⌊α n⌋` designs of its predecessor and redraws the rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DependentDesignSpec {
    pub alpha: f64,
}

pub fn carried_count(alpha: f64, n: usize) -> usize {
    (alpha * n as f64).floor() as usize
}

pub fn gen_dependent_designs(
    spec: &DependentDesignSpec,
    family: &DesignFamily,
    n: usize,
    horizon: usize,
    seed: u64,
) -> Result<Vec<Vec<Design>>> {
    if !(0.0..=1.0).contains(&spec.alpha) {
        return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1], got {}", spec.alpha)));
    }
    if family.kind != DesignKind::Completion {
        return Err(Error::UnsupportedFamily(format!(
            "dependent designs are generated for completion only, got {}",
            family.kind
        )));
    }
    let keep = carried_count(spec.alpha, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Vec<Design>> = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let batch = if t == 0 {
            sample_designs_with(family, n, &mut rng)
        } else {
            let prev = &out[t - 1];
            let mut b: Vec<Design> = sample(&mut rng, n, keep).into_iter().map(|i| prev[i].clone()).collect();
            b.extend(sample_designs_with(family, n - keep, &mut rng));
            b
        };
        out.push(batch);
    }
    Ok(out)
}

/// `n = round(ρ m1 m2)`, at least 1.
pub fn n_from_rho(rho: f64, dims: (usize, usize)) -> usize {
    ((rho * (dims.0 * dims.1) as f64).round() as usize).max(1)
}

/// Panel of `n` observations per time point drawn around `path`, with its truths.
pub fn build_panel(
    path: &GroundTruthPath,
    family: &DesignFamily,
    n: usize,
    noise: &NoiseSpec,
    dependence: Option<&DependentDesignSpec>,
    seed: u64,
) -> Result<(Panel, Vec<Mat>)> {
    if family.dims != path.dims() {
        return Err(Error::dims(format!("{:?}", path.dims()), format!("{:?}", family.dims)));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one observation per time point".into()));
    }
    let mut seeder = ChaCha8Rng::seed_from_u64(seed);
    let (design_seed, noise_seed): (u64, u64) = (seeder.random(), seeder.random());
    let designs = match dependence {
        Some(dep) => gen_dependent_designs(dep, family, n, path.horizon, design_seed)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(design_seed);
            (0..path.horizon).map(|_| sample_designs_with(family, n, &mut rng)).collect()
        }
    };
    let xi = gen_noise(noise, &designs, family.dims, noise_seed)?;
    let truths = path.truths();
    let batches = designs
        .into_iter()
        .zip(&xi)
        .zip(&truths)
        .map(|((b, e), m)| {
            b.into_iter()
                .zip(e)
                .map(|(design, &eps)| {
                    let y = design.inner_unchecked(m) + eps;
                    Observation { design, y }
                })
                .collect()
        })
        .collect();
    Ok((Panel::new(*family, batches)?, truths))
}

/// Mean Frobenius distance between consecutive truths, scaled by `T`.
pub fn empirical_smoothness(truths: &[Mat]) -> f64 {
    let horizon = truths.len() as f64;
    truths
        .windows(2)
        .map(|w| frob_norm(&w[1].sub(&w[0])) * horizon)
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{numerical_rank, svd};

    fn gram_defect(a: &Mat, b: &Mat) -> f64 {
        a.transpose().matmul(b).unwrap().max_abs()
    }

    #[test]
    fn frames_are_orthonormal_and_disjoint() {
        let p = GroundTruthPath::new(30, 20, 4, 10, 5).unwrap();
        let id = Mat::identity(4);
        assert!(p.u0.transpose().matmul(&p.u0).unwrap().sub(&id).max_abs() < 1e-10);
        assert!(p.v1.transpose().matmul(&p.v1).unwrap().sub(&id).max_abs() < 1e-10);
        assert!(gram_defect(&p.u0, &p.u1) < 1e-10);
        assert!(gram_defect(&p.v0, &p.v1) < 1e-10);
        for t in [0.0, 0.3, 1.0] {
            let u = p.left_factor(t);
            assert!(u.transpose().matmul(&u).unwrap().sub(&id).max_abs() < 1e-10);
        }
    }

    #[test]
    fn truth_has_designed_spectrum() {
        let p = GroundTruthPath::new(40, 30, 10, 1, 1).unwrap();
        let m = p.eval_truth(1).unwrap();
        assert_eq!(numerical_rank(&m).unwrap(), 10);
        let s = svd(&m).unwrap().s;
        assert!((s[0] - 1100.0).abs() < 1e-8);
        assert!((s[9] - 20.0).abs() < 1e-8);
        let m0 = p.eval_truth(0).unwrap();
        assert!((svd(&m0).unwrap().s[0] - 1000.0).abs() < 1e-8);
        assert!(p.eval_truth(2).is_err());
    }

    #[test]
    fn path_is_lipschitz() {
        let p = GroundTruthPath::new(12, 10, 3, 200, 9).unwrap();
        assert!(empirical_smoothness(&p.truths()) <= p.lipschitz_bound());
    }

    #[test]
    fn ar_field_moments() {
        let (sigma, beta) = (1.5, 0.6);
        let xs: Vec<f64> = ArField::new((1, 1), sigma, beta, 3).take(20_000).map(|m| m[(0, 0)]).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let cov1 = xs.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / (n - 1.0);
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.05, "{var}");
        assert!((cov1 / var - beta).abs() < 0.05);
    }

    #[test]
    fn iid_noise_is_deterministic_per_seed() {
        let fam = DesignFamily::completion(5, 5);
        let d = vec![sample_designs_with(&fam, 10, &mut ChaCha8Rng::seed_from_u64(0)); 3];
        let spec = NoiseSpec::Iid { sigma: 1.0 };
        assert_eq!(gen_noise(&spec, &d, (5, 5), 4).unwrap(), gen_noise(&spec, &d, (5, 5), 4).unwrap());
        assert!(gen_noise(&NoiseSpec::PhiMixingAr { sigma: 1.0, beta: 1.0 }, &d, (5, 5), 4).is_err());
    }

    #[test]
    fn dependent_designs_carry_exact_count() {
        let fam = DesignFamily::completion(1000, 1000);
        let d = gen_dependent_designs(&DependentDesignSpec { alpha: 0.9 }, &fam, 100, 5, 2).unwrap();
        for w in d.windows(2) {
            assert_eq!(w[1].len(), 100);
            let shared = w[1][..90].iter().filter(|x| w[0].contains(x)).count();
            assert_eq!(shared, 90);
        }
        let indep = gen_dependent_designs(&DependentDesignSpec { alpha: 0.0 }, &fam, 100, 2, 2).unwrap();
        assert!(indep[1].iter().filter(|x| indep[0].contains(x)).count() < 5);
    }

    #[test]
    fn panel_responses_match_truth_without_noise() {
        let p = GroundTruthPath::new(8, 6, 2, 4, 0).unwrap();
        let fam = DesignFamily::completion(8, 6);
        let (panel, truths) = build_panel(&p, &fam, 12, &NoiseSpec::Iid { sigma: 0.0 }, None, 1).unwrap();
        assert_eq!(panel.batch_sizes(), vec![12; 4]);
        for (b, m) in panel.batches.iter().zip(&truths) {
            for o in b {
                assert_eq!(o.y, o.design.inner(m).unwrap());
            }
        }
        assert_eq!(n_from_rho(0.25, (8, 6)), 12);
    }
}
