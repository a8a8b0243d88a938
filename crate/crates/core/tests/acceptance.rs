//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Failures are reported but do not fail the process unless
//! `DYNREC_ACCEPTANCE_STRICT=1` is set.

use std::collections::HashMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dynrec::designs::{read_triplets_from, sample_designs, write_triplets_to};
use dynrec::estimators::recover;
use dynrec::evalharness::experiment::{choose_bandwidth, choose_lambda};
use dynrec::evalharness::ingest::ingest_triplets_from;
use dynrec::evalharness::metrics::{bias_diagnostic, fit_log_slope, noise_diagnostic};
use dynrec::evalharness::{run_experiment, BandwidthMode, ExperimentConfig, IngestOptions, Scenario};
use dynrec::kernelband::{kernel_constants, weights};
use dynrec::matcore::{read_dmr1_from, write_dmr1_to};
use dynrec::matcore::{frob_norm, spectral_norm, svd, svt};
use dynrec::solver::{gradient, initial_matrix, solve_at, solve_path};
use dynrec::synthgen::{build_panel, carried_count, gen_dependent_designs, n_from_rho, ArField, GroundTruthPath, NoiseSpec};
use dynrec::{
    Design, DesignFamily, EstimatorKind, GradientMode, KernelKind, Mat, Observation, Panel, SolverConfig, WindowProblem,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gaussian_mat(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn completion_panel(dims: (usize, usize), horizon: usize, n: usize, seed: u64) -> Panel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batches = (0..horizon)
        .map(|_| {
            (0..n)
                .map(|_| Observation {
                    design: Design::EntryIndex {
                        row: rng.random_range(0..dims.0),
                        col: rng.random_range(0..dims.1),
                    },
                    y: rng.random_range(-2.0..2.0),
                })
                .collect()
        })
        .collect();
    Panel::new(DesignFamily::completion(dims.0, dims.1), batches).unwrap()
}

fn tmp_config(scenario: Scenario, dir: &tempfile::TempDir) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(scenario);
    cfg.output_dir = dir.path().to_path_buf();
    cfg
}

fn svt_optimality() -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let g = gaussian_mat(7, 5, &mut rng);
        let s = svd(&g).map_err(|e| e.to_string())?;
        let tau = 0.5 * (s.s[1] + s.s[2]);
        let m = svt(&g, tau).map_err(|e| e.to_string())?;
        // G − M must equal τ U_r V_rᵀ + W with ‖W‖ ≤ τ and W orthogonal to the support of M.
        let sm = svd(&m).map_err(|e| e.to_string())?;
        let r = sm.numerical_rank();
        let ur = Mat::from_fn(7, r, |i, j| sm.u[(i, j)]);
        let vr = Mat::from_fn(5, r, |i, j| sm.v[(i, j)]);
        let w = g.sub(&m).sub(&ur.matmul(&vr.transpose()).unwrap().scale(tau));
        let left = frob_norm(&ur.transpose().matmul(&w).unwrap());
        let right = frob_norm(&w.matmul(&vr).unwrap());
        let excess = (spectral_norm(&w).unwrap() - tau).max(0.0);
        worst = worst.max(left).max(right).max(excess);
    }
    Ok(worst)
}

fn finite_difference_worst() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let completion = completion_panel((3, 3), 1, 12, 3);
    let sensing = {
        let obs = (0..10)
            .map(|_| Observation {
                design: Design::dense_mat(gaussian_mat(3, 3, &mut rng)),
                y: rng.random_range(-1.0..1.0),
            })
            .collect();
        Panel::new(DesignFamily::sensing(3, 3, 1.0), vec![obs]).unwrap()
    };
    let mut worst: f64 = 0.0;
    for panel in [&completion, &sensing] {
        let w = WindowProblem::new(panel, 1, 0.0, KernelKind::Degenerate).unwrap();
        for mode in [GradientMode::ExactSecondMoment, GradientMode::Empirical] {
            let m = gaussian_mat(3, 3, &mut rng);
            let g = gradient(&m, &w, mode).unwrap();
            let eps = 1e-6;
            let fd = Mat::from_fn(3, 3, |i, j| {
                let (mut p, mut q) = (m.clone(), m.clone());
                p[(i, j)] += eps;
                q[(i, j)] -= eps;
                (w.smooth_objective(&p, mode).unwrap() - w.smooth_objective(&q, mode).unwrap()) / (2.0 * eps)
            });
            worst = worst.max(frob_norm(&fd.sub(&g)) / frob_norm(&g).max(1e-12));
        }
    }
    worst
}

fn fista_rate() -> Result<(usize, f64), String> {
    let path = GroundTruthPath::new(20, 15, 2, 1, 4).map_err(|e| e.to_string())?;
    let family = DesignFamily::completion(20, 15);
    let (panel, _) = build_panel(&path, &family, 150, &NoiseSpec::Iid { sigma: 0.5 }, None, 8).map_err(|e| e.to_string())?;
    let w = WindowProblem::new(&panel, 1, 0.0, KernelKind::Degenerate).map_err(|e| e.to_string())?;
    let init = initial_matrix(&panel.batches[0], panel.dims);
    let base = SolverConfig {
        lambda: 0.02,
        gradient_mode: Some(GradientMode::Empirical),
        tol: f64::MIN_POSITIVE,
        ..SolverConfig::default()
    };
    let (m_star, reference) = solve_at(&w, &init, &SolverConfig { max_iters: 50_000, ..base.clone() }).map_err(|e| e.to_string())?;
    let f_star = reference.objective_path.iter().copied().fold(f64::INFINITY, f64::min);
    let (_, trace) = solve_at(&w, &init, &SolverConfig { max_iters: 500, ..base }).map_err(|e| e.to_string())?;
    let gamma0 = frob_norm(&init.sub(&m_star));
    let slack = 1e-9 * f_star.abs().max(1.0);
    let mut violations = 0;
    let mut tightest = f64::INFINITY;
    for (k, f) in trace.objective_path.iter().enumerate().skip(1) {
        let bound = 2.0 * trace.lipschitz * gamma0 * gamma0 / ((k + 1) as f64).powi(2);
        let gap = f - f_star;
        if gap > bound + slack {
            violations += 1;
        }
        tightest = tightest.min(bound - gap);
    }
    Ok((violations, tightest))
}

fn a1() -> Outcome {
    let svt_err = svt_optimality()?;
    let fd = finite_difference_worst();
    let (violations, margin) = fista_rate()?;
    check(
        svt_err <= 1e-6 && fd <= 1e-5 && violations == 0,
        format!("svt subgradient residual {svt_err:.2e}, finite-difference rel err {fd:.2e}, rate-bound violations {violations} (min margin {margin:.3e})"),
    )
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + f(b) + inner) * h / 3.0
}

fn a2() -> Outcome {
    let k = KernelKind::Epanechnikov;
    let (alpha, r) = kernel_constants(k).map_err(|e| e.to_string())?;
    let alpha_q = simpson(|x| x * x * k.eval(x), -1.0, 1.0, 4000);
    let r_q = simpson(|x| k.eval(x).powi(2), -1.0, 1.0, 4000);
    let exact = alpha == 1.0 / 5.0 && r == 3.0 / 5.0;
    let quad = (alpha_q - 0.2).abs() <= 1e-10 && (r_q - 0.6).abs() <= 1e-10;
    let mut weight_ok = true;
    for (horizon, h) in [(50, 0.1), (100, 0.05), (31, 0.2)] {
        let t = horizon / 2;
        let w = weights(t, horizon, h, k).map_err(|e| e.to_string())?;
        let sum: f64 = w.iter().sum();
        let sym = (1..t.min(horizon - t)).all(|d| (w[t - 1 - d] - w[t - 1 + d]).abs() <= 1e-15);
        weight_ok &= (sum - 1.0).abs() <= 1e-12 && sym;
    }
    check(
        exact && quad && weight_ok,
        format!("alpha {alpha} R {r}; quadrature {alpha_q:.12} {r_q:.12}; interior weights normalized and symmetric: {weight_ok}"),
    )
}

fn a3() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = tmp_config(Scenario::RhoTauSweep, &dir);
    cfg.ratio_pairs = vec![(5.0, 25), (5.0, 50), (10.0, 25), (10.0, 50), (20.0, 25), (20.0, 50)];
    cfg.replicates = vec![1, 2, 3];
    let out = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let slope = out.slope().ok_or("no slope row")?;
    check((-1.0..=-0.6).contains(&slope), format!("log-log slope {slope:.3} (target [-1.0, -0.6])"))
}

fn mse_by_estimator(out: &dynrec::evalharness::ExperimentOutput) -> HashMap<EstimatorKind, f64> {
    out.summary
        .iter()
        .filter(|r| r.slope.is_none())
        .filter_map(|r| r.avg_mse.map(|m| (r.estimator, m)))
        .collect()
}

fn a4() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = tmp_config(Scenario::BaselineComparison, &dir);
    cfg.rho = 0.2;
    cfg.static_rho = 0.8;
    let out = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let m = mse_by_estimator(&out);
    let (d, s, t) = (m[&EstimatorKind::Dlr], m[&EstimatorKind::Static], m[&EstimatorKind::TwoStep]);
    check(d < s && d < t, format!("avg MSE dlr {d:.4}, static {s:.4}, twostep {t:.4}"))
}

fn point_mse(out: &dynrec::evalharness::ExperimentOutput, param: &str, x: f64) -> Result<f64, String> {
    out.summary
        .iter()
        .find(|r| r.param == param && r.x == Some(x))
        .and_then(|r| r.avg_mse)
        .ok_or_else(|| format!("missing {param}={x}"))
}

fn a5() -> Outcome {
    let replicates: Vec<u64> = (1..=5).collect();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut noise = tmp_config(Scenario::NoiseDependence, &dir);
    noise.sigma = 1.0;
    noise.betas = vec![0.0, 0.9];
    noise.replicates = replicates.clone();
    let out = run_experiment(&noise).map_err(|e| e.to_string())?;
    let (b0, b9) = (point_mse(&out, "beta", 0.0)?, point_mse(&out, "beta", 0.9)?);

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut design = tmp_config(Scenario::DesignDependence, &dir);
    design.sigma = 1.0;
    design.alphas = vec![0.0, 0.9];
    design.replicates = replicates;
    let out = run_experiment(&design).map_err(|e| e.to_string())?;
    let (a0, a9) = (point_mse(&out, "alpha", 0.0)?, point_mse(&out, "alpha", 0.9)?);

    let beta_rise = b9 / b0 - 1.0;
    let alpha_rise = a9 / a0 - 1.0;
    check(
        beta_rise >= 0.10 && alpha_rise >= 0.10,
        format!(
            "beta 0 -> 0.9: {b0:.4} -> {b9:.4} ({:+.1}%); alpha 0 -> 0.9: {a0:.4} -> {a9:.4} ({:+.1}%)",
            100.0 * beta_rise,
            100.0 * alpha_rise
        ),
    )
}

fn warm_cold(horizon: usize, lambda: Option<f64>) -> Result<(usize, usize, f64), String> {
    let (m1, m2, r) = (120, 80, 5);
    let path = GroundTruthPath::new(m1, m2, r, horizon, 1).map_err(|e| e.to_string())?;
    let family = DesignFamily::completion(m1, m2);
    let n = n_from_rho(0.2, (m1, m2));
    let (panel, _) = build_panel(&path, &family, n, &NoiseSpec::Iid { sigma: 1.0 }, None, 3).map_err(|e| e.to_string())?;
    let mut cfg = ExperimentConfig::new(Scenario::RhoTauSweep);
    cfg.horizon = horizon;
    let h = choose_bandwidth(BandwidthMode::Auto { c_h: 0.2 }, &panel, r).map_err(|e| e.to_string())?;
    let lambda = match lambda {
        Some(l) => l,
        None => choose_lambda(&cfg, &panel, EstimatorKind::Dlr, h, 3).map_err(|e| e.to_string())?,
    };
    let solver = cfg.solver(lambda);
    let iters = |warm| -> Result<usize, String> {
        let (_, traces) = solve_path(&panel, h, KernelKind::Epanechnikov, &solver, warm).map_err(|e| e.to_string())?;
        Ok(traces.iter().map(|t| t.iters_used).sum())
    };
    Ok((iters(true)?, iters(false)?, lambda))
}

fn a6() -> Outcome {
    let (w1, c1, lambda) = warm_cold(25, None)?;
    let (w2, c2, _) = warm_cold(50, Some(lambda))?;
    let (r1, r2) = (w1 as f64 / c1 as f64, w2 as f64 / c2 as f64);
    check(
        w1 < c1 && w2 < c2 && r2 < r1,
        format!("T=25 warm {w1} / cold {c1} = {r1:.3}; T=50 warm {w2} / cold {c2} = {r2:.3}"),
    )
}

fn a7() -> Outcome {
    let mut ar_ok = true;
    let mut ar_detail = Vec::new();
    for beta in [0.0, 0.5, 0.9] {
        let sigma = 1.5;
        let steps = 10_000;
        let fields: Vec<Mat> = ArField::new((4, 4), sigma, beta, 21).take(steps).collect();
        let cells = 16.0;
        let var = fields.iter().map(|m| m.dot(m)).sum::<f64>() / (steps as f64 * cells);
        let lag = fields.windows(2).map(|p| p[0].dot(&p[1])).sum::<f64>() / ((steps - 1) as f64 * cells);
        let rho1 = lag / var;
        let var_ok = (var / (sigma * sigma) - 1.0).abs() <= 0.05;
        let rho_ok = (rho1 - beta).abs() <= 0.05;
        ar_ok &= var_ok && rho_ok;
        ar_detail.push(format!("beta {beta}: var ratio {:.3}, lag-1 {rho1:.3}", var / (sigma * sigma)));
    }

    let family = DesignFamily::completion(6, 5);
    let draws = 60_000;
    let designs = sample_designs(&family, draws, 5).map_err(|e| e.to_string())?;
    let mut counts = vec![0usize; 30];
    for d in &designs {
        if let Design::EntryIndex { row, col } = d {
            counts[row * 5 + col] += 1;
        }
    }
    let p = 1.0 / 30.0;
    let (mean, sd) = (draws as f64 * p, (draws as f64 * p * (1.0 - p)).sqrt());
    let worst_z = counts.iter().map(|&c| (c as f64 - mean).abs() / sd).fold(0.0, f64::max);
    let uniform_ok = worst_z <= 4.0;

    let big = DesignFamily::completion(30, 20);
    let mut carry_ok = true;
    for (alpha, n) in [(0.0, 50), (0.37, 101), (0.9, 120), (1.0, 40)] {
        let spec = dynrec::synthgen::DependentDesignSpec { alpha };
        let batches = gen_dependent_designs(&spec, &big, n, 4, 9).map_err(|e| e.to_string())?;
        let keep = carried_count(alpha, n);
        carry_ok &= keep == (alpha * n as f64).floor() as usize;
        for t in 1..batches.len() {
            let mut pool = batches[t - 1].clone();
            let carried = batches[t][..keep].iter().all(|d| match pool.iter().position(|q| q == d) {
                Some(i) => {
                    pool.swap_remove(i);
                    true
                }
                None => false,
            });
            carry_ok &= carried && batches[t].len() == n;
        }
    }
    check(
        ar_ok && uniform_ok && carry_ok,
        format!("{}; cell frequency max |z| {worst_z:.2}; carry-over exact: {carry_ok}", ar_detail.join(", ")),
    )
}

fn a8() -> Outcome {
    let path = GroundTruthPath::new(30, 20, 3, 8, 2).map_err(|e| e.to_string())?;
    let family = DesignFamily::completion(30, 20);
    let (panel, _) = build_panel(&path, &family, 240, &NoiseSpec::Iid { sigma: 0.5 }, None, 6).map_err(|e| e.to_string())?;
    let cfg = SolverConfig::with_lambda(0.01);
    let run = |kind, kernel| recover(&panel, kind, 0.3, kernel, &cfg).map_err(|e| e.to_string());
    let stat = run(EstimatorKind::Static, KernelKind::Degenerate)?;
    let dlr = run(EstimatorKind::Dlr, KernelKind::Degenerate)?;
    let two = run(EstimatorKind::TwoStep, KernelKind::Degenerate)?;
    let gap = |a: &[Mat], b: &[Mat]| a.iter().zip(b).map(|(x, y)| x.sub(y).max_abs()).fold(0.0, f64::max);
    let (g_dlr, g_two) = (gap(&dlr, &stat), gap(&two, &stat));

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let obs: Vec<Observation> = (0..25)
        .map(|_| {
            let x = rng.random_range(-2.0..2.0);
            Observation {
                design: Design::dense_mat(Mat::filled(1, 1, x)),
                y: 0.7 * x + rng.random_range(-0.3..0.3),
            }
        })
        .collect();
    let ls = obs.iter().map(|o| o.y * scalar(&o.design)).sum::<f64>() / obs.iter().map(|o| scalar(&o.design).powi(2)).sum::<f64>();
    let scalar_panel = Panel::new(DesignFamily::sensing(1, 1, 1.0), vec![obs]).map_err(|e| e.to_string())?;
    let w = WindowProblem::new(&scalar_panel, 1, 0.0, KernelKind::Degenerate).map_err(|e| e.to_string())?;
    let scfg = SolverConfig {
        lambda: 0.0,
        tol: f64::MIN_POSITIVE,
        max_iters: 10_000,
        gradient_mode: Some(GradientMode::Empirical),
        ..SolverConfig::default()
    };
    let (m, _) = solve_at(&w, &Mat::zeros(1, 1), &scfg).map_err(|e| e.to_string())?;
    let ls_err = (m[(0, 0)] - ls).abs();

    let wp = WindowProblem::new(&panel, 4, 0.3, KernelKind::Epanechnikov).map_err(|e| e.to_string())?;
    let shrink_all = spectral_norm(&wp.data_term()).map_err(|e| e.to_string())? / 2.0;
    let init = initial_matrix(&panel.batches[3], panel.dims);
    let (zero, _) = solve_at(&wp, &init, &SolverConfig::with_lambda(shrink_all * 1.0001)).map_err(|e| e.to_string())?;
    let zero_max = zero.max_abs();

    check(
        g_dlr <= cfg.tol && g_two <= cfg.tol && ls_err <= 1e-8 && zero_max == 0.0,
        format!(
            "dlr vs static {g_dlr:.1e}, twostep vs static {g_two:.1e}, lambda=0 vs least squares {ls_err:.1e}, max |M| above shrink-all {zero_max:.1e}"
        ),
    )
}

fn scalar(d: &Design) -> f64 {
    match d {
        Design::DenseMat { x } => x[(0, 0)],
        _ => unreachable!(),
    }
}

fn a9() -> Outcome {
    let dims = (20, 15);
    let family = DesignFamily::completion(dims.0, dims.1);
    let path = GroundTruthPath::new(dims.0, dims.1, 2, 1, 5).map_err(|e| e.to_string())?;
    let ns = [200usize, 800, 3200, 12_800];
    let mut means = Vec::new();
    for &n in &ns {
        let mut acc = 0.0;
        for rep in 0..20 {
            let (panel, truths) = build_panel(&path, &family, n, &NoiseSpec::Iid { sigma: 1.0 }, None, 1000 + rep)
                .map_err(|e| e.to_string())?;
            acc += noise_diagnostic(&panel, &truths, &[1.0]).map_err(|e| e.to_string())?;
        }
        means.push(acc / 20.0);
    }
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let (slope, _) = fit_log_slope(&xs, &means).map_err(|e| e.to_string())?;

    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (a, b) = (gaussian_mat(6, 4, &mut rng), gaussian_mat(6, 4, &mut rng));
    let horizon = 40;
    let constant: Vec<Mat> = vec![a.clone(); horizon];
    let linear: Vec<Mat> = (1..=horizon).map(|j| a.add(&b.scale(j as f64 / horizon as f64))).collect();
    let mut worst_bias: f64 = 0.0;
    for t in [15, 20, 26] {
        let w = weights(t, horizon, 0.2, KernelKind::Epanechnikov).map_err(|e| e.to_string())?;
        worst_bias = worst_bias
            .max(bias_diagnostic(&constant, t, &w).map_err(|e| e.to_string())?)
            .max(bias_diagnostic(&linear, t, &w).map_err(|e| e.to_string())?);
    }
    check(
        (slope + 0.5).abs() <= 0.1 && worst_bias <= 1e-12,
        format!("noise diagnostic slope {slope:.3} (target -0.5 +/- 0.1); interior bias {worst_bias:.1e}"),
    )
}

fn a10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut m = Mat::from_fn(9, 7, |_, _| rng.random::<f64>() * 10f64.powi(rng.random_range(-300..300)));
    m[(0, 0)] = -0.0;
    m[(1, 1)] = f64::MIN_POSITIVE / 3.0;
    m[(2, 2)] = f64::MAX;
    let mut buf = Vec::new();
    write_dmr1_to(&mut buf, &m).map_err(|e| e.to_string())?;
    let back = read_dmr1_from(buf.as_slice()).map_err(|e| e.to_string())?;
    let dmr1_ok = back.dims() == m.dims() && back.as_slice().iter().zip(m.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits());

    let panel = {
        let mut p = completion_panel((11, 13), 5, 40, 32);
        p.batches[2].clear();
        for o in p.batches.iter_mut().flatten() {
            o.y = rng.random::<f64>() * 1e-7 - 3.3e5 * rng.random::<f64>();
        }
        p
    };
    let mut text = Vec::new();
    write_triplets_to(&mut text, &panel).map_err(|e| e.to_string())?;
    let reread = read_triplets_from(text.as_slice(), Some(panel.dims), Some(panel.horizon())).map_err(|e| e.to_string())?;
    let triplets_ok = reread.batches.len() == panel.batches.len()
        && reread.batches.iter().zip(&panel.batches).all(|(a, b)| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.design == y.design && x.y.to_bits() == y.y.to_bits())
        });

    let mut csv = String::from("timestamp,row,col,value\n");
    let mut input = Vec::new();
    for i in 0..200 {
        let (u, c, v) = (format!("user{}", rng.random_range(0..17)), format!("item{}", rng.random_range(0..9)), rng.random_range(0.5..5.0f64));
        csv.push_str(&format!("{},{u},{c},{v:?}\n", 1_000_000 - 7 * i));
        input.push((u, c, v.to_bits()));
    }
    let ing = ingest_triplets_from(csv.as_bytes(), &IngestOptions::new(1, 1.0, 4)).map_err(|e| e.to_string())?;
    let mut output: Vec<(String, String, u64)> = ing.train.batches[0]
        .iter()
        .map(|o| match o.design {
            Design::EntryIndex { row, col } => (ing.row_ids[row].clone(), ing.col_ids[col].clone(), o.y.to_bits()),
            _ => unreachable!(),
        })
        .collect();
    input.sort();
    output.sort();
    let ingest_ok = input == output && ing.test.total_observations() == 0 && ing.train.horizon() == 1;
    check(
        dmr1_ok && triplets_ok && ingest_ok,
        format!("dmr1 bit-exact {dmr1_ok}, triplets bit-exact {triplets_ok}, ingest multiset preserved {ingest_ok}"),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("A1", a1),
        ("A2", a2),
        ("A3", a3),
        ("A4", a4),
        ("A5", a5),
        ("A6", a6),
        ("A7", a7),
        ("A8", a8),
        ("A9", a9),
        ("A10", a10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == name) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                println!("FAIL {name}: {detail} [{secs:.1}s]");
                failed.push(name);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failing criteria {}", failed.join(", "));
        if std::env::var("DYNREC_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}
