use std::fs::{self, File};
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use dynrec::designs::{read_manifest_panel, read_triplets, write_manifest_panel, write_triplets};
use dynrec::estimators::{cross_validate_refined, recover_with_traces, CvPlan, EstimatorKind};
use dynrec::evalharness::experiment::{choose_bandwidth, choose_lambda, read_csv_rows, BandwidthMode, LambdaMode};
use dynrec::evalharness::ingest::write_id_table;
use dynrec::evalharness::{
    fit_log_slope, ingest_triplets, init_thread_pool_from_env, run_experiment, ExperimentConfig, IngestOptions,
};
use dynrec::matcore::write_dmr1;
use dynrec::solver::write_traces_csv;
use dynrec::synthgen::{build_panel, n_from_rho, DependentDesignSpec, GroundTruthPath, NoiseSpec};
use dynrec::{DesignFamily, DesignKind, Error, KernelKind, Panel, Result, SolverConfig};

#[derive(Parser)]
#[command(name = "dynrec", version, about = "Dynamic low-rank matrix recovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a panel around the smooth rotating ground-truth path.
    Simulate(SimulateArgs),
    /// Recover the matrix path from a panel.
    Recover(RecoverArgs),
    /// Cross-validate λ and write the `lambda,score` report.
    Cv(CvArgs),
    /// Bin a `timestamp,row,col,value` file into train and test panels.
    Ingest(IngestArgs),
    /// Run a scenario from a JSON config.
    Experiment(ExperimentArgs),
    /// Fit a log-log slope to an `x,y` CSV.
    Slope(SlopeArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 120)]
    m1: usize,
    #[arg(long, default_value_t = 80)]
    m2: usize,
    #[arg(long, default_value_t = 5)]
    rank: usize,
    #[arg(long, default_value_t = 50)]
    horizon: usize,
    /// Observations per time point as a fraction of m1*m2.
    #[arg(long, default_value_t = 0.2)]
    rho: f64,
    #[arg(long, default_value = "completion")]
    family: DesignKind,
    #[arg(long, default_value_t = 1.0)]
    sigma_x: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// AR(1) coefficient of the noise field; 0 gives independent noise.
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    /// Fraction of each design batch carried over from the previous one.
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1)]
    truth_seed: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PanelArgs {
    /// Triplet CSV, or a directory holding manifest.json.
    #[arg(long)]
    panel: PathBuf,
    #[arg(long, default_value = "epanechnikov")]
    kernel: KernelKind,
    /// Bandwidth as a number, or `auto` for the plug-in rule.
    #[arg(long, default_value = "auto")]
    bandwidth: String,
    /// Constant of the plug-in bandwidth rule.
    #[arg(long, default_value_t = 0.2)]
    ch: f64,
    /// Rank guess for the plug-in bandwidth.
    #[arg(long, default_value_t = 5)]
    rank_guess: usize,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    /// `exact` or `empirical`; defaults by design family.
    #[arg(long)]
    gradient: Option<dynrec::GradientMode>,
    #[arg(long, default_value = "dlr")]
    estimator: EstimatorKind,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct RecoverArgs {
    #[command(flatten)]
    panel: PanelArgs,
    /// Penalty as a number, or `cv`.
    #[arg(long, default_value = "cv")]
    lambda: String,
    /// Disable warm starts across time.
    #[arg(long)]
    cold: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    panel: PanelArgs,
    /// Comma-separated λ grid; defaults to multiples of the theoretical λ.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    fine_points: usize,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    bins: usize,
    #[arg(long, default_value_t = 0.8)]
    split: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    min_row_count: usize,
    #[arg(long, default_value_t = 0)]
    min_col_count: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Comma-separated replicate seeds.
    #[arg(long, value_delimiter = ',')]
    replicates: Option<Vec<u64>>,
    #[arg(long)]
    ch: Option<f64>,
}

#[derive(Args)]
struct SlopeArgs {
    /// CSV with header `x,y`.
    #[arg(long)]
    input: PathBuf,
}

fn load_panel(path: &Path) -> Result<Panel> {
    if path.is_dir() {
        read_manifest_panel(path)
    } else {
        read_triplets(path, None, None)
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), value)?;
    Ok(())
}

fn bandwidth_mode(args: &PanelArgs) -> Result<BandwidthMode> {
    if args.bandwidth.eq_ignore_ascii_case("auto") {
        return Ok(BandwidthMode::Auto { c_h: args.ch });
    }
    let h: f64 = args
        .bandwidth
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("--bandwidth must be a number or auto, got {:?}", args.bandwidth)))?;
    Ok(BandwidthMode::Fixed { h })
}

fn solver(args: &PanelArgs, lambda: f64) -> SolverConfig {
    SolverConfig {
        lambda,
        max_iters: args.max_iters,
        tol: args.tol,
        gradient_mode: args.gradient,
        ..SolverConfig::default()
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let path = GroundTruthPath::new(a.m1, a.m2, a.rank, a.horizon, a.truth_seed)?;
    let family = DesignFamily::new(a.family, a.m1, a.m2, a.sigma_x);
    let n = n_from_rho(a.rho, family.dims);
    let noise = if a.beta > 0.0 {
        NoiseSpec::PhiMixingAr {
            sigma: a.sigma,
            beta: a.beta,
        }
    } else {
        NoiseSpec::Iid { sigma: a.sigma }
    };
    let dep = DependentDesignSpec { alpha: a.alpha };
    let (panel, truths) = build_panel(&path, &family, n, &noise, (a.alpha > 0.0).then_some(&dep), a.seed)?;
    fs::create_dir_all(&a.out)?;
    let panel_file = if family.kind == DesignKind::Completion {
        write_triplets(a.out.join("panel.csv"), &panel)?;
        "panel.csv"
    } else {
        write_manifest_panel(a.out.join("panel"), &panel)?;
        "panel"
    };
    for (t, m) in truths.iter().enumerate() {
        write_dmr1(a.out.join(format!("truth_t{}.dmr1", t + 1)), m)?;
    }
    write_json(
        &a.out.join("simulate.json"),
        &json!({
            "m1": a.m1, "m2": a.m2, "rank": a.rank, "horizon": a.horizon, "rho": a.rho, "n": n,
            "family": family, "noise": noise, "alpha": a.alpha,
            "truth_seed": a.truth_seed, "seed": a.seed, "panel": panel_file,
        }),
    )?;
    eprintln!("wrote {} observations over {} time points to {}", panel.total_observations(), a.horizon, a.out.display());
    Ok(())
}

fn experiment_shell(args: &PanelArgs, lambda: LambdaMode) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::new(dynrec::evalharness::Scenario::RealData);
    cfg.kernel = args.kernel;
    cfg.bandwidth = bandwidth_mode(args)?;
    cfg.lambda = lambda;
    cfg.max_iters = args.max_iters;
    cfg.tol = args.tol;
    cfg.rank = args.rank_guess;
    Ok(cfg)
}

fn recover_cmd(a: RecoverArgs) -> Result<()> {
    let panel = load_panel(&a.panel.panel)?;
    let lambda_mode = if a.lambda.eq_ignore_ascii_case("cv") {
        LambdaMode::default()
    } else {
        let value = a
            .lambda
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("--lambda must be a number or cv, got {:?}", a.lambda)))?;
        LambdaMode::Fixed { value }
    };
    let shell = experiment_shell(&a.panel, lambda_mode)?;
    let h = choose_bandwidth(shell.bandwidth, &panel, a.panel.rank_guess)?;
    let lambda = choose_lambda(&shell, &panel, a.panel.estimator, h, a.panel.seed)?;
    let cfg = solver(&a.panel, lambda);
    let rec = if a.cold {
        let (estimates, traces) = dynrec::solver::solve_path(&panel, h, a.panel.kernel, &cfg, false)?;
        dynrec::estimators::Recovery { estimates, traces }
    } else {
        recover_with_traces(&panel, a.panel.estimator, h, a.panel.kernel, &cfg)?
    };
    fs::create_dir_all(&a.out)?;
    for (t, m) in rec.estimates.iter().enumerate() {
        write_dmr1(a.out.join(format!("estimate_t{}.dmr1", t + 1)), m)?;
    }
    write_traces_csv(BufWriter::new(File::create(a.out.join("traces.csv"))?), &rec.traces)?;
    write_json(
        &a.out.join("recover.json"),
        &json!({
            "panel": a.panel.panel, "estimator": a.panel.estimator, "kernel": a.panel.kernel,
            "h": h, "lambda": lambda, "warm_start": !a.cold,
            "max_iters": cfg.max_iters, "tol": cfg.tol, "total_iterations": rec.total_iters(),
        }),
    )?;
    eprintln!("h = {h}, lambda = {lambda}, iterations = {}", rec.total_iters());
    Ok(())
}

fn cv_cmd(a: CvArgs) -> Result<()> {
    let panel = load_panel(&a.panel.panel)?;
    let shell = experiment_shell(&a.panel, LambdaMode::default())?;
    let h = choose_bandwidth(shell.bandwidth, &panel, a.panel.rank_guess)?;
    let grid = match a.grid {
        Some(g) => g,
        None => {
            let summary = dynrec::kernelband::PanelSummary::from_panel(&panel);
            let anchor = dynrec::estimators::theory_lambda(
                &panel.family,
                summary.mean_batch_size,
                panel.horizon(),
                h,
                dynrec::estimators::default_sigma_star(&summary, &panel.family),
                1.0,
            )?;
            dynrec::estimators::default_lambda_grid(anchor)
        }
    };
    let plan = CvPlan {
        folds: a.folds,
        lambda_grid: grid,
        split_seed: a.panel.seed,
    };
    let kind = match a.panel.estimator {
        EstimatorKind::TwoStep => EstimatorKind::Static,
        k => k,
    };
    let report = cross_validate_refined(&panel, kind, h, a.panel.kernel, &plan, &solver(&a.panel, 0.0), a.fine_points)?;
    match a.out {
        Some(p) => report.write_csv(BufWriter::new(File::create(p)?))?,
        None => report.write_csv(io::stdout().lock())?,
    }
    eprintln!("lambda* = {}", report.lambda_star);
    Ok(())
}

fn ingest_cmd(a: IngestArgs) -> Result<()> {
    let opts = IngestOptions {
        bins: a.bins,
        split: a.split,
        seed: a.seed,
        min_row_count: a.min_row_count,
        min_col_count: a.min_col_count,
    };
    let data = ingest_triplets(&a.input, &opts)?;
    fs::create_dir_all(&a.out)?;
    write_triplets(a.out.join("train.csv"), &data.train)?;
    write_triplets(a.out.join("test.csv"), &data.test)?;
    write_id_table(File::create(a.out.join("row_ids.csv"))?, &data.row_ids)?;
    write_id_table(File::create(a.out.join("col_ids.csv"))?, &data.col_ids)?;
    write_json(&a.out.join("ingest.json"), &json!({ "input": a.input, "options": opts, "dims": data.train.dims }))?;
    eprintln!(
        "{} rows x {} cols, {} train / {} test observations in {} bins",
        data.row_ids.len(),
        data.col_ids.len(),
        data.train.total_observations(),
        data.test.total_observations(),
        a.bins
    );
    Ok(())
}

fn experiment_cmd(a: ExperimentArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::from_path(&a.config)?;
    if let Some(d) = a.output_dir {
        cfg.output_dir = d;
    }
    if let Some(r) = a.replicates {
        cfg.replicates = r;
    }
    if let Some(c_h) = a.ch {
        cfg.bandwidth = BandwidthMode::Auto { c_h };
    }
    let out = run_experiment(&cfg)?;
    for row in &out.summary {
        match (row.avg_mse, row.slope) {
            (_, Some(s)) => println!("{}\tslope {s:.4}", row.label),
            (Some(m), None) => println!("{}\t{}\tavg mse {m:.6}", row.label, row.estimator),
            _ => {}
        }
    }
    eprintln!("config {} -> {}", out.config_hash, cfg.output_dir.display());
    Ok(())
}

#[derive(serde::Deserialize)]
struct Xy {
    x: f64,
    y: f64,
}

fn slope_cmd(a: SlopeArgs) -> Result<()> {
    let rows: Vec<Xy> = read_csv_rows(File::open(&a.input)?)?;
    let xs: Vec<f64> = rows.iter().map(|r| r.x).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.y).collect();
    let (slope, intercept) = fit_log_slope(&xs, &ys)?;
    println!("slope,intercept\n{slope:?},{intercept:?}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_thread_pool_from_env().and_then(|()| match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Recover(a) => recover_cmd(a),
        Command::Cv(a) => cv_cmd(a),
        Command::Ingest(a) => ingest_cmd(a),
        Command::Experiment(a) => experiment_cmd(a),
        Command::Slope(a) => slope_cmd(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
