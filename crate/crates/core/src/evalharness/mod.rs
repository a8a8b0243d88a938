//! Metrics, diagnostics, real-data ingestion and experiment orchestration.

pub mod experiment;
pub mod ingest;
pub mod metrics;

pub use experiment::{
    run_experiment, BandwidthMode, ExperimentConfig, ExperimentOutput, LambdaMode, ResultRecord, Scenario,
    SummaryRow,
};
pub use ingest::{ingest_triplets, IngestOptions, Ingested};
pub use metrics::{bias_diagnostic, fit_log_slope, lambda_contract, mse_t, noise_diagnostic, test_mse};

/// Sizes the global rayon pool from `DYNREC_THREADS` when it is set.
pub fn init_thread_pool_from_env() -> crate::Result<()> {
    if let Ok(v) = std::env::var("DYNREC_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| crate::Error::InvalidArgument(format!("DYNREC_THREADS must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(crate::Error::InvalidArgument("DYNREC_THREADS must be positive".into()));
        }
        // a pool that already exists keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}
