//! Benchmark experiments: success-rate sweeps, the noise-level evidence
//! sweep for data of unknown noise, the derivative-scheme comparison, and
//! the file-driven fit and active-learning runs behind the CLI.

mod config;
mod deriv_compare;
mod report;
mod runs;
mod sigma;
mod sweep;

pub use config::{LambdaAt, LambdaSchedule, SweepConfig};
pub use deriv_compare::{
    fd_vs_weak_report, scheme_label, write_deriv_csv, DerivCompareConfig, DerivRow,
};
pub use report::{
    support_label, wilson_interval, CellReport, CellTiming, ExperimentReport, SweepTiming,
    MAX_ERROR_RATE, SCHEMA_VERSION,
};
pub use runs::{ActiveOutcome, ActiveRun, FitOutcome, FitRun};
pub use sigma::{evidence_sweep_sigma, SigmaPoint, SigmaSweep, SigmaSweepConfig};
pub use sweep::{cell_setup, run_sweep, run_trial, CellSetup, Trial, TrialResult};

pub use crate::io::load_csv;

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "BSINDY_THREADS";

/// Sizes the global rayon pool from [`THREADS_ENV`] if set. Returns the
/// thread count in effect; later calls keep the first configuration.
pub fn init_thread_pool() -> crate::Result<usize> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            crate::Error::invalid(format!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            ))
        })?;
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(rayon::current_num_threads())
}
