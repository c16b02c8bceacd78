//! Scenario files, artifact formats and the `wfpc` command pipelines.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod io;

use wfpc_core::exec::Executor;

pub use config::{parse_scenario, parse_scenario_str, ConfigError, Scenario};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("numerical failure: {0:?}")]
    Numerical(#[from] wfpc_core::Error),
    #[error("grid check failed: halving the step moved p(T) by {change:.3e} (tolerance {tolerance:.1e})")]
    GridCheck { change: f64, tolerance: f64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// 1 for usage, schema and file errors; 2 for numerical failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Numerical(_) | Self::GridCheck { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Fans independent runs out over a bounded thread pool. Results keep input
/// order.
pub struct RayonExecutor {
    pool: rayon::ThreadPool,
}

impl RayonExecutor {
    /// `workers = None` uses the available parallelism.
    pub fn new(workers: Option<usize>) -> Result<Self> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = workers {
            if n == 0 {
                return Err(Error::Usage("--workers must be at least 1".into()));
            }
            builder = builder.num_threads(n);
        }
        let pool = builder.build().map_err(|e| Error::Usage(e.to_string()))?;
        Ok(Self { pool })
    }
}

impl Executor for RayonExecutor {
    fn map<T: Send, F: Fn(usize) -> T + Sync + Send>(&self, count: usize, f: F) -> Vec<T> {
        use rayon::prelude::*;
        self.pool.install(|| (0..count).into_par_iter().map(f).collect())
    }
}
