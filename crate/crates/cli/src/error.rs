//! CLI error type with a machine-readable JSON rendering.

use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),
    #[error("unknown solver '{0}'")]
    UnknownSolver(String),
    #[error("unknown metric '{0}'")]
    UnknownMetric(String),
    #[error("bad bucket spec '{0}': {1}")]
    BucketSpec(String, String),
    #[error("scene file error: {0}")]
    Scene(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] dualfd::bench::BenchIoError),
    #[error(transparent)]
    Bench(#[from] dualfd::bench::BenchError),
    #[error(transparent)]
    Dynamics(#[from] dualfd::dynamics::DynamicsError),
    #[error(transparent)]
    Dual(#[from] dualfd::dual::DualError),
    #[error(transparent)]
    Collision(#[from] dualfd::collision::CollisionError),
    #[error("metrics csv parse error in {path} line {line}: {message}")]
    MetricsCsv { path: String, line: usize, message: String },
    #[error("simulation halted at step {step}: {reason}")]
    Halted { step: usize, reason: String },
}

impl CliError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::UnknownScenario(_) => "unknown_scenario",
            CliError::UnknownSolver(_) => "unknown_solver",
            CliError::UnknownMetric(_) => "unknown_metric",
            CliError::BucketSpec(_, _) => "bucket_spec",
            CliError::Scene(_) => "scene",
            CliError::Io { .. } => "io",
            CliError::Dataset(_) => "dataset",
            CliError::Bench(_) => "bench",
            CliError::Dynamics(_) => "dynamics",
            CliError::Dual(_) => "dual",
            CliError::Collision(_) => "collision",
            CliError::MetricsCsv { .. } => "metrics_csv",
            CliError::Halted { .. } => "halted",
        }
    }

    /// Single-line JSON for scripts; printed on stderr before a nonzero exit.
    pub fn to_json(&self) -> String {
        json!({ "error": self.to_string(), "kind": self.kind() }).to_string()
    }
}
