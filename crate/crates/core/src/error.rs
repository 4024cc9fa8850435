use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The quaternion logarithm or G(z) was evaluated too close to the antipodal point `-1`.
    #[error("quaternion logarithm singularity: {0}")]
    Singularity(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// Raised by the scenario runner when a singularity aborts a simulation.
    #[error("singularity at step {step} (t = {t:.6} s): e0 = {e0:.9}, h = {h}: {detail}")]
    SimulationAbort {
        step: usize,
        t: f64,
        e0: f64,
        h: i8,
        detail: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
