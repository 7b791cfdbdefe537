use thiserror::Error;

/// Errors raised by samplers, solvers and evaluators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("divergent quantity: {0}")]
    Divergent(String),
    #[error("no convergence after {iterations} iterations (best estimate {best})")]
    Convergence { iterations: usize, best: f64 },
    #[error("population cap {cap} exceeded at t = {time}")]
    PopulationCap { cap: usize, time: f64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Input(msg()))
    }
}
