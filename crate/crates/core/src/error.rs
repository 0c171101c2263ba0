use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("representation error: {0}")]
    Representation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("ball around e of radius {radius} exceeds the cap of {cap} elements")]
    BallCap { radius: usize, cap: usize },

    #[error("invalid walk: {0}")]
    InvalidWalk(String),

    #[error("transience not verified: {0}")]
    TransienceUnverified(String),

    #[error("requested precision {requested:e} not reached; best bound {achieved:e}")]
    Precision { requested: f64, achieved: f64 },

    #[error("element {0} lies outside the covered range of the kernel table")]
    Range(String),

    #[error("kernel limit did not converge: {0}")]
    Convergence(String),

    #[error("set is not expressible in the cylinder algebra at depth {depth}; need depth {needed}")]
    Partition { depth: usize, needed: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
