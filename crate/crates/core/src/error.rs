use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("steps do not sum to zero (final height {final_height})")]
    NotABridge { final_height: i64 },
    #[error("step {index} has value {value}, expected -1 or +1")]
    BadStep { index: usize, value: i64 },
    #[error("site {0} is not a corner")]
    NotACorner(usize),
    #[error("{what} = {value} exceeds the supported maximum {max}")]
    TooLarge {
        what: &'static str,
        value: usize,
        max: usize,
    },
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error("outside the domain: {0}")]
    Domain(String),
    #[error("time step {dt} violates the stability bound {bound}")]
    CflViolation { dt: f64, bound: f64 },
    #[error("window is empty at t = {t}: [{lo}, {hi}]")]
    EmptyWindow { t: f64, lo: f64, hi: f64 },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("Hopf-Cole variable became non-positive at node {node}")]
    NonPositive { node: usize },
    #[error("malformed input: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
