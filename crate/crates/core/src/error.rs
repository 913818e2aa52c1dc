use thiserror::Error;

/// Errors raised by the numerical and verification routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not converge on [{lo}, {hi}] ({context}): estimate {estimate:e}, error {error:e}")]
    Quadrature {
        context: String,
        lo: f64,
        hi: f64,
        estimate: f64,
        error: f64,
    },

    #[error("Lévy measure does not dominate the stable floor at radius {radius:e}: m = {value:e} < {floor:e}")]
    DominationViolated { radius: f64, value: f64, floor: f64 },

    #[error("neglected tail mass {neglected:e} exceeds {limit:e} of total mass {total:e}; increase the outer radius (currently {r_max:e})")]
    NeglectedMass {
        neglected: f64,
        total: f64,
        limit: f64,
        r_max: f64,
    },

    #[error("non-finite value at node {node}: {detail}")]
    NonFinite { node: String, detail: String },

    #[error("sampler calibration mismatch at |xi| = {xi}: empirical {empirical}, target {target}, standard error {std_err:e}")]
    Calibration {
        xi: f64,
        empirical: f64,
        target: f64,
        std_err: f64,
    },

    #[error("matrix exponential overflow: ||tA|| = {0:e}")]
    MatrixOverflow(f64),

    #[error("too many clamped density nodes: {clamped} of {total}")]
    ExcessiveClamping { clamped: usize, total: usize },

    #[error("empty node set: {0}")]
    EmptyNodes(String),

    #[error("normalization error: {0}")]
    Normalization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
