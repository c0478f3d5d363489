use thiserror::Error;

pub type Result<T> = std::result::Result<T, MsfError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MsfError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("undamped resonance: the forced response is unbounded (zeta = 0, eta = 1)")]
    Resonance,

    /// A matrix that must be logarithmised is singular. For a trajectory
    /// Jacobian this means the event reduced the order of the dynamics.
    #[error("matrix is not invertible (smallest singular value ~{sigma_min:e}, norm {norm:e})")]
    NonInvertible { sigma_min: f64, norm: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("chatter: {count} impacts within one forcing period (last at tau = {tau})")]
    Chatter { count: usize, tau: f64 },

    #[error("invalid event window: central trajectory has {impacts} impacts, expected exactly one")]
    InvalidWindow { impacts: usize },

    #[error("event Jacobian is singular near grazing impact at tau_c = {tau_c}")]
    GrazingSingularity { tau_c: f64 },

    #[error("non-finite state: {0}")]
    Propagation(String),

    #[error("impact at tau_c = {tau_c}: {source}")]
    AtImpact {
        tau_c: f64,
        #[source]
        source: Box<MsfError>,
    },

    #[error("invalid coupling graph: {0}")]
    InvalidGraph(String),

    #[error("incomplete mode spectrum: {0}")]
    Incomplete(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl MsfError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        MsfError::InvalidParameter(msg.into())
    }
}
