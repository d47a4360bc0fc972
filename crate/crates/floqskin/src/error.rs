use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: String, reason: String },

    #[error("irrational flux has no Bloch representation")]
    UnsupportedRepresentation,

    #[error("analytic continuation is singular at beta = 0")]
    SingularContinuation,

    #[error("non-finite Hamiltonian entry at t = {t}")]
    Propagation { t: f64 },

    #[error("defective propagator{}: {reason}", fmt_k(*.k))]
    Defective { k: Option<f64>, reason: String },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("wrong model: {0}")]
    WrongModel(String),

    #[error("wrong mode: {0}")]
    WrongMode(String),

    #[error("empty state selection")]
    EmptyFilter,

    #[error("winding ill-defined: reference energy lies {distance:.3e} from the periodic spectrum")]
    IllDefinedWinding { distance: f64 },

    #[error("flux deviation from 1/2 is zero; there is no splitting to measure")]
    DegenerateReciprocal,

    #[error("no generalized-momentum matches in kappa range [{kappa_min}, {kappa_max}]; widen the range")]
    EmptyGbz { kappa_min: f64, kappa_max: f64 },

    #[error("radial range [{r_min:.4}, {r_max:.4}] straddles the unit circle; no direction claim")]
    Bidirectional { r_min: f64, r_max: f64 },

    #[error("{what}: need at least {need} samples, got {got}")]
    InsufficientSamples { what: &'static str, need: usize, got: usize },

    #[error("unreliable velocity v = {velocity:.5} (R^2 = {r_squared:.3})")]
    UnreliableVelocity { velocity: f64, r_squared: f64 },

    #[error("decay fit residual {rms:.3e} exceeds 10% of the total drop {drop:.3e}; transient too short")]
    TransientTooShort { slope: f64, rms: f64, drop: f64 },

    #[error("wavefront never reached the impurity at site {site}")]
    Inconclusive { site: usize },

    #[error("dimension {dim} exceeds the dense-solver cap {cap}")]
    TooLarge { dim: usize, cap: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn fmt_k(k: Option<f64>) -> String {
    match k {
        Some(k) => format!(" at k = {k}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParam { name: name.into(), reason: reason.into() }
    }

    /// True for errors caused by the input rather than by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidParam { .. }
                | Error::Config(_)
                | Error::Json(_)
                | Error::UnsupportedRepresentation
                | Error::WrongModel(_)
                | Error::WrongMode(_)
                | Error::TooLarge { .. }
        )
    }
}
