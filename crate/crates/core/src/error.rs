use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what} = {value} is not an integer multiple of the grid step {step}")]
    Misaligned { what: &'static str, value: f64, step: f64 },

    #[error("time {t} outside [0, {horizon}]")]
    OutOfRange { t: f64, horizon: f64 },

    #[error("grid or shape mismatch: {0}")]
    Mismatch(String),

    #[error("inputs come from different replicas (seeds {expected} and {found})")]
    ReplicaMismatch { expected: u64, found: u64 },

    #[error("non-finite state in {scheme} solver at t = {t}")]
    BlowUp { scheme: &'static str, t: f64 },

    #[error("state bound breached in {scheme} solver at t = {t}: squared norm {norm_sq} > {bound}")]
    BoundBreach { scheme: &'static str, t: f64, norm_sq: f64, bound: f64 },

    #[error("step {step} exceeds the stability limit {limit} of the spatial drift")]
    StepTooLarge { step: f64, limit: f64 },

    #[error(
        "analytic Jacobian disagrees with finite differences at probe {probe}: \
         error {coarse:.3e} at eps=1e-4, {fine:.3e} at eps=1e-5"
    )]
    JacobianMismatch { probe: usize, coarse: f64, fine: f64 },

    #[error("Galerkin basis is not orthonormal under its quadrature (Gram defect {defect:.3e})")]
    NotOrthonormal { defect: f64 },

    #[error("unknown system `{0}`")]
    UnknownSystem(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("schedule invalid: {0}")]
    Schedule(String),

    #[error("replica {replica}, delta {delta}: {cause}")]
    Replica { replica: usize, delta: f64, cause: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for numerical aborts (blow-up, bound breach) as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::BlowUp { .. } | Error::BoundBreach { .. } => true,
            Error::Replica { cause, .. } => cause.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn in_replica(self, replica: usize, delta: f64) -> Self {
        Error::Replica { replica, delta, cause: Box::new(self) }
    }
}
