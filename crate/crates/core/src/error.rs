use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("every class density vanishes at the query point")]
    AllDensitiesZero,
    #[error("operation needs exactly two classes, model has {0}")]
    NotBinary(usize),
    #[error("log-odds gradient vanishes (norm {0:e})")]
    ZeroGradient(f64),
    #[error("integration step changed the log odds by {0}")]
    StepTooLarge(f64),
    #[error("log odds does not change sign along the curve")]
    NoSignChange,
    #[error("categorical Fisher information is monotone along the curve")]
    NoInteriorMax,
    #[error("negative mean rate {rate} at unit {unit} under multiplicative noise")]
    NegativeRate { unit: usize, rate: f64 },
    #[error("noise density has no finite Fisher information")]
    NonSmoothDensity,
    #[error("quadrature grid too coarse: inner posteriors differ by {0:e} under refinement")]
    GridTooCoarse(f64),
    #[error("neural Fisher information is singular at every grid point")]
    AllSingular,
    #[error("data processing inequality violated: I[Y,R] - I[Y,X] = {excess} > 3 x {std_err}")]
    InequalityViolated { excess: f64, std_err: f64 },
    #[error("no root of u^2 psi'(u) = {target} on the tabulated domain")]
    NoRoot { target: f64 },
    #[error("training diverged at epoch {0}")]
    Diverged(usize),
    #[error("mean activity vanishes at path point {0}")]
    ZeroActivity(usize),
    #[error("inconsistent decomposition: {what} off by {diff} (3 sigma = {tol})")]
    InconsistentDecomposition { what: String, diff: f64, tol: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad inputs rather than by the numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidModel(_)
                | Error::InvalidArgument(_)
                | Error::DimMismatch { .. }
                | Error::NotBinary(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::Csv(_)
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidModel(_) => "InvalidModel",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::DimMismatch { .. } => "DimMismatch",
            Error::AllDensitiesZero => "AllDensitiesZero",
            Error::NotBinary(_) => "NotBinary",
            Error::ZeroGradient(_) => "ZeroGradient",
            Error::StepTooLarge(_) => "StepTooLarge",
            Error::NoSignChange => "NoSignChange",
            Error::NoInteriorMax => "NoInteriorMax",
            Error::NegativeRate { .. } => "NegativeRate",
            Error::NonSmoothDensity => "NonSmoothDensity",
            Error::GridTooCoarse(_) => "GridTooCoarse",
            Error::AllSingular => "AllSingular",
            Error::InequalityViolated { .. } => "InequalityViolated",
            Error::NoRoot { .. } => "NoRoot",
            Error::Diverged(_) => "Diverged",
            Error::ZeroActivity(_) => "ZeroActivity",
            Error::InconsistentDecomposition { .. } => "InconsistentDecomposition",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
            Error::Csv(_) => "Csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Non-fatal quality flags attached to results.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Flag {
    /// A class posterior fell below 1e-300 and its term was dropped.
    DegeneratePosterior { class: usize },
    /// Finite-difference stencil straddles a kink of a non-smooth density.
    NearKink { coord: usize },
    /// Fisher matrix is rank deficient relative to its top eigenvalue.
    SingularFisher,
    /// Unit rate below the floor; unit dropped from the Fisher sum.
    RateUnderflow { unit: usize },
    /// Jacobian row computed within a relu kink.
    ReluKink { unit: usize },
    /// Estimate clipped into its admissible range.
    Clipped,
}
