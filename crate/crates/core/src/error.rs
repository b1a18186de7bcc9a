use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("frequency {re}{im:+}i outside analyticity strip of half-width {eta}")]
    OutsideStrip { re: f64, im: f64, eta: f64 },
    #[error("symbol evaluation failed: {0}")]
    Symbol(String),
    #[error("characteristic function vanishes near the contour (min |d| = {0:e})")]
    RootOnBoundary(f64),
    #[error("winding number not integral (residual {0:.3})")]
    NonIntegralWinding(f64),
    #[error("kernel transform does not decay along the imaginary axis")]
    NoDecay,
    #[error("cluster separation failure: {0}")]
    Cluster(String),
    #[error("Jordan chain lengths sum to {found}, expected algebraic multiplicity {expected}")]
    ChainMismatch { found: usize, expected: usize },
    #[error("singular functional matrix: {0}")]
    SingularProjection(String),
    #[error("singular compatibility block at frequency {0}")]
    SingularCompatibility(String),
    #[error("inconsistent compatibility condition at frequency {0}")]
    Inconsistent(String),
    #[error("bordered solve residual {residual:e} exceeds tolerance {tol:e}")]
    Residual { residual: f64, tol: f64 },
    #[error("minimum order 2")]
    MinimumOrder,
    #[error("non-positive leading balance: {0}")]
    LeadingBalance(String),
    #[error("integration blow-up at x = {0}")]
    BlowUp(f64),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("unknown kernel reference `{0}`")]
    UnknownKernel(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Input errors map to exit code 2, everything else to 1.
    pub fn is_input(&self) -> bool {
        matches!(
            self,
            Error::Dimension(_)
                | Error::MinimumOrder
                | Error::Input(_)
                | Error::UnknownKernel(_)
                | Error::Json(_)
                | Error::Io(_)
        )
    }
}
