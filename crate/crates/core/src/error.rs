use thiserror::Error;

pub type Result<T> = std::result::Result<T, HomogError>;

#[derive(Debug, Error)]
pub enum HomogError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown built-in coefficient `{0}`")]
    UnknownBuiltin(String),

    #[error("no analytic reference registered for `{0}`")]
    NoReference(String),

    #[error("cell {cell} of the coefficient table is not symmetric positive definite (eigenvalues {eigenvalues:?})")]
    NotSpd { cell: usize, eigenvalues: [f64; 2] },

    #[error("ellipticity bounds [{lambda}, {big_lambda}] violated: observed eigenvalues in [{observed_min}, {observed_max}]")]
    EllipticityMismatch {
        lambda: f64,
        big_lambda: f64,
        observed_min: f64,
        observed_max: f64,
    },

    #[error("Cordes condition fails: sampled delta = {delta_hat}")]
    CordesViolated { delta_hat: f64 },

    #[error("right-hand side is incompatible: (f, r) = {measured:e} (tolerance {tolerance:e})")]
    Incompatible { measured: f64, tolerance: f64 },

    #[error("right-hand side must have zero mean, measured {mean:e}")]
    NonzeroMean { mean: f64 },

    #[error("normalization constant c = {c} is not positive")]
    NonPositiveNormalization { c: f64 },

    #[error("{stage}: linear solver failed: {message}")]
    Solver { stage: &'static str, message: String },

    #[error("{stage}: relative residual {residual:e} exceeds {tolerance:e}")]
    Residual {
        stage: &'static str,
        residual: f64,
        tolerance: f64,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed descriptor: {0}")]
    Json(#[from] serde_json::Error),
}

impl HomogError {
    /// True for failures of the numerical solve itself, as opposed to bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            HomogError::Solver { .. }
                | HomogError::Residual { .. }
                | HomogError::NonPositiveNormalization { .. }
        )
    }
}
