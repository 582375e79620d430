use thiserror::Error;

/// Errors raised by the model, solver, selection, simulation and metrics layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// Column `0` has zero variance and has to be dropped or jittered.
    #[error("column {0} has zero variance")]
    ConstantColumn(usize),

    #[error("response is constant")]
    ConstantResponse,

    /// Coordinate descent ran out of sweeps; carries the last iterate.
    #[error("coordinate descent did not converge in {max_iter} sweeps (max change {max_change:e})")]
    NoConvergence {
        max_iter: usize,
        max_change: f64,
        beta: Vec<f64>,
    },

    #[error("every penalty weight is infinite")]
    AllWeightsInfinite,

    #[error("alpha = 0 has no finite lambda_max; supply an explicit grid")]
    AlphaZero,

    /// The centered response is orthogonal to every penalized column.
    #[error("lambda_max is zero; the response carries no signal")]
    DegenerateGrid,

    #[error("bootstrap replicate {replicate} kept producing constant columns")]
    DegenerateResample { replicate: usize },

    #[error("balanced accuracy is undefined: the {0} class is empty")]
    UndefinedClass(&'static str),

    #[error("data has zero variance")]
    ZeroVariance,

    #[error("sample covariance is singular")]
    SingularCovariance,

    /// The achieved values are NaN when no admissible parameters exist.
    #[error("{}", transform_failure(*.target_skewness, *.target_kurtosis, *.achieved_skewness, *.achieved_kurtosis))]
    TransformFitFailure {
        target_skewness: f64,
        target_kurtosis: f64,
        achieved_skewness: f64,
        achieved_kurtosis: f64,
    },
}

fn transform_failure(ts: f64, tk: f64, s: f64, k: f64) -> String {
    let head = format!("no transform reaches skewness {ts} / kurtosis {tk}");
    if s.is_nan() || k.is_nan() {
        format!("{head} (no admissible parameters)")
    } else {
        format!("{head} (best {s:.1} / {k:.1})")
    }
}

pub type Result<T> = std::result::Result<T, Error>;
