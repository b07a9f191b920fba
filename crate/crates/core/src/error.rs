use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("matrix {what} is not symmetric (relative asymmetry {asymmetry:e})")]
    NotSymmetric { what: &'static str, asymmetry: f64 },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("index {index} out of range for table of length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("Lipschitz constant is zero; the dual step size 1/L is undefined")]
    DegenerateLipschitz,

    #[error("alpha mismatch: table has alpha {table}, options request {options}")]
    AlphaMismatch { table: u32, options: u32 },

    #[error("root finder failed for alpha {alpha}, previous tau {tau_prev}: {reason}")]
    RootFinding {
        alpha: u32,
        tau_prev: f64,
        reason: String,
    },

    #[error("Riccati iteration did not converge after {iterations} iterations (relative change {change:e})")]
    DareNotConverged { iterations: usize, change: f64 },

    #[error("Slater check failed: constraint row {row} has bound {bound:e} at u = 0")]
    SlaterViolation { row: usize, bound: f64 },

    #[error("enumeration budget exceeded: {n_c} constraints (limit {limit})")]
    BudgetExceeded { n_c: usize, limit: usize },

    #[error("no feasible active set found; the problem is primal infeasible")]
    Infeasible,

    #[error("instance generation failed (seed {seed}, instance {instance}): {reason}")]
    Generation {
        seed: u64,
        instance: u64,
        reason: String,
    },

    #[error("statistics: {0}")]
    Statistics(String),

    #[error("bad table file: {0}")]
    TableFormat(String),

    #[error("schema error in field `{field}`: {reason}")]
    Schema { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn schema(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
