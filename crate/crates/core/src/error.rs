use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("record {id}: {rule}")]
    Validation { id: String, rule: String },

    #[error("empty sample: no records left after selection")]
    EmptySample,

    #[error("singular design: column(s) {} collinear with earlier columns", .0.join(", "))]
    SingularDesign(Vec<String>),

    #[error("estimation did not converge: {0}")]
    NonConvergence(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no common support: {0}")]
    NoSupport(String),

    #[error("bootstrap failed: {failed} of {total} replications errored (first error: {first})")]
    Bootstrap {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("non-finite function value when perturbing coordinate {coordinate}")]
    NonFinite { coordinate: usize },

    #[error("singular Wald variance: {0}")]
    SingularWald(String),

    #[error("singular reservation-wage frontier: |b_t| = {0:e}")]
    SingularFrontier(f64),

    #[error("degenerate regimes: |a - b| = {0:e}")]
    DegenerateRegimes(f64),

    #[error("sharing-rule recovery failed: {0}")]
    Recovery(String),

    #[error("nesting violated: restricted loglik {restricted} exceeds unrestricted {unrestricted}")]
    Nesting { restricted: f64, unrestricted: f64 },

    #[error("constraint residual {0:e} exceeds 1e-8 at the optimum")]
    Constraint(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing prerequisite: {0}")]
    Prerequisite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 1 for validation/configuration problems, 2 for estimation failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. }
            | Error::Validation { .. }
            | Error::InvalidInput(_)
            | Error::Config(_)
            | Error::Prerequisite(_)
            | Error::Io(_)
            | Error::Csv(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
