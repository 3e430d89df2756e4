use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("quantile level {0} is outside the open interval (0, 1)")]
    InvalidLevel(f64),

    #[error("degenerate design: covariate columns do not span a hyperplane with intercept")]
    DegenerateDesign,

    #[error("solver did not converge within {iterations} iterations")]
    SolverFailure { iterations: usize },

    #[error("fit at level {tau} failed: {source}")]
    AtLevel {
        tau: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("tail width k - floor(n^nu) = {width} is below the minimum of {min} (k = {k}, n = {n})")]
    InsufficientTailWidth {
        k: usize,
        n: usize,
        width: i64,
        min: usize,
    },

    #[error("invalid tail configuration: {0}")]
    InvalidConfig(String),

    #[error("tail degeneracy: {excluded} of {total} covariate points have a non-positive q-path base")]
    TailDegeneracy { excluded: usize, total: usize },

    #[error("target level {target} lies below the base level {base}")]
    InvalidDirection { base: f64, target: f64 },

    #[error("extrapolation base {0} must be strictly positive")]
    InvalidBase(f64),

    #[error("level {tau} is below the tail base level {tau_base}; use conventional quantile regression")]
    BelowTail { tau: f64, tau_base: f64 },

    #[error("non-positive q-path base and no conventional fit stored at level {tau}")]
    NoFallback { tau: f64 },

    #[error("unsupported model schema_version {0}")]
    Version(u64),

    #[error("model file is missing field `{0}`")]
    MissingField(String),

    #[error("model field `{field}` is invalid: {message}")]
    InvalidField { field: String, message: String },

    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),

    #[error("no comparable pairs: all {dropped} pairs had a non-positive value")]
    EmptyComparison { dropped: usize },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("duplicate date {0}")]
    DuplicateDate(String),

    #[error("series is empty after dropping {dropped} incomplete rows")]
    EmptySeries { dropped: usize },

    #[error("basin {basin_id}: {source}")]
    Basin {
        basin_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("all {} basins failed", .0.len())]
    Batch(Vec<(String, String)>),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_level(self, tau: f64) -> Self {
        Error::AtLevel {
            tau,
            source: Box::new(self),
        }
    }

    pub(crate) fn for_basin(self, basin_id: &str) -> Self {
        Error::Basin {
            basin_id: basin_id.to_string(),
            source: Box::new(self),
        }
    }
}
