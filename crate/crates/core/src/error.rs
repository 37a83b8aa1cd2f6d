use thiserror::Error;

/// Errors produced by dataset construction, validation, and the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} at row {row}, column {col}: {msg}")]
    Parse {
        path: String,
        row: usize,
        col: usize,
        msg: String,
    },

    #[error("malformed file {path}: {msg}")]
    Malformed { path: String, msg: String },

    #[error("dimension mismatch: {msg}")]
    DimensionMismatch { msg: String },

    #[error("duplicate feature identifier {id:?} in {view} view")]
    DuplicateFeatureId { id: String, view: &'static str },

    #[error("covariate matrix is rank deficient (column {col} lies in the span of earlier columns)")]
    RankDeficientCovariates { col: usize },

    #[error("too many covariates: {m} covariates leave effective sample size {n_eff} < 4")]
    TooManyCovariates { m: usize, n_eff: isize },

    #[error("constant column {id:?}: norm after centering is below 1e-12")]
    ConstantColumn { id: String },

    #[error("dataset is already standardized")]
    AlreadyStandardized,

    #[error("dataset is not standardized")]
    NotStandardized,

    #[error("too few samples: n = {n}, need at least 4")]
    TooFewSamples { n: usize },

    #[error("invalid parameter: {msg}")]
    InvalidParam { msg: String },

    #[error("moment approximation requires m >= 5 degrees of freedom, got {m}")]
    DegreesOfFreedom { m: usize },

    #[error("gamma fit requires positive skew: third central moment = {third_central}")]
    NonPositiveSkew { third_central: f64 },

    #[error("empty essential edge list")]
    EmptyEdgeList,

    #[error("epsilon {epsilon} outside (0, {bound}) required by the equilibrium check")]
    EpsilonOutOfRange { epsilon: f64, bound: f64 },

    #[error("not enough spare type-two indices for bridge variables (needed {needed}, had {available})")]
    BridgeExhaustion { needed: usize, available: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
