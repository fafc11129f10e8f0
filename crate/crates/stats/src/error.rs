use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate pooled proportion {pooled}: the z statistic is 0/0")]
    DegeneratePooledProportion { pooled: f64 },

    #[error(
        "no replicate variance: both groups have zero standard deviation; \
         increase the bootstrap replicate count or use the two-proportion z-test"
    )]
    NoReplicateVariance,

    #[error("balanced design required: replicate counts {0:?} differ")]
    BalancedDesignRequired(Vec<usize>),

    #[error("unit mismatch: cannot compare a {0} summary with a {1} summary")]
    UnitMismatch(&'static str, &'static str),

    #[error("numeric failure: {0}")]
    NonConvergence(String),
}
