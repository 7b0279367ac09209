use thiserror::Error;

use crate::interval::Rational;

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Name of the pipeline stage that failed, if tagged.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }

    /// The underlying error with stage tags removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

/// Tags errors with the pipeline stage they came from.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| match e {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {left} vs {right} subintervals")]
    GridMismatch { left: usize, right: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("invalid rational {0:?}")]
    ParseRational(String),

    #[error("partition needs at least two representatives, got {0}")]
    DegeneratePartition(usize),

    #[error("map is not linear on the subspace spanning set (defect {defect:e})")]
    Nonlinear { defect: f64 },

    #[error("values of the composition map leave [0,1] at y = {y} (value {value})")]
    RangeViolation { y: f64, value: f64 },

    #[error("total weight vanishes at y = {y}")]
    ZeroWeight { y: f64 },

    #[error("kernel is not a Markov kernel: row-sum deviation {row_sum:e}, most negative weight {negative:e}")]
    InvalidKernel { row_sum: f64, negative: f64 },

    #[error("induced ratio undefined: phi(f)(1) vanishes on every probe")]
    RatioUndefined,

    #[error("infeasible: beta < alpha ({beta} < {alpha}); (1-beta)/(1-alpha) = {forcing} > 1 would force mu_0(X_1) > 1")]
    Infeasible {
        alpha: Rational,
        beta: Rational,
        forcing: Rational,
    },

    #[error("snapshot slack eta = {eta} too large: {detail}")]
    EtaTooLarge { eta: Rational, detail: String },

    #[error("no rational snapshot: {0}")]
    NoSnapshot(String),

    #[error("N1 = {n1} exceeds the cap {cap}")]
    CapExceeded { n1: u128, cap: u64 },

    #[error("no feasible delta above 1/{cap}: {detail}")]
    NoFeasibleDelta { cap: u64, detail: String },

    #[error("coefficient bound violated: |phi(f)(y) - sum| = {error:e} >= {bound:e} at y = {y}")]
    CoefficientBound { error: f64, bound: f64, y: f64 },

    #[error("monotonicity precondition violated for coefficient {index}: {detail}")]
    Monotonicity { index: usize, detail: String },

    #[error("empty index set: {0}")]
    EmptySelection(String),

    #[error("exclusion count {count} exceeds block width {width} for {block}")]
    ExclusionOverflow { block: String, count: i128, width: i128 },

    #[error("endpoint value at index {index} is {found}, expected representative {expected}")]
    PlateauViolation {
        index: u64,
        found: Rational,
        expected: Rational,
    },

    #[error("endpoint value {value} at index {index} is not a representative point")]
    NonRepresentative { index: u64, value: Rational },

    #[error("alpha == beta: use the same-subspace selection")]
    SameSubspace,

    #[error("kernel does not preserve the subspace: {0}")]
    NotPreserving(String),

    #[error("search space of {0} tuples exceeds the oracle limit")]
    SearchTooLarge(u128),

    #[error("endpoint breakpoints are not integral after scaling by N1 = {0}")]
    NonIntegralScaling(u64),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("certificate failed: sup_error {:e} vs eps {}, boundary_ok {}", .0.sup_error, .0.eps, .0.boundary_ok)]
    CertificateFailed(Box<crate::certify::Certificate>),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}
