use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("dimension `{0}`: lower bound must be below upper bound")]
    EmptyInterval(String),
    #[error("dimension `{0}`: a categorical dimension needs at least two distinct levels")]
    TooFewLevels(String),
    #[error("duplicate dimension name `{0}`")]
    DuplicateName(String),
    #[error("dimension index {0} out of range")]
    NoSuchDimension(usize),
    #[error("dimension {0} has more than one activity rule")]
    DuplicateRule(usize),
    #[error("activity rule for dimension {0} references itself")]
    SelfReference(usize),
    #[error("activity rules form a cycle through dimension {0}")]
    CyclicRules(usize),
    #[error("activity rule for dimension {target}: {reason}")]
    BadPredicate { target: usize, reason: String },
    #[error("point has {got} values, space has {expected} dimensions")]
    WrongLength { expected: usize, got: usize },
    #[error("value {value} invalid for dimension `{dim}`")]
    InvalidValue { dim: String, value: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("the arc kernel is not defined for categorical dimension `{0}`")]
    CategoricalArc(String),
    #[error("unknown kernel `{0}` (expected one of stan, arc, ico, icocor, imp, imparc)")]
    UnknownKernel(String),
    #[error("parameter vector has wrong shape: {0}")]
    BadParams(String),
    #[error("eigendecomposition did not converge")]
    EigenFailure,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    InvalidPoint(#[from] SpaceError),
    #[error("observations must be finite")]
    NonFiniteObservation,
    #[error("need at least {needed} training points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("{points} points but {observations} observations")]
    LengthMismatch { points: usize, observations: usize },
    #[error("no parameter setting produced a factorizable correlation matrix")]
    Infeasible,
    #[error("correlation matrix is not positive definite")]
    NotPositiveDefinite,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("point {0:?} lies outside [0,1]^2")]
    OutOfDomain(Vec<f64>),
    #[error("(b={b}, c={c}, d={d}) lies on a situation boundary")]
    Unclassifiable { b: f64, c: f64, d: f64 },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("rank table needs at least two blocks and two treatments")]
    DegenerateTable,
    #[error("block {0} is missing a result for kernel {1}")]
    IncompleteBlock(String, String),
    #[error("scope `{0}` selects no rows")]
    EmptyScope(String),
    #[error("unexpected results header `{0}`")]
    BadHeader(String),
    #[error("could not start worker pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Smbo(#[from] SmboError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("bounds must satisfy lower < upper in every coordinate")]
    EmptyBox,
    #[error("budget {budget} is below dimension + 1 = {needed}")]
    BudgetTooSmall { budget: usize, needed: usize },
    #[error("invalid differential evolution setting: {0}")]
    BadConfig(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmboError {
    #[error("invalid optimization setup: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Optim(#[from] OptimError),
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
