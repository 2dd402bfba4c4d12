use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed table: {0}")]
    MalformedTable(String),
    #[error("not a subgroup: {0}")]
    NotSubgroup(String),
    #[error("not a left transversal: {0}")]
    NotTransversal(String),
    #[error("not an automorphism: {0}")]
    NotAutomorphism(String),
    #[error("division by zero: norm {norm:e} below {eps:e}")]
    DivisionByZero { norm: f64, eps: f64 },
    #[error("point outside chart domain: {0}")]
    DomainError(String),
    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("singular Jacobian (condition estimate {condition:e})")]
    SingularJacobian { condition: f64 },
    #[error("structure constants unstable under step refinement (discrepancy {0:e})")]
    NumericalNoise(f64),
    #[error("bracket constants are not antisymmetric: {0}")]
    NotAntisymmetric(String),
    #[error("pair is not composable (gap {0:e})")]
    NotComposable(f64),
    #[error("fiber sampler exhausted: {0}")]
    SamplerExhausted(String),
    #[error("phi is not odd: {0}")]
    NotOdd(String),
    #[error("phi is not monotone: {0}")]
    NotMonotone(String),
    #[error("map is not a submersion: {0}")]
    NotSubmersion(String),
    #[error("rank deficient: {0}")]
    RankDeficient(String),
    #[error("empty fiber: {0}")]
    EmptyFiber(String),
    #[error("point left the composability slab (gap {0:e})")]
    NotOnFiber(f64),
    #[error("frame is singular: {0}")]
    FrameSingular(String),
    #[error("rank is not constant across samples: {0}")]
    RankNotConstant(String),
    #[error("first jet of the contrast function does not vanish along M (size {0:e})")]
    JetNotVanishing(f64),
    #[error("tangent vectors are not composable (mismatch {0:e})")]
    IncompatibleVelocities(f64),
    #[error("local section construction failed: {0}")]
    SectionFailure(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("schema error at {path}: {message}")]
    SchemaError { path: String, message: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("step {step}: {source}")]
    AtStep { step: usize, source: Box<Error> },
}

impl Error {
    /// Short machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MalformedTable(_) => "MalformedTable",
            Error::NotSubgroup(_) => "NotSubgroup",
            Error::NotTransversal(_) => "NotTransversal",
            Error::NotAutomorphism(_) => "NotAutomorphism",
            Error::DivisionByZero { .. } => "DivisionByZero",
            Error::DomainError(_) => "DomainError",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::SingularJacobian { .. } => "SingularJacobian",
            Error::NumericalNoise(_) => "NumericalNoise",
            Error::NotAntisymmetric(_) => "NotAntisymmetric",
            Error::NotComposable(_) => "NotComposable",
            Error::SamplerExhausted(_) => "SamplerExhausted",
            Error::NotOdd(_) => "NotOdd",
            Error::NotMonotone(_) => "NotMonotone",
            Error::NotSubmersion(_) => "NotSubmersion",
            Error::RankDeficient(_) => "RankDeficient",
            Error::EmptyFiber(_) => "EmptyFiber",
            Error::NotOnFiber(_) => "NotOnFiber",
            Error::FrameSingular(_) => "FrameSingular",
            Error::RankNotConstant(_) => "RankNotConstant",
            Error::JetNotVanishing(_) => "JetNotVanishing",
            Error::IncompatibleVelocities(_) => "IncompatibleVelocities",
            Error::SectionFailure(_) => "SectionFailure",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::SchemaError { .. } => "SchemaError",
            Error::Io(_) => "Io",
            Error::Unsupported(_) => "Unsupported",
            Error::AtStep { .. } => "AtStep",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
