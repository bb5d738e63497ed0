use thiserror::Error;

/// Errors raised while constructing or transforming expressions, elements and forms.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid terminal: {0}")]
    InvalidTerminal(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("free index conflict: {0}")]
    FreeIndexConflict(String),
    #[error("arity error: {0}")]
    Arity(String),
    #[error("rank error: {0}")]
    Rank(String),
    #[error("rank mismatch: {0}")]
    RankMismatch(String),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("unbound index: {0}")]
    UnboundIndex(String),
    #[error("duplicate index: {0}")]
    DuplicateIndex(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("not a variable: {0}")]
    NotAVariable(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("nested restriction: {0}")]
    DoubleRestriction(String),
    #[error("boolean expression used outside a conditional condition: {0}")]
    BooleanMisuse(String),
    #[error("domain mismatch: {0}")]
    DomainMismatch(String),
    #[error("unknown element family '{0}'")]
    UnknownFamily(String),
    #[error("bad degree: {0}")]
    BadDegree(String),
    #[error("cell mismatch: {0}")]
    CellMismatch(String),
    #[error("bad symmetry: {0}")]
    BadSymmetry(String),
    #[error("integrand is not scalar valued: shape {0}")]
    NonScalarIntegrand(String),
    #[error("integrand has free indices: {0}")]
    FreeIndexInIntegrand(String),
    #[error("missing restriction: {0}")]
    MissingRestriction(String),
    #[error("restriction not allowed here: {0}")]
    SpuriousRestriction(String),
    #[error("not a coefficient: {0}")]
    NotACoefficient(String),
    #[error("element mismatch: {0}")]
    ElementMismatch(String),
    #[error("component out of range: {0}")]
    ComponentOutOfRange(String),
    #[error("no handler for node kind '{0}'")]
    UnhandledKind(String),
    #[error("unbound terminal: {0}")]
    UnboundTerminal(String),
    #[error("unsupported node in evaluation: {0}")]
    UnsupportedNode(String),
    #[error("math domain error: {0}")]
    MathDomain(String),
    #[error("unsupported measure: {0}")]
    UnsupportedMeasure(String),
    #[error("unsupported derivative: {0}")]
    UnsupportedDerivative(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Stable short name of the error class, used in diagnostics.
    pub fn kind_name(&self) -> &'static str {
        match self {
            Error::InvalidTerminal(_) => "InvalidTerminal",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::FreeIndexConflict(_) => "FreeIndexConflict",
            Error::Arity(_) => "ArityError",
            Error::Rank(_) => "RankError",
            Error::RankMismatch(_) => "RankMismatch",
            Error::IndexOutOfRange(_) => "IndexOutOfRange",
            Error::UnboundIndex(_) => "UnboundIndex",
            Error::DuplicateIndex(_) => "DuplicateIndex",
            Error::DivisionByZero => "DivisionByZero",
            Error::NotAVariable(_) => "NotAVariable",
            Error::Unsupported(_) => "Unsupported",
            Error::DoubleRestriction(_) => "DoubleRestriction",
            Error::BooleanMisuse(_) => "BooleanMisuse",
            Error::DomainMismatch(_) => "DomainMismatch",
            Error::UnknownFamily(_) => "UnknownFamily",
            Error::BadDegree(_) => "BadDegree",
            Error::CellMismatch(_) => "CellMismatch",
            Error::BadSymmetry(_) => "BadSymmetry",
            Error::NonScalarIntegrand(_) => "NonScalarIntegrand",
            Error::FreeIndexInIntegrand(_) => "FreeIndexInIntegrand",
            Error::MissingRestriction(_) => "MissingRestriction",
            Error::SpuriousRestriction(_) => "SpuriousRestriction",
            Error::NotACoefficient(_) => "NotACoefficient",
            Error::ElementMismatch(_) => "ElementMismatch",
            Error::ComponentOutOfRange(_) => "ComponentOutOfRange",
            Error::UnhandledKind(_) => "UnhandledKind",
            Error::UnboundTerminal(_) => "UnboundTerminal",
            Error::UnsupportedNode(_) => "UnsupportedNode",
            Error::MathDomain(_) => "MathDomain",
            Error::UnsupportedMeasure(_) => "UnsupportedMeasure",
            Error::UnsupportedDerivative(_) => "UnsupportedDerivative",
        }
    }
}
