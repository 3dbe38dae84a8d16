use thiserror::Error;

/// Errors produced anywhere in the core library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("Clifford group enumeration is only supported for 1 or 2 qubits, got {qubits}")]
    UnsupportedEnumeration { qubits: usize },

    #[error("product of group elements was not found in the Clifford table (numerical drift?)")]
    CanonicalizationFailure,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("parameter `{name}` = {value} is outside its domain {domain}")]
    OutOfDomain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("simulation integrity violated: {0}")]
    SimulationIntegrity(String),

    #[error("invalid probability vector: {0}")]
    InvalidDistribution(String),

    #[error("fidelity is indeterminate at depth {depth}: every ideal output distribution is uniform")]
    IndeterminateFidelity { depth: usize },

    #[error("records from different depths ({first} and {other}) cannot be pooled")]
    MixedDepths { first: usize, other: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("need at least {needed} points at depth >= {m_min}, found {found}")]
    InsufficientPoints { needed: usize, found: usize, m_min: usize },

    #[error("fit did not converge after {iterations} iterations (cost {cost:e}, damping {damping:e}): {reason}")]
    FitFailure {
        iterations: usize,
        cost: f64,
        damping: f64,
        reason: String,
    },

    #[error("nonpositive reference decay {0}: cannot normalize the interleaved decay")]
    NonPositiveDenominator(f64),

    #[error("invalid experiment plan: {0}")]
    InvalidPlan(String),

    #[error("gate is not a Clifford element; no recovery gate exists")]
    NotClifford,

    #[error("missing fit: {0}")]
    MissingFit(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_unit_interval(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::OutOfDomain {
            name,
            value,
            domain: "[0, 1]",
        })
    }
}
