use thiserror::Error;

pub type Result<T, E = PshoError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PshoError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("qubit index {qubit} out of range for {n_qubits} qubits")]
    QubitOutOfRange { qubit: usize, n_qubits: usize },

    #[error("{n_qubits} qubits exceeds the dense oracle limit of {limit}")]
    OracleLimit { n_qubits: usize, limit: usize },

    #[error("invalid bitstring {0:?}")]
    InvalidBitstring(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("control qubit {0} overlaps a rotation target")]
    OverlappingControl(usize),

    #[error("expectation value has imaginary residue {0:e}")]
    ImaginaryResidue(f64),

    #[error("forced measurement branch has probability {0:e}")]
    ImpossibleOutcome(f64),

    #[error("ancilla qubit is not in |0>: leaked weight {0:e}")]
    AncillaNotReset(f64),

    #[error("state has weight {0:e} outside the diagonalized subspace")]
    OutsideSubspace(f64),

    #[error("moment table depth {available} is insufficient for power {needed}")]
    InsufficientDepth { needed: usize, available: usize },

    #[error("power {power} needs {needed} significand bits, configured {configured}")]
    InsufficientPrecision { power: usize, needed: u32, configured: u32 },

    #[error("normalization B_{n} vanishes at working precision")]
    VanishingNormalization { n: usize },

    #[error("ratio {0} lies outside [0, 1]")]
    RatioOutOfRange(f64),

    #[error("squared norm {0:e} underflows")]
    Underflow(f64),

    #[error("found {found} extrema, need at least {needed}")]
    TooFewExtrema { found: usize, needed: usize },

    #[error("{0}")]
    InvalidArgument(String),
}
