use thiserror::Error;

/// Domain errors raised by constructors and lookups.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error("invalid tile grid: {0}")]
    InvalidGrid(String),
    #[error("viewpoint {index} out of range 1..={count}")]
    ViewpointOutOfRange { index: usize, count: usize },
    #[error("invalid popularity model: {0}")]
    InvalidPopularity(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("size mismatch for {what}: expected {expected}, got {actual}")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("instance too large for exhaustive enumeration: {0}")]
    InstanceTooLarge(String),
}

/// A hybrid action that breaks one of the problem constraints.
///
/// Each variant corresponds to exactly one constraint of the slot problem so
/// that callers (and failure reports) can name what was violated.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeasibilityError {
    #[error("local cache capacity: expected exactly {expected} cached tiles, found {actual}")]
    LocalCapacity { expected: usize, actual: usize },
    #[error("MEC cache capacity: expected exactly {expected} cached tiles, found {actual}")]
    MecCapacity { expected: usize, actual: usize },
    #[error("local store/delete parity: {stores} stores vs {deletes} deletes")]
    LocalParity { stores: usize, deletes: usize },
    #[error("MEC store/delete parity: {stores} stores vs {deletes} deletes")]
    MecParity { stores: usize, deletes: usize },
    #[error("offload vector must have one bit per FoV tile ({expected}), got {actual}")]
    OffloadWidth { expected: usize, actual: usize },
    #[error("local replacement: {0}")]
    LocalReplacement(String),
    #[error("MEC replacement: {0}")]
    MecReplacement(String),
    #[error("task segmentation disabled: offload vector must be all-local or all-MEC")]
    PartialOffload,
    #[error("caching replacement disabled: store/delete sets must be empty")]
    ReplacementDisabled,
}

impl FeasibilityError {
    /// Short stable name of the violated constraint.
    pub fn constraint(&self) -> &'static str {
        match self {
            Self::LocalCapacity { .. } => "local_capacity",
            Self::MecCapacity { .. } => "mec_capacity",
            Self::LocalParity { .. } => "local_parity",
            Self::MecParity { .. } => "mec_parity",
            Self::OffloadWidth { .. } => "offload_binary",
            Self::LocalReplacement(_) => "local_replacement_domain",
            Self::MecReplacement(_) => "mec_replacement_domain",
            Self::PartialOffload => "segmentation_disabled",
            Self::ReplacementDisabled => "caching_disabled",
        }
    }
}

/// Errors surfaced by the slot transition engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error(transparent)]
    Feasibility(#[from] FeasibilityError),
    #[error(transparent)]
    Domain(#[from] CoreError),
    #[error("environment used before reset")]
    Uninitialized,
}
