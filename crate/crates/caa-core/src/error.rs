//! Error type shared across the library.

use thiserror::Error;

/// Unified error for tensor, kernel, gating, planning, autodiff, and I/O
/// failures. Variants carry the offending values so messages are actionable
/// without a debugger.
#[derive(Debug, Error)]
pub enum CaaError {
    #[error("shape {shape:?} has {expected} elements but {got} were supplied")]
    ElementCount {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },

    #[error("dimension sizes must be positive, got {shape:?}")]
    ZeroDim { shape: Vec<usize> },

    #[error("axis {axis} is out of range for rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },

    #[error("axis {axis} appears more than once")]
    DuplicateAxis { axis: usize },

    #[error("{0:?} is not a permutation of 0..{1}")]
    BadPermutation(Vec<usize>, usize),

    #[error("cannot reshape {from:?} ({from_len} elements) into {to:?} ({to_len} elements)")]
    ReshapeMismatch {
        from: Vec<usize>,
        from_len: usize,
        to: Vec<usize>,
        to_len: usize,
    },

    #[error("shapes {lhs:?} and {rhs:?} do not broadcast: axis sizes {a} vs {b} (neither is 1)")]
    BroadcastMismatch {
        lhs: Vec<usize>,
        rhs: Vec<usize>,
        a: usize,
        b: usize,
    },

    #[error(
        "contracted axes disagree: lhs axis {axis_a} has size {len_a}, rhs axis {axis_b} has size {len_b}"
    )]
    ContractMismatch {
        axis_a: usize,
        len_a: usize,
        axis_b: usize,
        len_b: usize,
    },

    #[error("{what}: expected {expected}, got {got}")]
    DimMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{what}: expected shape {expected:?}, got {got:?}")]
    ShapeMismatch {
        what: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("gate stack stage is {got:?} but {expected:?} is required here")]
    StageMismatch { expected: String, got: String },

    #[error("gate stack needs at least {min} matrices, got {got}")]
    GateTooShallow { min: usize, got: usize },

    #[error("gate matrix {index} maps width {got} but the previous layer produced width {expected}")]
    GateWidthMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },

    #[error("backward requires a scalar output, got shape {shape:?}")]
    NonScalarOutput { shape: Vec<usize> },

    #[error("variable belongs to tape {var_tape}, not tape {tape}")]
    TapeMismatch { var_tape: u64, tape: u64 },

    #[error("refusing to materialize {needed} elements (cap is {cap}); raise the cap to override")]
    CapExceeded { needed: usize, cap: usize },

    #[error("group count must be at least 1")]
    ZeroGroups,

    #[error("height must be at least 1")]
    ZeroHeight,

    #[error(
        "no group count satisfies the {budget_bytes}-byte budget: even {max_groups} groups need {needed_bytes} bytes"
    )]
    InfeasibleBudget {
        budget_bytes: usize,
        max_groups: usize,
        needed_bytes: usize,
    },

    #[error("plan was built for height {plan_h}, input has height {input_h}")]
    PlanMismatch { plan_h: usize, input_h: usize },

    #[error("tensor file: {0}")]
    Container(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CaaError>;
