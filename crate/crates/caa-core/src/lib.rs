//! Channelized axial attention with deterministic numerics.
//!
//! The library decomposes 2D self-attention into a column pass followed by a
//! row pass, inserts spatially varying per-channel gates between and after
//! the two passes, and executes the whole pipeline either in one shot or in
//! row groups that trade peak intermediate memory for repeated passes.
//!
//! Module map:
//!
//! * [`tensor`] — dense row-major tensors; deterministic elementwise ops,
//!   contraction, softmax, reductions, shape surgery.
//! * [`rng`] — seeded named random streams with a pinned bit-exact algorithm.
//! * [`container`] — on-disk tensor format and named tensor sets.
//! * [`tape`] — reverse-mode autodiff over f64 tensors, plus central finite
//!   differences for gradient verification.
//! * [`attention`] — projections, full 2D self-attention, and the
//!   column/row (axial) decomposition with its intermediate breakdown.
//! * [`channelize`] — gate stacks and the gated (channelized) variants of
//!   the attention kernels.
//! * [`groupexec`] — row-grouped execution plans, the instrumented grouped
//!   executor, and memory/time measurement.
//! * [`oracle`] — independent loop-level reference implementations used to
//!   validate every kernel above.
//! * [`diff`] — tape graph builders mirroring the forward kernels, used for
//!   gradient checks.
//! * [`flops`] — the analytic cost model for the attention variants.

pub mod attention;
pub mod channelize;
pub mod container;
pub mod diff;
pub mod error;
pub mod flops;
pub mod groupexec;
pub mod oracle;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use error::{CaaError, Result};
pub use rng::SeedRng;
pub use tensor::{Dtype, Scalar, Tensor};
