//! Command layer for the channelized axial attention toolkit.
//!
//! The `caa` binary is a thin argument parser over these modules; keeping
//! the command bodies in a library lets the integration and acceptance
//! tests run every command in-process and assert on its exact output.
//!
//! * [`verify`] — the verification suites (`caa verify`).
//! * [`bench`] — grouped-execution timing sweeps as CSV (`caa bench`).
//! * [`report`] — the analytic cost-model table (`caa flops`).
//! * [`fixtures`] — reference tensor sets on disk (`caa fixtures`).

pub mod bench;
pub mod fixtures;
pub mod report;
pub mod verify;
