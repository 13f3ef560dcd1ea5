//! Deterministic experiment driver for the DART store.
//!
//! Each experiment inserts a synthetic workload into fresh regions, queries
//! every key and reports measured rates next to the analytic model:
//!
//! - [`run_redundancy_sweep`]: mean success over loads and copy counts.
//! - [`run_aging`]: success by report age percentile.
//! - [`run_correctness`]: wrong-value rate against checksum width.
//! - [`run_e2e_wire`]: the same path over RoCEv2 frames and a live collector.
//!
//! Rows are written as CSV by [`write_csv`]; see [`row`] for the columns.

pub mod experiments;
pub mod plot;
pub mod row;
pub mod spec;
pub mod stats;
pub mod trial;
pub mod workload;

pub use experiments::{
    run, run_aging, run_correctness, run_e2e_wire, run_redundancy_sweep, ExperimentError,
};
pub use row::{write_csv, ExperimentRow};
pub use spec::{ExperimentKind, ExperimentSpec};
