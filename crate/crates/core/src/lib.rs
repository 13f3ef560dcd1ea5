//! DART telemetry store: switches write telemetry reports straight into a
//! collector's memory region with stateless hash addressing, `N`-way
//! redundancy and short key checksums.
//!
//! - [`store`]: the probabilistic key-value store itself.
//! - [`analytic`]: closed-form success and error probabilities.
//! - [`wire`]: RoCEv2 RDMA-WRITE report crafting and parsing.

pub mod analytic;
pub mod store;
pub mod wire;
