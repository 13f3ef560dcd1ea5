//! An emulated DART collector.
//!
//! Reports arrive as RoCEv2 RDMA WRITE frames carried in UDP datagrams (the
//! datagram payload is the whole Ethernet frame). Each accepted frame is
//! written straight into the region with no per-key bookkeeping. Operators
//! query over a length-prefixed TCP protocol, see [`protocol`].

pub mod client;
pub mod protocol;
pub mod runtime;
pub mod server;

pub use client::{ClientError, ClusterClient, CollectorClient};
pub use protocol::{QueryResponse, Request, Response, StatsResponse};
pub use runtime::{CollectorRuntime, IngestStats};
pub use server::CollectorServer;
