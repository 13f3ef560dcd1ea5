#![allow(dead_code)]

use std::net::{Ipv4Addr, SocketAddr, UdpSocket};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use dart_collector::{CollectorRuntime, CollectorServer};
use dart_core::store::{CollectorId, StoreConfig};
use dart_core::wire::{CollectorTableEntry, SwitchEmulator, SwitchIdentity};

pub const BASE: u64 = 0x5000_0000;

pub fn local() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

pub fn start(config: StoreConfig, id: u32) -> CollectorServer {
    let rt = CollectorRuntime::new(CollectorId(id), config, BASE).unwrap();
    CollectorServer::start(Arc::new(rt), local(), local()).unwrap()
}

pub fn switch_for(config: &StoreConfig, seed: u64) -> SwitchEmulator {
    let mut sw = SwitchEmulator::new(config.clone(), SwitchIdentity::default(), seed);
    for id in 0..config.num_collectors {
        sw.install_collector(CollectorTableEntry {
            collector_id: CollectorId(id),
            mac: [2, 0, 0, 0, 0, id as u8],
            ip: Ipv4Addr::new(10, 0, 1, id as u8),
            queue_pair: 0x10 + id,
            remote_key: 0xbeef,
            base_address: BASE,
            slots: config.slots as u64,
        });
    }
    sw
}

/// Sends frames in windows, waiting for the collector to count each window
/// before sending the next so the kernel buffer never overflows.
pub fn send_paced(server: &CollectorServer, frames: &[Vec<u8>]) {
    let sock = UdpSocket::bind(local()).unwrap();
    let rt = server.runtime();
    let start = rt.stats().received();
    for (i, chunk) in frames.chunks(256).enumerate() {
        for f in chunk {
            sock.send_to(f, server.report_addr()).unwrap();
        }
        let target = start + (i * 256 + chunk.len()) as u64;
        wait_for(|| rt.stats().received() >= target);
    }
}

pub fn wait_for(mut cond: impl FnMut() -> bool) {
    let deadline = Instant::now() + Duration::from_secs(10);
    while !cond() {
        assert!(Instant::now() < deadline, "timed out waiting for ingest");
        thread::yield_now();
    }
}
