//! Synthetic, seeded telemetry workloads.
//!
//! Key `i` is a 13-byte 5-tuple whose addresses come from a bijective mix of
//! `i`, so keys within one workload are distinct by construction. Values
//! start with `i` little-endian, so a value identifies the key that wrote it.

use dart_core::store::TelemetryKey;

/// Length of a 5-tuple key: two IPv4 addresses, two ports, protocol.
pub const KEY_LEN: usize = 13;

/// Smallest value width that keeps values unique per key.
pub const MIN_VALUE_WIDTH: usize = 8;

/// SplitMix64 finalizer. A bijection on `u64`.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent seed for `(domain, index)` under a master seed.
pub fn derive_seed(master: u64, domain: u64, index: u64) -> u64 {
    mix64(master ^ mix64(domain.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ mix64(index)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Workload {
    seed: u64,
    value_width: usize,
}

impl Workload {
    /// Panics if `value_width < MIN_VALUE_WIDTH`.
    pub fn new(seed: u64, value_width: usize) -> Self {
        assert!(
            value_width >= MIN_VALUE_WIDTH,
            "value width {value_width} too small"
        );
        Workload { seed, value_width }
    }

    pub fn value_width(&self) -> usize {
        self.value_width
    }

    pub fn key_bytes(&self, i: u64) -> [u8; KEY_LEN] {
        let ips = mix64(i ^ self.seed);
        let rest = mix64(ips ^ 0x5a5a_5a5a_5a5a_5a5a);
        let mut k = [0u8; KEY_LEN];
        k[0..8].copy_from_slice(&ips.to_be_bytes());
        k[8..10].copy_from_slice(&(rest as u16).to_be_bytes());
        k[10..12].copy_from_slice(&((rest >> 16) as u16).to_be_bytes());
        k[12] = if rest >> 63 == 0 { 6 } else { 17 };
        k
    }

    pub fn key(&self, i: u64) -> TelemetryKey {
        TelemetryKey::new(&self.key_bytes(i)).expect("13-byte key is valid")
    }

    /// Writes value `i` into `out` (`value_width` bytes).
    pub fn fill_value(&self, i: u64, out: &mut [u8]) {
        out[..8].copy_from_slice(&i.to_le_bytes());
        let mut state = mix64(i ^ self.seed.rotate_left(17));
        for chunk in out[8..].chunks_mut(8) {
            state = mix64(state);
            chunk.copy_from_slice(&state.to_le_bytes()[..chunk.len()]);
        }
    }

    pub fn value(&self, i: u64) -> Vec<u8> {
        let mut v = vec![0u8; self.value_width];
        self.fill_value(i, &mut v);
        v
    }
}
