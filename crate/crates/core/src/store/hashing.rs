//! Stateless key hashing shared by writers and readers.
//!
//! Everything here is a pure function of the key bytes and a 64-bit seed, so
//! a switch and an operator computing the same mapping independently always
//! agree. The underlying hash is seeded XXH3-64.

use smallvec::SmallVec;
use xxhash_rust::xxh3::xxh3_64_with_seed;

use super::config::{ConfigError, StoreConfig};
use super::types::{KeyChecksum, TelemetryKey};

/// The `N` slot indices of one key, pairwise distinct.
pub type AddressSet = SmallVec<[usize; 8]>;

/// Index of a collector among `StoreConfig::num_collectors`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CollectorId(pub u32);

impl std::fmt::Display for CollectorId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[inline]
fn seeded_hash(bytes: &[u8], seed: u64) -> u64 {
    xxh3_64_with_seed(bytes, seed)
}

/// Low `bits` bits of the seeded key hash.
pub fn compute_checksum(
    key: &TelemetryKey,
    bits: u32,
    seed: u64,
) -> Result<KeyChecksum, ConfigError> {
    if !(1..=64).contains(&bits) {
        return Err(ConfigError::ChecksumBits(bits));
    }
    Ok(checksum_of(key.as_bytes(), bits, seed))
}

#[inline]
pub(crate) fn checksum_of(key: &[u8], bits: u32, seed: u64) -> KeyChecksum {
    let h = seeded_hash(key, seed);
    let mask = if bits == 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    };
    KeyChecksum::new(h & mask, bits)
}

/// Slot index for copy `copy` on rehash attempt `attempt`.
///
/// Attempt 0 hashes `key ‖ copy` (copy as u32 little-endian); later attempts
/// append the attempt counter as another u32.
#[inline]
fn slot_candidate(key: &[u8], copy: u32, attempt: u32, seed: u64, slots: usize) -> usize {
    let mut buf: SmallVec<[u8; 96]> = SmallVec::with_capacity(key.len() + 8);
    buf.extend_from_slice(key);
    buf.extend_from_slice(&copy.to_le_bytes());
    if attempt > 0 {
        buf.extend_from_slice(&attempt.to_le_bytes());
    }
    (seeded_hash(&buf, seed) % slots as u64) as usize
}

/// The `N` distinct slot indices for `key`. Copy `n` keeps rehashing with an
/// incremented attempt counter until it lands outside the indices already
/// chosen for copies `0..n`.
pub fn derive_addresses(key: &TelemetryKey, cfg: &StoreConfig) -> AddressSet {
    addresses_of(key.as_bytes(), cfg.copies, cfg.address_seed, cfg.slots)
}

pub(crate) fn addresses_of(key: &[u8], copies: u32, seed: u64, slots: usize) -> AddressSet {
    assert!(
        copies as usize <= slots,
        "{copies} distinct addresses cannot fit in {slots} slots"
    );
    let mut out = AddressSet::with_capacity(copies as usize);
    for copy in 0..copies {
        let mut attempt = 0u32;
        loop {
            let idx = slot_candidate(key, copy, attempt, seed, slots);
            if !out.contains(&idx) {
                out.push(idx);
                break;
            }
            attempt += 1;
        }
    }
    out
}

/// Collector holding all copies of `key`.
pub fn select_collector(key: &TelemetryKey, cfg: &StoreConfig) -> CollectorId {
    collector_of(key.as_bytes(), cfg.collector_seed, cfg.num_collectors)
}

pub(crate) fn collector_of(key: &[u8], seed: u64, num_collectors: u32) -> CollectorId {
    if num_collectors <= 1 {
        return CollectorId(0);
    }
    CollectorId((seeded_hash(key, seed) % u64::from(num_collectors)) as u32)
}
