//! The probabilistic key-value store: stateless key→slot mapping, redundant
//! slot writes and checksum-filtered query resolution.
//!
//! Full keys are never stored. A slot holds `checksum(key) ‖ value`, with the
//! checksum big-endian in `ceil(b / 8)` bytes. A query reads the key's `N`
//! slots, drops those whose checksum differs and resolves what remains with
//! a [`ResolutionPolicy`].

mod config;
mod hashing;
mod region;
pub mod snapshot;
mod types;

pub use config::{
    ConfigError, ResolutionPolicy, StoreConfig, DEFAULT_CHECKSUM_BITS, DEFAULT_COPIES,
    DEFAULT_VALUE_WIDTH,
};
pub use hashing::{compute_checksum, derive_addresses, select_collector, AddressSet, CollectorId};
pub use region::{MemoryRegion, RegionLayout};
pub use types::{InputError, KeyChecksum, TelemetryKey, TelemetryValue, MAX_KEY_LEN};

use smallvec::SmallVec;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Input(#[from] InputError),
    #[error(
        "region geometry {region:?} does not match config ({slots} slots of {slot_width} bytes)"
    )]
    Geometry {
        region: RegionLayout,
        slots: usize,
        slot_width: usize,
    },
}

/// Answer part of a [`QueryResult`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Answer {
    Value(TelemetryValue),
    Empty,
}

impl Answer {
    pub fn value(&self) -> Option<&TelemetryValue> {
        match self {
            Answer::Value(v) => Some(v),
            Answer::Empty => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Answer::Empty)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryResult {
    pub answer: Answer,
    /// Probed slots whose checksum matched the key.
    pub matched_slots: usize,
    /// Distinct values among the matched slots.
    pub distinct_values: usize,
    /// Slot indices probed, in copy order.
    pub addresses: AddressSet,
}

/// Slots written by one report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WriteOutcome {
    pub slots: AddressSet,
}

/// A region together with the configuration that addresses it.
#[derive(Debug)]
pub struct Store {
    config: StoreConfig,
    region: MemoryRegion,
}

impl Store {
    /// Fresh zeroed store at base address 0.
    pub fn new(config: StoreConfig) -> Result<Self, StoreError> {
        Self::with_base_address(config, 0)
    }

    pub fn with_base_address(config: StoreConfig, base_address: u64) -> Result<Self, StoreError> {
        config.validate()?;
        let region = MemoryRegion::for_config(&config, base_address);
        Ok(Store { config, region })
    }

    /// Wraps an existing region, e.g. one restored from a snapshot.
    pub fn from_region(config: StoreConfig, region: MemoryRegion) -> Result<Self, StoreError> {
        config.validate()?;
        if region.slots() != config.slots || region.slot_width() != config.slot_width() {
            return Err(StoreError::Geometry {
                region: region.layout(),
                slots: config.slots,
                slot_width: config.slot_width(),
            });
        }
        Ok(Store { config, region })
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    pub fn region(&self) -> &MemoryRegion {
        &self.region
    }

    pub fn into_parts(self) -> (StoreConfig, MemoryRegion) {
        (self.config, self.region)
    }

    pub fn checksum(&self, key: &TelemetryKey) -> KeyChecksum {
        hashing::checksum_of(
            key.as_bytes(),
            self.config.checksum_bits,
            self.config.checksum_seed,
        )
    }

    pub fn addresses(&self, key: &TelemetryKey) -> AddressSet {
        derive_addresses(key, &self.config)
    }

    pub fn collector(&self, key: &TelemetryKey) -> CollectorId {
        select_collector(key, &self.config)
    }

    /// Slot image `checksum ‖ value` for `key`. This is also the RDMA payload.
    pub fn encode_slot(&self, key: &TelemetryKey, value: &[u8]) -> Result<SlotBytes, InputError> {
        encode_slot(&self.config, key, value)
    }

    /// Writes all `N` copies, unconditionally replacing whatever was there.
    pub fn write_report(
        &self,
        key: &TelemetryKey,
        value: &[u8],
    ) -> Result<WriteOutcome, InputError> {
        let slot = self.encode_slot(key, value)?;
        let slots = self.addresses(key);
        for &idx in &slots {
            self.region.write_slot(idx, &slot)?;
        }
        Ok(WriteOutcome { slots })
    }

    /// Writes only copy `copy` (one packet's worth). Returns the slot index.
    pub fn write_single_copy(
        &self,
        key: &TelemetryKey,
        value: &[u8],
        copy: u32,
    ) -> Result<usize, InputError> {
        if copy >= self.config.copies {
            return Err(InputError::CopyIndex {
                index: copy,
                copies: self.config.copies,
            });
        }
        let slot = self.encode_slot(key, value)?;
        let idx = self.addresses(key)[copy as usize];
        self.region.write_slot(idx, &slot)?;
        Ok(idx)
    }

    /// Writes raw slot bytes at `index`, as a NIC applying a decoded report does.
    pub fn apply_slot(&self, index: usize, slot: &[u8]) -> Result<(), InputError> {
        self.region.write_slot(index, slot)
    }

    /// Resolves `key` with the configured policy.
    pub fn query(&self, key: &TelemetryKey) -> QueryResult {
        self.query_with(key, self.config.policy)
    }

    /// Resolves `key` with an explicit policy.
    pub fn query_with(&self, key: &TelemetryKey, policy: ResolutionPolicy) -> QueryResult {
        let cfg = &self.config;
        let width = cfg.slot_width();
        let csum_len = cfg.checksum_bytes();
        let want = self.checksum(key).to_be_bytes();
        let addresses = self.addresses(key);

        let mut buf: SmallVec<[u8; 256]> = SmallVec::from_elem(0, width * addresses.len());
        for (chunk, &idx) in buf.chunks_mut(width).zip(addresses.iter()) {
            self.region
                .read_slot(idx, chunk)
                .expect("derived index in range");
        }

        // (value, occurrences) in first-seen order
        let mut tally: SmallVec<[(&[u8], u32); 8]> = SmallVec::new();
        let mut matched = 0usize;
        for chunk in buf.chunks(width) {
            let (csum, value) = chunk.split_at(csum_len);
            if csum != want.as_slice() {
                continue;
            }
            matched += 1;
            match tally.iter_mut().find(|(v, _)| *v == value) {
                Some((_, n)) => *n += 1,
                None => tally.push((value, 1)),
            }
        }

        let answer = resolve(&tally, policy)
            .map(|v| Answer::Value(TelemetryValue::from_slice_unchecked(v)))
            .unwrap_or(Answer::Empty);
        QueryResult {
            answer,
            matched_slots: matched,
            distinct_values: tally.len(),
            addresses,
        }
    }
}

/// Inline buffer holding one encoded slot.
pub type SlotBytes = SmallVec<[u8; 64]>;

pub fn encode_slot(
    cfg: &StoreConfig,
    key: &TelemetryKey,
    value: &[u8],
) -> Result<SlotBytes, InputError> {
    if value.len() != cfg.value_width {
        return Err(InputError::ValueWidth {
            expected: cfg.value_width,
            got: value.len(),
        });
    }
    let csum = hashing::checksum_of(key.as_bytes(), cfg.checksum_bits, cfg.checksum_seed);
    let mut slot = SlotBytes::from_elem(0, cfg.slot_width());
    let (head, tail) = slot.split_at_mut(cfg.checksum_bytes());
    csum.write_be(head);
    tail.copy_from_slice(value);
    Ok(slot)
}

fn resolve<'a>(tally: &[(&'a [u8], u32)], policy: ResolutionPolicy) -> Option<&'a [u8]> {
    match policy {
        ResolutionPolicy::SingleMatch => match tally {
            [(v, _)] => Some(v),
            _ => None,
        },
        ResolutionPolicy::PluralityVote => strict_plurality(tally).map(|(v, _)| v),
        ResolutionPolicy::Consensus(k) => strict_plurality(tally)
            .filter(|&(_, n)| n >= k)
            .map(|(v, _)| v),
    }
}

fn strict_plurality<'a>(tally: &[(&'a [u8], u32)]) -> Option<(&'a [u8], u32)> {
    let best = tally.iter().map(|&(_, n)| n).max()?;
    let mut winners = tally.iter().filter(|&&(_, n)| n == best);
    let first = *winners.next()?;
    if winners.next().is_some() {
        return None;
    }
    Some(first)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(i: u64) -> TelemetryKey {
        TelemetryKey::new(&i.to_be_bytes()).unwrap()
    }

    fn value(tag: u8) -> Vec<u8> {
        vec![tag; DEFAULT_VALUE_WIDTH]
    }

    fn store(slots: usize, copies: u32, bits: u32) -> Store {
        let mut cfg = StoreConfig::with_slots(slots);
        cfg.copies = copies;
        cfg.checksum_bits = bits;
        Store::new(cfg).unwrap()
    }

    #[test]
    fn empty_region_answers_empty() {
        let s = store(1024, 2, 32);
        for i in 0..100 {
            let r = s.query(&key(i));
            assert_eq!(r.answer, Answer::Empty, "key {i}");
        }
    }

    #[test]
    fn write_then_query() {
        let s = store(1024, 2, 32);
        s.write_report(&key(1), &value(7)).unwrap();
        let r = s.query(&key(1));
        assert_eq!(r.answer.value().unwrap().as_bytes(), &value(7)[..]);
        assert_eq!(r.matched_slots, 2);
        assert_eq!(r.distinct_values, 1);
    }

    #[test]
    fn rewrite_overwrites() {
        let s = store(1024, 2, 32);
        s.write_report(&key(1), &value(1)).unwrap();
        s.write_report(&key(1), &value(2)).unwrap();
        assert_eq!(
            s.query(&key(1)).answer.value().unwrap().as_bytes(),
            &value(2)[..]
        );
    }

    #[test]
    fn value_width_mismatch_is_input_error() {
        let s = store(64, 2, 32);
        assert_eq!(
            s.write_report(&key(1), &[0; 3]),
            Err(InputError::ValueWidth {
                expected: 20,
                got: 3
            })
        );
    }

    #[test]
    fn single_copies_compose_to_full_write() {
        let a = store(256, 3, 32);
        let b = store(256, 3, 32);
        for i in 0..40 {
            a.write_report(&key(i), &value(i as u8)).unwrap();
            for n in 0..3 {
                b.write_single_copy(&key(i), &value(i as u8), n).unwrap();
            }
        }
        assert_eq!(a.region().to_bytes(), b.region().to_bytes());
    }

    #[test]
    fn single_copy_is_enough_under_single_match() {
        let s = store(1024, 2, 32);
        let idx = s.write_single_copy(&key(5), &value(9), 0).unwrap();
        assert_eq!(idx, s.addresses(&key(5))[0]);
        assert!(!s.region().is_valid(s.addresses(&key(5))[1]));
        let r = s.query(&key(5));
        assert_eq!(r.answer.value().unwrap().as_bytes(), &value(9)[..]);
        assert_eq!(r.matched_slots, 1);
    }

    #[test]
    fn copy_index_out_of_range() {
        let s = store(64, 2, 32);
        assert_eq!(
            s.write_single_copy(&key(1), &value(0), 2),
            Err(InputError::CopyIndex {
                index: 2,
                copies: 2
            })
        );
    }

    /// Places `values` in the key's slots, all with the key's checksum.
    fn plant(s: &Store, k: &TelemetryKey, values: &[Vec<u8>]) {
        for (&idx, v) in s.addresses(k).iter().zip(values) {
            let slot = s.encode_slot(k, v).unwrap();
            s.apply_slot(idx, &slot).unwrap();
        }
    }

    #[test]
    fn policies_on_two_to_one_split() {
        let s = store(1024, 3, 32);
        let k = key(11);
        plant(&s, &k, &[value(1), value(1), value(2)]);
        let single = s.query_with(&k, ResolutionPolicy::SingleMatch);
        assert!(single.answer.is_empty());
        assert_eq!(single.distinct_values, 2);
        assert_eq!(single.matched_slots, 3);
        let plural = s.query_with(&k, ResolutionPolicy::PluralityVote);
        assert_eq!(plural.answer.value().unwrap().as_bytes(), &value(1)[..]);
        let cons2 = s.query_with(&k, ResolutionPolicy::Consensus(2));
        assert_eq!(cons2.answer.value().unwrap().as_bytes(), &value(1)[..]);
        let cons3 = s.query_with(&k, ResolutionPolicy::Consensus(3));
        assert!(cons3.answer.is_empty());
    }

    #[test]
    fn plurality_tie_is_empty() {
        let s = store(1024, 2, 32);
        let k = key(12);
        plant(&s, &k, &[value(1), value(2)]);
        assert!(s
            .query_with(&k, ResolutionPolicy::PluralityVote)
            .answer
            .is_empty());
        assert!(s
            .query_with(&k, ResolutionPolicy::Consensus(2))
            .answer
            .is_empty());
    }

    #[test]
    fn mismatched_checksum_is_discarded() {
        let s = store(1024, 2, 32);
        let k = key(13);
        let other = key(14);
        s.write_report(&k, &value(3)).unwrap();
        // Foreign bytes in copy 1: checksum of another key.
        let foreign = s.encode_slot(&other, &value(4)).unwrap();
        s.apply_slot(s.addresses(&k)[1], &foreign).unwrap();
        let r = s.query(&k);
        assert_eq!(r.matched_slots, 1);
        assert_eq!(r.answer.value().unwrap().as_bytes(), &value(3)[..]);
    }

    #[test]
    fn one_bit_checksum_collision_yields_return_error() {
        // Brute-force a second key with the same 1-bit checksum and make it
        // the last writer of every slot of the first key.
        let s = store(16, 1, 1);
        let q = key(0);
        let want = s.checksum(&q);
        let q_slot = s.addresses(&q)[0];
        s.write_report(&q, &value(1)).unwrap();
        let intruder = (1..10_000)
            .map(key)
            .find(|k| s.checksum(k) == want && s.addresses(k)[0] == q_slot)
            .expect("collision exists in a 16-slot, 1-bit space");
        s.write_report(&intruder, &value(2)).unwrap();
        let r = s.query_with(&q, ResolutionPolicy::SingleMatch);
        assert_eq!(r.answer.value().unwrap().as_bytes(), &value(2)[..]);
    }

    #[test]
    fn zero_checksum_key_matches_zeroed_slots() {
        // A key whose checksum is 0 reads zeroed memory as a zero value; the
        // validity flag must not be consulted.
        let s = store(64, 2, 4);
        let k = (0..10_000)
            .map(key)
            .find(|k| s.checksum(k).value() == 0)
            .unwrap();
        let r = s.query(&k);
        assert_eq!(r.matched_slots, 2);
        assert_eq!(r.answer.value().unwrap().as_bytes(), &[0u8; 20][..]);
    }

    #[test]
    fn from_region_checks_geometry() {
        let cfg = StoreConfig::with_slots(8);
        let wrong = MemoryRegion::new(9, 24, 0);
        assert!(matches!(
            Store::from_region(cfg.clone(), wrong),
            Err(StoreError::Geometry { .. })
        ));
        let right = MemoryRegion::new(8, 24, 0);
        assert!(Store::from_region(cfg, right).is_ok());
    }
}
