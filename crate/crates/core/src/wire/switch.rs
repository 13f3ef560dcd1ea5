//! Switch-side report generation: collector lookup table, per-collector PSN
//! counters and random copy selection. The emulator keeps no per-key state.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::packet::{PacketParams, RoceReportPacket};
use super::WireError;
use crate::store::{
    derive_addresses, encode_slot, select_collector, CollectorId, RegionLayout, StoreConfig,
    TelemetryKey,
};

const PSN_MASK: u32 = 0x00ff_ffff;

/// Everything the switch needs to address one collector's region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CollectorTableEntry {
    pub collector_id: CollectorId,
    pub mac: [u8; 6],
    pub ip: Ipv4Addr,
    pub queue_pair: u32,
    pub remote_key: u32,
    pub base_address: u64,
    pub slots: u64,
}

impl CollectorTableEntry {
    pub fn layout(&self, slot_width: usize) -> RegionLayout {
        RegionLayout {
            slots: self.slots as usize,
            slot_width,
            base_address: self.base_address,
        }
    }
}

/// 24-bit wrapping packet sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PsnCounter(u32);

impl PsnCounter {
    pub fn new(start: u32) -> Self {
        PsnCounter(start & PSN_MASK)
    }

    pub fn current(&self) -> u32 {
        self.0
    }

    /// Returns the current PSN and advances by one.
    pub fn take(&mut self) -> u32 {
        let psn = self.0;
        self.0 = (self.0 + 1) & PSN_MASK;
        psn
    }
}

/// Switch-local header fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwitchIdentity {
    pub mac: [u8; 6],
    pub ip: Ipv4Addr,
    pub udp_src_port: u16,
    pub dscp: u8,
    pub ttl: u8,
    pub partition_key: u16,
}

impl Default for SwitchIdentity {
    fn default() -> Self {
        SwitchIdentity {
            mac: [0x02, 0, 0, 0, 0, 0xaa],
            ip: Ipv4Addr::new(10, 0, 0, 1),
            udp_src_port: 49152,
            dscp: 0,
            ttl: 64,
            partition_key: 0xffff,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SwitchEmulator {
    config: StoreConfig,
    identity: SwitchIdentity,
    table: BTreeMap<CollectorId, CollectorTableEntry>,
    psn: BTreeMap<CollectorId, PsnCounter>,
    rng: ChaCha8Rng,
}

impl SwitchEmulator {
    pub fn new(config: StoreConfig, identity: SwitchIdentity, seed: u64) -> Self {
        SwitchEmulator {
            config,
            identity,
            table: BTreeMap::new(),
            psn: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    /// Installs or replaces a lookup-table entry. Its PSN counter starts at 0
    /// the first time the collector is seen.
    pub fn install_collector(&mut self, entry: CollectorTableEntry) {
        self.psn.entry(entry.collector_id).or_default();
        self.table.insert(entry.collector_id, entry);
    }

    pub fn collector_entry(&self, id: CollectorId) -> Option<&CollectorTableEntry> {
        self.table.get(&id)
    }

    pub fn psn(&self, id: CollectorId) -> Option<u32> {
        self.psn.get(&id).map(PsnCounter::current)
    }

    /// Number of entries held by the switch: lookup table plus counters.
    /// Independent of how many keys have been reported.
    pub fn state_entries(&self) -> usize {
        self.table.len() + self.psn.len()
    }

    /// One report for a uniformly drawn copy index `n ∈ [0, N)`.
    pub fn craft_report(
        &mut self,
        key: &TelemetryKey,
        value: &[u8],
    ) -> Result<RoceReportPacket, WireError> {
        let copy = self.rng.random_range(0..self.config.copies);
        self.craft_copy(key, value, copy)
    }

    /// One report for an explicit copy index.
    pub fn craft_copy(
        &mut self,
        key: &TelemetryKey,
        value: &[u8],
        copy: u32,
    ) -> Result<RoceReportPacket, WireError> {
        if copy >= self.config.copies {
            return Err(WireError::CopyIndex {
                index: copy,
                copies: self.config.copies,
            });
        }
        let collector = select_collector(key, &self.config);
        let entry = *self
            .table
            .get(&collector)
            .ok_or(WireError::UnknownCollector(collector))?;
        if entry.slots != self.config.slots as u64 {
            return Err(WireError::RegionMismatch {
                collector,
                table_slots: entry.slots,
                config_slots: self.config.slots as u64,
            });
        }
        let payload = encode_slot(&self.config, key, value)?;
        let slot = derive_addresses(key, &self.config)[copy as usize];
        let psn = self
            .psn
            .get_mut(&collector)
            .expect("counter installed with entry")
            .take();
        let params = PacketParams {
            src_mac: self.identity.mac,
            dst_mac: entry.mac,
            src_ip: self.identity.ip,
            dst_ip: entry.ip,
            udp_src_port: self.identity.udp_src_port,
            dscp: self.identity.dscp,
            ttl: self.identity.ttl,
            partition_key: self.identity.partition_key,
            dest_qp: entry.queue_pair,
            psn,
            ack_request: false,
            remote_address: entry.layout(self.config.slot_width()).slot_address(slot),
            remote_key: entry.remote_key,
        };
        Ok(RoceReportPacket::build(&params, &payload))
    }

    /// `copies` independent random-copy reports for one key.
    pub fn emit_report_burst(
        &mut self,
        key: &TelemetryKey,
        value: &[u8],
        copies: u32,
    ) -> Result<Vec<RoceReportPacket>, WireError> {
        if copies == 0 {
            return Err(WireError::EmptyBurst);
        }
        (0..copies).map(|_| self.craft_report(key, value)).collect()
    }

    /// One report per copy index `0..N`, filling every slot of the key.
    pub fn emit_full_coverage(
        &mut self,
        key: &TelemetryKey,
        value: &[u8],
    ) -> Result<Vec<RoceReportPacket>, WireError> {
        (0..self.config.copies)
            .map(|n| self.craft_copy(key, value, n))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: u32, slots: u64) -> CollectorTableEntry {
        CollectorTableEntry {
            collector_id: CollectorId(id),
            mac: [2, 0, 0, 0, 1, id as u8],
            ip: Ipv4Addr::new(10, 1, 0, id as u8),
            queue_pair: 0x100 + id,
            remote_key: 0xabc0 + id,
            base_address: 0x4000_0000 * (u64::from(id) + 1),
            slots,
        }
    }

    fn switch(slots: usize) -> SwitchEmulator {
        let cfg = StoreConfig::with_slots(slots);
        let mut sw = SwitchEmulator::new(cfg, SwitchIdentity::default(), 9);
        sw.install_collector(entry(0, slots as u64));
        sw
    }

    #[test]
    fn psn_wraps_at_24_bits() {
        let mut c = PsnCounter::new(0x00ff_fffe);
        assert_eq!(c.take(), 0x00ff_fffe);
        assert_eq!(c.take(), 0x00ff_ffff);
        assert_eq!(c.take(), 0);
        assert_eq!(c.current(), 1);
        assert_eq!(PsnCounter::new(0x0100_0005).current(), 5);
    }

    #[test]
    fn unknown_collector_is_an_error() {
        let mut cfg = StoreConfig::with_slots(64);
        cfg.num_collectors = 4;
        let mut sw = SwitchEmulator::new(cfg, SwitchIdentity::default(), 1);
        let k = TelemetryKey::new(b"flow").unwrap();
        assert!(matches!(
            sw.craft_report(&k, &[0; 20]),
            Err(WireError::UnknownCollector(_))
        ));
    }

    #[test]
    fn addresses_stay_in_region() {
        let mut sw = switch(100);
        let width = 24u64;
        for i in 0u32..500 {
            let k = TelemetryKey::new(&i.to_be_bytes()).unwrap();
            let p = sw.craft_report(&k, &[1; 20]).unwrap();
            let off = p.reth.remote_address - 0x4000_0000;
            assert_eq!(off % width, 0);
            assert!(off < 100 * width);
            assert_eq!(p.reth.dma_length, 24);
        }
    }

    #[test]
    fn burst_advances_psn() {
        let mut sw = switch(64);
        let k = TelemetryKey::new(b"k").unwrap();
        let before = sw.psn(CollectorId(0)).unwrap();
        let pkts = sw.emit_report_burst(&k, &[3; 20], 5).unwrap();
        let psns: Vec<u32> = pkts.iter().map(|p| p.bth.psn).collect();
        assert_eq!(psns, (before..before + 5).collect::<Vec<_>>());
        assert_eq!(sw.psn(CollectorId(0)), Some(before + 5));
        assert!(matches!(
            sw.emit_report_burst(&k, &[3; 20], 0),
            Err(WireError::EmptyBurst)
        ));
    }

    #[test]
    fn crafts_for_same_key_differ_only_in_copy_fields() {
        let mut sw = switch(1 << 12);
        let k = TelemetryKey::new(b"same-key").unwrap();
        let a = sw.craft_report(&k, &[9; 20]).unwrap();
        let b = sw.craft_report(&k, &[9; 20]).unwrap();
        assert_eq!(a.payload, b.payload);
        assert_eq!(a.eth, b.eth);
        assert_eq!(a.udp, b.udp);
        assert_eq!(a.reth.remote_key, b.reth.remote_key);
        let mut b_norm = b.clone();
        b_norm.bth.psn = a.bth.psn;
        b_norm.reth.remote_address = a.reth.remote_address;
        b_norm.icrc = a.icrc;
        b_norm.ipv4.checksum = a.ipv4.checksum;
        assert_eq!(a, b_norm);
    }

    #[test]
    fn table_mismatch_detected() {
        let cfg = StoreConfig::with_slots(64);
        let mut sw = SwitchEmulator::new(cfg, SwitchIdentity::default(), 1);
        sw.install_collector(entry(0, 32));
        let k = TelemetryKey::new(b"x").unwrap();
        assert!(matches!(
            sw.craft_copy(&k, &[0; 20], 0),
            Err(WireError::RegionMismatch { .. })
        ));
        assert!(matches!(
            sw.craft_copy(&k, &[0; 20], 2),
            Err(WireError::CopyIndex { .. })
        ));
    }

    #[test]
    fn state_does_not_grow_with_keys() {
        let mut sw = switch(1024);
        let before = sw.state_entries();
        for i in 0u32..2000 {
            let k = TelemetryKey::new(&i.to_le_bytes()).unwrap();
            sw.craft_report(&k, &[0; 20]).unwrap();
        }
        assert_eq!(sw.state_entries(), before);
    }
}
