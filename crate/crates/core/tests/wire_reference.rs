//! Wire format against frozen reference frames and an independently coded
//! invariant-CRC.
//!
//! The reference frames were produced by a separate Python builder
//! (`struct` packing plus `zlib.crc32`) from the same field values.

use std::net::Ipv4Addr;

use dart_core::store::CollectorId;
use dart_core::store::{Store, StoreConfig, TelemetryKey};
use dart_core::wire::{
    parse_report, CollectorTableEntry, PacketParams, Reject, RoceReportPacket, SwitchEmulator,
    SwitchIdentity,
};
use proptest::prelude::*;

/// Bit-at-a-time reflected CRC-32 (poly 0xEDB88320).
fn crc32_bitwise(data: &[u8]) -> u32 {
    let mut crc = 0xffff_ffffu32;
    for &byte in data {
        crc ^= u32::from(byte);
        for _ in 0..8 {
            let lsb = crc & 1;
            crc >>= 1;
            if lsb == 1 {
                crc ^= 0xedb8_8320;
            }
        }
    }
    !crc
}

/// iCRC from first principles over a complete frame (iCRC included): mask
/// the variant fields in a copy and CRC everything from IPv4 onward behind
/// eight 0xff bytes.
fn reference_icrc(frame: &[u8]) -> u32 {
    let mut buf = vec![0xffu8; 8];
    buf.extend_from_slice(&frame[14..frame.len() - 4]);
    let ip = 8;
    buf[ip + 1] = 0xff;
    buf[ip + 8] = 0xff;
    buf[ip + 10] = 0xff;
    buf[ip + 11] = 0xff;
    let udp = ip + 20;
    buf[udp + 6] = 0xff;
    buf[udp + 7] = 0xff;
    let bth = udp + 8;
    buf[bth + 4] = 0xff;
    crc32_bitwise(&buf)
}

fn carried_icrc(frame: &[u8]) -> u32 {
    u32::from_le_bytes(frame[frame.len() - 4..].try_into().unwrap())
}

struct Vector {
    params: PacketParams,
    payload: Vec<u8>,
    hex: &'static str,
}

fn vectors() -> Vec<Vector> {
    vec![
        Vector {
            params: PacketParams {
                dst_mac: [2, 0, 0, 0, 0, 1],
                src_mac: [2, 0, 0, 0, 0, 0xaa],
                src_ip: Ipv4Addr::new(10, 0, 0, 1),
                dst_ip: Ipv4Addr::new(10, 0, 0, 2),
                udp_src_port: 49152,
                dscp: 26,
                ttl: 64,
                partition_key: 0xffff,
                dest_qp: 0x11,
                psn: 0,
                ack_request: false,
                remote_address: 0x10000,
                remote_key: 0x1234,
            },
            payload: (0..24).collect(),
            hex: "0200000000010200000000aa080045680054000040004011262f0a0000010a000002c00012b7004000000a00ffff000000110000000000000000000100000000123400000018000102030405060708090a0b0c0d0e0f101112131415161748c2f5cb",
        },
        Vector {
            params: PacketParams {
                dst_mac: [0x0c, 0x42, 0xa1, 0x12, 0x34, 0x56],
                src_mac: [0x0c, 0x42, 0xa1, 0xab, 0xcd, 0xef],
                src_ip: Ipv4Addr::new(192, 168, 1, 10),
                dst_ip: Ipv4Addr::new(192, 168, 1, 200),
                udp_src_port: 50000,
                dscp: 0,
                ttl: 255,
                partition_key: 0x8001,
                dest_qp: 0xabcdef,
                psn: 0xffffff,
                ack_request: true,
                remote_address: 0x7f00_dead_beef_0000,
                remote_key: 0xcafe_babe,
            },
            payload: vec![0x5a; 21],
            hex: "0c42a11234560c42a1abcdef08004500005400004000ff11f775c0a8010ac0a801c8c35012b7004000000a30800100abcdef80ffffff7f00deadbeef0000cafebabe000000155a5a5a5a5a5a5a5a5a5a5a5a5a5a5a5a5a5a5a5a5a00000026d36d13",
        },
        Vector {
            params: PacketParams {
                dst_mac: [0xff; 6],
                src_mac: [0, 1, 2, 3, 4, 5],
                src_ip: Ipv4Addr::new(1, 2, 3, 4),
                dst_ip: Ipv4Addr::new(5, 6, 7, 8),
                udp_src_port: 4791,
                dscp: 63,
                ttl: 1,
                partition_key: 0,
                dest_qp: 1,
                psn: 0x123456,
                ack_request: false,
                remote_address: 0,
                remote_key: 0,
            },
            payload: {
                let mut p = vec![0, 0, 0, 1];
                p.extend_from_slice(&[0; 20]);
                p
            },
            hex: "ffffffffffff000102030405080045fc0054000040000111688a010203040506070812b712b7004000000a00000000000001001234560000000000000000000000000000001800000001000000000000000000000000000000000000000014401f33",
        },
    ]
}

fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[test]
fn frames_match_reference_vectors() {
    for (i, v) in vectors().iter().enumerate() {
        let pkt = RoceReportPacket::build(&v.params, &v.payload);
        let bytes = pkt.to_bytes();
        assert_eq!(to_hex(&bytes), v.hex, "vector {i}");
        assert_eq!(reference_icrc(&bytes), pkt.icrc, "vector {i}");
    }
}

#[test]
fn bitwise_crc_matches_known_check_value() {
    assert_eq!(crc32_bitwise(b"123456789"), 0xcbf4_3926);
}

fn test_switch(slots: usize, seed: u64) -> (SwitchEmulator, Store) {
    let cfg = StoreConfig::with_slots(slots);
    let base = 0x7000_0000_0000u64;
    let store = Store::with_base_address(cfg.clone(), base).unwrap();
    let mut sw = SwitchEmulator::new(cfg, SwitchIdentity::default(), seed);
    sw.install_collector(CollectorTableEntry {
        collector_id: CollectorId(0),
        mac: [2, 0, 0, 0, 0, 1],
        ip: Ipv4Addr::new(10, 0, 0, 2),
        queue_pair: 0x42,
        remote_key: 0x77,
        base_address: base,
        slots: slots as u64,
    });
    (sw, store)
}

#[test]
fn crafted_icrc_agrees_with_reference_on_many_frames() {
    let (mut sw, _) = test_switch(4096, 3);
    for i in 0u32..5_000 {
        let k = TelemetryKey::new(&i.to_be_bytes()).unwrap();
        let v = [(i % 256) as u8; 20];
        let bytes = sw.craft_report(&k, &v).unwrap().to_bytes();
        assert_eq!(carried_icrc(&bytes), reference_icrc(&bytes));
    }
}

#[test]
fn craft_parse_apply_matches_direct_copy_writes() {
    let (mut sw, via_wire) = test_switch(512, 11);
    let direct = Store::with_base_address(via_wire.config().clone(), 0x7000_0000_0000).unwrap();
    let layout = via_wire.region().layout();
    for i in 0u32..2_000 {
        let k = TelemetryKey::new(&i.to_le_bytes()).unwrap();
        let v = [(i * 7 % 256) as u8; 20];
        let pkt = sw.craft_report(&k, &v).unwrap();
        let bytes = pkt.to_bytes();
        let w = parse_report(&bytes, &layout).unwrap();
        via_wire.apply_slot(w.slot_index, w.payload).unwrap();
        let copy = direct
            .addresses(&k)
            .iter()
            .position(|&s| s == w.slot_index)
            .unwrap() as u32;
        direct.write_single_copy(&k, &v, copy).unwrap();
    }
    assert_eq!(via_wire.region().to_bytes(), direct.region().to_bytes());
}

#[test]
fn full_coverage_burst_equals_write_report() {
    let (mut sw, via_wire) = test_switch(256, 5);
    let direct = Store::with_base_address(via_wire.config().clone(), 0x7000_0000_0000).unwrap();
    let layout = via_wire.region().layout();
    for i in 0u32..300 {
        let k = TelemetryKey::new(&i.to_le_bytes()).unwrap();
        let v = [i as u8; 20];
        for pkt in sw.emit_full_coverage(&k, &v).unwrap() {
            let bytes = pkt.to_bytes();
            let w = parse_report(&bytes, &layout).unwrap();
            via_wire.apply_slot(w.slot_index, w.payload).unwrap();
        }
        direct.write_report(&k, &v).unwrap();
    }
    assert_eq!(via_wire.region().to_bytes(), direct.region().to_bytes());
}

#[test]
fn one_past_the_end_is_out_of_region() {
    let (_, store) = test_switch(64, 1);
    let layout = store.region().layout();
    let mut params = vectors()[0].params;
    params.remote_address = layout.base_address + 64 * 24;
    let bytes = RoceReportPacket::build(&params, &[0; 24]).to_bytes();
    assert_eq!(parse_report(&bytes, &layout), Err(Reject::OutOfRegion));
}

#[test]
fn burst_fill_matches_coupon_collector() {
    // copies = 4 random draws over N = 2 slots: E[distinct] = 2(1 - 2^-4).
    let (mut sw, store) = test_switch(1 << 16, 21);
    let keys = 20_000u32;
    let mut filled = 0u64;
    for i in 0..keys {
        let k = TelemetryKey::new(&i.to_be_bytes()).unwrap();
        let pkts = sw.emit_report_burst(&k, &[1; 20], 4).unwrap();
        let mut seen: Vec<u64> = pkts.iter().map(|p| p.reth.remote_address).collect();
        seen.sort_unstable();
        seen.dedup();
        filled += seen.len() as u64;
    }
    let mean = filled as f64 / f64::from(keys);
    assert!((mean - 1.875).abs() < 0.01, "mean distinct slots {mean}");
    drop(store);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn serialize_parse_is_byte_exact(
        key in prop::collection::vec(any::<u8>(), 1..64),
        value in prop::collection::vec(any::<u8>(), 20),
        seed in any::<u64>(),
    ) {
        let (mut sw, store) = test_switch(1000, seed);
        let k = TelemetryKey::new(&key).unwrap();
        let pkt = sw.craft_report(&k, &value).unwrap();
        let bytes = pkt.to_bytes();
        let parsed = RoceReportPacket::parse(&bytes).unwrap();
        prop_assert_eq!(&parsed, &pkt);
        prop_assert_eq!(parsed.to_bytes(), bytes.clone());
        prop_assert!(parse_report(&bytes, &store.region().layout()).is_ok());
    }

    #[test]
    fn any_single_bit_flip_is_rejected(
        key in prop::collection::vec(any::<u8>(), 1..32),
        bit in 0usize..(98 * 8),
    ) {
        let (mut sw, store) = test_switch(1000, 1);
        let k = TelemetryKey::new(&key).unwrap();
        let mut bytes = sw.craft_report(&k, &[0xab; 20]).unwrap().to_bytes();
        bytes[bit / 8] ^= 1 << (bit % 8);
        let byte = bit / 8;
        // Ethernet and the masked variant fields sit outside the iCRC.
        let covered = byte >= 14 && ![15, 22, 24, 25, 40, 41, 46].contains(&byte);
        let result = parse_report(&bytes, &store.region().layout());
        if covered {
            prop_assert!(result.is_err(), "flip at bit {} accepted", bit);
        }
    }
}
