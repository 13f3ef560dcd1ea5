#![allow(dead_code)]

use std::net::Ipv4Addr;

use dart_core::store::{Answer, CollectorId, ResolutionPolicy, Store, StoreConfig, TelemetryKey};
use dart_core::wire::{CollectorTableEntry, SwitchEmulator, SwitchIdentity};

/// Outcome probabilities of one query under single-match resolution.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Tally {
    pub success: f64,
    pub empty_all: f64,
    pub ambiguity: f64,
    pub error: f64,
}

/// How the foreign values that carry a matching checksum relate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForeignValues {
    /// Every foreign slot holds its own value.
    Distinct,
    /// All foreign slots hold one common value.
    Coinciding,
}

/// Exact enumeration of the overwrite model through a real store: each of
/// the key's `N` slots is independently overwritten with probability
/// `1 - (1 - N/M)^K`, and an overwritten slot carries each of the `2^b`
/// checksums with equal weight. Every combination is planted into the
/// region and resolved by the store's own query path.
pub fn enumerate_overwrites(
    slots: usize,
    keys: u64,
    copies: u32,
    bits: u32,
    foreign: ForeignValues,
) -> Tally {
    assert!(bits <= 8, "one checksum byte");
    let cfg = StoreConfig {
        copies,
        checksum_bits: bits,
        value_width: 8,
        ..StoreConfig::with_slots(slots)
    };
    let store = Store::new(cfg).unwrap();
    let key = TelemetryKey::new(b"enumerated-key").unwrap();
    let truth = [0x11u8; 8];
    let own = store.encode_slot(&key, &truth).unwrap();
    let addrs = store.addresses(&key);

    let q = 1.0 - (1.0 - f64::from(copies) / slots as f64).powf(keys as f64);
    let n = copies as usize;
    let sums = 1usize << bits;
    let mut t = Tally::default();
    for mask in 0u32..(1 << n) {
        let over: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let j = over.len();
        let p_mask = q.powi(j as i32) * (1.0 - q).powi((n - j) as i32);
        let p_each = p_mask / (sums as f64).powi(j as i32);
        for combo in 0..sums.pow(j as u32) {
            for i in 0..n {
                store.apply_slot(addrs[i], &own).unwrap();
            }
            let mut c = combo;
            for (k, &i) in over.iter().enumerate() {
                let sum = (c % sums) as u8;
                c /= sums;
                let v = match foreign {
                    ForeignValues::Distinct => 0x20 + k as u8,
                    ForeignValues::Coinciding => 0xee,
                };
                let mut slot = vec![sum];
                slot.extend_from_slice(&[v; 8]);
                store.apply_slot(addrs[i], &slot).unwrap();
            }
            let r = store.query_with(&key, ResolutionPolicy::SingleMatch);
            match r.answer {
                Answer::Value(v) if v.as_bytes() == truth => t.success += p_each,
                Answer::Value(_) => t.error += p_each,
                Answer::Empty if r.matched_slots == 0 => t.empty_all += p_each,
                Answer::Empty => t.ambiguity += p_each,
            }
        }
    }
    t
}

/// Exact outcome probabilities of the physical process: after the query
/// key, `K` distinct keys each write `N` distinct uniformly chosen slots of
/// `M`, with independent uniform `b`-bit checksums. Walking the later
/// writes backwards, each one that reaches still-unclaimed slots of the
/// query key claims them as one group; groups share a checksum and value.
/// State: (unclaimed slots, groups).
#[allow(clippy::needless_range_loop)]
pub fn physical_dp(slots: u64, keys: u64, copies: u32, bits: u32) -> Tally {
    let n = copies as usize;
    let m = slots as f64;
    let ln_c = |a: f64, b: f64| ln_gamma(a + 1.0) - ln_gamma(b + 1.0) - ln_gamma(a - b + 1.0);
    // hit[u][t]: a write of N slots covers exactly t of u unclaimed ones
    let hit: Vec<Vec<f64>> = (0..=n)
        .map(|u| {
            (0..=u)
                .map(|t| {
                    let rest = n - t;
                    if (rest as f64) > m - u as f64 {
                        return 0.0;
                    }
                    (ln_c(u as f64, t as f64) + ln_c(m - u as f64, rest as f64) - ln_c(m, n as f64))
                        .exp()
                })
                .collect()
        })
        .collect();
    let mut p = vec![vec![0.0f64; n + 1]; n + 1];
    p[n][0] = 1.0;
    for _ in 0..keys {
        let mut next = vec![vec![0.0f64; n + 1]; n + 1];
        for u in 0..=n {
            for g in 0..=n {
                let w = p[u][g];
                if w == 0.0 {
                    continue;
                }
                next[u][g] += w * hit[u][0];
                for t in 1..=u {
                    next[u - t][g + 1] += w * hit[u][t];
                }
            }
        }
        p = next;
    }
    let h = 2f64.powi(-(bits as i32));
    let mut t = Tally::default();
    for u in 0..=n {
        for g in 0..=n {
            let w = p[u][g];
            let none = (1.0 - h).powi(g as i32);
            if u > 0 {
                t.success += w * none;
                t.ambiguity += w * (1.0 - none);
            } else {
                let one = g as f64 * h * (1.0 - h).powi(g as i32 - 1);
                t.empty_all += w * none;
                t.error += w * one;
                t.ambiguity += w * (1.0 - none - one);
            }
        }
    }
    t
}

/// Lanczos approximation, g = 7.
fn ln_gamma(x: f64) -> f64 {
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + 7.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Bit-at-a-time reflected CRC-32 (poly 0xEDB88320).
pub fn crc32_bitwise(data: &[u8]) -> u32 {
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

/// Invariant CRC of a complete frame: eight 0xff bytes, then IPv4 onward
/// with TOS, TTL, both checksums and the BTH reserved byte forced to 0xff.
pub fn reference_icrc(frame: &[u8]) -> u32 {
    let mut buf = vec![0xffu8; 8];
    buf.extend_from_slice(&frame[14..frame.len() - 4]);
    for off in [9, 16, 18, 19, 34, 35, 40] {
        buf[off] = 0xff;
    }
    crc32_bitwise(&buf)
}

pub fn carried_icrc(frame: &[u8]) -> u32 {
    u32::from_le_bytes(frame[frame.len() - 4..].try_into().unwrap())
}

/// Whether the iCRC covers a frame offset: Ethernet and the masked fields
/// are excluded.
pub fn icrc_covered(byte: usize) -> bool {
    byte >= 14 && ![15, 22, 24, 25, 40, 41, 46].contains(&byte)
}

pub const SWITCH_BASE: u64 = 0x7000_0000_0000;

pub fn switch_for(config: &StoreConfig, seed: u64) -> SwitchEmulator {
    let mut sw = SwitchEmulator::new(config.clone(), SwitchIdentity::default(), seed);
    sw.install_collector(CollectorTableEntry {
        collector_id: CollectorId(0),
        mac: [2, 0, 0, 0, 0, 1],
        ip: Ipv4Addr::new(10, 0, 0, 2),
        queue_pair: 0x11,
        remote_key: 0x1234,
        base_address: SWITCH_BASE,
        slots: config.slots as u64,
    });
    sw
}
