//! RoCEv2 invariant CRC.
//!
//! CRC-32 (IEEE 802.3 polynomial, reflected, init and final XOR all-ones)
//! over eight `0xff` bytes standing in for the InfiniBand LRH, then the IPv4
//! header, UDP header, BTH and everything after it up to the iCRC itself.
//! Fields a router may rewrite are replaced by ones before hashing:
//! IPv4 DSCP/ECN, TTL and header checksum, the UDP checksum and the BTH
//! byte holding FECN/BECN. The result is carried little-endian.

use super::packet::{BTH_LEN, ETH_LEN, IPV4_LEN, UDP_LEN};

const MASKED_LRH: [u8; 8] = [0xff; 8];

/// iCRC of `frame`, which runs from the Ethernet header to the end of the
/// payload padding (the four iCRC bytes excluded). `frame` must hold at least
/// the Ethernet, IPv4, UDP and BTH headers.
pub fn compute_icrc(frame: &[u8]) -> u32 {
    let ip_start = ETH_LEN;
    let udp_start = ip_start + IPV4_LEN;
    let bth_start = udp_start + UDP_LEN;
    let rest = bth_start + BTH_LEN;
    assert!(frame.len() >= rest, "frame too short for iCRC");

    let mut ip = [0u8; IPV4_LEN];
    ip.copy_from_slice(&frame[ip_start..udp_start]);
    ip[1] = 0xff; // DSCP + ECN
    ip[8] = 0xff; // TTL
    ip[10] = 0xff; // header checksum
    ip[11] = 0xff;

    let mut udp = [0u8; UDP_LEN];
    udp.copy_from_slice(&frame[udp_start..bth_start]);
    udp[6] = 0xff; // checksum
    udp[7] = 0xff;

    let mut bth = [0u8; BTH_LEN];
    bth.copy_from_slice(&frame[bth_start..rest]);
    bth[4] = 0xff; // FECN, BECN, reserved

    let mut h = crc32fast::Hasher::new();
    h.update(&MASKED_LRH);
    h.update(&ip);
    h.update(&udp);
    h.update(&bth);
    h.update(&frame[rest..]);
    h.finalize()
}
