//! Ethernet / IPv4 / UDP / BTH / RETH framing of one RDMA WRITE Only packet.

use std::net::Ipv4Addr;

use super::icrc::compute_icrc;
use super::Reject;
use crate::store::RegionLayout;

pub const ETH_LEN: usize = 14;
pub const IPV4_LEN: usize = 20;
pub const UDP_LEN: usize = 8;
pub const BTH_LEN: usize = 12;
pub const RETH_LEN: usize = 16;
pub const ICRC_LEN: usize = 4;
/// Bytes from the Ethernet header through the RETH.
pub const HEADERS_LEN: usize = ETH_LEN + IPV4_LEN + UDP_LEN + BTH_LEN + RETH_LEN;

pub const ETHERTYPE_IPV4: u16 = 0x0800;
pub const IP_PROTO_UDP: u8 = 17;
pub const ROCEV2_UDP_PORT: u16 = 4791;
/// Reliable Connection RDMA WRITE Only.
pub const OPCODE_RC_RDMA_WRITE_ONLY: u8 = 0x0a;
const IPV4_DONT_FRAGMENT: u16 = 0x4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EthernetHeader {
    pub dst: [u8; 6],
    pub src: [u8; 6],
    pub ethertype: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ipv4Header {
    pub dscp: u8,
    pub ecn: u8,
    pub total_length: u16,
    pub identification: u16,
    /// Flags and fragment offset, raw.
    pub flags_fragment: u16,
    pub ttl: u8,
    pub protocol: u8,
    pub checksum: u16,
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UdpHeader {
    pub src_port: u16,
    pub dst_port: u16,
    pub length: u16,
    pub checksum: u16,
}

/// Base Transport Header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bth {
    pub opcode: u8,
    pub solicited: bool,
    pub migration: bool,
    pub pad_count: u8,
    pub transport_version: u8,
    pub partition_key: u16,
    /// FECN, BECN and six reserved bits, raw.
    pub congestion_byte: u8,
    /// 24-bit destination queue pair.
    pub dest_qp: u32,
    pub ack_request: bool,
    /// Seven reserved bits following the ack-request flag.
    pub reserved: u8,
    /// 24-bit packet sequence number.
    pub psn: u32,
}

/// RDMA Extended Transport Header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Reth {
    pub remote_address: u64,
    pub remote_key: u32,
    pub dma_length: u32,
}

/// One telemetry copy as it travels on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoceReportPacket {
    pub eth: EthernetHeader,
    pub ipv4: Ipv4Header,
    pub udp: UdpHeader,
    pub bth: Bth,
    pub reth: Reth,
    /// Slot bytes, without the 4-byte alignment padding.
    pub payload: Vec<u8>,
    pub icrc: u32,
}

/// Addressing fields needed to build a packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketParams {
    pub src_mac: [u8; 6],
    pub dst_mac: [u8; 6],
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub udp_src_port: u16,
    pub dscp: u8,
    pub ttl: u8,
    pub partition_key: u16,
    pub dest_qp: u32,
    pub psn: u32,
    pub ack_request: bool,
    pub remote_address: u64,
    pub remote_key: u32,
}

fn pad_len(payload: usize) -> usize {
    (4 - payload % 4) % 4
}

/// Internet checksum of an IPv4 header whose checksum field is zero.
pub fn ipv4_checksum(header: &[u8]) -> u16 {
    let mut sum: u32 = header
        .chunks(2)
        .map(|c| u32::from(u16::from_be_bytes([c[0], *c.get(1).unwrap_or(&0)])))
        .sum();
    while sum >> 16 != 0 {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

impl RoceReportPacket {
    /// Builds a packet with consistent lengths, IPv4 checksum and iCRC. The
    /// UDP checksum is left at zero.
    pub fn build(params: &PacketParams, payload: &[u8]) -> Self {
        let pad = pad_len(payload.len());
        let udp_len = UDP_LEN + BTH_LEN + RETH_LEN + payload.len() + pad + ICRC_LEN;
        let mut pkt = RoceReportPacket {
            eth: EthernetHeader {
                dst: params.dst_mac,
                src: params.src_mac,
                ethertype: ETHERTYPE_IPV4,
            },
            ipv4: Ipv4Header {
                dscp: params.dscp & 0x3f,
                ecn: 0,
                total_length: (IPV4_LEN + udp_len) as u16,
                identification: 0,
                flags_fragment: IPV4_DONT_FRAGMENT,
                ttl: params.ttl,
                protocol: IP_PROTO_UDP,
                checksum: 0,
                src: params.src_ip,
                dst: params.dst_ip,
            },
            udp: UdpHeader {
                src_port: params.udp_src_port,
                dst_port: ROCEV2_UDP_PORT,
                length: udp_len as u16,
                checksum: 0,
            },
            bth: Bth {
                opcode: OPCODE_RC_RDMA_WRITE_ONLY,
                solicited: false,
                migration: false,
                pad_count: pad as u8,
                transport_version: 0,
                partition_key: params.partition_key,
                congestion_byte: 0,
                dest_qp: params.dest_qp & 0x00ff_ffff,
                ack_request: params.ack_request,
                reserved: 0,
                psn: params.psn & 0x00ff_ffff,
            },
            reth: Reth {
                remote_address: params.remote_address,
                remote_key: params.remote_key,
                dma_length: payload.len() as u32,
            },
            payload: payload.to_vec(),
            icrc: 0,
        };
        let mut ip = [0u8; IPV4_LEN];
        pkt.write_ipv4(&mut ip);
        pkt.ipv4.checksum = ipv4_checksum(&ip);
        let bytes = pkt.to_bytes();
        pkt.icrc = compute_icrc(&bytes[..bytes.len() - ICRC_LEN]);
        pkt
    }

    pub fn wire_len(&self) -> usize {
        HEADERS_LEN + self.payload.len() + pad_len(self.payload.len()) + ICRC_LEN
    }

    fn write_ipv4(&self, out: &mut [u8]) {
        let ip = &self.ipv4;
        out[0] = 0x45;
        out[1] = (ip.dscp << 2) | (ip.ecn & 0x3);
        out[2..4].copy_from_slice(&ip.total_length.to_be_bytes());
        out[4..6].copy_from_slice(&ip.identification.to_be_bytes());
        out[6..8].copy_from_slice(&ip.flags_fragment.to_be_bytes());
        out[8] = ip.ttl;
        out[9] = ip.protocol;
        out[10..12].copy_from_slice(&ip.checksum.to_be_bytes());
        out[12..16].copy_from_slice(&ip.src.octets());
        out[16..20].copy_from_slice(&ip.dst.octets());
    }

    /// Serializes every field as stored; nothing is recomputed.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.wire_len()];
        let e = &mut out[..ETH_LEN];
        e[0..6].copy_from_slice(&self.eth.dst);
        e[6..12].copy_from_slice(&self.eth.src);
        e[12..14].copy_from_slice(&self.eth.ethertype.to_be_bytes());

        let mut off = ETH_LEN;
        self.write_ipv4(&mut out[off..off + IPV4_LEN]);
        off += IPV4_LEN;

        let u = &mut out[off..off + UDP_LEN];
        u[0..2].copy_from_slice(&self.udp.src_port.to_be_bytes());
        u[2..4].copy_from_slice(&self.udp.dst_port.to_be_bytes());
        u[4..6].copy_from_slice(&self.udp.length.to_be_bytes());
        u[6..8].copy_from_slice(&self.udp.checksum.to_be_bytes());
        off += UDP_LEN;

        let b = &self.bth;
        let h = &mut out[off..off + BTH_LEN];
        h[0] = b.opcode;
        h[1] = (u8::from(b.solicited) << 7)
            | (u8::from(b.migration) << 6)
            | ((b.pad_count & 0x3) << 4)
            | (b.transport_version & 0xf);
        h[2..4].copy_from_slice(&b.partition_key.to_be_bytes());
        h[4] = b.congestion_byte;
        h[5..8].copy_from_slice(&b.dest_qp.to_be_bytes()[1..]);
        h[8] = (u8::from(b.ack_request) << 7) | (b.reserved & 0x7f);
        h[9..12].copy_from_slice(&b.psn.to_be_bytes()[1..]);
        off += BTH_LEN;

        let r = &mut out[off..off + RETH_LEN];
        r[0..8].copy_from_slice(&self.reth.remote_address.to_be_bytes());
        r[8..12].copy_from_slice(&self.reth.remote_key.to_be_bytes());
        r[12..16].copy_from_slice(&self.reth.dma_length.to_be_bytes());
        off += RETH_LEN;

        out[off..off + self.payload.len()].copy_from_slice(&self.payload);
        let icrc_at = out.len() - ICRC_LEN;
        out[icrc_at..].copy_from_slice(&self.icrc.to_le_bytes());
        out
    }

    /// Structural decode; no semantic checks beyond framing.
    pub fn parse(bytes: &[u8]) -> Result<Self, Reject> {
        let v = PacketView::decode(bytes)?;
        Ok(RoceReportPacket {
            eth: v.eth,
            ipv4: v.ipv4,
            udp: v.udp,
            bth: v.bth,
            reth: v.reth,
            payload: v.payload.to_vec(),
            icrc: v.icrc,
        })
    }
}

/// Borrowed decode of a frame. Used on the ingest path so accepting a report
/// never allocates.
#[derive(Debug, Clone, Copy)]
pub struct PacketView<'a> {
    pub eth: EthernetHeader,
    pub ipv4: Ipv4Header,
    pub udp: UdpHeader,
    pub bth: Bth,
    pub reth: Reth,
    pub payload: &'a [u8],
    pub icrc: u32,
    /// Frame bytes covered by the iCRC (everything before it).
    covered: &'a [u8],
}

fn be16(b: &[u8]) -> u16 {
    u16::from_be_bytes([b[0], b[1]])
}

fn be24(b: &[u8]) -> u32 {
    u32::from_be_bytes([0, b[0], b[1], b[2]])
}

impl<'a> PacketView<'a> {
    pub fn decode(bytes: &'a [u8]) -> Result<Self, Reject> {
        if bytes.len() < HEADERS_LEN + ICRC_LEN {
            return Err(Reject::Malformed);
        }
        let eth = EthernetHeader {
            dst: bytes[0..6].try_into().unwrap(),
            src: bytes[6..12].try_into().unwrap(),
            ethertype: be16(&bytes[12..14]),
        };
        if eth.ethertype != ETHERTYPE_IPV4 {
            return Err(Reject::Malformed);
        }

        let ip = &bytes[ETH_LEN..ETH_LEN + IPV4_LEN];
        if ip[0] != 0x45 {
            return Err(Reject::Malformed);
        }
        let ipv4 = Ipv4Header {
            dscp: ip[1] >> 2,
            ecn: ip[1] & 0x3,
            total_length: be16(&ip[2..4]),
            identification: be16(&ip[4..6]),
            flags_fragment: be16(&ip[6..8]),
            ttl: ip[8],
            protocol: ip[9],
            checksum: be16(&ip[10..12]),
            src: Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]),
            dst: Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]),
        };
        if ipv4.protocol != IP_PROTO_UDP || usize::from(ipv4.total_length) + ETH_LEN != bytes.len()
        {
            return Err(Reject::Malformed);
        }

        let u = &bytes[ETH_LEN + IPV4_LEN..ETH_LEN + IPV4_LEN + UDP_LEN];
        let udp = UdpHeader {
            src_port: be16(&u[0..2]),
            dst_port: be16(&u[2..4]),
            length: be16(&u[4..6]),
            checksum: be16(&u[6..8]),
        };
        if usize::from(udp.length) + IPV4_LEN != usize::from(ipv4.total_length) {
            return Err(Reject::Malformed);
        }

        let off = ETH_LEN + IPV4_LEN + UDP_LEN;
        let h = &bytes[off..off + BTH_LEN];
        let bth = Bth {
            opcode: h[0],
            solicited: h[1] & 0x80 != 0,
            migration: h[1] & 0x40 != 0,
            pad_count: (h[1] >> 4) & 0x3,
            transport_version: h[1] & 0xf,
            partition_key: be16(&h[2..4]),
            congestion_byte: h[4],
            dest_qp: be24(&h[5..8]),
            ack_request: h[8] & 0x80 != 0,
            reserved: h[8] & 0x7f,
            psn: be24(&h[9..12]),
        };

        let r = &bytes[off + BTH_LEN..HEADERS_LEN];
        let reth = Reth {
            remote_address: u64::from_be_bytes(r[0..8].try_into().unwrap()),
            remote_key: u32::from_be_bytes(r[8..12].try_into().unwrap()),
            dma_length: u32::from_be_bytes(r[12..16].try_into().unwrap()),
        };

        let icrc_at = bytes.len() - ICRC_LEN;
        let pad = usize::from(bth.pad_count);
        if icrc_at < HEADERS_LEN + pad {
            return Err(Reject::Malformed);
        }
        let payload_end = icrc_at - pad;
        if bytes[payload_end..icrc_at].iter().any(|&b| b != 0) {
            return Err(Reject::Malformed);
        }
        let payload = &bytes[HEADERS_LEN..payload_end];
        if !(payload.len() + pad).is_multiple_of(4) {
            return Err(Reject::Malformed);
        }
        let icrc = u32::from_le_bytes(bytes[icrc_at..].try_into().unwrap());
        Ok(PacketView {
            eth,
            ipv4,
            udp,
            bth,
            reth,
            payload,
            icrc,
            covered: &bytes[..icrc_at],
        })
    }

    pub fn icrc_valid(&self) -> bool {
        compute_icrc(self.covered) == self.icrc
    }
}

/// A decoded, accepted report: write `payload` into slot `slot_index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteInstruction<'a> {
    pub slot_index: usize,
    pub payload: &'a [u8],
    pub psn: u32,
    pub dest_qp: u32,
}

/// Validates a frame the way the collector NIC would and decodes the write
/// it carries.
pub fn parse_report<'a>(
    bytes: &'a [u8],
    layout: &RegionLayout,
) -> Result<WriteInstruction<'a>, Reject> {
    let v = PacketView::decode(bytes)?;
    if v.udp.dst_port != ROCEV2_UDP_PORT {
        return Err(Reject::BadPort);
    }
    if v.bth.opcode != OPCODE_RC_RDMA_WRITE_ONLY {
        return Err(Reject::BadOpcode);
    }
    if !v.icrc_valid() {
        return Err(Reject::BadIcrc);
    }
    let width = layout.slot_width as u64;
    if u64::from(v.reth.dma_length) != width || v.payload.len() as u64 != width {
        return Err(Reject::BadLength);
    }
    let addr = v.reth.remote_address;
    let offset = addr
        .checked_sub(layout.base_address)
        .filter(|off| {
            off.checked_add(width)
                .is_some_and(|end| end <= layout.len_bytes())
        })
        .ok_or(Reject::OutOfRegion)?;
    if offset % width != 0 {
        return Err(Reject::Misaligned);
    }
    Ok(WriteInstruction {
        slot_index: (offset / width) as usize,
        payload: v.payload,
        psn: v.bth.psn,
        dest_qp: v.bth.dest_qp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> PacketParams {
        PacketParams {
            src_mac: [2, 0, 0, 0, 0, 0xaa],
            dst_mac: [2, 0, 0, 0, 0, 1],
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
        }
    }

    fn layout() -> RegionLayout {
        RegionLayout {
            slots: 16,
            slot_width: 24,
            base_address: 0x10000,
        }
    }

    #[test]
    fn lengths_and_checksums() {
        let p = RoceReportPacket::build(&params(), &[0u8; 24]);
        let bytes = p.to_bytes();
        assert_eq!(bytes.len(), 98);
        assert_eq!(p.udp.length, 98 - 14 - 20);
        assert_eq!(ipv4_checksum(&bytes[14..34]), 0);
        assert_eq!(p.bth.pad_count, 0);
    }

    #[test]
    fn odd_payload_is_padded() {
        let p = RoceReportPacket::build(&params(), &[7u8; 21]);
        assert_eq!(p.bth.pad_count, 3);
        assert_eq!(p.wire_len(), HEADERS_LEN + 24 + 4);
        let back = RoceReportPacket::parse(&p.to_bytes()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn parse_accepts_built_packet() {
        let mut prm = params();
        prm.remote_address = 0x10000 + 5 * 24;
        let payload: Vec<u8> = (0..24).collect();
        let bytes = RoceReportPacket::build(&prm, &payload).to_bytes();
        let w = parse_report(&bytes, &layout()).unwrap();
        assert_eq!(w.slot_index, 5);
        assert_eq!(w.payload, &payload[..]);
    }

    #[test]
    fn rejection_reasons() {
        let l = layout();
        let payload = [1u8; 24];
        let mut prm = params();

        prm.remote_address = l.base_address + 16 * 24;
        let b = RoceReportPacket::build(&prm, &payload).to_bytes();
        assert_eq!(parse_report(&b, &l), Err(Reject::OutOfRegion));

        prm.remote_address = l.base_address - 24;
        let b = RoceReportPacket::build(&prm, &payload).to_bytes();
        assert_eq!(parse_report(&b, &l), Err(Reject::OutOfRegion));

        prm.remote_address = l.base_address + 13;
        let b = RoceReportPacket::build(&prm, &payload).to_bytes();
        assert_eq!(parse_report(&b, &l), Err(Reject::Misaligned));

        prm.remote_address = u64::MAX - 4;
        let b = RoceReportPacket::build(&prm, &payload).to_bytes();
        assert_eq!(parse_report(&b, &l), Err(Reject::OutOfRegion));

        prm.remote_address = l.base_address;
        let b = RoceReportPacket::build(&prm, &[1u8; 20]).to_bytes();
        assert_eq!(parse_report(&b, &l), Err(Reject::BadLength));

        let mut p = RoceReportPacket::build(&prm, &payload);
        p.udp.dst_port = 4792;
        assert_eq!(parse_report(&p.to_bytes(), &l), Err(Reject::BadPort));

        let mut p = RoceReportPacket::build(&prm, &payload);
        p.bth.opcode = 0x06; // WRITE First
        assert_eq!(parse_report(&p.to_bytes(), &l), Err(Reject::BadOpcode));

        let mut b = RoceReportPacket::build(&prm, &payload).to_bytes();
        b[HEADERS_LEN + 3] ^= 0x10;
        assert_eq!(parse_report(&b, &l), Err(Reject::BadIcrc));

        assert_eq!(parse_report(&b[..40], &l), Err(Reject::Malformed));
        let mut b = RoceReportPacket::build(&prm, &payload).to_bytes();
        b.push(0);
        assert_eq!(parse_report(&b, &l), Err(Reject::Malformed));
    }

    #[test]
    fn rdma_length_must_match_payload() {
        let l = layout();
        let mut p = RoceReportPacket::build(&params(), &[1u8; 24]);
        p.reth.dma_length = 23;
        // Re-seal so only the length is wrong.
        let mut bytes = p.to_bytes();
        let n = bytes.len();
        let crc = compute_icrc(&bytes[..n - 4]);
        bytes[n - 4..].copy_from_slice(&crc.to_le_bytes());
        assert_eq!(parse_report(&bytes, &l), Err(Reject::BadLength));
    }
}
