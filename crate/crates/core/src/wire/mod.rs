//! DART reports as RoCEv2 RDMA WRITE Only packets.
//!
//! Frame layout: Ethernet (14) · IPv4 (20) · UDP to port 4791 (8) · BTH (12)
//! · RETH (16) · slot payload, zero-padded to a multiple of 4 · iCRC (4).
//! The RETH virtual address is `base + slot_index × slot_width` and its DMA
//! length is the slot width. The UDP checksum is always zero.

mod icrc;
mod packet;
pub mod pcap;
mod switch;

pub use icrc::compute_icrc;
pub use packet::{
    ipv4_checksum, parse_report, Bth, EthernetHeader, Ipv4Header, PacketParams, PacketView, Reth,
    RoceReportPacket, UdpHeader, WriteInstruction, BTH_LEN, ETH_LEN, HEADERS_LEN, ICRC_LEN,
    IPV4_LEN, OPCODE_RC_RDMA_WRITE_ONLY, RETH_LEN, ROCEV2_UDP_PORT, UDP_LEN,
};
pub use switch::{CollectorTableEntry, PsnCounter, SwitchEmulator, SwitchIdentity};

use thiserror::Error;

use crate::store::{CollectorId, InputError};

/// Why a collector refused a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error)]
pub enum Reject {
    #[error("truncated or structurally invalid frame")]
    Malformed,
    #[error("UDP destination port is not 4791")]
    BadPort,
    #[error("BTH opcode is not RDMA WRITE Only")]
    BadOpcode,
    #[error("invariant CRC mismatch")]
    BadIcrc,
    #[error("remote address outside the registered region")]
    OutOfRegion,
    #[error("remote address not aligned to a slot boundary")]
    Misaligned,
    #[error("DMA length differs from the slot width")]
    BadLength,
}

impl Reject {
    pub const ALL: [Reject; 7] = [
        Reject::Malformed,
        Reject::BadPort,
        Reject::BadOpcode,
        Reject::BadIcrc,
        Reject::OutOfRegion,
        Reject::Misaligned,
        Reject::BadLength,
    ];

    /// Stable index into [`Reject::ALL`], used for counters and the wire.
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(usize::from(code)).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Reject::Malformed => "malformed",
            Reject::BadPort => "bad_port",
            Reject::BadOpcode => "bad_opcode",
            Reject::BadIcrc => "bad_icrc",
            Reject::OutOfRegion => "out_of_region",
            Reject::Misaligned => "misaligned",
            Reject::BadLength => "bad_length",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("no lookup-table entry for collector {0}")]
    UnknownCollector(CollectorId),
    #[error("collector {collector} table entry has {table_slots} slots, store config has {config_slots}")]
    RegionMismatch {
        collector: CollectorId,
        table_slots: u64,
        config_slots: u64,
    },
    #[error("copy index {index} out of range for {copies} copies")]
    CopyIndex { index: u32, copies: u32 },
    #[error("a report burst needs at least one copy")]
    EmptyBurst,
    #[error(transparent)]
    Input(#[from] InputError),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reject_codes_round_trip() {
        for r in Reject::ALL {
            assert_eq!(Reject::from_code(r.code()), Some(r));
        }
        assert_eq!(Reject::from_code(7), None);
    }
}
