//! Minimal libpcap capture files (Ethernet link type, microsecond stamps).
//!
//! Timestamps are synthetic: record `i` is stamped `i` microseconds after the
//! epoch so captures of the same workload are byte-identical.

use std::io::{self, Read, Write};

const MAGIC_USEC: u32 = 0xa1b2_c3d4;
const LINKTYPE_ETHERNET: u32 = 1;
const SNAPLEN: u32 = 65_535;

pub struct PcapWriter<W: Write> {
    out: W,
    records: u64,
}

impl<W: Write> PcapWriter<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        let mut h = [0u8; 24];
        h[0..4].copy_from_slice(&MAGIC_USEC.to_le_bytes());
        h[4..6].copy_from_slice(&2u16.to_le_bytes());
        h[6..8].copy_from_slice(&4u16.to_le_bytes());
        // thiszone and sigfigs stay zero
        h[16..20].copy_from_slice(&SNAPLEN.to_le_bytes());
        h[20..24].copy_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());
        out.write_all(&h)?;
        Ok(PcapWriter { out, records: 0 })
    }

    pub fn write_frame(&mut self, frame: &[u8]) -> io::Result<()> {
        let secs = (self.records / 1_000_000) as u32;
        let usecs = (self.records % 1_000_000) as u32;
        let len = frame.len() as u32;
        let mut h = [0u8; 16];
        h[0..4].copy_from_slice(&secs.to_le_bytes());
        h[4..8].copy_from_slice(&usecs.to_le_bytes());
        h[8..12].copy_from_slice(&len.min(SNAPLEN).to_le_bytes());
        h[12..16].copy_from_slice(&len.to_le_bytes());
        self.out.write_all(&h)?;
        self.out
            .write_all(&frame[..frame.len().min(SNAPLEN as usize)])?;
        self.records += 1;
        Ok(())
    }

    pub fn records(&self) -> u64 {
        self.records
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Reads every frame of a capture written by [`PcapWriter`] (or any
/// little-endian microsecond pcap).
pub fn read_frames<R: Read>(mut input: R) -> io::Result<Vec<Vec<u8>>> {
    let mut h = [0u8; 24];
    input.read_exact(&mut h)?;
    if u32::from_le_bytes(h[0..4].try_into().unwrap()) != MAGIC_USEC {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            "unsupported pcap magic",
        ));
    }
    let mut frames = Vec::new();
    let mut rec = [0u8; 16];
    loop {
        match input.read_exact(&mut rec) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e),
        }
        let incl = u32::from_le_bytes(rec[8..12].try_into().unwrap()) as usize;
        let mut frame = vec![0u8; incl];
        input.read_exact(&mut frame)?;
        frames.push(frame);
    }
    Ok(frames)
}
