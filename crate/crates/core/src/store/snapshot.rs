//! Region snapshot file format.
//!
//! A 64-byte big-endian header followed by the raw slot bytes:
//!
//! | offset | size | field            |
//! |-------:|-----:|------------------|
//! | 0      | 4    | magic `"DART"`   |
//! | 4      | 2    | format version   |
//! | 6      | 2    | header length    |
//! | 8      | 8    | slots (M)        |
//! | 16     | 4    | copies (N)       |
//! | 20     | 4    | checksum bits    |
//! | 24     | 4    | value width      |
//! | 28     | 4    | collector count  |
//! | 32     | 8    | address seed     |
//! | 40     | 8    | checksum seed    |
//! | 48     | 8    | collector seed   |
//! | 56     | 8    | base address     |
//! | 64     | M×w  | slot bytes       |
//!
//! The resolution policy is a per-query choice and is not recorded.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{ConfigError, MemoryRegion, ResolutionPolicy, Store, StoreConfig, StoreError};

pub const MAGIC: [u8; 4] = *b"DART";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 64;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot I/O: {0}")]
    Io(#[from] io::Error),
    #[error("not a region snapshot (bad magic)")]
    BadMagic,
    #[error("unsupported snapshot version {0}")]
    Version(u16),
    #[error("snapshot header length {0} is not {HEADER_LEN}")]
    HeaderLength(u16),
    #[error("snapshot body is {got} bytes, header implies {expected}")]
    Truncated { expected: u64, got: u64 },
    #[error("snapshot header describes an invalid store: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

fn header(cfg: &StoreConfig, base_address: u64) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[0..4].copy_from_slice(&MAGIC);
    h[4..6].copy_from_slice(&VERSION.to_be_bytes());
    h[6..8].copy_from_slice(&(HEADER_LEN as u16).to_be_bytes());
    h[8..16].copy_from_slice(&(cfg.slots as u64).to_be_bytes());
    h[16..20].copy_from_slice(&cfg.copies.to_be_bytes());
    h[20..24].copy_from_slice(&cfg.checksum_bits.to_be_bytes());
    h[24..28].copy_from_slice(&(cfg.value_width as u32).to_be_bytes());
    h[28..32].copy_from_slice(&cfg.num_collectors.to_be_bytes());
    h[32..40].copy_from_slice(&cfg.address_seed.to_be_bytes());
    h[40..48].copy_from_slice(&cfg.checksum_seed.to_be_bytes());
    h[48..56].copy_from_slice(&cfg.collector_seed.to_be_bytes());
    h[56..64].copy_from_slice(&base_address.to_be_bytes());
    h
}

fn be_u16(b: &[u8]) -> u16 {
    u16::from_be_bytes(b.try_into().unwrap())
}

fn be_u32(b: &[u8]) -> u32 {
    u32::from_be_bytes(b.try_into().unwrap())
}

fn be_u64(b: &[u8]) -> u64 {
    u64::from_be_bytes(b.try_into().unwrap())
}

/// Serializes `store` (header + slot bytes) into `out`.
pub fn write_snapshot<W: Write>(store: &Store, mut out: W) -> Result<(), SnapshotError> {
    out.write_all(&header(store.config(), store.region().base_address()))?;
    out.write_all(&store.region().to_bytes())?;
    out.flush()?;
    Ok(())
}

pub fn to_bytes(store: &Store) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + store.region().layout().len_bytes() as usize);
    write_snapshot(store, &mut out).expect("writing to a Vec cannot fail");
    out
}

pub fn read_snapshot<R: Read>(mut input: R) -> Result<Store, SnapshotError> {
    let mut h = [0u8; HEADER_LEN];
    input.read_exact(&mut h)?;
    if h[0..4] != MAGIC {
        return Err(SnapshotError::BadMagic);
    }
    let version = be_u16(&h[4..6]);
    if version != VERSION {
        return Err(SnapshotError::Version(version));
    }
    let header_len = be_u16(&h[6..8]);
    if header_len as usize != HEADER_LEN {
        return Err(SnapshotError::HeaderLength(header_len));
    }
    let cfg = StoreConfig {
        slots: be_u64(&h[8..16]) as usize,
        copies: be_u32(&h[16..20]),
        checksum_bits: be_u32(&h[20..24]),
        value_width: be_u32(&h[24..28]) as usize,
        num_collectors: be_u32(&h[28..32]),
        address_seed: be_u64(&h[32..40]),
        checksum_seed: be_u64(&h[40..48]),
        collector_seed: be_u64(&h[48..56]),
        policy: ResolutionPolicy::default(),
    };
    cfg.validate()?;
    let base_address = be_u64(&h[56..64]);
    let expected = cfg.slots as u64 * cfg.slot_width() as u64;
    let mut body = Vec::with_capacity(expected as usize);
    input.take(expected + 1).read_to_end(&mut body)?;
    if body.len() as u64 != expected {
        return Err(SnapshotError::Truncated {
            expected,
            got: body.len() as u64,
        });
    }
    let region = MemoryRegion::from_bytes(cfg.slot_width(), base_address, &body)
        .map_err(StoreError::from)?;
    Ok(Store::from_region(cfg, region)?)
}

pub fn from_bytes(bytes: &[u8]) -> Result<Store, SnapshotError> {
    read_snapshot(bytes)
}

pub fn save(store: &Store, path: &Path) -> Result<(), SnapshotError> {
    let file = fs::File::create(path)?;
    write_snapshot(store, io::BufWriter::new(file))
}

pub fn load(path: &Path) -> Result<Store, SnapshotError> {
    let file = fs::File::open(path)?;
    read_snapshot(io::BufReader::new(file))
}
