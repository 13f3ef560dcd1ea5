use smallvec::SmallVec;
use thiserror::Error;

/// Default cap on key length in bytes.
pub const MAX_KEY_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InputError {
    #[error("telemetry key must not be empty")]
    EmptyKey,
    #[error("telemetry key is {len} bytes, cap is {cap}")]
    KeyTooLong { len: usize, cap: usize },
    #[error("value is {got} bytes, region expects {expected}")]
    ValueWidth { expected: usize, got: usize },
    #[error("copy index {index} out of range for {copies} copies")]
    CopyIndex { index: u32, copies: u32 },
    #[error("slot index {index} out of range for {slots} slots")]
    SlotIndex { index: usize, slots: usize },
}

/// Query/report key, e.g. a serialized flow 5-tuple. Only its checksum is
/// ever stored.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TelemetryKey(SmallVec<[u8; 24]>);

impl TelemetryKey {
    pub fn new(bytes: &[u8]) -> Result<Self, InputError> {
        Self::with_max_len(bytes, MAX_KEY_LEN)
    }

    pub fn with_max_len(bytes: &[u8], cap: usize) -> Result<Self, InputError> {
        if bytes.is_empty() {
            return Err(InputError::EmptyKey);
        }
        if bytes.len() > cap {
            return Err(InputError::KeyTooLong {
                len: bytes.len(),
                cap,
            });
        }
        Ok(TelemetryKey(SmallVec::from_slice(bytes)))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl AsRef<[u8]> for TelemetryKey {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

/// Fixed-width value payload.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TelemetryValue(Vec<u8>);

impl TelemetryValue {
    pub fn new(bytes: Vec<u8>, width: usize) -> Result<Self, InputError> {
        if bytes.len() != width {
            return Err(InputError::ValueWidth {
                expected: width,
                got: bytes.len(),
            });
        }
        Ok(TelemetryValue(bytes))
    }

    pub(crate) fn from_slice_unchecked(bytes: &[u8]) -> Self {
        TelemetryValue(bytes.to_vec())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }
}

impl AsRef<[u8]> for TelemetryValue {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

/// A `b`-bit key checksum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KeyChecksum {
    value: u64,
    bits: u32,
}

impl KeyChecksum {
    pub(crate) fn new(value: u64, bits: u32) -> Self {
        debug_assert!((1..=64).contains(&bits));
        debug_assert!(bits == 64 || value >> bits == 0);
        KeyChecksum { value, bits }
    }

    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Big-endian encoding in `ceil(bits / 8)` bytes, as laid out in a slot.
    pub fn write_be(&self, out: &mut [u8]) {
        let len = super::config::checksum_bytes(self.bits);
        debug_assert_eq!(out.len(), len);
        out.copy_from_slice(&self.value.to_be_bytes()[8 - len..]);
    }

    pub fn to_be_bytes(&self) -> SmallVec<[u8; 8]> {
        let mut out = SmallVec::from_elem(0, super::config::checksum_bytes(self.bits));
        self.write_be(&mut out);
        out
    }
}
