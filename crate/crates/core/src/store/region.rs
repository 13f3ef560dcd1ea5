//! Emulated RDMA-registered memory.
//!
//! Slots are stored as padded runs of `AtomicU64` words guarded by a
//! per-slot sequence counter (a seqlock). Writers bump the counter to an odd
//! value, store the words and bump it to the next even value; readers retry
//! until they observe the same even counter before and after copying. A read
//! therefore always sees a whole slot, never a mix of two writes. The region
//! is `Sync`, so one ingest thread and many query threads can share it.

use std::hint;
use std::sync::atomic::{fence, AtomicU32, AtomicU64, Ordering};

use super::config::StoreConfig;
use super::types::InputError;

/// Geometry of a region: everything needed to map slot indices to remote
/// virtual addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionLayout {
    pub slots: usize,
    pub slot_width: usize,
    pub base_address: u64,
}

impl RegionLayout {
    pub fn len_bytes(&self) -> u64 {
        self.slots as u64 * self.slot_width as u64
    }

    pub fn slot_address(&self, index: usize) -> u64 {
        self.base_address + index as u64 * self.slot_width as u64
    }
}

pub struct MemoryRegion {
    layout: RegionLayout,
    words_per_slot: usize,
    words: Box<[AtomicU64]>,
    // Zero means "never written"; the validity flag is diagnostic only.
    seqs: Box<[AtomicU32]>,
}

impl std::fmt::Debug for MemoryRegion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MemoryRegion")
            .field("layout", &self.layout)
            .finish_non_exhaustive()
    }
}

impl MemoryRegion {
    /// Zeroed region with `slots` cells of `slot_width` bytes.
    pub fn new(slots: usize, slot_width: usize, base_address: u64) -> Self {
        assert!(slot_width > 0, "slot width must be positive");
        let words_per_slot = slot_width.div_ceil(8);
        let words = (0..slots * words_per_slot)
            .map(|_| AtomicU64::new(0))
            .collect();
        let seqs = (0..slots).map(|_| AtomicU32::new(0)).collect();
        MemoryRegion {
            layout: RegionLayout {
                slots,
                slot_width,
                base_address,
            },
            words_per_slot,
            words,
            seqs,
        }
    }

    pub fn for_config(cfg: &StoreConfig, base_address: u64) -> Self {
        Self::new(cfg.slots, cfg.slot_width(), base_address)
    }

    pub fn layout(&self) -> RegionLayout {
        self.layout
    }

    pub fn slots(&self) -> usize {
        self.layout.slots
    }

    pub fn slot_width(&self) -> usize {
        self.layout.slot_width
    }

    pub fn base_address(&self) -> u64 {
        self.layout.base_address
    }

    fn check(&self, index: usize) -> Result<(), InputError> {
        if index >= self.layout.slots {
            return Err(InputError::SlotIndex {
                index,
                slots: self.layout.slots,
            });
        }
        Ok(())
    }

    /// Replaces slot `index` with `bytes` as one atomic unit.
    pub fn write_slot(&self, index: usize, bytes: &[u8]) -> Result<(), InputError> {
        self.check(index)?;
        if bytes.len() != self.layout.slot_width {
            return Err(InputError::ValueWidth {
                expected: self.layout.slot_width,
                got: bytes.len(),
            });
        }
        let seq = &self.seqs[index];
        let mut current = seq.load(Ordering::Relaxed);
        loop {
            if current & 1 == 1 {
                hint::spin_loop();
                current = seq.load(Ordering::Relaxed);
                continue;
            }
            match seq.compare_exchange_weak(
                current,
                current.wrapping_add(1),
                Ordering::Acquire,
                Ordering::Relaxed,
            ) {
                Ok(_) => break,
                Err(seen) => current = seen,
            }
        }
        fence(Ordering::Release);
        let base = index * self.words_per_slot;
        for (w, chunk) in bytes.chunks(8).enumerate() {
            let mut word = [0u8; 8];
            word[..chunk.len()].copy_from_slice(chunk);
            self.words[base + w].store(u64::from_ne_bytes(word), Ordering::Relaxed);
        }
        // Skip 0 on wrap so a written slot never reads as untouched.
        let mut next = current.wrapping_add(2);
        if next == 0 {
            next = 2;
        }
        seq.store(next, Ordering::Release);
        Ok(())
    }

    /// Copies slot `index` into `out` (exactly `slot_width` bytes).
    pub fn read_slot(&self, index: usize, out: &mut [u8]) -> Result<(), InputError> {
        self.check(index)?;
        if out.len() != self.layout.slot_width {
            return Err(InputError::ValueWidth {
                expected: self.layout.slot_width,
                got: out.len(),
            });
        }
        let seq = &self.seqs[index];
        let base = index * self.words_per_slot;
        loop {
            let before = seq.load(Ordering::Acquire);
            if before & 1 == 1 {
                hint::spin_loop();
                continue;
            }
            for (w, chunk) in out.chunks_mut(8).enumerate() {
                let word = self.words[base + w].load(Ordering::Relaxed).to_ne_bytes();
                chunk.copy_from_slice(&word[..chunk.len()]);
            }
            fence(Ordering::Acquire);
            if seq.load(Ordering::Relaxed) == before {
                return Ok(());
            }
        }
    }

    /// Whether the slot has ever been written. Emulation metadata only; query
    /// resolution never looks at it.
    pub fn is_valid(&self, index: usize) -> bool {
        self.seqs
            .get(index)
            .is_some_and(|s| s.load(Ordering::Acquire) != 0)
    }

    pub fn valid_count(&self) -> usize {
        (0..self.layout.slots).filter(|&i| self.is_valid(i)).count()
    }

    /// Concatenated slot bytes, `slots × slot_width` long.
    pub fn to_bytes(&self) -> Vec<u8> {
        let width = self.layout.slot_width;
        let mut out = vec![0u8; self.layout.slots * width];
        for (i, chunk) in out.chunks_mut(width).enumerate() {
            self.read_slot(i, chunk).expect("in range");
        }
        out
    }

    /// Rebuilds a region from raw slot bytes. Slots with any non-zero byte are
    /// flagged valid.
    pub fn from_bytes(
        slot_width: usize,
        base_address: u64,
        bytes: &[u8],
    ) -> Result<Self, InputError> {
        if slot_width == 0 || !bytes.len().is_multiple_of(slot_width) {
            return Err(InputError::ValueWidth {
                expected: slot_width,
                got: bytes.len(),
            });
        }
        let region = MemoryRegion::new(bytes.len() / slot_width, slot_width, base_address);
        for (i, chunk) in bytes.chunks(slot_width).enumerate() {
            if chunk.iter().any(|&b| b != 0) {
                region.write_slot(i, chunk)?;
            }
        }
        Ok(region)
    }
}

impl PartialEq for MemoryRegion {
    /// Byte equality of layout and slot contents; validity flags are ignored.
    fn eq(&self, other: &Self) -> bool {
        self.layout == other.layout && self.to_bytes() == other.to_bytes()
    }
}
