use thiserror::Error;

/// Default number of copies written per key.
pub const DEFAULT_COPIES: u32 = 2;
/// Default key checksum width in bits.
pub const DEFAULT_CHECKSUM_BITS: u32 = 32;
/// Default value payload width (160 bits).
pub const DEFAULT_VALUE_WIDTH: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("checksum width {0} bits is outside [1, 64]")]
    ChecksumBits(u32),
    #[error("copies per key must be at least 1")]
    ZeroCopies,
    #[error("region has {slots} slots but {copies} copies per key were requested")]
    TooFewSlots { slots: usize, copies: u32 },
    #[error("value width must be at least 1 byte")]
    ZeroValueWidth,
    #[error("at least one collector is required")]
    NoCollectors,
    #[error("consensus threshold must be at least 2, got {0}")]
    ConsensusThreshold(u32),
}

/// How a query turns the checksum-matching slots into an answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ResolutionPolicy {
    /// Answer only if every matching slot holds the same value.
    #[default]
    SingleMatch,
    /// Answer with the strictly most frequent matching value; ties are empty.
    PluralityVote,
    /// Answer with the plurality value only if it occurs at least `k` times.
    Consensus(u32),
}

impl ResolutionPolicy {
    pub fn validate(&self) -> Result<(), ConfigError> {
        match *self {
            ResolutionPolicy::Consensus(k) if k < 2 => Err(ConfigError::ConsensusThreshold(k)),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            ResolutionPolicy::SingleMatch => "single".to_string(),
            ResolutionPolicy::PluralityVote => "plurality".to_string(),
            ResolutionPolicy::Consensus(k) => format!("consensus{k}"),
        }
    }
}

impl std::str::FromStr for ResolutionPolicy {
    type Err = String;

    /// Accepts `single`, `plurality`, `consensus` (k = 2) or `consensusK` / `consensus:K`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "single" | "single-match" | "singlematch" => Ok(ResolutionPolicy::SingleMatch),
            "plurality" | "plurality-vote" | "pluralityvote" => Ok(ResolutionPolicy::PluralityVote),
            "consensus" => Ok(ResolutionPolicy::Consensus(2)),
            other => {
                let digits = other
                    .strip_prefix("consensus")
                    .map(|rest| rest.trim_start_matches([':', '=', '-']))
                    .ok_or_else(|| format!("unknown resolution policy '{s}'"))?;
                let k: u32 = digits
                    .parse()
                    .map_err(|_| format!("bad consensus threshold in '{s}'"))?;
                let policy = ResolutionPolicy::Consensus(k);
                policy.validate().map_err(|e| e.to_string())?;
                Ok(policy)
            }
        }
    }
}

impl std::fmt::Display for ResolutionPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

/// Every tunable of a store instance. Writers and readers must agree on all
/// fields except `policy`, which may differ per query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreConfig {
    /// Slot count `M` of the memory region.
    pub slots: usize,
    /// Copies `N` written per key.
    pub copies: u32,
    /// Checksum width `b` in bits.
    pub checksum_bits: u32,
    /// Value payload width in bytes.
    pub value_width: usize,
    pub address_seed: u64,
    pub checksum_seed: u64,
    pub collector_seed: u64,
    pub num_collectors: u32,
    pub policy: ResolutionPolicy,
}

impl StoreConfig {
    /// Defaults (N = 2, b = 32, 20-byte values) for a region of `slots` cells.
    pub fn with_slots(slots: usize) -> Self {
        StoreConfig {
            slots,
            copies: DEFAULT_COPIES,
            checksum_bits: DEFAULT_CHECKSUM_BITS,
            value_width: DEFAULT_VALUE_WIDTH,
            address_seed: 0x5eed_0000_0000_0001,
            checksum_seed: 0x5eed_0000_0000_0002,
            collector_seed: 0x5eed_0000_0000_0003,
            num_collectors: 1,
            policy: ResolutionPolicy::SingleMatch,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(1..=64).contains(&self.checksum_bits) {
            return Err(ConfigError::ChecksumBits(self.checksum_bits));
        }
        if self.copies == 0 {
            return Err(ConfigError::ZeroCopies);
        }
        if self.slots < self.copies as usize {
            return Err(ConfigError::TooFewSlots {
                slots: self.slots,
                copies: self.copies,
            });
        }
        if self.value_width == 0 {
            return Err(ConfigError::ZeroValueWidth);
        }
        if self.num_collectors == 0 {
            return Err(ConfigError::NoCollectors);
        }
        self.policy.validate()
    }

    /// Bytes used by the checksum prefix of a slot.
    pub fn checksum_bytes(&self) -> usize {
        checksum_bytes(self.checksum_bits)
    }

    /// Bytes per slot: checksum prefix followed by the value.
    pub fn slot_width(&self) -> usize {
        self.checksum_bytes() + self.value_width
    }
}

pub(crate) fn checksum_bytes(bits: u32) -> usize {
    bits.div_ceil(8) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_slot_is_24_bytes() {
        let cfg = StoreConfig::with_slots(16);
        assert_eq!(cfg.slot_width(), 24);
        cfg.validate().unwrap();
    }

    #[test]
    fn odd_checksum_widths_round_up() {
        let mut cfg = StoreConfig::with_slots(16);
        cfg.checksum_bits = 1;
        assert_eq!(cfg.checksum_bytes(), 1);
        cfg.checksum_bits = 9;
        assert_eq!(cfg.checksum_bytes(), 2);
        cfg.checksum_bits = 64;
        assert_eq!(cfg.checksum_bytes(), 8);
    }

    #[test]
    fn rejects_bad_configs() {
        let base = StoreConfig::with_slots(4);
        let mut c = base.clone();
        c.checksum_bits = 0;
        assert_eq!(c.validate(), Err(ConfigError::ChecksumBits(0)));
        c.checksum_bits = 65;
        assert_eq!(c.validate(), Err(ConfigError::ChecksumBits(65)));

        let mut c = base.clone();
        c.copies = 5;
        assert!(matches!(c.validate(), Err(ConfigError::TooFewSlots { .. })));

        let mut c = base.clone();
        c.copies = 0;
        assert_eq!(c.validate(), Err(ConfigError::ZeroCopies));

        let mut c = base.clone();
        c.num_collectors = 0;
        assert_eq!(c.validate(), Err(ConfigError::NoCollectors));

        let mut c = base;
        c.policy = ResolutionPolicy::Consensus(1);
        assert_eq!(c.validate(), Err(ConfigError::ConsensusThreshold(1)));
    }

    #[test]
    fn policy_parsing() {
        assert_eq!("single".parse(), Ok(ResolutionPolicy::SingleMatch));
        assert_eq!("Plurality".parse(), Ok(ResolutionPolicy::PluralityVote));
        assert_eq!("consensus".parse(), Ok(ResolutionPolicy::Consensus(2)));
        assert_eq!("consensus3".parse(), Ok(ResolutionPolicy::Consensus(3)));
        assert_eq!("consensus:4".parse(), Ok(ResolutionPolicy::Consensus(4)));
        assert!("consensus1".parse::<ResolutionPolicy>().is_err());
        assert!("majority".parse::<ResolutionPolicy>().is_err());
        for p in [
            ResolutionPolicy::SingleMatch,
            ResolutionPolicy::PluralityVote,
            ResolutionPolicy::Consensus(3),
        ] {
            assert_eq!(p.name().parse(), Ok(p));
        }
    }
}
