//! One trial: insert `K` workload keys into a fresh region in order, query
//! all of them, and tally outcomes by age bucket.

use dart_core::analytic::ProbabilityInterval;
use dart_core::analytic::{avg_interval_between, p_query_success, p_return_error_bounds};
use dart_core::store::{Answer, ResolutionPolicy, Store, StoreConfig, StoreError};

use crate::workload::{derive_seed, Workload};

/// Seed domains.
pub const DOMAIN_WORKLOAD: u64 = 1;
pub const DOMAIN_ADDRESS: u64 = 2;
pub const DOMAIN_CHECKSUM: u64 = 3;
pub const DOMAIN_COLLECTOR: u64 = 4;
pub const DOMAIN_SWITCH: u64 = 5;
pub const DOMAIN_DROP: u64 = 6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Outcome {
    pub queries: u64,
    pub success: u64,
    pub error: u64,
    pub empty: u64,
}

impl Outcome {
    pub fn add(&mut self, other: &Outcome) {
        self.queries += other.queries;
        self.success += other.success;
        self.error += other.error;
        self.empty += other.empty;
    }

    pub fn record(&mut self, answer: &Answer, expected: &[u8]) {
        self.queries += 1;
        match answer {
            Answer::Value(v) if v.as_bytes() == expected => self.success += 1,
            Answer::Value(_) => self.error += 1,
            Answer::Empty => self.empty += 1,
        }
    }
}

/// Geometry and seeds of one trial.
#[derive(Debug, Clone)]
pub struct TrialPlan {
    pub config: StoreConfig,
    pub keys: u64,
    pub buckets: u32,
    pub workload: Workload,
}

impl TrialPlan {
    /// Fresh hash seeds and workload for trial `trial` of an experiment
    /// seeded with `seed`. Configurations that differ only in N, b or M
    /// share seeds, so they see the same keys.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        seed: u64,
        trial: u32,
        slots: usize,
        keys: u64,
        copies: u32,
        checksum_bits: u32,
        value_width: usize,
        policy: ResolutionPolicy,
        buckets: u32,
    ) -> Self {
        let t = u64::from(trial);
        let config = StoreConfig {
            slots,
            copies,
            checksum_bits,
            value_width,
            address_seed: derive_seed(seed, DOMAIN_ADDRESS, t),
            checksum_seed: derive_seed(seed, DOMAIN_CHECKSUM, t),
            collector_seed: derive_seed(seed, DOMAIN_COLLECTOR, t),
            num_collectors: 1,
            policy,
        };
        TrialPlan {
            config,
            keys,
            buckets: buckets.min(keys.min(u64::from(u32::MAX)) as u32).max(1),
            workload: Workload::new(derive_seed(seed, DOMAIN_WORKLOAD, t), value_width),
        }
    }

    /// Bucket of key `i`: 0 holds the newest keys, `buckets - 1` the oldest.
    pub fn bucket_of(&self, i: u64) -> usize {
        let age_rank = self.keys - 1 - i;
        (u128::from(age_rank) * u128::from(self.buckets) / u128::from(self.keys)) as usize
    }

    /// Age-rank range `[lo, hi]` (later writes) of bucket `b`.
    pub fn bucket_ranks(&self, b: u32) -> (u64, u64) {
        let k = u128::from(self.keys);
        let nb = u128::from(self.buckets);
        let lo = (u128::from(b) * k).div_ceil(nb) as u64;
        let hi = ((u128::from(b) + 1) * k).div_ceil(nb) as u64 - 1;
        (lo, hi)
    }

    /// Load range of bucket `b`.
    pub fn bucket_ages(&self, b: u32) -> (f64, f64) {
        let (lo, hi) = self.bucket_ranks(b);
        let m = self.config.slots as f64;
        (lo as f64 / m, hi as f64 / m)
    }

    pub fn all_ages(&self) -> (f64, f64) {
        (0.0, (self.keys - 1) as f64 / self.config.slots as f64)
    }

    /// Writes every key, then queries every key.
    pub fn run(&self) -> Result<Vec<Outcome>, StoreError> {
        let store = Store::new(self.config.clone())?;
        let mut value = vec![0u8; self.workload.value_width()];
        for i in 0..self.keys {
            self.workload.fill_value(i, &mut value);
            store.write_report(&self.workload.key(i), &value)?;
        }
        Ok(self.tally(&store))
    }

    /// Queries every key of the workload against `store`.
    pub fn tally(&self, store: &Store) -> Vec<Outcome> {
        let mut out = vec![Outcome::default(); self.buckets as usize];
        let mut value = vec![0u8; self.workload.value_width()];
        for i in 0..self.keys {
            self.workload.fill_value(i, &mut value);
            let r = store.query(&self.workload.key(i));
            out[self.bucket_of(i)].record(&r.answer, &value);
        }
        out
    }
}

/// Success interval averaged over ages `[lo, hi]`.
pub fn success_interval(lo: f64, hi: f64, copies: u32, bits: u32) -> ProbabilityInterval {
    avg_interval_between(lo, hi, copies, bits, p_query_success)
}

/// Return-error interval averaged over ages `[lo, hi]`.
pub fn error_interval(lo: f64, hi: f64, copies: u32, bits: u32) -> ProbabilityInterval {
    avg_interval_between(lo, hi, copies, bits, p_return_error_bounds)
}

pub fn sum_outcomes(parts: &[Outcome]) -> Outcome {
    parts.iter().fold(Outcome::default(), |mut acc, o| {
        acc.add(o);
        acc
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(keys: u64, buckets: u32) -> TrialPlan {
        TrialPlan::new(
            1,
            0,
            1000,
            keys,
            2,
            32,
            20,
            ResolutionPolicy::SingleMatch,
            buckets,
        )
    }

    #[test]
    fn buckets_partition_ages() {
        for (k, b) in [(1000, 100), (1001, 100), (7, 3), (5, 5), (1, 1)] {
            let p = plan(k, b);
            let mut counts = vec![0u64; b as usize];
            for i in 0..k {
                counts[p.bucket_of(i)] += 1;
            }
            for j in 0..b {
                let (lo, hi) = p.bucket_ranks(j);
                assert_eq!(hi - lo + 1, counts[j as usize], "k={k} b={b} bucket {j}");
                assert_eq!(p.bucket_of(k - 1 - lo), j as usize);
                assert_eq!(p.bucket_of(k - 1 - hi), j as usize);
            }
        }
    }

    #[test]
    fn oldest_key_in_last_bucket() {
        let p = plan(1000, 100);
        assert_eq!(p.bucket_of(0), 99);
        assert_eq!(p.bucket_of(999), 0);
    }

    #[test]
    fn light_load_trial_mostly_succeeds() {
        let p = TrialPlan::new(
            3,
            0,
            100_000,
            1000,
            2,
            32,
            20,
            ResolutionPolicy::SingleMatch,
            1,
        );
        let o = p.run().unwrap();
        assert_eq!(o[0].queries, 1000);
        assert!(o[0].success >= 999);
        assert_eq!(o[0].error, 0);
    }

    #[test]
    fn trials_are_reproducible_and_distinct() {
        let a = TrialPlan::new(9, 0, 500, 500, 2, 32, 20, ResolutionPolicy::SingleMatch, 4);
        let b = TrialPlan::new(9, 1, 500, 500, 2, 32, 20, ResolutionPolicy::SingleMatch, 4);
        assert_eq!(a.run().unwrap(), a.run().unwrap());
        assert_ne!(a.run().unwrap(), b.run().unwrap());
    }
}
