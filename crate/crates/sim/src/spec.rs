//! Experiment specifications: defaults per experiment, a TOML file schema
//! and validation.
//!
//! Config file schema (every field optional, flags override the file):
//!
//! ```toml
//! keys = 1000000            # K, distinct keys inserted per trial
//! slots = 262144            # M; when set, K = round(alpha * M) per load
//! loads = [0.5, 1.0]        # alpha values
//! copies = [1, 2, 4]        # N values
//! checksum_bits = [32]      # b values
//! value_width = 20          # bytes, at least 8
//! policy = "single"         # single | plurality | consensusK
//! trials = 5
//! seed = 1
//! buckets = 100             # age percentile buckets
//! target_success = 0.387    # aging/e2e: calibrate alpha from the first N, b
//! drop_rate = 0.0           # e2e: synthetic datagram loss
//! report_copies = 2         # e2e: random-copy reports per key; absent = one per copy
//! collector_report = "127.0.0.1:4791"  # e2e: external collector, else in-process
//! collector_query = "127.0.0.1:4792"
//! output = "out.csv"
//! ```

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use dart_core::analytic::invert_alpha_for_success;
use dart_core::store::ResolutionPolicy;
use serde::Deserialize;
use thiserror::Error;

use crate::workload::MIN_VALUE_WIDTH;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Sweep,
    Aging,
    Correctness,
    E2e,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::Aging => "aging",
            ExperimentKind::Correctness => "correctness",
            ExperimentKind::E2e => "e2e",
        }
    }
}

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("{0}")]
    Invalid(String),
    #[error("reading config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing config {path}: {source}")]
    Toml {
        path: PathBuf,
        source: toml::de::Error,
    },
}

fn invalid(msg: impl Into<String>) -> SpecError {
    SpecError::Invalid(msg.into())
}

/// Address pair of a collector run outside this process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RemoteCollector {
    pub report: SocketAddr,
    pub query: SocketAddr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub keys: u64,
    pub slots: Option<usize>,
    pub loads: Vec<f64>,
    pub copies: Vec<u32>,
    pub checksum_bits: Vec<u32>,
    pub value_width: usize,
    pub policy: ResolutionPolicy,
    pub trials: u32,
    pub seed: u64,
    pub buckets: u32,
    /// When set, replaces `loads` with the single load whose success
    /// midpoint equals this value for the first `copies` and `checksum_bits`.
    pub target_success: Option<f64>,
    pub drop_rate: f64,
    /// `None`: one report per copy index (full coverage).
    pub report_copies: Option<u32>,
    pub collector: Option<RemoteCollector>,
    pub output: Option<PathBuf>,
    /// Adds a wall-clock column. Off by default so output is reproducible.
    pub timing: bool,
}

impl ExperimentSpec {
    pub fn defaults(kind: ExperimentKind) -> Self {
        let base = ExperimentSpec {
            kind,
            keys: 1_000_000,
            slots: None,
            loads: vec![1.0],
            copies: vec![2],
            checksum_bits: vec![32],
            value_width: 20,
            policy: ResolutionPolicy::SingleMatch,
            trials: 1,
            seed: 1,
            buckets: 100,
            target_success: None,
            drop_rate: 0.0,
            report_copies: None,
            collector: None,
            output: None,
            timing: false,
        };
        match kind {
            ExperimentKind::Sweep => ExperimentSpec {
                loads: (1..=15).map(|i| f64::from(i) / 10.0).collect(),
                copies: (1..=8).collect(),
                ..base
            },
            ExperimentKind::Aging => ExperimentSpec {
                target_success: Some(0.387),
                trials: 5,
                ..base
            },
            ExperimentKind::Correctness => ExperimentSpec {
                checksum_bits: vec![1, 2, 4, 8, 32],
                buckets: 1,
                ..base
            },
            ExperimentKind::E2e => ExperimentSpec {
                keys: 100_000,
                target_success: Some(0.387),
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.keys == 0 {
            return Err(invalid("keys must be at least 1"));
        }
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if self.slots == Some(0) {
            return Err(invalid("slots must be at least 1"));
        }
        if self.loads.is_empty() || self.copies.is_empty() || self.checksum_bits.is_empty() {
            return Err(invalid("loads, copies and checksum_bits must be non-empty"));
        }
        if let Some(a) = self.loads.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(invalid(format!("load {a} must be positive")));
        }
        if self.copies.contains(&0) {
            return Err(invalid("copies must be at least 1"));
        }
        if let Some(b) = self.checksum_bits.iter().find(|b| !(1..=64).contains(*b)) {
            return Err(invalid(format!("checksum_bits {b} outside 1..=64")));
        }
        if self.value_width < MIN_VALUE_WIDTH {
            return Err(invalid(format!(
                "value_width must be at least {MIN_VALUE_WIDTH} so values identify keys"
            )));
        }
        self.policy.validate().map_err(|e| invalid(e.to_string()))?;
        if self.buckets == 0 || u64::from(self.buckets) > self.keys {
            return Err(invalid("buckets must be between 1 and keys"));
        }
        if let Some(t) = self.target_success {
            if !(t > 0.0 && t < 1.0) {
                return Err(invalid(format!("target_success {t} outside (0, 1)")));
            }
        }
        if !(0.0..1.0).contains(&self.drop_rate) {
            return Err(invalid(format!(
                "drop_rate {} outside [0, 1)",
                self.drop_rate
            )));
        }
        if self.report_copies == Some(0) {
            return Err(invalid("report_copies must be at least 1"));
        }
        if self.collector.is_some() && self.trials != 1 {
            return Err(invalid("an external collector supports a single trial"));
        }
        Ok(())
    }

    /// Loads to run, after calibration.
    pub fn resolved_loads(&self) -> Result<Vec<f64>, SpecError> {
        match self.target_success {
            Some(t) => {
                let a = invert_alpha_for_success(t, self.copies[0], self.checksum_bits[0])
                    .map_err(|e| invalid(e.to_string()))?;
                Ok(vec![a])
            }
            None => Ok(self.loads.clone()),
        }
    }

    /// `(slots, keys)` for one load.
    pub fn geometry(&self, alpha: f64) -> (usize, u64) {
        match self.slots {
            Some(m) => (m, ((alpha * m as f64).round() as u64).max(1)),
            None => (
                ((self.keys as f64 / alpha).round() as usize).max(1),
                self.keys,
            ),
        }
    }

    /// Applies the fields present in a config file.
    pub fn apply_file(&mut self, f: SpecFile) -> Result<(), SpecError> {
        macro_rules! take {
            ($($field:ident),*) => { $( if let Some(v) = f.$field { self.$field = v; } )* };
        }
        let loads_given = f.loads.is_some();
        take!(
            keys,
            loads,
            copies,
            checksum_bits,
            value_width,
            trials,
            seed,
            buckets,
            drop_rate
        );
        if let Some(m) = f.slots {
            self.slots = Some(m);
        }
        if let Some(p) = f.policy {
            self.policy = p.parse().map_err(|e| invalid(format!("policy: {e}")))?;
        }
        if let Some(t) = f.target_success {
            self.target_success = Some(t);
        }
        if loads_given && f.target_success.is_none() {
            self.target_success = None;
        }
        if let Some(c) = f.report_copies {
            self.report_copies = Some(c);
        }
        match (f.collector_report, f.collector_query) {
            (Some(report), Some(query)) => self.collector = Some(RemoteCollector { report, query }),
            (None, None) => {}
            _ => return Err(invalid("collector_report and collector_query go together")),
        }
        if let Some(o) = f.output {
            self.output = Some(o);
        }
        Ok(())
    }
}

/// On-disk form of a spec; see the module docs for the schema.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub keys: Option<u64>,
    pub slots: Option<usize>,
    pub loads: Option<Vec<f64>>,
    pub copies: Option<Vec<u32>>,
    pub checksum_bits: Option<Vec<u32>>,
    pub value_width: Option<usize>,
    pub policy: Option<String>,
    pub trials: Option<u32>,
    pub seed: Option<u64>,
    pub buckets: Option<u32>,
    pub target_success: Option<f64>,
    pub drop_rate: Option<f64>,
    pub report_copies: Option<u32>,
    pub collector_report: Option<SocketAddr>,
    pub collector_query: Option<SocketAddr>,
    pub output: Option<PathBuf>,
}

impl SpecFile {
    pub fn load(path: &Path) -> Result<Self, SpecError> {
        let text = std::fs::read_to_string(path).map_err(|source| SpecError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| SpecError::Toml {
            path: path.to_path_buf(),
            source,
        })
    }
}
