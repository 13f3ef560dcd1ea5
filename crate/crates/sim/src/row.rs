//! Result rows and their CSV form.
//!
//! Every experiment writes the same columns, in this order:
//!
//! | column                 | meaning                                                    |
//! |------------------------|------------------------------------------------------------|
//! | `experiment`           | sweep, aging, correctness or e2e                           |
//! | `alpha`                | nominal load K/M                                           |
//! | `copies`               | N                                                          |
//! | `checksum_bits`        | b                                                          |
//! | `slots`                | M                                                          |
//! | `keys`                 | K per trial                                                |
//! | `trials`               | independent regions pooled into the row                    |
//! | `policy`               | query resolution policy                                    |
//! | `drop_rate`            | e2e synthetic loss, empty elsewhere                        |
//! | `report_copies`        | e2e reports per key, `full` for one per copy               |
//! | `metric`               | success, return_error, success_inprocess or delivered      |
//! | `bucket`               | `all`, `oldest` or an age percentile bucket, 0 = newest    |
//! | `age_lo`, `age_hi`     | load range covered by the bucket (later writes / M)        |
//! | `samples`              | queries (or reports, for delivered) counted                |
//! | `hits`                 | of which the metric held                                   |
//! | `measured`             | hits / samples                                             |
//! | `ci_low`, `ci_high`    | Wilson 95% interval                                        |
//! | `analytic_low`, `analytic_high` | model interval averaged over the bucket's ages    |
//! | `best_copies_measured` | sweep: N with highest measured mean success at this load   |
//! | `best_copies_analytic` | sweep: N with highest analytic mean success at this load   |
//! | `wall_ms`              | only with `--timing`                                       |
//!
//! Floats are printed with fixed precision so identical runs give identical
//! bytes.

use std::io::Write;

use crate::stats::{wilson, Z95};

pub const COLUMNS: [&str; 23] = [
    "experiment",
    "alpha",
    "copies",
    "checksum_bits",
    "slots",
    "keys",
    "trials",
    "policy",
    "drop_rate",
    "report_copies",
    "metric",
    "bucket",
    "age_lo",
    "age_hi",
    "samples",
    "hits",
    "measured",
    "ci_low",
    "ci_high",
    "analytic_low",
    "analytic_high",
    "best_copies_measured",
    "best_copies_analytic",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub experiment: &'static str,
    pub alpha: f64,
    pub copies: u32,
    pub checksum_bits: u32,
    pub slots: usize,
    pub keys: u64,
    pub trials: u32,
    pub policy: String,
    pub drop_rate: Option<f64>,
    /// `Some(None)` prints `full`.
    pub report_copies: Option<Option<u32>>,
    pub metric: &'static str,
    pub bucket: String,
    pub age_lo: f64,
    pub age_hi: f64,
    pub samples: u64,
    pub hits: u64,
    pub analytic_low: f64,
    pub analytic_high: f64,
    pub best_copies_measured: Option<u32>,
    pub best_copies_analytic: Option<u32>,
    pub wall_ms: Option<u64>,
}

impl ExperimentRow {
    pub fn measured(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.hits as f64 / self.samples as f64
        }
    }

    pub fn wilson(&self) -> (f64, f64) {
        wilson(self.hits, self.samples, Z95)
    }

    fn fields(&self) -> Vec<String> {
        let opt = |v: Option<String>| v.unwrap_or_default();
        let (lo, hi) = self.wilson();
        vec![
            self.experiment.to_string(),
            format!("{:.6}", self.alpha),
            self.copies.to_string(),
            self.checksum_bits.to_string(),
            self.slots.to_string(),
            self.keys.to_string(),
            self.trials.to_string(),
            self.policy.clone(),
            opt(self.drop_rate.map(|d| format!("{d:.4}"))),
            opt(self
                .report_copies
                .map(|c| c.map_or_else(|| "full".to_string(), |c| c.to_string()))),
            self.metric.to_string(),
            self.bucket.clone(),
            format!("{:.6}", self.age_lo),
            format!("{:.6}", self.age_hi),
            self.samples.to_string(),
            self.hits.to_string(),
            format!("{:.6}", self.measured()),
            format!("{lo:.6}"),
            format!("{hi:.6}"),
            format!("{:.6}", self.analytic_low),
            format!("{:.6}", self.analytic_high),
            opt(self.best_copies_measured.map(|n| n.to_string())),
            opt(self.best_copies_analytic.map(|n| n.to_string())),
        ]
    }
}

/// Writes `rows` as CSV with the fixed header. `timing` appends `wall_ms`.
pub fn write_csv<W: Write>(out: W, rows: &[ExperimentRow], timing: bool) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = COLUMNS.to_vec();
    if timing {
        header.push("wall_ms");
    }
    w.write_record(&header)?;
    for r in rows {
        let mut f = r.fields();
        if timing {
            f.push(r.wall_ms.map(|t| t.to_string()).unwrap_or_default());
        }
        w.write_record(&f)?;
    }
    w.flush()?;
    Ok(())
}
