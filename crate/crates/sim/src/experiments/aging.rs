use super::{base_row, expect_kind, points, run_points, ExperimentError};
use crate::row::ExperimentRow;
use crate::spec::{ExperimentKind, ExperimentSpec};
use crate::trial::success_interval;

/// Success by age percentile: one `all` row, then one row per bucket from
/// newest (0) to oldest.
pub fn run_aging(spec: &ExperimentSpec) -> Result<Vec<ExperimentRow>, ExperimentError> {
    expect_kind(spec, ExperimentKind::Aging)?;
    let pts = points(spec)?;
    let results = run_points(spec, &pts)?;

    let mut rows = Vec::new();
    for r in &results {
        let p = r.point;
        let total = r.total();
        let (lo, hi) = r.plan.all_ages();
        let a = success_interval(lo, hi, p.copies, p.checksum_bits);
        rows.push(ExperimentRow {
            age_lo: lo,
            age_hi: hi,
            samples: total.queries,
            hits: total.success,
            analytic_low: a.lower,
            analytic_high: a.upper,
            ..base_row(spec, r)
        });
        for (b, o) in r.buckets.iter().enumerate() {
            let (lo, hi) = r.plan.bucket_ages(b as u32);
            let a = success_interval(lo, hi, p.copies, p.checksum_bits);
            rows.push(ExperimentRow {
                bucket: b.to_string(),
                age_lo: lo,
                age_hi: hi,
                samples: o.queries,
                hits: o.success,
                analytic_low: a.lower,
                analytic_high: a.upper,
                ..base_row(spec, r)
            });
        }
    }
    Ok(rows)
}
