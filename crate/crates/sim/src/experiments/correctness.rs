use super::{base_row, expect_kind, points, run_points, ExperimentError};
use crate::row::ExperimentRow;
use crate::spec::{ExperimentKind, ExperimentSpec};
use crate::trial::{error_interval, success_interval};

/// Wrong-value and success rates over all ages, per checksum width.
pub fn run_correctness(spec: &ExperimentSpec) -> Result<Vec<ExperimentRow>, ExperimentError> {
    expect_kind(spec, ExperimentKind::Correctness)?;
    let pts = points(spec)?;
    let results = run_points(spec, &pts)?;

    let mut rows = Vec::with_capacity(results.len() * 2);
    for r in &results {
        let p = r.point;
        let total = r.total();
        let (lo, hi) = r.plan.all_ages();
        let e = error_interval(lo, hi, p.copies, p.checksum_bits);
        rows.push(ExperimentRow {
            metric: "return_error",
            age_lo: lo,
            age_hi: hi,
            samples: total.queries,
            hits: total.error,
            analytic_low: e.lower,
            analytic_high: e.upper,
            ..base_row(spec, r)
        });
        let s = success_interval(lo, hi, p.copies, p.checksum_bits);
        rows.push(ExperimentRow {
            age_lo: lo,
            age_hi: hi,
            samples: total.queries,
            hits: total.success,
            analytic_low: s.lower,
            analytic_high: s.upper,
            ..base_row(spec, r)
        });
    }
    Ok(rows)
}
