use super::{base_row, expect_kind, points, run_points, ExperimentError};
use crate::row::ExperimentRow;
use crate::spec::{ExperimentKind, ExperimentSpec};
use crate::trial::success_interval;

/// Mean and oldest-bucket success for every `(α, N, b)`, with the best `N`
/// per `(α, b)` by measurement and by the model.
pub fn run_redundancy_sweep(spec: &ExperimentSpec) -> Result<Vec<ExperimentRow>, ExperimentError> {
    expect_kind(spec, ExperimentKind::Sweep)?;
    let pts = points(spec)?;
    let results = run_points(spec, &pts)?;

    let mut rows = Vec::with_capacity(results.len() * 2);
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

        let oldest = r.plan.buckets - 1;
        let o = r.buckets[oldest as usize];
        let (lo, hi) = r.plan.bucket_ages(oldest);
        let a = success_interval(lo, hi, p.copies, p.checksum_bits);
        rows.push(ExperimentRow {
            bucket: "oldest".into(),
            age_lo: lo,
            age_hi: hi,
            samples: o.queries,
            hits: o.success,
            analytic_low: a.lower,
            analytic_high: a.upper,
            ..base_row(spec, r)
        });
    }

    // best N per (alpha, b) over the mean rows
    let key = |r: &ExperimentRow| (r.alpha.to_bits(), r.checksum_bits);
    let means: Vec<(u64, u32, u32, f64, f64)> = rows
        .iter()
        .filter(|r| r.bucket == "all")
        .map(|r| {
            let (k0, k1) = key(r);
            (
                k0,
                k1,
                r.copies,
                r.measured(),
                0.5 * (r.analytic_low + r.analytic_high),
            )
        })
        .collect();
    for row in &mut rows {
        let (k0, k1) = key(row);
        let group = means.iter().filter(|m| m.0 == k0 && m.1 == k1);
        row.best_copies_measured = argmax(group.clone().map(|m| (m.2, m.3)));
        row.best_copies_analytic = argmax(group.map(|m| (m.2, m.4)));
    }
    Ok(rows)
}

/// First candidate with the largest score.
fn argmax(items: impl Iterator<Item = (u32, f64)>) -> Option<u32> {
    items
        .fold(None, |best: Option<(u32, f64)>, cur| match best {
            Some(b) if b.1 >= cur.1 => Some(b),
            _ => Some(cur),
        })
        .map(|b| b.0)
}
