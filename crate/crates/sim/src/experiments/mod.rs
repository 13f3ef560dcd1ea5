//! Experiment drivers. Trials run in parallel over independent regions;
//! results are gathered in a fixed order so output does not depend on
//! scheduling.

mod aging;
mod correctness;
mod e2e;
mod sweep;

use std::time::Instant;

use dart_core::store::StoreError;
use rayon::prelude::*;
use thiserror::Error;

pub use aging::run_aging;
pub use correctness::run_correctness;
pub use e2e::{
    e2e_store_config, fill_distribution, fill_model_success, run_e2e_measured, run_e2e_wire,
    E2eRun, E2E_BASE_ADDRESS, PACE_WINDOW,
};
pub use sweep::run_redundancy_sweep;

use crate::row::ExperimentRow;
use crate::spec::{ExperimentKind, ExperimentSpec, SpecError};
use crate::trial::{sum_outcomes, Outcome, TrialPlan};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("spec is for {found}, expected {expected}")]
    WrongKind {
        expected: &'static str,
        found: &'static str,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("collector: {0}")]
    Collector(String),
}

pub fn run(spec: &ExperimentSpec) -> Result<Vec<ExperimentRow>, ExperimentError> {
    match spec.kind {
        ExperimentKind::Sweep => run_redundancy_sweep(spec),
        ExperimentKind::Aging => run_aging(spec),
        ExperimentKind::Correctness => run_correctness(spec),
        ExperimentKind::E2e => run_e2e_wire(spec),
    }
}

fn expect_kind(spec: &ExperimentSpec, kind: ExperimentKind) -> Result<(), ExperimentError> {
    spec.validate()?;
    if spec.kind != kind {
        return Err(ExperimentError::WrongKind {
            expected: kind.name(),
            found: spec.kind.name(),
        });
    }
    Ok(())
}

/// One `(α, N, b)` configuration of an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub alpha: f64,
    pub copies: u32,
    pub checksum_bits: u32,
    pub slots: usize,
    pub keys: u64,
}

/// Loads × copies × checksum widths, in that nesting order.
pub fn points(spec: &ExperimentSpec) -> Result<Vec<Point>, SpecError> {
    let mut out = Vec::new();
    for alpha in spec.resolved_loads()? {
        let (slots, keys) = spec.geometry(alpha);
        for &copies in &spec.copies {
            for &checksum_bits in &spec.checksum_bits {
                out.push(Point {
                    alpha,
                    copies,
                    checksum_bits,
                    slots,
                    keys,
                });
            }
        }
    }
    Ok(out)
}

pub(crate) fn plan(spec: &ExperimentSpec, p: &Point, trial: u32) -> TrialPlan {
    TrialPlan::new(
        spec.seed,
        trial,
        p.slots,
        p.keys,
        p.copies,
        p.checksum_bits,
        spec.value_width,
        spec.policy,
        spec.buckets,
    )
}

/// Per point: bucket outcomes pooled over trials, and total trial time.
pub(crate) struct PointResult {
    pub point: Point,
    pub plan: TrialPlan,
    pub buckets: Vec<Outcome>,
    pub wall_ms: u64,
}

impl PointResult {
    pub fn total(&self) -> Outcome {
        sum_outcomes(&self.buckets)
    }
}

pub(crate) fn run_points(
    spec: &ExperimentSpec,
    points: &[Point],
) -> Result<Vec<PointResult>, ExperimentError> {
    let jobs: Vec<(usize, u32)> = (0..points.len())
        .flat_map(|p| (0..spec.trials).map(move |t| (p, t)))
        .collect();
    let results: Vec<Result<(Vec<Outcome>, u64), StoreError>> = jobs
        .par_iter()
        .map(|&(p, t)| {
            let start = Instant::now();
            let out = plan(spec, &points[p], t).run()?;
            Ok((out, start.elapsed().as_millis() as u64))
        })
        .collect();

    let mut pooled: Vec<PointResult> = points
        .iter()
        .map(|p| {
            let plan = plan(spec, p, 0);
            PointResult {
                point: *p,
                buckets: vec![Outcome::default(); plan.buckets as usize],
                plan,
                wall_ms: 0,
            }
        })
        .collect();
    for (&(p, _), r) in jobs.iter().zip(results) {
        let (buckets, ms) = r?;
        for (acc, b) in pooled[p].buckets.iter_mut().zip(&buckets) {
            acc.add(b);
        }
        pooled[p].wall_ms += ms;
    }
    Ok(pooled)
}

/// Row skeleton for a point; metric, bucket and counts are filled in by the
/// caller.
pub(crate) fn base_row(spec: &ExperimentSpec, r: &PointResult) -> ExperimentRow {
    ExperimentRow {
        experiment: spec.kind.name(),
        alpha: r.point.alpha,
        copies: r.point.copies,
        checksum_bits: r.point.checksum_bits,
        slots: r.point.slots,
        keys: r.point.keys,
        trials: spec.trials,
        policy: spec.policy.name(),
        drop_rate: None,
        report_copies: None,
        metric: "success",
        bucket: "all".into(),
        age_lo: 0.0,
        age_hi: 0.0,
        samples: 0,
        hits: 0,
        analytic_low: 0.0,
        analytic_high: 0.0,
        best_copies_measured: None,
        best_copies_analytic: None,
        wall_ms: spec.timing.then_some(r.wall_ms),
    }
}
