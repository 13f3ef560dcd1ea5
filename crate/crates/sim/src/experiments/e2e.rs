//! End-to-end runs: workload keys are turned into RoCEv2 frames by the
//! switch emulator, sent over UDP to a collector, and queried back over TCP.
//! The same delivered frames are also applied to a local store so wire and
//! in-process answers can be compared.

use std::net::{Ipv4Addr, SocketAddr, UdpSocket};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use dart_collector::{CollectorClient, CollectorRuntime, CollectorServer};
use dart_core::analytic::adaptive_simpson;
use dart_core::store::{CollectorId, Store, StoreConfig, StoreError};
use dart_core::wire::{parse_report, CollectorTableEntry, SwitchEmulator, SwitchIdentity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{expect_kind, plan, points, ExperimentError, Point};
use crate::row::ExperimentRow;
use crate::spec::{ExperimentKind, ExperimentSpec};
use crate::trial::{sum_outcomes, Outcome, DOMAIN_DROP, DOMAIN_SWITCH};
use crate::workload::derive_seed;

/// Frames sent before waiting for the collector to count them.
pub const PACE_WINDOW: usize = 2048;
/// Base address of the collector region in e2e runs.
pub const E2E_BASE_ADDRESS: u64 = 0;
const STALL_LIMIT: Duration = Duration::from_secs(2);

/// Distribution of how many of a key's `N` slots receive a delivered write:
/// entry `s` is `P(|S| = s)`. `report_copies = None` sends one report per
/// copy index; `Some(c)` sends `c` reports to uniformly drawn copies.
pub fn fill_distribution(copies: u32, drop_rate: f64, report_copies: Option<u32>) -> Vec<f64> {
    let n = copies as usize;
    let keep = 1.0 - drop_rate;
    match report_copies {
        None => (0..=n)
            .map(|s| binomial(n, s) * keep.powi(s as i32) * drop_rate.powi((n - s) as i32))
            .collect(),
        Some(c) => {
            let mut p = vec![0.0; n + 1];
            p[0] = 1.0;
            for _ in 0..c {
                let mut next = vec![0.0; n + 1];
                for s in 0..=n {
                    let fresh = keep * (n - s) as f64 / n as f64;
                    next[s] += p[s] * (1.0 - fresh);
                    if s < n {
                        next[s + 1] += p[s] * fresh;
                    }
                }
                p = next;
            }
            p
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Expected success (large `b`) averaged over ages `[lo, hi]` when each key
/// fills only part of its slots. Later keys overwrite a given slot at rate
/// `N·f` per unit load, where `f` is the mean filled fraction.
pub fn fill_model_success(
    lo: f64,
    hi: f64,
    copies: u32,
    drop_rate: f64,
    report_copies: Option<u32>,
) -> f64 {
    let dist = fill_distribution(copies, drop_rate, report_copies);
    let fill: f64 = dist
        .iter()
        .enumerate()
        .map(|(s, p)| s as f64 * p)
        .sum::<f64>()
        / f64::from(copies);
    let at = |a: f64| {
        let q = 1.0 - (-a * f64::from(copies) * fill).exp();
        dist.iter()
            .enumerate()
            .map(|(s, p)| p * (1.0 - q.powi(s as i32)))
            .sum::<f64>()
    };
    if hi <= lo {
        return at(lo);
    }
    adaptive_simpson(&at, lo, hi, 1e-10) / (hi - lo)
}

/// Result of an e2e run with its send-side throughput.
#[derive(Debug, Clone)]
pub struct E2eRun {
    pub rows: Vec<ExperimentRow>,
    pub reports_sent: u64,
    pub send_time: Duration,
}

impl E2eRun {
    pub fn reports_per_sec(&self) -> f64 {
        self.reports_sent as f64 / self.send_time.as_secs_f64().max(1e-9)
    }
}

/// Store configuration the collector must run with for trial `trial`.
pub fn e2e_store_config(spec: &ExperimentSpec, trial: u32) -> Result<StoreConfig, ExperimentError> {
    let p = points(spec)?[0];
    Ok(plan(spec, &p, trial).config)
}

pub fn run_e2e_wire(spec: &ExperimentSpec) -> Result<Vec<ExperimentRow>, ExperimentError> {
    Ok(run_e2e_measured(spec)?.rows)
}

struct TrialResult {
    wire: Outcome,
    local: Outcome,
    crafted: u64,
    accepted: u64,
    sent: u64,
    send_time: Duration,
    wall: Duration,
}

/// Runs every e2e configuration, trials in sequence.
pub fn run_e2e_measured(spec: &ExperimentSpec) -> Result<E2eRun, ExperimentError> {
    expect_kind(spec, ExperimentKind::E2e)?;
    let mut rows = Vec::new();
    let mut reports_sent = 0;
    let mut send_time = Duration::ZERO;
    for p in points(spec)? {
        let mut acc = Vec::new();
        for t in 0..spec.trials {
            acc.push(run_trial(spec, &p, t)?);
        }
        reports_sent += acc.iter().map(|r| r.sent).sum::<u64>();
        send_time += acc.iter().map(|r| r.send_time).sum::<Duration>();
        rows.extend(rows_for(spec, &p, &acc));
    }
    Ok(E2eRun {
        rows,
        reports_sent,
        send_time,
    })
}

fn rows_for(spec: &ExperimentSpec, p: &Point, acc: &[TrialResult]) -> Vec<ExperimentRow> {
    let wire = sum_outcomes(&acc.iter().map(|r| r.wire).collect::<Vec<_>>());
    let local = sum_outcomes(&acc.iter().map(|r| r.local).collect::<Vec<_>>());
    let crafted: u64 = acc.iter().map(|r| r.crafted).sum();
    let accepted: u64 = acc.iter().map(|r| r.accepted).sum();
    let wall: u64 = acc.iter().map(|r| r.wall.as_millis() as u64).sum();

    let age_hi = (p.keys - 1) as f64 / p.slots as f64;
    let model = fill_model_success(0.0, age_hi, p.copies, spec.drop_rate, spec.report_copies);
    let row = |metric, samples, hits, analytic: f64| ExperimentRow {
        experiment: spec.kind.name(),
        alpha: p.alpha,
        copies: p.copies,
        checksum_bits: p.checksum_bits,
        slots: p.slots,
        keys: p.keys,
        trials: spec.trials,
        policy: spec.policy.name(),
        drop_rate: Some(spec.drop_rate),
        report_copies: Some(spec.report_copies),
        metric,
        bucket: "all".into(),
        age_lo: 0.0,
        age_hi,
        samples,
        hits,
        analytic_low: analytic,
        analytic_high: analytic,
        best_copies_measured: None,
        best_copies_analytic: None,
        wall_ms: spec.timing.then_some(wall),
    };
    vec![
        row("success", wire.queries, wire.success, model),
        row("success_inprocess", local.queries, local.success, model),
        row("delivered", crafted, accepted, 1.0 - spec.drop_rate),
    ]
}

fn collector_err(e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Collector(e.to_string())
}

fn run_trial(spec: &ExperimentSpec, p: &Point, trial: u32) -> Result<TrialResult, ExperimentError> {
    let started = Instant::now();
    let plan = plan(spec, p, trial);
    let config = plan.config.clone();

    // keep the in-process server alive for the whole trial
    let (_server, report_addr, query_addr) = match spec.collector {
        Some(remote) => (None, remote.report, remote.query),
        None => {
            let rt = CollectorRuntime::new(CollectorId(0), config.clone(), E2E_BASE_ADDRESS)?;
            let local: SocketAddr = (Ipv4Addr::LOCALHOST, 0).into();
            let server =
                CollectorServer::start(Arc::new(rt), local, local).map_err(collector_err)?;
            let (r, q) = (server.report_addr(), server.query_addr());
            (Some(server), r, q)
        }
    };

    let mut switch = SwitchEmulator::new(
        config.clone(),
        SwitchIdentity::default(),
        derive_seed(spec.seed, DOMAIN_SWITCH, u64::from(trial)),
    );
    switch.install_collector(CollectorTableEntry {
        collector_id: CollectorId(0),
        mac: [0x02, 0, 0, 0, 0, 0x01],
        ip: Ipv4Addr::new(10, 0, 0, 2),
        queue_pair: 0x11,
        remote_key: 0x1234,
        base_address: E2E_BASE_ADDRESS,
        slots: config.slots as u64,
    });
    let mut drops =
        ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, DOMAIN_DROP, u64::from(trial)));

    let local = Store::with_base_address(config.clone(), E2E_BASE_ADDRESS)?;
    let layout = local.region().layout();
    let mut frames = Vec::new();
    let mut crafted = 0u64;
    let mut value = vec![0u8; plan.workload.value_width()];
    for i in 0..plan.keys {
        let key = plan.workload.key(i);
        plan.workload.fill_value(i, &mut value);
        let packets = match spec.report_copies {
            Some(c) => switch.emit_report_burst(&key, &value, c),
            None => switch.emit_full_coverage(&key, &value),
        }
        .map_err(collector_err)?;
        for pkt in packets {
            crafted += 1;
            if spec.drop_rate > 0.0 && drops.random_bool(spec.drop_rate) {
                continue;
            }
            let frame = pkt.to_bytes();
            let w = parse_report(&frame, &layout).map_err(|r| collector_err(r.name()))?;
            local
                .apply_slot(w.slot_index, w.payload)
                .map_err(StoreError::from)?;
            frames.push(frame);
        }
    }

    let mut client = CollectorClient::connect(query_addr).map_err(collector_err)?;
    let before = client.stats().map_err(collector_err)?;
    let send_started = Instant::now();
    send_paced(&frames, report_addr, &mut client, before.received())?;
    let send_time = send_started.elapsed();
    let after = client.stats().map_err(collector_err)?;

    let keys: Vec<Vec<u8>> = (0..plan.keys)
        .map(|i| plan.workload.key_bytes(i).to_vec())
        .collect();
    let answers = client.query_batch(&keys, None).map_err(collector_err)?;
    let mut wire = Outcome::default();
    for (i, a) in answers.into_iter().enumerate() {
        let a = a.map_err(collector_err)?;
        plan.workload.fill_value(i as u64, &mut value);
        wire.queries += 1;
        match a.value {
            Some(v) if v == value => wire.success += 1,
            Some(_) => wire.error += 1,
            None => wire.empty += 1,
        }
    }

    Ok(TrialResult {
        wire,
        local: sum_outcomes(&plan.tally(&local)),
        crafted,
        accepted: after.accepted - before.accepted,
        sent: frames.len() as u64,
        send_time,
        wall: started.elapsed(),
    })
}

/// Sends `frames` in windows, waiting for the collector's receive counter
/// to catch up after each. A window that stops making progress is treated
/// as lost in the network and sending continues.
fn send_paced(
    frames: &[Vec<u8>],
    to: SocketAddr,
    client: &mut CollectorClient,
    start: u64,
) -> Result<(), ExperimentError> {
    let bind: SocketAddr = if to.is_ipv4() {
        (Ipv4Addr::UNSPECIFIED, 0).into()
    } else {
        "[::]:0".parse().expect("literal address")
    };
    let sock = UdpSocket::bind(bind).map_err(collector_err)?;
    let mut target = start;
    for chunk in frames.chunks(PACE_WINDOW) {
        for f in chunk {
            // a failed send is a lost report; it shows up as undelivered
            let _ = sock.send_to(f, to);
        }
        target += chunk.len() as u64;
        let mut last = 0;
        let mut last_progress = Instant::now();
        loop {
            let seen = client.stats().map_err(collector_err)?.received();
            if seen >= target {
                break;
            }
            if seen != last {
                last = seen;
                last_progress = Instant::now();
            } else if last_progress.elapsed() > STALL_LIMIT {
                target = seen;
                break;
            }
            thread::sleep(Duration::from_micros(200));
        }
    }
    Ok(())
}
