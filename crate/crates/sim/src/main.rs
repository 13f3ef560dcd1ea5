use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dart_core::analytic::{
    avg_success_over_ages, invert_alpha_for_success, optimal_copies, p_query_success,
    p_return_error_bounds, AnalyticParams,
};
use dart_core::store::ResolutionPolicy;
use dart_sim::experiments::{e2e_store_config, E2E_BASE_ADDRESS};
use dart_sim::plot::write_gnuplot;
use dart_sim::spec::{RemoteCollector, SpecFile};
use dart_sim::{run, write_csv, ExperimentKind, ExperimentSpec};

/// Experiment driver for the DART telemetry store.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mean success over loads and copy counts.
    Sweep(Common),
    /// Success by report age percentile.
    Aging(Common),
    /// Wrong-value rate against checksum width.
    Correctness(Common),
    /// Reports over RoCEv2 frames to a live collector, then queries.
    E2e {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        wire: WireArgs,
    },
    /// Print model tables.
    Analytic(AnalyticArgs),
}

#[derive(Args)]
struct Common {
    /// TOML config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    keys: Option<u64>,
    /// Fix M and derive K from each load instead.
    #[arg(long)]
    slots: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    loads: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    copies: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    checksum_bits: Option<Vec<u32>>,
    #[arg(long)]
    value_width: Option<usize>,
    /// single | plurality | consensusK
    #[arg(long)]
    policy: Option<ResolutionPolicy>,
    #[arg(long)]
    trials: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    buckets: Option<u32>,
    /// Calibrate the load so the oldest key succeeds with this probability.
    #[arg(long, conflicts_with = "loads")]
    target_success: Option<f64>,
    /// CSV output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write gnuplot data and script into this directory.
    #[arg(long)]
    gnuplot: Option<PathBuf>,
    /// Add a wall-clock column (output is then no longer reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct WireArgs {
    #[arg(long)]
    drop_rate: Option<f64>,
    /// Random-copy reports per key; one per copy when absent.
    #[arg(long)]
    report_copies: Option<u32>,
    /// Report address of an external collector.
    #[arg(long, requires = "collector_query")]
    collector_report: Option<SocketAddr>,
    /// Query address of an external collector.
    #[arg(long, requires = "collector_report")]
    collector_query: Option<SocketAddr>,
}

#[derive(Args)]
struct AnalyticArgs {
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.1,0.25,0.5,0.75,1,1.5,2"
    )]
    loads: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    copies: Vec<u32>,
    #[arg(long, default_value_t = 32)]
    checksum_bits: u32,
    /// Also print the load at which the oldest key succeeds with this
    /// probability, per N.
    #[arg(long)]
    invert: Option<f64>,
}

fn build_spec(kind: ExperimentKind, c: &Common, wire: Option<&WireArgs>) -> Result<ExperimentSpec> {
    let mut s = ExperimentSpec::defaults(kind);
    if let Some(path) = &c.config {
        s.apply_file(SpecFile::load(path)?)?;
    }
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = c.$field.clone() { s.$field = v; } )* };
    }
    set!(
        keys,
        copies,
        checksum_bits,
        value_width,
        policy,
        trials,
        seed,
        buckets
    );
    if let Some(m) = c.slots {
        s.slots = Some(m);
    }
    if let Some(l) = &c.loads {
        s.loads = l.clone();
        s.target_success = None;
    }
    if let Some(t) = c.target_success {
        s.target_success = Some(t);
    }
    if let Some(o) = &c.out {
        s.output = Some(o.clone());
    }
    s.timing = c.timing;
    if let Some(w) = wire {
        if let Some(d) = w.drop_rate {
            s.drop_rate = d;
        }
        if let Some(r) = w.report_copies {
            s.report_copies = Some(r);
        }
        if let (Some(report), Some(query)) = (w.collector_report, w.collector_query) {
            s.collector = Some(RemoteCollector { report, query });
        }
    }
    s.validate()?;
    Ok(s)
}

fn run_experiment(kind: ExperimentKind, c: &Common, wire: Option<&WireArgs>) -> Result<()> {
    let spec = build_spec(kind, c, wire)?;
    if spec.collector.is_some() {
        let cfg = e2e_store_config(&spec, 0)?;
        eprintln!(
            "external collector must run: dart-collector serve --slots {} --copies {} --checksum-bits {} \
             --value-width {} --address-seed {} --checksum-seed {} --collector-seed {} --num-collectors 1 \
             --policy {} --base-address {E2E_BASE_ADDRESS}",
            cfg.slots,
            cfg.copies,
            cfg.checksum_bits,
            cfg.value_width,
            cfg.address_seed,
            cfg.checksum_seed,
            cfg.collector_seed,
            cfg.policy.name(),
        );
    }
    let rows = run(&spec)?;
    match &spec.output {
        Some(path) => {
            let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_csv(BufWriter::new(f), &rows, spec.timing)?;
        }
        None => write_csv(io::stdout().lock(), &rows, spec.timing)?,
    }
    if let Some(dir) = &c.gnuplot {
        for p in write_gnuplot(dir, kind, &rows)? {
            eprintln!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn analytic(a: &AnalyticArgs) -> Result<()> {
    if a.loads.is_empty() || a.copies.is_empty() {
        bail!("loads and copies must be non-empty");
    }
    let mut out = io::stdout().lock();
    writeln!(
        out,
        "{:>8} {:>3} {:>10} {:>10} {:>12} {:>12} {:>10}",
        "alpha", "N", "succ_lo", "succ_hi", "err_lo", "err_hi", "avg_succ"
    )?;
    for &alpha in &a.loads {
        for &n in &a.copies {
            let p = AnalyticParams::new(alpha, n, a.checksum_bits)?;
            let s = p_query_success(&p);
            let e = p_return_error_bounds(&p);
            writeln!(
                out,
                "{alpha:>8.4} {n:>3} {:>10.6} {:>10.6} {:>12.4e} {:>12.4e} {:>10.6}",
                s.lower,
                s.upper,
                e.lower,
                e.upper,
                avg_success_over_ages(alpha, n, a.checksum_bits)
            )?;
        }
    }
    writeln!(out)?;
    writeln!(out, "{:>8} {:>6} {:>10}", "alpha", "best_N", "avg_succ")?;
    for &alpha in &a.loads {
        if let Some((n, s)) = optimal_copies(alpha, &a.copies, a.checksum_bits) {
            writeln!(out, "{alpha:>8.4} {n:>6} {s:>10.6}")?;
        }
    }
    if let Some(t) = a.invert {
        writeln!(out)?;
        writeln!(out, "{:>3} {:>12}", "N", "alpha")?;
        for &n in &a.copies {
            let alpha = invert_alpha_for_success(t, n, a.checksum_bits)?;
            writeln!(out, "{n:>3} {alpha:>12.9}")?;
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Sweep(c) => run_experiment(ExperimentKind::Sweep, &c, None),
        Command::Aging(c) => run_experiment(ExperimentKind::Aging, &c, None),
        Command::Correctness(c) => run_experiment(ExperimentKind::Correctness, &c, None),
        Command::E2e { common, wire } => run_experiment(ExperimentKind::E2e, &common, Some(&wire)),
        Command::Analytic(a) => analytic(&a),
    }
}
