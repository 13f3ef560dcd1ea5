use std::net::{IpAddr, SocketAddr, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dart_collector::{CollectorClient, CollectorRuntime, CollectorServer};
use dart_core::store::{CollectorId, ResolutionPolicy, StoreConfig};
use dart_core::wire::Reject;

/// DART collector: RoCEv2 report ingest over UDP, queries over TCP.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a collector until killed.
    Serve(ServeArgs),
    /// Query one key and print the answer.
    Query(QueryArgs),
    /// Print ingest counters.
    Stats(ServerArg),
    /// Ask the collector to write a region snapshot.
    Snapshot(SnapshotArgs),
}

#[derive(Args)]
struct ServeArgs {
    /// Slots in the region (M).
    #[arg(long, env = "DART_SLOTS", default_value_t = 1 << 20)]
    slots: usize,
    /// Addresses per key (N).
    #[arg(long, env = "DART_COPIES", default_value_t = 2)]
    copies: u32,
    /// Checksum width in bits (b).
    #[arg(long, env = "DART_CHECKSUM_BITS", default_value_t = 32)]
    checksum_bits: u32,
    /// Value bytes per slot.
    #[arg(long, env = "DART_VALUE_WIDTH", default_value_t = 20)]
    value_width: usize,
    #[arg(long, env = "DART_ADDRESS_SEED", default_value_t = StoreConfig::with_slots(1).address_seed)]
    address_seed: u64,
    #[arg(long, env = "DART_CHECKSUM_SEED", default_value_t = StoreConfig::with_slots(1).checksum_seed)]
    checksum_seed: u64,
    #[arg(long, env = "DART_COLLECTOR_SEED", default_value_t = StoreConfig::with_slots(1).collector_seed)]
    collector_seed: u64,
    /// Collectors in the deployment.
    #[arg(long, env = "DART_NUM_COLLECTORS", default_value_t = 1)]
    num_collectors: u32,
    /// This collector's index.
    #[arg(long, env = "DART_COLLECTOR_ID", default_value_t = 0)]
    collector_id: u32,
    /// Default policy: single, plurality or consensusK.
    #[arg(long, env = "DART_POLICY", default_value = "single")]
    policy: ResolutionPolicy,
    /// Registered region base address (RETH virtual addresses are relative to it).
    #[arg(long, env = "DART_BASE_ADDRESS", default_value_t = 0)]
    base_address: u64,
    #[arg(long, env = "DART_BIND", default_value = "0.0.0.0")]
    bind: IpAddr,
    #[arg(long, env = "DART_REPORT_PORT", default_value_t = 4791)]
    report_port: u16,
    #[arg(long, env = "DART_QUERY_PORT", default_value_t = 4792)]
    query_port: u16,
    /// Default target for snapshot requests.
    #[arg(long, env = "DART_SNAPSHOT_PATH")]
    snapshot_path: Option<PathBuf>,
    /// Start from this snapshot instead of an empty region. Geometry and
    /// seeds come from the snapshot header.
    #[arg(long, env = "DART_RESTORE")]
    restore: Option<PathBuf>,
}

#[derive(Args)]
struct ServerArg {
    /// Collector query endpoint.
    #[arg(long, env = "DART_SERVER", default_value = "127.0.0.1:4792")]
    server: String,
}

#[derive(Args)]
struct QueryArgs {
    #[command(flatten)]
    server: ServerArg,
    /// Key bytes as hex.
    #[arg(long)]
    key: String,
    /// Override the collector's policy.
    #[arg(long)]
    policy: Option<ResolutionPolicy>,
}

#[derive(Args)]
struct SnapshotArgs {
    #[command(flatten)]
    server: ServerArg,
    /// Path on the collector host; defaults to its configured path.
    #[arg(long)]
    path: Option<String>,
}

fn resolve(server: &str) -> Result<SocketAddr> {
    server
        .to_socket_addrs()
        .with_context(|| format!("resolving {server}"))?
        .next()
        .with_context(|| format!("{server} resolved to no address"))
}

fn serve(a: ServeArgs) -> Result<()> {
    let runtime = match &a.restore {
        Some(path) => CollectorRuntime::restore(CollectorId(a.collector_id), path, a.policy)
            .with_context(|| format!("restoring {}", path.display()))?,
        None => {
            let config = StoreConfig {
                slots: a.slots,
                copies: a.copies,
                checksum_bits: a.checksum_bits,
                value_width: a.value_width,
                address_seed: a.address_seed,
                checksum_seed: a.checksum_seed,
                collector_seed: a.collector_seed,
                num_collectors: a.num_collectors,
                policy: a.policy,
            };
            CollectorRuntime::new(CollectorId(a.collector_id), config, a.base_address)?
        }
    };
    if a.collector_id >= runtime.store().config().num_collectors {
        bail!(
            "collector id {} out of range for {} collectors",
            a.collector_id,
            runtime.store().config().num_collectors
        );
    }
    let runtime = match a.snapshot_path {
        Some(p) => runtime.with_snapshot_path(p),
        None => runtime,
    };
    let server = CollectorServer::start(
        Arc::new(runtime),
        SocketAddr::new(a.bind, a.report_port),
        SocketAddr::new(a.bind, a.query_port),
    )
    .context("binding collector endpoints")?;
    println!(
        "collector {} reports udp {} queries tcp {}",
        a.collector_id,
        server.report_addr(),
        server.query_addr()
    );
    server.wait();
    Ok(())
}

fn query(a: QueryArgs) -> Result<()> {
    let key = hex::decode(a.key.trim()).context("key must be hex")?;
    let mut client = CollectorClient::connect(resolve(&a.server.server)?)?;
    let q = client.query(&key, a.policy)?;
    println!("collector: {}", q.collector.0);
    match &q.value {
        Some(v) => println!("status:    value\nvalue:     {}", hex::encode(v)),
        None => println!("status:    empty"),
    }
    println!(
        "matched:   {} of {} slots",
        q.matched_slots,
        q.addresses.len()
    );
    println!("distinct:  {}", q.distinct_values);
    let addrs: Vec<String> = q.addresses.iter().map(u64::to_string).collect();
    println!("addresses: {}", addrs.join(" "));
    Ok(())
}

fn stats(a: ServerArg) -> Result<()> {
    let s = CollectorClient::connect(resolve(&a.server)?)?.stats()?;
    println!("collector {}", s.collector.0);
    println!("received  {}", s.received());
    println!("accepted  {}", s.accepted);
    for r in Reject::ALL {
        println!("rejected  {:<14}{}", r.name(), s.rejected_for(r));
    }
    println!("queries   {}", s.queries);
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Serve(a) => serve(a),
        Command::Query(a) => query(a),
        Command::Stats(a) => stats(a),
        Command::Snapshot(a) => {
            let mut client = CollectorClient::connect(resolve(&a.server.server)?)?;
            let bytes = client.snapshot(a.path.as_deref())?;
            println!("snapshot written: {bytes} bytes");
            Ok(())
        }
    }
}
