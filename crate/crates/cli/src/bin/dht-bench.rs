//! Timed workload runs against the distributed cache: a write phase with
//! full read-back, or a coin-flip read/write blend, over uniform or
//! zipfian keys, on either transport. One stdout line per phase; the same
//! rows go to `--csv` when asked.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use dht_cli::{run_participants, BackendArg, ProtocolArg};
use dht_core::harness::emit_csv_path;
use dht_core::{
    run_mixed, run_write_then_read, DhtConfig, DhtHandle, KeyDistribution, PhasePlan,
    WindowLayout, WorkloadSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WorkloadArg {
    /// Write --ops pairs per participant, barrier, read them all back.
    Wtr,
    /// --ops operations per participant, reading with probability
    /// --read-ratio and writing otherwise.
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DistArg {
    Uniform,
    Zipf,
}

/// Benchmark driver for the remote-memory cache.
#[derive(Debug, Parser)]
#[command(name = "dht-bench", version)]
struct Args {
    /// Consistency protocol under test.
    #[arg(long, value_enum)]
    protocol: ProtocolArg,

    /// Transport hosting the participants.
    #[arg(long, value_enum, default_value_t = BackendArg::Threads)]
    backend: BackendArg,

    /// Universe size: threads to spawn, or the process count a sockets
    /// universe waits for.
    #[arg(long, default_value_t = 8)]
    participants: usize,

    /// Buckets per participant window.
    #[arg(long, default_value_t = 4096)]
    buckets: u64,

    /// Key bytes. Benchmark values embed the key for verification, so
    /// --value-size must exceed this by at least 8.
    #[arg(long, default_value_t = 80)]
    key_size: usize,

    /// Value bytes.
    #[arg(long, default_value_t = 104)]
    value_size: usize,

    /// Phase structure.
    #[arg(long, value_enum, default_value_t = WorkloadArg::Wtr)]
    workload: WorkloadArg,

    /// Key distribution.
    #[arg(long, value_enum, default_value_t = DistArg::Uniform)]
    dist: DistArg,

    /// Zipf exponent (used with --dist zipf).
    #[arg(long, default_value_t = 0.99)]
    zipf_skew: f64,

    /// Zipf draws integers from [1, range] (used with --dist zipf).
    #[arg(long, default_value_t = 712_500)]
    zipf_range: u64,

    /// Operations (for wtr: pairs) per participant.
    #[arg(long, default_value_t = 100_000)]
    ops: u64,

    /// Fraction of mixed operations that read.
    #[arg(long, default_value_t = 0.95)]
    read_ratio: f64,

    /// Base RNG seed; participant i draws from seed + i.
    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Write header plus one row per phase here (participant 0 only).
    #[arg(long)]
    csv: Option<PathBuf>,

    /// Sockets: host the universe rendezvous on this address. Port 0
    /// picks a free port; the bound address is printed either way.
    #[arg(long, conflicts_with = "connect")]
    listen: Option<SocketAddr>,

    /// Sockets: join the rendezvous at this address.
    #[arg(long)]
    connect: Option<SocketAddr>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("dht-bench: {err}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: &Args) -> Result<(), Box<dyn std::error::Error>> {
    let cfg = DhtConfig {
        protocol: args.protocol.into(),
        key_size: args.key_size,
        value_size: args.value_size,
        buckets: args.buckets,
    };
    let distribution = match args.dist {
        DistArg::Uniform => KeyDistribution::Uniform,
        DistArg::Zipf => KeyDistribution::Zipf { skew: args.zipf_skew, range: args.zipf_range },
    };
    let plan = match args.workload {
        WorkloadArg::Wtr => PhasePlan::WriteThenRead { count: args.ops },
        WorkloadArg::Mixed => PhasePlan::Mixed { ops: args.ops, read_ratio: args.read_ratio },
    };
    let spec = WorkloadSpec { distribution, plan, seed: args.seed };
    spec.validate()?; // reject bad parameters before any universe forms
    let backend = args.backend.kind();
    let window = WindowLayout::for_bench(&cfg).window_size;

    let results = run_participants(
        args.backend,
        args.participants,
        window,
        args.listen,
        args.connect,
        |rma| {
            let mut dht = DhtHandle::create(rma.clone(), cfg)?;
            let rows = match spec.plan {
                PhasePlan::WriteThenRead { .. } => {
                    run_write_then_read(&rma, &mut dht, &spec, backend)?.map(|(w, r)| vec![w, r])
                }
                PhasePlan::Mixed { .. } => {
                    run_mixed(&rma, &mut dht, &spec, backend)?.map(|m| vec![m])
                }
            };
            dht.free()?;
            Ok(rows)
        },
    )?;
    let results: Vec<_> = results.into_iter().flatten().collect();

    for row in &results {
        println!(
            "protocol={} backend={} participants={} phase={} dist={} ops={} seconds={:.3} \
             ops_per_sec={:.0} misses={} mismatches={} invalidations={} evictions={}",
            row.protocol.name(),
            row.backend.name(),
            row.participants,
            row.phase,
            row.distribution,
            row.ops,
            row.seconds,
            row.ops_per_sec,
            row.misses,
            row.mismatches,
            row.invalidations,
            row.evictions,
        );
    }
    if let Some(path) = &args.csv {
        if !results.is_empty() {
            emit_csv_path(&results, path)?;
        }
    }
    Ok(())
}
