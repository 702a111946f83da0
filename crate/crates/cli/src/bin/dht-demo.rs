//! Walks a concentration front across a 1-D grid while caching an
//! artificially expensive per-cell kernel in the shared table, then
//! reports what the cache saved. Run once normally and once with
//! --no-cache to see the payoff.

use std::fs::File;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;
use dht_cli::{run_participants, BackendArg, ProtocolArg};
use dht_core::surrogate::{emit_demo_csv, run_demo, DemoParams, StepStat};

/// Surrogate-cache demonstration on a 1-D advection problem.
#[derive(Debug, Parser)]
#[command(name = "dht-demo", version)]
struct Args {
    /// Consistency protocol backing the cache.
    #[arg(long, value_enum, default_value_t = ProtocolArg::Lockfree)]
    protocol: ProtocolArg,

    /// Transport hosting the participants.
    #[arg(long, value_enum, default_value_t = BackendArg::Threads)]
    backend: BackendArg,

    /// Universe size: threads to spawn, or the process count a sockets
    /// universe waits for.
    #[arg(long, default_value_t = 8)]
    participants: usize,

    /// Cells in the grid, split contiguously across participants.
    #[arg(long, default_value_t = 4096)]
    grid_width: usize,

    /// Advection steps to run.
    #[arg(long, default_value_t = 100)]
    steps: usize,

    /// Significant digits kept when rounding kernel inputs into keys.
    #[arg(long, default_value_t = 4)]
    digits: u32,

    /// Busy-spin cost of one kernel evaluation, in microseconds.
    #[arg(long, default_value_t = 100)]
    kernel_cost_us: u64,

    /// Run the kernel directly every time (uncached baseline timing).
    #[arg(long)]
    no_cache: bool,

    /// Buckets per participant window.
    #[arg(long, default_value_t = 32_768)]
    buckets: u64,

    /// Concentration held at the left boundary; above the initial profile
    /// it drives a front across the grid.
    #[arg(long, default_value_t = 1.0)]
    inject: f64,

    /// Range of the initial concentration profile; 0 starts every cell
    /// identical, larger values give each cell its own starting key.
    #[arg(long, default_value_t = 0.0)]
    initial_spread: f64,

    /// Write per-step hit counts here as CSV (participant 0 only).
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
            eprintln!("dht-demo: {err}");
            ExitCode::FAILURE
        }
    }
}

fn run(args: &Args) -> Result<(), Box<dyn std::error::Error>> {
    let params = DemoParams {
        protocol: args.protocol.into(),
        buckets: args.buckets,
        grid_width: args.grid_width,
        steps: args.steps,
        digits: args.digits,
        kernel_cost: Duration::from_micros(args.kernel_cost_us),
        cached: !args.no_cache,
        inject: args.inject,
        initial_spread: args.initial_spread,
    };
    let window = params.window_layout().window_size;

    let summaries = run_participants(
        args.backend,
        args.participants,
        window,
        args.listen,
        args.connect,
        |rma| run_demo(&rma, &params),
    )?;

    if let Some(summary) = summaries.first() {
        let final_rate = summary.per_step.last().map(StepStat::hit_rate).unwrap_or(0.0);
        println!(
            "protocol={} participants={} grid={} steps={} digits={} cached={} kernel_calls={} \
             hits={} hit_rate={:.4} final_step_hit_rate={:.4} wall_seconds={:.3}",
            summary.protocol.name(),
            summary.participants,
            summary.grid_width,
            summary.steps,
            summary.digits,
            summary.cached,
            summary.kernel_calls,
            summary.hits,
            summary.hit_rate(),
            final_rate,
            summary.wall_seconds,
        );
        if let Some(path) = &args.csv {
            emit_demo_csv(summary, File::create(path)?)?;
        }
    }
    Ok(())
}
