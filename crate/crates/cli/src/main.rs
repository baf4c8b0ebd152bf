use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use hybridalpha::bench::{run_bench, write_bench_csv, write_hardware_metadata, BenchOp, BenchSpec};
use hybridalpha::group::GroupParams;
use hybridalpha::mife::NonceMode;
use hybridalpha::protocol::{Baseline, RunReport, Scenario};
use hybridalpha::Error;

#[derive(Parser)]
#[command(name = "hybridalpha", version, about = "Encrypted federated averaging simulator and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a training scenario and write per-epoch metrics.
    Simulate(SimulateArgs),
    /// Time encryption and decryption over participant and precision sweeps.
    Bench(BenchArgs),
    /// Generate group parameters and save them as TOML.
    Group(GroupArgs),
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// Scenario file (TOML). Defaults are used when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    precision: Option<u32>,
    #[arg(long)]
    participants: Option<usize>,
    #[arg(long)]
    mode: Option<NonceMode>,
    /// none | local-dp | no-dp | dp
    #[arg(long)]
    baseline: Option<Baseline>,
    /// Run all four baselines, each into its own subdirectory of --out.
    #[arg(long, conflicts_with = "baseline")]
    all_baselines: bool,
    #[arg(long)]
    epochs: Option<u32>,
}

#[derive(clap::Args)]
struct BenchArgs {
    #[arg(long, default_value = "bench-out")]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
    participants: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    dim: usize,
    #[arg(long, value_delimiter = ',', default_value = "6")]
    precision: Vec<u32>,
    #[arg(long, default_value = "fresh")]
    mode: NonceMode,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    /// enc | dec | dlog | end-to-end
    #[arg(long, default_value = "end-to-end", value_parser = parse_op)]
    op: BenchOp,
    /// Modulus size of a freshly generated group.
    #[arg(long, default_value_t = 512)]
    bits: u32,
    /// Load group parameters instead of generating them.
    #[arg(long)]
    group: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(clap::Args)]
struct GroupArgs {
    #[arg(long, default_value_t = 2048)]
    bits: u32,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_op(s: &str) -> std::result::Result<BenchOp, String> {
    match s {
        "enc" => Ok(BenchOp::Enc),
        "dec" => Ok(BenchOp::Dec),
        "dlog" => Ok(BenchOp::Dlog),
        "end-to-end" => Ok(BenchOp::EndToEnd),
        other => Err(format!("unknown operation `{other}`")),
    }
}

fn write_report(report: &RunReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    report.write_metrics_csv(dir.join("metrics.csv"))?;
    report.write_timings_csv(dir.join("timings.csv"))?;
    report.write_final_model(dir.join("final_model.txt"))?;
    report.write_trace(dir.join("trace.txt"))?;
    Ok(())
}

/// Returns `false` if training failed.
fn simulate(args: SimulateArgs) -> Result<bool> {
    let mut scenario = match &args.scenario {
        Some(path) => Scenario::load(path)?,
        None => Scenario::default(),
    };
    if let Some(s) = args.seed {
        scenario.seed = s;
    }
    if let Some(p) = args.precision {
        scenario.precision = p;
    }
    if let Some(n) = args.participants {
        scenario.participants = n;
    }
    if let Some(m) = args.mode {
        scenario.mode = m;
    }
    if let Some(e) = args.epochs {
        scenario.epochs = e;
    }
    let runs: Vec<(Baseline, PathBuf)> = if args.all_baselines {
        Baseline::ALL.iter().map(|&b| (b, args.out.join(b.name()))).collect()
    } else {
        vec![(args.baseline.unwrap_or(scenario.baseline), args.out.clone())]
    };
    let mut ok = true;
    for (baseline, dir) in runs {
        scenario.baseline = baseline;
        match scenario.run() {
            Ok(report) => {
                write_report(&report, &dir)?;
                let aborted = report.epochs.len() - report.completed_epochs();
                println!(
                    "{baseline}: {} epochs, {aborted} aborted, final F1 {}",
                    report.epochs.len(),
                    report.last_f1().map_or("n/a".into(), |f| format!("{f:.4}"))
                );
            }
            Err(Error::TrainingFailed(report)) => {
                write_report(&report, &dir)?;
                eprintln!("{baseline}: training failed, quorum was never reached");
                ok = false;
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(ok)
}

fn bench(args: BenchArgs) -> Result<()> {
    let params = match &args.group {
        Some(path) => GroupParams::load(path)?,
        None => GroupParams::setup(args.bits, Some(args.seed))?,
    };
    let spec = BenchSpec {
        operation: args.op,
        participants: args.participants,
        dim: args.dim,
        precision: args.precision,
        repetitions: args.reps,
        mode: args.mode,
        seed: args.seed,
        ..Default::default()
    };
    let rows = run_bench(&spec, &params)?;
    fs::create_dir_all(&args.out)?;
    write_bench_csv(&rows, args.out.join("bench.csv"))?;
    write_hardware_metadata(args.out.join("hardware.toml"))?;
    for r in &rows {
        println!(
            "n={:>3} dim={} p={} enc_avg={:.4}s dec={:.4}s ct_bytes={}",
            r.participants, r.dim, r.precision, r.enc_avg_s, r.dec_s, r.ct_bytes_initial
        );
    }
    Ok(())
}

fn group(args: GroupArgs) -> Result<()> {
    let params = GroupParams::setup(args.bits, args.seed)?;
    params.save(&args.out)?;
    println!("wrote {}-bit group to {}", params.security_bits(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Bench(a) => bench(a).map(|_| true),
        Command::Group(a) => group(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
