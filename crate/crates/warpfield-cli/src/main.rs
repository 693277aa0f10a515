//! Command-line front-end: synth, fit, predict, compare.
//!
//! Exit codes: 0 success, 1 runtime/numerical failure, 2 usage or
//! configuration error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use warpfield::data::{export_csv, ingest_csv, parse_synth_config, synth_generate};
use warpfield::density::write_raster_text;
use warpfield::error::Error;
use warpfield::estimation::{
    fit_weekly_cycle, parse_fit_config, predict_period, read_cycle, write_cycle, FitConfig,
    FitWindow,
};
use warpfield::evaluation::{paired_sign_test, run_comparison, Method};

#[derive(Parser)]
#[command(
    name = "warpfield",
    about = "Kernel-warped spatio-temporal demand density prediction",
    version
)]
struct Cli {
    /// Worker threads (default: available parallelism; env WARPFIELD_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic event CSV from a city config.
    Synth(SynthArgs),
    /// Fit a weekly parameter cycle from an event CSV.
    Fit(FitArgs),
    /// Predict the density raster of one period using a fitted cycle.
    Predict(PredictArgs),
    /// Compare prediction methods over a test period range.
    Compare(CompareArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Synthetic-city config file (key = value).
    #[arg(long)]
    config: PathBuf,
    /// Output events CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FitArgs {
    /// Events CSV.
    #[arg(long)]
    events: PathBuf,
    /// Run config file (key = value); defaults used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// First period of the fit window (default 1).
    #[arg(long)]
    from: Option<u32>,
    /// Last period of the fit window (default: last period in the data).
    #[arg(long)]
    to: Option<u32>,
    /// Output cycle path.
    #[arg(long)]
    out: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    events: PathBuf,
    /// Fitted cycle file.
    #[arg(long)]
    cycle: PathBuf,
    /// Target period.
    #[arg(long)]
    period: u32,
    /// Output raster path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    cycle: PathBuf,
    /// First test period.
    #[arg(long)]
    from: u32,
    /// Last test period.
    #[arg(long)]
    to: u32,
    /// Comma-separated methods: medic,kde,warp.
    #[arg(long, default_value = "medic,kde,warp")]
    methods: String,
    /// Output directory for metric CSVs and the summary table.
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads(cli.threads);
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn init_threads(flag: Option<usize>) {
    let n = flag.or_else(|| {
        std::env::var("WARPFIELD_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        // Errors only when a global pool already exists; fine to ignore.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Synth(args) => cmd_synth(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Compare(args) => cmd_compare(args),
    }
}

fn cmd_synth(args: SynthArgs) -> Result<(), Error> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut cfg = parse_synth_config(&text)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let store = synth_generate(&cfg)?;
    std::fs::write(&args.out, export_csv(&store))?;
    eprintln!(
        "wrote {} events over {} periods to {}",
        store.len(),
        cfg.weeks * 168,
        args.out.display()
    );
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<(), Error> {
    let store = ingest_csv(&args.events)?;
    let mut cfg = match &args.config {
        Some(path) => parse_fit_config(&std::fs::read_to_string(path)?)?,
        None => FitConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let window = FitWindow::new(
        args.from.unwrap_or(1),
        args.to.unwrap_or_else(|| store.max_period()),
    )?;
    let cycle = fit_weekly_cycle(&store, window, &cfg)?;
    std::fs::write(&args.out, write_cycle(&cycle))?;
    let fitted = cycle.plans.iter().filter(|p| !p.fallback).count();
    eprintln!(
        "fitted weekly cycle ({fitted}/168 slots with data) to {}",
        args.out.display()
    );
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<(), Error> {
    let store = ingest_csv(&args.events)?;
    let cycle = read_cycle(&std::fs::read_to_string(&args.cycle)?)?;
    let prediction = predict_period(&store, args.period, &cycle)?;
    std::fs::write(&args.out, write_raster_text(&prediction.raster))?;
    if prediction.uniform_fallback {
        eprintln!(
            "warning: no labeled data for period {}; wrote uniform density",
            args.period
        );
    }
    eprintln!("wrote raster to {}", args.out.display());
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), Error> {
    let store = ingest_csv(&args.events)?;
    let cycle = read_cycle(&std::fs::read_to_string(&args.cycle)?)?;
    let methods = Method::parse_list(&args.methods)?;
    if args.to < args.from {
        return Err(Error::Validation(format!(
            "invalid test range [{}, {}]",
            args.from, args.to
        )));
    }
    let periods: Vec<u32> = (args.from..=args.to).collect();
    let comparison = run_comparison(&store, &cycle, &periods, &methods)?;

    std::fs::create_dir_all(&args.out_dir)?;
    for report in &comparison.reports {
        let path = args
            .out_dir
            .join(format!("metrics_{}.csv", report.method.label()));
        std::fs::write(path, report.to_csv())?;
    }
    let mut summary = comparison.summary_table();
    if let (Some(warp), Some(kde)) = (
        comparison.report_for(Method::Warp),
        comparison.report_for(Method::Kde),
    ) {
        let diffs: Vec<f64> = warp
            .metrics
            .iter()
            .zip(kde.metrics.iter())
            .filter_map(|(w, k)| match (w.als, k.als) {
                (Some(a), Some(b)) => Some(a - b),
                _ => None,
            })
            .collect();
        let test = paired_sign_test(&diffs);
        summary.push_str(&format!(
            "sign test (ALS, warp vs kde): {} wins / {} losses / {} ties, p = {:.3e}\n",
            test.wins, test.losses, test.ties, test.p_value
        ));
    }
    if !comparison.skipped.is_empty() {
        summary.push_str(&format!("skipped periods: {}\n", comparison.skipped.len()));
    }
    std::fs::write(args.out_dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}
