use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use flaf::experiment::{
    analyze_corr, load_preset, preset, run_experiment, write_corr_csv, write_outputs, CorrAnalysis,
    ExperimentConfig, OUTPUT_DIR_ENV, PRESETS,
};
use flaf::Result;

/// Benchmark runner for functional-link adaptive filters.
#[derive(Parser)]
#[command(name = "flaf-bench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a TOML config or a bundled preset.
    Run(RunArgs),
    /// Estimate per-bin partition correlations of white noise.
    AnalyzeCorr(CorrArgs),
    /// Inspect bundled presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Path to the experiment config.
    #[arg(required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Name of a bundled preset instead of a config file.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory (overrides the config and the environment).
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct CorrArgs {
    /// Filter length M.
    #[arg(long, default_value_t = 64)]
    filter_len: usize,
    /// Block length L (must divide M).
    #[arg(long, default_value_t = 64)]
    block_len: usize,
    /// Partition count M_P.
    #[arg(long, default_value_t = 4)]
    partitions: usize,
    /// Comma-separated bin indices.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5,6,7")]
    bins: Vec<usize>,
    #[arg(long, default_value_t = 5000)]
    blocks: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    /// Print a preset's TOML.
    Show { name: String },
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => ExperimentConfig::from_file(path)?,
        (None, Some(name)) => load_preset(name)?,
        (None, None) => unreachable!("clap enforces one source"),
    };
    if let Some(dir) = args.output_dir {
        cfg.output_dir = dir;
    } else if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
        cfg.output_dir = dir.into();
    }
    let out = run_experiment(&cfg)?;
    write_outputs(&cfg.output_dir, &out, cfg.report_ops)?;

    println!("{:<24} {:>10} {:>10} {:>12} {:>12} {:>9}", "label", "erle_db", "full_db", "mults/smp", "exp/smp", "time_s");
    for r in &out.reports {
        let flag = if r.diverged_at.is_some() { " diverged" } else { "" };
        println!(
            "{:<24} {:>10.2} {:>10.2} {:>12.1} {:>12.1} {:>9.3}{flag}",
            r.label,
            r.erle.mean_db,
            r.erle.mean_db_full,
            r.mults_per_sample,
            r.expansion_mults_per_sample,
            r.elapsed.as_secs_f64()
        );
    }
    println!("wrote {}", cfg.output_dir.display());
    Ok(())
}

fn corr(args: CorrArgs) -> Result<()> {
    let spec = CorrAnalysis {
        filter_len: args.filter_len,
        hop: args.block_len,
        partitions: args.partitions,
        n_blocks: args.blocks,
        seed: args.seed,
    };
    let reports = analyze_corr(&spec, &args.bins)?;
    match args.out {
        Some(path) => write_corr_csv(std::fs::File::create(path)?, &spec, &reports),
        None => write_corr_csv(io::stdout().lock(), &spec, &reports),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::AnalyzeCorr(a) => corr(a),
        Command::Presets { action: PresetAction::List } => {
            for (name, text) in PRESETS {
                let about = text.lines().next().unwrap_or("").trim_start_matches('#').trim();
                println!("{name:<14} {about}");
            }
            Ok(())
        }
        Command::Presets { action: PresetAction::Show { name } } => match preset(&name) {
            Some(text) => {
                print!("{text}");
                Ok(())
            }
            None => Err(flaf::FlafError::InvalidConfig(format!("unknown preset `{name}`"))),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
