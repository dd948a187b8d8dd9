//! Experiment runner for graph-network transfer learning on molecules.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use transmol_cli::commands::{self, write_report};
use transmol_cli::config::ExperimentConfig;
use transmol_cli::report::RunReport;

#[derive(Parser)]
#[command(
    name = "transmol",
    version,
    about = "Train, transfer, and benchmark graph networks for molecular property prediction"
)]
struct Cli {
    /// Worker threads for experiment cells (0 = automatic).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the configured output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured donor weight archive.
    #[arg(long)]
    donor_archive: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::from_toml_path(&self.config)?;
        config.apply_overrides(
            self.out_dir.clone(),
            self.seed,
            self.donor_archive.clone(),
        );
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Emit a synthetic labeled dataset CSV.
    Generate {
        #[arg(long)]
        n: usize,
        /// donor_default | acceptor_related | acceptor_unrelated
        #[arg(long)]
        formula: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 12)]
        max_heavy_atoms: usize,
        #[arg(long, default_value_t = 0.0)]
        noise_sd: f64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Compute descriptors or fingerprints for a dataset CSV.
    Featurize {
        #[arg(long)]
        input: PathBuf,
        /// descriptors | fingerprints
        #[arg(long, default_value = "descriptors")]
        what: String,
        #[arg(long, default_value_t = 2)]
        radius: u32,
        #[arg(long, default_value_t = 2048)]
        bits: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Train the donor model and write its weight archive.
    TrainDonor(ConfigArgs),
    /// Three-way comparison: pure GCNN vs transfer vs random forest.
    Compare(ConfigArgs),
    /// Acceptor quality as a function of donor dataset size.
    DonorSizeSweep(ConfigArgs),
    /// Sum-of-places ranking of splitting properties.
    RankSplitters(ConfigArgs),
    /// Applicability-domain coverage under the union rule.
    AdReport(ConfigArgs),
    /// Joint fingerprint PCA of two datasets, with optional box filtering.
    Pca {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Axis-aligned box "xmin,xmax,ymin,ymax" to cut sub-datasets.
        #[arg(long, value_parser = parse_box, id = "box")]
        bounds: Option<[f64; 4]>,
        /// Subsample cap for box-filtered datasets.
        #[arg(long, default_value_t = 10_000)]
        box_max_n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

fn parse_box(text: &str) -> Result<[f64; 4], String> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 4 {
        return Err("expected xmin,xmax,ymin,ymax".into());
    }
    let mut out = [0.0; 4];
    for (slot, part) in out.iter_mut().zip(parts) {
        *slot = part
            .trim()
            .parse::<f64>()
            .map_err(|e| format!("{part:?}: {e}"))?;
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
        {
            eprintln!("error: building thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(cli.command) {
        Ok(report) => {
            if report.failed_cells > 0 {
                eprintln!("{} cell(s) failed", report.failed_cells);
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<RunReport> {
    match command {
        Command::Generate {
            n,
            formula,
            seed,
            max_heavy_atoms,
            noise_sd,
            out,
            out_dir,
        } => {
            let args = commands::generate::GenerateArgs {
                n,
                formula,
                seed,
                max_heavy_atoms,
                noise_sd,
                out,
            };
            let report = commands::generate::run(&args, &out_dir)?;
            finish(report, &out_dir)
        }
        Command::Featurize {
            input,
            what,
            radius,
            bits,
            out,
            out_dir,
        } => {
            let args = commands::featurize::FeaturizeArgs {
                input,
                what,
                radius,
                bits,
                out,
            };
            let report = commands::featurize::run(&args, &out_dir)?;
            finish(report, &out_dir)
        }
        Command::TrainDonor(config_args) => {
            let config = config_args.load()?;
            let out_dir = config.out_dir();
            let outcome = commands::train_donor::run(&config)?;
            println!("donor archive: {}", outcome.archive_path.display());
            finish(outcome.report, &out_dir)
        }
        Command::Compare(config_args) => {
            let config = config_args.load()?;
            let out_dir = config.out_dir();
            let report = commands::compare::run(&config)?;
            finish(report, &out_dir)
        }
        Command::DonorSizeSweep(config_args) => {
            let config = config_args.load()?;
            let out_dir = config.out_dir();
            let report = commands::donor_size_sweep::run(&config)?;
            finish(report, &out_dir)
        }
        Command::RankSplitters(config_args) => {
            let config = config_args.load()?;
            let out_dir = config.out_dir();
            let report = commands::rank_splitters::run(&config)?;
            finish(report, &out_dir)
        }
        Command::AdReport(config_args) => {
            let config = config_args.load()?;
            let out_dir = config.out_dir();
            let report = commands::ad_report::run(&config)?;
            finish(report, &out_dir)
        }
        Command::Pca {
            a,
            b,
            bounds,
            box_max_n,
            seed,
            out_dir,
        } => {
            let args = commands::pca::PcaArgs {
                a,
                b,
                bounds,
                box_max_n,
                seed,
            };
            let report = commands::pca::run(&args, &out_dir)?;
            finish(report, &out_dir)
        }
    }
}

fn finish(report: RunReport, out_dir: &std::path::Path) -> Result<RunReport> {
    commands::ensure_dir(out_dir).context("creating output directory")?;
    let (report, path) = write_report(report, out_dir)?;
    println!("report: {}", path.display());
    Ok(report)
}
