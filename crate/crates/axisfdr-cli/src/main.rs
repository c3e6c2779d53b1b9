//! Command-line front end for the axial-difference FDR pipeline.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical or fit
//! failure. `AXISFDR_THREADS` caps the worker count.

mod config;
mod pipeline;
mod report;
mod simulate;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::{PipelineArgs, PipelineConfig};
use report::AnalysisReport;
use simulate::ScenarioArgs;

#[derive(Parser)]
#[command(
    name = "axisfdr",
    version,
    about = "Group differences between axial direction volumes with FDR control"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic direction volumes and a truth mask.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the per-voxel statistic map.
    Teststat {
        #[arg(long = "group1", required = true)]
        group1: Vec<PathBuf>,
        #[arg(long = "group2", required = true)]
        group2: Vec<PathBuf>,
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Transform to a chi-square scale with this many degrees of
        /// freedom; omit to keep the raw F scale.
        #[arg(long)]
        target_df: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Box-smooth a scalar volume.
    Smooth {
        /// Input .svol file.
        input: PathBuf,
        /// Odd kernel size.
        #[arg(long, default_value_t = 5)]
        smooth: usize,
        /// Output .svol file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the empirical null and estimate FDR curves for a statistic map.
    Fdr {
        /// Statistic volume (.svol).
        stat: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, default_value_t = axisfdr::null::DEFAULT_BIN_WIDTH)]
        bin_width: f64,
        #[arg(long, default_value_t = 0.9)]
        fit_upper: f64,
        #[arg(long, default_value_t = 2.0)]
        target_df: f64,
        #[arg(long = "alpha", default_values_t = [0.2, 0.05, 0.01])]
        alpha: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster the voxels above a threshold.
    Cluster {
        /// Statistic volume (.svol).
        stat: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full analysis pipeline.
    Pipeline {
        #[command(flatten)]
        args: PipelineArgs,
    },
    /// Simulate, then analyze across kernel sizes and FDR levels.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Kernel sizes (odd, repeatable).
        #[arg(long = "smooth", default_values_t = [1usize, 3, 5])]
        b_values: Vec<usize>,
        #[arg(long = "alpha", default_values_t = [0.2, 0.05, 0.01])]
        alpha: Vec<f64>,
        #[arg(long, default_value_t = axisfdr::null::DEFAULT_BIN_WIDTH)]
        bin_width: f64,
        #[arg(long, default_value_t = 0.9)]
        fit_upper: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the summary table of a saved report.
    Report {
        /// report.json produced by `pipeline`.
        report: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}

fn configure_threads() {
    if let Ok(text) = std::env::var("AXISFDR_THREADS") {
        if let Ok(n) = text.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { scenario, out } => simulate::cmd_simulate(&scenario, &out),
        Command::Teststat { group1, group2, mask, target_df, out } => {
            let group1 = config::expand_inputs(&group1)?;
            let group2 = config::expand_inputs(&group2)?;
            pipeline::cmd_teststat(&group1, &group2, mask.as_deref(), target_df, &out)
        }
        Command::Smooth { input, smooth, out } => pipeline::cmd_smooth(&input, smooth, &out),
        Command::Fdr { stat, mask, bin_width, fit_upper, target_df, alpha, out } => {
            pipeline::cmd_fdr(&stat, mask.as_deref(), bin_width, fit_upper, target_df, &alpha, &out)
        }
        Command::Cluster { stat, mask, threshold, out } => {
            pipeline::cmd_cluster(&stat, mask.as_deref(), threshold, &out)
        }
        Command::Pipeline { args } => {
            let config = PipelineConfig::resolve(&args)?;
            let report = pipeline::run_pipeline(&config)?;
            report.render(&mut std::io::stdout())?;
            Ok(())
        }
        Command::Sweep { scenario, b_values, alpha, bin_width, fit_upper, out } => {
            simulate::cmd_sweep(&scenario, &b_values, &alpha, bin_width, fit_upper, &out)
        }
        Command::Report { report } => {
            let report = AnalysisReport::load(&report)?;
            report.render(&mut std::io::stdout())?;
            Ok(())
        }
    }
}

/// Maps failures onto the documented exit codes: numerical/fit trouble is
/// 4, everything else (I/O, format, configuration) is 3.
fn classify(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(sim) = cause.downcast_ref::<axisfdr::sim::SimError>() {
            return match sim {
                axisfdr::sim::SimError::InvalidSpec(_) | axisfdr::sim::SimError::Volume(_) => 3,
                _ => 4,
            };
        }
        if cause.downcast_ref::<axisfdr::null::NullError>().is_some()
            || cause.downcast_ref::<axisfdr::special::SpecialError>().is_some()
            || cause.downcast_ref::<axisfdr::stats::StatError>().is_some()
            || cause.downcast_ref::<axisfdr::watson::WatsonError>().is_some()
        {
            return 4;
        }
    }
    3
}
