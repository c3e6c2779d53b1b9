//! Pipeline configuration: a declarative TOML file plus flag overrides.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum NullMode {
    Theoretical,
    Empirical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum P0Mode {
    /// Use the fitted null fraction (clamped into (0, 1]).
    Fit,
    /// Fix the null fraction at 1 (conservative).
    One,
}

/// Fully resolved pipeline configuration. Defaults follow the analysis
/// conventions: 0.2-wide bins, fitting up to the 0.9 histogram quantile,
/// chi-square(2) target scale, no smoothing, levels 0.2 / 0.05 / 0.01.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub group1: Vec<PathBuf>,
    pub group2: Vec<PathBuf>,
    pub mask: Option<PathBuf>,
    pub target_df: f64,
    pub bin_width: f64,
    pub fit_upper: f64,
    pub smooth: usize,
    pub alpha: Vec<f64>,
    pub null: NullMode,
    pub p0: P0Mode,
    pub seed: u64,
    pub out: PathBuf,
}

/// The optional TOML file mirrors `PipelineConfig` with every field
/// optional; flags override file values.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub group1: Option<Vec<PathBuf>>,
    pub group2: Option<Vec<PathBuf>>,
    pub mask: Option<PathBuf>,
    pub target_df: Option<f64>,
    pub bin_width: Option<f64>,
    pub fit_upper: Option<f64>,
    pub smooth: Option<usize>,
    pub alpha: Option<Vec<f64>>,
    pub null: Option<NullMode>,
    pub p0: Option<P0Mode>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config file {}", path.display()))
    }
}

/// Flag-level overrides collected by clap.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct PipelineArgs {
    /// Config file with the same fields as the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// First-group input: a .dvol file or a directory of them (repeatable).
    #[arg(long = "group1")]
    pub group1: Vec<PathBuf>,
    /// Second-group input: a .dvol file or a directory of them (repeatable).
    #[arg(long = "group2")]
    pub group2: Vec<PathBuf>,
    /// Search-region mask (.mvol); defaults to every voxel.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Degrees of freedom of the chi-square target scale.
    #[arg(long)]
    pub target_df: Option<f64>,
    /// Histogram bin width.
    #[arg(long)]
    pub bin_width: Option<f64>,
    /// Histogram quantile bounding the null-fit interval.
    #[arg(long)]
    pub fit_upper: Option<f64>,
    /// Box-kernel size (odd; 1 disables smoothing).
    #[arg(long)]
    pub smooth: Option<usize>,
    /// FDR level (repeatable).
    #[arg(long = "alpha")]
    pub alpha: Vec<f64>,
    /// Null model for threshold selection.
    #[arg(long, value_enum)]
    pub null: Option<NullMode>,
    /// Null-fraction handling.
    #[arg(long, value_enum)]
    pub p0: Option<P0Mode>,
    /// Seed recorded in the report (the analysis itself is deterministic).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn resolve(args: &PipelineArgs) -> Result<Self> {
        let file = match &args.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let group1 = if args.group1.is_empty() {
            file.group1.unwrap_or_default()
        } else {
            args.group1.clone()
        };
        let group2 = if args.group2.is_empty() {
            file.group2.unwrap_or_default()
        } else {
            args.group2.clone()
        };
        let alpha = if args.alpha.is_empty() {
            file.alpha.unwrap_or_else(|| vec![0.2, 0.05, 0.01])
        } else {
            args.alpha.clone()
        };
        let config = PipelineConfig {
            group1: expand_inputs(&group1).context("resolving --group1")?,
            group2: expand_inputs(&group2).context("resolving --group2")?,
            mask: args.mask.clone().or(file.mask),
            target_df: args.target_df.or(file.target_df).unwrap_or(2.0),
            bin_width: args.bin_width.or(file.bin_width).unwrap_or(axisfdr::null::DEFAULT_BIN_WIDTH),
            fit_upper: args.fit_upper.or(file.fit_upper).unwrap_or(0.9),
            smooth: args.smooth.or(file.smooth).unwrap_or(1),
            alpha,
            null: args.null.or(file.null).unwrap_or(NullMode::Empirical),
            p0: args.p0.or(file.p0).unwrap_or(P0Mode::Fit),
            seed: args.seed.or(file.seed).unwrap_or(0),
            out: args
                .out
                .clone()
                .or(file.out)
                .unwrap_or_else(|| PathBuf::from("axisfdr-out")),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.group1.is_empty() || self.group2.is_empty() {
            bail!("both --group1 and --group2 need at least one .dvol input");
        }
        if self.smooth % 2 == 0 {
            bail!("--smooth must be odd, got {}", self.smooth);
        }
        if self.alpha.is_empty() || self.alpha.iter().any(|a| !(0.0 < *a && *a < 1.0)) {
            bail!("every --alpha must lie in (0, 1)");
        }
        if !(self.bin_width > 0.0) {
            bail!("--bin-width must be positive");
        }
        if !(0.0 < self.fit_upper && self.fit_upper <= 1.0) {
            bail!("--fit-upper must lie in (0, 1]");
        }
        if !(self.target_df > 0.0) {
            bail!("--target-df must be positive");
        }
        Ok(())
    }

    /// Stable digest of the configuration for report provenance.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = serde_json::to_vec(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(&canonical);
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Expands each input path: directories become their sorted `.dvol`
/// members, files pass through.
pub fn expand_inputs(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut members: Vec<PathBuf> = fs::read_dir(path)
                .with_context(|| format!("listing directory {}", path.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "dvol"))
                .collect();
            members.sort();
            if members.is_empty() {
                bail!("directory {} holds no .dvol files", path.display());
            }
            out.extend(members);
        } else {
            out.push(path.clone());
        }
    }
    Ok(out)
}
