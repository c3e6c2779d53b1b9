//! Machine-readable analysis report plus its CSV and console renderings.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use axisfdr::null::{EmpiricalNullFit, FdrCurve, NullSource};
use axisfdr::stats::VoxelDefect;
use axisfdr::volume::GridGeometry;

use crate::config::PipelineConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlphaResult {
    pub alpha: f64,
    pub u_alpha: Option<f64>,
    pub discoveries: usize,
    pub n_clusters: usize,
    /// Cluster sizes in decreasing order.
    pub cluster_sizes: Vec<usize>,
    /// File name of the discovery mask, relative to the report.
    pub discovery_mask: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HistogramDump {
    pub bin_width: f64,
    pub lower_edge: f64,
    pub counts: Vec<u64>,
    pub total: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurveDump {
    pub source: NullSource,
    pub p0: f64,
    pub thresholds: Vec<f64>,
    pub fdr: Vec<f64>,
}

impl CurveDump {
    pub fn from_curve(curve: &FdrCurve) -> Self {
        CurveDump {
            source: curve.source,
            p0: curve.p0,
            thresholds: curve.thresholds().to_vec(),
            fdr: curve.fdr().to_vec(),
        }
    }
}

/// Everything the pipeline produced, fully determined by inputs + config.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: PipelineConfig,
    pub geometry: GridGeometry,
    pub group_sizes: [usize; 2],
    pub mask_size_input: usize,
    pub mask_size_effective: usize,
    pub smoothing_b: usize,
    pub defects: Vec<VoxelDefect>,
    pub low_concentration_voxels: usize,
    pub null_mode_used: NullSource,
    pub fit: Option<EmpiricalNullFit>,
    pub fit_error: Option<String>,
    pub p0_used: f64,
    pub histogram: HistogramDump,
    pub curves: Vec<CurveDump>,
    pub results: Vec<AlphaResult>,
    pub warnings: Vec<String>,
}

impl AnalysisReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).with_context(|| format!("writing {}", path.display()))?;
        serde_json::to_writer_pretty(file, self)
            .with_context(|| format!("serializing {}", path.display()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let report: AnalysisReport = serde_json::from_reader(file)
            .with_context(|| format!("parsing {}", path.display()))?;
        if report.schema_version != SCHEMA_VERSION {
            bail!(
                "report schema version {} does not match this binary's {}",
                report.schema_version,
                SCHEMA_VERSION
            );
        }
        Ok(report)
    }

    /// Summary rows in the sweep-table layout, one per level.
    pub fn write_table_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)
            .with_context(|| format!("writing {}", path.display()))?;
        w.write_record([
            "b", "N", "p0_hat", "a_hat", "nu_hat", "T90", "alpha", "u_alpha", "R",
            "n_clusters", "largest_sizes",
        ])?;
        for r in &self.results {
            let mut sizes = r.cluster_sizes.clone();
            sizes.truncate(3);
            let sizes: Vec<String> = sizes.iter().map(|s| s.to_string()).collect();
            w.write_record([
                self.smoothing_b.to_string(),
                self.mask_size_effective.to_string(),
                self.fit.as_ref().map(|f| format!("{:.6}", f.p0)).unwrap_or_default(),
                self.fit.as_ref().map(|f| format!("{:.6}", f.scale)).unwrap_or_default(),
                self.fit.as_ref().map(|f| format!("{:.6}", f.df)).unwrap_or_default(),
                self.fit.as_ref().map(|f| format!("{:.6}", f.fit_limit)).unwrap_or_default(),
                format!("{}", r.alpha),
                r.u_alpha.map(|u| format!("{u:.6}")).unwrap_or_default(),
                r.discoveries.to_string(),
                r.n_clusters.to_string(),
                sizes.join(";"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_histogram_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)
            .with_context(|| format!("writing {}", path.display()))?;
        w.write_record(["bin_lower", "bin_upper", "count"])?;
        for (k, &c) in self.histogram.counts.iter().enumerate() {
            let lo = self.histogram.lower_edge + k as f64 * self.histogram.bin_width;
            w.write_record([
                format!("{lo:.6}"),
                format!("{:.6}", lo + self.histogram.bin_width),
                c.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_curve_csv(curve: &CurveDump, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)
            .with_context(|| format!("writing {}", path.display()))?;
        w.write_record(["threshold", "fdr"])?;
        for (u, f) in curve.thresholds.iter().zip(&curve.fdr) {
            w.write_record([format!("{u:.9}"), format!("{f:.9}")])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Console rendering: the summary table plus per-level cluster lines.
    pub fn render(&self, out: &mut impl Write) -> Result<()> {
        writeln!(
            out,
            "analysis over {} voxels (input mask {}, b = {}), null = {:?}, p0 = {:.4}",
            self.mask_size_effective,
            self.mask_size_input,
            self.smoothing_b,
            self.null_mode_used,
            self.p0_used
        )?;
        if let Some(fit) = &self.fit {
            writeln!(
                out,
                "empirical null: a = {:.4}, nu = {:.3}, p0 = {:.4} (raw {:.4}), T90 = {:.3}",
                fit.scale, fit.df, fit.p0, fit.p0_raw, fit.fit_limit
            )?;
        }
        if let Some(err) = &self.fit_error {
            writeln!(out, "empirical-null fit failed: {err}")?;
        }
        for w in &self.warnings {
            writeln!(out, "warning: {w}")?;
        }
        writeln!(
            out,
            "{:>6} {:>8} {:>10} {:>8} {:>10} {:>10}",
            "alpha", "u_alpha", "voxels", "clusters", "largest", "mask_file"
        )?;
        for r in &self.results {
            let mut top = r.cluster_sizes.clone();
            top.truncate(3);
            let largest = if top.is_empty() {
                "-".into()
            } else {
                top.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(";")
            };
            writeln!(
                out,
                "{:>6} {:>8} {:>10} {:>8} {:>10} {:>10}",
                r.alpha,
                r.u_alpha.map(|u| format!("{u:.3}")).unwrap_or_else(|| "-".into()),
                if r.u_alpha.is_some() {
                    format!("{} interesting voxels", r.discoveries)
                } else {
                    "0 interesting voxels".into()
                },
                r.n_clusters,
                largest,
                r.discovery_mask.clone().unwrap_or_else(|| "-".into()),
            )?;
        }
        Ok(())
    }
}
