//! End-to-end analysis: statistic map, optional smoothing with mask
//! shrinkage, empirical-null fit, FDR curves, thresholds, discoveries and
//! clusters, with every artifact written to the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use axisfdr::io;
use axisfdr::null::{
    count_discoveries, fdr_curve, fit_empirical_null, observed_grid, select_threshold,
    EmpiricalNullFit, Histogram, NullModel, NullSource,
};
use axisfdr::stats::statistic_map;
use axisfdr::volume::{box_smooth, extract_clusters, shrink_mask, DirectionVolume, Mask};

use crate::config::{NullMode, P0Mode, PipelineConfig};
use crate::report::{AlphaResult, AnalysisReport, CurveDump, HistogramDump, SCHEMA_VERSION};
use crate::svg;

fn load_group(paths: &[PathBuf]) -> Result<Vec<DirectionVolume>> {
    paths.iter().map(|p| Ok(io::read_direction_volume(p)?)).collect()
}

/// Runs the full pipeline and writes `report.json`, `table.csv`,
/// `histogram.csv`, per-null FDR-curve CSVs, a discovery mask per level,
/// and `plot.svg` into the configured output directory.
pub fn run_pipeline(config: &PipelineConfig) -> Result<AnalysisReport> {
    fs::create_dir_all(&config.out)
        .with_context(|| format!("creating output directory {}", config.out.display()))?;
    let mut warnings = Vec::new();

    // stage: input
    let group1 = load_group(&config.group1).context("input stage: group 1")?;
    let group2 = load_group(&config.group2).context("input stage: group 2")?;
    let geometry = *group1
        .first()
        .context("input stage: group 1 is empty")?
        .geometry();
    let user_mask = match &config.mask {
        Some(path) => io::read_mask(path).context("input stage: mask")?,
        None => Mask::all(geometry),
    };
    user_mask
        .geometry()
        .same_grid(&geometry)
        .context("input stage: mask geometry")?;

    // stage: statistic — computed over the full array so smoothing windows
    // can reach data beyond the mask; the mask is reapplied afterwards
    let groups = [group1, group2];
    let group_sizes = [groups[0].len(), groups[1].len()];
    let map = statistic_map(&groups, &Mask::all(geometry), Some(config.target_df))
        .context("statistic stage")?;

    // stage: smoothing
    let smoothed = box_smooth(&map.values, config.smooth).context("smoothing stage")?;
    let analysis_mask = shrink_mask(&user_mask, &smoothed).context("smoothing stage: remask")?;

    // stage: histogram
    let values = smoothed.masked_values(&analysis_mask);
    let hist = Histogram::new(&values, config.bin_width).context("histogram stage")?;

    // stage: null fit (always attempted so the report can show the curve)
    let (fit, fit_error): (Option<EmpiricalNullFit>, Option<String>) =
        match fit_empirical_null(&hist, config.fit_upper) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        };
    let mut null_mode_used = match config.null {
        NullMode::Empirical => NullSource::Empirical,
        NullMode::Theoretical => NullSource::Theoretical,
    };
    if null_mode_used == NullSource::Empirical && fit.is_none() {
        warnings.push(format!(
            "empirical-null fit failed ({}); falling back to the theoretical null",
            fit_error.as_deref().unwrap_or("unknown")
        ));
        null_mode_used = NullSource::Theoretical;
    }
    if null_mode_used == NullSource::Theoretical && config.smooth > 1 {
        warnings.push(
            "no theoretical null exists for smoothed statistics; the chi-square null is only \
             an approximation here"
                .into(),
        );
    }
    let p0_used = match (config.p0, &fit) {
        (P0Mode::One, _) => 1.0,
        (P0Mode::Fit, Some(f)) => f.p0,
        (P0Mode::Fit, None) => {
            warnings.push("p0 requested from the fit but the fit failed; using 1".into());
            1.0
        }
    };

    // stage: FDR curves
    let grid = observed_grid(&values);
    let mut curves = Vec::new();
    let empirical_curve = match &fit {
        Some(f) => {
            let model = NullModel::Empirical(f.clone());
            let p0 = if config.p0 == P0Mode::One { 1.0 } else { f.p0 };
            Some(fdr_curve(&values, &model, p0, &grid).context("FDR stage: empirical curve")?)
        }
        None => None,
    };
    // the theoretical curve describes the unsmoothed statistic only
    let theoretical_curve = if config.smooth == 1 || null_mode_used == NullSource::Theoretical {
        let model = NullModel::Theoretical { df: config.target_df };
        let p0 = if config.p0 == P0Mode::One || fit.is_none() { 1.0 } else { p0_used };
        Some(fdr_curve(&values, &model, p0, &grid).context("FDR stage: theoretical curve")?)
    } else {
        None
    };
    if let Some(c) = &theoretical_curve {
        curves.push(CurveDump::from_curve(c));
    }
    if let Some(c) = &empirical_curve {
        curves.push(CurveDump::from_curve(c));
    }
    let active_curve = match null_mode_used {
        NullSource::Empirical => empirical_curve.as_ref().expect("fit succeeded"),
        NullSource::Theoretical => theoretical_curve.as_ref().expect("always built"),
    };

    // stage: thresholds and discoveries
    let mut results = Vec::new();
    for &alpha in &config.alpha {
        let u_alpha = select_threshold(active_curve, alpha);
        let (discoveries, n_clusters, cluster_sizes, mask_file) = match u_alpha {
            Some(u) => {
                let hits = count_discoveries(&smoothed, &analysis_mask, u);
                let clusters = extract_clusters(&hits.voxels, &geometry);
                let file = format!("discoveries_alpha_{alpha}.mvol");
                let mask = Mask::from_indices(geometry, &hits.voxels)
                    .context("threshold stage: discovery mask")?;
                io::write_mask(&config.out.join(&file), &mask)
                    .context("threshold stage: writing discovery mask")?;
                (hits.count(), clusters.len(), clusters.sizes(), Some(file))
            }
            None => (0, 0, Vec::new(), None),
        };
        results.push(AlphaResult {
            alpha,
            u_alpha,
            discoveries,
            n_clusters,
            cluster_sizes,
            discovery_mask: mask_file,
        });
    }

    let in_mask_defects: Vec<_> = map
        .defects
        .iter()
        .filter(|d| user_mask.contains(d.index))
        .copied()
        .collect();
    let low_concentration_voxels = map
        .low_concentration
        .iter()
        .filter(|&&i| analysis_mask.contains(i))
        .count();

    let report = AnalysisReport {
        schema_version: SCHEMA_VERSION,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config.digest(),
        seed: config.seed,
        config: config.clone(),
        geometry,
        group_sizes,
        mask_size_input: user_mask.count(),
        mask_size_effective: analysis_mask.count(),
        smoothing_b: config.smooth,
        defects: in_mask_defects,
        low_concentration_voxels,
        null_mode_used,
        fit,
        fit_error,
        p0_used,
        histogram: HistogramDump {
            bin_width: hist.bin_width(),
            lower_edge: hist.lower_edge(),
            counts: hist.counts().to_vec(),
            total: hist.total(),
        },
        curves,
        results,
        warnings,
    };

    // stage: outputs
    report.save(&config.out.join("report.json")).context("output stage")?;
    report.write_table_csv(&config.out.join("table.csv")).context("output stage")?;
    report
        .write_histogram_csv(&config.out.join("histogram.csv"))
        .context("output stage")?;
    for curve in &report.curves {
        let name = match curve.source {
            NullSource::Empirical => "fdr_curve_empirical.csv",
            NullSource::Theoretical => "fdr_curve_theoretical.csv",
        };
        AnalysisReport::write_curve_csv(curve, &config.out.join(name)).context("output stage")?;
    }
    io::write_scalar_volume(&config.out.join("statistic.svol"), &smoothed)
        .context("output stage: statistic volume")?;
    io::write_mask(&config.out.join("analysis_mask.mvol"), &analysis_mask)
        .context("output stage: analysis mask")?;
    fs::write(config.out.join("plot.svg"), svg::render(&report)).context("output stage: plot")?;
    Ok(report)
}

/// `teststat`: statistic map only, written as a scalar volume plus the
/// effective mask and a defect list.
pub fn cmd_teststat(
    group1: &[PathBuf],
    group2: &[PathBuf],
    mask: Option<&Path>,
    target_df: Option<f64>,
    out: &Path,
) -> Result<()> {
    fs::create_dir_all(out)?;
    let group1 = load_group(group1).context("input stage: group 1")?;
    let group2 = load_group(group2).context("input stage: group 2")?;
    let geometry = *group1.first().context("group 1 is empty")?.geometry();
    let mask = match mask {
        Some(path) => io::read_mask(path)?,
        None => Mask::all(geometry),
    };
    let map = statistic_map(&[group1, group2], &mask, target_df).context("statistic stage")?;
    io::write_scalar_volume(&out.join("statistic.svol"), &map.values)?;
    io::write_mask(&out.join("effective_mask.mvol"), &map.mask)?;
    let diagnostics = serde_json::json!({
        "defects": map.defects,
        "low_concentration_voxels": map.low_concentration,
    });
    fs::write(out.join("diagnostics.json"), serde_json::to_vec_pretty(&diagnostics)?)?;
    println!(
        "statistic over {} voxels ({} defects) -> {}",
        map.mask.count(),
        map.defects.len(),
        out.display()
    );
    Ok(())
}

/// `smooth`: box-smooth a scalar volume.
pub fn cmd_smooth(input: &Path, b: usize, output: &Path) -> Result<()> {
    let vol = io::read_scalar_volume(input)?;
    let smoothed = box_smooth(&vol, b).context("smoothing stage")?;
    io::write_scalar_volume(output, &smoothed)?;
    println!("smoothed {} with b = {b} -> {}", input.display(), output.display());
    Ok(())
}

/// `fdr`: histogram, null fit and FDR curves for an existing statistic
/// volume.
pub fn cmd_fdr(
    stat: &Path,
    mask: Option<&Path>,
    bin_width: f64,
    fit_upper: f64,
    target_df: f64,
    alphas: &[f64],
    out: &Path,
) -> Result<()> {
    fs::create_dir_all(out)?;
    let vol = io::read_scalar_volume(stat)?;
    let mask = match mask {
        Some(path) => io::read_mask(path)?,
        None => shrink_mask(&Mask::all(*vol.geometry()), &vol)?,
    };
    let values = vol.masked_values(&mask);
    let hist = Histogram::new(&values, bin_width).context("histogram stage")?;
    let fit = fit_empirical_null(&hist, fit_upper).context("null-fit stage")?;
    let grid = observed_grid(&values);
    let empirical =
        fdr_curve(&values, &NullModel::Empirical(fit.clone()), fit.p0, &grid)
            .context("FDR stage")?;
    let theoretical = fdr_curve(&values, &NullModel::Theoretical { df: target_df }, 1.0, &grid)
        .context("FDR stage")?;
    AnalysisReport::write_curve_csv(
        &CurveDump::from_curve(&empirical),
        &out.join("fdr_curve_empirical.csv"),
    )?;
    AnalysisReport::write_curve_csv(
        &CurveDump::from_curve(&theoretical),
        &out.join("fdr_curve_theoretical.csv"),
    )?;
    let thresholds: Vec<_> = alphas
        .iter()
        .map(|&alpha| {
            serde_json::json!({
                "alpha": alpha,
                "u_alpha": select_threshold(&empirical, alpha),
                "discoveries": select_threshold(&empirical, alpha)
                    .map(|u| count_discoveries(&vol, &mask, u).count())
                    .unwrap_or(0),
            })
        })
        .collect();
    let doc = serde_json::json!({ "fit": fit, "thresholds": thresholds });
    fs::write(out.join("fit.json"), serde_json::to_vec_pretty(&doc)?)?;
    println!(
        "fit: a = {:.4}, nu = {:.3}, p0 = {:.4} -> {}",
        fit.scale,
        fit.df,
        fit.p0,
        out.display()
    );
    Ok(())
}

/// `cluster`: 26-connected components of the voxels above a threshold.
pub fn cmd_cluster(stat: &Path, mask: Option<&Path>, threshold: f64, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let vol = io::read_scalar_volume(stat)?;
    let mask = match mask {
        Some(path) => io::read_mask(path)?,
        None => shrink_mask(&Mask::all(*vol.geometry()), &vol)?,
    };
    let hits = count_discoveries(&vol, &mask, threshold);
    let clusters = extract_clusters(&hits.voxels, vol.geometry());
    let doc = serde_json::json!({
        "threshold": threshold,
        "discoveries": hits.count(),
        "n_clusters": clusters.len(),
        "sizes": clusters.sizes(),
        "clusters": clusters.clusters(),
    });
    fs::write(out.join("clusters.json"), serde_json::to_vec_pretty(&doc)?)?;
    let mut w = csv::Writer::from_path(out.join("clusters.csv"))?;
    w.write_record(["cluster", "size", "voxels"])?;
    for (i, c) in clusters.clusters().iter().enumerate() {
        let ids: Vec<String> = c.iter().map(|v| v.to_string()).collect();
        w.write_record([i.to_string(), c.len().to_string(), ids.join(";")])?;
    }
    w.flush()?;
    println!(
        "{} voxels at threshold {threshold} in {} clusters -> {}",
        hits.count(),
        clusters.len(),
        out.display()
    );
    Ok(())
}
