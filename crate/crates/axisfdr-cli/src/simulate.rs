//! `simulate` and `sweep`: synthetic volume generation and the smoothing
//! sweep, driven by the same scenario flags.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use axisfdr::io;
use axisfdr::sim::{simulate_volume_pair, smoothing_sweep, SimulationSpec};
use axisfdr::volume::GridGeometry;
use axisfdr::UnitAxis;

/// Scenario flags shared by `simulate` and `sweep`.
#[derive(Clone, Debug, clap::Args)]
pub struct ScenarioArgs {
    /// Grid dimensions as NX,NY,NZ.
    #[arg(long, default_value = "16,16,16")]
    pub dims: String,
    /// Voxel spacing in mm as SX,SY,SZ.
    #[arg(long, default_value = "1,1,1")]
    pub spacing: String,
    /// Subjects in the first group.
    #[arg(long, default_value_t = 6)]
    pub n1: usize,
    /// Subjects in the second group.
    #[arg(long, default_value_t = 6)]
    pub n2: usize,
    /// Background concentration parameter.
    #[arg(long, default_value_t = 50.0)]
    pub kappa: f64,
    /// Background mean axis as X,Y,Z (normalized).
    #[arg(long, default_value = "0,0,1")]
    pub axis: String,
    /// Signal box as X0,Y0,Z0,SX,SY,SZ in voxels (omit for a pure null).
    #[arg(long)]
    pub region: Option<String>,
    /// Angle between group means inside the region, degrees.
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    /// Simulation seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn parse_triple(text: &str, what: &str) -> Result<[f64; 3]> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("parsing {what} from '{text}'"))?;
    if parts.len() != 3 {
        bail!("{what} needs exactly three comma-separated values, got '{text}'");
    }
    Ok([parts[0], parts[1], parts[2]])
}

impl ScenarioArgs {
    pub fn to_spec(&self) -> Result<SimulationSpec> {
        let dims = parse_triple(&self.dims, "--dims")?;
        let spacing = parse_triple(&self.spacing, "--spacing")?;
        if dims.iter().any(|d| *d < 1.0 || d.fract() != 0.0) {
            bail!("--dims must be positive integers");
        }
        let geometry = GridGeometry::new(dims[0] as usize, dims[1] as usize, dims[2] as usize, spacing)?;
        let axis = UnitAxis::new(parse_triple(&self.axis, "--axis")?)?;
        let signal_region = match &self.region {
            Some(text) => {
                let parts: Vec<usize> = text
                    .split(',')
                    .map(|p| p.trim().parse::<usize>())
                    .collect::<Result<_, _>>()
                    .with_context(|| format!("parsing --region from '{text}'"))?;
                if parts.len() != 6 {
                    bail!("--region needs X0,Y0,Z0,SX,SY,SZ");
                }
                let (x0, y0, z0, sx, sy, sz) =
                    (parts[0], parts[1], parts[2], parts[3], parts[4], parts[5]);
                if x0 + sx > geometry.nx || y0 + sy > geometry.ny || z0 + sz > geometry.nz {
                    bail!("--region box exceeds the grid");
                }
                let mut region = Vec::with_capacity(sx * sy * sz);
                for z in z0..z0 + sz {
                    for y in y0..y0 + sy {
                        for x in x0..x0 + sx {
                            region.push(geometry.index(x, y, z));
                        }
                    }
                }
                region
            }
            None => Vec::new(),
        };
        Ok(SimulationSpec {
            geometry,
            n1: self.n1,
            n2: self.n2,
            kappa: self.kappa,
            background_axis: axis,
            signal_region,
            delta_deg: self.delta,
            seed: self.seed,
        })
    }
}

/// Writes the group volumes and the truth mask for a scenario.
pub fn cmd_simulate(scenario: &ScenarioArgs, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let spec = scenario.to_spec()?;
    let volumes = simulate_volume_pair(&spec).context("simulation stage")?;
    for (i, vol) in volumes.group1.iter().enumerate() {
        io::write_direction_volume(&out.join(format!("group1_s{i:02}.dvol")), vol)?;
    }
    for (i, vol) in volumes.group2.iter().enumerate() {
        io::write_direction_volume(&out.join(format!("group2_s{i:02}.dvol")), vol)?;
    }
    io::write_mask(&out.join("truth.mvol"), &volumes.truth)?;
    fs::write(out.join("scenario.json"), serde_json::to_vec_pretty(&spec)?)?;
    println!(
        "wrote {} + {} subject volumes and truth mask ({} signal voxels) -> {}",
        spec.n1,
        spec.n2,
        volumes.truth.count(),
        out.display()
    );
    Ok(())
}

/// Runs the smoothing sweep over kernel sizes and levels, emitting the
/// summary table as CSV and JSON.
pub fn cmd_sweep(
    scenario: &ScenarioArgs,
    b_values: &[usize],
    alphas: &[f64],
    bin_width: f64,
    fit_upper: f64,
    out: &Path,
) -> Result<()> {
    fs::create_dir_all(out)?;
    let spec = scenario.to_spec()?;
    let table =
        smoothing_sweep(&spec, b_values, alphas, bin_width, fit_upper).context("sweep stage")?;
    let mut w = csv::Writer::from_path(out.join("sweep.csv"))?;
    w.write_record([
        "b", "N", "p0_hat", "a_hat", "nu_hat", "T90", "alpha", "u_alpha", "R", "n_clusters",
        "largest_sizes", "fit_error",
    ])?;
    for row in &table.rows {
        let sizes: Vec<String> = row.largest_clusters.iter().map(|s| s.to_string()).collect();
        w.write_record([
            row.b.to_string(),
            row.mask_size.to_string(),
            row.p0_hat.map(|v| format!("{v:.6}")).unwrap_or_default(),
            row.a_hat.map(|v| format!("{v:.6}")).unwrap_or_default(),
            row.nu_hat.map(|v| format!("{v:.6}")).unwrap_or_default(),
            row.t90.map(|v| format!("{v:.6}")).unwrap_or_default(),
            format!("{}", row.alpha),
            row.u_alpha.map(|v| format!("{v:.6}")).unwrap_or_default(),
            row.discoveries.to_string(),
            row.n_clusters.to_string(),
            sizes.join(";"),
            row.fit_error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    fs::write(out.join("sweep.json"), serde_json::to_vec_pretty(&table)?)?;
    println!("{} sweep rows -> {}", table.rows.len(), out.display());
    Ok(())
}
