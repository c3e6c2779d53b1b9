//! Static SVG rendering of the analysis: statistic histogram with the null
//! densities on the left, FDR curves with thresholds on the right.

use std::fmt::Write as _;

use crate::report::{AnalysisReport, CurveDump};
use axisfdr::null::NullSource;

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 48.0;
const PANEL_W: f64 = (WIDTH - 3.0 * MARGIN) / 2.0;
const PANEL_H: f64 = HEIGHT - 2.0 * MARGIN;

struct Panel {
    x0: f64,
    y0: f64,
    x_max: f64,
    y_max: f64,
}

impl Panel {
    fn x(&self, v: f64) -> f64 {
        self.x0 + (v / self.x_max).clamp(0.0, 1.0) * PANEL_W
    }

    fn y(&self, v: f64) -> f64 {
        self.y0 + PANEL_H - (v / self.y_max).clamp(0.0, 1.0) * PANEL_H
    }
}

fn polyline(points: &[(f64, f64)], style: &str) -> String {
    let mut path = String::from("<polyline fill=\"none\" ");
    path.push_str(style);
    path.push_str(" points=\"");
    for (x, y) in points {
        let _ = write!(path, "{x:.2},{y:.2} ");
    }
    path.push_str("\"/>\n");
    path
}

/// Renders the report's histogram and FDR curves as a standalone SVG
/// document.
pub fn render(report: &AnalysisReport) -> String {
    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    render_histogram_panel(report, &mut svg);
    render_fdr_panel(report, &mut svg);

    svg.push_str("</svg>\n");
    svg
}

fn render_histogram_panel(report: &AnalysisReport, svg: &mut String) {
    let hist = &report.histogram;
    let x_max = (hist.counts.len() as f64 * hist.bin_width).max(1e-9);
    let y_max = hist.counts.iter().copied().max().unwrap_or(1).max(1) as f64 * 1.05;
    let panel = Panel { x0: MARGIN, y0: MARGIN, x_max, y_max };

    let _ = write!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">statistic histogram (bin {})</text>\n",
        panel.x0 + PANEL_W / 2.0,
        MARGIN - 16.0,
        hist.bin_width
    );
    frame(&panel, svg);

    for (k, &c) in hist.counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let lo = hist.lower_edge + k as f64 * hist.bin_width;
        let x = panel.x(lo);
        let w = panel.x(lo + hist.bin_width) - x;
        let y = panel.y(c as f64);
        let _ = write!(
            svg,
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{:.2}\" \
             fill=\"#9ecae1\" stroke=\"#6baed6\" stroke-width=\"0.5\"/>\n",
            panel.y0 + PANEL_H - y
        );
    }

    // expected counts N * width * p0 * f0 under each null model
    let n_width = hist.total as f64 * hist.bin_width;
    if let Some(fit) = &report.fit {
        let pts = density_curve(&panel, |t| {
            fit.density(t).map(|d| n_width * fit.p0 * d).unwrap_or(0.0)
        });
        svg.push_str(&polyline(&pts, "stroke=\"#d62728\" stroke-width=\"1.5\""));
    }
    if report.smoothing_b == 1 {
        let df = report.config.target_df;
        let pts = density_curve(&panel, |t| {
            axisfdr::null::scaled_chisq_density(t, 1.0, df)
                .map(|d| n_width * d)
                .unwrap_or(0.0)
        });
        svg.push_str(&polyline(
            &pts,
            "stroke=\"#2c3e50\" stroke-width=\"1.2\" stroke-dasharray=\"5,4\"",
        ));
    }
}

fn density_curve(panel: &Panel, f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
    let mut pts = Vec::with_capacity(257);
    for i in 1..=256 {
        let t = panel.x_max * i as f64 / 256.0;
        pts.push((panel.x(t), panel.y(f(t).min(panel.y_max))));
    }
    pts
}

fn render_fdr_panel(report: &AnalysisReport, svg: &mut String) {
    let x_max = report
        .curves
        .iter()
        .flat_map(|c| c.thresholds.last().copied())
        .fold(1.0f64, f64::max);
    let panel = Panel { x0: 2.0 * MARGIN + PANEL_W, y0: MARGIN, x_max, y_max: 1.05 };

    let _ = write!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">estimated FDR vs threshold</text>\n",
        panel.x0 + PANEL_W / 2.0,
        MARGIN - 16.0
    );
    frame(&panel, svg);

    for curve in &report.curves {
        let style = match curve.source {
            NullSource::Empirical => "stroke=\"#d62728\" stroke-width=\"1.5\"",
            NullSource::Theoretical => {
                "stroke=\"#2c3e50\" stroke-width=\"1.2\" stroke-dasharray=\"5,4\""
            }
        };
        let pts = curve_points(&panel, curve);
        svg.push_str(&polyline(&pts, style));
    }

    for r in &report.results {
        let y = panel.y(r.alpha);
        let _ = write!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" \
             stroke=\"#7f7f7f\" stroke-width=\"0.7\" stroke-dasharray=\"2,3\"/>\n",
            panel.x0,
            panel.x0 + PANEL_W
        );
        if let Some(u) = r.u_alpha {
            let x = panel.x(u);
            let _ = write!(
                svg,
                "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{y:.2}\" \
                 stroke=\"#7f7f7f\" stroke-width=\"0.9\" stroke-dasharray=\"2,3\"/>\n\
                 <text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"10\">\
                 u={u:.2}</text>\n",
                panel.y0 + PANEL_H,
                panel.y0 + PANEL_H + 14.0
            );
        }
    }
}

fn curve_points(panel: &Panel, curve: &CurveDump) -> Vec<(f64, f64)> {
    // thin dense grids so the SVG stays small
    let step = (curve.thresholds.len() / 512).max(1);
    let mut pts: Vec<(f64, f64)> = curve
        .thresholds
        .iter()
        .zip(&curve.fdr)
        .step_by(step)
        .map(|(&u, &f)| (panel.x(u), panel.y(f)))
        .collect();
    if let (Some(&u), Some(&f)) = (curve.thresholds.last(), curve.fdr.last()) {
        pts.push((panel.x(u), panel.y(f)));
    }
    pts
}

fn frame(panel: &Panel, svg: &mut String) {
    let _ = write!(
        svg,
        "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{PANEL_W:.2}\" height=\"{PANEL_H:.2}\" \
         fill=\"none\" stroke=\"#444\" stroke-width=\"1\"/>\n",
        panel.x0, panel.y0
    );
    for i in 0..=4 {
        let vx = panel.x_max * i as f64 / 4.0;
        let x = panel.x(vx);
        let _ = write!(
            svg,
            "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"10\">{vx:.1}</text>\n",
            panel.y0 + PANEL_H + 26.0
        );
        let vy = panel.y_max * i as f64 / 4.0;
        let y = panel.y(vy);
        let _ = write!(
            svg,
            "<text x=\"{:.2}\" y=\"{y:.2}\" text-anchor=\"end\" font-size=\"10\">{vy:.1}</text>\n",
            panel.x0 - 6.0
        );
    }
}
