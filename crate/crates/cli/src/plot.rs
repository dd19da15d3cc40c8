//! Static SVG charts drawn from sweep and validation results.

use std::path::Path;

use anyhow::{anyhow, Result};
use coopcache::experiments::{Scale, SweepOutcome, ValidationReport};
use coopcache::{RunConfig, RunMode};
use plotters::coord::Shift;
use plotters::prelude::*;

const PALETTE: [RGBColor; 6] = [
    RGBColor(0x1f, 0x77, 0xb4),
    RGBColor(0xd6, 0x27, 0x28),
    RGBColor(0x2c, 0xa0, 0x2c),
    RGBColor(0xff, 0x7f, 0x0e),
    RGBColor(0x94, 0x67, 0xbd),
    RGBColor(0x8c, 0x56, 0x4b),
];

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

fn bounds(series: &[Series], log_x: bool) -> Option<((f64, f64), (f64, f64))> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .filter(|(x, y)| x.is_finite() && y.is_finite() && (!log_x || *x > 0.0))
        .collect();
    if pts.is_empty() {
        return None;
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x0 == x1 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    let pad = 0.05 * (y1 - y0).max(y1.abs() * 1e-3).max(1e-12);
    Some(((x0, x1), ((y0 - pad).min(0.0_f64.max(y0 - pad)), y1 + pad)))
}

fn draw_lines<DB: DrawingBackend>(
    area: &DrawingArea<DB, Shift>,
    title: &str,
    x_desc: &str,
    y_desc: &str,
    log_x: bool,
    series: &[Series],
) -> Result<()>
where
    DB::ErrorType: 'static,
{
    area.fill(&WHITE).map_err(|e| anyhow!("{e}"))?;
    let Some(((x0, x1), (y0, y1))) = bounds(series, log_x) else {
        return Ok(());
    };
    let mut builder = ChartBuilder::on(area);
    builder
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70);
    macro_rules! finish {
        ($chart:expr) => {{
            let mut chart = $chart;
            chart
                .configure_mesh()
                .x_desc(x_desc)
                .y_desc(y_desc)
                .y_label_formatter(&|v| format!("{v:.3e}"))
                .draw()
                .map_err(|e| anyhow!("{e}"))?;
            for (i, s) in series.iter().enumerate() {
                let color = PALETTE[i % PALETTE.len()];
                let pts: Vec<(f64, f64)> = s.points.iter().copied().filter(|(_, y)| y.is_finite()).collect();
                chart
                    .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))
                    .map_err(|e| anyhow!("{e}"))?
                    .label(s.label.clone())
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
                chart
                    .draw_series(pts.into_iter().map(|p| Circle::new(p, 3, color.filled())))
                    .map_err(|e| anyhow!("{e}"))?;
            }
            chart
                .configure_series_labels()
                .background_style(WHITE.mix(0.8))
                .border_style(BLACK)
                .draw()
                .map_err(|e| anyhow!("{e}"))?;
        }};
    }
    if log_x {
        finish!(builder
            .build_cartesian_2d((x0..x1).log_scale(), y0..y1)
            .map_err(|e| anyhow!("{e}"))?);
    } else {
        finish!(builder.build_cartesian_2d(x0..x1, y0..y1).map_err(|e| anyhow!("{e}"))?);
    }
    area.present().map_err(|e| anyhow!("{e}"))?;
    Ok(())
}

/// One curve per strategy: efficiency, or the displacement gain in that mode.
pub fn sweep_chart(path: &Path, config: &RunConfig, outcome: &SweepOutcome) -> Result<()> {
    let gain = config.mode == RunMode::DisplacementGain;
    let series: Vec<Series> = config
        .strategies
        .iter()
        .map(|&s| Series {
            label: s.to_string(),
            points: outcome
                .series(s)
                .into_iter()
                .map(|r| (r.value, if gain { r.gain } else { r.eta }.unwrap_or(f64::NAN)))
                .collect(),
        })
        .collect();
    let y_desc = if gain { "optimum / fixed-altitude optimum" } else { "energy efficiency (bit/J)" };
    let area = SVGBackend::new(path, (800, 520)).into_drawing_area();
    draw_lines(
        &area,
        &config.name,
        config.sweep.variable.name(),
        y_desc,
        config.sweep.scale == Scale::Log,
        &series,
    )
}

/// Analytic curve with the simulated means beside it.
pub fn validation_chart(path: &Path, config: &RunConfig, report: &ValidationReport) -> Result<()> {
    let pick = |f: &dyn Fn(&coopcache::experiments::ValidationRow) -> Option<f64>| -> Vec<(f64, f64)> {
        report
            .rows
            .iter()
            .map(|r| (r.value, f(r).unwrap_or(f64::NAN)))
            .collect()
    };
    let series = vec![
        Series {
            label: "analytic".into(),
            points: pick(&|r| Some(r.analytic_bps)),
        },
        Series {
            label: "monte carlo".into(),
            points: pick(&|r| Some(r.mc_bps)),
        },
        Series {
            label: "analytic, literal limits".into(),
            points: pick(&|r| r.literal_bps),
        },
    ];
    let area = SVGBackend::new(path, (800, 520)).into_drawing_area();
    draw_lines(
        &area,
        &config.name,
        config.sweep.variable.name(),
        "rate factor (bit/s)",
        config.sweep.scale == Scale::Log,
        &series,
    )
}
