//! Static SVG figures. Every figure is written next to a text table holding
//! the same data.

use std::path::Path;

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Grid2;

const SIZE: (u32, u32) = (640, 480);
const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

fn plot_err<E: std::fmt::Debug>(e: E) -> Error {
    Error::Plot(format!("{e:?}"))
}

fn span(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in vals.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
    (lo - pad, hi + pad)
}

/// Blue (low) to red (high).
fn heat(t: f64) -> HSLColor {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    HSLColor(0.66 * (1.0 - t), 0.85, 0.5)
}

pub fn scatter(path: &Path, title: &str, labels: (&str, &str), pts: &[(f64, f64)], color: &[f64]) -> Result<()> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let xr = span(pts.iter().map(|p| p.0));
    let yr = span(pts.iter().map(|p| p.1));
    let (c0, c1) = span(color.iter().copied());
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(48)
        .build_cartesian_2d(xr.0..xr.1, yr.0..yr.1)
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc(labels.0).y_desc(labels.1).draw().map_err(plot_err)?;
    chart
        .draw_series(pts.iter().zip(color).filter(|(p, _)| p.0.is_finite() && p.1.is_finite()).map(|(p, c)| {
            Circle::new(*p, 2, heat((c - c0) / (c1 - c0)).filled())
        }))
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// Each series is drawn as a solid line; `bands` pairs of series indices
/// are drawn as thin lines in the colour of their first member.
pub fn lines(path: &Path, title: &str, labels: (&str, &str), series: &[(String, Vec<(f64, f64)>)], thin: &[bool]) -> Result<()> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let xr = span(series.iter().flat_map(|s| s.1.iter().map(|p| p.0)));
    let yr = span(series.iter().flat_map(|s| s.1.iter().map(|p| p.1)));
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(48)
        .build_cartesian_2d(xr.0..xr.1, yr.0..yr.1)
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc(labels.0).y_desc(labels.1).draw().map_err(plot_err)?;
    let mut colour = 0;
    for (i, (name, pts)) in series.iter().enumerate() {
        let is_thin = thin.get(i).copied().unwrap_or(false);
        if !is_thin && i > 0 {
            colour += 1;
        }
        let c = PALETTE[colour % PALETTE.len()];
        let style = if is_thin { c.mix(0.5).stroke_width(1) } else { c.stroke_width(2) };
        let finite: Vec<(f64, f64)> = pts.iter().copied().filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
        let s = chart.draw_series(LineSeries::new(finite, style)).map_err(plot_err)?;
        if !is_thin {
            s.label(name.as_str()).legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], c.stroke_width(2)));
        }
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// Grid values as coloured cells; NaN cells are left blank.
pub fn heatmap(path: &Path, title: &str, grid: &Grid2, values: &[f64]) -> Result<()> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let (dx, dy) = grid.spacing();
    let xr = (grid.xs[0] - dx / 2.0, grid.xs[grid.nx() - 1] + dx / 2.0);
    let yr = (grid.ys[0] - dy / 2.0, grid.ys[grid.ny() - 1] + dy / 2.0);
    let (v0, v1) = span(values.iter().copied());
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(48)
        .build_cartesian_2d(xr.0..xr.1, yr.0..yr.1)
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc("phi1").y_desc("phi2").disable_mesh().draw().map_err(plot_err)?;
    chart
        .draw_series((0..grid.len()).filter(|&k| values[k].is_finite()).map(|k| {
            let x = grid.node(k);
            Rectangle::new(
                [(x.x - dx / 2.0, x.y - dy / 2.0), (x.x + dx / 2.0, x.y + dy / 2.0)],
                heat((values[k] - v0) / (v1 - v0)).filled(),
            )
        }))
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// Arrows from each point along its vector, scaled so the longest has
/// `max_len` data units.
pub fn arrows(path: &Path, title: &str, pts: &[(f64, f64)], vecs: &[(f64, f64)], max_len: f64) -> Result<()> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let xr = span(pts.iter().map(|p| p.0));
    let yr = span(pts.iter().map(|p| p.1));
    let longest = vecs.iter().map(|v| v.0.hypot(v.1)).filter(|v| v.is_finite()).fold(0.0, f64::max);
    let s = if longest > 0.0 { max_len / longest } else { 0.0 };
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(48)
        .build_cartesian_2d(xr.0..xr.1, yr.0..yr.1)
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc("phi1").y_desc("phi2").draw().map_err(plot_err)?;
    for (p, v) in pts.iter().zip(vecs) {
        if !(v.0.is_finite() && v.1.is_finite()) {
            continue;
        }
        let tip = (p.0 + s * v.0, p.1 + s * v.1);
        chart
            .draw_series(std::iter::once(PathElement::new(vec![*p, tip], PALETTE[0].stroke_width(1))))
            .map_err(plot_err)?;
        chart.draw_series(std::iter::once(Circle::new(tip, 2, PALETTE[3].filled()))).map_err(plot_err)?;
    }
    root.present().map_err(plot_err)
}
