//! SVG figures rendered from the experiment CSV files.

use std::collections::BTreeMap;
use std::path::Path;

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::experiment::persist::{read_aggregate, read_heatmap};

fn draw_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    }
}

const SERIES_COLORS: [RGBColor; 5] = [
    RGBColor(0, 0, 0),
    RGBColor(214, 39, 40),
    RGBColor(255, 127, 14),
    RGBColor(31, 119, 180),
    RGBColor(44, 160, 44),
];

/// RMSE against SNR, one line per scheme, logarithmic RMSE axis. Rows with a
/// non-finite SNR (noiseless runs) have no place on the axis and are left out.
pub fn rmse_vs_snr(aggregate_csv: impl AsRef<Path>, out_svg: impl AsRef<Path>) -> Result<()> {
    let (src, out) = (aggregate_csv.as_ref(), out_svg.as_ref());
    let rows = read_aggregate(src)?;
    let mut series: BTreeMap<_, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows
        .iter()
        .filter(|r| r.snr_db.is_finite() && r.rmse_m.is_finite() && r.rmse_m > 0.0)
    {
        series
            .entry(r.scheme)
            .or_default()
            .push((r.snr_db, r.rmse_m));
    }
    if series.is_empty() {
        return Err(Error::Parse {
            path: src.to_path_buf(),
            reason: "no finite SNR with a positive RMSE to plot".into(),
        });
    }
    let pts = series.values().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 <= x0 {
        x0 -= 1.0;
        x1 += 1.0;
    }

    // whole decades; the log axis stalls on spans without a decade tick
    let ylo = 10f64.powf(y0.log10().floor());
    let yhi = 10f64.powf(y1.log10().ceil()).max(ylo * 10.0);

    let root = SVGBackend::new(out, (800, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| draw_err(out, e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Localization RMSE", ("sans-serif", 22))
        .margin(16)
        .x_label_area_size(44)
        .y_label_area_size(64)
        .build_cartesian_2d(x0..x1, (ylo..yhi).log_scale())
        .map_err(|e| draw_err(out, e))?;
    chart
        .configure_mesh()
        .x_desc("SNR (dB)")
        .y_desc("RMSE (m)")
        .draw()
        .map_err(|e| draw_err(out, e))?;
    for (k, (scheme, mut pts)) in series.into_iter().enumerate() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let color = SERIES_COLORS[k % SERIES_COLORS.len()];
        chart
            .draw_series(LineSeries::new(pts, color.stroke_width(2)))
            .map_err(|e| draw_err(out, e))?
            .label(scheme.as_str())
            .legend(move |(x, y)| {
                PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2))
            });
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .draw()
        .map_err(|e| draw_err(out, e))?;
    root.present().map_err(|e| draw_err(out, e))
}

// dark blue -> yellow
fn ramp(t: f64) -> RGBColor {
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    RGBColor(lerp(40.0, 250.0), lerp(30.0, 230.0), lerp(120.0, 30.0))
}

/// Heatmap raster of per-cell RMSE. Skipped cells are drawn grey.
pub fn heatmap(heatmap_csv: impl AsRef<Path>, out_svg: impl AsRef<Path>) -> Result<()> {
    let (src, out) = (heatmap_csv.as_ref(), out_svg.as_ref());
    let cells = read_heatmap(src)?;
    if cells.is_empty() {
        return Err(Error::Parse {
            path: src.to_path_buf(),
            reason: "no cells".into(),
        });
    }
    let mut xs: Vec<f64> = cells.iter().map(|c| c.x_m).collect();
    let mut ys: Vec<f64> = cells.iter().map(|c| c.y_m).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    let half = |v: &[f64]| {
        if v.len() > 1 {
            (v[1] - v[0]) / 2.0
        } else {
            0.5
        }
    };
    let (hx, hy) = (half(&xs), half(&ys));
    let values: Vec<f64> = cells.iter().filter_map(|c| c.rmse_m).collect();
    let lo = values.iter().cloned().fold(f64::MAX, f64::min);
    let hi = values.iter().cloned().fold(f64::MIN, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };

    let root = SVGBackend::new(out, (720, 680)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| draw_err(out, e))?;
    let title = format!(
        "RMSE by initial position, {} ({lo:.2} to {hi:.2} m)",
        cells[0].scenario.as_str()
    );
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(16)
        .x_label_area_size(44)
        .y_label_area_size(52)
        .build_cartesian_2d(
            xs[0] - hx..xs[xs.len() - 1] + hx,
            ys[0] - hy..ys[ys.len() - 1] + hy,
        )
        .map_err(|e| draw_err(out, e))?;
    chart
        .configure_mesh()
        .disable_mesh()
        .x_desc("x (m)")
        .y_desc("y (m)")
        .draw()
        .map_err(|e| draw_err(out, e))?;
    chart
        .draw_series(cells.iter().map(|c| {
            let color = match c.rmse_m {
                Some(v) => ramp((v - lo) / span),
                None => RGBColor(200, 200, 200),
            };
            Rectangle::new(
                [(c.x_m - hx, c.y_m - hy), (c.x_m + hx, c.y_m + hy)],
                color.filled(),
            )
        }))
        .map_err(|e| draw_err(out, e))?;
    root.present().map_err(|e| draw_err(out, e))
}
