//! Minimal SVG line plots: data-faithful polylines with axis ticks.

use std::path::Path;

use crate::error::{io_err, CliError};

pub struct Series<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
    pub color: &'a str,
}

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 44.0;

/// Writes a line plot of the series over the time index.
pub fn write_line_plot(path: &Path, title: &str, series: &[Series<'_>]) -> Result<(), CliError> {
    let display = path.display().to_string();
    let t_len = series.iter().map(|s| s.values.len()).max().unwrap_or(0);
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for v in s.values {
            y_min = y_min.min(*v);
            y_max = y_max.max(*v);
        }
    }
    if !y_min.is_finite() || !y_max.is_finite() {
        y_min = -1.0;
        y_max = 1.0;
    }
    y_min = y_min.min(0.0);
    y_max = y_max.max(0.0);
    if (y_max - y_min).abs() < 1e-12 {
        y_max += 1.0;
        y_min -= 1.0;
    }
    let pad = 0.05 * (y_max - y_min);
    y_min -= pad;
    y_max += pad;

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let x_of = |t: usize| MARGIN_L + plot_w * t as f64 / (t_len.max(2) - 1) as f64;
    let y_of = |v: f64| MARGIN_T + plot_h * (1.0 - (v - y_min) / (y_max - y_min));

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"20\" font-family=\"monospace\" font-size=\"14\">{}</text>\n",
        MARGIN_L, title
    ));
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n",
        l = MARGIN_L,
        t = MARGIN_T,
        b = HEIGHT - MARGIN_B,
        r = WIDTH - MARGIN_R
    ));
    // Zero line.
    let zero_y = y_of(0.0);
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{zero_y:.2}\" x2=\"{}\" y2=\"{zero_y:.2}\" stroke=\"#bbbbbb\" stroke-dasharray=\"4 3\"/>\n",
        MARGIN_L,
        WIDTH - MARGIN_R
    ));
    // Y ticks.
    for k in 0..=4 {
        let v = y_min + (y_max - y_min) * k as f64 / 4.0;
        let y = y_of(v);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{y:.2}\" x2=\"{}\" y2=\"{y:.2}\" stroke=\"black\"/>\n",
            MARGIN_L - 4.0,
            MARGIN_L
        ));
        svg.push_str(&format!(
            "<text x=\"4\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"11\">{v:.3}</text>\n",
            y + 4.0
        ));
    }
    // X ticks.
    for k in 0..=4 {
        let t = (t_len.saturating_sub(1)) * k / 4;
        let x = x_of(t);
        svg.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{}\" x2=\"{x:.2}\" y2=\"{}\" stroke=\"black\"/>\n",
            HEIGHT - MARGIN_B,
            HEIGHT - MARGIN_B + 4.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\">{}</text>\n",
            x - 8.0,
            HEIGHT - MARGIN_B + 18.0,
            t + 1
        ));
    }
    // Series polylines and legend.
    for (idx, s) in series.iter().enumerate() {
        let mut points = String::new();
        for (t, v) in s.values.iter().enumerate() {
            points.push_str(&format!("{:.2},{:.2} ", x_of(t), y_of(*v)));
        }
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.4\" points=\"{}\"/>\n",
            s.color,
            points.trim_end()
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" fill=\"{}\">{}</text>\n",
            WIDTH - MARGIN_R - 180.0,
            MARGIN_T + 14.0 * (idx as f64 + 1.0),
            s.color,
            s.name
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg).map_err(io_err(&display))
}
