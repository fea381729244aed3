//! Minimal standalone SVG line plots for run trajectories.
//!
//! The output is a single self-contained `<svg>` document: axes, a polyline,
//! and min/max tick labels. No styling beyond inline attributes, so the file
//! renders the same everywhere.

/// Canvas size and margins shared by every plot.
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 45.0;

/// Renders `ys` against its index as one polyline with labeled extremes.
///
/// An empty series still yields a valid document with axes and a note, so a
/// degenerate run cannot poison the plot stage.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, ys: &[f64]) -> String {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x0 = MARGIN_LEFT;
    let y0 = MARGIN_TOP + plot_h;

    let finite: Vec<f64> = ys.iter().copied().filter(|v| v.is_finite()).collect();
    let (y_min, y_max) = if finite.is_empty() {
        (0.0, 1.0)
    } else {
        let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo > 0.0 {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        }
    };
    let span = y_max - y_min;
    let x_max = ys.len().saturating_sub(1).max(1) as f64;

    let mut points = String::new();
    for (i, v) in ys.iter().enumerate() {
        if !v.is_finite() {
            continue;
        }
        let px = x0 + plot_w * (i as f64) / x_max;
        let py = y0 - plot_h * (v - y_min) / span;
        points.push_str(&format!("{px:.2},{py:.2} "));
    }

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"24\" font-family=\"monospace\" font-size=\"16\" \
         text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    ));
    svg.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{MARGIN_TOP}\" x2=\"{x0}\" y2=\"{y0}\" stroke=\"black\"/>\n"
    ));
    svg.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{:.1}\" y2=\"{y0}\" stroke=\"black\"/>\n",
        x0 + plot_w
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"12\" \
         text-anchor=\"middle\">{}</text>\n",
        x0 + plot_w / 2.0,
        HEIGHT - 8.0,
        escape(x_label)
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"12\" \
         text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        escape(y_label)
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"11\" \
         text-anchor=\"end\">{y_max:.6e}</text>\n",
        x0 - 6.0,
        MARGIN_TOP + 4.0
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{y0:.1}\" font-family=\"monospace\" font-size=\"11\" \
         text-anchor=\"end\">{y_min:.6e}</text>\n",
        x0 - 6.0
    ));
    svg.push_str(&format!(
        "<text x=\"{x0:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"11\">0</text>\n",
        y0 + 16.0
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"11\" \
         text-anchor=\"end\">{}</text>\n",
        x0 + plot_w,
        y0 + 16.0,
        ys.len().saturating_sub(1)
    ));
    if points.is_empty() {
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"12\" \
             text-anchor=\"middle\">no finite data</text>\n",
            x0 + plot_w / 2.0,
            MARGIN_TOP + plot_h / 2.0
        ));
    } else {
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" \
             points=\"{}\"/>\n",
            points.trim_end()
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
