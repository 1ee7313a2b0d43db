//! Bare-bones SVG line charts. Diagnostic output only, so the axes are
//! reduced to a frame plus min/max labels.

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 300.0;
const MARGIN: f64 = 36.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Renders one polyline per named series over a shared 0..len-1 x axis.
/// Series may have different lengths; y limits are pooled over all points.
pub fn polyline_chart(title: &str, series: &[(&str, &[f64])]) -> String {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut max_len = 0usize;
    for (_, ys) in series {
        max_len = max_len.max(ys.len());
        for &y in *ys {
            lo = lo.min(y);
            hi = hi.max(y);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-12 {
        // flat series: pad so the line sits mid-chart
        lo -= 0.5;
        hi += 0.5;
    }
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let x_of = |i: usize| {
        let denom = max_len.saturating_sub(1).max(1) as f64;
        MARGIN + plot_w * i as f64 / denom
    };
    let y_of = |v: f64| MARGIN + plot_h * (1.0 - (v - lo) / (hi - lo));

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    out.push_str(&format!(
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{plot_w}\" height=\"{plot_h}\" \
         fill=\"none\" stroke=\"#999\"/>\n"
    ));
    out.push_str(&format!(
        "<text x=\"{MARGIN}\" y=\"{}\" font-size=\"13\" font-family=\"sans-serif\">{}</text>\n",
        MARGIN - 10.0,
        escape(title)
    ));
    out.push_str(&format!(
        "<text x=\"4\" y=\"{}\" font-size=\"10\" font-family=\"sans-serif\">{hi:.3}</text>\n",
        MARGIN + 4.0
    ));
    out.push_str(&format!(
        "<text x=\"4\" y=\"{}\" font-size=\"10\" font-family=\"sans-serif\">{lo:.3}</text>\n",
        MARGIN + plot_h
    ));
    for (k, (name, ys)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        if ys.len() == 1 {
            out.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"{color}\"/>\n",
                x_of(0),
                y_of(ys[0])
            ));
        } else if !ys.is_empty() {
            let points: Vec<String> = ys
                .iter()
                .enumerate()
                .map(|(i, &y)| format!("{:.2},{:.2}", x_of(i), y_of(y)))
                .collect();
            out.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\" points=\"{}\"/>\n",
                points.join(" ")
            ));
        }
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" font-family=\"sans-serif\" \
             fill=\"{color}\">{}</text>\n",
            MARGIN + 6.0 + 110.0 * k as f64,
            HEIGHT - 10.0,
            escape(name)
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
