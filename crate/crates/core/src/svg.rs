//! Minimal SVG emitters for the report figures: line plots, heatmaps and
//! bar charts. No external renderer; plain shapes and text.

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 60.0;

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"monospace\" font-size=\"12\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        W / 2.0,
        escape(title)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axis_bounds(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in vals {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if (hi - lo).abs() < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

const PALETTE: [&str; 4] = ["#1f6fb2", "#d1495b", "#3a8f5d", "#8a5ab2"];

/// Multi-series line plot; x positions are taken as given (linear axis).
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let mut svg = header(title);
    let (x0, x1) = axis_bounds(series.iter().flat_map(|s| s.1.iter().map(|p| p.0)));
    let (y0, y1) = axis_bounds(series.iter().flat_map(|s| s.1.iter().map(|p| p.1)));
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);
    svg += &format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <text x=\"{cx}\" y=\"{ly}\" text-anchor=\"middle\">{xl}</text>\n\
         <text x=\"16\" y=\"{cy}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {cy})\">{yl}</text>\n\
         <text x=\"{m}\" y=\"{ly}\" text-anchor=\"middle\" font-size=\"10\">{x0:.3}</text>\n\
         <text x=\"{r}\" y=\"{ly}\" text-anchor=\"middle\" font-size=\"10\">{x1:.3}</text>\n\
         <text x=\"{m2}\" y=\"{b}\" text-anchor=\"end\" font-size=\"10\">{y0:.3}</text>\n\
         <text x=\"{m2}\" y=\"{t}\" text-anchor=\"end\" font-size=\"10\">{y1:.3}</text>\n",
        m = MARGIN,
        m2 = MARGIN - 6.0,
        r = W - MARGIN,
        t = MARGIN,
        b = H - MARGIN,
        cx = W / 2.0,
        cy = H / 2.0,
        ly = H - MARGIN / 3.0,
        xl = escape(x_label),
        yl = escape(y_label),
    );
    for (i, (name, points)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = points
            .iter()
            .enumerate()
            .map(|(j, p)| format!("{}{:.2},{:.2}", if j == 0 { "M" } else { "L" }, sx(p.0), sy(p.1)))
            .collect();
        svg += &format!(
            "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            path.join(" ")
        );
        for p in points {
            svg += &format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{color}\"/>\n",
                sx(p.0),
                sy(p.1)
            );
        }
        svg += &format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{}</text>\n",
            W - MARGIN + 6.0,
            MARGIN + 14.0 * i as f64,
            escape(name)
        );
    }
    svg + "</svg>\n"
}

/// Square heatmap with per-cell value labels (kappa matrices).
pub fn heatmap(title: &str, labels: &[String], values: &[Vec<f64>]) -> String {
    let n = labels.len();
    let mut svg = header(title);
    if n == 0 {
        return svg + "</svg>\n";
    }
    let cell = ((W.min(H) - 2.0 * MARGIN) / n as f64).floor();
    let (lo, hi) = axis_bounds(values.iter().flatten().cloned());
    for (i, row) in values.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let frac = (v - lo) / (hi - lo);
            let shade = (235.0 - frac * 180.0) as u8;
            let x = MARGIN + j as f64 * cell;
            let y = MARGIN + i as f64 * cell;
            svg += &format!(
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cell}\" height=\"{cell}\" \
                 fill=\"rgb({shade},{shade},255)\" stroke=\"white\"/>\n\
                 <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{v:.3}</text>\n",
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
    }
    for (i, l) in labels.iter().enumerate() {
        let c = MARGIN + (i as f64 + 0.5) * cell;
        svg += &format!(
            "<text x=\"{c:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"10\">{}</text>\n\
             <text x=\"{:.1}\" y=\"{c:.1}\" text-anchor=\"end\" font-size=\"10\">{}</text>\n",
            MARGIN - 8.0,
            escape(l),
            MARGIN - 8.0,
            escape(l)
        );
    }
    svg + "</svg>\n"
}

/// Signed bar chart around a zero baseline (recall differences).
pub fn bar_chart(title: &str, labels: &[String], values: &[f64]) -> String {
    let mut svg = header(title);
    if values.is_empty() {
        return svg + "</svg>\n";
    }
    let (lo, hi) = axis_bounds(values.iter().cloned().chain([0.0]));
    let sy = |y: f64| H - MARGIN - (y - lo) / (hi - lo) * (H - 2.0 * MARGIN);
    let bw = (W - 2.0 * MARGIN) / values.len() as f64;
    let base = sy(0.0);
    svg += &format!(
        "<line x1=\"{}\" y1=\"{base:.1}\" x2=\"{}\" y2=\"{base:.1}\" stroke=\"black\"/>\n",
        MARGIN,
        W - MARGIN
    );
    for (i, &v) in values.iter().enumerate() {
        let x = MARGIN + i as f64 * bw;
        let y = sy(v);
        let (top, height) = if v >= 0.0 { (y, base - y) } else { (base, y - base) };
        let color = if v >= 0.0 { "#d1495b" } else { "#1f6fb2" };
        svg += &format!(
            "<rect x=\"{:.1}\" y=\"{top:.1}\" width=\"{:.1}\" height=\"{height:.1}\" fill=\"{color}\"/>\n",
            x + bw * 0.1,
            bw * 0.8
        );
        if let Some(l) = labels.get(i) {
            svg += &format!(
                "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\" font-size=\"9\">{}</text>\n",
                x + bw / 2.0,
                H - MARGIN / 2.0,
                escape(l)
            );
        }
    }
    svg + "</svg>\n"
}
