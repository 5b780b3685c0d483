//! Hand-rolled SVG emission: textual, diffable, dependency-free.

/// Polyline chart of one or more named series over a shared x axis.
pub fn line_chart(
    title: &str,
    x_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> String {
    let (w, h, ml, mb, mt, mr) = (640.0, 400.0, 60.0, 50.0, 40.0, 130.0);
    let pts: Vec<(f64, f64)> = series.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    let (x0, x1) = span(pts.iter().map(|p| p.0));
    let (y0, y1) = span(pts.iter().map(|p| p.1));
    let sx = |x: f64| ml + (x - x0) / (x1 - x0).max(1e-9) * (w - ml - mr);
    let sy = |y: f64| h - mb - (y - y0) / (y1 - y0).max(1e-9) * (h - mb - mt);
    let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"monospace\" font-size=\"12\">\n"
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{title}</text>\n",
        w / 2.0
    ));
    // axes
    out.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - mb,
        w - mr,
        h - mb
    ));
    out.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - mb
    ));
    for i in 0..=4 {
        let xv = x0 + (x1 - x0) * f64::from(i) / 4.0;
        let yv = y0 + (y1 - y0) * f64::from(i) / 4.0;
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{:.2}</text>\n",
            sx(xv),
            h - mb + 18.0,
            xv
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{:.1}</text>\n",
            ml - 6.0,
            sy(yv) + 4.0,
            yv
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>\n",
        (ml + w - mr) / 2.0,
        h - 12.0
    ));
    for (si, (name, points)) in series.iter().enumerate() {
        let color = palette[si % palette.len()];
        let path: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        for &(x, y) in points {
            out.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                sx(x),
                sy(y)
            ));
        }
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"{color}\">{name}</text>\n",
            w - mr + 8.0,
            mt + 16.0 * si as f64
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// Radar plot over labeled axes scaled 0..100.
pub fn radar_chart(title: &str, axes: &[(String, f64)]) -> String {
    let (w, h) = (420.0, 420.0);
    let (cx, cy, r) = (w / 2.0, h / 2.0 + 10.0, 140.0);
    let n = axes.len().max(1);
    let angle = |i: usize| -> f64 {
        std::f64::consts::TAU * i as f64 / n as f64 - std::f64::consts::FRAC_PI_2
    };
    let point = |i: usize, v: f64| -> (f64, f64) {
        let rr = r * (v / 100.0).clamp(0.0, 1.0);
        (cx + rr * angle(i).cos(), cy + rr * angle(i).sin())
    };
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"monospace\" font-size=\"12\">\n"
    ));
    out.push_str(&format!(
        "<text x=\"{cx}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{title}</text>\n"
    ));
    for ring in [25.0, 50.0, 75.0, 100.0] {
        let pts: Vec<String> = (0..n)
            .map(|i| {
                let (x, y) = point(i, ring);
                format!("{x:.1},{y:.1}")
            })
            .collect();
        out.push_str(&format!(
            "<polygon fill=\"none\" stroke=\"#cccccc\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
    }
    for (i, (label, _)) in axes.iter().enumerate() {
        let (x, y) = point(i, 118.0);
        out.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{y:.1}\" text-anchor=\"middle\">{label}</text>\n"
        ));
    }
    let pts: Vec<String> = axes
        .iter()
        .enumerate()
        .map(|(i, (_, v))| {
            let (x, y) = point(i, *v);
            format!("{x:.1},{y:.1}")
        })
        .collect();
    out.push_str(&format!(
        "<polygon fill=\"#1f77b444\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"{}\"/>\n",
        pts.join(" ")
    ));
    for (i, (label, v)) in axes.iter().enumerate() {
        let (x, y) = point(i, *v);
        out.push_str(&format!(
            "<circle cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"3\" fill=\"#1f77b4\"><title>{label}={v:.1}</title></circle>\n"
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn span(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in vals {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if (hi - lo).abs() < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}
