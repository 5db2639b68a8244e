//! Dependency-free SVG line plots: axes, polylines, legend. Diagnostic
//! output only; every plotted number also lives in a CSV or JSON artifact.

const COLORS: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn fmt(v: f64) -> String {
    format!("{v:.4}")
}

impl LinePlot {
    pub fn to_svg(&self, width: u32, height: u32) -> String {
        let (w, h) = (width as f64, height as f64);
        let (ml, mr, mt, mb) = (64.0, 16.0, 36.0, 48.0);
        let (pw, ph) = (w - ml - mr, h - mt - mb);

        let all = self.series.iter().flat_map(|s| s.points.iter());
        let mut x_min = f64::INFINITY;
        let mut x_max = f64::NEG_INFINITY;
        let mut y_min = f64::INFINITY;
        let mut y_max = f64::NEG_INFINITY;
        for &(x, y) in all {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
        if !x_min.is_finite() {
            x_min = 0.0;
            x_max = 1.0;
            y_min = 0.0;
            y_max = 1.0;
        }
        if x_max == x_min {
            x_max = x_min + 1.0;
        }
        if y_max == y_min {
            y_max = y_min + 1.0;
        }
        let sx = |x: f64| ml + (x - x_min) / (x_max - x_min) * pw;
        let sy = |y: f64| mt + ph - (y - y_min) / (y_max - y_min) * ph;

        let mut out = String::new();
        out.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
             viewBox=\"0 0 {width} {height}\">\n"
        ));
        out.push_str(&format!(
            "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"20\" font-family=\"monospace\" font-size=\"14\" \
             text-anchor=\"middle\">{}</text>\n",
            w / 2.0,
            xml_escape(&self.title)
        ));
        // Axes.
        out.push_str(&format!(
            "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            mt + ph,
            ml + pw,
            mt + ph
        ));
        out.push_str(&format!(
            "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
            mt + ph
        ));
        // Extremal tick labels.
        for (v, x) in [(x_min, ml), (x_max, ml + pw)] {
            out.push_str(&format!(
                "<text x=\"{x}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" \
                 text-anchor=\"middle\">{}</text>\n",
                mt + ph + 16.0,
                fmt(v)
            ));
        }
        for (v, y) in [(y_min, mt + ph), (y_max, mt)] {
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" \
                 text-anchor=\"end\">{}</text>\n",
                ml - 6.0,
                y + 4.0,
                fmt(v)
            ));
        }
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" \
             text-anchor=\"middle\">{}</text>\n",
            ml + pw / 2.0,
            mt + ph + 34.0,
            xml_escape(&self.x_label)
        ));
        out.push_str(&format!(
            "<text x=\"14\" y=\"{}\" font-family=\"monospace\" font-size=\"12\" \
             text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{}</text>\n",
            mt + ph / 2.0,
            mt + ph / 2.0,
            xml_escape(&self.y_label)
        ));
        // Series.
        for (i, s) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let pts: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{},{}", fmt(sx(x)), fmt(sy(y))))
                .collect();
            out.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" \
                 points=\"{}\"/>\n",
                pts.join(" ")
            ));
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-family=\"monospace\" font-size=\"11\" \
                 fill=\"{color}\">{}</text>\n",
                ml + pw - 150.0,
                mt + 14.0 + 14.0 * i as f64,
                xml_escape(&s.label)
            ));
        }
        out.push_str("</svg>\n");
        out
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
