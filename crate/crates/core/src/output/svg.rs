use std::fmt::Write;

use super::num;

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Shaded interval drawn under the series.
#[derive(Debug, Clone)]
pub struct Band {
    pub name: String,
    pub x: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Minimal static line chart.
#[derive(Debug, Clone)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub band: Option<Band>,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in vals.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

impl LinePlot {
    fn x_range(&self) -> (f64, f64) {
        let band = self.band.iter().flat_map(|b| b.x.iter().copied());
        range(self.series.iter().flat_map(|s| s.x.iter().copied()).chain(band))
    }

    fn y_range(&self) -> (f64, f64) {
        let band = self.band.iter().flat_map(|b| b.lo.iter().chain(&b.hi).copied());
        range(self.series.iter().flat_map(|s| s.y.iter().copied()).chain(band))
    }

    pub fn render(&self) -> String {
        let (x0, x1) = self.x_range();
        let (y0, y1) = self.y_range();
        let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
        let py = |y: f64| H - BOTTOM - (y - y0) / (y1 - y0) * (H - TOP - BOTTOM);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            W / 2.0,
            escape(&self.title)
        );
        // axes and ticks
        let (bx, by) = (px(x0), py(y0));
        let _ = writeln!(
            s,
            r#"<path d="M{LEFT} {TOP} L{LEFT} {by:.2} L{:.2} {by:.2}" stroke="black" fill="none"/>"#,
            W - RIGHT
        );
        for i in 0..=4 {
            let t = i as f64 / 4.0;
            let xv = x0 + t * (x1 - x0);
            let yv = y0 + t * (y1 - y0);
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{:.3}</text>"#,
                px(xv),
                by + 18.0,
                xv
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.3}</text>"#,
                bx - 6.0,
                py(yv) + 4.0,
                yv
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            (LEFT + W - RIGHT) / 2.0,
            H - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            (TOP + H - BOTTOM) / 2.0,
            (TOP + H - BOTTOM) / 2.0,
            escape(&self.y_label)
        );
        if let Some(b) = &self.band {
            let pts: Vec<(f64, f64, f64)> = (0..b.x.len())
                .filter(|&i| b.lo[i].is_finite() && b.hi[i].is_finite())
                .map(|i| (b.x[i], b.lo[i], b.hi[i]))
                .collect();
            if !pts.is_empty() {
                let mut d = String::new();
                for (i, (x, _, hi)) in pts.iter().enumerate() {
                    let _ = write!(d, "{}{:.2} {:.2} ", if i == 0 { "M" } else { "L" }, px(*x), py(*hi));
                }
                for (x, lo, _) in pts.iter().rev() {
                    let _ = write!(d, "L{:.2} {:.2} ", px(*x), py(*lo));
                }
                let _ = writeln!(s, r##"<path d="{}Z" fill="#999999" fill-opacity="0.3" stroke="none"/>"##, d);
            }
        }
        for (k, ser) in self.series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            let mut d = String::new();
            let mut pen_up = true;
            for (x, y) in ser.x.iter().zip(&ser.y) {
                if !y.is_finite() {
                    pen_up = true;
                    continue;
                }
                let _ = write!(d, "{}{:.2} {:.2} ", if pen_up { "M" } else { "L" }, px(*x), py(*y));
                pen_up = false;
            }
            let _ = writeln!(s, r#"<path d="{}" stroke="{color}" stroke-width="2" fill="none"/>"#, d.trim_end());
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" fill="{color}">{}</text>"#,
                LEFT + 10.0,
                TOP + 14.0 * (k as f64 + 1.0),
                escape(&ser.name)
            );
        }
        s.push_str("</svg>\n");
        s
    }

    /// Long-format table of every plotted point: series, x, y (plus lo/hi for a band).
    pub fn data_table(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let with_band = self.band.is_some();
        let mut header = vec!["series".to_string(), "x".into(), "y".into()];
        if with_band {
            header.extend(["lo".to_string(), "hi".into()]);
        }
        let mut rows = Vec::new();
        for s in &self.series {
            for (x, y) in s.x.iter().zip(&s.y) {
                let mut r = vec![s.name.clone(), num(*x), num(*y)];
                if with_band {
                    r.extend([String::new(), String::new()]);
                }
                rows.push(r);
            }
        }
        if let Some(b) = &self.band {
            for i in 0..b.x.len() {
                rows.push(vec![b.name.clone(), num(b.x[i]), String::new(), num(b.lo[i]), num(b.hi[i])]);
            }
        }
        (header, rows)
    }
}
