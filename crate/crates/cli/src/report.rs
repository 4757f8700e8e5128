//! CSV and SVG emission. Floats use Rust's shortest round-trip `Display`,
//! so equal values always print identically.

use std::fmt::Write as _;

/// A CSV table built row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct Csv {
    text: String,
    width: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            text: format!("{}\n", header.join(",")),
            width: header.len(),
        }
    }

    /// Appends a row; panics if its width differs from the header.
    pub fn row(&mut self, cells: &[String]) {
        assert_eq!(cells.len(), self.width, "row width must match header");
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

/// Formats a float with the shortest decimal that parses back to it.
pub fn num(v: f64) -> String {
    format!("{v}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Fixed palette for series, cycled by index.
pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

/// Linear map from data range onto the plot area.
#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, px_lo: f64, px_hi: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        Self { lo, hi, px_lo, px_hi }
    }

    fn px(&self, v: f64) -> f64 {
        self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }

    /// Ticks at a 1, 2 or 5 times power-of-ten spacing, about five per axis.
    fn ticks(&self) -> Vec<f64> {
        let raw = (self.hi - self.lo) / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|m| m * mag)
            .find(|&s| s >= raw)
            .unwrap_or(10.0 * mag);
        let first = (self.lo / step).ceil() as i64;
        let last = (self.hi / step).floor() as i64;
        (first..=last).map(|i| i as f64 * step).collect()
    }
}

fn padded(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = 0.05 * (hi - lo).max(1e-9);
    (lo - pad, hi + pad)
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".to_string() } else { s.to_string() }
}

struct Canvas {
    out: String,
    x: Axis,
    y: Axis,
}

impl Canvas {
    fn new(title: &str, x_label: &str, y_label: &str, x: (f64, f64), y: (f64, f64)) -> Self {
        let x = Axis::new(x.0, x.1, LEFT, WIDTH - RIGHT);
        let y = Axis::new(y.0, y.1, HEIGHT - BOTTOM, TOP);
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            (LEFT + WIDTH - RIGHT) / 2.0,
            escape(title)
        );
        let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
        let _ = writeln!(
            out,
            r#"<path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 15.0,
            escape(x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(y_label)
        );
        let mut c = Self { out, x, y };
        c.y_ticks();
        c
    }

    fn y_ticks(&mut self) {
        for t in self.y.ticks() {
            let py = self.y.px(t);
            let _ = writeln!(
                self.out,
                r#"<line x1="{}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 4.0,
                LEFT - 6.0,
                py + 4.0,
                tick_label(t)
            );
        }
    }

    fn x_ticks(&mut self) {
        for t in self.x.ticks() {
            let px = self.x.px(t);
            let y0 = HEIGHT - BOTTOM;
            let _ = writeln!(
                self.out,
                r#"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{}" stroke="black"/><text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#,
                y0 + 4.0,
                y0 + 18.0,
                tick_label(t)
            );
        }
    }

    fn legend(&mut self, entries: &[(String, &str)]) {
        let x = WIDTH - RIGHT + 15.0;
        for (i, (label, color)) in entries.iter().enumerate() {
            let y = TOP + 10.0 + 20.0 * i as f64;
            let _ = writeln!(
                self.out,
                r#"<rect x="{x}" y="{}" width="12" height="12" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
                y - 10.0,
                x + 18.0,
                y,
                escape(label)
            );
        }
    }

    fn polyline(&mut self, pts: &[(f64, f64)], color: &str, dashed: bool) {
        if pts.is_empty() {
            return;
        }
        let d: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", self.x.px(x), self.y.px(y)))
            .collect();
        let dash = if dashed { r#" stroke-dasharray="5,3""# } else { "" };
        let _ = writeln!(
            self.out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            d.join(" ")
        );
    }

    fn markers(&mut self, pts: &[(f64, f64)], color: &str, square: bool) {
        for &(x, y) in pts {
            let (px, py) = (self.x.px(x), self.y.px(y));
            if square {
                let _ = writeln!(
                    self.out,
                    r#"<rect x="{:.2}" y="{:.2}" width="7" height="7" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                    px - 3.5,
                    py - 3.5
                );
            } else {
                let _ = writeln!(self.out, r#"<circle cx="{px:.2}" cy="{py:.2}" r="3.5" fill="{color}"/>"#);
            }
        }
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

/// One named series of a line or scatter chart.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub line: bool,
    pub dashed: bool,
    pub markers: bool,
}

/// Scatter and line chart on shared axes.
pub fn xy_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let xr = padded(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let yr = padded(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let mut c = Canvas::new(title, x_label, y_label, xr, yr);
    c.x_ticks();
    let mut legend = Vec::new();
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if s.line {
            c.polyline(&s.points, color, s.dashed);
        }
        if s.markers {
            c.markers(&s.points, color, s.line);
        }
        legend.push((s.label.clone(), color));
    }
    c.legend(&legend);
    c.finish()
}

/// Grouped bar chart: one group per category, one bar per series.
/// `values[s][g]` is series `s` in group `g`.
pub fn grouped_bars(
    title: &str,
    y_label: &str,
    groups: &[String],
    series: &[String],
    values: &[Vec<f64>],
) -> String {
    let (lo, hi) = padded(values.iter().flatten().copied().chain([0.0]));
    let mut c = Canvas::new(title, "", y_label, (0.0, groups.len().max(1) as f64), (lo, hi));
    let zero = c.y.px(0.0);
    let _ = writeln!(
        c.out,
        r#"<line x1="{LEFT}" y1="{zero:.2}" x2="{}" y2="{zero:.2}" stroke="gray"/>"#,
        WIDTH - RIGHT
    );
    let n = series.len().max(1) as f64;
    for (g, name) in groups.iter().enumerate() {
        let g0 = c.x.px(g as f64 + 0.1);
        let g1 = c.x.px(g as f64 + 0.9);
        let bw = (g1 - g0) / n;
        for (s, row) in values.iter().enumerate() {
            let Some(&v) = row.get(g) else { continue };
            if !v.is_finite() {
                continue;
            }
            let py = c.y.px(v);
            let (top, h) = if py < zero { (py, zero - py) } else { (zero, py - zero) };
            let _ = writeln!(
                c.out,
                r#"<rect x="{:.2}" y="{top:.2}" width="{:.2}" height="{h:.2}" fill="{}"/>"#,
                g0 + bw * s as f64,
                bw * 0.9,
                PALETTE[s % PALETTE.len()]
            );
        }
        let _ = writeln!(
            c.out,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            (g0 + g1) / 2.0,
            HEIGHT - BOTTOM + 18.0,
            escape(name)
        );
    }
    let legend: Vec<(String, &str)> = series
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), PALETTE[i % PALETTE.len()]))
        .collect();
    c.legend(&legend);
    c.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rows_and_numbers() {
        let mut t = Csv::new(&["a", "b"]);
        t.row(&[num(0.1), num(1.0)]);
        t.row(&[num(-2.5e-7), num(3.0e20)]);
        assert_eq!(t.as_str(), "a,b\n0.1,1\n-0.00000025,300000000000000000000\n");
        for v in [0.1 + 0.2, 1.0 / 3.0, 6.02214076e23, -1e-300] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    #[should_panic]
    fn csv_rejects_ragged_rows() {
        Csv::new(&["a", "b"]).row(&[num(1.0)]);
    }

    #[test]
    fn charts_are_well_formed() {
        let s = xy_chart(
            "t <1>",
            "x",
            "y",
            &[Series {
                label: "s".into(),
                points: vec![(0.0, 1.0), (1.0, 0.0)],
                line: true,
                dashed: false,
                markers: true,
            }],
        );
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("t &lt;1&gt;"));
        assert!(s.contains("<polyline"));
        let b = grouped_bars("g", "gain %", &["5".into(), "35".into()], &["dm".into(), "pdm".into()], &[vec![1.0, -2.0], vec![3.0, 4.0]]);
        assert_eq!(b.matches("<rect").count(), 1 + 4 + 2);
        assert!(!b.contains("NaN"));
    }
}
