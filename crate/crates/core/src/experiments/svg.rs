//! Minimal line plots written as standalone SVG.

use std::fmt::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub file: String,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_axis: Axis,
    pub y_axis: Axis,
    pub series: Vec<Series>,
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn transform(v: f64, axis: Axis) -> Option<f64> {
    match axis {
        Axis::Linear => v.is_finite().then_some(v),
        Axis::Log => (v > 0.0 && v.is_finite()).then(|| v.log10()),
    }
}

fn range(vals: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return None;
    }
    if hi - lo < 1e-300 {
        let pad = lo.abs().max(1.0) * 0.5;
        return Some((lo - pad, hi + pad));
    }
    Some((lo, hi))
}

fn tick_label(v: f64, axis: Axis) -> String {
    match axis {
        Axis::Linear => format!("{v:.3}"),
        Axis::Log => format!("1e{v:.1}"),
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Plot {
    /// `None` when no series has a drawable point.
    pub fn render(&self) -> Option<String> {
        let pts: Vec<Vec<(f64, f64)>> = self
            .series
            .iter()
            .map(|s| {
                s.points
                    .iter()
                    .filter_map(|&(x, y)| Some((transform(x, self.x_axis)?, transform(y, self.y_axis)?)))
                    .collect()
            })
            .collect();
        let (x0, x1) = range(pts.iter().flatten().map(|p| p.0))?;
        let (y0, y1) = range(pts.iter().flatten().map(|p| p.1))?;
        let pw = W - LEFT - RIGHT;
        let ph = H - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let xv = x0 + f * (x1 - x0);
            let yv = y0 + f * (y1 - y0);
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                sx(xv),
                TOP + ph + 18.0,
                tick_label(xv, self.x_axis)
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                LEFT - 6.0,
                sy(yv) + 4.0,
                tick_label(yv, self.y_axis)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            H - 10.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for (i, (series, p)) in self.series.iter().zip(&pts).enumerate() {
            let color = COLORS[i % COLORS.len()];
            if !p.is_empty() {
                let path: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    path.join(" ")
                );
            }
            let ly = TOP + 16.0 * (i as f64 + 1.0);
            let _ = writeln!(
                s,
                r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
                W - RIGHT + 10.0,
                W - RIGHT + 30.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
                W - RIGHT + 35.0,
                ly + 4.0,
                escape(&series.name)
            );
        }
        s.push_str("</svg>\n");
        Some(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plot(points: Vec<(f64, f64)>, y_axis: Axis) -> Plot {
        Plot {
            file: "p.svg".into(),
            title: "a < b".into(),
            x_label: "t".into(),
            y_label: "y".into(),
            x_axis: Axis::Linear,
            y_axis,
            series: vec![Series {
                name: "s".into(),
                points,
            }],
        }
    }

    #[test]
    fn empty_series_renders_nothing() {
        assert!(plot(vec![], Axis::Linear).render().is_none());
        assert!(plot(vec![(1.0, -1.0)], Axis::Log).render().is_none());
    }

    #[test]
    fn renders_polyline() {
        let s = plot(vec![(0.0, 1.0), (1.0, 0.1)], Axis::Log).render().unwrap();
        assert!(s.starts_with("<svg"));
        assert!(s.contains("<polyline"));
        assert!(s.contains("a &lt; b"));
    }
}
