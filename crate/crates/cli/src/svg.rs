//! Static SVG plots, built from the CSV files the commands write.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: [f64; 4] = [50.0, 150.0, 60.0, 70.0]; // top, right, bottom, left
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// A parsed CSV: header names and numeric rows. `#` lines are skipped,
/// booleans read as 0/1 and empty cells as NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut lines = text
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        let columns: Vec<String> = lines
            .next()
            .ok_or("empty CSV")?
            .split(',')
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for line in lines {
            let row = line
                .split(',')
                .map(|c| match c {
                    "" => Ok(f64::NAN),
                    "true" => Ok(1.0),
                    "false" => Ok(0.0),
                    _ => c.parse::<f64>().map_err(|e| format!("bad cell '{c}': {e}")),
                })
                .collect::<Result<Vec<_>, _>>()?;
            if row.len() != columns.len() {
                return Err(format!(
                    "row has {} cells, header has {}",
                    row.len(),
                    columns.len()
                ));
            }
            rows.push(row);
        }
        Ok(Self { columns, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    /// Pairs two columns, dropping rows where either is not finite.
    pub fn from_columns(name: &str, x: &[f64], y: &[f64]) -> Self {
        let points = x
            .iter()
            .zip(y)
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(a, b)| (*a, *b))
            .collect();
        Self {
            name: name.to_string(),
            points,
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Round tick spacing giving about `n` ticks over `span`.
fn tick_step(span: f64, n: f64) -> f64 {
    let raw = span / n;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm < 1.5 {
        1.0
    } else if norm < 3.5 {
        2.0
    } else if norm < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn bounds(values: impl Iterator<Item = f64>, include_zero: bool) -> (f64, f64) {
    let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if include_zero {
        lo = lo.min(0.0);
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    (lo, hi)
}

fn header(out: &mut String, title: &str, desc: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, "<desc>{}</desc>", escape(desc));
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="25" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

/// Line plot of several series on shared axes, legend on the right.
pub fn line_plot(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    desc: &str,
) -> String {
    let [top, right, bottom, left] = MARGIN;
    let (pw, ph) = (WIDTH - left - right, HEIGHT - top - bottom);
    let all = || series.iter().flat_map(|s| s.points.iter());
    let (x0, x1) = bounds(all().map(|p| p.0), false);
    let (y0, y1) = bounds(all().map(|p| p.1), true);
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

    let mut out = String::new();
    header(&mut out, title, desc);
    let _ = writeln!(
        out,
        r#"<rect x="{left:.1}" y="{top:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="black"/>"#
    );
    for (lo, hi, horizontal) in [(x0, x1, true), (y0, y1, false)] {
        let step = tick_step(hi - lo, 6.0);
        let mut t = (lo / step).ceil() * step;
        while t <= hi + 1e-9 * step {
            let label = format!("{}", (t / step).round() * step);
            let label = label.trim_end_matches('0').to_string();
            let label = if label.ends_with('.') {
                label.trim_end_matches('.').to_string()
            } else {
                label
            };
            if horizontal {
                let x = sx(t);
                let _ = writeln!(
                    out,
                    r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{top:.1}" stroke="#ddd"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{label}</text>"##,
                    top + ph,
                    top + ph + 16.0
                );
            } else {
                let y = sy(t);
                let _ = writeln!(
                    out,
                    r##"<line x1="{left:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{label}</text>"##,
                    left + pw,
                    left - 6.0,
                    y + 4.0
                );
            }
            t += step;
        }
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        HEIGHT - 20.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{}"/>"#,
            pts.join(" ")
        );
        for &(x, y) in &s.points {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{color}"/>"#,
                sx(x),
                sy(y)
            );
        }
        let ly = top + 10.0 + 18.0 * i as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 18.0,
            lx + 24.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Two side-by-side heat maps of `mu1` and `mu2` over `(z1, z2)`.
pub fn power_maps(title: &str, table: &Table, desc: &str) -> Result<String, String> {
    let col = |n: &str| table.column(n).ok_or(format!("missing column {n}"));
    let (z1, z2) = (col("z1")?, col("z2")?);
    let mus = [col("mu1")?, col("mu2")?];
    let grid = |v: &[f64]| {
        let mut u: Vec<f64> = v.to_vec();
        u.sort_by(f64::total_cmp);
        u.dedup();
        u
    };
    let (g1, g2) = (grid(&z1), grid(&z2));
    let top_mu = mus.iter().flatten().cloned().fold(0.0, f64::max).max(1e-12);
    let size = 250.0;
    let (c1, c2) = (size / g1.len() as f64, size / g2.len() as f64);

    let mut out = String::new();
    header(&mut out, title, desc);
    for (panel, mu) in mus.iter().enumerate() {
        let ox = 60.0 + panel as f64 * (size + 60.0);
        let oy = 70.0;
        for ((a, b), m) in z1.iter().zip(&z2).zip(mu) {
            let i = g1.partition_point(|g| g < a) as f64;
            let k = g2.partition_point(|g| g < b) as f64;
            // white at zero power, dark blue at the largest level
            let shade = 255.0 - 200.0 * (m / top_mu).clamp(0.0, 1.0);
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({:.0},{:.0},255)"/>"#,
                ox + i * c1,
                oy + size - (k + 1.0) * c2,
                c1 + 0.05,
                c2 + 0.05,
                shade,
                shade
            );
        }
        let _ = writeln!(
            out,
            r#"<rect x="{ox:.1}" y="{oy:.1}" width="{size}" height="{size}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">mu{} (max {:.3})</text>"#,
            ox + size / 2.0,
            oy - 8.0,
            panel + 1,
            top_mu
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">z1 (0 to {})</text>"#,
            ox + size / 2.0,
            oy + size + 20.0,
            g1.last().copied().unwrap_or(0.0)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" transform="rotate(-90 {:.1} {:.1})">z2</text>"#,
            ox - 12.0,
            oy + size / 2.0,
            ox - 12.0,
            oy + size / 2.0
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}
