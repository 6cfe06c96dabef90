//! Minimal self-contained SVG plots.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str, xlabel: &str, ylabel: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>
<text x="{}" y="{}" text-anchor="middle">{}</text>
<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>
"#,
        (LEFT + W - RIGHT) / 2.0,
        escape(title),
        (LEFT + W - RIGHT) / 2.0,
        H - 12.0,
        escape(xlabel),
        (TOP + H - BOTTOM) / 2.0,
        (TOP + H - BOTTOM) / 2.0,
        escape(ylabel),
    );
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-300 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn ticks(out: &mut String, xr: (f64, f64), yr: (f64, f64)) {
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let u = i as f64 / 4.0;
        let x = LEFT + u * pw;
        let y = H - BOTTOM - u * ph;
        let _ = writeln!(
            out,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{:.3}</text>"#,
            H - BOTTOM + 16.0,
            xr.0 + u * (xr.1 - xr.0)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.3}</text>"#,
            LEFT - 6.0,
            y + 4.0,
            yr.0 + u * (yr.1 - yr.0)
        );
    }
}

pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let mut out = String::new();
    header(&mut out, title, xlabel, ylabel);
    let xr = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let yr = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    ticks(&mut out, xr, yr);
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| {
                format!(
                    "{:.2},{:.2}",
                    LEFT + (x - xr.0) / (xr.1 - xr.0) * pw,
                    H - BOTTOM - (y - yr.0) / (yr.1 - yr.0) * ph
                )
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = TOP + 16.0 * (i as f64 + 1.0);
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            W - RIGHT + 10.0,
            W - RIGHT + 30.0,
            W - RIGHT + 35.0,
            ly + 4.0,
            escape(s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn ramp(u: f64) -> String {
    // Dark blue to yellow.
    let u = u.clamp(0.0, 1.0);
    let r = (68.0 + u * (253.0 - 68.0)) as u8;
    let g = (1.0 + u * (231.0 - 1.0)) as u8;
    let b = (84.0 + u * (37.0 - 84.0)) as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Cells are given row-major over `(x index, y index)`; colours come from `fill`.
fn grid(
    title: &str,
    xlabel: &str,
    ylabel: &str,
    nx: usize,
    ny: usize,
    fill: impl Fn(usize) -> String,
    legend: &[(String, String)],
) -> String {
    let mut out = String::new();
    header(&mut out, title, xlabel, ylabel);
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let cw = pw / nx.max(1) as f64;
    let ch = ph / ny.max(1) as f64;
    for ix in 0..nx {
        for iy in 0..ny {
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                LEFT + ix as f64 * cw,
                H - BOTTOM - (iy + 1) as f64 * ch,
                cw + 0.05,
                ch + 0.05,
                fill(ix * ny + iy)
            );
        }
    }
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for (i, (color, label)) in legend.iter().enumerate() {
        let ly = TOP + 18.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{:.1}" y="{ly:.1}" width="12" height="12" fill="{color}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            W - RIGHT + 10.0,
            W - RIGHT + 28.0,
            ly + 10.0,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}

pub fn heatmap(title: &str, xlabel: &str, ylabel: &str, nx: usize, ny: usize, values: &[f64]) -> String {
    let (lo, hi) = bounds(values.iter().copied());
    let legend = vec![
        (ramp(0.0), format!("{lo:.4}")),
        (ramp(0.5), format!("{:.4}", 0.5 * (lo + hi))),
        (ramp(1.0), format!("{hi:.4}")),
    ];
    grid(
        title,
        xlabel,
        ylabel,
        nx,
        ny,
        |i| {
            let v = values[i];
            if v.is_finite() {
                ramp((v - lo) / (hi - lo))
            } else {
                "#bbbbbb".into()
            }
        },
        &legend,
    )
}

pub fn categorical(title: &str, xlabel: &str, ylabel: &str, nx: usize, ny: usize, labels: &[&str]) -> String {
    let mut names: Vec<&str> = labels.to_vec();
    names.sort_unstable();
    names.dedup();
    let color = |name: &str| COLORS[names.iter().position(|n| *n == name).unwrap_or(0) % COLORS.len()].to_string();
    let legend: Vec<(String, String)> = names.iter().map(|n| (color(n), n.to_string())).collect();
    grid(title, xlabel, ylabel, nx, ny, |i| color(labels[i]), &legend)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_plot_is_well_formed() {
        let s = line_plot(
            "a < b",
            "t",
            "y",
            &[Series {
                name: "one",
                points: vec![(0.0, 0.0), (1.0, 2.0)],
            }],
        );
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("a &lt; b"));
        assert_eq!(s.matches("<polyline").count(), 1);
    }

    #[test]
    fn heatmap_has_one_cell_per_value() {
        let s = heatmap("J", "x", "y", 2, 3, &[1.0, 2.0, 3.0, 4.0, f64::NAN, 6.0]);
        // 6 cells, frame, background and 3 legend swatches.
        assert_eq!(s.matches("<rect").count(), 6 + 1 + 1 + 3);
        assert!(s.contains("#bbbbbb"));
    }
}
