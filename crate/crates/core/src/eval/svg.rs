//! Static line charts of bias and empirical SE by horizon.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::longdata::Comparison;

use super::{EvalError, PerformanceReport};

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 320.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 6] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"];

/// A point with a symmetric error bar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub y_label: String,
    pub series: Vec<(String, Vec<Point>)>,
    /// Draws a dashed line at zero.
    pub zero_line: bool,
}

fn bounds(panel: &Panel) -> (f64, f64, f64, f64) {
    let pts = panel.series.iter().flat_map(|s| s.1.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in pts {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y - p.err);
        y1 = y1.max(p.y + p.err);
    }
    if panel.zero_line {
        y0 = y0.min(0.0);
        y1 = y1.max(0.0);
    }
    if x0 > x1 {
        return (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    let pad = ((y1 - y0) * 0.08).max(1e-6);
    (x0, x1, y0 - pad, y1 + pad)
}

/// Renders one panel as a standalone SVG document.
pub fn render_panel(panel: &Panel) -> String {
    let (x0, x1, y0, y1) = bounds(panel);
    let plot_w = WIDTH - 2.0 * MARGIN - 90.0;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        MARGIN + plot_w / 2.0,
        escape(&panel.title)
    );
    let _ = writeln!(
        s,
        r#"<path d="M{l},{t} L{l},{b} L{r},{b}" stroke="black" fill="none"/>"#,
        l = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN,
        r = MARGIN + plot_w
    );
    for h in (x0.ceil() as i64)..=(x1.floor() as i64) {
        let x = sx(h as f64);
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{h}</text>"#,
            HEIGHT - MARGIN + 14.0
        );
    }
    for k in 0..=4 {
        let v = y0 + (y1 - y0) * f64::from(k) / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.3}</text>"#,
            MARGIN - 4.0,
            sy(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">horizon (years)</text>"#,
        MARGIN + plot_w / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="12" y="{:.1}" transform="rotate(-90 12 {:.1})" text-anchor="middle">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(&panel.y_label)
    );
    if panel.zero_line && y0 < 0.0 && y1 > 0.0 {
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#888" stroke-dasharray="4 3"/>"##,
            MARGIN,
            MARGIN + plot_w,
            y = sy(0.0)
        );
    }
    for (k, (name, pts)) in panel.series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        // small horizontal offsets keep error bars apart
        let dx = (k as f64 - (panel.series.len() as f64 - 1.0) / 2.0) * 0.04;
        let path: Vec<String> = pts
            .iter()
            .map(|p| format!("{:.1},{:.1}", sx(p.x + dx), sy(p.y)))
            .collect();
        if !path.is_empty() {
            let _ = writeln!(
                s,
                r#"<polyline points="{}" stroke="{color}" fill="none" stroke-width="1.5"/>"#,
                path.join(" ")
            );
        }
        for p in pts {
            let x = sx(p.x + dx);
            let _ = writeln!(
                s,
                r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="{color}"/><circle cx="{x:.1}" cy="{:.1}" r="2.5" fill="{color}"/>"#,
                sy(p.y - p.err),
                sy(p.y + p.err),
                sy(p.y)
            );
        }
        let ly = MARGIN + 14.0 * k as f64;
        let lx = MARGIN + plot_w + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 14.0,
            lx + 18.0,
            ly + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes one bias panel and one empirical-SE panel per scenario and
/// comparison into `dir`, with error bars of 1.96 Monte Carlo SEs.
pub fn write_svg_panels(report: &PerformanceReport, dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for scenario in report.scenarios() {
        for cmp in Comparison::ALL {
            for (kind, label) in [("bias", "bias"), ("empse", "empirical SE")] {
                let series: Vec<(String, Vec<Point>)> = report
                    .methods()
                    .into_iter()
                    .map(|m| {
                        let mut pts: Vec<Point> = report
                            .rows
                            .iter()
                            .filter(|r| r.scenario == scenario && r.method == m && r.estimand.comparison == cmp)
                            .map(|r| {
                                let (y, mcse) = if kind == "bias" {
                                    (r.bias, r.bias_mcse)
                                } else {
                                    (r.empse, r.empse_mcse)
                                };
                                Point {
                                    x: r.estimand.horizon as f64,
                                    y,
                                    err: 1.96 * mcse,
                                }
                            })
                            .collect();
                        pts.sort_by(|a, b| a.x.total_cmp(&b.x));
                        (m.id().to_string(), pts)
                    })
                    .filter(|(_, pts)| !pts.is_empty())
                    .collect();
                if series.is_empty() {
                    continue;
                }
                let panel = Panel {
                    title: format!("Scenario {scenario}, {}: {label}", cmp.label()),
                    y_label: label.to_string(),
                    series,
                    zero_line: kind == "bias",
                };
                let path = dir.join(format!("s{scenario}_{kind}_{}.svg", cmp.label().replace('-', "_vs_")));
                std::fs::write(&path, render_panel(&panel))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_series_and_error_bars() {
        let panel = Panel {
            title: "t <1>".into(),
            y_label: "bias".into(),
            series: vec![(
                "iptw".into(),
                (1..=5)
                    .map(|h| Point {
                        x: h as f64,
                        y: 0.01 * h as f64,
                        err: 0.005,
                    })
                    .collect(),
            )],
            zero_line: true,
        };
        let svg = render_panel(&panel);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 5);
        assert!(svg.contains("t &lt;1&gt;"));
    }
}
