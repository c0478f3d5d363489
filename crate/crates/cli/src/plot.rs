//! Static SVG figures: exponent curves and bifurcation scatter plots.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};

use crate::output::{read_bifurcation, read_tle_grid};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#2ca02c", "#9467bd", "#8c564b", "#17becf", "#7f7f7f"];

/// A curve of `(x, y, converged)` points.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64, bool)>,
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64>, include_zero: bool) -> Self {
        let span = |it: &mut dyn Iterator<Item = f64>| {
            it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        };
        let mut x = span(&mut xs.clone());
        let mut y = span(&mut ys.into_iter());
        if include_zero {
            y = (y.0.min(0.0), y.1.max(0.0));
        }
        for r in [&mut x, &mut y] {
            if r.1 - r.0 <= f64::EPSILON * r.0.abs().max(1.0) {
                let pad = 0.5 * r.0.abs().max(1.0);
                *r = (r.0 - pad, r.1 + pad);
            } else {
                let pad = 0.05 * (r.1 - r.0);
                *r = (r.0 - pad, r.1 + pad);
            }
        }
        Frame { x, y }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - TOP - BOTTOM)
    }
}

/// About five round tick values covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn label(v: f64) -> String {
    let s = format!("{:.4}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn open(title: &str, frame: &Frame, x_label: &str, y_label: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(title));
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (HEIGHT - BOTTOM, TOP);
    let _ = writeln!(s, r#"<rect class="axes" x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y0 - y1);
    for t in ticks(frame.x.0, frame.x.1) {
        let px = frame.px(t);
        let _ = writeln!(s, r#"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{}" stroke="black"/>"#, y0 + 5.0);
        let _ = writeln!(s, r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#, y0 + 19.0, label(t));
    }
    for t in ticks(frame.y.0, frame.y.1) {
        let py = frame.py(t);
        let _ = writeln!(s, r#"<line x1="{}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/>"#, x0 - 5.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, x0 - 8.0, py + 4.0, label(t));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, HEIGHT - 18.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="20" y="{0}" text-anchor="middle" transform="rotate(-90 20 {0})">{1}</text>"#,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Exponent curves with a zero line. Unconverged points are drawn as open
/// red circles, converged ones filled.
pub fn tle_svg(series: &[Series], x_label: &str, title: &str) -> Result<String> {
    let all = || series.iter().flat_map(|s| s.points.iter());
    if all().next().is_none() {
        bail!("nothing to plot: no exponent values");
    }
    let frame = Frame::new(all().map(|p| p.0), all().map(|p| p.1), true);
    let mut s = open(title, &frame, x_label, "transversal Lyapunov exponent");
    let zero = frame.py(0.0);
    let _ = writeln!(
        s,
        r#"<line class="zero" x1="{LEFT}" y1="{zero:.2}" x2="{}" y2="{zero:.2}" stroke="gray" stroke-dasharray="6 4"/>"#,
        WIDTH - RIGHT
    );
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = ser
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", frame.px(p.0), frame.py(p.1)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="curve" fill="none" stroke="{color}" stroke-width="1.5" points="{}"><title>{}</title></polyline>"#,
            pts.join(" "),
            escape(&ser.label)
        );
        for &(x, y, converged) in &ser.points {
            let (cx, cy) = (frame.px(x), frame.py(y));
            if converged {
                let _ = writeln!(s, r#"<circle class="converged" cx="{cx:.2}" cy="{cy:.2}" r="3" fill="{color}"/>"#);
            } else {
                let _ = writeln!(
                    s,
                    r##"<circle class="unconverged" cx="{cx:.2}" cy="{cy:.2}" r="4" fill="white" stroke="#d62728" stroke-width="1.5"/>"##
                );
            }
        }
    }
    if series.len() > 1 {
        for (i, ser) in series.iter().enumerate() {
            let y = TOP + 16.0 + 16.0 * i as f64;
            let x = WIDTH - RIGHT - 150.0;
            let _ = writeln!(
                s,
                r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                x + 20.0,
                COLORS[i % COLORS.len()],
                x + 26.0,
                y + 4.0,
                escape(&ser.label)
            );
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// One marker per `(sigma, maximum)` pair.
pub fn bifurcation_svg(points: &[(f64, f64)], title: &str) -> Result<String> {
    if points.is_empty() {
        bail!("nothing to plot: no bifurcation points");
    }
    let frame = Frame::new(points.iter().map(|p| p.0), points.iter().map(|p| p.1), true);
    let mut s = open(title, &frame, "coupling strength sigma", "local maxima of |x1 - x2|");
    for &(x, y) in points {
        let _ = writeln!(
            s,
            r#"<circle class="marker" cx="{:.2}" cy="{:.2}" r="1.2" fill="black"/>"#,
            frame.px(x),
            frame.py(y)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn open_csv(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))
}

/// Plots a TLE grid file against alpha, one curve per beta. With `vs_sigma`
/// the real-axis points with `alpha <= 0` are drawn against
/// `sigma = -alpha / 2` instead.
pub fn plot_tle_csv(csv: &Path, svg: &Path, vs_sigma: bool) -> Result<()> {
    let rows = read_tle_grid(open_csv(csv)?).with_context(|| csv.display().to_string())?;
    let mut series: Vec<(f64, Series)> = Vec::new();
    for r in rows {
        let (x, keep) = if vs_sigma { (-r.alpha / 2.0, r.beta == 0.0 && r.alpha <= 0.0) } else { (r.alpha, true) };
        if !keep {
            continue;
        }
        let idx = match series.iter().position(|(b, _)| *b == r.beta) {
            Some(i) => i,
            None => {
                series.push((r.beta, Series { label: format!("beta = {}", label(r.beta)), points: Vec::new() }));
                series.len() - 1
            }
        };
        series[idx].1.points.push((x, r.tle, r.converged));
    }
    let mut series: Vec<Series> = series.into_iter().map(|(_, s)| s).collect();
    if vs_sigma {
        for s in &mut series {
            s.points.reverse();
        }
    }
    let (x_label, title) = if vs_sigma {
        ("coupling strength sigma (alpha = -2 sigma)", "Two-node transversal exponent")
    } else {
        ("alpha", "Master stability function")
    };
    let text = tle_svg(&series, x_label, title)?;
    std::fs::write(svg, text).with_context(|| format!("writing {}", svg.display()))
}

pub fn plot_bifurcation_csv(csv: &Path, svg: &Path) -> Result<()> {
    let rows = read_bifurcation(open_csv(csv)?).with_context(|| csv.display().to_string())?;
    let text = bifurcation_svg(&rows, "Two-oscillator probe bifurcation diagram")?;
    std::fs::write(svg, text).with_context(|| format!("writing {}", svg.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(points: Vec<(f64, f64, bool)>) -> Vec<Series> {
        vec![Series { label: "beta = 0".into(), points }]
    }

    #[test]
    fn polyline_has_one_vertex_per_row() {
        let svg = tle_svg(&series(vec![(-2.0, -0.05, true), (-1.0, 0.02, true), (0.0, 0.03, true)]), "alpha", "t").unwrap();
        let line = svg.lines().find(|l| l.contains("<polyline")).unwrap();
        let points = line.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(points.split(' ').count(), 3);
        assert_eq!(svg.matches("class=\"zero\"").count(), 1);
    }

    #[test]
    fn unconverged_points_are_marked_differently() {
        let svg = tle_svg(&series(vec![(0.0, 0.1, true), (1.0, 0.2, false), (2.0, -0.1, false)]), "alpha", "t").unwrap();
        assert_eq!(svg.matches("class=\"converged\"").count(), 1);
        assert_eq!(svg.matches("class=\"unconverged\"").count(), 2);
    }

    #[test]
    fn bifurcation_has_one_marker_per_row() {
        let pts = [(0.0, 0.5), (0.0, 0.7), (0.1, 0.0), (0.2, 1.1)];
        let svg = bifurcation_svg(&pts, "t").unwrap();
        assert_eq!(svg.matches("class=\"marker\"").count(), 4);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(tle_svg(&[], "alpha", "t").is_err());
        assert!(tle_svg(&series(vec![]), "alpha", "t").is_err());
        assert!(bifurcation_svg(&[], "t").is_err());
    }

    #[test]
    fn single_point_still_gets_a_frame() {
        let svg = tle_svg(&series(vec![(0.0, 0.0, true)]), "alpha", "t").unwrap();
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }

    #[test]
    fn tick_values_are_round() {
        assert_eq!(ticks(0.0, 1.0), vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        assert_eq!(label(0.6000000000000001), "0.6");
        assert_eq!(label(-0.0), "0");
    }
}
