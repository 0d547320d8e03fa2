//! Static SVG plots with CSV sidecars.

use std::fmt::Write as _;

use ridgenet_core::tuning::CnCurve;

use crate::error::{input, CliResult};
use crate::io::fmt_f64;

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 320.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 32.0;
const MARGIN_B: f64 = 48.0;

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Plots `log10(x)` with the x axis labelled in decades.
    pub log_x: bool,
    pub series: Vec<Series>,
    pub marker: Option<f64>,
}

/// Data range padded by 5% on each side. A constant series spans `|c|`
/// (or 1 when `c == 0`) before padding.
pub fn axis_range(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.into_iter().filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        return (0.0, 1.0);
    }
    if hi == lo {
        let half = if lo == 0.0 { 0.5 } else { lo.abs() / 2.0 };
        lo -= half;
        hi += half;
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn render_panel(out: &mut String, panel: &Panel, ox: f64, oy: f64) {
    let fx = |x: f64| if panel.log_x { x.log10() } else { x };
    let xs = panel.series.iter().flat_map(|s| s.xs.iter().map(|&x| fx(x)));
    let (x0, x1) = axis_range(xs.chain(panel.marker.map(fx)));
    let (y0, y1) = axis_range(panel.series.iter().flat_map(|s| s.ys.iter().copied()));
    let (pl, pr) = (ox + MARGIN_L, ox + PANEL_W - MARGIN_R);
    let (pt, pb) = (oy + MARGIN_T, oy + PANEL_H - MARGIN_B);
    let sx = |x: f64| pl + (x - x0) / (x1 - x0) * (pr - pl);
    let sy = |y: f64| pb - (y - y0) / (y1 - y0) * (pb - pt);

    let _ = writeln!(
        out,
        r##"<rect x="{pl:.2}" y="{pt:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#333"/>"##,
        pr - pl,
        pb - pt
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="14">{}</text>"#,
        (pl + pr) / 2.0,
        oy + 20.0,
        escape(&panel.title)
    );
    for t in ticks(x0, x1) {
        let label = if panel.log_x { format!("1e{}", tick_label(t)) } else { tick_label(t) };
        let _ = writeln!(
            out,
            r##"<line x1="{0:.2}" y1="{pb:.2}" x2="{0:.2}" y2="{1:.2}" stroke="#333"/><text x="{0:.2}" y="{2:.2}" text-anchor="middle" font-size="10">{label}</text>"##,
            sx(t),
            pb + 4.0,
            pb + 16.0
        );
    }
    for t in ticks(y0, y1) {
        let _ = writeln!(
            out,
            r##"<line x1="{0:.2}" y1="{1:.2}" x2="{pl:.2}" y2="{1:.2}" stroke="#333"/><text x="{2:.2}" y="{3:.2}" text-anchor="end" font-size="10">{4}</text>"##,
            pl - 4.0,
            sy(t),
            pl - 6.0,
            sy(t) + 3.0,
            tick_label(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12">{}</text>"#,
        (pl + pr) / 2.0,
        oy + PANEL_H - 12.0,
        escape(&panel.x_label)
    );
    let (yx, yy) = (ox + 14.0, (pt + pb) / 2.0);
    let _ = writeln!(
        out,
        r#"<text x="{yx:.2}" y="{yy:.2}" text-anchor="middle" font-size="12" transform="rotate(-90 {yx:.2} {yy:.2})">{}</text>"#,
        escape(&panel.y_label)
    );
    for (k, s) in panel.series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let points: Vec<String> = s
            .xs
            .iter()
            .zip(&s.ys)
            .filter(|(x, y)| fx(**x).is_finite() && y.is_finite())
            .map(|(&x, &y)| format!("{:.2},{:.2}", sx(fx(x)), sy(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        if panel.series.len() > 1 {
            let ly = pt + 14.0 + 14.0 * k as f64;
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}" font-size="10">{}</text>"#,
                pr - 90.0,
                pr - 70.0,
                pr - 66.0,
                ly + 3.0,
                escape(&s.name)
            );
        }
    }
    if let Some(m) = panel.marker {
        let x = sx(fx(m));
        let _ = writeln!(
            out,
            r##"<line x1="{x:.2}" y1="{pt:.2}" x2="{x:.2}" y2="{pb:.2}" stroke="#555" stroke-dasharray="4 3" class="marker"/>"##
        );
    }
}

/// Panels side by side in one SVG document.
pub fn render(panels: &[Panel]) -> CliResult<String> {
    if panels.is_empty() || panels.iter().any(|p| p.series.is_empty() || p.series.iter().any(|s| s.xs.is_empty())) {
        return Err(input("nothing to plot: empty series"));
    }
    let width = PANEL_W * panels.len() as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{PANEL_H}" viewBox="0 0 {width} {PANEL_H}" font-family="sans-serif">
<rect width="100%" height="100%" fill="white"/>"#
    );
    for (k, p) in panels.iter().enumerate() {
        render_panel(&mut out, p, PANEL_W * k as f64, 0.0);
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Condition number against the penalty, its log10 and its curvature, with
/// an optional vertical line at a chosen penalty.
pub fn cn_plot(curve: &CnCurve, marker: Option<f64>) -> CliResult<String> {
    let panel = |title: &str, y_label: &str, ys: &[f64]| Panel {
        title: title.into(),
        x_label: "penalty".into(),
        y_label: y_label.into(),
        log_x: true,
        series: vec![Series {
            name: y_label.into(),
            xs: curve.lambdas.clone(),
            ys: ys.to_vec(),
        }],
        marker,
    };
    render(&[
        panel("Condition number", "condition number", &curve.kappas),
        panel("Loss in digits", "log10 condition number", &curve.digits_loss),
        panel("Curvature", "second difference", &curve.curvature),
    ])
}

/// Gaussian kernel density estimate at each grid point.
pub fn gaussian_kde(values: &[f64], grid: &[f64], bandwidth: f64) -> Vec<f64> {
    let n = values.len() as f64;
    let norm = 1.0 / (n * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    grid.iter()
        .map(|&g| {
            values
                .iter()
                .map(|&v| {
                    let z = (g - v) / bandwidth;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect()
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule `0.9 min(sd, IQR/1.34) n^(-1/5)`, falling back to the
/// larger spread measure, then to 1, when it degenerates.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 1.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = (quantile(&sorted, 0.75) - quantile(&sorted, 0.25)) / 1.34;
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr),
        (true, false) => sd,
        (false, true) => iqr,
        (false, false) => return 1.0,
    };
    0.9 * spread * (n as f64).powf(-0.2)
}

/// Density traces of several degree sequences on a shared grid.
#[derive(Debug, Clone)]
pub struct DegreeDensities {
    pub grid: Vec<f64>,
    pub traces: Vec<(String, Vec<f64>)>,
}

pub fn degree_densities(sequences: &[(String, Vec<f64>)], points: usize) -> CliResult<DegreeDensities> {
    if sequences.is_empty() || sequences.iter().any(|(_, d)| d.is_empty()) {
        return Err(input("nothing to plot: empty degree sequence"));
    }
    let bws: Vec<f64> = sequences.iter().map(|(_, d)| silverman_bandwidth(d)).collect();
    let lo = sequences
        .iter()
        .zip(&bws)
        .map(|((_, d), h)| d.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h)
        .fold(f64::INFINITY, f64::min);
    let hi = sequences
        .iter()
        .zip(&bws)
        .map(|((_, d), h)| d.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h)
        .fold(f64::NEG_INFINITY, f64::max);
    let grid: Vec<f64> = (0..points)
        .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
        .collect();
    let traces = sequences
        .iter()
        .zip(&bws)
        .map(|((name, d), &h)| (name.clone(), gaussian_kde(d, &grid, h)))
        .collect();
    Ok(DegreeDensities { grid, traces })
}

impl DegreeDensities {
    pub fn to_svg(&self) -> CliResult<String> {
        render(&[Panel {
            title: "Degree distributions".into(),
            x_label: "degree".into(),
            y_label: "density".into(),
            log_x: false,
            series: self
                .traces
                .iter()
                .map(|(name, ys)| Series {
                    name: name.clone(),
                    xs: self.grid.clone(),
                    ys: ys.clone(),
                })
                .collect(),
            marker: None,
        }])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("degree");
        for (name, _) in &self.traces {
            s.push(',');
            s.push_str(name);
        }
        s.push('\n');
        for (k, g) in self.grid.iter().enumerate() {
            s.push_str(&fmt_f64(*g));
            for (_, ys) in &self.traces {
                s.push(',');
                s.push_str(&fmt_f64(ys[k]));
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ridgenet_core::SymMatrix;

    #[test]
    fn constant_series_is_padded() {
        let (lo, hi) = axis_range([2.0, 2.0, 2.0]);
        assert!((lo - 0.9).abs() < 1e-15 && (hi - 3.1).abs() < 1e-15);
        let (lo, hi) = axis_range([0.0]);
        assert!((lo + 0.55).abs() < 1e-15 && (hi - 0.55).abs() < 1e-15);
        let (lo, hi) = axis_range([1.0, 3.0]);
        assert!((lo - 0.9).abs() < 1e-15 && (hi - 3.1).abs() < 1e-15);
    }

    #[test]
    fn identity_curve_is_flat() {
        let i = SymMatrix::identity(ridgenet_core::linalg::default_names(4));
        let curve = ridgenet_core::tuning::cn_curve(&i, &i, 1e-3, 1e3, 25).unwrap();
        assert!(curve.kappas.iter().all(|&k| (k - 1.0).abs() < 1e-12));
        let svg = cn_plot(&curve, Some(1.0)).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert_eq!(svg.matches("class=\"marker\"").count(), 3);
        // a flat line: every y coordinate of the first trace is the same
        let first = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        let ys: Vec<&str> = first.split(' ').map(|p| p.split(',').nth(1).unwrap()).collect();
        assert!(ys.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn empty_series_is_rejected() {
        let p = Panel {
            title: String::new(),
            x_label: String::new(),
            y_label: String::new(),
            log_x: false,
            series: vec![Series { name: "a".into(), xs: vec![], ys: vec![] }],
            marker: None,
        };
        assert!(render(&[p]).is_err());
    }

    #[test]
    fn kde_matches_direct_sum() {
        // oracle: the density as a sum of normal pdfs, written out from statrs
        use statrs::distribution::{Continuous, Normal};
        let a = vec![1.0, 2.0, 2.0, 3.0, 5.0, 1.0, 0.0];
        let b = vec![4.0, 4.0, 6.0, 3.0, 5.0, 7.0];
        let dens = degree_densities(&[("A".into(), a.clone()), ("B".into(), b.clone())], 101).unwrap();
        for ((_, trace), data) in dens.traces.iter().zip([&a, &b]) {
            let n = data.len() as f64;
            let mean = data.iter().sum::<f64>() / n;
            let sd = (data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            let mut s = data.clone();
            s.sort_by(f64::total_cmp);
            let q = |p: f64| {
                let h = (n - 1.0) * p;
                s[h.floor() as usize] + (h - h.floor()) * (s[h.ceil() as usize] - s[h.floor() as usize])
            };
            let h = 0.9 * sd.min((q(0.75) - q(0.25)) / 1.34) * n.powf(-0.2);
            for (g, d) in dens.grid.iter().zip(trace) {
                let want: f64 = data.iter().map(|&v| Normal::new(v, h).unwrap().pdf(*g)).sum::<f64>() / n;
                assert!((d - want).abs() < 1e-14, "{d} vs {want}");
            }
            let step = dens.grid[1] - dens.grid[0];
            let mass: f64 = trace.iter().sum::<f64>() * step;
            assert!((mass - 1.0).abs() < 1e-3, "{mass}");
        }
        let svg = dens.to_svg().unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(dens.to_csv().lines().count(), 102);
    }

    #[test]
    fn ticks_cover_range() {
        let t = ticks(-0.05, 1.05);
        assert_eq!(t.first(), Some(&0.0));
        assert!((t.last().unwrap() - 1.0).abs() < 1e-12);
    }
}
