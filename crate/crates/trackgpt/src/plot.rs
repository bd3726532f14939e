//! SVG rendering of forecast GeoJSON and report error curves.

use std::fmt::Write as _;

use crate::geojson::{ParsedFeature, Shape};

const W: f64 = 800.0;
const H: f64 = 600.0;
const MARGIN: f64 = 40.0;

fn open(out: &mut String) {
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(out, r##"<rect width="{W}" height="{H}" fill="#ffffff"/>"##);
}

fn style(kind: Option<&str>) -> (&'static str, &'static str, f64) {
    match kind {
        Some("prompt") => ("prompt", "#202020", 2.0),
        Some("sample") => ("sample", "#7fa7d9", 1.0),
        Some("mean_route") => ("mean_route", "#d62728", 2.5),
        Some("consensus_destination") => ("consensus_destination", "#d62728", 1.0),
        _ => ("feature", "#555555", 1.5),
    }
}

/// Equirectangular map around the data's mean latitude, fitted to the
/// canvas with equal scale on both axes. One polyline per line feature.
pub fn tracks_svg(features: &[ParsedFeature]) -> String {
    let pts: Vec<(f64, f64)> = features
        .iter()
        .filter_map(|f| f.shape.as_ref())
        .flat_map(|s| match s {
            Shape::Line(p) => p.clone(),
            Shape::Point(x, y) => vec![(*x, *y)],
        })
        .collect();
    let mut out = String::new();
    open(&mut out);
    if !pts.is_empty() {
        let lat_mid = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
        let kx = lat_mid.to_radians().cos().max(1e-6);
        let xs = pts.iter().map(|p| p.0 * kx);
        let (x0, x1) = xs.clone().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        let (y0, y1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
        let scale = ((W - 2.0 * MARGIN) / (x1 - x0).max(1e-12)).min((H - 2.0 * MARGIN) / (y1 - y0).max(1e-12));
        let map = |(lon, lat): (f64, f64)| (MARGIN + (lon * kx - x0) * scale, H - MARGIN - (lat - y0) * scale);
        for f in features {
            let (class, color, width) = style(f.kind.as_deref());
            match &f.shape {
                Some(Shape::Line(p)) => {
                    let coords: Vec<String> = p.iter().map(|&q| {
                        let (x, y) = map(q);
                        format!("{x:.2},{y:.2}")
                    }).collect();
                    let _ = writeln!(
                        out,
                        r#"<polyline class="{class}" points="{}" fill="none" stroke="{color}" stroke-width="{width}"/>"#,
                        coords.join(" ")
                    );
                }
                Some(Shape::Point(lon, lat)) => {
                    let (x, y) = map((*lon, *lat));
                    let _ = writeln!(out, r#"<circle class="{class}" cx="{x:.2}" cy="{y:.2}" r="4" fill="{color}"/>"#);
                }
                None => {}
            }
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Mean interval error against forecast step, with one x tick per mark.
pub fn curve_svg(curve: &[(usize, f64)], unit: &str) -> String {
    let mut out = String::new();
    open(&mut out);
    let finite: Vec<(usize, f64)> = curve.iter().copied().filter(|p| p.1.is_finite()).collect();
    let xmax = curve.iter().map(|p| p.0).max().unwrap_or(1).max(1) as f64;
    let ymax = finite.iter().map(|p| p.1).fold(0.0, f64::max).max(1e-12);
    let map = |m: f64, e: f64| (MARGIN + m / xmax * (W - 2.0 * MARGIN), H - MARGIN - e / ymax * (H - 2.0 * MARGIN));
    let _ = writeln!(
        out,
        r##"<line class="axis" x1="{MARGIN}" y1="{}" x2="{}" y2="{}" stroke="#000000"/>"##,
        H - MARGIN,
        W - MARGIN,
        H - MARGIN
    );
    let _ = writeln!(out, r##"<line class="axis" x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{}" stroke="#000000"/>"##, H - MARGIN);
    for &(m, _) in curve {
        let (x, _) = map(m as f64, 0.0);
        let _ = writeln!(
            out,
            r##"<text class="tick" x="{x:.2}" y="{}" font-size="10" text-anchor="middle">{m}</text>"##,
            H - MARGIN + 14.0
        );
    }
    let _ = writeln!(out, r#"<text x="{MARGIN}" y="{}" font-size="12">error ({unit})</text>"#, MARGIN - 10.0);
    let _ = writeln!(out, r#"<text x="{:.0}" y="{}" font-size="12" text-anchor="end">max {ymax:.3}</text>"#, W - MARGIN, MARGIN - 10.0);
    if finite.len() >= 2 {
        let pts: Vec<String> = finite.iter().map(|&(m, e)| {
            let (x, y) = map(m as f64, e);
            format!("{x:.2},{y:.2}")
        }).collect();
        let _ = writeln!(out, r##"<polyline class="curve" points="{}" fill="none" stroke="#d62728" stroke-width="2"/>"##, pts.join(" "));
    }
    for &(m, e) in &finite {
        let (x, y) = map(m as f64, e);
        let _ = writeln!(out, r##"<circle class="curve" cx="{x:.2}" cy="{y:.2}" r="3" fill="#d62728"/>"##);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_gives_blank_canvas() {
        let s = tracks_svg(&[]);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(!s.contains("polyline"));
    }

    #[test]
    fn one_polyline_per_line() {
        let f = |k: f64| ParsedFeature { shape: Some(Shape::Line(vec![(k, 50.0), (k + 0.1, 50.1)])), kind: Some("sample".into()) };
        let s = tracks_svg(&[f(0.0), f(1.0), f(2.0)]);
        assert_eq!(s.matches("<polyline").count(), 3);
    }

    #[test]
    fn ticks_match_marks() {
        let s = curve_svg(&[(6, 1.0), (12, 2.0), (18, f64::NAN)], "NM");
        let ticks: Vec<&str> = s.lines().filter(|l| l.contains(r#"class="tick""#)).collect();
        assert_eq!(ticks.len(), 3);
        assert!(ticks[2].ends_with(">18</text>"));
    }
}
