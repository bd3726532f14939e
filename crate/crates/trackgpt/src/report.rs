//! Benchmark reports: an aligned text table and a per-track CSV.

use std::fmt::Write as _;

use trackgpt_core::metrics::{BenchmarkReport, DistanceUnit, TrackScore};

use crate::error::{Error, Result};

pub const CSV_COLUMNS: [&str; 7] = ["track_id", "ade", "fde", "interval_offset", "interval_error", "chosen_sample", "coverage"];

fn fmt_duration(s: f64) -> String {
    if s >= 3600.0 {
        format!("{:.2} h", s / 3600.0)
    } else if s >= 60.0 {
        format!("{:.1} min", s / 60.0)
    } else {
        format!("{s:.2} s")
    }
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        "-".into()
    }
}

/// Interval errors by forecast step and time, then ADE, FDE and coverage.
pub fn format_table(title: &str, r: &BenchmarkReport, dt: f64) -> String {
    let u = r.units.label();
    let mut s = String::new();
    let _ = writeln!(s, "{title}: {} tracks ({} unscored)", r.tracks, r.unscored);
    let err_head = format!("Error ({u})");
    let _ = writeln!(s, "{:>6}  {:>10}  {:>12}  {:>6}", "Step", "Time", err_head, "Tracks");
    for &(m, e, n) in &r.interval_means {
        let _ = writeln!(s, "{:>6}  {:>10}  {:>12}  {:>6}", m, fmt_duration(m as f64 * dt), num(e), n);
    }
    let _ = writeln!(s, "{:<10} {:>12}", format!("ADE ({u})"), num(r.mean_ade));
    let _ = writeln!(s, "{:<10} {:>12}", format!("FDE ({u})"), num(r.mean_fde));
    let _ = writeln!(s, "{:<10} {:>12}", "Coverage", num(r.mean_coverage));
    s
}

/// One row per track and interval mark; distances in `units`.
pub fn format_csv(rows: &[(String, TrackScore)], units: DistanceUnit) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).expect("in-memory write");
    let cell = |v: f64| if v.is_finite() { units.from_km(v).to_string() } else { String::new() };
    for (id, s) in rows {
        let fixed = [id.clone(), cell(s.ade), cell(s.fde)];
        let tail = [s.chosen_sample.to_string(), s.coverage.to_string()];
        if s.interval_errors.is_empty() {
            let rec = fixed.iter().cloned().chain([String::new(), String::new()]).chain(tail.iter().cloned());
            w.write_record(rec.collect::<Vec<_>>()).expect("in-memory write");
        }
        for &(m, e) in &s.interval_errors {
            let mid = [m.to_string(), e.map_or(String::new(), cell)];
            let rec = fixed.iter().cloned().chain(mid).chain(tail.iter().cloned());
            w.write_record(rec.collect::<Vec<_>>()).expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// Mean interval error per offset from a report CSV, in offset order.
pub fn interval_curve(csv_text: &str) -> Result<Vec<(usize, f64)>> {
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::parse("report csv", e))?.clone();
    if headers.iter().ne(CSV_COLUMNS) {
        return Err(Error::parse("report csv", format!("unexpected header {:?}", headers.iter().collect::<Vec<_>>())));
    }
    let mut acc: std::collections::BTreeMap<usize, (f64, usize)> = Default::default();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse("report csv", e))?;
        let bad = |f: &str| Error::parse("report csv", format!("row {}: bad {f}", n + 2));
        if rec[3].is_empty() {
            continue;
        }
        let m: usize = rec[3].parse().map_err(|_| bad("interval_offset"))?;
        let slot = acc.entry(m).or_insert((0.0, 0));
        if !rec[4].is_empty() {
            slot.0 += rec[4].parse::<f64>().map_err(|_| bad("interval_error"))?;
            slot.1 += 1;
        }
    }
    Ok(acc.into_iter().map(|(m, (s, k))| (m, if k == 0 { f64::NAN } else { s / k as f64 })).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use trackgpt_core::metrics::{aggregate, EvalConfig};

    fn score(ade: f64, marks: &[(usize, Option<f64>)]) -> TrackScore {
        TrackScore {
            per_step_error: vec![ade; 4],
            ade,
            fde: ade,
            interval_errors: marks.to_vec(),
            chosen_sample: 2,
            coverage: 1.0,
        }
    }

    #[test]
    fn csv_has_row_per_mark_and_curve_averages() {
        let rows = vec![
            ("a".to_string(), score(1.852, &[(2, Some(1.852)), (4, Some(3.704))])),
            ("b".to_string(), score(3.704, &[(2, Some(3.704)), (4, None)])),
        ];
        let text = format_csv(&rows, DistanceUnit::NauticalMiles);
        assert_eq!(text.lines().count(), 5);
        assert_eq!(text.lines().nth(1), Some("a,1,1,2,1,2,1"));
        assert_eq!(text.lines().nth(4), Some("b,2,2,4,,2,1"));
        let curve = interval_curve(&text).unwrap();
        assert_eq!(curve, vec![(2, 1.5), (4, 2.0)]);
    }

    #[test]
    fn table_lists_every_mark() {
        let cfg = EvalConfig { best_of_n: 1, interval_marks: vec![6, 12], units: DistanceUnit::Kilometers };
        let r = aggregate(&[score(1.0, &[(6, Some(1.0)), (12, Some(2.0))])], &cfg).unwrap();
        let t = format_table("test", &r, 600.0);
        assert!(t.contains("1.00 h") && t.contains("2.00 h"), "{t}");
        assert!(t.contains("ADE (km)"));
    }
}
