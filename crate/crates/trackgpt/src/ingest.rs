//! CSV ingestion of AIS/ADS-B-shaped position reports.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use trackgpt_core::metrics::geodesic;
use trackgpt_core::trackprep::{Observation, RawTrack};
use trackgpt_core::GeoPoint;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMap {
    pub entity_id: String,
    pub timestamp: String,
    pub lat: String,
    pub lon: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub altitude: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            entity_id: "entity_id".into(),
            timestamp: "timestamp".into(),
            lat: "lat".into(),
            lon: "lon".into(),
            altitude: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeFormat {
    /// Epoch seconds or ISO-8601, decided by the file; mixing is an error.
    #[default]
    Auto,
    Epoch,
    Iso8601,
    /// A chrono `strftime` pattern, read as UTC unless it carries an offset.
    Pattern(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum Aoi {
    Bbox { lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64 },
    /// Everything within `radius_km` of a centre, such as a runway.
    Radius { lat: f64, lon: f64, radius_km: f64 },
}

impl Aoi {
    pub fn contains(&self, p: &GeoPoint) -> bool {
        match *self {
            Aoi::Bbox { lat_min, lat_max, lon_min, lon_max } => {
                (lat_min..=lat_max).contains(&p.lat) && (lon_min..=lon_max).contains(&p.lon)
            }
            Aoi::Radius { lat, lon, radius_km } => geodesic(&GeoPoint { lat, lon }, p) <= radius_km,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dedupe {
    /// Of several reports with the same entity and time, keep the first in
    /// file order.
    #[default]
    KeepFirst,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestSpec {
    pub columns: ColumnMap,
    pub time_format: TimeFormat,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_altitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aoi: Option<Aoi>,
    pub dedupe: Dedupe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IngestSummary {
    pub rows: usize,
    pub malformed: usize,
    pub duplicates: usize,
    pub above_altitude: usize,
    pub outside_aoi: usize,
    pub kept: usize,
    pub tracks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TimeKind {
    Epoch,
    Iso,
}

fn parse_iso(s: &str) -> Option<f64> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp() as f64 + f64::from(t.timestamp_subsec_nanos()) * 1e-9);
    }
    for f in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, f) {
            let u = t.and_utc();
            return Some(u.timestamp() as f64 + f64::from(u.timestamp_subsec_nanos()) * 1e-9);
        }
    }
    None
}

fn parse_pattern(s: &str, pattern: &str) -> Option<f64> {
    if let Ok(t) = DateTime::parse_from_str(s, pattern) {
        return Some(t.timestamp() as f64 + f64::from(t.timestamp_subsec_nanos()) * 1e-9);
    }
    let u = NaiveDateTime::parse_from_str(s, pattern).ok()?.and_utc();
    Some(u.timestamp() as f64 + f64::from(u.timestamp_subsec_nanos()) * 1e-9)
}

fn parse_time(s: &str, fmt: &TimeFormat) -> Option<(f64, Option<TimeKind>)> {
    let epoch = || s.parse::<f64>().ok().filter(|t| t.is_finite());
    match fmt {
        TimeFormat::Epoch => epoch().map(|t| (t, None)),
        TimeFormat::Iso8601 => parse_iso(s).map(|t| (t, None)),
        TimeFormat::Pattern(p) => parse_pattern(s, p).map(|t| (t, None)),
        TimeFormat::Auto => match epoch() {
            Some(t) => Some((t, Some(TimeKind::Epoch))),
            None => parse_iso(s).map(|t| (t, Some(TimeKind::Iso))),
        },
    }
}

/// Parses CSV text (with a header row) into per-entity tracks sorted by
/// entity id, each in time order.
pub fn ingest_str(text: &str, spec: &IngestSpec) -> Result<(Vec<RawTrack>, IngestSummary)> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::parse("csv header", e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("column {name:?} not found in header {:?}", headers.iter().collect::<Vec<_>>())))
    };
    let c = &spec.columns;
    let (ci, ct, clat, clon) = (col(&c.entity_id)?, col(&c.timestamp)?, col(&c.lat)?, col(&c.lon)?);
    let calt = c.altitude.as_deref().map(col).transpose()?;
    if spec.max_altitude.is_some() && calt.is_none() {
        return Err(Error::Config("max_altitude needs an altitude column".into()));
    }

    let mut sum = IngestSummary::default();
    let mut kinds = [false; 2];
    let mut groups: BTreeMap<String, Vec<Observation>> = BTreeMap::new();
    for rec in rdr.records() {
        sum.rows += 1;
        let Ok(rec) = rec else {
            sum.malformed += 1;
            continue;
        };
        let field = |i: usize| rec.get(i).filter(|s| !s.is_empty());
        let parsed = (|| {
            let id = field(ci)?;
            let (t, kind) = parse_time(field(ct)?, &spec.time_format)?;
            let lat: f64 = field(clat)?.parse().ok()?;
            let lon: f64 = field(clon)?.parse().ok()?;
            let p = GeoPoint::new(lat, lon).ok()?;
            let alt = match calt {
                Some(i) => Some(field(i)?.parse::<f64>().ok().filter(|a| a.is_finite())?),
                None => None,
            };
            Some((id.to_string(), t, kind, p, alt))
        })();
        let Some((id, t, kind, point, alt)) = parsed else {
            sum.malformed += 1;
            continue;
        };
        if let Some(k) = kind {
            kinds[k as usize] = true;
            if kinds[0] && kinds[1] {
                return Err(Error::Ingest(format!("row {}: mixed epoch and ISO-8601 timestamps", sum.rows)));
            }
        }
        if let (Some(cap), Some(a)) = (spec.max_altitude, alt) {
            if a > cap {
                sum.above_altitude += 1;
                continue;
            }
        }
        if spec.aoi.is_some_and(|a| !a.contains(&point)) {
            sum.outside_aoi += 1;
            continue;
        }
        groups.entry(id).or_default().push(Observation { point, t });
    }
    if sum.rows == 0 {
        log::warn!("no data rows");
        return Ok((Vec::new(), sum));
    }
    if 2 * sum.malformed > sum.rows {
        return Err(Error::Ingest(format!("{} of {} rows are malformed", sum.malformed, sum.rows)));
    }
    if sum.malformed > 0 {
        log::warn!("skipped {} malformed rows of {}", sum.malformed, sum.rows);
    }
    let built: Vec<(RawTrack, usize)> = groups
        .into_par_iter()
        .map(|(id, mut obs)| {
            // Stable sort keeps file order among equal times.
            obs.sort_by(|a, b| a.t.total_cmp(&b.t));
            let before = obs.len();
            obs.dedup_by(|later, earlier| later.t == earlier.t);
            let dropped = before - obs.len();
            (RawTrack::new(id, obs).expect("sorted, deduplicated, validated"), dropped)
        })
        .collect();
    let mut tracks = Vec::with_capacity(built.len());
    for (t, d) in built {
        sum.duplicates += d;
        sum.kept += t.len();
        tracks.push(t);
    }
    sum.tracks = tracks.len();
    Ok((tracks, sum))
}

pub fn ingest(path: &Path, spec: &IngestSpec) -> Result<(Vec<RawTrack>, IngestSummary)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ingest_str(&text, spec)
}

/// Renders tracks in the default column layout with epoch-second times.
pub fn tracks_to_csv(tracks: &[RawTrack]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["entity_id", "timestamp", "lat", "lon"]).expect("in-memory write");
    for t in tracks {
        for o in t.observations() {
            w.write_record([t.entity_id.clone(), o.t.to_string(), o.point.lat.to_string(), o.point.lon.to_string()])
                .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEAD: &str = "entity_id,timestamp,lat,lon\n";

    #[test]
    fn duplicate_time_keeps_first() {
        let text = format!("{HEAD}a,10,1.0,2.0\na,10,1.5,2.5\na,5,0.5,2.0\n");
        let (tracks, sum) = ingest_str(&text, &IngestSpec::default()).unwrap();
        assert_eq!(sum.duplicates, 1);
        let obs = tracks[0].observations();
        assert_eq!(obs.len(), 2);
        assert_eq!((obs[0].t, obs[1].t), (5.0, 10.0));
        assert_eq!(obs[1].point.lat, 1.0);
    }

    #[test]
    fn altitude_cap_excludes_rows() {
        let spec = IngestSpec {
            columns: ColumnMap { altitude: Some("alt".into()), ..ColumnMap::default() },
            max_altitude: Some(6000.0),
            ..IngestSpec::default()
        };
        let text = "entity_id,timestamp,lat,lon,alt\nx,1,40,-80,5999\nx,2,40,-80,6000\nx,3,40,-80,6001\n";
        let (tracks, sum) = ingest_str(text, &spec).unwrap();
        assert_eq!(sum.above_altitude, 1);
        assert_eq!(tracks[0].len(), 2);
    }

    #[test]
    fn empty_file_gives_no_tracks() {
        let (tracks, sum) = ingest_str(HEAD, &IngestSpec::default()).unwrap();
        assert!(tracks.is_empty());
        assert_eq!(sum.rows, 0);
    }

    #[test]
    fn malformed_rows_counted_then_fatal_above_half() {
        let text = format!("{HEAD}a,1,1,2\na,2,abc,2\na,3,1,2\n");
        let (_, sum) = ingest_str(&text, &IngestSpec::default()).unwrap();
        assert_eq!(sum.malformed, 1);
        let text = format!("{HEAD}a,1,1,2\na,2,abc,2\na,3,95,2\n");
        assert!(matches!(ingest_str(&text, &IngestSpec::default()), Err(Error::Ingest(_))));
    }

    #[test]
    fn iso_and_epoch_agree_but_cannot_mix() {
        let iso = format!("{HEAD}a,2019-03-21T00:00:10Z,1,2\na,2019-03-21 00:00:20,1,2\n");
        let (t, _) = ingest_str(&iso, &IngestSpec::default()).unwrap();
        assert_eq!(t[0].observations()[0].t, 1_553_126_410.0);
        assert_eq!(t[0].observations()[1].t, 1_553_126_420.0);
        let mixed = format!("{HEAD}a,2019-03-21T00:00:10Z,1,2\na,1553126420,1,2\n");
        assert!(matches!(ingest_str(&mixed, &IngestSpec::default()), Err(Error::Ingest(_))));
    }

    #[test]
    fn custom_pattern_and_columns() {
        let spec = IngestSpec {
            columns: ColumnMap {
                entity_id: "MMSI".into(),
                timestamp: "# Timestamp".into(),
                lat: "Latitude".into(),
                lon: "Longitude".into(),
                altitude: None,
            },
            time_format: TimeFormat::Pattern("%d/%m/%Y %H:%M:%S".into()),
            ..IngestSpec::default()
        };
        let text = "# Timestamp,MMSI,Latitude,Longitude\n21/03/2019 00:00:10,219000,55.1,11.2\n";
        let (t, _) = ingest_str(text, &spec).unwrap();
        assert_eq!(t[0].entity_id, "219000");
        assert_eq!(t[0].observations()[0].t, 1_553_126_410.0);
    }

    #[test]
    fn radius_filter() {
        let spec = IngestSpec { aoi: Some(Aoi::Radius { lat: 40.0, lon: -80.0, radius_km: 5.0 }), ..IngestSpec::default() };
        let text = format!("{HEAD}a,1,40.0,-80.0\na,2,40.03,-80.0\na,3,40.1,-80.0\n");
        let (t, sum) = ingest_str(&text, &spec).unwrap();
        assert_eq!((t[0].len(), sum.outside_aoi), (2, 1));
    }

    #[test]
    fn missing_column_is_config_error() {
        let spec = IngestSpec { columns: ColumnMap { lat: "latitude".into(), ..ColumnMap::default() }, ..IngestSpec::default() };
        assert!(matches!(ingest_str(HEAD, &spec), Err(Error::Config(_))));
    }

    #[test]
    fn csv_export_reads_back() {
        let text = format!("{HEAD}b,1.5,1.25,2.125\na,1,1,2\na,2,1.5,2.5\n");
        let (t, _) = ingest_str(&text, &IngestSpec::default()).unwrap();
        let (again, _) = ingest_str(&tracks_to_csv(&t), &IngestSpec::default()).unwrap();
        assert_eq!(again, t);
    }
}
