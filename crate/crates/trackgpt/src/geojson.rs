//! GeoJSON export of forecast ensembles and a structural checker used when
//! reading it back.

use serde_json::{json, Map, Value};
use trackgpt_core::geocodec::cell_center;
use trackgpt_core::regulator::ForecastEnsemble;
use trackgpt_core::trackprep::GroomedTrack;
use trackgpt_core::GeoPoint;

use crate::error::{Error, Result};

fn coords(points: impl IntoIterator<Item = GeoPoint>) -> Vec<Value> {
    points.into_iter().map(|p| json!([p.lon, p.lat])).collect()
}

/// LineStrings need two positions; shorter paths get a null geometry.
fn line(points: Vec<Value>) -> Value {
    if points.len() >= 2 {
        json!({ "type": "LineString", "coordinates": points })
    } else {
        Value::Null
    }
}

fn feature(geometry: Value, properties: Map<String, Value>) -> Value {
    json!({ "type": "Feature", "geometry": geometry, "properties": properties })
}

fn props(entity: &str, kind: &str) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("entity_id".into(), json!(entity));
    m.insert("kind".into(), json!(kind));
    m
}

/// Features for one forecast: the prompt, every sample (truncation metadata
/// included), the mean route and the consensus destination.
pub fn ensemble_features(entity: &str, prompt: &GroomedTrack, e: &ForecastEnsemble) -> Vec<Value> {
    let mut out = Vec::with_capacity(e.samples.len() + 3);
    let mut p = props(entity, "prompt");
    p.insert("times".into(), json!((0..prompt.points.len()).map(|k| prompt.time_at(k)).collect::<Vec<_>>()));
    out.push(feature(line(coords(prompt.points.iter().copied())), p));
    for (i, s) in e.samples.iter().enumerate() {
        let mut p = props(entity, "sample");
        p.insert("sample".into(), json!(i));
        p.insert("valid_len".into(), json!(s.valid_len));
        p.insert("truncated_at".into(), json!(s.truncated_at));
        p.insert("discarded".into(), json!(s.discarded));
        p.insert("times".into(), json!(e.horizon_times.iter().take(s.valid_len).collect::<Vec<_>>()));
        p.insert("cells".into(), json!(s.cells.iter().map(|c| c.to_geohash()).collect::<Vec<_>>()));
        out.push(feature(line(coords(s.cells.iter().map(cell_center))), p));
    }
    let mut p = props(entity, "mean_route");
    p.insert("times".into(), json!(e.horizon_times.iter().take(e.mean_route.len()).collect::<Vec<_>>()));
    out.push(feature(line(coords(e.mean_route.iter().copied())), p));
    if let Some(c) = &e.consensus_destination {
        let mut p = props(entity, "consensus_destination");
        p.insert("support".into(), json!(c.support));
        p.insert("cell".into(), json!(c.cell.to_geohash()));
        p.insert("time".into(), json!(e.horizon_times.last()));
        out.push(feature(json!({ "type": "Point", "coordinates": [c.point.lon, c.point.lat] }), p));
    }
    out
}

pub fn feature_collection(features: Vec<Value>) -> Value {
    json!({ "type": "FeatureCollection", "features": features })
}

pub fn to_string(fc: &Value) -> String {
    let mut s = serde_json::to_string_pretty(fc).expect("json values serialize");
    s.push('\n');
    s
}

fn position(v: &Value) -> Option<(f64, f64)> {
    let a = v.as_array()?;
    if a.len() < 2 {
        return None;
    }
    Some((a[0].as_f64()?, a[1].as_f64()?))
}

/// A geometry reduced to what the plotter draws.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Line(Vec<(f64, f64)>),
    Point(f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedFeature {
    pub shape: Option<Shape>,
    pub kind: Option<String>,
}

/// Checks the FeatureCollection structure (Feature objects, LineString and
/// Point geometries with numeric positions) and extracts the shapes.
pub fn parse_features(text: &str) -> Result<Vec<ParsedFeature>> {
    let bad = |m: &str| Error::parse("geojson", m);
    let v: Value = serde_json::from_str(text).map_err(|e| Error::parse("geojson", e))?;
    if v.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(bad("top level is not a FeatureCollection"));
    }
    let feats = v.get("features").and_then(Value::as_array).ok_or_else(|| bad("missing features array"))?;
    let mut out = Vec::with_capacity(feats.len());
    for f in feats {
        if f.get("type").and_then(Value::as_str) != Some("Feature") {
            return Err(bad("feature without type Feature"));
        }
        let props = f.get("properties").ok_or_else(|| bad("feature without properties"))?;
        if !(props.is_object() || props.is_null()) {
            return Err(bad("properties must be an object or null"));
        }
        let geom = f.get("geometry").ok_or_else(|| bad("feature without geometry"))?;
        let shape = if geom.is_null() {
            None
        } else {
            let coords = geom.get("coordinates").ok_or_else(|| bad("geometry without coordinates"))?;
            match geom.get("type").and_then(Value::as_str) {
                Some("LineString") => {
                    let pts = coords.as_array().ok_or_else(|| bad("LineString coordinates not an array"))?;
                    let pts: Option<Vec<_>> = pts.iter().map(position).collect();
                    let pts = pts.ok_or_else(|| bad("bad LineString position"))?;
                    if pts.len() < 2 {
                        return Err(bad("LineString with fewer than two positions"));
                    }
                    Some(Shape::Line(pts))
                }
                Some("Point") => {
                    let (x, y) = position(coords).ok_or_else(|| bad("bad Point position"))?;
                    Some(Shape::Point(x, y))
                }
                Some(t) => return Err(Error::parse("geojson", format!("unsupported geometry {t}"))),
                None => return Err(bad("geometry without type")),
            }
        };
        let kind = props.get("kind").and_then(Value::as_str).map(str::to_string);
        out.push(ParsedFeature { shape, kind });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_collection_parses() {
        let s = to_string(&feature_collection(Vec::new()));
        assert!(parse_features(&s).unwrap().is_empty());
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse_features("{}").is_err());
        assert!(parse_features(r#"{"type":"FeatureCollection","features":[{"type":"Feature","properties":{},"geometry":{"type":"LineString","coordinates":[[1,2]]}}]}"#).is_err());
        assert!(parse_features("not json").is_err());
    }
}
