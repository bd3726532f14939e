//! Constant-velocity forecaster used as a reference.

use trackgpt_core::geocodec::{encode_point, lon_delta, normalize_lon};
use trackgpt_core::regulator::{ForecastEnsemble, ForecastSample};
use trackgpt_core::trackprep::GroomedTrack;
use trackgpt_core::GeoPoint;

use crate::error::{Error, Result};

/// Extrapolates the mean per-step velocity over the last quarter of the
/// prompt (at least one step), in degrees, for `horizon` steps. The single
/// sample carries cells at `depth` and no tokens.
pub fn baseline_const_velocity(prompt: &GroomedTrack, horizon: usize, depth: u8) -> Result<ForecastEnsemble> {
    let n = prompt.points.len();
    if n < 2 {
        return Err(Error::Config("constant-velocity baseline needs a prompt of at least 2 points".into()));
    }
    let span = ((n - 1) / 4).max(1);
    let (a, b) = (prompt.points[n - 1 - span], prompt.points[n - 1]);
    let vlat = (b.lat - a.lat) / span as f64;
    let vlon = lon_delta(a.lon, b.lon) / span as f64;
    let mut route = Vec::with_capacity(horizon);
    let mut cells = Vec::with_capacity(horizon);
    for k in 1..=horizon {
        let p = GeoPoint {
            lat: (b.lat + vlat * k as f64).clamp(-90.0, 90.0),
            lon: normalize_lon(b.lon + vlon * k as f64),
        };
        cells.push(encode_point(&p, depth)?);
        route.push(p);
    }
    let sample = ForecastSample { tokens: Vec::new(), cells, truncated_at: None, valid_len: horizon, discarded: false };
    let consensus = sample.cells.last().map(|c| trackgpt_core::regulator::Consensus {
        point: *route.last().expect("same length as cells"),
        cell: *c,
        support: 1,
    });
    let e = ForecastEnsemble {
        samples: vec![sample],
        mean_route: route,
        consensus_destination: consensus,
        horizon_times: Vec::new(),
        dt: 0.0,
    };
    Ok(e.with_horizon(prompt.time_at(n - 1), prompt.dt, horizon))
}
