//! Geodesic error and best-of-N forecast scoring.

use alloc::vec::Vec;

#[allow(unused_imports)] // float methods come from libm without std
use num_traits::Float;

use crate::error::MetricsError;
use crate::geocodec::{cell_bbox, CellId, GeoPoint};
use crate::regulator::ForecastEnsemble;
use crate::trackprep::GroomedTrack;

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;
pub const KM_PER_NM: f64 = 1.852;

/// A partial sample may only beat a full-length one whose ADE is more than
/// this factor above its own.
pub const FULL_LENGTH_PREFERENCE: f64 = 1.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceUnit {
    Kilometers,
    NauticalMiles,
}

impl DistanceUnit {
    pub fn from_km(self, km: f64) -> f64 {
        match self {
            DistanceUnit::Kilometers => km,
            DistanceUnit::NauticalMiles => km / KM_PER_NM,
        }
    }

    pub fn to_km(self, v: f64) -> f64 {
        match self {
            DistanceUnit::Kilometers => v,
            DistanceUnit::NauticalMiles => v * KM_PER_NM,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DistanceUnit::Kilometers => "km",
            DistanceUnit::NauticalMiles => "NM",
        }
    }
}

/// Great-circle distance in kilometres on a sphere of mean Earth radius.
///
/// Uses the atan2 form, which stays accurate for both tiny and near-antipodal
/// separations.
pub fn geodesic(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let to_rad = core::f64::consts::PI / 180.0;
    let (p1, p2) = (a.lat * to_rad, b.lat * to_rad);
    let dl = (b.lon - a.lon) * to_rad;
    let (s1, c1) = (p1.sin(), p1.cos());
    let (s2, c2) = (p2.sin(), p2.cos());
    let (sdl, cdl) = (dl.sin(), dl.cos());
    let x = c2 * sdl;
    let y = c1 * s2 - s1 * c2 * cdl;
    let z = s1 * s2 + c1 * c2 * cdl;
    EARTH_RADIUS_KM * (x * x + y * y).sqrt().atan2(z)
}

/// Zero inside the closed cell; otherwise the distance to the nearest of its
/// four corners.
pub fn cell_error(truth: &GeoPoint, predicted: &CellId) -> f64 {
    let b = cell_bbox(predicted);
    if b.contains_closed(truth) {
        return 0.0;
    }
    b.corners().iter().map(|c| geodesic(truth, c)).fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub best_of_n: usize,
    /// Forecast step counts (1-based) at which errors are reported.
    pub interval_marks: Vec<usize>,
    pub units: DistanceUnit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackScore {
    /// Errors of the chosen sample over its valid steps, in kilometres.
    pub per_step_error: Vec<f64>,
    pub ade: f64,
    pub fde: f64,
    /// `(mark, error)`; `None` when the chosen sample stops before the mark.
    pub interval_errors: Vec<(usize, Option<f64>)>,
    pub chosen_sample: usize,
    /// Valid steps of the chosen sample over the horizon.
    pub coverage: f64,
}

/// Per-step errors of a cell sequence against time-aligned truth.
pub fn step_errors(truth: &[GeoPoint], cells: &[CellId]) -> Vec<f64> {
    cells.iter().zip(truth).map(|(c, p)| cell_error(p, c)).collect()
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::INFINITY
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Best-of-N selection over per-sample valid-step errors.
///
/// The lowest ADE wins, except that a partial sample cannot displace a
/// full-length sample whose ADE is within [`FULL_LENGTH_PREFERENCE`] of it.
/// Ties go to the lower index. Samples with no valid steps are never chosen.
pub fn select_best(errors: &[Vec<f64>], horizon: usize) -> Option<usize> {
    let ades: Vec<f64> = errors.iter().map(|e| mean(e)).collect();
    let best_any = (0..errors.len())
        .filter(|&i| !errors[i].is_empty())
        .min_by(|&a, &b| ades[a].total_cmp(&ades[b]).then(a.cmp(&b)))?;
    if errors[best_any].len() >= horizon {
        return Some(best_any);
    }
    let best_full = (0..errors.len())
        .filter(|&i| errors[i].len() >= horizon)
        .min_by(|&a, &b| ades[a].total_cmp(&ades[b]).then(a.cmp(&b)));
    match best_full {
        Some(f) if ades[f] <= FULL_LENGTH_PREFERENCE * ades[best_any] => Some(f),
        _ => Some(best_any),
    }
}

/// Scores the first `best_of_n` samples of an ensemble against the truth
/// continuation, whose first point is the first forecast step.
pub fn score_track(
    truth: &GroomedTrack,
    ensemble: &ForecastEnsemble,
    cfg: &EvalConfig,
) -> Result<TrackScore, MetricsError> {
    let horizon = ensemble.horizon_times.len();
    if horizon == 0 {
        return Err(MetricsError::Horizon("ensemble has no horizon".into()));
    }
    if truth.points.len() < horizon {
        return Err(MetricsError::Horizon(alloc::format!(
            "truth has {} points, horizon is {horizon}",
            truth.points.len()
        )));
    }
    let tol = 1e-6 * truth.dt.abs().max(1.0);
    if (truth.t0 - ensemble.horizon_times[0]).abs() > tol
        || (truth.dt - ensemble.dt).abs() > 1e-9 * truth.dt.abs().max(1.0)
    {
        return Err(MetricsError::Horizon(alloc::format!(
            "truth starts at {} with dt {}, forecast at {} with dt {}",
            truth.t0,
            truth.dt,
            ensemble.horizon_times[0],
            ensemble.dt
        )));
    }
    if ensemble.samples.len() < cfg.best_of_n || cfg.best_of_n == 0 {
        return Err(MetricsError::TooFewSamples { have: ensemble.samples.len(), need: cfg.best_of_n });
    }
    let truth_pts = &truth.points[..horizon];
    let errors: Vec<Vec<f64>> = ensemble.samples[..cfg.best_of_n]
        .iter()
        .map(|s| step_errors(truth_pts, &s.cells[..s.valid_len.min(horizon)]))
        .collect();
    let Some(chosen) = select_best(&errors, horizon) else {
        return Ok(TrackScore {
            per_step_error: Vec::new(),
            ade: f64::NAN,
            fde: f64::NAN,
            interval_errors: cfg.interval_marks.iter().map(|&m| (m, None)).collect(),
            chosen_sample: 0,
            coverage: 0.0,
        });
    };
    let per_step = errors[chosen].clone();
    let ade = mean(&per_step);
    let fde = *per_step.last().expect("chosen sample has valid steps");
    let interval_errors = cfg
        .interval_marks
        .iter()
        .map(|&m| (m, if m >= 1 { per_step.get(m - 1).copied() } else { None }))
        .collect();
    Ok(TrackScore {
        coverage: per_step.len() as f64 / horizon as f64,
        per_step_error: per_step,
        ade,
        fde,
        interval_errors,
        chosen_sample: chosen,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub units: DistanceUnit,
    pub tracks: usize,
    /// Tracks without any scorable sample, excluded from the means.
    pub unscored: usize,
    pub mean_ade: f64,
    pub mean_fde: f64,
    /// `(mark, mean error, tracks contributing)`.
    pub interval_means: Vec<(usize, f64, usize)>,
    pub mean_coverage: f64,
}

/// Means across tracks, converted to the configured unit.
pub fn aggregate(scores: &[TrackScore], cfg: &EvalConfig) -> Result<BenchmarkReport, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::Empty);
    }
    let scored: Vec<&TrackScore> = scores.iter().filter(|s| !s.per_step_error.is_empty()).collect();
    let n = scored.len().max(1) as f64;
    let u = cfg.units;
    let mean_ade = u.from_km(scored.iter().map(|s| s.ade).sum::<f64>() / n);
    let mean_fde = u.from_km(scored.iter().map(|s| s.fde).sum::<f64>() / n);
    let interval_means = cfg
        .interval_marks
        .iter()
        .map(|&m| {
            let vals: Vec<f64> = scored
                .iter()
                .filter_map(|s| s.interval_errors.iter().find(|(k, _)| *k == m).and_then(|(_, e)| *e))
                .collect();
            let avg = if vals.is_empty() { f64::NAN } else { u.from_km(vals.iter().sum::<f64>() / vals.len() as f64) };
            (m, avg, vals.len())
        })
        .collect();
    Ok(BenchmarkReport {
        units: u,
        tracks: scores.len(),
        unscored: scores.len() - scored.len(),
        mean_ade,
        mean_fde,
        interval_means,
        mean_coverage: scores.iter().map(|s| s.coverage).sum::<f64>() / scores.len() as f64,
    })
}
