//! Synthetic fleets: straight-line movers with position noise and irregular
//! reporting, optionally with one heading change per track.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use trackgpt_core::metrics::EARTH_RADIUS_KM;
use trackgpt_core::trackprep::{Observation, RawTrack};
use trackgpt_core::GeoPoint;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_tracks: usize,
    pub center: GeoPoint,
    /// Half side of the square area, kilometres.
    pub half_extent_km: f64,
    /// Speed range, km/h.
    pub speed_kmh: (f64, f64),
    pub duration_s: f64,
    /// Gap range between reports, seconds.
    pub report_gap_s: (f64, f64),
    /// Standard deviation of reported positions, metres.
    pub noise_m: f64,
    /// When set, each track turns once at a time drawn from this window
    /// (seconds after its start) by an angle drawn from `turn_deg`.
    pub turn_window_s: Option<(f64, f64)>,
    pub turn_deg: (f64, f64),
    pub start_time: f64,
    pub id_prefix: String,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_tracks: 500,
            center: GeoPoint { lat: 55.5, lon: 11.0 },
            half_extent_km: 50.0,
            speed_kmh: (15.0, 30.0),
            duration_s: 3.0 * 3600.0,
            report_gap_s: (20.0, 60.0),
            noise_m: 30.0,
            turn_window_s: None,
            turn_deg: (30.0, 90.0),
            start_time: 1_700_000_000.0,
            id_prefix: "syn".into(),
            seed: 7,
        }
    }
}

/// One synthetic entity with its noise-free path, for analytic checks.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTrack {
    pub track: RawTrack,
    /// Local east/north position (km) at `t`: segments `(t_start, x, y, vx, vy)`.
    pub segments: Vec<(f64, f64, f64, f64, f64)>,
    pub turn_time: Option<f64>,
}

/// Equirectangular projection around a reference point, in kilometres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    pub origin: GeoPoint,
}

impl LocalFrame {
    fn km_per_deg_lat() -> f64 {
        EARTH_RADIUS_KM * std::f64::consts::PI / 180.0
    }

    fn km_per_deg_lon(&self) -> f64 {
        Self::km_per_deg_lat() * self.origin.lat.to_radians().cos()
    }

    pub fn to_point(&self, x: f64, y: f64) -> GeoPoint {
        GeoPoint { lat: self.origin.lat + y / Self::km_per_deg_lat(), lon: self.origin.lon + x / self.km_per_deg_lon() }
    }

    pub fn to_xy(&self, p: &GeoPoint) -> (f64, f64) {
        ((p.lon - self.origin.lon) * self.km_per_deg_lon(), (p.lat - self.origin.lat) * Self::km_per_deg_lat())
    }
}

fn inside(x: f64, y: f64, half: f64) -> bool {
    x.abs() <= half && y.abs() <= half
}

/// Draws `cfg.n_tracks` tracks that stay inside the area for their whole
/// duration. Deterministic in `cfg.seed`.
pub fn generate_fleet(cfg: &SynthConfig) -> Vec<SynthTrack> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let frame = LocalFrame { origin: cfg.center };
    let noise = Normal::new(0.0, cfg.noise_m / 1000.0).expect("finite noise");
    let half = cfg.half_extent_km;
    let mut out = Vec::with_capacity(cfg.n_tracks);
    while out.len() < cfg.n_tracks {
        let x0 = rng.random_range(-half..=half);
        let y0 = rng.random_range(-half..=half);
        let speed = rng.random_range(cfg.speed_kmh.0..=cfg.speed_kmh.1);
        let heading = rng.random_range(0.0..std::f64::consts::TAU);
        let (vx, vy) = (speed * heading.sin() / 3600.0, speed * heading.cos() / 3600.0);
        let mut segments = vec![(0.0, x0, y0, vx, vy)];
        let mut turn_time = None;
        if let Some((a, b)) = cfg.turn_window_s {
            let tc = rng.random_range(a..=b);
            let mut angle = rng.random_range(cfg.turn_deg.0..=cfg.turn_deg.1).to_radians();
            if rng.random_bool(0.5) {
                angle = -angle;
            }
            let (s, c) = angle.sin_cos();
            let (wx, wy) = (vx * c - vy * s, vx * s + vy * c);
            segments.push((tc, x0 + vx * tc, y0 + vy * tc, wx, wy));
            turn_time = Some(tc);
        }
        let pos = |t: f64| {
            let seg = segments.iter().rev().find(|s| s.0 <= t).expect("first segment starts at 0");
            (seg.1 + seg.3 * (t - seg.0), seg.2 + seg.4 * (t - seg.0))
        };
        let end = pos(cfg.duration_s);
        let mid = turn_time.map(pos);
        if !inside(end.0, end.1, half) || mid.is_some_and(|m| !inside(m.0, m.1, half)) {
            continue;
        }
        let mut obs = Vec::new();
        let mut t = 0.0;
        while t <= cfg.duration_s {
            let (x, y) = pos(t);
            let p = frame.to_point(x + noise.sample(&mut rng), y + noise.sample(&mut rng));
            obs.push(Observation { point: p, t: cfg.start_time + t });
            t += rng.random_range(cfg.report_gap_s.0..=cfg.report_gap_s.1);
        }
        // Always report the final position so the track spans the duration.
        if obs.last().is_some_and(|o| o.t < cfg.start_time + cfg.duration_s) {
            let (x, y) = pos(cfg.duration_s);
            obs.push(Observation { point: frame.to_point(x, y), t: cfg.start_time + cfg.duration_s });
        }
        let id = format!("{}{:04}", cfg.id_prefix, out.len());
        let track = RawTrack::new(id, obs).expect("strictly increasing times");
        out.push(SynthTrack { track, segments, turn_time });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fleet_is_deterministic_and_in_area() {
        let cfg = SynthConfig { n_tracks: 20, ..Default::default() };
        let a = generate_fleet(&cfg);
        assert_eq!(a, generate_fleet(&cfg));
        let frame = LocalFrame { origin: cfg.center };
        for s in &a {
            let obs = s.track.observations();
            assert_eq!(obs.last().unwrap().t - obs[0].t, cfg.duration_s);
            for o in obs {
                let (x, y) = frame.to_xy(&o.point);
                assert!(inside(x, y, cfg.half_extent_km + 0.5));
            }
        }
    }

    #[test]
    fn turning_fleet_changes_heading_once() {
        let cfg = SynthConfig { n_tracks: 10, turn_window_s: Some((3600.0, 5400.0)), ..Default::default() };
        for s in generate_fleet(&cfg) {
            assert_eq!(s.segments.len(), 2);
            let tc = s.turn_time.unwrap();
            assert!((3600.0..=5400.0).contains(&tc));
            let (a, b) = (s.segments[0], s.segments[1]);
            let speed = |vx: f64, vy: f64| vx.hypot(vy);
            assert!((speed(a.3, a.4) - speed(b.3, b.4)).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_round_trips() {
        let f = LocalFrame { origin: GeoPoint { lat: 55.5, lon: 11.0 } };
        let p = f.to_point(12.5, -30.0);
        let (x, y) = f.to_xy(&p);
        assert!((x - 12.5).abs() < 1e-9 && (y + 30.0).abs() < 1e-9);
    }
}
