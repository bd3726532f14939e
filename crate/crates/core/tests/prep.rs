use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trackgpt_core::geocodec::*;
use trackgpt_core::trackprep::*;
use trackgpt_core::PrepError;

fn obs(t: f64, lat: f64, lon: f64) -> Observation {
    Observation { point: GeoPoint::new(lat, lon).unwrap(), t }
}

/// Irregularly sampled straight track starting at (lat, lon).
fn moving(id: &str, rng: &mut ChaCha8Rng, t0: f64, span: f64, lat: f64, lon: f64, v: (f64, f64)) -> RawTrack {
    let mut t = t0;
    let mut o = Vec::new();
    while t <= t0 + span {
        o.push(obs(t, lat + v.0 * (t - t0), lon + v.1 * (t - t0)));
        t += rng.random_range(20.0..90.0);
    }
    RawTrack::new(id, o).unwrap()
}

#[test]
fn block_fitting_dt_hand_case() {
    // A 20 h track must fit in 121 tokens: 72 000 s / 120 steps.
    let t = RawTrack::new("a", vec![obs(0.0, 55.0, 11.0), obs(72_000.0, 55.5, 11.5)]).unwrap();
    assert_eq!(compute_dt_mc(&[t], 121).unwrap(), 600.0);
}

#[test]
fn groomed_durations_within_limits() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut tracks = Vec::new();
    for i in 0..12 {
        let span = rng.random_range(2.0..30.0) * 3600.0;
        let v = (rng.random_range(-2e-5..2e-5), rng.random_range(-3e-5..3e-5));
        tracks.push(moving(&format!("v{i:02}"), &mut rng, 0.0, span, 55.5, 11.0, v));
    }
    // Stationary vessel: never leaves its cell.
    tracks.push(RawTrack::new("moored", (0..200).map(|k| obs(k as f64 * 300.0, 55.6, 11.1)).collect()).unwrap());
    let all: Vec<GeoPoint> = tracks.iter().flat_map(|t| t.observations().iter().map(|o| o.point)).collect();
    let codec = derive_codec_capped(&all, 5).unwrap();
    let cfg = PrepConfig { max_gap: 3600.0, min_duration: 4.0 * 3600.0, max_duration: 20.0 * 3600.0, dt_override: Some(600.0) };
    let g = groom(&tracks, &cfg, &codec, 121).unwrap();
    assert!(!g.tracks.is_empty());
    for t in &g.tracks {
        assert!(t.duration() <= 20.0 * 3600.0 + 1e-6, "{}", t.duration());
        assert!(t.duration() >= 4.0 * 3600.0 - 1e-6, "{}", t.duration());
        assert_ne!(t.entity_id, "moored");
        assert!(t.points.len() <= 121);
    }
    let again = groom(&tracks, &cfg, &codec, 121).unwrap();
    assert_eq!(g, again);
    let keys: Vec<(&str, f64)> = g.corpus.iter().map(|t| (t.entity_id.as_str(), t.t0)).collect();
    let mut sorted = keys.clone();
    sorted.sort_by(|a, b| a.0.cmp(b.0).then(a.1.total_cmp(&b.1)));
    assert_eq!(keys, sorted);
}

#[test]
fn derived_dt_is_max_of_both_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..6 {
        let tracks: Vec<RawTrack> = (0..4)
            .map(|i| {
                let span = rng.random_range(5.0..15.0) * 3600.0;
                let speed = rng.random_range(1e-6..5e-5);
                moving(&format!("t{i}"), &mut rng, 0.0, span, 55.2, 10.8, (speed, speed))
            })
            .collect();
        let all: Vec<GeoPoint> = tracks.iter().flat_map(|t| t.observations().iter().map(|o| o.point)).collect();
        let codec = derive_codec(&all).unwrap();
        let cfg = PrepConfig { max_gap: 3600.0, min_duration: 3600.0, max_duration: 20.0 * 3600.0, dt_override: None };
        let block = rng.random_range(16..200);
        let g = groom(&tracks, &cfg, &codec, block).unwrap();
        let (an, mc) = (g.dt_an.unwrap(), g.dt_mc.unwrap());
        assert_eq!(g.dt.dt, an.max(mc));
        assert_eq!(g.dt.adjacency_violated, mc > an);
        assert_eq!(mc, compute_dt_mc(&tracks, block).unwrap());
    }
}

proptest! {
    #[test]
    fn choose_dt_is_max(an in 1e-3f64..1e5, mc in 1e-3f64..1e5) {
        let c = choose_dt(an, mc);
        prop_assert_eq!(c.dt, an.max(mc));
        prop_assert_eq!(c.adjacency_violated, mc > an);
    }

    #[test]
    fn resample_grid_and_endpoints(
        gaps in prop::collection::vec(1.0f64..500.0, 1..40),
        dt in 5.0f64..400.0,
        lat0 in -60.0f64..60.0,
    ) {
        let mut t = 1000.0;
        let mut o = vec![obs(t, lat0, 0.0)];
        for (k, g) in gaps.iter().enumerate() {
            t += g;
            o.push(obs(t, lat0 + 0.001 * (k + 1) as f64, 0.002 * (k + 1) as f64));
        }
        let track = RawTrack::new("p", o).unwrap();
        match resample(&track, dt) {
            Ok(g) => {
                prop_assert_eq!(g.t0, 1000.0);
                prop_assert_eq!(g.points[0], track.observations()[0].point);
                prop_assert!(g.time_at(g.points.len() - 1) <= track.end() + 1e-9);
                prop_assert!(g.time_at(g.points.len()) > track.end() - 1e-6);
                for (k, p) in g.points.iter().enumerate() {
                    let q = interpolate_at(&track, g.time_at(k)).unwrap();
                    prop_assert!((p.lat - q.lat).abs() < 1e-12 && (p.lon - q.lon).abs() < 1e-12);
                }
            }
            Err(PrepError::TooShort { .. }) => prop_assert!(track.span() < dt),
            Err(e) => prop_assert!(false, "{}", e),
        }
    }

    #[test]
    fn split_long_partitions(n in 2usize..300, max_steps in 1usize..50) {
        let g = GroomedTrack {
            entity_id: "s".into(),
            t0: 0.0,
            dt: 60.0,
            points: (0..n).map(|k| GeoPoint::new(10.0, k as f64 * 1e-3).unwrap()).collect(),
        };
        let pieces = split_long(&g, max_steps as f64 * 60.0);
        let mut joined = Vec::new();
        for p in &pieces {
            prop_assert!(p.duration() <= max_steps as f64 * 60.0);
            prop_assert_eq!(p.t0, g.time_at(joined.len()));
            joined.extend_from_slice(&p.points);
        }
        prop_assert_eq!(joined, g.points);
    }
}
