//! Track grooming: blackout splitting, filtering, interpolation, uniform
//! resampling, sampling-interval selection and tokenization.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::PrepError;
use crate::geocodec::{encode_point, hop_distance, lon_delta, normalize_lon, CodecConfig, GeoPoint, TokenId};

/// Quantile of consecutive hop distances that must be adjacent for a dt to
/// count as adjacency-preserving.
pub const DT_AN_QUANTILE: f64 = 0.99;
pub const DT_AN_ITERATIONS: usize = 10;
pub const DT_AN_MIN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub point: GeoPoint,
    /// Seconds since the epoch.
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawTrack {
    pub entity_id: String,
    obs: Vec<Observation>,
}

impl RawTrack {
    /// Requires observations strictly ascending in time with valid points.
    pub fn new(entity_id: impl Into<String>, obs: Vec<Observation>) -> Result<Self, PrepError> {
        for o in &obs {
            if !o.t.is_finite() || !o.point.is_valid() {
                return Err(PrepError::InvalidTrack(alloc::format!("bad observation {o:?}")));
            }
        }
        if obs.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(PrepError::InvalidTrack(String::from("observations not strictly ascending")));
        }
        Ok(RawTrack { entity_id: entity_id.into(), obs })
    }

    /// Sorts by time and keeps the first of any same-time duplicates.
    pub fn from_unsorted(entity_id: impl Into<String>, mut obs: Vec<Observation>) -> Result<Self, PrepError> {
        obs.sort_by(|a, b| a.t.total_cmp(&b.t));
        obs.dedup_by(|b, a| a.t == b.t);
        RawTrack::new(entity_id, obs)
    }

    pub fn observations(&self) -> &[Observation] {
        &self.obs
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.obs.first().map_or(0.0, |o| o.t)
    }

    pub fn end(&self) -> f64 {
        self.obs.last().map_or(0.0, |o| o.t)
    }

    pub fn span(&self) -> f64 {
        self.end() - self.start()
    }
}

/// A track sampled at `t0 + k * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroomedTrack {
    pub entity_id: String,
    pub t0: f64,
    pub dt: f64,
    pub points: Vec<GeoPoint>,
}

impl GroomedTrack {
    pub fn time_at(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn duration(&self) -> f64 {
        self.points.len().saturating_sub(1) as f64 * self.dt
    }

    /// Points `range` as a new track with the matching start time.
    pub fn slice(&self, start: usize, end: usize) -> GroomedTrack {
        GroomedTrack {
            entity_id: self.entity_id.clone(),
            t0: self.time_at(start),
            dt: self.dt,
            points: self.points[start..end].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenTrack {
    pub entity_id: String,
    pub t0: f64,
    pub dt: f64,
    pub tokens: Vec<TokenId>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrepConfig {
    /// Split wherever consecutive observations are further apart than this.
    pub max_gap: f64,
    pub min_duration: f64,
    pub max_duration: f64,
    pub dt_override: Option<f64>,
}

impl PrepConfig {
    pub fn validate(&self) -> Result<(), PrepError> {
        if !(self.max_gap > 0.0) {
            return Err(PrepError::Config(String::from("max_gap must be positive")));
        }
        if !(self.min_duration < self.max_duration) {
            return Err(PrepError::Config(String::from("min_duration must be below max_duration")));
        }
        if let Some(dt) = self.dt_override {
            if !(dt > 0.0) {
                return Err(PrepError::Config(String::from("dt must be positive")));
            }
        }
        Ok(())
    }
}

pub fn split_on_blackout(track: &RawTrack, max_gap: f64) -> Vec<RawTrack> {
    let mut out = Vec::new();
    let mut current: Vec<Observation> = Vec::new();
    for o in &track.obs {
        if let Some(last) = current.last() {
            if o.t - last.t > max_gap {
                out.push(RawTrack { entity_id: track.entity_id.clone(), obs: core::mem::take(&mut current) });
            }
        }
        current.push(*o);
    }
    if !current.is_empty() {
        out.push(RawTrack { entity_id: track.entity_id.clone(), obs: current });
    }
    out
}

/// True when every observation falls in the same cell at the codec's token
/// depth.
pub fn is_stationary(track: &RawTrack, codec: &CodecConfig) -> bool {
    let depth = codec.token_depth();
    let mut first = None;
    for o in &track.obs {
        let Ok(c) = encode_point(&o.point, depth) else { return false };
        match first {
            None => first = Some(c),
            Some(f) if f != c => return false,
            _ => {}
        }
    }
    true
}

/// Keeps tracks that last at least `min_duration`, have two or more
/// observations and are not stationary at token depth.
pub fn filter_tracks(tracks: Vec<RawTrack>, min_duration: f64, codec: &CodecConfig) -> Vec<RawTrack> {
    tracks
        .into_iter()
        .filter(|t| t.len() >= 2 && t.span() >= min_duration && !is_stationary(t, codec))
        .collect()
}

/// Linear interpolation in latitude and (shorter-arc) longitude.
pub fn interpolate_at(track: &RawTrack, t: f64) -> Result<GeoPoint, PrepError> {
    let obs = &track.obs;
    if obs.is_empty() || !(t >= obs[0].t && t <= obs[obs.len() - 1].t) {
        return Err(PrepError::OutsideSpan { t, start: track.start(), end: track.end() });
    }
    // First index with time > t.
    let hi = obs.partition_point(|o| o.t <= t);
    if hi == 0 {
        return Ok(obs[0].point);
    }
    let a = &obs[hi - 1];
    if a.t == t || hi == obs.len() {
        return Ok(a.point);
    }
    let b = &obs[hi];
    Ok(lerp_point(&a.point, &b.point, (t - a.t) / (b.t - a.t)))
}

pub(crate) fn lerp_point(a: &GeoPoint, b: &GeoPoint, f: f64) -> GeoPoint {
    let lat = a.lat + (b.lat - a.lat) * f;
    let lon = normalize_lon(a.lon + lon_delta(a.lon, b.lon) * f);
    GeoPoint { lat, lon }
}

/// Number of whole `dt` steps that fit in `span`, tolerant to rounding when
/// `span` is an exact multiple.
fn step_count(span: f64, dt: f64) -> usize {
    let r = span / dt;
    let n = libm_floor(r);
    if r - n > 1.0 - 1e-9 {
        n as usize + 1
    } else {
        n as usize
    }
}

fn libm_floor(x: f64) -> f64 {
    num_traits::Float::floor(x)
}

/// Samples at `t0, t0 + dt, ..., t0 + n dt` where `n` is the largest count
/// with `t0 + n dt <= t_end`.
pub fn resample(track: &RawTrack, dt: f64) -> Result<GroomedTrack, PrepError> {
    if !(dt > 0.0) {
        return Err(PrepError::Config(String::from("dt must be positive")));
    }
    let span = track.span();
    if track.len() < 2 || span < dt {
        return Err(PrepError::TooShort { span, dt });
    }
    let n = step_count(span, dt);
    if n < 1 {
        return Err(PrepError::TooShort { span, dt });
    }
    let t0 = track.start();
    let end = track.end();
    let mut points = Vec::with_capacity(n + 1);
    // Single forward pass over the bracketing segments.
    let obs = &track.obs;
    let mut seg = 0usize;
    for k in 0..=n {
        let t = (t0 + k as f64 * dt).min(end);
        while seg + 1 < obs.len() - 1 && obs[seg + 1].t <= t {
            seg += 1;
        }
        let a = &obs[seg];
        let b = &obs[seg + 1];
        let p = if t <= a.t {
            a.point
        } else if t >= b.t {
            b.point
        } else {
            lerp_point(&a.point, &b.point, (t - a.t) / (b.t - a.t))
        };
        points.push(p);
    }
    Ok(GroomedTrack { entity_id: track.entity_id.clone(), t0, dt, points })
}

/// Smallest dt at which every track fits in one context block.
pub fn compute_dt_mc(tracks: &[RawTrack], block_size: usize) -> Result<f64, PrepError> {
    if block_size < 2 {
        return Err(PrepError::Config(String::from("block_size must be at least 2")));
    }
    if tracks.is_empty() {
        return Err(PrepError::Empty);
    }
    let longest = tracks.iter().map(RawTrack::span).fold(0.0, f64::max);
    Ok(longest / (block_size - 1) as f64)
}

/// Consecutive-sample hop distances after resampling every track at `dt`.
fn hop_profile(tracks: &[RawTrack], codec: &CodecConfig, dt: f64) -> Vec<u64> {
    let depth = codec.token_depth();
    let mut hops = Vec::new();
    for t in tracks {
        let Ok(g) = resample(t, dt) else { continue };
        let mut prev = None;
        for p in &g.points {
            let Ok(c) = encode_point(p, depth) else { continue };
            if let Some(q) = prev {
                hops.push(hop_distance(&q, &c).expect("same depth"));
            }
            prev = Some(c);
        }
    }
    hops
}

/// Nearest-rank check that the `q` quantile of hops is at most one.
fn adjacency_holds(hops: &[u64], q: f64) -> bool {
    if hops.is_empty() {
        return true;
    }
    let m = hops.len();
    let rank = num_traits::Float::ceil(q * m as f64) as usize;
    let allowed = m - rank.clamp(1, m);
    hops.iter().filter(|&&h| h > 1).count() <= allowed
}

/// Largest dt keeping consecutive resampled cells adjacent (at the 0.99
/// quantile). Geometric bisection over `[1 s, longest span]`.
pub fn compute_dt_an(tracks: &[RawTrack], codec: &CodecConfig) -> Result<f64, PrepError> {
    if tracks.is_empty() {
        return Err(PrepError::Empty);
    }
    let hi0 = tracks.iter().map(RawTrack::span).fold(0.0, f64::max);
    if hi0 <= DT_AN_MIN {
        return Ok(DT_AN_MIN);
    }
    let ok = |dt: f64| adjacency_holds(&hop_profile(tracks, codec, dt), DT_AN_QUANTILE);
    if ok(hi0) {
        return Ok(hi0);
    }
    if !ok(DT_AN_MIN) {
        return Ok(DT_AN_MIN);
    }
    let (mut lo, mut hi) = (DT_AN_MIN, hi0);
    for _ in 0..DT_AN_ITERATIONS {
        let mid = num_traits::Float::sqrt(lo * hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtChoice {
    pub dt: f64,
    /// Set when the block-fitting minimum exceeds the adjacency maximum, so
    /// some consecutive samples will skip cells.
    pub adjacency_violated: bool,
}

pub fn choose_dt(dt_an: f64, dt_mc: f64) -> DtChoice {
    let violated = dt_mc > dt_an;
    if violated {
        log::warn!(
            "dt_mc {dt_mc:.3} s exceeds dt_an {dt_an:.3} s; consecutive samples may skip cells"
        );
    }
    DtChoice { dt: dt_an.max(dt_mc), adjacency_violated: violated }
}

/// Cuts a groomed track into consecutive pieces lasting at most
/// `max_duration`.
pub fn split_long(track: &GroomedTrack, max_duration: f64) -> Vec<GroomedTrack> {
    let max_points = step_count(max_duration, track.dt) + 1;
    if track.points.len() <= max_points {
        return alloc::vec![track.clone()];
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start < track.points.len() {
        let end = (start + max_points).min(track.points.len());
        out.push(track.slice(start, end));
        start = end;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TokenizeStats {
    pub pairs: usize,
    /// Consecutive pairs more than one hop apart.
    pub jumps: usize,
}

impl TokenizeStats {
    pub fn jump_fraction(&self) -> f64 {
        if self.pairs == 0 {
            0.0
        } else {
            self.jumps as f64 / self.pairs as f64
        }
    }

    pub fn merge(&mut self, other: TokenizeStats) {
        self.pairs += other.pairs;
        self.jumps += other.jumps;
    }
}

pub fn tokenize(track: &GroomedTrack, codec: &CodecConfig) -> Result<(TokenTrack, TokenizeStats), PrepError> {
    let mut tokens = Vec::with_capacity(track.points.len());
    let mut stats = TokenizeStats::default();
    let mut prev = None;
    for p in &track.points {
        tokens.push(codec.token_of(p)?);
        let c = codec.cell_of_point(p)?;
        if let Some(q) = prev {
            stats.pairs += 1;
            if hop_distance(&q, &c)? > 1 {
                stats.jumps += 1;
            }
        }
        prev = Some(c);
    }
    Ok((
        TokenTrack { entity_id: track.entity_id.clone(), t0: track.t0, dt: track.dt, tokens },
        stats,
    ))
}

/// Grooming counters for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PrepStats {
    pub tracks_in: usize,
    pub after_blackout_split: usize,
    pub after_filter: usize,
    pub too_short: usize,
    pub after_long_split: usize,
    pub tokens: usize,
    pub tokenize: TokenizeStats,
}

/// Output of [`groom`]: the token corpus plus the groomed tracks it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Groomed {
    pub tracks: Vec<GroomedTrack>,
    pub corpus: Vec<TokenTrack>,
    pub dt: DtChoice,
    pub dt_an: Option<f64>,
    pub dt_mc: Option<f64>,
    pub stats: PrepStats,
}

/// Raw tracks cut so none lasts longer than `max_duration`; used to estimate
/// dt before the groomed split.
pub fn split_raw_long(track: &RawTrack, max_duration: f64) -> Vec<RawTrack> {
    let mut out = Vec::new();
    let mut current: Vec<Observation> = Vec::new();
    for o in &track.obs {
        if let Some(first) = current.first() {
            if o.t - first.t > max_duration {
                out.push(RawTrack { entity_id: track.entity_id.clone(), obs: core::mem::take(&mut current) });
            }
        }
        current.push(*o);
    }
    if !current.is_empty() {
        out.push(RawTrack { entity_id: track.entity_id.clone(), obs: current });
    }
    out
}

/// The full grooming pipeline: blackout split, filter (duration and
/// stationarity), choose dt, interpolate and resample, split long tracks,
/// tokenize. Output order is `(entity_id, t0)`.
pub fn groom(
    tracks: &[RawTrack],
    cfg: &PrepConfig,
    codec: &CodecConfig,
    block_size: usize,
) -> Result<Groomed, PrepError> {
    cfg.validate()?;
    let mut stats = PrepStats { tracks_in: tracks.len(), ..PrepStats::default() };
    let pieces: Vec<RawTrack> = tracks.iter().flat_map(|t| split_on_blackout(t, cfg.max_gap)).collect();
    stats.after_blackout_split = pieces.len();
    let mut kept = filter_tracks(pieces, cfg.min_duration, codec);
    kept.sort_by(|a, b| a.entity_id.cmp(&b.entity_id).then(a.start().total_cmp(&b.start())));
    stats.after_filter = kept.len();
    if kept.is_empty() {
        return Err(PrepError::Empty);
    }
    let (dt, dt_an, dt_mc) = match cfg.dt_override {
        Some(dt) => (DtChoice { dt, adjacency_violated: false }, None, None),
        None => {
            let capped: Vec<RawTrack> = kept.iter().flat_map(|t| split_raw_long(t, cfg.max_duration)).collect();
            let mc = compute_dt_mc(&capped, block_size)?;
            let an = compute_dt_an(&capped, codec)?;
            (choose_dt(an, mc), Some(an), Some(mc))
        }
    };
    let mut groomed = Vec::new();
    for t in &kept {
        match resample(t, dt.dt) {
            Ok(g) => {
                // Tail pieces of a long split can fall under the minimum.
                for piece in split_long(&g, cfg.max_duration) {
                    if piece.points.len() >= 2 && piece.duration() >= cfg.min_duration {
                        groomed.push(piece);
                    } else {
                        stats.too_short += 1;
                    }
                }
            }
            Err(PrepError::TooShort { .. }) => stats.too_short += 1,
            Err(e) => return Err(e),
        }
    }
    stats.after_long_split = groomed.len();
    let mut corpus = Vec::with_capacity(groomed.len());
    for g in &groomed {
        let (tt, s) = tokenize(g, codec)?;
        stats.tokenize.merge(s);
        stats.tokens += tt.tokens.len();
        corpus.push(tt);
    }
    if corpus.is_empty() {
        return Err(PrepError::Empty);
    }
    Ok(Groomed { tracks: groomed, corpus, dt, dt_an, dt_mc, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geocodec::{derive_codec, cell_size};
    use alloc::vec;

    fn obs(t: f64, lat: f64, lon: f64) -> Observation {
        Observation { point: GeoPoint::new(lat, lon).unwrap(), t }
    }

    fn track(ts: &[f64]) -> RawTrack {
        RawTrack::new("a", ts.iter().map(|&t| obs(t, 10.0 + t * 1e-4, 20.0)).collect()).unwrap()
    }

    #[test]
    fn rejects_unsorted_and_dedupes() {
        assert!(RawTrack::new("x", vec![obs(2.0, 0.0, 0.0), obs(1.0, 0.0, 0.0)]).is_err());
        let t = RawTrack::from_unsorted("x", vec![obs(2.0, 0.0, 0.0), obs(1.0, 1.0, 0.0), obs(2.0, 5.0, 5.0)])
            .unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.observations()[1].point.lat, 0.0);
    }

    #[test]
    fn blackout_split_cases() {
        let t = track(&[0.0, 10.0, 20.0, 30.0]);
        assert_eq!(split_on_blackout(&t, 15.0), vec![t.clone()]);
        let t = track(&[0.0, 10.0, 40.0, 50.0]);
        let parts = split_on_blackout(&t, 15.0);
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].end(), 10.0);
        assert_eq!(parts[1].start(), 40.0);
    }

    #[test]
    fn filter_bounds() {
        let exact = track(&[0.0, 100.0]);
        let pts: Vec<GeoPoint> = exact.observations().iter().map(|o| o.point).collect();
        let codec = derive_codec(&pts).unwrap();
        let single = track(&[0.0]);
        let still = RawTrack::new("s", vec![obs(0.0, 10.0, 20.0), obs(500.0, 10.0, 20.0)]).unwrap();
        let kept = filter_tracks(vec![exact.clone(), single, still], 100.0, &codec);
        assert_eq!(kept, vec![exact]);
    }

    #[test]
    fn interpolation_cases() {
        let t = RawTrack::new("a", vec![obs(0.0, 0.0, 5.0), obs(10.0, 4.0, 5.0)]).unwrap();
        assert_eq!(interpolate_at(&t, 0.0).unwrap(), t.observations()[0].point);
        assert_eq!(interpolate_at(&t, 10.0).unwrap(), t.observations()[1].point);
        assert_eq!(interpolate_at(&t, 5.0).unwrap().lat, 2.0);
        assert!(interpolate_at(&t, 10.5).is_err());
        let w = RawTrack::new("w", vec![obs(0.0, 0.0, 179.9), obs(10.0, 0.0, -179.9)]).unwrap();
        let m = interpolate_at(&w, 5.0).unwrap();
        assert!((m.lon.abs() - 180.0).abs() < 1e-9);
    }

    #[test]
    fn resample_counts() {
        let t = track(&[0.0, 37.0, 100.0]);
        assert_eq!(resample(&t, 10.0).unwrap().points.len(), 11);
        let t = track(&[0.0, 105.0]);
        let g = resample(&t, 10.0).unwrap();
        assert_eq!(g.points.len(), 11);
        assert_eq!(g.time_at(10), 100.0);
        assert!(matches!(resample(&track(&[0.0, 5.0]), 10.0), Err(PrepError::TooShort { .. })));
    }

    #[test]
    fn resample_matches_linear_motion() {
        let v_lat = 1.3e-4;
        let v_lon = -2.1e-4;
        let obs_v: Vec<Observation> =
            [0.0, 13.0, 40.0, 41.5, 97.0, 150.0].iter().map(|&t| obs(t, 30.0 + v_lat * t, 40.0 + v_lon * t)).collect();
        let t = RawTrack::new("lin", obs_v).unwrap();
        let g = resample(&t, 7.0).unwrap();
        for (k, p) in g.points.iter().enumerate() {
            let tt = 7.0 * k as f64;
            assert!((p.lat - (30.0 + v_lat * tt)).abs() < 1e-9);
            assert!((p.lon - (40.0 + v_lon * tt)).abs() < 1e-9);
        }
    }

    #[test]
    fn dt_mc_hand_case() {
        let t = track(&[0.0, 72_000.0]);
        assert_eq!(compute_dt_mc(&[t], 121).unwrap(), 600.0);
        assert!(compute_dt_mc(&[], 121).is_err());
    }

    #[test]
    fn choose_dt_is_max() {
        assert_eq!(choose_dt(600.0, 300.0), DtChoice { dt: 600.0, adjacency_violated: false });
        assert_eq!(choose_dt(300.0, 600.0), DtChoice { dt: 600.0, adjacency_violated: true });
        assert_eq!(choose_dt(450.0, 450.0).dt, 450.0);
    }

    #[test]
    fn dt_an_for_constant_speed() {
        let origin = GeoPoint::new(20.3, 30.3).unwrap();
        let codec = derive_codec(&[origin, GeoPoint::new(20.9, 31.6).unwrap()]).unwrap();
        let (w, _) = cell_size(codec.token_depth());
        // One cell of longitude every 60 s.
        let speed = w / 60.0;
        let mk = |speed: f64| {
            let obs_v = (0..=200).map(|k| {
                let t = k as f64 * 30.0;
                obs(t, 20.4, 30.4 + speed * t)
            });
            RawTrack::new("e", obs_v.collect()).unwrap()
        };
        let dt = compute_dt_an(&[mk(speed)], &codec).unwrap();
        assert!((60.0..120.0).contains(&dt), "dt_an {dt}");
        let dt2 = compute_dt_an(&[mk(2.0 * speed)], &codec).unwrap();
        let step = (6000.0f64).ln() / 1024.0;
        assert!(((dt2 * 2.0).ln() - dt.ln()).abs() <= 2.0 * step + 0.02, "{dt} vs {dt2}");
    }

    #[test]
    fn dt_an_stationary_is_upper_bound() {
        let codec = derive_codec(&[GeoPoint::new(1.0, 1.0).unwrap()]).unwrap();
        let t = RawTrack::new("s", vec![obs(0.0, 1.0, 1.0), obs(5000.0, 1.0, 1.0)]).unwrap();
        assert_eq!(compute_dt_an(&[t], &codec).unwrap(), 5000.0);
    }

    #[test]
    fn split_long_segments() {
        let g = GroomedTrack {
            entity_id: "v".into(),
            t0: 0.0,
            dt: 600.0,
            points: vec![GeoPoint::default(); 241],
        };
        let parts = split_long(&g, 72_000.0);
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].points.len(), 121);
        assert_eq!(parts[1].t0, 121.0 * 600.0);
        assert_eq!(parts.iter().map(|p| p.points.len()).sum::<usize>(), 241);
        assert!(parts.iter().all(|p| p.duration() <= 72_000.0));
        let short = g.slice(0, 50);
        assert_eq!(split_long(&short, 72_000.0), vec![short.clone()]);
    }

    #[test]
    fn tokenize_stationary_and_smooth() {
        let a = GeoPoint::new(44.0, 8.0).unwrap();
        let codec = derive_codec(&[a, GeoPoint::new(44.5, 8.5).unwrap()]).unwrap();
        let g = GroomedTrack { entity_id: "s".into(), t0: 0.0, dt: 1.0, points: vec![a; 5] };
        let (tt, st) = tokenize(&g, &codec).unwrap();
        assert!(tt.tokens.iter().all(|&t| t == tt.tokens[0]));
        assert_eq!(st.jumps, 0);
        let (w, _) = cell_size(codec.token_depth());
        let pts: Vec<GeoPoint> = (0..50).map(|k| GeoPoint::new(44.1, 8.1 + k as f64 * w * 0.4).unwrap()).collect();
        let g = GroomedTrack { entity_id: "m".into(), t0: 0.0, dt: 1.0, points: pts.clone() };
        let (tt, st) = tokenize(&g, &codec).unwrap();
        assert_eq!(st.jump_fraction(), 0.0);
        let direct: Vec<TokenId> = pts.iter().map(|p| codec.token_of(p).unwrap()).collect();
        assert_eq!(tt.tokens, direct);
    }
}
