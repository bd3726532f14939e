//! Hop-based hallucination truncation and ensembling of forecast samples.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

#[allow(unused_imports)] // float methods come from libm without std
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::RegulatorError;
use crate::geocodec::{cell_center, hop_distance, CellId, CodecConfig, GeoPoint, TokenId};
use crate::gpt::{generate_many, Checkpoint, SamplerConfig};
use crate::trackprep::GroomedTrack;

/// Bits removed from the token depth when grouping endpoints into a
/// consensus destination.
pub const CONSENSUS_COARSEN_BITS: u8 = 6;
pub const DEFAULT_WAYPOINT_STRIDE: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegulatorConfig {
    /// Largest allowed hop distance between consecutive cells.
    pub max_hops: u64,
    /// Samples with fewer valid steps are discarded from the ensemble.
    pub min_valid_steps: usize,
}

impl RegulatorConfig {
    /// Discard threshold at a quarter of the horizon.
    pub fn for_horizon(max_hops: u64, max_steps: usize) -> Self {
        RegulatorConfig { max_hops, min_valid_steps: max_steps.div_ceil(4) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSample {
    pub tokens: Vec<TokenId>,
    /// Decoded cells of the valid prefix.
    pub cells: Vec<CellId>,
    pub truncated_at: Option<usize>,
    pub valid_len: usize,
    pub discarded: bool,
}

/// Scans from the last prompt cell through the decoded forecast and cuts at
/// the first transition longer than `max_hops` (the offending step is
/// excluded).
pub fn regulate(
    tokens: &[TokenId],
    last_prompt_cell: &CellId,
    cfg: &RegulatorConfig,
    codec: &CodecConfig,
) -> ForecastSample {
    let mut cells = Vec::with_capacity(tokens.len());
    let mut prev = *last_prompt_cell;
    let mut truncated_at = None;
    for (k, &t) in tokens.iter().enumerate() {
        let c = codec.cell_of(t);
        match hop_distance(&prev, &c) {
            Ok(h) if h <= cfg.max_hops => {}
            _ => {
                truncated_at = Some(k);
                break;
            }
        }
        cells.push(c);
        prev = c;
    }
    let valid_len = cells.len();
    ForecastSample {
        tokens: tokens.to_vec(),
        cells,
        truncated_at,
        valid_len,
        discarded: valid_len < cfg.min_valid_steps || valid_len == 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Consensus {
    pub point: GeoPoint,
    pub cell: CellId,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastEnsemble {
    pub samples: Vec<ForecastSample>,
    pub mean_route: Vec<GeoPoint>,
    pub consensus_destination: Option<Consensus>,
    /// Times of forecast steps `1..=L` after the prompt's last point.
    pub horizon_times: Vec<f64>,
    pub dt: f64,
}

impl ForecastEnsemble {
    /// Attaches `t_end + k dt` for `k = 1..=steps`.
    pub fn with_horizon(mut self, t_end: f64, dt: f64, steps: usize) -> Self {
        self.horizon_times = (1..=steps).map(|k| t_end + k as f64 * dt).collect();
        self.dt = dt;
        self
    }

    /// Mean-route points every `stride` steps.
    pub fn waypoints(&self, stride: usize) -> Vec<(usize, GeoPoint)> {
        let stride = stride.max(1);
        self.mean_route
            .iter()
            .enumerate()
            .filter(|(k, _)| (k + 1) % stride == 0)
            .map(|(k, p)| (k, *p))
            .collect()
    }
}

/// Average of points; longitude uses a circular mean when the set spans
/// more than half the globe in longitude.
pub fn mean_point(points: &[GeoPoint]) -> GeoPoint {
    let n = points.len() as f64;
    let lat = points.iter().map(|p| p.lat).sum::<f64>() / n;
    let lo = points.iter().map(|p| p.lon).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.lon).fold(f64::NEG_INFINITY, f64::max);
    let lon = if hi - lo > 180.0 {
        let to_rad = core::f64::consts::PI / 180.0;
        let s: f64 = points.iter().map(|p| (p.lon * to_rad).sin()).sum();
        let c: f64 = points.iter().map(|p| (p.lon * to_rad).cos()).sum();
        crate::geocodec::normalize_lon(s.atan2(c) / to_rad)
    } else {
        points.iter().map(|p| p.lon).sum::<f64>() / n
    };
    GeoPoint { lat, lon }
}

/// Mean route over samples valid at each step, and the modal coarse end
/// cell. Discarded samples stay in `samples` but do not contribute.
pub fn ensemble(samples: Vec<ForecastSample>) -> Result<ForecastEnsemble, RegulatorError> {
    let live: Vec<&ForecastSample> = samples.iter().filter(|s| !s.discarded).collect();
    if live.is_empty() {
        return Err(RegulatorError::EmptyEnsemble);
    }
    let longest = live.iter().map(|s| s.valid_len).max().unwrap_or(0);
    let mut mean_route = Vec::with_capacity(longest);
    let mut buf = Vec::with_capacity(live.len());
    for k in 0..longest {
        buf.clear();
        buf.extend(live.iter().filter(|s| s.valid_len > k).map(|s| cell_center(&s.cells[k])));
        mean_route.push(mean_point(&buf));
    }
    // cell -> (support, summed valid length)
    let mut votes: BTreeMap<CellId, (usize, usize)> = BTreeMap::new();
    for s in &live {
        let last = s.cells[s.valid_len - 1];
        let coarse = last.truncate(last.depth().saturating_sub(CONSENSUS_COARSEN_BITS));
        let e = votes.entry(coarse).or_default();
        e.0 += 1;
        e.1 += s.valid_len;
    }
    // BTreeMap iterates in ascending cell order, so strict comparison keeps
    // the lowest cell on full ties.
    let mut best: Option<(CellId, usize, usize)> = None;
    for (&cell, &(support, total)) in &votes {
        let better = match best {
            None => true,
            Some((_, bs, bt)) => support > bs || (support == bs && total > bt),
        };
        if better {
            best = Some((cell, support, total));
        }
    }
    let consensus_destination =
        best.map(|(cell, support, _)| Consensus { point: cell_center(&cell), cell, support });
    Ok(ForecastEnsemble { samples, mean_route, consensus_destination, horizon_times: Vec::new(), dt: 0.0 })
}

/// Independent random stream for sample `k` under a master seed.
pub fn sample_rng(master_seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(k as u64 + 1);
    rng
}

/// Tokenizes the prompt, draws `k_samples` forecasts, regulates each and
/// ensembles them.
pub fn forecast(
    ckpt: &Checkpoint,
    prompt_track: &GroomedTrack,
    sampler: &SamplerConfig,
    reg_cfg: &RegulatorConfig,
) -> Result<ForecastEnsemble, RegulatorError> {
    let codec = &ckpt.codec;
    let mut prompt = Vec::with_capacity(prompt_track.points.len());
    for p in &prompt_track.points {
        prompt.push(codec.token_of(p)?);
    }
    let last_cell = codec.cell_of_point(prompt_track.points.last().ok_or(RegulatorError::EmptyEnsemble)?)?;
    let block = ckpt.model.config().block_size;
    let context = &prompt[prompt.len().saturating_sub(block)..];
    let mut rngs: Vec<ChaCha8Rng> = (0..sampler.k_samples).map(|k| sample_rng(sampler.seed, k)).collect();
    let outputs = generate_many(&ckpt.model, context, sampler, &mut rngs)?;
    let samples = outputs.iter().map(|toks| regulate(toks, &last_cell, reg_cfg, codec)).collect();
    let t_end = prompt_track.time_at(prompt_track.points.len() - 1);
    Ok(ensemble(samples)?.with_horizon(t_end, prompt_track.dt, sampler.max_steps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geocodec::{derive_codec, encode_point, offset_cell};
    use alloc::vec;

    fn setup() -> (CodecConfig, CellId) {
        let a = GeoPoint::new(55.2, 10.3).unwrap();
        let b = GeoPoint::new(55.9, 11.4).unwrap();
        let codec = derive_codec(&[a, b]).unwrap();
        let start = encode_point(&GeoPoint::new(55.5, 10.8).unwrap(), codec.token_depth()).unwrap();
        (codec, start)
    }

    fn walk(codec: &CodecConfig, start: &CellId, steps: &[(i64, i64)]) -> Vec<TokenId> {
        let mut c = *start;
        steps
            .iter()
            .map(|&(dx, dy)| {
                c = offset_cell(&c, dx, dy).unwrap();
                codec.token_of_cell(&c).unwrap()
            })
            .collect()
    }

    #[test]
    fn adjacent_forecast_untruncated() {
        let (codec, start) = setup();
        let toks = walk(&codec, &start, &[(1, 0); 12]);
        let s = regulate(&toks, &start, &RegulatorConfig { max_hops: 3, min_valid_steps: 3 }, &codec);
        assert_eq!(s.truncated_at, None);
        assert_eq!(s.valid_len, 12);
        assert!(!s.discarded);
    }

    #[test]
    fn jump_beyond_n_truncates_and_n_does_not() {
        let (codec, start) = setup();
        let cfg = RegulatorConfig { max_hops: 3, min_valid_steps: 1 };
        let mut steps = vec![(1, 0); 12];
        steps[7] = (4, 0);
        let s = regulate(&walk(&codec, &start, &steps), &start, &cfg, &codec);
        assert_eq!(s.truncated_at, Some(7));
        assert_eq!(s.valid_len, 7);
        steps[7] = (3, -3);
        let s = regulate(&walk(&codec, &start, &steps), &start, &cfg, &codec);
        assert_eq!(s.truncated_at, None);
    }

    #[test]
    fn first_step_jump_is_caught() {
        let (codec, start) = setup();
        let toks = walk(&codec, &start, &[(5, 0), (1, 0)]);
        let s = regulate(&toks, &start, &RegulatorConfig { max_hops: 3, min_valid_steps: 1 }, &codec);
        assert_eq!(s.truncated_at, Some(0));
        assert!(s.discarded);
    }

    #[test]
    fn identical_samples_ensemble() {
        let (codec, start) = setup();
        let toks = walk(&codec, &start, &[(1, 1); 8]);
        let cfg = RegulatorConfig { max_hops: 3, min_valid_steps: 2 };
        let samples: Vec<_> = (0..4).map(|_| regulate(&toks, &start, &cfg, &codec)).collect();
        let e = ensemble(samples.clone()).unwrap();
        let route: Vec<GeoPoint> = samples[0].cells.iter().map(cell_center).collect();
        assert_eq!(e.mean_route, route);
        assert_eq!(e.consensus_destination.unwrap().support, 4);
    }

    #[test]
    fn mirrored_samples_average_onto_meridian() {
        let pts = [GeoPoint { lat: 10.0, lon: 4.0 }, GeoPoint { lat: 12.0, lon: 6.0 }];
        assert_eq!(mean_point(&pts), GeoPoint { lat: 11.0, lon: 5.0 });
        let wrap = [GeoPoint { lat: 0.0, lon: 179.0 }, GeoPoint { lat: 0.0, lon: -179.0 }];
        let m = mean_point(&wrap);
        assert!((m.lon.abs() - 180.0).abs() < 1e-9, "{m:?}");
    }

    #[test]
    fn consensus_picks_majority_coarse_cell() {
        let (codec, start) = setup();
        let cfg = RegulatorConfig { max_hops: 3, min_valid_steps: 1 };
        let east = walk(&codec, &start, &[(1, 0); 5]);
        let north = walk(&codec, &start, &[(0, 3); 5]);
        let west = walk(&codec, &start, &[(-3, 0); 5]);
        let samples = vec![
            regulate(&east, &start, &cfg, &codec),
            regulate(&north, &start, &cfg, &codec),
            regulate(&east, &start, &cfg, &codec),
            regulate(&west, &start, &cfg, &codec),
            regulate(&east, &start, &cfg, &codec),
        ];
        let expected = samples[0].cells[4].truncate(codec.token_depth() - CONSENSUS_COARSEN_BITS);
        let e = ensemble(samples).unwrap();
        let c = e.consensus_destination.unwrap();
        assert_eq!(c.support, 3);
        assert_eq!(c.cell, expected);
        assert_eq!(c.point, cell_center(&expected));
    }

    #[test]
    fn all_discarded_is_an_error() {
        let (codec, start) = setup();
        let toks = walk(&codec, &start, &[(9, 0)]);
        let s = regulate(&toks, &start, &RegulatorConfig { max_hops: 3, min_valid_steps: 1 }, &codec);
        assert_eq!(ensemble(vec![s]), Err(RegulatorError::EmptyEnsemble));
    }

    #[test]
    fn horizon_and_waypoints() {
        let (codec, start) = setup();
        let toks = walk(&codec, &start, &[(1, 0); 12]);
        let s = regulate(&toks, &start, &RegulatorConfig { max_hops: 1, min_valid_steps: 1 }, &codec);
        let e = ensemble(vec![s]).unwrap().with_horizon(1000.0, 60.0, 12);
        assert_eq!(e.horizon_times[0], 1060.0);
        assert!(e.horizon_times.windows(2).all(|w| w[1] - w[0] == 60.0));
        let w = e.waypoints(6);
        assert_eq!(w.iter().map(|(k, _)| *k).collect::<Vec<_>>(), vec![5, 11]);
    }
}
