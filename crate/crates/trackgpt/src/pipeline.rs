//! End-to-end drivers: prep, train, forecast and eval.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use trackgpt_core::geocodec::{derive_codec_capped, encode_point, hop_distance, MAX_PREFIX_DEPTH};
use trackgpt_core::gpt::{train, AdamState, Checkpoint, Model, ModelConfig, SamplerConfig, StepLog, TrainParams};
use trackgpt_core::metrics::{aggregate, score_track, BenchmarkReport, TrackScore};
use trackgpt_core::regulator::{forecast, ForecastEnsemble};
use trackgpt_core::trackprep::{groom, resample, split_on_blackout, GroomedTrack, Groomed, RawTrack};
use trackgpt_core::{GeoPoint, RegulatorError};

use crate::baseline::baseline_const_velocity;
use crate::error::{Error, Result};
use crate::formats::checkpoint;
use crate::formats::corpus::{format_corpus, Corpus};
use crate::formats::{trainlog, write_atomic};
use crate::geojson::{ensemble_features, feature_collection, to_string};
use crate::protocol::ProtocolSpec;
use crate::report::{format_csv, format_table};

pub const CORPUS_FILE: &str = "corpus.txt";
pub const CODEC_FILE: &str = "codec.txt";

/// Runs `f` on a single worker thread when `deterministic`, otherwise on
/// rayon's global pool.
pub fn with_threads<T: Send>(deterministic: bool, f: impl FnOnce() -> T + Send) -> T {
    if deterministic {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("single-thread pool");
        pool.install(f)
    } else {
        f()
    }
}

/// Distinct sampling seed for the `index`-th forecast under a master seed.
pub fn track_seed(master: u64, index: usize) -> u64 {
    master ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepOutput {
    pub corpus: Corpus,
    pub groomed: Groomed,
}

impl PrepOutput {
    pub fn summary(&self) -> String {
        let g = &self.groomed;
        let s = &g.stats;
        let mut out = format!(
            "tracks in {} -> out {} (after blackout split {}, after filters {}, too short {}); tokens {}; hop>1 fraction {:.4}; dt {} s",
            s.tracks_in,
            g.corpus.len(),
            s.after_blackout_split,
            s.after_filter,
            s.too_short,
            s.tokens,
            s.tokenize.jump_fraction(),
            g.dt.dt
        );
        if let (Some(an), Some(mc)) = (g.dt_an, g.dt_mc) {
            let _ = write!(out, " (adjacency {an} s, block fit {mc} s)");
        }
        if g.dt.adjacency_violated {
            out.push_str("; block fitting forces cell skips");
        }
        out
    }
}

/// Derives the codec from every observation (capped at the protocol's
/// resolution) and grooms the tracks into a token corpus.
pub fn prep(tracks: &[RawTrack], protocol: &ProtocolSpec, block_size: usize) -> Result<PrepOutput> {
    protocol.validate()?;
    let points: Vec<GeoPoint> = tracks.iter().flat_map(|t| t.observations().iter().map(|o| o.point)).collect();
    if points.is_empty() {
        return Err(Error::Prep(trackgpt_core::PrepError::Empty));
    }
    let cap = protocol.max_prefix_depth()?.unwrap_or(MAX_PREFIX_DEPTH);
    let codec = derive_codec_capped(&points, cap)?;
    let groomed = groom(tracks, &protocol.prep_config(None), &codec, block_size)?;
    let corpus = Corpus { codec, dt: groomed.dt.dt, tracks: groomed.corpus.iter().map(|t| t.tokens.clone()).collect() };
    Ok(PrepOutput { corpus, groomed })
}

/// [`prep`] plus the corpus and codec files in `out_dir`.
pub fn run_prep(tracks: &[RawTrack], protocol: &ProtocolSpec, block_size: usize, out_dir: &Path) -> Result<PrepOutput> {
    let out = prep(tracks, protocol, block_size)?;
    write_atomic(&out_dir.join(CORPUS_FILE), format_corpus(&out.corpus).as_bytes())?;
    write_atomic(&out_dir.join(CODEC_FILE), crate::formats::codec::format_codec(&out.corpus.codec).as_bytes())?;
    log::info!("{}", out.summary());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRun {
    pub checkpoint: PathBuf,
    pub logs: Vec<StepLog>,
    pub resumed_from: u64,
}

/// Where and how often [`run_train`] saves, and whether it picks up an
/// existing checkpoint.
#[derive(Debug, Clone, Copy)]
pub struct TrainSession<'a> {
    pub checkpoint: &'a Path,
    /// Appends "step loss lr" lines here.
    pub log: Option<&'a Path>,
    pub save_every: u64,
    pub resume: bool,
    /// Stops (after saving) once this step is reached, short of
    /// `params.steps`; the schedule still spans `params.steps`.
    pub stop_at: Option<u64>,
}

/// Trains on `corpus` until `params.steps`, saving the checkpoint (with
/// optimizer state) and appending the log every `save_every` steps. With
/// `resume`, an existing checkpoint is continued exactly.
pub fn run_train(corpus: &Corpus, model_cfg: &ModelConfig, params: &TrainParams, session: &TrainSession<'_>) -> Result<TrainRun> {
    let ckpt_path = session.checkpoint;
    params.validate()?;
    let mut ckpt = if session.resume && ckpt_path.exists() {
        let c = checkpoint::load(ckpt_path)?;
        if c.codec != corpus.codec || c.dt != corpus.dt {
            return Err(Error::Config(format!(
                "checkpoint {} was trained on a different codec or dt than this corpus",
                ckpt_path.display()
            )));
        }
        c
    } else {
        let model = Model::<f32>::init(*model_cfg)?;
        Checkpoint { model, codec: corpus.codec, dt: corpus.dt, adam: None }
    };
    let n = ckpt.model.params().len();
    let mut adam = ckpt.adam.take().unwrap_or_else(|| AdamState::new(n));
    let resumed_from = adam.t;
    if adam.t > params.steps {
        return Err(Error::Config(format!("checkpoint is at step {}, beyond the requested {}", adam.t, params.steps)));
    }
    let save_every = session.save_every.max(1);
    let end = session.stop_at.map_or(params.steps, |s| s.min(params.steps));
    let mut all = Vec::new();
    while adam.t < end {
        let boundary = (((adam.t / save_every) + 1) * save_every).min(end);
        let chunk = train(&mut ckpt.model, &corpus.tracks, params, &mut adam, |l| l.step + 1 < boundary)?;
        if let Some(last) = chunk.last() {
            log::info!("step {} loss {:.4} lr {:.3e} grad norm {:.3}", last.step, last.loss, last.lr, last.grad_norm);
        }
        ckpt.adam = Some(adam.clone());
        checkpoint::save(ckpt_path, &ckpt)?;
        if let Some(p) = session.log {
            trainlog::append(p, &chunk)?;
        }
        all.extend(chunk);
    }
    Ok(TrainRun { checkpoint: ckpt_path.to_path_buf(), logs: all, resumed_from })
}

/// Splits on blackouts and resamples at `dt`.
pub fn resample_pieces(track: &RawTrack, max_gap: f64, dt: f64) -> Vec<GroomedTrack> {
    split_on_blackout(track, max_gap).iter().filter_map(|p| resample(p, dt).ok()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastOutput {
    pub entity_id: String,
    pub prompt: GroomedTrack,
    pub ensemble: Option<ForecastEnsemble>,
}

fn coverage_error(ckpt: &Checkpoint, entity: &str, p: &GeoPoint) -> Error {
    Error::Coverage(format!(
        "track {entity} reaches ({:.5}, {:.5}), outside the model's area (geohash prefix {}); crop the input with an aoi filter or retrain on data that covers it",
        p.lat,
        p.lon,
        ckpt.codec.prefix().to_geohash()
    ))
}

/// Forecasts from the latest `prompt_len` resampled steps of each track.
pub fn forecast_tracks(ckpt: &Checkpoint, tracks: &[RawTrack], protocol: &ProtocolSpec) -> Result<Vec<ForecastOutput>> {
    protocol.validate()?;
    let reg = protocol.regulator_config();
    let jobs: Vec<(usize, &RawTrack, GroomedTrack)> = tracks
        .iter()
        .enumerate()
        .filter_map(|(i, t)| {
            let last = resample_pieces(t, protocol.prep.max_gap_s, ckpt.dt).pop()?;
            let n = last.points.len();
            let start = n.saturating_sub(protocol.prompt_len);
            Some((i, t, last.slice(start, n)))
        })
        .collect();
    for (_, t, prompt) in &jobs {
        if let Some(p) = prompt.points.iter().find(|p| !ckpt.codec.covers(p)) {
            return Err(coverage_error(ckpt, &t.entity_id, p));
        }
    }
    jobs.into_par_iter()
        .map(|(i, t, prompt)| {
            let sampler = SamplerConfig { seed: track_seed(protocol.sampler.seed, i), ..protocol.sampler_config() };
            let ensemble = match forecast(ckpt, &prompt, &sampler, &reg) {
                Ok(e) => Some(e),
                Err(RegulatorError::EmptyEnsemble) => None,
                Err(e) => return Err(e.into()),
            };
            Ok(ForecastOutput { entity_id: t.entity_id.clone(), prompt, ensemble })
        })
        .collect()
}

pub fn forecast_summary(out: &[ForecastOutput]) -> String {
    let mut s = String::new();
    for f in out {
        match &f.ensemble {
            None => {
                let _ = writeln!(s, "{}: every sample was discarded by the regulator", f.entity_id);
            }
            Some(e) => {
                let lens: Vec<String> = e.samples.iter().map(|x| x.valid_len.to_string()).collect();
                let truncated = e.samples.iter().filter(|x| x.truncated_at.is_some()).count();
                let _ = write!(s, "{}: valid lengths [{}], {truncated} truncated", f.entity_id, lens.join(" "));
                if let Some(c) = &e.consensus_destination {
                    let _ = write!(s, ", consensus {} ({:.5}, {:.5}) support {}", c.cell.to_geohash(), c.point.lat, c.point.lon, c.support);
                }
                s.push('\n');
            }
        }
    }
    s
}

/// Forecasts and writes the GeoJSON export; returns the summary text.
pub fn run_forecast(ckpt: &Checkpoint, tracks: &[RawTrack], protocol: &ProtocolSpec, out: &Path) -> Result<String> {
    let results = forecast_tracks(ckpt, tracks, protocol)?;
    let mut features = Vec::new();
    for r in &results {
        match &r.ensemble {
            Some(e) => features.extend(ensemble_features(&r.entity_id, &r.prompt, e)),
            None => features.extend(ensemble_features(&r.entity_id, &r.prompt, &empty_ensemble(r.prompt.dt))),
        }
    }
    write_atomic(out, to_string(&feature_collection(features)).as_bytes())?;
    Ok(forecast_summary(&results))
}

fn empty_ensemble(dt: f64) -> ForecastEnsemble {
    ForecastEnsemble { samples: Vec::new(), mean_route: Vec::new(), consensus_destination: None, horizon_times: Vec::new(), dt }
}

/// Which forecaster `run_eval` scores.
#[derive(Debug, Clone, Copy)]
pub enum Forecaster<'a> {
    Model(&'a Checkpoint),
    /// Constant velocity at the given token depth and dt.
    ConstVelocity { depth: u8, dt: f64 },
}

impl Forecaster<'_> {
    fn dt(&self) -> f64 {
        match self {
            Forecaster::Model(c) => c.dt,
            Forecaster::ConstVelocity { dt, .. } => *dt,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackResult {
    pub track_id: String,
    pub score: TrackScore,
    /// Hop distance from the chosen sample's cell to the truth cell per
    /// horizon step; `None` past the sample's valid steps.
    pub hops: Vec<Option<u64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRun {
    pub report: BenchmarkReport,
    pub rows: Vec<TrackResult>,
    pub skipped_short: usize,
    pub skipped_coverage: usize,
    pub horizon: usize,
}

impl EvalRun {
    /// Share of all horizon steps, over every evaluated track, whose chosen
    /// forecast cell lies within `hops` of the truth cell. Missing steps count
    /// as misses.
    pub fn fraction_within(&self, hops: u64) -> f64 {
        let total = self.rows.len() * self.horizon;
        if total == 0 {
            return f64::NAN;
        }
        let hits: usize = self.rows.iter().map(|r| r.hops.iter().filter(|h| h.is_some_and(|h| h <= hops)).count()).sum();
        hits as f64 / total as f64
    }

    pub fn csv(&self) -> String {
        let rows: Vec<(String, TrackScore)> = self.rows.iter().map(|r| (r.track_id.clone(), r.score.clone())).collect();
        format_csv(&rows, self.report.units)
    }
}

fn unscored(protocol: &ProtocolSpec) -> TrackScore {
    TrackScore {
        per_step_error: Vec::new(),
        ade: f64::NAN,
        fde: f64::NAN,
        interval_errors: protocol.eval.interval_marks.iter().map(|&m| (m, None)).collect(),
        chosen_sample: 0,
        coverage: 0.0,
    }
}

/// Scores every test track long enough for prompt plus horizon: the first
/// `prompt_len` steps prompt the forecaster and the next `horizon` steps are
/// the truth.
pub fn run_eval(forecaster: Forecaster<'_>, tracks: &[RawTrack], protocol: &ProtocolSpec) -> Result<EvalRun> {
    protocol.validate()?;
    let dt = forecaster.dt();
    let (p, h) = (protocol.prompt_len, protocol.horizon);
    let mut cases = Vec::new();
    let (mut skipped_short, mut skipped_coverage) = (0, 0);
    for t in tracks {
        for (k, g) in resample_pieces(t, protocol.prep.max_gap_s, dt).into_iter().enumerate() {
            if g.points.len() < p + h {
                skipped_short += 1;
                continue;
            }
            let prompt = g.slice(0, p);
            if let Forecaster::Model(c) = forecaster {
                if prompt.points.iter().any(|q| !c.codec.covers(q)) {
                    skipped_coverage += 1;
                    continue;
                }
            }
            let id = if k == 0 { t.entity_id.clone() } else { format!("{}#{k}", t.entity_id) };
            cases.push((id, prompt, g.slice(p, p + h)));
        }
    }
    if skipped_short + skipped_coverage > 0 {
        log::warn!("skipped {skipped_short} tracks shorter than prompt plus horizon and {skipped_coverage} outside coverage");
    }
    let eval_cfg = protocol.eval_config();
    let reg = protocol.regulator_config();
    let coarsen = protocol.eval.coarsen_bits;
    let rows: Vec<TrackResult> = cases
        .into_par_iter()
        .enumerate()
        .map(|(i, (track_id, prompt, truth))| {
            let ensemble = match forecaster {
                Forecaster::Model(c) => {
                    let sampler = SamplerConfig { seed: track_seed(protocol.sampler.seed, i), ..protocol.sampler_config() };
                    match forecast(c, &prompt, &sampler, &reg) {
                        Ok(e) => Some(e),
                        Err(RegulatorError::EmptyEnsemble) => None,
                        Err(e) => return Err(Error::from(e)),
                    }
                }
                Forecaster::ConstVelocity { depth, .. } => Some(baseline_const_velocity(&prompt, h, depth)?),
            };
            let Some(mut e) = ensemble else {
                return Ok(TrackResult { track_id, score: unscored(protocol), hops: vec![None; h] });
            };
            if coarsen > 0 {
                for s in &mut e.samples {
                    for c in &mut s.cells {
                        *c = c.truncate(c.depth().saturating_sub(coarsen));
                    }
                }
            }
            let cfg = trackgpt_core::metrics::EvalConfig { best_of_n: eval_cfg.best_of_n.min(e.samples.len()), ..eval_cfg.clone() };
            let score = score_track(&truth, &e, &cfg)?;
            let mut hops = vec![None; h];
            if !score.per_step_error.is_empty() {
                let s = &e.samples[score.chosen_sample];
                for (k, slot) in hops.iter_mut().enumerate().take(s.valid_len.min(h)) {
                    let c = s.cells[k];
                    let truth_cell = encode_point(&truth.points[k], c.depth())?;
                    *slot = Some(hop_distance(&c, &truth_cell)?);
                }
            }
            Ok(TrackResult { track_id, score, hops })
        })
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Err(Error::Config(format!(
            "no test track covers prompt plus horizon ({} steps at dt {dt} s)",
            p + h
        )));
    }
    let scores: Vec<TrackScore> = rows.iter().map(|r| r.score.clone()).collect();
    let report = aggregate(&scores, &eval_cfg)?;
    Ok(EvalRun { report, rows, skipped_short, skipped_coverage, horizon: h })
}

/// [`run_eval`] plus `report.txt` and `report.csv` in `out_dir`.
pub fn run_eval_to_dir(forecaster: Forecaster<'_>, tracks: &[RawTrack], protocol: &ProtocolSpec, out_dir: &Path) -> Result<EvalRun> {
    let run = run_eval(forecaster, tracks, protocol)?;
    let title = match forecaster {
        Forecaster::Model(_) => format!("{} / trackgpt", protocol.name),
        Forecaster::ConstVelocity { .. } => format!("{} / constant velocity", protocol.name),
    };
    let mut table = format_table(&title, &run.report, forecaster.dt());
    let _ = writeln!(table, "Skipped    {} short, {} outside coverage", run.skipped_short, run.skipped_coverage);
    write_atomic(&out_dir.join("report.txt"), table.as_bytes())?;
    write_atomic(&out_dir.join("report.csv"), run.csv().as_bytes())?;
    Ok(run)
}
