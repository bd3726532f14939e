#![allow(dead_code)]

use trackgpt::protocol::{DtSpec, PrepSpec, ProtocolSpec, Units};
use trackgpt::synth::{generate_fleet, SynthConfig};
use trackgpt_core::gpt::{ModelConfig, TrainParams};
use trackgpt_core::trackprep::{Observation, RawTrack};
use trackgpt_core::GeoPoint;

pub fn tracks(cfg: SynthConfig) -> Vec<RawTrack> {
    generate_fleet(&cfg).into_iter().map(|s| s.track).collect()
}

/// A vessel reporting the same position every five minutes.
pub fn stationary(id: &str, at: GeoPoint, hours: f64) -> RawTrack {
    let n = (hours * 12.0) as usize;
    let obs = (0..=n).map(|k| Observation { point: at, t: 1_700_000_000.0 + 300.0 * k as f64 }).collect();
    RawTrack::new(id, obs).unwrap()
}

/// Vessels on the dma-ais scale: slow, hours long, irregular reports.
pub fn vessel_fleet(n: usize, hours: f64, seed: u64, prefix: &str) -> Vec<RawTrack> {
    tracks(SynthConfig {
        n_tracks: n,
        half_extent_km: 60.0,
        speed_kmh: (4.0, 8.0),
        duration_s: hours * 3600.0,
        report_gap_s: (60.0, 300.0),
        id_prefix: prefix.into(),
        seed,
        ..Default::default()
    })
}

pub fn tiny_model(seed: u64) -> ModelConfig {
    ModelConfig { block_size: 64, n_layer: 1, n_head: 2, d_model: 32, seed, ..ModelConfig::default() }
}

pub fn quick_train(steps: u64, seed: u64) -> TrainParams {
    TrainParams { steps, batch_size: 4, lr: 3e-3, min_lr: 3e-4, warmup: 10, seed, ..TrainParams::default() }
}

/// dma-ais with a fixed 10 min step and short prompt and horizon so that
/// small fleets exercise every stage quickly.
pub fn short_protocol(prompt: usize, horizon: usize) -> ProtocolSpec {
    let mut p = ProtocolSpec::dma_ais();
    p.name = "short".into();
    p.prompt_len = prompt;
    p.horizon = horizon;
    p.dt = DtSpec::Seconds(600.0);
    p.prep = PrepSpec { max_gap_s: 3600.0, min_duration_s: 3600.0, max_duration_s: 10.0 * 3600.0 };
    p.eval.units = Units::Km;
    p.eval.interval_marks = (1..=horizon).filter(|m| m % 2 == 0 || *m == horizon).collect();
    p.regulator.min_valid_steps = horizon.div_ceil(4);
    p
}

/// Run config for the command line: tiny model, 10 min steps, short prompt
/// and horizon.
pub const SMALL_RUN_TOML: &str = r#"
[protocol]
name = "dma-ais"
prompt_len = 6
horizon = 12
dt = 600.0

[protocol.prep]
max_gap_s = 3600.0
min_duration_s = 3600.0
max_duration_s = 36000.0

[protocol.eval]
best_of_n = 4
units = "km"
interval_marks = [6, 12]

[protocol.regulator]
max_hops = 3
min_valid_steps = 3

[protocol.sampler]
temperature = 0.92
k_samples = 4
seed = 5

[model]
block_size = 64
n_layer = 1
n_head = 2
d_model = 32

[train]
steps = 12
batch_size = 4
lr = 0.003
min_lr = 0.0003
warmup = 2
save_every = 5
"#;

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn trackgpt(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = std::process::Command::new(env!("CARGO_BIN_EXE_trackgpt"));
    cmd.args(args).env_remove("TRACKGPT_SEED").env_remove("RUST_LOG");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("binary runs");
    Output {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}
