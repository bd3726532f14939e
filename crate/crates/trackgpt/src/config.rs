//! Run configuration: one TOML file with `[ingest]`, `[protocol]`, `[model]`
//! and `[train]` sections. Command-line flags are applied on top.

use serde::{Deserialize, Serialize};
use toml::{Table, Value};
use trackgpt_core::gpt::{ModelConfig, TrainParams};

use crate::error::{Error, Result};
use crate::ingest::IngestSpec;
use crate::protocol::ProtocolSpec;

pub const DEFAULT_SEED: u64 = 1337;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub vocab_size: usize,
    pub block_size: usize,
    pub n_layer: usize,
    pub n_head: usize,
    pub d_model: usize,
    pub dropout: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        let c = ModelConfig::default();
        ModelSpec {
            vocab_size: c.vocab_size,
            block_size: c.block_size,
            n_layer: c.n_layer,
            n_head: c.n_head,
            d_model: c.d_model,
            dropout: c.dropout,
            seed: None,
        }
    }
}

impl ModelSpec {
    pub fn config(&self, seed: u64) -> ModelConfig {
        ModelConfig {
            vocab_size: self.vocab_size,
            block_size: self.block_size,
            n_layer: self.n_layer,
            n_head: self.n_head,
            d_model: self.d_model,
            dropout: self.dropout,
            seed: self.seed.unwrap_or(seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSpec {
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub min_lr: f64,
    pub warmup: u64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub grad_clip: f64,
    /// Steps between checkpoint saves.
    pub save_every: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for TrainSpec {
    fn default() -> Self {
        let p = TrainParams::default();
        TrainSpec {
            steps: p.steps,
            batch_size: p.batch_size,
            lr: p.lr,
            min_lr: p.min_lr,
            warmup: p.warmup,
            weight_decay: p.weight_decay,
            beta1: p.beta1,
            beta2: p.beta2,
            eps: p.eps,
            grad_clip: p.grad_clip,
            save_every: 100,
            seed: None,
        }
    }
}

impl TrainSpec {
    pub fn params(&self, seed: u64) -> TrainParams {
        TrainParams {
            steps: self.steps,
            batch_size: self.batch_size,
            lr: self.lr,
            min_lr: self.min_lr,
            warmup: self.warmup,
            weight_decay: self.weight_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            grad_clip: self.grad_clip,
            seed: self.seed.unwrap_or(seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Global seed for everything without its own.
    pub seed: Option<u64>,
    pub deterministic: bool,
    pub ingest: IngestSpec,
    pub protocol: ProtocolSpec,
    /// Whether the file pinned the sampler seed itself.
    pub sampler_seed_pinned: bool,
    pub model: ModelSpec,
    pub train: TrainSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            deterministic: false,
            ingest: IngestSpec::default(),
            protocol: ProtocolSpec::dma_ais(),
            sampler_seed_pinned: false,
            model: ModelSpec::default(),
            train: TrainSpec::default(),
        }
    }
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// A section lays its keys over the defaults, so nested tables may be partial.
fn section<T: Serialize + serde::de::DeserializeOwned + Default>(t: &mut Table, name: &str) -> Result<T> {
    let v = match t.remove(name) {
        None => return Ok(T::default()),
        Some(Value::Table(over)) => {
            let mut base = Table::try_from(T::default()).expect("defaults serialize to a table");
            merge(&mut base, over);
            Value::Table(base)
        }
        Some(v) => v,
    };
    v.try_into().map_err(|e: toml::de::Error| Error::parse(format!("config [{name}]"), e.message()))
}

/// A protocol section overrides the built-in it names; an unknown name must
/// spell out every field.
pub fn protocol_from_table(over: Table) -> Result<ProtocolSpec> {
    let name = over.get("name").and_then(Value::as_str).unwrap_or("dma-ais").to_string();
    let mut base = match ProtocolSpec::builtin(&name) {
        Some(p) => Table::try_from(&p).expect("protocol serializes to a table"),
        None => Table::new(),
    };
    merge(&mut base, over);
    let p: ProtocolSpec =
        Value::Table(base).try_into().map_err(|e: toml::de::Error| Error::parse(format!("protocol {name}"), e.message()))?;
    p.validate()?;
    Ok(p)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut t: Table = text.parse().map_err(|e: toml::de::Error| Error::parse("config", e.message()))?;
        let seed = match t.remove("seed") {
            None => None,
            Some(Value::Integer(s)) if s >= 0 => Some(s as u64),
            Some(v) => return Err(Error::parse("config", format!("seed must be a non-negative integer, got {v}"))),
        };
        let deterministic = match t.remove("deterministic") {
            None => false,
            Some(Value::Boolean(b)) => b,
            Some(v) => return Err(Error::parse("config", format!("deterministic must be true or false, got {v}"))),
        };
        let ingest = section(&mut t, "ingest")?;
        let model = section(&mut t, "model")?;
        let train = section(&mut t, "train")?;
        let (protocol, sampler_seed_pinned) = match t.remove("protocol") {
            None => (ProtocolSpec::dma_ais(), false),
            Some(Value::Table(p)) => {
                let pinned = p.get("sampler").and_then(Value::as_table).is_some_and(|s| s.contains_key("seed"));
                (protocol_from_table(p)?, pinned)
            }
            Some(_) => return Err(Error::parse("config", "[protocol] must be a table")),
        };
        if let Some(k) = t.keys().next() {
            return Err(Error::parse("config", format!("unknown key or section {k}")));
        }
        Ok(RunConfig { seed, deterministic, ingest, protocol, sampler_seed_pinned, model, train })
    }

    /// Pushes the global seed into every component that has none pinned.
    pub fn resolved_seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.seed).unwrap_or(DEFAULT_SEED)
    }

    pub fn apply_seed(&mut self, seed: u64) {
        if !self.sampler_seed_pinned {
            self.protocol.sampler.seed = seed;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn sections_override_builtins() {
        let c = RunConfig::from_toml(
            r#"
seed = 9
deterministic = true
[ingest]
max_altitude = 6000.0
[ingest.columns]
entity_id = "icao"
timestamp = "time"
lat = "lat"
lon = "lon"
altitude = "alt"
[ingest.aoi.radius]
lat = 40.7
lon = -80.2
radius_km = 5.0
[protocol]
name = "trajair-adsb"
horizon = 200
[protocol.eval]
interval_marks = [100, 200]
[model]
d_model = 64
[train]
steps = 50
"#,
        )
        .unwrap();
        assert_eq!(c.seed, Some(9));
        assert!(c.deterministic);
        assert_eq!(c.ingest.columns.entity_id, "icao");
        assert!(c.ingest.aoi.is_some());
        assert_eq!(c.protocol.horizon, 200);
        assert_eq!(c.protocol.eval.interval_marks, vec![100, 200]);
        assert_eq!(c.protocol.eval.best_of_n, 5);
        assert_eq!(c.model.d_model, 64);
        assert_eq!(c.model.n_layer, ModelSpec::default().n_layer);
        assert_eq!(c.train.steps, 50);
        assert!(!c.sampler_seed_pinned);
    }

    #[test]
    fn partial_nested_tables_keep_defaults() {
        let c = RunConfig::from_toml("[ingest.columns]\nentity_id = \"mmsi\"\n").unwrap();
        assert_eq!(c.ingest.columns.entity_id, "mmsi");
        assert_eq!(c.ingest.columns.lat, IngestSpec::default().columns.lat);
        assert!(RunConfig::from_toml("[ingest.columns]\nmmsi = \"x\"\n").is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("[model]\nwidth = 3\n").is_err());
        assert!(RunConfig::from_toml("[extra]\n").is_err());
        assert!(RunConfig::from_toml("[protocol]\nname = \"custom\"\n").is_err());
    }
}
