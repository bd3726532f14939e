//! Benchmark protocols: grooming recipe, prompt/horizon split, sampling and
//! scoring settings bundled under a name.

use serde::{Deserialize, Serialize};
use trackgpt_core::geocodec::TOKEN_BITS;
use trackgpt_core::gpt::{SamplerConfig, DEFAULT_TEMPERATURE};
use trackgpt_core::metrics::{DistanceUnit, EvalConfig};
use trackgpt_core::regulator::RegulatorConfig;
use trackgpt_core::trackprep::PrepConfig;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeriveWord {
    Derive,
}

/// Fixed interval in seconds, or `"derive"` for the adjacency/block rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DtSpec {
    Seconds(f64),
    Derive(DeriveWord),
}

impl DtSpec {
    pub fn fixed(&self) -> Option<f64> {
        match *self {
            DtSpec::Seconds(s) => Some(s),
            DtSpec::Derive(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrepSpec {
    pub max_gap_s: f64,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    Nm,
    Km,
}

impl From<Units> for DistanceUnit {
    fn from(u: Units) -> Self {
        match u {
            Units::Nm => DistanceUnit::NauticalMiles,
            Units::Km => DistanceUnit::Kilometers,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSpec {
    pub best_of_n: usize,
    pub units: Units,
    /// Bits dropped from forecast cells before scoring; 0 scores at token depth.
    #[serde(default)]
    pub coarsen_bits: u8,
    /// Forecast steps (1-based) reported individually.
    pub interval_marks: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegulatorSpec {
    pub max_hops: u64,
    pub min_valid_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSpec {
    pub temperature: f64,
    pub k_samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpec {
    pub name: String,
    /// Prompt length in resampled steps.
    pub prompt_len: usize,
    /// Forecast length in steps.
    pub horizon: usize,
    pub dt: DtSpec,
    /// Working geohash resolution in characters; a `.5` adds one bit.
    /// Absent means as fine as the area allows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution_chars: Option<f64>,
    pub prep: PrepSpec,
    pub eval: EvalSpec,
    pub regulator: RegulatorSpec,
    pub sampler: SamplerSpec,
}

pub const BUILTIN_NAMES: [&str; 2] = ["dma-ais", "trajair-adsb"];

/// Depth in bits of a resolution given in characters.
pub fn resolution_depth(chars: f64) -> Result<u8> {
    if !(chars.is_finite() && chars > 0.0 && chars <= 12.0) {
        return Err(Error::Config(format!("resolution {chars} characters is out of range")));
    }
    let whole = chars.floor();
    let frac = chars - whole;
    if frac != 0.0 && frac != 0.5 {
        return Err(Error::Config(format!("resolution {chars} must be whole or half characters")));
    }
    Ok(whole as u8 * 5 + u8::from(frac > 0.0))
}

impl ProtocolSpec {
    /// Vessels: 1 h blackout split, 4 h to 20 h tracks, 10 min steps,
    /// 5 h prompt, 15 h forecast scored hourly in nautical miles.
    pub fn dma_ais() -> Self {
        ProtocolSpec {
            name: "dma-ais".into(),
            prompt_len: 30,
            horizon: 90,
            dt: DtSpec::Seconds(600.0),
            resolution_chars: Some(5.0),
            prep: PrepSpec { max_gap_s: 3600.0, min_duration_s: 4.0 * 3600.0, max_duration_s: 20.0 * 3600.0 },
            eval: EvalSpec { best_of_n: 16, units: Units::Nm, coarsen_bits: 0, interval_marks: (1..=15).map(|h| 6 * h).collect() },
            regulator: RegulatorSpec { max_hops: 3, min_valid_steps: 23 },
            sampler: SamplerSpec { temperature: DEFAULT_TEMPERATURE, k_samples: 16, seed: 1337 },
        }
    }

    /// Light aircraft near a runway: 250 ms steps, 11 s prompt, 109 s
    /// forecast, best of 5, scored in kilometres.
    pub fn trajair_adsb() -> Self {
        let mut marks: Vec<usize> = (1..=10).map(|k| 40 * k).collect();
        marks.push(436);
        ProtocolSpec {
            name: "trajair-adsb".into(),
            prompt_len: 44,
            horizon: 436,
            dt: DtSpec::Seconds(0.25),
            resolution_chars: Some(8.0),
            prep: PrepSpec { max_gap_s: 10.0, min_duration_s: 20.0, max_duration_s: 120.0 },
            eval: EvalSpec { best_of_n: 5, units: Units::Km, coarsen_bits: 0, interval_marks: marks },
            regulator: RegulatorSpec { max_hops: 10, min_valid_steps: 109 },
            sampler: SamplerSpec { temperature: DEFAULT_TEMPERATURE, k_samples: 5, seed: 1337 },
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "dma-ais" => Some(Self::dma_ais()),
            "trajair-adsb" => Some(Self::trajair_adsb()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("protocol {}: {m}", self.name)));
        if self.prompt_len < 1 || self.horizon < 1 {
            return bad("prompt_len and horizon must be positive".into());
        }
        if let DtSpec::Seconds(s) = self.dt {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("dt {s} must be positive"));
            }
        }
        if let Some(c) = self.resolution_chars {
            if resolution_depth(c)? < TOKEN_BITS {
                return bad(format!("resolution {c} is coarser than one token"));
            }
        }
        self.prep_config(None).validate()?;
        if self.eval.best_of_n == 0 || self.eval.best_of_n > self.sampler.k_samples {
            return bad(format!("best_of_n {} needs 1..={} samples", self.eval.best_of_n, self.sampler.k_samples));
        }
        if let Some(&m) = self.eval.interval_marks.iter().find(|&&m| m == 0 || m > self.horizon) {
            return bad(format!("interval mark {m} outside 1..={}", self.horizon));
        }
        if !(self.sampler.temperature > 0.0) {
            return bad("temperature must be positive".into());
        }
        Ok(())
    }

    /// Largest prefix depth allowed by the working resolution.
    pub fn max_prefix_depth(&self) -> Result<Option<u8>> {
        self.resolution_chars.map(|c| Ok(resolution_depth(c)? - TOKEN_BITS)).transpose()
    }

    pub fn prep_config(&self, dt_override: Option<f64>) -> PrepConfig {
        PrepConfig {
            max_gap: self.prep.max_gap_s,
            min_duration: self.prep.min_duration_s,
            max_duration: self.prep.max_duration_s,
            dt_override: dt_override.or(self.dt.fixed()),
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            best_of_n: self.eval.best_of_n,
            interval_marks: self.eval.interval_marks.clone(),
            units: self.eval.units.into(),
        }
    }

    pub fn regulator_config(&self) -> RegulatorConfig {
        RegulatorConfig { max_hops: self.regulator.max_hops, min_valid_steps: self.regulator.min_valid_steps }
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            temperature: self.sampler.temperature,
            k_samples: self.sampler.k_samples,
            max_steps: self.horizon,
            seed: self.sampler.seed,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("protocol fields are plain data")
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let p: ProtocolSpec = toml::from_str(s).map_err(|e| Error::parse("protocol", e.message()))?;
        p.validate()?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_round_trip_through_toml() {
        for name in BUILTIN_NAMES {
            let p = ProtocolSpec::builtin(name).unwrap();
            p.validate().unwrap();
            assert_eq!(ProtocolSpec::from_toml(&p.to_toml()).unwrap(), p);
        }
    }

    #[test]
    fn derive_keyword_round_trips() {
        let p = ProtocolSpec { dt: DtSpec::Derive(DeriveWord::Derive), resolution_chars: None, ..ProtocolSpec::dma_ais() };
        let s = p.to_toml();
        assert!(s.contains("dt = \"derive\""), "{s}");
        assert_eq!(ProtocolSpec::from_toml(&s).unwrap(), p);
    }

    #[test]
    fn builtin_values() {
        let d = ProtocolSpec::dma_ais();
        assert_eq!((d.prompt_len as f64 * 600.0, d.horizon as f64 * 600.0), (5.0 * 3600.0, 15.0 * 3600.0));
        assert_eq!((d.eval.best_of_n, d.regulator.max_hops), (16, 3));
        let t = ProtocolSpec::trajair_adsb();
        assert_eq!((t.prompt_len as f64 * 0.25, t.horizon as f64 * 0.25), (11.0, 109.0));
        assert_eq!((t.eval.best_of_n, t.regulator.max_hops), (5, 10));
    }

    #[test]
    fn resolution_bits() {
        assert_eq!(resolution_depth(3.5).unwrap(), 16);
        assert_eq!(resolution_depth(5.0).unwrap(), 25);
        assert_eq!(resolution_depth(4.5).unwrap(), 21);
        assert!(resolution_depth(4.3).is_err());
    }

    #[test]
    fn invalid_protocols_rejected() {
        let mut p = ProtocolSpec::dma_ais();
        p.eval.best_of_n = 17;
        assert!(p.validate().is_err());
        let mut p = ProtocolSpec::dma_ais();
        p.eval.interval_marks.push(91);
        assert!(p.validate().is_err());
        let mut p = ProtocolSpec::dma_ais();
        p.resolution_chars = Some(3.0);
        assert!(p.validate().is_err());
    }
}
