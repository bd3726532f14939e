use alloc::string::String;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("coordinate out of range: lat {lat}, lon {lon}")]
    OutOfRange { lat: f64, lon: f64 },
    #[error("invalid depth {0} (must be in 0..=60)")]
    InvalidDepth(u32),
    #[error("depth mismatch: {0} vs {1}")]
    DepthMismatch(u8, u8),
    #[error("invalid geohash string: {0}")]
    InvalidGeohash(String),
    #[error("grid coordinates ({ix}, {iy}) out of range at depth {depth}")]
    GridOutOfRange { ix: i64, iy: i64, depth: u8 },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid codec configuration: {0}")]
    Config(String),
    #[error("point ({lat}, {lon}) lies outside the codec prefix cell")]
    Coverage { lat: f64, lon: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PrepError {
    #[error("invalid track: {0}")]
    InvalidTrack(String),
    #[error("time {t} outside track span [{start}, {end}]")]
    OutsideSpan { t: f64, start: f64, end: f64 },
    #[error("track span {span} s is shorter than dt {dt} s")]
    TooShort { span: f64, dt: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no tracks")]
    Empty,
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GptError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("no usable training data: {0}")]
    Data(String),
    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { step: u64, loss: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegulatorError {
    #[error("every forecast sample was discarded")]
    EmptyEnsemble,
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Gpt(#[from] GptError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("horizon mismatch: {0}")]
    Horizon(String),
    #[error("ensemble has {have} samples, best-of-{need} requested")]
    TooFewSamples { have: usize, need: usize },
    #[error("nothing to aggregate")]
    Empty,
}
