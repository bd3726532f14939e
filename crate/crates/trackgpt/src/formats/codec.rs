//! Codec record: `key = value` lines naming the prefix, its trailing partial
//! bits, the shift and the token depth.

use trackgpt_core::{CellId, CodecConfig};

use super::{parse_kv, take};
use crate::error::{Error, Result};

const WHAT: &str = "codec record";

pub fn codec_pairs(c: &CodecConfig) -> Vec<(&'static str, String)> {
    let p = c.prefix();
    let (dx, dy) = c.shift();
    vec![
        ("prefix", p.to_geohash()),
        ("prefix_partial_bits", (p.depth() % 5).to_string()),
        ("shift_dx", dx.to_string()),
        ("shift_dy", dy.to_string()),
        ("token_depth", c.token_depth().to_string()),
    ]
}

pub fn format_codec(c: &CodecConfig) -> String {
    codec_pairs(c).into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

pub(crate) fn codec_from_map(map: &std::collections::BTreeMap<String, String>) -> Result<CodecConfig> {
    let text: String = take(map, "prefix", WHAT)?;
    let prefix = CellId::from_geohash(&text)?;
    let partial: u8 = take(map, "prefix_partial_bits", WHAT)?;
    if prefix.depth() % 5 != partial {
        return Err(Error::parse(WHAT, format!("prefix {text} does not have {partial} partial bits")));
    }
    let codec = CodecConfig::new(prefix, take(map, "shift_dx", WHAT)?, take(map, "shift_dy", WHAT)?)?;
    let depth: u8 = take(map, "token_depth", WHAT)?;
    if depth != codec.token_depth() {
        return Err(Error::parse(WHAT, format!("token_depth {depth} disagrees with prefix depth {}", prefix.depth())));
    }
    Ok(codec)
}

pub fn parse_codec(text: &str) -> Result<CodecConfig> {
    codec_from_map(&parse_kv(text, WHAT)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use trackgpt_core::geocodec::derive_codec;
    use trackgpt_core::GeoPoint;

    #[test]
    fn record_round_trips() {
        let pts = [GeoPoint::new(55.2, 10.4).unwrap(), GeoPoint::new(55.9, 11.6).unwrap()];
        let c = derive_codec(&pts).unwrap();
        let text = format_codec(&c);
        assert_eq!(parse_codec(&text).unwrap(), c);
        let shifted = CodecConfig::new(c.prefix(), 1, -2).unwrap();
        assert_eq!(parse_codec(&format_codec(&shifted)).unwrap(), shifted);
    }

    #[test]
    fn inconsistent_record_rejected() {
        let pts = [GeoPoint::new(55.2, 10.4).unwrap()];
        let text = format_codec(&derive_codec(&pts).unwrap()).replace("token_depth = ", "token_depth = 1");
        assert!(parse_codec(&text).is_err());
        assert!(parse_codec("prefix = u\n").is_err());
    }
}
