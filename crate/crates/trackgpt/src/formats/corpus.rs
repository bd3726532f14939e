//! Token corpus: one header line carrying the codec and dt, then one track
//! per line as space-separated decimal tokens.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use trackgpt_core::{CodecConfig, TokenId};

use super::codec::{codec_from_map, codec_pairs};
use super::take;
use crate::error::{Error, Result};

const MAGIC: &str = "#trackgpt-corpus";
const VERSION: &str = "v1";
const WHAT: &str = "token corpus";

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub codec: CodecConfig,
    pub dt: f64,
    pub tracks: Vec<Vec<TokenId>>,
}

pub fn format_corpus(c: &Corpus) -> String {
    let mut s = String::from(MAGIC);
    s.push(' ');
    s.push_str(VERSION);
    for (k, v) in codec_pairs(&c.codec) {
        let _ = write!(s, " {k}={v}");
    }
    let _ = writeln!(s, " dt={}", c.dt);
    for t in &c.tracks {
        let mut first = true;
        for tok in t {
            if !first {
                s.push(' ');
            }
            first = false;
            let _ = write!(s, "{}", tok.0);
        }
        s.push('\n');
    }
    s
}

pub fn parse_corpus(text: &str) -> Result<Corpus> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::parse(WHAT, "empty file"))?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some(MAGIC) {
        return Err(Error::parse(WHAT, "missing header"));
    }
    match fields.next() {
        Some(VERSION) => {}
        v => return Err(Error::parse(WHAT, format!("unsupported version {v:?}"))),
    }
    let mut map = BTreeMap::new();
    for f in fields {
        let (k, v) = f.split_once('=').ok_or_else(|| Error::parse(WHAT, format!("bad header field {f}")))?;
        map.insert(k.to_string(), v.to_string());
    }
    let codec = codec_from_map(&map)?;
    let dt: f64 = take(&map, "dt", WHAT)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::parse(WHAT, format!("dt {dt} must be positive")));
    }
    let mut tracks = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let toks = line
            .split_whitespace()
            .map(|w| w.parse::<u16>().map(TokenId))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(WHAT, format!("line {}: {e}", n + 2)))?;
        tracks.push(toks);
    }
    Ok(Corpus { codec, dt, tracks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use trackgpt_core::geocodec::derive_codec;
    use trackgpt_core::GeoPoint;

    #[test]
    fn corpus_round_trips() {
        let codec = derive_codec(&[GeoPoint::new(10.0, 20.0).unwrap(), GeoPoint::new(10.5, 20.3).unwrap()]).unwrap();
        let c = Corpus {
            codec,
            dt: 600.0 / 7.0,
            tracks: vec![vec![TokenId(0), TokenId(65535), TokenId(7)], vec![TokenId(3), TokenId(3)]],
        };
        let text = format_corpus(&c);
        assert_eq!(text.lines().count(), 3);
        assert_eq!(text.lines().nth(2), Some("3 3"));
        assert_eq!(parse_corpus(&text).unwrap(), c);
    }

    #[test]
    fn bad_token_reports_line() {
        let codec = derive_codec(&[GeoPoint::new(10.0, 20.0).unwrap()]).unwrap();
        let mut text = format_corpus(&Corpus { codec, dt: 1.0, tracks: vec![] });
        text.push_str("1 2\n4 70000\n");
        let err = parse_corpus(&text).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }
}
