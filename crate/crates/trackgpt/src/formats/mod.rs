//! On-disk formats: codec record, token corpus, checkpoint, training log.

pub mod checkpoint;
pub mod codec;
pub mod corpus;
pub mod trainlog;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub(crate) fn parse_kv(text: &str, what: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(what, format!("line {}: expected key = value", n + 1)))?;
        if map.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
            return Err(Error::parse(what, format!("line {}: duplicate key {}", n + 1, k.trim())));
        }
    }
    Ok(map)
}

pub(crate) fn take<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str, what: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let v = map.get(key).ok_or_else(|| Error::parse(what, format!("missing key {key}")))?;
    v.parse().map_err(|e| Error::parse(what, format!("{key} = {v}: {e}")))
}

/// Writes through a sibling temporary file so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
