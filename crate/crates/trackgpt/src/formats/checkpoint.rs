//! Binary checkpoint.
//!
//! Layout: magic `TGPTCKPT`, u32 version, u32 header length, UTF-8 header
//! (`[model]`, `[codec]`, `[run]` sections of `key = value`), u32 tensor
//! count, then per tensor: u16 name length, name, u8 rank, u32 dims, and
//! little-endian f32 data. Optimizer moments are stored as `adam.m.<name>`
//! and `adam.v.<name>`. All integers are little-endian.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use trackgpt_core::gpt::{AdamState, Checkpoint, Model, ModelConfig};

use super::codec::{codec_from_map, codec_pairs};
use super::{take, write_atomic};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"TGPTCKPT";
pub const VERSION: u32 = 1;
const WHAT: &str = "checkpoint";

fn header(ckpt: &Checkpoint) -> String {
    let c = ckpt.model.config();
    let mut h = String::from("[model]\n");
    for (k, v) in [
        ("vocab_size", c.vocab_size.to_string()),
        ("block_size", c.block_size.to_string()),
        ("n_layer", c.n_layer.to_string()),
        ("n_head", c.n_head.to_string()),
        ("d_model", c.d_model.to_string()),
        ("dropout", c.dropout.to_string()),
        ("seed", c.seed.to_string()),
    ] {
        let _ = writeln!(h, "{k} = {v}");
    }
    h.push_str("[codec]\n");
    for (k, v) in codec_pairs(&ckpt.codec) {
        let _ = writeln!(h, "{k} = {v}");
    }
    h.push_str("[run]\n");
    let _ = writeln!(h, "dt = {}", ckpt.dt);
    if let Some(a) = &ckpt.adam {
        let _ = writeln!(h, "adam_step = {}", a.t);
    }
    h
}

fn put_tensor(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f32]) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(shape.len() as u8);
    for &d in shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(ckpt: &Checkpoint) -> Vec<u8> {
    let h = header(ckpt);
    let layout = ckpt.model.layout();
    let n_tensors = layout.tensors().len() * if ckpt.adam.is_some() { 3 } else { 1 };
    let mut out = Vec::with_capacity(16 + h.len() + 4 * layout.total() * if ckpt.adam.is_some() { 3 } else { 1 });
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(h.len() as u32).to_le_bytes());
    out.extend_from_slice(h.as_bytes());
    out.extend_from_slice(&(n_tensors as u32).to_le_bytes());
    let params = ckpt.model.params();
    for t in layout.tensors() {
        put_tensor(&mut out, &t.name, &t.shape, &params[t.offset..t.offset + t.len()]);
    }
    if let Some(a) = &ckpt.adam {
        for (tag, buf) in [("m", &a.m), ("v", &a.v)] {
            for t in layout.tensors() {
                put_tensor(&mut out, &format!("adam.{tag}.{}", t.name), &t.shape, &buf[t.offset..t.offset + t.len()]);
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::parse(WHAT, format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes(2)?.try_into().expect("two bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().expect("four bytes")))
    }
}

fn sections(text: &str) -> Result<BTreeMap<String, BTreeMap<String, String>>> {
    let mut out: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    let mut current = String::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.to_string();
            out.entry(current.clone()).or_default();
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::parse(WHAT, format!("bad header line {line}")))?;
        out.entry(current.clone()).or_default().insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.bytes(8).ok() != Some(&MAGIC[..]) {
        return Err(Error::parse(WHAT, "not a trackgpt checkpoint"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::parse(WHAT, format!("unsupported version {version}")));
    }
    let hlen = r.u32()? as usize;
    let text = std::str::from_utf8(r.bytes(hlen)?).map_err(|e| Error::parse(WHAT, e))?;
    let sec = sections(text)?;
    let empty = BTreeMap::new();
    let m = sec.get("model").unwrap_or(&empty);
    let config = ModelConfig {
        vocab_size: take(m, "vocab_size", WHAT)?,
        block_size: take(m, "block_size", WHAT)?,
        n_layer: take(m, "n_layer", WHAT)?,
        n_head: take(m, "n_head", WHAT)?,
        d_model: take(m, "d_model", WHAT)?,
        dropout: take(m, "dropout", WHAT)?,
        seed: take(m, "seed", WHAT)?,
    };
    config.validate()?;
    let codec = codec_from_map(sec.get("codec").unwrap_or(&empty))?;
    let run = sec.get("run").unwrap_or(&empty);
    let dt: f64 = take(run, "dt", WHAT)?;
    let adam_step: Option<u64> = run.contains_key("adam_step").then(|| take(run, "adam_step", WHAT)).transpose()?;

    let mut tensors: BTreeMap<String, (Vec<usize>, Vec<f32>)> = BTreeMap::new();
    let count = r.u32()?;
    for _ in 0..count {
        let nlen = r.u16()? as usize;
        let name = std::str::from_utf8(r.bytes(nlen)?).map_err(|e| Error::parse(WHAT, e))?.to_string();
        let rank = r.u8()?;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let len = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let len = len.ok_or_else(|| Error::parse(WHAT, format!("tensor {name} too large")))?;
        let raw = r.bytes(len.checked_mul(4).ok_or_else(|| Error::parse(WHAT, "tensor too large"))?)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("four bytes"))).collect();
        if tensors.insert(name.clone(), (shape, data)).is_some() {
            return Err(Error::parse(WHAT, format!("duplicate tensor {name}")));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::parse(WHAT, "trailing bytes"));
    }

    let mut model = Model::<f32>::from_params(config, vec![0.0; config_total(&config)])?;
    let layout = model.layout().clone();
    let mut fill = |prefix: &str, dst: &mut [f32]| -> Result<()> {
        for t in layout.tensors() {
            let key = format!("{prefix}{}", t.name);
            let (shape, data) = tensors.remove(&key).ok_or_else(|| Error::parse(WHAT, format!("missing tensor {key}")))?;
            if shape != t.shape {
                return Err(Error::parse(WHAT, format!("tensor {key} has shape {shape:?}, expected {:?}", t.shape)));
            }
            dst[t.offset..t.offset + t.len()].copy_from_slice(&data);
        }
        Ok(())
    };
    fill("", model.params_mut())?;
    let adam = match adam_step {
        Some(t) => {
            let mut a = AdamState::new(layout.total());
            a.t = t;
            fill("adam.m.", &mut a.m)?;
            fill("adam.v.", &mut a.v)?;
            Some(a)
        }
        None => None,
    };
    if let Some(extra) = tensors.keys().next() {
        return Err(Error::parse(WHAT, format!("unexpected tensor {extra}")));
    }
    Ok(Checkpoint { model, codec, dt, adam })
}

fn config_total(c: &ModelConfig) -> usize {
    trackgpt_core::gpt::Layout::new(c).total()
}

pub fn save(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_atomic(path, &encode(ckpt))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use trackgpt_core::geocodec::derive_codec;
    use trackgpt_core::GeoPoint;

    fn tiny() -> Checkpoint {
        let cfg = ModelConfig { vocab_size: 64, block_size: 8, n_layer: 1, n_head: 2, d_model: 8, dropout: 0.1, seed: 3 };
        let codec = derive_codec(&[GeoPoint::new(1.0, 2.0).unwrap(), GeoPoint::new(1.2, 2.1).unwrap()]).unwrap();
        Checkpoint { model: Model::init(cfg).unwrap(), codec, dt: 0.1 + 0.2, adam: None }
    }

    #[test]
    fn round_trip_with_and_without_optimizer() {
        let mut c = tiny();
        assert_eq!(decode(&encode(&c)).unwrap(), c);
        let n = c.model.params().len();
        let mut a = AdamState::new(n);
        a.t = 17;
        a.m.iter_mut().enumerate().for_each(|(i, v)| *v = i as f32 * 0.5);
        a.v.iter_mut().enumerate().for_each(|(i, v)| *v = 1.0 / (1.0 + i as f32));
        c.adam = Some(a);
        let bytes = encode(&c);
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(decode(&bytes).unwrap(), c);
    }

    #[test]
    fn corruption_detected() {
        let bytes = encode(&tiny());
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut b = bytes.clone();
        b[0] = b'X';
        assert!(decode(&b).is_err());
        let mut b = bytes;
        b.push(0);
        assert!(decode(&b).is_err());
    }
}
