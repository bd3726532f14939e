//! Autoregressive sampling with a key/value cache.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::model::{add_bias, gelu, layer_norm, softmax_in_place, Model};
use super::scalar::{gemm, Scalar};
use super::SamplerConfig;
use crate::error::GptError;
use crate::geocodec::TokenId;

/// `softmax(logits / temperature)` in double precision.
pub fn temperature_probs<T: Scalar>(logits: &[T], temperature: f64) -> Vec<f64> {
    let inv_t = 1.0 / temperature;
    let max = logits.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits.iter().map(|v| num_traits::Float::exp((v.as_f64() - max) * inv_t)).collect();
    let inv_sum = 1.0 / probs.iter().sum::<f64>();
    for p in probs.iter_mut() {
        *p *= inv_sum;
    }
    probs
}

/// Draws one token from `softmax(logits / temperature)` by inverting the
/// cumulative distribution at a single uniform draw.
pub fn sample_token<T: Scalar, R: Rng + ?Sized>(logits: &[T], temperature: f64, rng: &mut R) -> TokenId {
    let probs = temperature_probs(logits, temperature);
    let u = rng.random::<f64>();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last = i;
        }
        acc += p;
        if u < acc {
            return TokenId(i as u16);
        }
    }
    TokenId(last as u16)
}

/// Keys and values of every layer for `rows` sequences, `[row][pos][d]`.
struct KvCache<T> {
    k: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    rows: usize,
    cap: usize,
    d: usize,
}

impl<T: Scalar> KvCache<T> {
    fn new(layers: usize, rows: usize, cap: usize, d: usize) -> Self {
        KvCache {
            k: (0..layers).map(|_| vec![T::zero(); rows * cap * d]).collect(),
            v: (0..layers).map(|_| vec![T::zero(); rows * cap * d]).collect(),
            rows,
            cap,
            d,
        }
    }

    fn slot(&self, row: usize, pos: usize) -> usize {
        (row * self.cap + pos) * self.d
    }
}

impl<T: Scalar> Model<T> {
    /// Logits for the last position of `context` (at most `block_size`
    /// tokens long).
    pub fn next_logits(&self, context: &[TokenId]) -> Result<Vec<T>, GptError> {
        self.check_tokens(context)?;
        let cache = self.forward_seq::<rand_chacha::ChaCha8Rng>(context, None);
        Ok(self.head_last(&cache.xf))
    }

    fn head_last(&self, xf: &[T]) -> Vec<T> {
        let d = self.config().d_model;
        let v = self.config().vocab_size;
        let last = &xf[xf.len() - d..];
        let mut out = vec![T::zero(); v];
        gemm(1, d, v, last, false, self.p(self.layout().wte, v * d), true, &mut out, false);
        out
    }

    /// Runs the prompt once and copies its keys and values into every row.
    fn prefill(&self, prompt: &[TokenId], kv: &mut KvCache<T>) -> Vec<T> {
        let d = self.config().d_model;
        let cache = self.forward_seq::<rand_chacha::ChaCha8Rng>(prompt, None);
        for (l, lc) in cache.layers.iter().enumerate() {
            for row in 0..kv.rows {
                for pos in 0..prompt.len() {
                    let s = kv.slot(row, pos);
                    let q = &lc.qkv[pos * 3 * d..(pos + 1) * 3 * d];
                    kv.k[l][s..s + d].copy_from_slice(&q[d..2 * d]);
                    kv.v[l][s..s + d].copy_from_slice(&q[2 * d..]);
                }
            }
        }
        self.head_last(&cache.xf)
    }

    /// Feeds one token per row at position `pos`, returning `[rows, vocab]`
    /// logits. Rows attend to cached positions `0..=pos`.
    fn step(&self, tokens: &[TokenId], pos: usize, kv: &mut KvCache<T>) -> Vec<T> {
        let cfg = *self.config();
        let lay = self.layout();
        let (n, d, nh, hd, v) = (tokens.len(), cfg.d_model, cfg.n_head, cfg.head_dim(), cfg.vocab_size);
        let wte = self.p(lay.wte, v * d);
        let wpe = self.p(lay.wpe, cfg.block_size * d);
        let mut x = vec![T::zero(); n * d];
        for (r, tok) in tokens.iter().enumerate() {
            for j in 0..d {
                x[r * d + j] = wte[tok.index() * d + j] + wpe[pos * d + j];
            }
        }
        let scale = T::of(1.0 / num_traits::Float::sqrt(hd as f64));
        let mut xhat = vec![T::zero(); n * d];
        let mut rstd = vec![T::zero(); n];
        let mut a = vec![T::zero(); n * d];
        let mut qkv = vec![T::zero(); n * 3 * d];
        let mut y = vec![T::zero(); n * d];
        let mut o = vec![T::zero(); n * d];
        let mut h = vec![T::zero(); n * 4 * d];
        let mut scores = vec![T::zero(); pos + 1];
        for (l, li) in lay.layers.iter().enumerate() {
            layer_norm(&x, self.p(li.ln1_g, d), self.p(li.ln1_b, d), d, &mut a, &mut xhat, &mut rstd);
            gemm(n, d, 3 * d, &a, false, self.p(li.attn_w, 3 * d * d), false, &mut qkv, false);
            add_bias(&mut qkv, self.p(li.attn_b, 3 * d));
            for r in 0..n {
                let s = kv.slot(r, pos);
                kv.k[l][s..s + d].copy_from_slice(&qkv[r * 3 * d + d..r * 3 * d + 2 * d]);
                kv.v[l][s..s + d].copy_from_slice(&qkv[r * 3 * d + 2 * d..(r + 1) * 3 * d]);
            }
            y.fill(T::zero());
            for r in 0..n {
                for hh in 0..nh {
                    let q = &qkv[r * 3 * d + hh * hd..r * 3 * d + (hh + 1) * hd];
                    for (j, sc) in scores.iter_mut().enumerate() {
                        let ks = kv.slot(r, j) + hh * hd;
                        let k = &kv.k[l][ks..ks + hd];
                        *sc = q.iter().zip(k).map(|(&a, &b)| a * b).sum::<T>() * scale;
                    }
                    softmax_in_place(&mut scores);
                    let yo = &mut y[r * d + hh * hd..r * d + (hh + 1) * hd];
                    for (j, &pj) in scores.iter().enumerate() {
                        let vs = kv.slot(r, j) + hh * hd;
                        for (out, &vv) in yo.iter_mut().zip(&kv.v[l][vs..vs + hd]) {
                            *out = *out + pj * vv;
                        }
                    }
                }
            }
            gemm(n, d, d, &y, false, self.p(li.proj_w, d * d), false, &mut o, false);
            add_bias(&mut o, self.p(li.proj_b, d));
            for (xv, ov) in x.iter_mut().zip(&o) {
                *xv = *xv + *ov;
            }
            layer_norm(&x, self.p(li.ln2_g, d), self.p(li.ln2_b, d), d, &mut a, &mut xhat, &mut rstd);
            gemm(n, d, 4 * d, &a, false, self.p(li.fc_w, 4 * d * d), false, &mut h, false);
            add_bias(&mut h, self.p(li.fc_b, 4 * d));
            for hv in h.iter_mut() {
                *hv = gelu(*hv);
            }
            gemm(n, 4 * d, d, &h, false, self.p(li.out_w, 4 * d * d), false, &mut o, false);
            add_bias(&mut o, self.p(li.out_b, d));
            for (xv, ov) in x.iter_mut().zip(&o) {
                *xv = *xv + *ov;
            }
        }
        let mut xf = vec![T::zero(); n * d];
        layer_norm(&x, self.p(lay.lnf_g, d), self.p(lay.lnf_b, d), d, &mut xf, &mut xhat, &mut rstd);
        let mut logits = vec![T::zero(); n * v];
        gemm(n, d, v, &xf, false, wte, true, &mut logits, false);
        logits
    }
}

fn check_sampler(s: &SamplerConfig) -> Result<(), GptError> {
    if !(s.temperature.is_finite() && s.temperature > 0.0) {
        return Err(GptError::Config("temperature must be positive".into()));
    }
    Ok(())
}

/// Extends `prompt` by `max_steps` sampled tokens, one independent sample per
/// generator in `rngs`. Returns only the generated tokens.
///
/// The prompt is encoded once and shared; samples then advance together.
/// Once a sequence outgrows the context window the model sees the most
/// recent `block_size` tokens.
pub fn generate_many<T: Scalar, R: Rng>(
    model: &Model<T>,
    prompt: &[TokenId],
    sampler: &SamplerConfig,
    rngs: &mut [R],
) -> Result<Vec<Vec<TokenId>>, GptError> {
    check_sampler(sampler)?;
    let block = model.config().block_size;
    if prompt.len() > block {
        return Err(GptError::Input("prompt longer than block size".into()));
    }
    model.check_tokens(prompt)?;
    let k = rngs.len();
    let mut out: Vec<Vec<TokenId>> = (0..k).map(|_| Vec::with_capacity(sampler.max_steps)).collect();
    if k == 0 || sampler.max_steps == 0 {
        return Ok(out);
    }
    let v = model.config().vocab_size;
    let mut kv = KvCache::new(model.config().n_layer, k, block, model.config().d_model);
    let first = model.prefill(prompt, &mut kv);
    for (o, rng) in out.iter_mut().zip(rngs.iter_mut()) {
        o.push(sample_token(&first, sampler.temperature, rng));
    }
    let mut seqs: Vec<Vec<TokenId>> = out.iter().map(|o| [prompt, o].concat()).collect();
    for _ in 1..sampler.max_steps {
        let len = seqs[0].len();
        if len <= block {
            let last: Vec<TokenId> = seqs.iter().map(|s| s[len - 1]).collect();
            let logits = model.step(&last, len - 1, &mut kv);
            for (r, rng) in rngs.iter_mut().enumerate() {
                let t = sample_token(&logits[r * v..(r + 1) * v], sampler.temperature, rng);
                seqs[r].push(t);
                out[r].push(t);
            }
        } else {
            for (r, rng) in rngs.iter_mut().enumerate() {
                let logits = model.next_logits(&seqs[r][len - block..])?;
                let t = sample_token(&logits, sampler.temperature, rng);
                seqs[r].push(t);
                out[r].push(t);
            }
        }
    }
    Ok(out)
}

/// Single-sample convenience wrapper around [`generate_many`].
pub fn generate<T: Scalar, R: Rng>(
    model: &Model<T>,
    prompt: &[TokenId],
    sampler: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<TokenId>, GptError> {
    check_sampler(sampler)?;
    let block = model.config().block_size;
    let mut seq = prompt[prompt.len().saturating_sub(block)..].to_vec();
    let start = seq.len();
    for _ in 0..sampler.max_steps {
        let ctx = &seq[seq.len().saturating_sub(block)..];
        let logits = model.next_logits(ctx)?;
        seq.push(sample_token(&logits, sampler.temperature, rng));
    }
    Ok(seq.split_off(start))
}
