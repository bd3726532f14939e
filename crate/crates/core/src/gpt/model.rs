//! Decoder-only transformer: pre-norm blocks of causal self-attention and a
//! GELU feed-forward, learned positions, output head tied to the token
//! embedding.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use num_traits::Float;

use super::scalar::{gemm, Scalar};
use crate::error::GptError;
use crate::geocodec::{TokenId, VOCAB_SIZE};

pub const LN_EPS: f64 = 1e-5;
pub const INIT_STD: f64 = 0.02;
/// Rows of the vocabulary head processed together during training.
pub const HEAD_CHUNK: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub block_size: usize,
    pub n_layer: usize,
    pub n_head: usize,
    pub d_model: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    /// Desk-scale configuration that trains on a CPU.
    fn default() -> Self {
        ModelConfig {
            vocab_size: VOCAB_SIZE,
            block_size: 128,
            n_layer: 4,
            n_head: 4,
            d_model: 128,
            dropout: 0.0,
            seed: 1337,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), GptError> {
        let err = |m: &str| Err(GptError::Config(String::from(m)));
        if self.vocab_size < 2 || self.vocab_size > VOCAB_SIZE {
            return err("vocab_size must be in 2..=65536");
        }
        if self.block_size < 2 {
            return err("block_size must be at least 2");
        }
        if self.n_layer == 0 || self.n_head == 0 || self.d_model == 0 {
            return err("n_layer, n_head and d_model must be positive");
        }
        if !self.d_model.is_multiple_of(self.n_head) {
            return err("d_model must be divisible by n_head");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return err("dropout must be in [0, 1)");
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_head
    }

    /// Parameter count: embeddings, `12 d^2 + 13 d` per block, final norm.
    pub fn n_params(&self) -> usize {
        let d = self.d_model;
        self.vocab_size * d + self.block_size * d + self.n_layer * (12 * d * d + 13 * d) + 2 * d
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Weight matrices and embeddings; these take weight decay.
    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LayerIx {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub attn_w: usize,
    pub attn_b: usize,
    pub proj_w: usize,
    pub proj_b: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub fc_w: usize,
    pub fc_b: usize,
    pub out_w: usize,
    pub out_b: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    tensors: Vec<TensorInfo>,
    pub(crate) wte: usize,
    pub(crate) wpe: usize,
    pub(crate) layers: Vec<LayerIx>,
    pub(crate) lnf_g: usize,
    pub(crate) lnf_b: usize,
    total: usize,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Layout {
        let d = cfg.d_model;
        let mut tensors = Vec::new();
        let mut off = 0usize;
        let mut add = |name: String, shape: Vec<usize>| {
            let o = off;
            off += shape.iter().product::<usize>();
            tensors.push(TensorInfo { name, shape, offset: o });
            o
        };
        let wte = add("wte".into(), vec![cfg.vocab_size, d]);
        let wpe = add("wpe".into(), vec![cfg.block_size, d]);
        let mut layers = Vec::with_capacity(cfg.n_layer);
        for l in 0..cfg.n_layer {
            let p = |s: &str| alloc::format!("h.{l}.{s}");
            layers.push(LayerIx {
                ln1_g: add(p("ln_1.weight"), vec![d]),
                ln1_b: add(p("ln_1.bias"), vec![d]),
                attn_w: add(p("attn.c_attn.weight"), vec![d, 3 * d]),
                attn_b: add(p("attn.c_attn.bias"), vec![3 * d]),
                proj_w: add(p("attn.c_proj.weight"), vec![d, d]),
                proj_b: add(p("attn.c_proj.bias"), vec![d]),
                ln2_g: add(p("ln_2.weight"), vec![d]),
                ln2_b: add(p("ln_2.bias"), vec![d]),
                fc_w: add(p("mlp.c_fc.weight"), vec![d, 4 * d]),
                fc_b: add(p("mlp.c_fc.bias"), vec![4 * d]),
                out_w: add(p("mlp.c_proj.weight"), vec![4 * d, d]),
                out_b: add(p("mlp.c_proj.bias"), vec![d]),
            });
        }
        let lnf_g = add("ln_f.weight".into(), vec![d]);
        let lnf_b = add("ln_f.bias".into(), vec![d]);
        Layout { tensors, wte, wpe, layers, lnf_g, lnf_b, total: off }
    }

    pub fn tensors(&self) -> &[TensorInfo] {
        &self.tensors
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn find(&self, name: &str) -> Option<&TensorInfo> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

/// Transformer weights in one flat buffer, addressed through a [`Layout`].
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    layout: Layout,
    params: Vec<T>,
}

/// Logits for a batch of equal-length rows, `[batch, len, vocab]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits<T> {
    pub data: Vec<T>,
    pub batch: usize,
    pub len: usize,
    pub vocab: usize,
}

impl<T: Scalar> Logits<T> {
    pub fn at(&self, b: usize, i: usize) -> &[T] {
        let o = (b * self.len + i) * self.vocab;
        &self.data[o..o + self.vocab]
    }
}

pub(crate) struct LayerCache<T> {
    xhat1: Vec<T>,
    rstd1: Vec<T>,
    a: Vec<T>,
    pub qkv: Vec<T>,
    probs: Vec<T>,
    y: Vec<T>,
    mask_attn: Option<Vec<T>>,
    xhat2: Vec<T>,
    rstd2: Vec<T>,
    m: Vec<T>,
    hpre: Vec<T>,
    g: Vec<T>,
    mask_mlp: Option<Vec<T>>,
}

/// Activations of one sequence kept for the backward pass.
pub(crate) struct SeqCache<T> {
    tokens: Vec<TokenId>,
    mask_emb: Option<Vec<T>>,
    pub layers: Vec<LayerCache<T>>,
    xhatf: Vec<T>,
    rstdf: Vec<T>,
    pub xf: Vec<T>,
}

pub(crate) fn layer_norm<T: Scalar>(x: &[T], g: &[T], b: &[T], d: usize, out: &mut [T], xhat: &mut [T], rstd: &mut [T]) {
    let eps = T::of(LN_EPS);
    let inv_d = T::of(1.0 / d as f64);
    for (r, row) in x.chunks_exact(d).enumerate() {
        let mean = row.iter().copied().sum::<T>() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
        let rs = T::one() / (var + eps).sqrt();
        rstd[r] = rs;
        let o = r * d;
        for j in 0..d {
            let h = (row[j] - mean) * rs;
            xhat[o + j] = h;
            out[o + j] = h * g[j] + b[j];
        }
    }
}

/// Accumulates gamma/beta gradients and adds the input gradient into `dx`.
fn layer_norm_backward<T: Scalar>(
    dy: &[T],
    xhat: &[T],
    rstd: &[T],
    g: &[T],
    d: usize,
    dg: &mut [T],
    db: &mut [T],
    dx: &mut [T],
) {
    let inv_d = T::of(1.0 / d as f64);
    for r in 0..rstd.len() {
        let o = r * d;
        let mut mean_dxhat = T::zero();
        let mut mean_dxhat_xhat = T::zero();
        for j in 0..d {
            let dxh = dy[o + j] * g[j];
            mean_dxhat = mean_dxhat + dxh;
            mean_dxhat_xhat = mean_dxhat_xhat + dxh * xhat[o + j];
            dg[j] = dg[j] + dy[o + j] * xhat[o + j];
            db[j] = db[j] + dy[o + j];
        }
        mean_dxhat = mean_dxhat * inv_d;
        mean_dxhat_xhat = mean_dxhat_xhat * inv_d;
        for j in 0..d {
            let dxh = dy[o + j] * g[j];
            dx[o + j] = dx[o + j] + rstd[r] * (dxh - mean_dxhat - xhat[o + j] * mean_dxhat_xhat);
        }
    }
}

pub(crate) fn gelu<T: Scalar>(x: T) -> T {
    let c = T::of(0.797_884_560_802_865_4);
    let k = T::of(0.044_715);
    let half = T::of(0.5);
    half * x * (T::one() + (c * (x + k * x * x * x)).tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::of(0.797_884_560_802_865_4);
    let k = T::of(0.044_715);
    let half = T::of(0.5);
    let th = (c * (x + k * x * x * x)).tanh();
    half * (T::one() + th) + half * x * (T::one() - th * th) * c * (T::one() + T::of(3.0) * k * x * x)
}

pub(crate) fn add_bias<T: Scalar>(out: &mut [T], b: &[T]) {
    let n = b.len();
    for row in out.chunks_exact_mut(n) {
        for (o, &bb) in row.iter_mut().zip(b) {
            *o = *o + bb;
        }
    }
}

fn bias_grad<T: Scalar>(dout: &[T], db: &mut [T]) {
    let n = db.len();
    for row in dout.chunks_exact(n) {
        for (g, &v) in db.iter_mut().zip(row) {
            *g = *g + v;
        }
    }
}

fn dropout_mask<T: Scalar, R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Vec<T> {
    let keep = T::of(1.0 / (1.0 - p));
    (0..n).map(|_| if rng.random::<f64>() < p { T::zero() } else { keep }).collect()
}

fn apply_mask<T: Scalar>(x: &mut [T], mask: &Option<Vec<T>>) {
    if let Some(m) = mask {
        for (v, &k) in x.iter_mut().zip(m) {
            *v = *v * k;
        }
    }
}

/// Numerically stable in-place softmax; returns `ln(sum exp(x - max)) + max`.
pub(crate) fn softmax_in_place<T: Scalar>(x: &mut [T]) -> f64 {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = 0.0f64;
    for v in x.iter_mut() {
        let e = (*v - max).exp();
        *v = e;
        sum += e.as_f64();
    }
    let inv = T::of(1.0 / sum);
    for v in x.iter_mut() {
        *v = *v * inv;
    }
    Float::ln(sum) + max.as_f64()
}

impl<T: Scalar> Model<T> {
    /// Seeded initialization: N(0, 0.02) weights, residual projections scaled
    /// by `1/sqrt(2 n_layer)`, unit norm gains, zero biases.
    pub fn init(config: ModelConfig) -> Result<Self, GptError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![T::zero(); layout.total()];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let proj_std = INIT_STD / Float::sqrt(2.0 * config.n_layer as f64);
        for t in layout.tensors() {
            let slot = &mut params[t.offset..t.offset + t.len()];
            if t.name.ends_with("ln_1.weight") || t.name.ends_with("ln_2.weight") || t.name == "ln_f.weight" {
                slot.fill(T::one());
            } else if t.is_matrix() {
                let std = if t.name.ends_with("c_proj.weight") { proj_std } else { INIT_STD };
                for v in slot.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = T::of(z * std);
                }
            }
        }
        Ok(Model { config, layout, params })
    }

    pub fn from_params(config: ModelConfig, params: Vec<T>) -> Result<Self, GptError> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total() {
            return Err(GptError::Config(alloc::format!(
                "expected {} parameters, got {}",
                layout.total(),
                params.len()
            )));
        }
        Ok(Model { config, layout, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        self.layout.find(name).map(|t| &self.params[t.offset..t.offset + t.len()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [T]> {
        let t = self.layout.find(name)?.clone();
        Some(&mut self.params[t.offset..t.offset + t.len()])
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config,
            layout: self.layout.clone(),
            params: self.params.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub(crate) fn p(&self, off: usize, len: usize) -> &[T] {
        &self.params[off..off + len]
    }

    pub(crate) fn check_tokens(&self, tokens: &[TokenId]) -> Result<(), GptError> {
        if tokens.is_empty() {
            return Err(GptError::Input("empty sequence".into()));
        }
        if tokens.len() > self.config.block_size {
            return Err(GptError::Input(alloc::format!(
                "sequence of {} tokens exceeds block size {}",
                tokens.len(),
                self.config.block_size
            )));
        }
        if let Some(t) = tokens.iter().find(|t| t.index() >= self.config.vocab_size) {
            return Err(GptError::Input(alloc::format!("token {} outside vocabulary", t.0)));
        }
        Ok(())
    }

    /// Runs one sequence through the transformer body, keeping activations.
    pub(crate) fn forward_seq<R: Rng + ?Sized>(&self, tokens: &[TokenId], mut rng: Option<&mut R>) -> SeqCache<T> {
        let cfg = &self.config;
        let (t_len, d, nh, hd) = (tokens.len(), cfg.d_model, cfg.n_head, cfg.head_dim());
        let lay = &self.layout;
        let p_drop = cfg.dropout;
        let mut mask = |n: usize| -> Option<Vec<T>> {
            match rng.as_deref_mut() {
                Some(r) if p_drop > 0.0 => Some(dropout_mask(n, p_drop, r)),
                _ => None,
            }
        };
        let wte = self.p(lay.wte, cfg.vocab_size * d);
        let wpe = self.p(lay.wpe, cfg.block_size * d);
        let mut x = vec![T::zero(); t_len * d];
        for (i, tok) in tokens.iter().enumerate() {
            let e = &wte[tok.index() * d..(tok.index() + 1) * d];
            let pp = &wpe[i * d..(i + 1) * d];
            for j in 0..d {
                x[i * d + j] = e[j] + pp[j];
            }
        }
        let mask_emb = mask(t_len * d);
        apply_mask(&mut x, &mask_emb);

        let scale = T::of(1.0 / Float::sqrt(hd as f64));
        let mut layers = Vec::with_capacity(cfg.n_layer);
        for li in &lay.layers {
            let mut xhat1 = vec![T::zero(); t_len * d];
            let mut rstd1 = vec![T::zero(); t_len];
            let mut a = vec![T::zero(); t_len * d];
            layer_norm(&x, self.p(li.ln1_g, d), self.p(li.ln1_b, d), d, &mut a, &mut xhat1, &mut rstd1);
            let mut qkv = vec![T::zero(); t_len * 3 * d];
            gemm(t_len, d, 3 * d, &a, false, self.p(li.attn_w, 3 * d * d), false, &mut qkv, false);
            add_bias(&mut qkv, self.p(li.attn_b, 3 * d));
            let mut probs = vec![T::zero(); nh * t_len * t_len];
            let mut y = vec![T::zero(); t_len * d];
            for h in 0..nh {
                for i in 0..t_len {
                    let q = &qkv[i * 3 * d + h * hd..i * 3 * d + (h + 1) * hd];
                    let row = &mut probs[(h * t_len + i) * t_len..(h * t_len + i) * t_len + i + 1];
                    for (j, s) in row.iter_mut().enumerate() {
                        let k = &qkv[j * 3 * d + d + h * hd..j * 3 * d + d + (h + 1) * hd];
                        *s = q.iter().zip(k).map(|(&a, &b)| a * b).sum::<T>() * scale;
                    }
                    softmax_in_place(row);
                    let yo = &mut y[i * d + h * hd..i * d + (h + 1) * hd];
                    for (j, &pj) in row.iter().enumerate() {
                        let v = &qkv[j * 3 * d + 2 * d + h * hd..j * 3 * d + 2 * d + (h + 1) * hd];
                        for (o, &vv) in yo.iter_mut().zip(v) {
                            *o = *o + pj * vv;
                        }
                    }
                }
            }
            let mut o = vec![T::zero(); t_len * d];
            gemm(t_len, d, d, &y, false, self.p(li.proj_w, d * d), false, &mut o, false);
            add_bias(&mut o, self.p(li.proj_b, d));
            let mask_attn = mask(t_len * d);
            apply_mask(&mut o, &mask_attn);
            for (xv, ov) in x.iter_mut().zip(&o) {
                *xv = *xv + *ov;
            }
            let mut xhat2 = vec![T::zero(); t_len * d];
            let mut rstd2 = vec![T::zero(); t_len];
            let mut m = vec![T::zero(); t_len * d];
            layer_norm(&x, self.p(li.ln2_g, d), self.p(li.ln2_b, d), d, &mut m, &mut xhat2, &mut rstd2);
            let mut hpre = vec![T::zero(); t_len * 4 * d];
            gemm(t_len, d, 4 * d, &m, false, self.p(li.fc_w, 4 * d * d), false, &mut hpre, false);
            add_bias(&mut hpre, self.p(li.fc_b, 4 * d));
            let g: Vec<T> = hpre.iter().map(|&v| gelu(v)).collect();
            let mut f = vec![T::zero(); t_len * d];
            gemm(t_len, 4 * d, d, &g, false, self.p(li.out_w, 4 * d * d), false, &mut f, false);
            add_bias(&mut f, self.p(li.out_b, d));
            let mask_mlp = mask(t_len * d);
            apply_mask(&mut f, &mask_mlp);
            for (xv, fv) in x.iter_mut().zip(&f) {
                *xv = *xv + *fv;
            }
            layers.push(LayerCache { xhat1, rstd1, a, qkv, probs, y, mask_attn, xhat2, rstd2, m, hpre, g, mask_mlp });
        }
        let mut xhatf = vec![T::zero(); t_len * d];
        let mut rstdf = vec![T::zero(); t_len];
        let mut xf = vec![T::zero(); t_len * d];
        layer_norm(&x, self.p(lay.lnf_g, d), self.p(lay.lnf_b, d), d, &mut xf, &mut xhatf, &mut rstdf);
        SeqCache { tokens: tokens.to_vec(), mask_emb, layers, xhatf, rstdf, xf }
    }

    /// Backpropagates `dxf` (gradient at the final norm output) through the
    /// body, accumulating into `grads`.
    pub(crate) fn backward_seq(&self, cache: &SeqCache<T>, dxf: &[T], grads: &mut [T]) {
        let cfg = &self.config;
        let lay = &self.layout;
        let (t_len, d, nh, hd) = (cache.tokens.len(), cfg.d_model, cfg.n_head, cfg.head_dim());
        let scale = T::of(1.0 / Float::sqrt(hd as f64));
        let mut dx = vec![T::zero(); t_len * d];
        {
            let (dg, db) = split_two(grads, lay.lnf_g, lay.lnf_b, d);
            layer_norm_backward(dxf, &cache.xhatf, &cache.rstdf, self.p(lay.lnf_g, d), d, dg, db, &mut dx);
        }
        for (li, lc) in lay.layers.iter().zip(&cache.layers).rev() {
            // Feed-forward branch.
            let mut df = dx.clone();
            apply_mask(&mut df, &lc.mask_mlp);
            gemm(4 * d, t_len, d, &lc.g, true, &df, false, &mut grads[li.out_w..li.out_w + 4 * d * d], true);
            bias_grad(&df, &mut grads[li.out_b..li.out_b + d]);
            let mut dh = vec![T::zero(); t_len * 4 * d];
            gemm(t_len, d, 4 * d, &df, false, self.p(li.out_w, 4 * d * d), true, &mut dh, false);
            for (g, &h) in dh.iter_mut().zip(&lc.hpre) {
                *g = *g * gelu_grad(h);
            }
            gemm(d, t_len, 4 * d, &lc.m, true, &dh, false, &mut grads[li.fc_w..li.fc_w + 4 * d * d], true);
            bias_grad(&dh, &mut grads[li.fc_b..li.fc_b + 4 * d]);
            let mut dm = vec![T::zero(); t_len * d];
            gemm(t_len, 4 * d, d, &dh, false, self.p(li.fc_w, 4 * d * d), true, &mut dm, false);
            {
                let (dg, db) = split_two(grads, li.ln2_g, li.ln2_b, d);
                layer_norm_backward(&dm, &lc.xhat2, &lc.rstd2, self.p(li.ln2_g, d), d, dg, db, &mut dx);
            }
            // Attention branch.
            let mut dout = dx.clone();
            apply_mask(&mut dout, &lc.mask_attn);
            gemm(d, t_len, d, &lc.y, true, &dout, false, &mut grads[li.proj_w..li.proj_w + d * d], true);
            bias_grad(&dout, &mut grads[li.proj_b..li.proj_b + d]);
            let mut dy = vec![T::zero(); t_len * d];
            gemm(t_len, d, d, &dout, false, self.p(li.proj_w, d * d), true, &mut dy, false);
            let mut dqkv = vec![T::zero(); t_len * 3 * d];
            let mut dp = vec![T::zero(); t_len];
            for h in 0..nh {
                for i in 0..t_len {
                    let prow = &lc.probs[(h * t_len + i) * t_len..(h * t_len + i) * t_len + i + 1];
                    let dyi = &dy[i * d + h * hd..i * d + (h + 1) * hd];
                    let mut dot = T::zero();
                    for j in 0..=i {
                        let v = &lc.qkv[j * 3 * d + 2 * d + h * hd..j * 3 * d + 2 * d + (h + 1) * hd];
                        let g = dyi.iter().zip(v).map(|(&a, &b)| a * b).sum::<T>();
                        dp[j] = g;
                        dot = dot + g * prow[j];
                        let dv = &mut dqkv[j * 3 * d + 2 * d + h * hd..j * 3 * d + 2 * d + (h + 1) * hd];
                        for (o, &gy) in dv.iter_mut().zip(dyi) {
                            *o = *o + prow[j] * gy;
                        }
                    }
                    for j in 0..=i {
                        let ds = prow[j] * (dp[j] - dot) * scale;
                        if ds == T::zero() {
                            continue;
                        }
                        for c in 0..hd {
                            let qi = lc.qkv[i * 3 * d + h * hd + c];
                            let kj = lc.qkv[j * 3 * d + d + h * hd + c];
                            dqkv[i * 3 * d + h * hd + c] = dqkv[i * 3 * d + h * hd + c] + ds * kj;
                            dqkv[j * 3 * d + d + h * hd + c] = dqkv[j * 3 * d + d + h * hd + c] + ds * qi;
                        }
                    }
                }
            }
            gemm(d, t_len, 3 * d, &lc.a, true, &dqkv, false, &mut grads[li.attn_w..li.attn_w + 3 * d * d], true);
            bias_grad(&dqkv, &mut grads[li.attn_b..li.attn_b + 3 * d]);
            let mut da = vec![T::zero(); t_len * d];
            gemm(t_len, 3 * d, d, &dqkv, false, self.p(li.attn_w, 3 * d * d), true, &mut da, false);
            {
                let (dg, db) = split_two(grads, li.ln1_g, li.ln1_b, d);
                layer_norm_backward(&da, &lc.xhat1, &lc.rstd1, self.p(li.ln1_g, d), d, dg, db, &mut dx);
            }
        }
        apply_mask(&mut dx, &cache.mask_emb);
        for (i, tok) in cache.tokens.iter().enumerate() {
            let e = lay.wte + tok.index() * d;
            let p = lay.wpe + i * d;
            for j in 0..d {
                grads[e + j] = grads[e + j] + dx[i * d + j];
                grads[p + j] = grads[p + j] + dx[i * d + j];
            }
        }
    }

    /// Logits at every position of equal-length rows.
    pub fn forward(&self, rows: &[&[TokenId]]) -> Result<Logits<T>, GptError> {
        let len = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != len) {
            return Err(GptError::Input("rows must share one length".into()));
        }
        let v = self.config.vocab_size;
        let d = self.config.d_model;
        let mut data = vec![T::zero(); rows.len() * len * v];
        for (b, row) in rows.iter().enumerate() {
            self.check_tokens(row)?;
            let cache = self.forward_seq::<ChaCha8Rng>(row, None);
            let wte = self.p(self.layout.wte, v * d);
            gemm(len, d, v, &cache.xf, false, wte, true, &mut data[b * len * v..(b + 1) * len * v], false);
        }
        Ok(Logits { data, batch: rows.len(), len, vocab: v })
    }

    /// Mean cross-entropy and its gradient for a batch of rows.
    ///
    /// `targets[b][i]` is the token following `rows[b][i]`, or `None` to skip
    /// that position. Gradients are accumulated into `grads` (same layout as
    /// the parameters). The vocabulary head runs in chunks so the full logit
    /// tensor is never materialized.
    pub fn loss_and_grad<R: Rng + ?Sized>(
        &self,
        rows: &[&[TokenId]],
        targets: &[&[Option<TokenId>]],
        grads: &mut [T],
        mut rng: Option<&mut R>,
    ) -> Result<f64, GptError> {
        assert_eq!(grads.len(), self.params.len());
        let v = self.config.vocab_size;
        let d = self.config.d_model;
        let mut caches = Vec::with_capacity(rows.len());
        for (row, tg) in rows.iter().zip(targets) {
            self.check_tokens(row)?;
            if tg.len() != row.len() {
                return Err(GptError::Input("targets must match inputs".into()));
            }
            caches.push(self.forward_seq(row, rng.as_deref_mut()));
        }
        let positions: Vec<(usize, usize, TokenId)> = targets
            .iter()
            .enumerate()
            .flat_map(|(b, tg)| tg.iter().enumerate().filter_map(move |(i, t)| t.map(|t| (b, i, t))))
            .collect();
        if positions.is_empty() {
            return Err(GptError::Data("no target positions".into()));
        }
        if let Some((_, _, t)) = positions.iter().find(|(_, _, t)| t.index() >= v) {
            return Err(GptError::Input(alloc::format!("target {} outside vocabulary", t.0)));
        }
        let inv_n = 1.0 / positions.len() as f64;
        let mut dxf: Vec<Vec<T>> = caches.iter().map(|c| vec![T::zero(); c.xf.len()]).collect();
        let mut total = 0.0f64;
        let mut xc = vec![T::zero(); HEAD_CHUNK * d];
        let mut logits = vec![T::zero(); HEAD_CHUNK * v];
        let mut dxc = vec![T::zero(); HEAD_CHUNK * d];
        let wte_off = self.layout.wte;
        for chunk in positions.chunks(HEAD_CHUNK) {
            let c = chunk.len();
            for (r, &(b, i, _)) in chunk.iter().enumerate() {
                xc[r * d..(r + 1) * d].copy_from_slice(&caches[b].xf[i * d..(i + 1) * d]);
            }
            let wte = &self.params[wte_off..wte_off + v * d];
            gemm(c, d, v, &xc, false, wte, true, &mut logits, false);
            for (r, &(_, _, t)) in chunk.iter().enumerate() {
                let row = &mut logits[r * v..(r + 1) * v];
                let target_logit = row[t.index()].as_f64();
                let lse = softmax_in_place(row);
                total += lse - target_logit;
                row[t.index()] = row[t.index()] - T::one();
                let s = T::of(inv_n);
                for g in row.iter_mut() {
                    *g = *g * s;
                }
            }
            gemm(c, v, d, &logits, false, wte, false, &mut dxc, false);
            gemm(v, c, d, &logits, true, &xc, false, &mut grads[wte_off..wte_off + v * d], true);
            for (r, &(b, i, _)) in chunk.iter().enumerate() {
                let dst = &mut dxf[b][i * d..(i + 1) * d];
                for (o, &g) in dst.iter_mut().zip(&dxc[r * d..(r + 1) * d]) {
                    *o = *o + g;
                }
            }
        }
        for (cache, g) in caches.iter().zip(&dxf) {
            self.backward_seq(cache, g, grads);
        }
        Ok(total * inv_n)
    }
}

fn split_two<T>(grads: &mut [T], a: usize, b: usize, d: usize) -> (&mut [T], &mut [T]) {
    debug_assert_eq!(b, a + d);
    let (lo, hi) = grads[a..b + d].split_at_mut(d);
    (lo, hi)
}

/// Mean cross-entropy of logits against targets; `None` targets are skipped.
pub fn loss<T: Scalar>(logits: &Logits<T>, targets: &[Vec<Option<TokenId>>]) -> Result<f64, GptError> {
    if targets.len() != logits.batch || targets.iter().any(|t| t.len() != logits.len) {
        return Err(GptError::Input("target shape does not match logits".into()));
    }
    let mut total = 0.0;
    let mut n = 0usize;
    let mut buf = vec![T::zero(); logits.vocab];
    for (b, row) in targets.iter().enumerate() {
        for (i, t) in row.iter().enumerate() {
            let Some(t) = t else { continue };
            buf.copy_from_slice(logits.at(b, i));
            let target = buf[t.index()].as_f64();
            total += softmax_in_place(&mut buf) - target;
            n += 1;
        }
    }
    if n == 0 {
        return Err(GptError::Data("no target positions".into()));
    }
    Ok(total / n as f64)
}
