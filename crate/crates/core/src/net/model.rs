//! 1D U-Net with hand-derived backpropagation.
//!
//! Topology for `n` encoder levels with widths `C_0..C_{n-1}`:
//!
//! ```text
//! encoder l:  conv(k, same) -> relu -> [skip_l] -> maxpool x2
//! decoder l:  nearest upsample x2 -> concat skip_l -> conv(k, same) -> relu
//! head:       1x1 conv to one channel (signal) | fully connected to a scalar (feature)
//! ```
//!
//! Decoder level `l` reads `2 * C_l` channels and writes `C_{l-1}` (`C_0` at
//! the top). All parameters live in one flat buffer, laid out layer by layer
//! (encoder 0..n, decoder n-1..0, head), each layer as weights then biases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adadelta::AdadeltaState;
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Temporal 1x1 convolution; one output per time step.
    Signal,
    /// Fully connected reduction to a single scalar.
    Feature,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_channels: usize,
    /// Padded network length; divisible by `2^levels`.
    pub window_len: usize,
    /// Unpadded window length; inputs are zero-padded symmetrically to
    /// `window_len` and signal outputs cropped back.
    pub signal_len: usize,
    pub encoder_channels: Vec<usize>,
    pub kernel_size: usize,
    pub head: Head,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_channels: 4,
            window_len: 64,
            signal_len: 50,
            encoder_channels: vec![32, 64, 128],
            kernel_size: 3,
            head: Head::Signal,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn with_head(mut self, head: Head) -> Self {
        self.head = head;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn levels(&self) -> usize {
        self.encoder_channels.len()
    }

    /// Left zero-padding applied to unpadded inputs.
    pub fn pad_left(&self) -> usize {
        (self.window_len - self.signal_len) / 2
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.input_channels == 0 {
            return fail("input_channels must be positive".into());
        }
        if self.encoder_channels.is_empty() || self.encoder_channels.contains(&0) {
            return fail(format!("encoder channels {:?} must be nonempty and positive", self.encoder_channels));
        }
        if self.kernel_size == 0 || self.kernel_size.is_multiple_of(2) {
            return fail(format!("kernel size {} must be odd", self.kernel_size));
        }
        let factor = 1usize << self.levels();
        if self.window_len == 0 || !self.window_len.is_multiple_of(factor) {
            return fail(format!(
                "window_len {} is not divisible by 2^{} = {factor}",
                self.window_len,
                self.levels()
            ));
        }
        if self.signal_len == 0 || self.signal_len > self.window_len {
            return fail(format!("signal_len {} must lie in 1..={}", self.signal_len, self.window_len));
        }
        Ok(())
    }

    /// FNV-1a hash of the architecture-defining fields (the seed excluded).
    pub fn arch_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |v: u64| {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        feed(self.input_channels as u64);
        feed(self.window_len as u64);
        feed(self.signal_len as u64);
        feed(self.kernel_size as u64);
        feed(matches!(self.head, Head::Feature) as u64);
        feed(self.encoder_channels.len() as u64);
        for &c in &self.encoder_channels {
            feed(c as u64);
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ConvSpec {
    in_c: usize,
    out_c: usize,
    k: usize,
    w: usize,
    b: usize,
}

impl ConvSpec {
    fn n_weights(&self) -> usize {
        self.in_c * self.out_c * self.k
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    enc: Vec<ConvSpec>,
    /// Indexed by level.
    dec: Vec<ConvSpec>,
    head_w: usize,
    head_b: usize,
    head_in: usize,
    total: usize,
}

impl Layout {
    fn new(cfg: &ModelConfig) -> Layout {
        let ch = &cfg.encoder_channels;
        let n = ch.len();
        let k = cfg.kernel_size;
        let mut offset = 0;
        let mut conv = |in_c: usize, out_c: usize, kk: usize| {
            let spec = ConvSpec {
                in_c,
                out_c,
                k: kk,
                w: offset,
                b: offset + in_c * out_c * kk,
            };
            offset = spec.b + out_c;
            spec
        };
        let mut enc = Vec::with_capacity(n);
        let mut in_c = cfg.input_channels;
        for &c in ch {
            enc.push(conv(in_c, c, k));
            in_c = c;
        }
        let mut dec_rev = Vec::with_capacity(n);
        for l in (0..n).rev() {
            let out = if l > 0 { ch[l - 1] } else { ch[0] };
            dec_rev.push(conv(2 * ch[l], out, k));
        }
        dec_rev.reverse();
        let head_in = match cfg.head {
            Head::Signal => ch[0],
            Head::Feature => ch[0] * cfg.window_len,
        };
        let head_w = offset;
        let head_b = head_w + head_in;
        Layout {
            enc,
            dec: dec_rev,
            head_w,
            head_b,
            head_in,
            total: head_b + 1,
        }
    }

    /// `(offset, len, fan_in)` of every parameter block in storage order.
    fn blocks(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        let n = self.enc.len();
        let convs = self.enc.iter().chain((0..n).rev().map(|l| &self.dec[l]));
        for c in convs {
            out.push((c.w, c.n_weights(), c.in_c * c.k));
            out.push((c.b, c.out_c, c.in_c * c.k));
        }
        out.push((self.head_w, self.head_in, self.head_in));
        out.push((self.head_b, 1, self.head_in));
        out
    }
}

/// Flat gradient buffer, same layout as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T = f32>(pub Vec<T>);

/// Activations kept from a forward pass for backpropagation.
struct Cache<T> {
    enc_in: Vec<Vec<T>>,
    skips: Vec<Vec<T>>,
    pool_idx: Vec<Vec<u8>>,
    dec_in: Vec<Vec<T>>,
    dec_out: Vec<Vec<T>>,
    output: Vec<T>,
}

/// U-Net parameters plus optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformModel<T = f32> {
    config: ModelConfig,
    layout: Layout,
    params: Vec<T>,
    pub(crate) optimizer: AdadeltaState<T>,
}

impl<T: Real> TransformModel<T> {
    /// Deterministic initialization: every parameter uniform in
    /// `+-1/sqrt(fan_in)` from a ChaCha stream seeded by `cfg.seed`.
    pub fn build(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::new(&cfg);
        let mut params = vec![T::zero(); layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for (offset, len, fan_in) in layout.blocks() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut params[offset..offset + len] {
                *p = T::of(rng.gen_range(-bound..bound));
            }
        }
        let optimizer = AdadeltaState::new(layout.total);
        Ok(TransformModel {
            config: cfg,
            layout,
            params,
            optimizer,
        })
    }

    pub(crate) fn from_parts(config: ModelConfig, params: Vec<T>, optimizer: AdadeltaState<T>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total || optimizer.len() != layout.total {
            return Err(Error::shape(format!(
                "model needs {} parameters, got {} (optimizer {})",
                layout.total,
                params.len(),
                optimizer.len()
            )));
        }
        Ok(TransformModel {
            config,
            layout,
            params,
            optimizer,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn optimizer(&self) -> &AdadeltaState<T> {
        &self.optimizer
    }

    /// Head bias (the last parameter).
    pub fn head_bias(&self) -> T {
        self.params[self.layout.head_b]
    }

    pub fn head_bias_mut(&mut self) -> &mut T {
        &mut self.params[self.layout.head_b]
    }

    /// Number of output elements per sample.
    pub fn output_len(&self) -> usize {
        match self.config.head {
            Head::Signal => self.config.window_len,
            Head::Feature => 1,
        }
    }

    pub fn apply_update(&mut self, grads: &Gradients<T>) -> Result<()> {
        self.apply_raw(&grads.0)
    }

    pub(crate) fn apply_raw(&mut self, grad: &[T]) -> Result<()> {
        self.optimizer.step(&mut self.params, grad)
    }

    /// Forward pass on `[C, L]` (single sample) or `[B, C, L]` (batch).
    /// Returns `[1, L]` / `[B, 1, L]` for the signal head and `[]` / `[B]`
    /// for the feature head.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (c, l) = (self.config.input_channels, self.config.window_len);
        let (batch, batched) = match input.shape() {
            [ci, li] if *ci == c && *li == l => (1, false),
            [b, ci, li] if *ci == c && *li == l => (*b, true),
            other => {
                return Err(Error::shape(format!(
                    "expected input [{c}, {l}] or [B, {c}, {l}], got {other:?}"
                )))
            }
        };
        let per = c * l;
        let mut out = Vec::with_capacity(batch * self.output_len());
        for b in 0..batch {
            let cache = self.forward_cached(&input.data()[b * per..(b + 1) * per], false);
            out.extend_from_slice(&cache.output);
        }
        let shape = match (self.config.head, batched) {
            (Head::Signal, false) => vec![1, l],
            (Head::Signal, true) => vec![batch, 1, l],
            (Head::Feature, false) => vec![],
            (Head::Feature, true) => vec![batch],
        };
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::State("forward pass produced non-finite output".into()));
        }
        Tensor::new(shape, out)
    }

    /// Forward on a flat `[C, window_len]` buffer.
    pub fn forward_raw(&self, input: &[T]) -> Vec<T> {
        self.forward_cached(input, false).output
    }

    /// Zero-pads an unpadded `[C, signal_len]` buffer to the network length.
    pub fn pad_input(&self, unpadded: &[T]) -> Result<Vec<T>> {
        let (c, s, l) = (self.config.input_channels, self.config.signal_len, self.config.window_len);
        if unpadded.len() != c * s {
            return Err(Error::shape(format!("expected {} input values, got {}", c * s, unpadded.len())));
        }
        let pad = self.config.pad_left();
        let mut out = vec![T::zero(); c * l];
        for ch in 0..c {
            out[ch * l + pad..ch * l + pad + s].copy_from_slice(&unpadded[ch * s..(ch + 1) * s]);
        }
        Ok(out)
    }

    /// Pads, runs, and crops back: `signal_len` values for the signal head,
    /// one for the feature head.
    pub fn predict_unpadded(&self, unpadded: &[T]) -> Result<Vec<T>> {
        let out = self.forward_raw(&self.pad_input(unpadded)?);
        Ok(match self.config.head {
            Head::Signal => {
                let pad = self.config.pad_left();
                out[pad..pad + self.config.signal_len].to_vec()
            }
            Head::Feature => out,
        })
    }

    /// Ablation hook: forward with every skip connection fed zeros.
    #[doc(hidden)]
    pub fn forward_without_skips(&self, input: &[T]) -> Vec<T> {
        self.forward_cached(input, true).output
    }

    fn forward_cached(&self, input: &[T], zero_skips: bool) -> Cache<T> {
        let cfg = &self.config;
        let n = cfg.levels();
        let p = &self.params;
        let mut cache = Cache {
            enc_in: Vec::with_capacity(n),
            skips: Vec::with_capacity(n),
            pool_idx: Vec::with_capacity(n),
            dec_in: vec![Vec::new(); n],
            dec_out: vec![Vec::new(); n],
            output: Vec::new(),
        };

        let mut len = cfg.window_len;
        let mut a = input.to_vec();
        for spec in &self.layout.enc {
            let mut s = vec![T::zero(); spec.out_c * len];
            conv_forward(p, spec, &a, len, &mut s);
            relu(&mut s);
            let (pooled, idx) = maxpool2(&s, spec.out_c, len);
            cache.enc_in.push(a);
            cache.skips.push(s);
            cache.pool_idx.push(idx);
            a = pooled;
            len /= 2;
        }

        let mut h = a;
        for l in (0..n).rev() {
            let spec = self.layout.dec[l];
            let skip_c = cfg.encoder_channels[l];
            let up_c = spec.in_c - skip_c;
            let up_len = len * 2;
            let mut cat = vec![T::zero(); spec.in_c * up_len];
            for c in 0..up_c {
                for t in 0..up_len {
                    cat[c * up_len + t] = h[c * len + t / 2];
                }
            }
            if !zero_skips {
                cat[up_c * up_len..].copy_from_slice(&cache.skips[l]);
            }
            let mut out = vec![T::zero(); spec.out_c * up_len];
            conv_forward(p, &spec, &cat, up_len, &mut out);
            relu(&mut out);
            cache.dec_in[l] = cat;
            cache.dec_out[l] = out.clone();
            h = out;
            len = up_len;
        }

        let (hw, hb) = (self.layout.head_w, self.layout.head_b);
        cache.output = match cfg.head {
            Head::Signal => {
                let mut y = vec![p[hb]; len];
                for c in 0..cfg.encoder_channels[0] {
                    let w = p[hw + c];
                    for (yt, &ht) in y.iter_mut().zip(&h[c * len..(c + 1) * len]) {
                        *yt += w * ht;
                    }
                }
                y
            }
            Head::Feature => {
                let dot: T = p[hw..hb].iter().zip(&h).map(|(&w, &x)| w * x).sum();
                vec![p[hb] + dot]
            }
        };
        cache
    }

    /// Backpropagates `dy` (gradient w.r.t. the raw output) and adds the
    /// parameter gradient into `grad`.
    fn backprop(&self, cache: &Cache<T>, dy: &[T], grad: &mut [T]) {
        let cfg = &self.config;
        let n = cfg.levels();
        let p = &self.params;
        let (hw, hb) = (self.layout.head_w, self.layout.head_b);
        let top_c = cfg.encoder_channels[0];
        let top = &cache.dec_out[0];
        let mut len = cfg.window_len;

        let mut dh = vec![T::zero(); top_c * len];
        match cfg.head {
            Head::Signal => {
                grad[hb] += dy.iter().copied().sum();
                for c in 0..top_c {
                    let w = p[hw + c];
                    let hrow = &top[c * len..(c + 1) * len];
                    grad[hw + c] += dot(dy, hrow);
                    for (d, &g) in dh[c * len..(c + 1) * len].iter_mut().zip(dy) {
                        *d = w * g;
                    }
                }
            }
            Head::Feature => {
                let g = dy[0];
                grad[hb] += g;
                for i in 0..top.len() {
                    grad[hw + i] += g * top[i];
                    dh[i] = p[hw + i] * g;
                }
            }
        }

        let mut dskips: Vec<Vec<T>> = Vec::with_capacity(n);
        for l in 0..n {
            let spec = self.layout.dec[l];
            relu_backward(&mut dh, &cache.dec_out[l]);
            let mut dcat = vec![T::zero(); spec.in_c * len];
            conv_backward(p, &spec, &cache.dec_in[l], &dh, len, grad, Some(&mut dcat));
            let skip_c = cfg.encoder_channels[l];
            let up_c = spec.in_c - skip_c;
            dskips.push(dcat[up_c * len..].to_vec());
            let half = len / 2;
            let mut dprev = vec![T::zero(); up_c * half];
            for c in 0..up_c {
                for t in 0..half {
                    dprev[c * half + t] = dcat[c * len + 2 * t] + dcat[c * len + 2 * t + 1];
                }
            }
            dh = dprev;
            len = half;
        }

        for l in (0..n).rev() {
            let spec = self.layout.enc[l];
            let full = len * 2;
            let mut ds = std::mem::take(&mut dskips[l]);
            let idx = &cache.pool_idx[l];
            for c in 0..spec.out_c {
                for t in 0..len {
                    let k = c * len + t;
                    ds[c * full + 2 * t + idx[k] as usize] += dh[k];
                }
            }
            relu_backward(&mut ds, &cache.skips[l]);
            if l > 0 {
                let mut din = vec![T::zero(); spec.in_c * full];
                conv_backward(p, &spec, &cache.enc_in[l], &ds, full, grad, Some(&mut din));
                dh = din;
            } else {
                conv_backward(p, &spec, &cache.enc_in[l], &ds, full, grad, None);
            }
            len = full;
        }
    }

    /// MAE between the output window `[offset, offset + target.len())` and
    /// `target`; adds `weight * d(loss)/d(params)` into `grad`.
    pub(crate) fn accumulate_gradient(
        &self,
        input: &[T],
        target: &[T],
        offset: usize,
        weight: T,
        grad: &mut [T],
    ) -> T {
        let cache = self.forward_cached(input, false);
        let m = target.len();
        let inv = T::one() / T::of(m as f64);
        let mut dy = vec![T::zero(); cache.output.len()];
        let mut loss = T::zero();
        for (i, &t) in target.iter().enumerate() {
            let r = cache.output[offset + i] - t;
            loss += r.abs();
            dy[offset + i] = sign(r) * inv * weight;
        }
        self.backprop(&cache, &dy, grad);
        loss * inv
    }

    /// MAE loss and its exact gradient for one sample; `target` has the
    /// forward output's shape. Ties get subgradient 0.
    pub fn backward(&self, input: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Gradients<T>)> {
        let (c, l) = (self.config.input_channels, self.config.window_len);
        if input.shape() != [c, l] {
            return Err(Error::shape(format!("expected input [{c}, {l}], got {:?}", input.shape())));
        }
        if target.len() != self.output_len() {
            return Err(Error::shape(format!(
                "expected {} target values, got {}",
                self.output_len(),
                target.len()
            )));
        }
        let mut grad = vec![T::zero(); self.num_params()];
        let loss = self.accumulate_gradient(input.data(), target.data(), 0, T::one(), &mut grad);
        Ok((loss, Gradients(grad)))
    }

    /// Piecewise-linear region fingerprint (ReLU masks, pooling choices and
    /// residual signs). Two inputs/parameter sets with equal fingerprints sit
    /// in the same smooth region of the loss.
    #[doc(hidden)]
    pub fn kink_signature(&self, input: &[T], target: &[T]) -> Vec<u8> {
        let cache = self.forward_cached(input, false);
        let mut sig = Vec::new();
        for s in cache.skips.iter().chain(&cache.dec_out) {
            sig.extend(s.iter().map(|&v| (v > T::zero()) as u8));
        }
        for idx in &cache.pool_idx {
            sig.extend_from_slice(idx);
        }
        sig.extend(cache.output.iter().zip(target).map(|(&y, &t)| (y > t) as u8));
        sig
    }
}

#[inline]
fn sign<T: Real>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

fn relu<T: Real>(v: &mut [T]) {
    for x in v {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

fn relu_backward<T: Real>(grad: &mut [T], activated: &[T]) {
    for (g, &a) in grad.iter_mut().zip(activated) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Valid output range `[t0, t1)` for tap offset `shift`.
#[inline]
fn tap_range(shift: isize, len: usize) -> (usize, usize) {
    let t0 = (-shift).max(0) as usize;
    let t1 = (len as isize - shift.max(0)) as usize;
    (t0, t1)
}

/// Unfolds `[in_c, len]` into `[in_c * k, len]` so that row `i * k + j`
/// holds channel `i` shifted by tap `j`, zero outside the signal.
fn im2col<T: Real>(input: &[T], in_c: usize, k: usize, len: usize) -> Vec<T> {
    let pad = (k / 2) as isize;
    let mut col = vec![T::zero(); in_c * k * len];
    for i in 0..in_c {
        let irow = &input[i * len..(i + 1) * len];
        for j in 0..k {
            let shift = j as isize - pad;
            let (t0, t1) = tap_range(shift, len);
            let row = (i * k + j) * len;
            col[row + t0..row + t1].copy_from_slice(&irow[(t0 as isize + shift) as usize..(t1 as isize + shift) as usize]);
        }
    }
    col
}

fn conv_forward<T: Real>(p: &[T], spec: &ConvSpec, input: &[T], len: usize, out: &mut [T]) {
    let kk = spec.in_c * spec.k;
    let col = im2col(input, spec.in_c, spec.k, len);
    for o in 0..spec.out_c {
        out[o * len..(o + 1) * len].fill(p[spec.b + o]);
    }
    let (l, kk_i) = (len as isize, kk as isize);
    T::gemm(
        spec.out_c,
        kk,
        len,
        T::one(),
        (&p[spec.w..spec.b], kk_i, 1),
        (&col, l, 1),
        T::one(),
        (out, l, 1),
    );
}

fn conv_backward<T: Real>(
    p: &[T],
    spec: &ConvSpec,
    input: &[T],
    dout: &[T],
    len: usize,
    grad: &mut [T],
    din: Option<&mut [T]>,
) {
    let (in_c, k) = (spec.in_c, spec.k);
    let kk = in_c * k;
    let (l, kk_i) = (len as isize, kk as isize);
    for o in 0..spec.out_c {
        grad[spec.b + o] += dout[o * len..(o + 1) * len].iter().copied().sum();
    }
    let col = im2col(input, in_c, k, len);
    T::gemm(
        spec.out_c,
        len,
        kk,
        T::one(),
        (dout, l, 1),
        (&col, 1, l),
        T::one(),
        (&mut grad[spec.w..spec.b], kk_i, 1),
    );
    if let Some(din) = din {
        let mut dcol = vec![T::zero(); kk * len];
        T::gemm(kk, spec.out_c, len, T::one(), (&p[spec.w..spec.b], 1, kk_i), (dout, l, 1), T::zero(), (&mut dcol, l, 1));
        let pad = (k / 2) as isize;
        for i in 0..in_c {
            for j in 0..k {
                let shift = j as isize - pad;
                let (t0, t1) = tap_range(shift, len);
                let (s0, s1) = ((t0 as isize + shift) as usize, (t1 as isize + shift) as usize);
                let row = (i * k + j) * len;
                for (d, &g) in din[i * len + s0..i * len + s1].iter_mut().zip(&dcol[row + t0..row + t1]) {
                    *d += g;
                }
            }
        }
    }
}

/// Max over disjoint pairs; ties pick the first element.
fn maxpool2<T: Real>(input: &[T], channels: usize, len: usize) -> (Vec<T>, Vec<u8>) {
    let half = len / 2;
    let mut out = Vec::with_capacity(channels * half);
    let mut idx = Vec::with_capacity(channels * half);
    for c in 0..channels {
        let row = &input[c * len..(c + 1) * len];
        for t in 0..half {
            let (a, b) = (row[2 * t], row[2 * t + 1]);
            if a >= b {
                out.push(a);
                idx.push(0);
            } else {
                out.push(b);
                idx.push(1);
            }
        }
    }
    (out, idx)
}
