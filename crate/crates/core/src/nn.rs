//! Layers: plain and conditional batch normalization, the CBN parameter
//! projection, GRU, embeddings, coordinate maps and the CBN residual block.

use cbnr_tensor::{Scalar, Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, running averages updated by the caller.
    Train,
    /// Running statistics; every sample is processed independently.
    Eval,
}

/// A named trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    /// Whether weight decay applies.
    pub decay: bool,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>, decay: bool) -> Self {
        Param { name: name.into(), value: value.with_grad(), decay }
    }

    pub fn bind(&self, tape: &mut Tape<T>, mode: Mode) -> Var {
        match mode {
            Mode::Train => tape.param(&self.name, &self.value),
            Mode::Eval => tape.constant(Tensor::new(self.value.shape().to_vec(), self.value.data().to_vec()).expect("parameter shape is consistent")),
        }
    }
}

/// Per-channel running mean and variance of a normalization layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    pub name: String,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Scalar> RunningStats<T> {
    pub fn new(name: impl Into<String>, channels: usize) -> Self {
        RunningStats { name: name.into(), mean: vec![T::zero(); channels], var: vec![T::one(); channels] }
    }

    /// `running <- (1 - momentum) * running + momentum * batch`.
    pub fn update(&mut self, mean: &[T], var: &[T], momentum: f64) {
        let m = T::from_f64(momentum);
        let keep = T::one() - m;
        for (r, &b) in self.mean.iter_mut().zip(mean) {
            *r = keep * *r + m * b;
        }
        for (r, &b) in self.var.iter_mut().zip(var) {
            *r = keep * *r + m * b;
        }
    }
}

/// Normalization nodes recorded during a training forward pass, keyed by
/// the name of the statistics they feed.
pub type StatTrace = Vec<(String, Var)>;

/// Access to a layer's parameters and running statistics.
pub trait Module<T> {
    fn params(&self) -> Vec<&Param<T>>;
    fn params_mut(&mut self) -> Vec<&mut Param<T>>;
    fn stats(&self) -> Vec<&RunningStats<T>> {
        Vec::new()
    }
    fn stats_mut(&mut self) -> Vec<&mut RunningStats<T>> {
        Vec::new()
    }
}

pub(crate) fn uniform<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Tensor<T> {
    Tensor::from_fn(shape.to_vec(), |_| T::from_f64(rng.gen_range(-bound..=bound)))
}

/// Normalizes `x` per channel by batch moments (train) or running statistics (eval).
pub fn normalize<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    stats: &RunningStats<T>,
    eps: f64,
    mode: Mode,
    trace: &mut StatTrace,
) -> Result<Var> {
    match mode {
        Mode::Train => {
            let v = tape.batch_norm(x, T::from_f64(eps))?;
            trace.push((stats.name.clone(), v));
            Ok(v)
        }
        Mode::Eval => Ok(tape.normalize_with(x, &stats.mean, &stats.var, T::from_f64(eps))?),
    }
}

/// Reshapes a per-channel `[C]` or per-sample `[N,C]` vector so it broadcasts over `[N,C,H,W]`.
fn as_channel_map<T: Scalar>(tape: &mut Tape<T>, v: Var) -> Result<Var> {
    let s = tape.shape(v).to_vec();
    let shape = match s.as_slice() {
        [c] => vec![1, *c, 1, 1],
        [n, c] => vec![*n, *c, 1, 1],
        _ => return Err(Error::Contract(format!("expected a [C] or [N,C] vector, got {s:?}"))),
    };
    Ok(tape.reshape(v, &shape)?)
}

/// Training-time batch normalization: batch moments over (N,H,W), then `gamma * x + beta`.
pub fn batch_norm_train<T: Scalar>(tape: &mut Tape<T>, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
    let n = tape.batch_norm(x, T::from_f64(eps))?;
    affine_channels(tape, n, gamma, beta)
}

fn affine_channels<T: Scalar>(tape: &mut Tape<T>, x: Var, gamma: Var, beta: Var) -> Result<Var> {
    let g = as_channel_map(tape, gamma)?;
    let b = as_channel_map(tape, beta)?;
    let scaled = tape.mul(x, g)?;
    Ok(tape.add(scaled, b)?)
}

/// Applies per-sample `gamma_hat = 1 + delta_gamma` and `beta` to a normalized map.
pub fn modulate<T: Scalar>(tape: &mut Tape<T>, normalized: Var, delta_gamma: Var, beta: Var) -> Result<Var> {
    let gamma_hat = tape.affine(delta_gamma, T::one(), T::one());
    affine_channels(tape, normalized, gamma_hat, beta)
}

/// Conditional batch normalization with batch moments.
pub fn cbn_apply<T: Scalar>(tape: &mut Tape<T>, x: Var, delta_gamma: Var, beta: Var, eps: f64) -> Result<Var> {
    let n = tape.batch_norm(x, T::from_f64(eps))?;
    modulate(tape, n, delta_gamma, beta)
}

/// `[2, h, w]`: channel 0 is the row coordinate, channel 1 the column
/// coordinate, each spaced linearly over `[-1, 1]` (0 for an extent of 1).
pub fn coord_maps<T: Scalar>(h: usize, w: usize) -> Tensor<T> {
    let lin = |i: usize, n: usize| if n == 1 { 0.0 } else { -1.0 + 2.0 * i as f64 / (n - 1) as f64 };
    Tensor::from_fn(vec![2, h, w], |k| {
        let (c, r, col) = (k / (h * w), (k / w) % h, k % w);
        T::from_f64(if c == 0 { lin(r, h) } else { lin(col, w) })
    })
}

/// Concatenates coordinate maps onto `[N,C,H,W]` along channels.
pub fn with_coords<T: Scalar>(tape: &mut Tape<T>, x: Var) -> Result<Var> {
    let s = tape.shape(x).to_vec();
    let [n, _, h, w] = s[..] else {
        return Err(Error::Contract(format!("coordinate maps need [N,C,H,W], got {s:?}")));
    };
    let one = coord_maps::<T>(h, w);
    let mut tiled = Vec::with_capacity(n * one.len());
    for _ in 0..n {
        tiled.extend_from_slice(one.data());
    }
    let coords = tape.constant(Tensor::new(vec![n, 2, h, w], tiled)?);
    Ok(tape.concat(&[x, coords], 1)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    /// `[out, in]`
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(name: &str, input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Linear {
            weight: Param::new(format!("{name}.weight"), uniform(rng, &[output, input], bound), true),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(vec![output]), false),
        }
    }

    pub fn forward(&self, tape: &mut Tape<T>, x: Var, mode: Mode) -> Result<Var> {
        let w = self.weight.bind(tape, mode);
        let b = self.bias.bind(tape, mode);
        let y = tape.matmul_t(x, w)?;
        Ok(tape.add(y, b)?)
    }
}

impl<T> Module<T> for Linear<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    /// `[out, in, k, k]`
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    pub stride: usize,
    pub pad: usize,
}

impl<T: Scalar> Conv2d<T> {
    /// He-uniform initialization, zero bias when present.
    pub fn new(name: &str, input: usize, output: usize, k: usize, stride: usize, bias: bool, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = (input * k * k) as f64;
        let bound = (6.0 / fan_in).sqrt();
        Conv2d {
            weight: Param::new(format!("{name}.weight"), uniform(rng, &[output, input, k, k], bound), true),
            bias: bias.then(|| Param::new(format!("{name}.bias"), Tensor::zeros(vec![output]), false)),
            stride,
            pad: k / 2,
        }
    }

    pub fn forward(&self, tape: &mut Tape<T>, x: Var, mode: Mode) -> Result<Var> {
        let w = self.weight.bind(tape, mode);
        let y = tape.conv2d(x, w, self.stride, self.pad)?;
        match &self.bias {
            Some(b) => {
                let b = b.bind(tape, mode);
                let b = as_channel_map(tape, b)?;
                Ok(tape.add(y, b)?)
            }
            None => Ok(y),
        }
    }
}

impl<T> Module<T> for Conv2d<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = vec![&self.weight];
        v.extend(self.bias.as_ref());
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = vec![&mut self.weight];
        v.extend(self.bias.as_mut());
        v
    }
}

/// Batch normalization with a learned per-channel affine.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub stats: RunningStats<T>,
    pub eps: f64,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(name: &str, channels: usize, eps: f64) -> Self {
        BatchNorm {
            gamma: Param::new(format!("{name}.gamma"), Tensor::ones(vec![channels]), true),
            beta: Param::new(format!("{name}.beta"), Tensor::zeros(vec![channels]), false),
            stats: RunningStats::new(name, channels),
            eps,
        }
    }

    pub fn forward(&self, tape: &mut Tape<T>, x: Var, mode: Mode, trace: &mut StatTrace) -> Result<Var> {
        let n = normalize(tape, x, &self.stats, self.eps, mode, trace)?;
        let g = self.gamma.bind(tape, mode);
        let b = self.beta.bind(tape, mode);
        affine_channels(tape, n, g, b)
    }
}

impl<T> Module<T> for BatchNorm<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gamma, &self.beta]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }
    fn stats(&self) -> Vec<&RunningStats<T>> {
        vec![&self.stats]
    }
    fn stats_mut(&mut self) -> Vec<&mut RunningStats<T>> {
        vec![&mut self.stats]
    }
}

/// Linear map from the question embedding to one CBN layer's `(delta_gamma, beta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CbnProjection<T> {
    /// `[2C, E]`: rows `0..C` give `delta_gamma`, rows `C..2C` give `beta`.
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub channels: usize,
}

impl<T: Scalar> CbnProjection<T> {
    pub fn new(name: &str, embed: usize, channels: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (embed as f64).sqrt();
        CbnProjection {
            weight: Param::new(format!("{name}.weight"), uniform(rng, &[2 * channels, embed], bound), true),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(vec![2 * channels]), false),
            channels,
        }
    }

    /// Returns `([N,C] delta_gamma, [N,C] beta)`.
    pub fn predict(&self, tape: &mut Tape<T>, e_q: Var, mode: Mode) -> Result<(Var, Var)> {
        let w = self.weight.bind(tape, mode);
        let b = self.bias.bind(tape, mode);
        let y = tape.matmul_t(e_q, w)?;
        let y = tape.add(y, b)?;
        let dg = tape.narrow(y, 1, 0, self.channels)?;
        let beta = tape.narrow(y, 1, self.channels, self.channels)?;
        Ok((dg, beta))
    }

    pub fn zero(&mut self) {
        self.weight.value.data_mut().iter_mut().for_each(|v| *v = T::zero());
        self.bias.value.data_mut().iter_mut().for_each(|v| *v = T::zero());
    }
}

impl<T> Module<T> for CbnProjection<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Conditional batch normalization: running statistics track only the
/// normalization moments; the affine always comes from the question.
#[derive(Debug, Clone, PartialEq)]
pub struct CbnLayer<T> {
    pub proj: CbnProjection<T>,
    pub stats: RunningStats<T>,
    pub eps: f64,
}

/// Output of a CBN layer together with the parameters it applied.
#[derive(Debug, Clone, Copy)]
pub struct CbnOutput {
    pub out: Var,
    pub delta_gamma: Var,
    pub beta: Var,
}

impl<T: Scalar> CbnLayer<T> {
    pub fn new(name: &str, embed: usize, channels: usize, eps: f64, rng: &mut ChaCha8Rng) -> Self {
        CbnLayer { proj: CbnProjection::new(&format!("{name}.proj"), embed, channels, rng), stats: RunningStats::new(name, channels), eps }
    }

    pub fn forward(&self, tape: &mut Tape<T>, x: Var, e_q: Var, mode: Mode, trace: &mut StatTrace) -> Result<CbnOutput> {
        let (delta_gamma, beta) = self.proj.predict(tape, e_q, mode)?;
        let n = normalize(tape, x, &self.stats, self.eps, mode, trace)?;
        let out = modulate(tape, n, delta_gamma, beta)?;
        Ok(CbnOutput { out, delta_gamma, beta })
    }
}

impl<T> Module<T> for CbnLayer<T> {
    fn params(&self) -> Vec<&Param<T>> {
        self.proj.params()
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.proj.params_mut()
    }
    fn stats(&self) -> Vec<&RunningStats<T>> {
        vec![&self.stats]
    }
    fn stats_mut(&mut self) -> Vec<&mut RunningStats<T>> {
        vec![&mut self.stats]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T> {
    /// `[vocab, dim]`; row 0 is the padding token.
    pub table: Param<T>,
}

impl<T: Scalar> Embedding<T> {
    pub fn new(name: &str, vocab: usize, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        // unit variance
        Embedding { table: Param::new(format!("{name}.table"), uniform(rng, &[vocab, dim], 3f64.sqrt()), true) }
    }

    pub fn vocab(&self) -> usize {
        self.table.value.shape()[0]
    }
}

impl<T> Module<T> for Embedding<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.table]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.table]
    }
}

/// Gated recurrent unit:
///
/// ```text
/// z  = sigmoid(x Wz^T + h Uz^T + bz)
/// r  = sigmoid(x Wr^T + h Ur^T + br)
/// h~ = tanh(x Wh^T + (r * h) Uh^T + bh)
/// h' = (1 - z) * h + z * h~
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Gru<T> {
    pub w_z: Param<T>,
    pub u_z: Param<T>,
    pub b_z: Param<T>,
    pub w_r: Param<T>,
    pub u_r: Param<T>,
    pub b_r: Param<T>,
    pub w_h: Param<T>,
    pub u_h: Param<T>,
    pub b_h: Param<T>,
}

/// The nine GRU tensors bound on a tape.
#[derive(Debug, Clone, Copy)]
pub struct GruVars {
    pub w_z: Var,
    pub u_z: Var,
    pub b_z: Var,
    pub w_r: Var,
    pub u_r: Var,
    pub b_r: Var,
    pub w_h: Var,
    pub u_h: Var,
    pub b_h: Var,
}

impl<T: Scalar> Gru<T> {
    pub fn new(name: &str, input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let bw = 1.0 / (input as f64).sqrt();
        let bu = 1.0 / (hidden as f64).sqrt();
        let mut w = |n: &str| Param::new(format!("{name}.{n}"), uniform(rng, &[hidden, input], bw), true);
        let (w_z, w_r, w_h) = (w("w_z"), w("w_r"), w("w_h"));
        let mut u = |n: &str| Param::new(format!("{name}.{n}"), uniform(rng, &[hidden, hidden], bu), true);
        let (u_z, u_r, u_h) = (u("u_z"), u("u_r"), u("u_h"));
        let b = |n: &str| Param::new(format!("{name}.{n}"), Tensor::zeros(vec![hidden]), false);
        Gru { w_z, u_z, b_z: b("b_z"), w_r, u_r, b_r: b("b_r"), w_h, u_h, b_h: b("b_h") }
    }

    pub fn hidden(&self) -> usize {
        self.b_z.value.len()
    }

    pub fn input(&self) -> usize {
        self.w_z.value.shape()[1]
    }

    pub fn bind(&self, tape: &mut Tape<T>, mode: Mode) -> GruVars {
        GruVars {
            w_z: self.w_z.bind(tape, mode),
            u_z: self.u_z.bind(tape, mode),
            b_z: self.b_z.bind(tape, mode),
            w_r: self.w_r.bind(tape, mode),
            u_r: self.u_r.bind(tape, mode),
            b_r: self.b_r.bind(tape, mode),
            w_h: self.w_h.bind(tape, mode),
            u_h: self.u_h.bind(tape, mode),
            b_h: self.b_h.bind(tape, mode),
        }
    }

    /// One step on `x [N,E]` and `h [N,H]`.
    pub fn step(tape: &mut Tape<T>, g: &GruVars, x: Var, h: Var) -> Result<Var> {
        let gate = |tape: &mut Tape<T>, w: Var, u: Var, b: Var, h_in: Var| -> Result<Var> {
            let a = tape.matmul_t(x, w)?;
            let c = tape.matmul_t(h_in, u)?;
            let s = tape.add(a, c)?;
            Ok(tape.add(s, b)?)
        };
        let z = gate(tape, g.w_z, g.u_z, g.b_z, h)?;
        let z = tape.sigmoid(z);
        let r = gate(tape, g.w_r, g.u_r, g.b_r, h)?;
        let r = tape.sigmoid(r);
        let rh = tape.mul(r, h)?;
        let cand = gate(tape, g.w_h, g.u_h, g.b_h, rh)?;
        let cand = tape.tanh(cand);
        let diff = tape.sub(cand, h)?;
        let step = tape.mul(z, diff)?;
        Ok(tape.add(h, step)?)
    }

    /// Final hidden state for each right-padded token sequence. Sequences
    /// stop updating once their own tokens are consumed.
    pub fn encode(&self, tape: &mut Tape<T>, embedding: &Embedding<T>, tokens: &[Vec<u32>], mode: Mode) -> Result<Var> {
        if tokens.is_empty() {
            return Err(Error::Contract("cannot encode an empty batch".into()));
        }
        if let Some(i) = tokens.iter().position(Vec::is_empty) {
            return Err(Error::Contract(format!("question {i} has no tokens")));
        }
        let n = tokens.len();
        let steps = tokens.iter().map(Vec::len).max().unwrap_or(0);
        let table = embedding.table.bind(tape, mode);
        let g = self.bind(tape, mode);
        let mut h = tape.constant(Tensor::zeros(vec![n, self.hidden()]));
        for t in 0..steps {
            let ids: Vec<usize> = tokens.iter().map(|q| q.get(t).copied().unwrap_or(0) as usize).collect();
            let x = tape.gather_rows(table, &ids)?;
            let next = Self::step(tape, &g, x, h)?;
            let mask: Vec<bool> = tokens.iter().map(|q| t < q.len()).collect();
            h = if mask.iter().all(|&m| m) { next } else { tape.where_rows(&mask, next, h)? };
        }
        Ok(h)
    }
}

impl<T> Module<T> for Gru<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.w_z, &self.u_z, &self.b_z, &self.w_r, &self.u_r, &self.b_r, &self.w_h, &self.u_h, &self.b_h]
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![
            &mut self.w_z,
            &mut self.u_z,
            &mut self.b_z,
            &mut self.w_r,
            &mut self.u_r,
            &mut self.b_r,
            &mut self.w_h,
            &mut self.u_h,
            &mut self.b_h,
        ]
    }
}

/// coords -> 1x1 conv + ReLU (the skip) -> [3x3 conv -> CBN -> ReLU] x2 -> + skip.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock<T> {
    pub entry: Conv2d<T>,
    pub conv1: Conv2d<T>,
    pub cbn1: CbnLayer<T>,
    pub conv2: Conv2d<T>,
    pub cbn2: CbnLayer<T>,
}

#[derive(Debug, Clone, Copy)]
pub struct BlockOutput {
    pub out: Var,
    pub cbn: [CbnOutput; 2],
}

impl<T: Scalar> ResidualBlock<T> {
    pub fn new(name: &str, input: usize, channels: usize, embed: usize, eps: f64, rng: &mut ChaCha8Rng) -> Self {
        ResidualBlock {
            entry: Conv2d::new(&format!("{name}.entry"), input + 2, channels, 1, 1, true, rng),
            conv1: Conv2d::new(&format!("{name}.conv1"), channels, channels, 3, 1, false, rng),
            cbn1: CbnLayer::new(&format!("{name}.cbn1"), embed, channels, eps, rng),
            conv2: Conv2d::new(&format!("{name}.conv2"), channels, channels, 3, 1, false, rng),
            cbn2: CbnLayer::new(&format!("{name}.cbn2"), embed, channels, eps, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape<T>, x: Var, e_q: Var, mode: Mode, trace: &mut StatTrace) -> Result<BlockOutput> {
        let x = with_coords(tape, x)?;
        let skip = self.entry.forward(tape, x, mode)?;
        let skip = tape.relu(skip);
        let y = self.conv1.forward(tape, skip, mode)?;
        let c1 = self.cbn1.forward(tape, y, e_q, mode, trace)?;
        let y = tape.relu(c1.out);
        let y = self.conv2.forward(tape, y, mode)?;
        let c2 = self.cbn2.forward(tape, y, e_q, mode, trace)?;
        let y = tape.relu(c2.out);
        let out = tape.add(y, skip)?;
        Ok(BlockOutput { out, cbn: [c1, c2] })
    }

    pub fn cbn_layers(&self) -> [&CbnLayer<T>; 2] {
        [&self.cbn1, &self.cbn2]
    }
}

impl<T> Module<T> for ResidualBlock<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.entry.params();
        v.extend(self.conv1.params());
        v.extend(self.cbn1.params());
        v.extend(self.conv2.params());
        v.extend(self.cbn2.params());
        v
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.entry.params_mut();
        v.extend(self.conv1.params_mut());
        v.extend(self.cbn1.params_mut());
        v.extend(self.conv2.params_mut());
        v.extend(self.cbn2.params_mut());
        v
    }
    fn stats(&self) -> Vec<&RunningStats<T>> {
        vec![&self.cbn1.stats, &self.cbn2.stats]
    }
    fn stats_mut(&mut self) -> Vec<&mut RunningStats<T>> {
        vec![&mut self.cbn1.stats, &mut self.cbn2.stats]
    }
}
