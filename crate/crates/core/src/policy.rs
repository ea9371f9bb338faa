//! Feed-forward softmax dispatcher with hand-written backpropagation.
//!
//! Parameters live in one flat buffer, layer by layer: the `out x in`
//! weight matrix (row-major) followed by the `out` biases. Gradients use
//! the same layout, which keeps clipping, updates and checkpoints trivial.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{encode_state, Geometry, StateVariant};
use crate::error::{Error, Result};
use crate::rng;
use crate::sim::{Action, Dispatcher, Shop};

pub const DEFAULT_HIDDEN: [usize; 2] = [128, 64];
const CHECKPOINT_FORMAT: &str = "shopfloor-policy";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    dims: Vec<usize>,
    values: Vec<f64>,
}

/// Layer sizes `input -> hidden... -> actions` for a shop geometry.
pub fn layer_dims(geometry: Geometry, hidden: &[usize]) -> Vec<usize> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(geometry.dim());
    dims.extend_from_slice(hidden);
    dims.push(geometry.actions());
    dims
}

fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl PolicyParams {
    /// Weights uniform in `+-sqrt(6 / fan_in)`, zero biases.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::usage(format!("invalid layer dims {dims:?}")));
        }
        let mut rng = rng::stream(seed, "policy-init");
        let mut values = Vec::with_capacity(param_count(dims));
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            values.extend((0..fan_in * fan_out).map(|_| rng.gen_range(-bound..=bound)));
            values.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Ok(Self {
            dims: dims.to_vec(),
            values,
        })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        let mut p = Self::init(dims, 0)?;
        p.values.iter_mut().for_each(|v| *v = 0.0);
        Ok(p)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn num_actions(&self) -> usize {
        *self.dims.last().expect("at least two layers")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Offsets of (weights, biases) for layer `l`.
    fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let start: usize = self.dims[..=l]
            .windows(2)
            .map(|w| w[1] * w[0] + w[1])
            .sum();
        (start, start + self.dims[l] * self.dims[l + 1])
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::usage(format!(
                "state has {} entries, policy expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Activations of every layer; the last entry holds the logits.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let layers = self.dims.len() - 1;
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.to_vec());
        for l in 0..layers {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let (w0, b0) = self.layer_offsets(l);
            let w = &self.values[w0..b0];
            let b = &self.values[b0..b0 + fan_out];
            let input = &acts[l];
            let mut out = b.to_vec();
            for (o, row) in out.iter_mut().zip(w.chunks_exact(fan_in)) {
                *o += row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
            }
            if l + 1 < layers {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        acts
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.activations(x).pop().expect("output layer"))
    }

    /// Action probabilities `pi(. | x)`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    pub fn log_prob(&self, x: &[f64], action: usize) -> Result<f64> {
        let logits = self.logits(x)?;
        Ok(log_softmax(&logits)[action])
    }

    /// Adds `weight * grad log pi(action | x)` into `grad` and returns
    /// `log pi(action | x)`.
    pub fn accumulate_log_prob_grad(
        &self,
        x: &[f64],
        action: usize,
        weight: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        self.check_input(x)?;
        if action >= self.num_actions() {
            return Err(Error::usage(format!(
                "action {action} outside 0..{}",
                self.num_actions()
            )));
        }
        debug_assert_eq!(grad.len(), self.values.len());
        let acts = self.activations(x);
        let logits = acts.last().expect("output layer");
        let logp = log_softmax(logits);
        let mut delta: Vec<f64> = logp
            .iter()
            .enumerate()
            .map(|(i, lp)| weight * (f64::from(u8::from(i == action)) - lp.exp()))
            .collect();

        for l in (0..self.dims.len() - 1).rev() {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let (w0, b0) = self.layer_offsets(l);
            let input = &acts[l];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[w0 + o * fan_in..w0 + (o + 1) * fan_in];
                for (g, &a) in row.iter_mut().zip(input) {
                    *g += d * a;
                }
                grad[b0 + o] += d;
            }
            if l == 0 {
                break;
            }
            let w = &self.values[w0..b0];
            let mut prev = vec![0.0; fan_in];
            for (o, &d) in delta.iter().enumerate().take(fan_out) {
                if d == 0.0 {
                    continue;
                }
                for (p, &wv) in prev.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                    *p += d * wv;
                }
            }
            for (p, &a) in prev.iter_mut().zip(input) {
                if a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
        Ok(logp[action])
    }

    /// Mean cross-entropy `-log pi(y | x)` over a dataset.
    pub fn cross_entropy(&self, data: &[(Vec<f64>, usize)]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::usage("cross-entropy of an empty dataset"));
        }
        let mut total = 0.0;
        for (x, y) in data {
            total -= self.log_prob(x, *y)?;
        }
        Ok(total / data.len() as f64)
    }

    /// Gradient of [`Self::cross_entropy`].
    pub fn cross_entropy_grad(&self, data: &[(Vec<f64>, usize)]) -> Result<Vec<f64>> {
        if data.is_empty() {
            return Err(Error::usage("cross-entropy of an empty dataset"));
        }
        let mut grad = vec![0.0; self.len()];
        let w = -1.0 / data.len() as f64;
        for (x, y) in data {
            self.accumulate_log_prob_grad(x, *y, w, &mut grad)?;
        }
        Ok(grad)
    }

    /// `params -= lr * grad` after clipping `grad` to global norm `clip`.
    pub fn descend(&mut self, grad: &mut [f64], lr: f64, clip: Option<f64>) {
        if let Some(c) = clip {
            clip_global_norm(grad, c);
        }
        for (p, g) in self.values.iter_mut().zip(grad.iter()) {
            *p -= lr * g;
        }
    }

    /// Stable content hash used to detect stale trajectory batches.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h = (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3);
            }
        };
        for d in &self.dims {
            eat(&(*d as u64).to_le_bytes());
        }
        for v in &self.values {
            eat(&v.to_bits().to_le_bytes());
        }
        h
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            dims: self.dims.clone(),
            values: self.values.clone(),
        }
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return Err(Error::usage(format!(
                "unsupported checkpoint {} v{}",
                c.format, c.version
            )));
        }
        if c.dims.len() < 2 || c.values.len() != param_count(&c.dims) {
            return Err(Error::usage(format!(
                "checkpoint dims {:?} do not match {} values",
                c.dims,
                c.values.len()
            )));
        }
        Ok(Self {
            dims: c.dims,
            values: c.values,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(&self.to_checkpoint())?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(serde_json::from_str(&text)?)
    }
}

/// Versioned on-disk form of [`PolicyParams`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    logits.iter().map(|v| v - lse).collect()
}

pub fn clip_global_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectMode {
    #[default]
    Greedy,
    Sample,
}

/// Greedy picks the argmax (lowest index on ties); sample draws from the
/// categorical distribution.
pub fn select_action<R: Rng + ?Sized>(probs: &[f64], mode: SelectMode, rng: &mut R) -> Action {
    let idx = match mode {
        SelectMode::Greedy => argmax(probs),
        SelectMode::Sample => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave u >= acc; fall back to the last supported action.
            pick.unwrap_or_else(|| probs.iter().rposition(|&p| p > 0.0).unwrap_or(0))
        }
    };
    Action::from_index(idx)
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SupervisedOptions {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for SupervisedOptions {
    fn default() -> Self {
        Self {
            epochs: 50,
            lr: 1e-3,
            batch_size: 32,
            clip_norm: Some(5.0),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupervisedReport {
    pub final_loss: f64,
    pub accuracy: f64,
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch gradient descent on mean cross-entropy.
pub fn train_supervised(
    params: &PolicyParams,
    data: &[(Vec<f64>, usize)],
    opts: &SupervisedOptions,
) -> Result<(PolicyParams, SupervisedReport)> {
    if data.is_empty() {
        return Err(Error::usage("supervised training needs a nonempty dataset"));
    }
    if let Some((_, y)) = data.iter().find(|(_, y)| *y >= params.num_actions()) {
        return Err(Error::usage(format!("label {y} outside the action space")));
    }
    if opts.batch_size == 0 {
        return Err(Error::usage("batch_size must be positive"));
    }
    let mut p = params.clone();
    let mut rng = rng::stream(opts.seed, "supervised-shuffle");
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(opts.epochs);
    let mut grad = vec![0.0; p.len()];
    for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(opts.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let w = -1.0 / batch.len() as f64;
            for &i in batch {
                let (x, y) = &data[i];
                epoch_loss -= p.accumulate_log_prob_grad(x, *y, w, &mut grad)?;
            }
            p.descend(&mut grad, opts.lr, opts.clip_norm);
        }
        epoch_losses.push(epoch_loss / data.len() as f64);
    }
    let final_loss = p.cross_entropy(data)?;
    let accuracy = accuracy(&p, data)?;
    Ok((
        p,
        SupervisedReport {
            final_loss,
            accuracy,
            epoch_losses,
        },
    ))
}

/// Fraction of samples whose greedy action equals the label.
pub fn accuracy(params: &PolicyParams, data: &[(Vec<f64>, usize)]) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for (x, y) in data {
        if argmax(&params.logits(x)?) == *y {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

/// Drives a shop with a policy network.
#[derive(Clone, Debug)]
pub struct PolicyDispatcher {
    pub params: PolicyParams,
    pub mode: SelectMode,
    pub variant: StateVariant,
    rng: ChaCha8Rng,
}

impl PolicyDispatcher {
    pub fn new(params: PolicyParams, mode: SelectMode, variant: StateVariant, seed: u64) -> Self {
        Self {
            params,
            mode,
            variant,
            rng: rng::stream(seed, "policy-actions"),
        }
    }

    pub fn greedy(params: PolicyParams) -> Self {
        Self::new(params, SelectMode::Greedy, StateVariant::ProcSlack, 0)
    }
}

impl Dispatcher for PolicyDispatcher {
    fn decide(&mut self, shop: &Shop) -> Action {
        let obs = encode_state(shop.state(), shop.config())
            .expect("shop state matches its own config")
            .masked(self.variant);
        let probs = self
            .params
            .forward(obs.as_flat())
            .expect("policy input dimension matches the shop geometry");
        select_action(&probs, self.mode, &mut self.rng)
    }
}
