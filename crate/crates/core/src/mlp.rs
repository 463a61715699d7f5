//! The shading-interval MLP: 7 inputs, hidden ReLU layers of 16, 8 and 8
//! units, and a linear 2-unit output `(start, total)` in hours.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::ShadingInterval;
use crate::par;

pub const LAYER_DIMS: [usize; 5] = [7, 16, 8, 8, 2];
pub const N_FEATURES: usize = 7;
const MAX_WIDTH: usize = 16;

/// Surrogate inputs in their fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub latitude_deg: f64,
    pub r_l: f64,
    pub r_w: f64,
    pub r_h: f64,
    pub orientation_deg: f64,
    pub theta_deg: f64,
    pub r: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; N_FEATURES] {
        [
            self.latitude_deg,
            self.r_l,
            self.r_w,
            self.r_h,
            self.orientation_deg,
            self.theta_deg,
            self.r,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// A training pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: FeatureVector,
    pub label: ShadingInterval,
}

/// Per-feature affine normalisation `(x - offset) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputNorm {
    pub offset: [f64; N_FEATURES],
    pub scale: [f64; N_FEATURES],
}

impl Default for InputNorm {
    /// Latitude over [25, 35], orientation over [0, 180], theta over
    /// [30, 150], radius over [0.2, 3.2]; relative sizes pass through.
    fn default() -> Self {
        Self {
            offset: [25.0, 0.0, 0.0, 0.0, 0.0, 30.0, 0.2],
            scale: [10.0, 1.0, 1.0, 1.0, 180.0, 120.0, 3.0],
        }
    }
}

impl InputNorm {
    #[inline]
    pub fn apply(&self, x: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
        let mut out = [0.0; N_FEATURES];
        for k in 0..N_FEATURES {
            out[k] = (x[k] - self.offset[k]) / self.scale[k];
        }
        out
    }
}

/// A fully connected layer; `weights` is row-major `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
        }
    }

    #[inline]
    fn apply(&self, input: &[f64], out: &mut [f64], relu: bool) {
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.biases[o];
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            out[o] = if relu && acc <= 0.0 { 0.0 } else { acc };
        }
    }
}

/// Adaptive-moment optimiser settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub seed: u64,
    pub optimizer: AdamConfig,
    pub training_rounds: usize,
    pub updates: usize,
    pub created_at: String,
    /// Wall-clock training time.
    #[serde(default)]
    pub training_seconds: f64,
    /// Digest of the training configuration that produced the weights.
    pub config_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub layers: Vec<Dense>,
    pub input_norm: InputNorm,
    pub metadata: ModelMetadata,
}

/// Loss of one prediction, split into its two terms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    pub total_time: f64,
    pub start_time: f64,
}

impl LossTerms {
    pub fn loss(&self) -> f64 {
        self.total_time + self.start_time
    }
}

/// Squared total-time error plus doubled squared start-time error; the
/// start term vanishes when the label is unshaded.
pub fn loss(pred: (f64, f64), label: &ShadingInterval) -> LossTerms {
    let (st, tt) = pred;
    let total_time = (tt - label.total_h).powi(2);
    let start_time = if label.total_h > 0.0 {
        2.0 * (st - label.start_h).powi(2)
    } else {
        0.0
    };
    LossTerms {
        total_time,
        start_time,
    }
}

/// Clamps raw outputs onto a valid interval for a period of `period_h`.
pub fn post_revise(st_raw: f64, tt_raw: f64, period_h: f64) -> (f64, f64) {
    let mut tt = tt_raw;
    let mut st = st_raw;
    if tt < 0.0 {
        tt = 0.0;
    }
    if tt > period_h {
        tt = period_h;
    }
    if st < 0.0 {
        st = 0.0;
    }
    if st + tt > period_h {
        st = period_h - tt;
    }
    (st, tt)
}

/// Raw and revised outputs for one query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalPrediction {
    pub st_raw: f64,
    pub tt_raw: f64,
    pub st: f64,
    pub tt: f64,
}

impl SurrogateModel {
    /// He-style uniform initialisation, seeded.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = LAYER_DIMS
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / fan_in as f64).sqrt();
                let mut d = Dense::zeros(fan_in, fan_out);
                for v in &mut d.weights {
                    *v = rng.random_range(-bound..bound);
                }
                d
            })
            .collect();
        Self {
            layers,
            input_norm: InputNorm::default(),
            metadata: ModelMetadata {
                seed,
                optimizer: AdamConfig::default(),
                ..Default::default()
            },
        }
    }

    /// A model with every parameter zero.
    pub fn zeros() -> Self {
        Self {
            layers: LAYER_DIMS.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
            input_norm: InputNorm::default(),
            metadata: ModelMetadata::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims: Vec<usize> = std::iter::once(self.layers.first().map_or(0, |l| l.in_dim))
            .chain(self.layers.iter().map(|l| l.out_dim))
            .collect();
        if dims != LAYER_DIMS {
            return Err(Error::ShapeMismatch(format!("layer dims {dims:?}, expected {LAYER_DIMS:?}")));
        }
        for (k, l) in self.layers.iter().enumerate() {
            if k > 0 && l.in_dim != self.layers[k - 1].out_dim {
                return Err(Error::ShapeMismatch(format!("layer {k} input width")));
            }
            if l.weights.len() != l.in_dim * l.out_dim || l.biases.len() != l.out_dim {
                return Err(Error::ShapeMismatch(format!("layer {k} parameter count")));
            }
            if l.weights.iter().chain(&l.biases).any(|v| !v.is_finite()) {
                return Err(Error::ShapeMismatch(format!("layer {k} has non-finite parameters")));
            }
        }
        if self.input_norm.scale.iter().any(|&s| s == 0.0 || !s.is_finite()) {
            return Err(Error::field("input_norm.scale", "scales must be finite and non-zero"));
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Raw `(start, total)` outputs.
    pub fn forward(&self, f: &FeatureVector) -> Result<(f64, f64)> {
        if !f.is_finite() {
            return Err(Error::NonFiniteInput);
        }
        Ok(self.forward_array(&f.to_array()))
    }

    #[inline]
    pub fn forward_array(&self, x: &[f64; N_FEATURES]) -> (f64, f64) {
        let mut a = [0.0; MAX_WIDTH];
        let mut b = [0.0; MAX_WIDTH];
        let x = self.input_norm.apply(x);
        a[..N_FEATURES].copy_from_slice(&x);
        let mut width = N_FEATURES;
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            layer.apply(&a[..width], &mut b[..layer.out_dim], k != last);
            width = layer.out_dim;
            std::mem::swap(&mut a, &mut b);
        }
        (a[0], a[1])
    }

    /// Forward pass followed by interval revision.
    pub fn predict(&self, f: &FeatureVector, period_h: f64) -> Result<IntervalPrediction> {
        let (st_raw, tt_raw) = self.forward(f)?;
        let (st, tt) = post_revise(st_raw, tt_raw, period_h);
        Ok(IntervalPrediction { st_raw, tt_raw, st, tt })
    }

    /// Mean batch loss and its exact gradient.
    pub fn backward(&self, batch: &[Sample]) -> (f64, Gradients) {
        const CHUNK: usize = 256;
        let n_chunks = batch.len().div_ceil(CHUNK);
        let parts = par::map_range(n_chunks, |c| {
            let slice = &batch[c * CHUNK..((c + 1) * CHUNK).min(batch.len())];
            let mut g = Gradients::zeros_like(self);
            let mut loss = 0.0;
            for s in slice {
                loss += self.accumulate_sample(s, &mut g);
            }
            (loss, g)
        });
        let mut total = Gradients::zeros_like(self);
        let mut loss = 0.0;
        for (l, g) in parts {
            loss += l;
            total.add(&g);
        }
        if !batch.is_empty() {
            let inv = 1.0 / batch.len() as f64;
            total.scale(inv);
            loss *= inv;
        }
        (loss, total)
    }

    fn accumulate_sample(&self, s: &Sample, grad: &mut Gradients) -> f64 {
        let n_layers = self.layers.len();
        // activations[0] is the normalised input; activations[k+1] the output of layer k.
        let mut acts = [[0.0; MAX_WIDTH]; LAYER_DIMS.len()];
        let x = self.input_norm.apply(&s.features.to_array());
        acts[0][..N_FEATURES].copy_from_slice(&x);
        for (k, layer) in self.layers.iter().enumerate() {
            let (head, tail) = acts.split_at_mut(k + 1);
            layer.apply(&head[k][..layer.in_dim], &mut tail[0][..layer.out_dim], k + 1 != n_layers);
        }
        let out = &acts[n_layers];
        let (st, tt) = (out[0], out[1]);
        let terms = loss((st, tt), &s.label);

        let mut delta = [0.0; MAX_WIDTH];
        delta[0] = if s.label.total_h > 0.0 {
            4.0 * (st - s.label.start_h)
        } else {
            0.0
        };
        delta[1] = 2.0 * (tt - s.label.total_h);

        for k in (0..n_layers).rev() {
            let layer = &self.layers[k];
            let input = &acts[k];
            let g = &mut grad.layers[k];
            for o in 0..layer.out_dim {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                g.biases[o] += d;
                let row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (gw, xi) in row.iter_mut().zip(&input[..layer.in_dim]) {
                    *gw += d * xi;
                }
            }
            if k == 0 {
                break;
            }
            let mut prev = [0.0; MAX_WIDTH];
            for i in 0..layer.in_dim {
                // ReLU derivative, zero at the kink.
                if input[i] <= 0.0 {
                    continue;
                }
                let mut acc = 0.0;
                for o in 0..layer.out_dim {
                    acc += layer.weights[o * layer.in_dim + i] * delta[o];
                }
                prev[i] = acc;
            }
            delta = prev;
        }
        terms.loss()
    }

    /// Mean batch loss without gradients.
    pub fn batch_loss(&self, batch: &[Sample]) -> f64 {
        if batch.is_empty() {
            return 0.0;
        }
        batch
            .iter()
            .map(|s| loss(self.forward_array(&s.features.to_array()), &s.label).loss())
            .sum::<f64>()
            / batch.len() as f64
    }

    /// Visits every parameter mutably in a fixed order (weights then
    /// biases, layer by layer).
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }
}

/// A validated model unpacked into fixed-size arrays for fast inference.
///
/// The forward pass is split at the first layer: [`FixedNet::head`] folds the
/// five features that stay constant for a building (at a given point height)
/// into first-layer pre-activations, and [`FixedNet::tail`] adds the polar
/// position and finishes the pass. Summation order matches
/// [`SurrogateModel::forward_array`], so outputs are bitwise identical.
#[derive(Debug, Clone)]
pub struct FixedNet {
    norm: InputNorm,
    w1: [[f64; 7]; 16],
    b1: [f64; 16],
    w2: [[f64; 16]; 8],
    b2: [f64; 8],
    w3: [[f64; 8]; 8],
    b3: [f64; 8],
    w4: [[f64; 8]; 2],
    b4: [f64; 2],
}

impl FixedNet {
    pub fn new(model: &SurrogateModel) -> Result<Self> {
        model.validate()?;
        fn rows<const I: usize, const O: usize>(d: &Dense) -> ([[f64; I]; O], [f64; O]) {
            let mut w = [[0.0; I]; O];
            for (o, row) in w.iter_mut().enumerate() {
                row.copy_from_slice(&d.weights[o * I..(o + 1) * I]);
            }
            let mut b = [0.0; O];
            b.copy_from_slice(&d.biases);
            (w, b)
        }
        let (w1, b1) = rows::<7, 16>(&model.layers[0]);
        let (w2, b2) = rows::<16, 8>(&model.layers[1]);
        let (w3, b3) = rows::<8, 8>(&model.layers[2]);
        let (w4, b4) = rows::<8, 2>(&model.layers[3]);
        Ok(Self {
            norm: model.input_norm.clone(),
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            w4,
            b4,
        })
    }

    /// First-layer pre-activations from latitude, relative size and
    /// orientation.
    pub fn head(&self, f: &FeatureVector) -> [f64; 16] {
        let x = self.norm.apply(&f.to_array());
        let mut out = [0.0; 16];
        for (o, acc) in out.iter_mut().enumerate() {
            *acc = self.b1[o];
            for k in 0..5 {
                *acc += self.w1[o][k] * x[k];
            }
        }
        out
    }

    /// Raw `(start, total)` outputs given a head and the polar position.
    #[inline]
    pub fn tail(&self, head: &[f64; 16], theta_deg: f64, r: f64) -> (f64, f64) {
        let t = (theta_deg - self.norm.offset[5]) / self.norm.scale[5];
        let rr = (r - self.norm.offset[6]) / self.norm.scale[6];
        let mut h1 = [0.0; 16];
        for o in 0..16 {
            let acc = head[o] + self.w1[o][5] * t + self.w1[o][6] * rr;
            h1[o] = if acc <= 0.0 { 0.0 } else { acc };
        }
        let h2 = dense_relu(&self.w2, &self.b2, &h1);
        let h3 = dense_relu(&self.w3, &self.b3, &h2);
        let mut out = [0.0; 2];
        for o in 0..2 {
            let mut acc = self.b4[o];
            for i in 0..8 {
                acc += self.w4[o][i] * h3[i];
            }
            out[o] = acc;
        }
        (out[0], out[1])
    }

    /// [`Self::tail`] on `LANES` queries at once. Each lane performs the same
    /// operations in the same order as the scalar version.
    #[inline]
    pub fn tail_lanes(&self, head: &[f64; 16], theta_deg: &[f64; LANES], r: &[f64; LANES]) -> ([f64; LANES], [f64; LANES]) {
        let mut t = [0.0; LANES];
        let mut rr = [0.0; LANES];
        for l in 0..LANES {
            t[l] = (theta_deg[l] - self.norm.offset[5]) / self.norm.scale[5];
            rr[l] = (r[l] - self.norm.offset[6]) / self.norm.scale[6];
        }
        let mut h1 = [[0.0; LANES]; 16];
        for o in 0..16 {
            for l in 0..LANES {
                let acc = head[o] + self.w1[o][5] * t[l] + self.w1[o][6] * rr[l];
                h1[o][l] = if acc <= 0.0 { 0.0 } else { acc };
            }
        }
        let h2 = dense_relu_lanes(&self.w2, &self.b2, &h1, true);
        let h3 = dense_relu_lanes(&self.w3, &self.b3, &h2, true);
        let out = dense_relu_lanes(&self.w4, &self.b4, &h3, false);
        (out[0], out[1])
    }
}

/// Queries evaluated together by [`FixedNet::tail_lanes`].
pub const LANES: usize = 8;

#[inline(always)]
fn dense_relu_lanes<const I: usize, const O: usize>(
    w: &[[f64; I]; O],
    b: &[f64; O],
    x: &[[f64; LANES]; I],
    relu: bool,
) -> [[f64; LANES]; O] {
    let mut out = [[0.0; LANES]; O];
    for o in 0..O {
        let mut acc = [b[o]; LANES];
        for i in 0..I {
            for l in 0..LANES {
                acc[l] += w[o][i] * x[i][l];
            }
        }
        for l in 0..LANES {
            out[o][l] = if relu && acc[l] <= 0.0 { 0.0 } else { acc[l] };
        }
    }
    out
}

#[inline(always)]
fn dense_relu<const I: usize, const O: usize>(w: &[[f64; I]; O], b: &[f64; O], x: &[f64; I]) -> [f64; O] {
    let mut out = [0.0; O];
    for o in 0..O {
        let mut acc = b[o];
        for i in 0..I {
            acc += w[o][i] * x[i];
        }
        out[o] = if acc <= 0.0 { 0.0 } else { acc };
    }
    out
}

/// Gradients with the model's layer shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(model: &SurrogateModel) -> Self {
        Self {
            layers: model.layers.iter().map(|l| Dense::zeros(l.in_dim, l.out_dim)).collect(),
        }
    }

    fn add(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += y);
            a.biases.iter_mut().zip(&b.biases).for_each(|(x, y)| *x += y);
        }
    }

    fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.biases.iter_mut()).for_each(|x| *x *= k);
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }

    pub fn max_abs(&self) -> f64 {
        self.values().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Adaptive-moment optimiser state.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, model: &SurrogateModel) -> Self {
        let n = model.parameter_count();
        Self {
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One optimiser step with the configured learning rate.
    pub fn update(&mut self, model: &mut SurrogateModel, grads: &Gradients) -> Result<()> {
        let lr = self.config.learning_rate;
        self.update_with_rate(model, grads, lr)
    }

    pub fn update_with_rate(&mut self, model: &mut SurrogateModel, grads: &Gradients, lr: f64) -> Result<()> {
        let shapes_match = model.layers.len() == grads.layers.len()
            && model
                .layers
                .iter()
                .zip(&grads.layers)
                .all(|(a, b)| a.weights.len() == b.weights.len() && a.biases.len() == b.biases.len());
        if !shapes_match || self.m.len() != model.parameter_count() {
            return Err(Error::ShapeMismatch("gradient and model shapes differ".into()));
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, epsilon, .. } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in model
            .params_mut()
            .zip(grads.values())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}
