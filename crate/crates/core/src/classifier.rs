//! Binary key/ordinary classifier heads trained by gradient descent.
//!
//! Two architectures: a logistic-regression `Linear` head and a `OneHidden`
//! head with a tanh hidden layer. Both minimize mean binary cross-entropy;
//! weight decay is applied to the parameters directly, outside the gradient.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{FrameId, FrameLabel};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::rng::PortableRng;

pub const DEFAULT_LEARNING_RATE: f64 = 0.00003;
pub const DEFAULT_WEIGHT_DECAY: f64 = 0.01;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

pub const KFH_MAGIC: &[u8; 4] = b"KFH1";
pub const KFH_VERSION: u32 = 1;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadKind {
    Linear,
    OneHidden(usize),
}

impl HeadKind {
    fn tag(self) -> u32 {
        match self {
            HeadKind::Linear => 0,
            HeadKind::OneHidden(_) => 1,
        }
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeadKind::Linear => f.write_str("linear"),
            HeadKind::OneHidden(h) => write!(f, "hidden:{h}"),
        }
    }
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("linear") {
            return Ok(HeadKind::Linear);
        }
        match s.split_once(':') {
            Some(("hidden", h)) => match h.parse() {
                Ok(h) if h > 0 => Ok(HeadKind::OneHidden(h)),
                _ => Err(Error::Invalid(format!("bad hidden width in {s:?}"))),
            },
            _ => Err(Error::Invalid(format!(
                "unknown head kind {s:?} (linear | hidden:<h>)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Optimizer {
    PlainSgd,
    /// First/second moment estimates with decoupled weight decay.
    AdaptiveMoment,
}

impl FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sgd" | "plain-sgd" => Ok(Optimizer::PlainSgd),
            "adam" | "adamw" | "adaptive-moment" => Ok(Optimizer::AdaptiveMoment),
            other => Err(Error::Invalid(format!(
                "unknown optimizer {other:?} (sgd | adamw)"
            ))),
        }
    }
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Optimizer::PlainSgd => "sgd",
            Optimizer::AdaptiveMoment => "adamw",
        })
    }
}

/// Fully connected layer, weights row-major `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (o, b) in self.bias.iter().enumerate() {
            let w = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            out.push(b + w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>());
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(&self.bias)
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    kind: HeadKind,
    input_dim: usize,
    layers: Vec<Dense>,
}

/// Same shape as the head's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub layers: Vec<Dense>,
}

impl Gradient {
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(Dense::params)
            .copied()
            .collect()
    }
}

impl ClassifierHead {
    pub fn zeros(kind: HeadKind, input_dim: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Invalid("head input dim must be positive".into()));
        }
        let layers = match kind {
            HeadKind::Linear => vec![Dense::zeros(input_dim, 1)],
            HeadKind::OneHidden(0) => {
                return Err(Error::Invalid("hidden width must be positive".into()))
            }
            HeadKind::OneHidden(h) => vec![Dense::zeros(input_dim, h), Dense::zeros(h, 1)],
        };
        Ok(Self {
            kind,
            input_dim,
            layers,
        })
    }

    /// Weights uniform in ±1/√fan_in, biases zero.
    pub fn initialized(kind: HeadKind, input_dim: usize, rng: &mut PortableRng) -> Result<Self> {
        let mut head = Self::zeros(kind, input_dim)?;
        for layer in &mut head.layers {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.uniform(-bound, bound);
            }
        }
        Ok(head)
    }

    pub fn linear(weights: Vec<f64>, bias: f64) -> Result<Self> {
        let mut head = Self::zeros(HeadKind::Linear, weights.len())?;
        head.layers[0].weights = weights;
        head.layers[0].bias = vec![bias];
        head.check_finite()?;
        Ok(head)
    }

    pub fn kind(&self) -> HeadKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(Dense::params)
            .copied()
            .collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::LengthMismatch {
                expected: self.param_count(),
                found: values.len(),
            });
        }
        for (p, v) in self
            .layers
            .iter_mut()
            .flat_map(Dense::params_mut)
            .zip(values)
        {
            *p = *v;
        }
        Ok(())
    }

    /// L2 norm over all parameters.
    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(Dense::params)
            .map(|p| p * p)
            .sum::<f64>()
            .sqrt()
    }

    fn check_finite(&self) -> Result<()> {
        if self
            .layers
            .iter()
            .flat_map(Dense::params)
            .all(|p| p.is_finite())
        {
            Ok(())
        } else {
            Err(Error::Invalid("head parameters must be finite".into()))
        }
    }

    /// Pre-sigmoid output for one row.
    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x.len())?;
        let mut buf = Vec::new();
        Ok(self.forward(x, &mut buf, &mut Vec::new()))
    }

    fn check_input(&self, dim: usize) -> Result<()> {
        if dim != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: dim,
            });
        }
        Ok(())
    }

    /// Returns the logit; `hidden` receives the tanh activations when present.
    fn forward(&self, x: &[f64], hidden: &mut Vec<f64>, out: &mut Vec<f64>) -> f64 {
        match self.layers.as_slice() {
            [only] => {
                only.forward(x, out);
            }
            [first, second] => {
                first.forward(x, hidden);
                hidden.iter_mut().for_each(|h| *h = h.tanh());
                second.forward(hidden, out);
            }
            _ => unreachable!("heads have one or two layers"),
        }
        out[0]
    }

    /// Mean binary cross-entropy over the batch and its exact gradient.
    pub fn loss_and_gradient(
        &self,
        rows: &[&[f64]],
        labels: &[FrameLabel],
    ) -> Result<(f64, Gradient)> {
        if rows.is_empty() {
            return Err(Error::Empty("batch"));
        }
        if rows.len() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: rows.len(),
                found: labels.len(),
            });
        }
        let mut grad = Gradient {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs))
                .collect(),
        };
        let scale = 1.0 / rows.len() as f64;
        let (mut hidden, mut out) = (Vec::new(), Vec::new());
        let mut loss = 0.0;
        for (x, label) in rows.iter().zip(labels) {
            self.check_input(x.len())?;
            let y = label.target();
            let z = self.forward(x, &mut hidden, &mut out);
            loss += bce_with_logit(z, y);
            let dz = (sigmoid(z) - y) * scale;
            match grad.layers.as_mut_slice() {
                [g] => {
                    accumulate_outer(g, dz, x);
                }
                [g1, g2] => {
                    accumulate_outer(g2, dz, &hidden);
                    let w2 = &self.layers[1].weights;
                    for (o, h) in hidden.iter().enumerate() {
                        let dh = dz * w2[o] * (1.0 - h * h);
                        g1.bias[o] += dh;
                        for (gw, xi) in g1.weights[o * g1.inputs..(o + 1) * g1.inputs]
                            .iter_mut()
                            .zip(*x)
                        {
                            *gw += dh * xi;
                        }
                    }
                }
                _ => unreachable!(),
            }
        }
        Ok((loss * scale, grad))
    }

    /// Mean binary cross-entropy over a whole matrix.
    pub fn mean_loss(&self, features: &FeatureMatrix, labels: &[FrameLabel]) -> Result<f64> {
        let rows: Vec<&[f64]> = features.rows().collect();
        let mut total = 0.0;
        let (mut hidden, mut out) = (Vec::new(), Vec::new());
        self.check_input(features.dim())?;
        if rows.len() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: rows.len(),
                found: labels.len(),
            });
        }
        for (x, label) in rows.iter().zip(labels) {
            total += bce_with_logit(self.forward(x, &mut hidden, &mut out), label.target());
        }
        Ok(total / rows.len().max(1) as f64)
    }
}

fn accumulate_outer(g: &mut Dense, delta: f64, input: &[f64]) {
    g.bias[0] += delta;
    for (gw, xi) in g.weights.iter_mut().zip(input) {
        *gw += delta * xi;
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-(y·ln σ(z) + (1-y)·ln(1-σ(z)))` without overflow.
fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - y * z + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: HeadKind,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            kind: HeadKind::Linear,
            learning_rate: DEFAULT_LEARNING_RATE,
            weight_decay: DEFAULT_WEIGHT_DECAY,
            epochs: 500,
            batch_size: 4,
            seed: 0,
            optimizer: Optimizer::AdaptiveMoment,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Invalid("learning_rate must be positive".into()));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Invalid("weight_decay must be nonnegative".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Invalid(
                "epochs and batch_size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// A trained head and the full-training-set loss after every epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedHead {
    pub head: ClassifierHead,
    pub epoch_losses: Vec<f64>,
}

pub fn train(
    features: &FeatureMatrix,
    labels: &[FrameLabel],
    config: &TrainConfig,
) -> Result<ClassifierHead> {
    train_with_trace(features, labels, config).map(|t| t.head)
}

pub fn train_with_trace(
    features: &FeatureMatrix,
    labels: &[FrameLabel],
    config: &TrainConfig,
) -> Result<TrainedHead> {
    config.validate()?;
    let n = features.n_rows();
    if labels.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    let keys = labels.iter().filter(|l| l.is_key()).count();
    if n < 2 || keys == 0 || keys == n {
        return Err(Error::SingleClass);
    }

    let mut rng = PortableRng::new(config.seed);
    let mut head = ClassifierHead::initialized(config.kind, features.dim(), &mut rng)?;
    let mut optimizer = OptimizerState::new(config, head.param_count());
    let rows: Vec<&[f64]> = features.rows().collect();
    let mut order: Vec<usize> = (0..n).collect();
    let full_batch = config.batch_size >= n;
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let (mut batch_rows, mut batch_labels) = (Vec::new(), Vec::new());

    for epoch in 0..config.epochs {
        if !full_batch {
            rng.shuffle(&mut order);
        }
        for chunk in order.chunks(config.batch_size) {
            batch_rows.clear();
            batch_labels.clear();
            batch_rows.extend(chunk.iter().map(|&i| rows[i]));
            batch_labels.extend(chunk.iter().map(|&i| labels[i]));
            let (loss, grad) = head.loss_and_gradient(&batch_rows, &batch_labels)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            optimizer.step(&mut head, &grad);
        }
        let loss = head.mean_loss(features, labels)?;
        if !loss.is_finite() || head.check_finite().is_err() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        epoch_losses.push(loss);
    }
    Ok(TrainedHead { head, epoch_losses })
}

struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    decay: f64,
    step: i32,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl OptimizerState {
    fn new(config: &TrainConfig, params: usize) -> Self {
        let moments = if config.optimizer == Optimizer::AdaptiveMoment {
            params
        } else {
            0
        };
        Self {
            kind: config.optimizer,
            lr: config.learning_rate,
            decay: config.weight_decay,
            step: 0,
            first: vec![0.0; moments],
            second: vec![0.0; moments],
        }
    }

    fn step(&mut self, head: &mut ClassifierHead, grad: &Gradient) {
        self.step += 1;
        let shrink = 1.0 - self.lr * self.decay;
        let params = head.layers.iter_mut().flat_map(Dense::params_mut);
        let grads = grad.layers.iter().flat_map(Dense::params);
        match self.kind {
            Optimizer::PlainSgd => {
                for (p, g) in params.zip(grads) {
                    *p = *p * shrink - self.lr * g;
                }
            }
            Optimizer::AdaptiveMoment => {
                let c1 = 1.0 - BETA1.powi(self.step);
                let c2 = 1.0 - BETA2.powi(self.step);
                for (((p, g), m), v) in params.zip(grads).zip(&mut self.first).zip(&mut self.second)
                {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    let update = (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                    *p = *p * shrink - self.lr * update;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub frame_id: FrameId,
    pub score: f64,
    pub label: FrameLabel,
}

/// Label is `Key` when `score >= threshold`.
pub fn label_for(score: f64, threshold: f64) -> FrameLabel {
    if score >= threshold {
        FrameLabel::Key
    } else {
        FrameLabel::Ordinary
    }
}

pub fn predict(
    head: &ClassifierHead,
    features: &FeatureMatrix,
    threshold: f64,
) -> Result<Vec<Prediction>> {
    head.check_input(features.dim())?;
    let (mut hidden, mut out) = (Vec::new(), Vec::new());
    Ok(features
        .rows()
        .zip(features.frame_ids())
        .map(|(x, id)| {
            let score = sigmoid(head.forward(x, &mut hidden, &mut out));
            Prediction {
                frame_id: id.clone(),
                score,
                label: label_for(score, threshold),
            }
        })
        .collect())
}

impl ClassifierHead {
    /// KFH1: magic, u32 version, u32 kind tag, u64 input dim, u64 hidden width, f64 LE parameters.
    pub fn encode(&self) -> Vec<u8> {
        let hidden = match self.kind {
            HeadKind::Linear => 0u64,
            HeadKind::OneHidden(h) => h as u64,
        };
        let mut out = Vec::with_capacity(28 + 8 * self.param_count());
        out.extend_from_slice(KFH_MAGIC);
        out.extend_from_slice(&KFH_VERSION.to_le_bytes());
        out.extend_from_slice(&self.kind.tag().to_le_bytes());
        out.extend_from_slice(&(self.input_dim as u64).to_le_bytes());
        out.extend_from_slice(&hidden.to_le_bytes());
        for p in self.layers.iter().flat_map(Dense::params) {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let header = bytes
            .get(..28)
            .ok_or_else(|| Error::Format("truncated header".into()))?;
        if &header[..4] != KFH_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let u32_at = |at: usize| u32::from_le_bytes(header[at..at + 4].try_into().unwrap());
        let u64_at = |at: usize| u64::from_le_bytes(header[at..at + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != KFH_VERSION {
            return Err(Error::Format(format!(
                "version mismatch: found {version}, expected {KFH_VERSION}"
            )));
        }
        let to_usize =
            |v: u64| usize::try_from(v).map_err(|_| Error::Format("dimension overflow".into()));
        let input_dim = to_usize(u64_at(12))?;
        let hidden = to_usize(u64_at(20))?;
        let kind = match (u32_at(8), hidden) {
            (0, 0) => HeadKind::Linear,
            (1, h) if h > 0 => HeadKind::OneHidden(h),
            (tag, h) => {
                return Err(Error::Format(format!(
                    "invalid kind tag {tag} with hidden width {h}"
                )))
            }
        };
        if input_dim == 0 {
            return Err(Error::Format("input dim must be positive".into()));
        }
        let expected = match kind {
            HeadKind::Linear => input_dim.checked_add(1),
            HeadKind::OneHidden(h) => input_dim
                .checked_add(2)
                .and_then(|d| d.checked_mul(h))
                .and_then(|v| v.checked_add(1)),
        }
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Format("dimension overflow".into()))?;
        let payload = &bytes[28..];
        if payload.len() < expected {
            return Err(Error::Format("truncated payload".into()));
        }
        if payload.len() > expected {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                payload.len() - expected
            )));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut head = Self::zeros(kind, input_dim)?;
        head.set_flat(&values)?;
        head.check_finite()
            .map_err(|_| Error::Format("non-finite parameter".into()))?;
        Ok(head)
    }
}

pub fn save_head(head: &ClassifierHead, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, head.encode()).map_err(|e| Error::io(path, e))
}

pub fn load_head(path: impl AsRef<Path>) -> Result<ClassifierHead> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    ClassifierHead::decode(&bytes)
}

/// Loads a checkpoint and insists on a particular architecture.
pub fn load_head_as(path: impl AsRef<Path>, expected: HeadKind) -> Result<ClassifierHead> {
    let head = load_head(path)?;
    if head.kind != expected {
        return Err(Error::Format(format!(
            "kind mismatch: checkpoint is {}, expected {expected}",
            head.kind
        )));
    }
    Ok(head)
}
