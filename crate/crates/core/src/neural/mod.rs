//! Convolutional autoencoder for trajectory windows and a softmax head over
//! its latent features, trained with Adam.

mod autoencoder;
mod classifier;
pub mod layers;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureWindow, Manoeuvre, CHANNELS};

pub use autoencoder::{train_autoencoder, AeConfig, AeReport, Autoencoder, EpochLoss};
pub use classifier::{
    train_classifier, train_head, ClassifierHead, ClassifierReport, EpochAccuracy,
};
pub use layers::{Layer, LayerKind, Network};

pub const LATENT: usize = 5;
pub(crate) const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("expected a 5 x {expected} window, got 5 x {got}")]
    Shape { expected: usize, got: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("model file version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Adam hyper-parameters plus the data split and schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 64,
            epochs: 300,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

/// Softmax probabilities over left, right, straight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confidence(pub [f64; 3]);

impl Confidence {
    pub fn uniform() -> Self {
        Confidence([1.0 / 3.0; 3])
    }

    pub fn from_logits(logits: [f64; 3]) -> Self {
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e = logits.map(|l| (l - m).exp());
        let sum: f64 = e.iter().sum();
        Confidence(e.map(|v| v / sum))
    }

    pub fn of(&self, m: Manoeuvre) -> f64 {
        self.0[m.index()]
    }

    pub fn argmax(&self) -> Manoeuvre {
        let mut best = 0;
        for i in 1..3 {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        Manoeuvre::from_index(best).expect("three classes")
    }
}

pub(crate) struct Adam {
    cfg: TrainConfig,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub(crate) fn new(cfg: TrainConfig, params: usize) -> Self {
        Self {
            cfg,
            t: 0,
            m: vec![0.0; params],
            v: vec![0.0; params],
        }
    }

    pub(crate) fn step<'a>(&mut self, layers: impl IntoIterator<Item = &'a mut Layer>) {
        self.t += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        let mut off = 0;
        for layer in layers {
            for (p, g) in layer.params_and_grads() {
                for (j, (pj, gj)) in p.iter_mut().zip(g).enumerate() {
                    let m = &mut self.m[off + j];
                    let v = &mut self.v[off + j];
                    *m = c.beta1 * *m + (1.0 - c.beta1) * gj;
                    *v = c.beta2 * *v + (1.0 - c.beta2) * gj * gj;
                    *pj -= c.learning_rate * (*m / bc1) / ((*v / bc2).sqrt() + c.epsilon);
                }
                off += p.len();
            }
        }
    }
}

/// Short content hash identifying a trained encoder and head pair.
pub fn model_fingerprint(ae: &Autoencoder, head: &ClassifierHead) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(ae.to_json());
    h.update(head.to_json());
    h.finalize()
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Deterministic `(train, validation)` index split.
pub fn split_indices(len: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((len as f64) * train_fraction).round() as usize;
    let cut = cut.clamp(
        usize::from(len > 0),
        len.saturating_sub(usize::from(len > 1)),
    );
    let val = idx.split_off(cut);
    (idx, val)
}

/// Stacks windows as `(batch * n, 5)`, one row per sample position.
pub fn stack_windows<'a>(
    windows: impl IntoIterator<Item = &'a FeatureWindow>,
    n: usize,
) -> Result<Array2<f64>, NeuralError> {
    let mut data = Vec::new();
    let mut rows = 0;
    for w in windows {
        if w.len() != n {
            return Err(NeuralError::Shape {
                expected: n,
                got: w.len(),
            });
        }
        for t in 0..n {
            for c in 0..CHANNELS {
                data.push(w.get(c, t));
            }
        }
        rows += n;
    }
    Ok(Array2::from_shape_vec((rows, CHANNELS), data).expect("row count"))
}
