use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::autoencoder::check_header;
use super::layers::{Layer, LayerKind};
use super::{
    split_indices, Adam, Autoencoder, Confidence, NeuralError, TrainConfig, LATENT, MODEL_VERSION,
};
use crate::features::{FeatureWindow, Manoeuvre};

/// One dense layer from the latent features to three logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHead {
    layer: Layer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochAccuracy {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub history: Vec<EpochAccuracy>,
    pub best_epoch: usize,
    /// Validation recall of left, right, straight.
    pub per_class: [f64; 3],
    pub average: f64,
    /// `confusion[truth][predicted]` on the validation split.
    pub confusion: [[usize; 3]; 3],
    pub train_size: usize,
    pub val_size: usize,
}

#[derive(Serialize, Deserialize)]
struct HeadFile {
    version: u32,
    kind: String,
    head: ClassifierHead,
}

impl ClassifierHead {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            layer: Layer::new(LayerKind::Dense, LATENT, 3, 1, false, &mut rng),
        }
    }

    pub fn zeros() -> Self {
        let mut h = Self::new(0);
        h.layer.weight_mut().fill(0.0);
        h.layer.bias_mut().fill(0.0);
        h
    }

    pub fn layer(&self) -> &Layer {
        &self.layer
    }

    pub fn layer_mut(&mut self) -> &mut Layer {
        &mut self.layer
    }

    pub fn logits(&self, z: &[f64; LATENT]) -> [f64; 3] {
        let w = self.layer.weight();
        let b = self.layer.bias();
        let mut out = [0.0; 3];
        for (j, o) in out.iter_mut().enumerate() {
            *o = b[j] + (0..LATENT).map(|i| z[i] * w[[i, j]]).sum::<f64>();
        }
        out
    }

    pub fn classify(&self, z: &[f64; LATENT]) -> Confidence {
        Confidence::from_logits(self.logits(z))
    }

    /// Mean cross-entropy over `(rows, 5)` latents, gradients kept in the layer.
    pub fn loss_and_grad(&mut self, z: &Array2<f64>, labels: &[usize]) -> f64 {
        let logits = self.layer.forward_train(z.clone(), z.nrows());
        let (loss, grad) = cross_entropy(&logits, labels);
        self.layer.backward(grad, false);
        loss
    }

    pub fn param_count(&self) -> usize {
        self.layer.param_count()
    }

    pub fn param(&self, i: usize) -> f64 {
        self.layer.param(i)
    }

    pub fn set_param(&mut self, i: usize, v: f64) {
        self.layer.set_param(i, v)
    }

    pub fn grad(&self, i: usize) -> f64 {
        self.layer.grad(i)
    }

    pub fn to_json(&self) -> String {
        let file = HeadFile {
            version: MODEL_VERSION,
            kind: "classifier".into(),
            head: self.clone(),
        };
        serde_json::to_string(&file).expect("serialisable model")
    }

    pub fn from_json(text: &str) -> Result<Self, NeuralError> {
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| NeuralError::Corrupt(e.to_string()))?;
        check_header(&v, "classifier")?;
        let file: HeadFile =
            serde_json::from_value(v).map_err(|e| NeuralError::Corrupt(e.to_string()))?;
        let l = &file.head.layer;
        if l.kind() != LayerKind::Dense || l.inputs() != LATENT || l.outputs() != 3 || !l.shape_ok()
        {
            return Err(NeuralError::Corrupt(
                "classifier must map 5 latents to 3 logits".into(),
            ));
        }
        Ok(file.head)
    }

    pub fn save(&self, path: &Path) -> Result<(), NeuralError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NeuralError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// Mean softmax cross-entropy and its gradient w.r.t. the logits.
fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let rows = logits.nrows();
    let mut grad = Array2::zeros(logits.dim());
    let mut loss = 0.0;
    for (r, row) in logits.axis_iter(Axis(0)).enumerate() {
        let p = Confidence::from_logits([row[0], row[1], row[2]]).0;
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
        loss += lse - row[labels[r]];
        for j in 0..3 {
            grad[[r, j]] = (p[j] - f64::from(u8::from(j == labels[r]))) / rows as f64;
        }
    }
    (loss / rows as f64, grad)
}

fn evaluate(head: &ClassifierHead, z: &Array2<f64>, labels: &[usize]) -> (f64, [[usize; 3]; 3]) {
    let logits = head.layer.forward(z.clone(), z.nrows());
    let (loss, _) = cross_entropy(&logits, labels);
    let mut confusion = [[0usize; 3]; 3];
    for (r, row) in logits.axis_iter(Axis(0)).enumerate() {
        let pred = Confidence::from_logits([row[0], row[1], row[2]])
            .argmax()
            .index();
        confusion[labels[r]][pred] += 1;
    }
    (loss, confusion)
}

fn recall(confusion: &[[usize; 3]; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (c, row) in confusion.iter().enumerate() {
        let total: usize = row.iter().sum();
        out[c] = if total == 0 {
            0.0
        } else {
            row[c] as f64 / total as f64
        };
    }
    out
}

fn select(z: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    z.select(Axis(0), idx)
}

/// Trains the head on fixed latents; keeps the epoch with the lowest
/// validation cross-entropy.
pub fn train_head(
    latents: &Array2<f64>,
    labels: &[Manoeuvre],
    train: &TrainConfig,
) -> Result<(ClassifierHead, ClassifierReport), NeuralError> {
    if labels.is_empty() {
        return Err(NeuralError::EmptyDataset);
    }
    let y: Vec<usize> = labels.iter().map(|m| m.index()).collect();
    let (train_idx, mut val_idx) = split_indices(labels.len(), train.train_fraction, train.seed);
    if val_idx.is_empty() {
        val_idx = train_idx.clone();
    }
    let z_val = select(latents, &val_idx);
    let y_val: Vec<usize> = val_idx.iter().map(|&i| y[i]).collect();

    let mut head = ClassifierHead::new(train.seed);
    let mut adam = Adam::new(*train, head.param_count());
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed ^ 0xc1a55);
    let mut order = train_idx.clone();
    let mut best = (head.clone(), 0usize, f64::INFINITY);
    let mut history = Vec::with_capacity(train.epochs);

    for epoch in 1..=train.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(train.batch_size.max(1)) {
            let zb = select(latents, batch);
            let yb: Vec<usize> = batch.iter().map(|&i| y[i]).collect();
            let loss = head.loss_and_grad(&zb, &yb);
            if !loss.is_finite() {
                return Err(NeuralError::Diverged { epoch, loss });
            }
            total += loss * batch.len() as f64;
            adam.step(std::iter::once(&mut head.layer));
        }
        let (val_loss, confusion) = evaluate(&head, &z_val, &y_val);
        history.push(EpochAccuracy {
            epoch,
            train_loss: total / train_idx.len() as f64,
            val_loss,
            val_accuracy: recall(&confusion),
        });
        if val_loss < best.2 {
            best = (head.clone(), epoch, val_loss);
        }
    }
    let (head, best_epoch, _) = best;
    let (_, confusion) = evaluate(&head, &z_val, &y_val);
    let per_class = recall(&confusion);
    Ok((
        head,
        ClassifierReport {
            history,
            best_epoch,
            per_class,
            average: per_class.iter().sum::<f64>() / 3.0,
            confusion,
            train_size: train_idx.len(),
            val_size: val_idx.len(),
        },
    ))
}

/// Encodes the windows with the frozen encoder, then trains the head.
pub fn train_classifier(
    encoder: &Autoencoder,
    data: &[(FeatureWindow, Manoeuvre)],
    train: &TrainConfig,
) -> Result<(ClassifierHead, ClassifierReport), NeuralError> {
    let windows: Vec<FeatureWindow> = data.iter().map(|(w, _)| w.clone()).collect();
    let labels: Vec<Manoeuvre> = data.iter().map(|(_, m)| *m).collect();
    let z = encoder.encode_batch(&windows)?;
    train_head(&z, &labels, train)
}
