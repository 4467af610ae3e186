use std::fs;
use std::path::Path;

use ndarray::{s, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Layer, LayerKind, Network};
use super::{split_indices, stack_windows, Adam, NeuralError, TrainConfig, LATENT, MODEL_VERSION};
use crate::features::{FeatureWindow, CHANNELS};

const EVAL_CHUNK: usize = 1024;

/// Three convolutions then three dense layers; the decoder mirrors them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeConfig {
    pub window: usize,
    pub conv_channels: [usize; 3],
    pub kernel: usize,
    pub hidden: [usize; 2],
}

impl Default for AeConfig {
    fn default() -> Self {
        Self {
            window: 12,
            conv_channels: [16, 32, 32],
            kernel: 3,
            hidden: [64, 32],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Autoencoder {
    config: AeConfig,
    encoder: Network,
    decoder: Network,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeReport {
    pub history: Vec<EpochLoss>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Validation RMSE of x, y, cos θ, sin θ, κ at the kept checkpoint.
    pub channel_rmse: [f64; CHANNELS],
    pub train_size: usize,
    pub val_size: usize,
}

#[derive(Serialize, Deserialize)]
struct AeFile {
    version: u32,
    kind: String,
    model: Autoencoder,
}

impl Autoencoder {
    pub fn new(config: AeConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [c1, c2, c3] = config.conv_channels;
        let [h1, h2] = config.hidden;
        let (k, n) = (config.kernel, config.window);
        let flat = c3 * n;
        let encoder = Network::new(vec![
            Layer::new(LayerKind::Conv, CHANNELS, c1, k, true, &mut rng),
            Layer::new(LayerKind::Conv, c1, c2, k, true, &mut rng),
            Layer::new(LayerKind::Conv, c2, c3, k, true, &mut rng),
            Layer::new(LayerKind::Dense, flat, h1, 1, true, &mut rng),
            Layer::new(LayerKind::Dense, h1, h2, 1, true, &mut rng),
            Layer::new(LayerKind::Dense, h2, LATENT, 1, false, &mut rng),
        ]);
        let decoder = Network::new(vec![
            Layer::new(LayerKind::Dense, LATENT, h2, 1, true, &mut rng),
            Layer::new(LayerKind::Dense, h2, h1, 1, true, &mut rng),
            Layer::new(LayerKind::Dense, h1, flat, 1, true, &mut rng),
            Layer::new(LayerKind::ConvTranspose, c3, c2, k, true, &mut rng),
            Layer::new(LayerKind::ConvTranspose, c2, c1, k, true, &mut rng),
            Layer::new(LayerKind::ConvTranspose, c1, CHANNELS, k, false, &mut rng),
        ]);
        Self {
            config,
            encoder,
            decoder,
        }
    }

    pub fn config(&self) -> AeConfig {
        self.config
    }

    pub fn encoder(&self) -> &Network {
        &self.encoder
    }

    pub fn encoder_mut(&mut self) -> &mut Network {
        &mut self.encoder
    }

    pub fn decoder(&self) -> &Network {
        &self.decoder
    }

    pub fn decoder_mut(&mut self) -> &mut Network {
        &mut self.decoder
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoder.param_count()
    }

    pub fn encode(&self, w: &FeatureWindow) -> Result<[f64; LATENT], NeuralError> {
        let z = self.encode_batch(std::slice::from_ref(w))?;
        let mut out = [0.0; LATENT];
        out.copy_from_slice(z.row(0).as_slice().expect("standard layout"));
        Ok(out)
    }

    /// Latents as `(windows, 5)`.
    pub fn encode_batch(&self, windows: &[FeatureWindow]) -> Result<Array2<f64>, NeuralError> {
        let n = self.config.window;
        let mut out = Array2::zeros((windows.len(), LATENT));
        for (ci, chunk) in windows.chunks(EVAL_CHUNK).enumerate() {
            let x = stack_windows(chunk, n)?;
            let z = self.encoder.forward(x, chunk.len());
            out.slice_mut(s![ci * EVAL_CHUNK..ci * EVAL_CHUNK + chunk.len(), ..])
                .assign(&z);
        }
        Ok(out)
    }

    pub fn reconstruct(&self, w: &FeatureWindow) -> Result<FeatureWindow, NeuralError> {
        let n = self.config.window;
        let x = stack_windows(std::slice::from_ref(w), n)?;
        let y = self.decoder.forward(self.encoder.forward(x, 1), 1);
        let y = y.into_shape((n, CHANNELS)).expect("decoder output");
        let mut data = vec![0.0; CHANNELS * n];
        for t in 0..n {
            for c in 0..CHANNELS {
                data[c * n + t] = y[[t, c]];
            }
        }
        Ok(FeatureWindow::from_rows(n, data))
    }

    /// Mean squared reconstruction error of a stacked batch, with gradients
    /// left in the layers.
    pub fn loss_and_grad(&mut self, x: &Array2<f64>, batch: usize) -> f64 {
        let z = self.encoder.forward_train(x.clone(), batch);
        let y = self.decoder.forward_train(z, batch);
        let y = y.into_shape(x.dim()).expect("decoder output");
        let diff = &y - x;
        let count = diff.len() as f64;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / count;
        let dy = diff * (2.0 / count);
        let dz = self.decoder.backward(dy, true).expect("input gradient");
        self.encoder.backward(dz, false);
        loss
    }

    /// Loss only (no gradients).
    pub fn loss(&self, x: &Array2<f64>, batch: usize) -> f64 {
        let y = self
            .decoder
            .forward(self.encoder.forward(x.clone(), batch), batch);
        let y = y.into_shape(x.dim()).expect("decoder output");
        (&y - x).iter().map(|d| d * d).sum::<f64>() / x.len() as f64
    }

    /// Per-channel sums of squared error and the number of entries per channel.
    fn squared_errors(
        &self,
        windows: &[FeatureWindow],
    ) -> Result<([f64; CHANNELS], usize), NeuralError> {
        let n = self.config.window;
        let mut sums = [0.0; CHANNELS];
        for chunk in windows.chunks(EVAL_CHUNK) {
            let x = stack_windows(chunk, n)?;
            let y = self
                .decoder
                .forward(self.encoder.forward(x.clone(), chunk.len()), chunk.len());
            let y = y.into_shape(x.dim()).expect("decoder output");
            let d = &y - &x;
            for (c, sum) in sums.iter_mut().enumerate() {
                *sum += d.index_axis(Axis(1), c).iter().map(|v| v * v).sum::<f64>();
            }
        }
        Ok((sums, windows.len() * n))
    }

    pub fn mean_loss(&self, windows: &[FeatureWindow]) -> Result<f64, NeuralError> {
        let (sums, count) = self.squared_errors(windows)?;
        Ok(sums.iter().sum::<f64>() / (count * CHANNELS).max(1) as f64)
    }

    pub fn channel_rmse(&self, windows: &[FeatureWindow]) -> Result<[f64; CHANNELS], NeuralError> {
        let (sums, count) = self.squared_errors(windows)?;
        Ok(sums.map(|s| (s / count.max(1) as f64).sqrt()))
    }

    pub fn param(&self, i: usize) -> f64 {
        let ne = self.encoder.param_count();
        if i < ne {
            self.encoder.param(i)
        } else {
            self.decoder.param(i - ne)
        }
    }

    pub fn set_param(&mut self, i: usize, v: f64) {
        let ne = self.encoder.param_count();
        if i < ne {
            self.encoder.set_param(i, v)
        } else {
            self.decoder.set_param(i - ne, v)
        }
    }

    pub fn grad(&self, i: usize) -> f64 {
        let ne = self.encoder.param_count();
        if i < ne {
            self.encoder.grad(i)
        } else {
            self.decoder.grad(i - ne)
        }
    }

    fn check(&self) -> Result<(), NeuralError> {
        let ok = self.encoder.layers.len() == 6
            && self.decoder.layers.len() == 6
            && self
                .encoder
                .layers
                .iter()
                .chain(&self.decoder.layers)
                .all(Layer::shape_ok)
            && self.encoder.layers[5].outputs() == LATENT
            && self.encoder.layers[0].inputs() == CHANNELS
            && self.decoder.layers[5].outputs() == CHANNELS
            && self.encoder.layers[3].inputs() == self.config.conv_channels[2] * self.config.window;
        if ok {
            Ok(())
        } else {
            Err(NeuralError::Corrupt(
                "layer shapes do not match the configuration".into(),
            ))
        }
    }

    pub fn to_json(&self) -> String {
        let file = AeFile {
            version: MODEL_VERSION,
            kind: "autoencoder".into(),
            model: self.clone(),
        };
        serde_json::to_string(&file).expect("serialisable model")
    }

    pub fn from_json(text: &str) -> Result<Self, NeuralError> {
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| NeuralError::Corrupt(e.to_string()))?;
        check_header(&v, "autoencoder")?;
        let file: AeFile =
            serde_json::from_value(v).map_err(|e| NeuralError::Corrupt(e.to_string()))?;
        file.model.check()?;
        Ok(file.model)
    }

    pub fn save(&self, path: &Path) -> Result<(), NeuralError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NeuralError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

pub(crate) fn check_header(v: &serde_json::Value, kind: &str) -> Result<(), NeuralError> {
    let found = v
        .get("version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| NeuralError::Corrupt("missing version".into()))? as u32;
    if found != MODEL_VERSION {
        return Err(NeuralError::Version {
            found,
            expected: MODEL_VERSION,
        });
    }
    match v.get("kind").and_then(serde_json::Value::as_str) {
        Some(k) if k == kind => Ok(()),
        other => Err(NeuralError::Corrupt(format!(
            "expected a {kind} file, found {other:?}"
        ))),
    }
}

/// Minimises mean squared reconstruction error; keeps the epoch with the
/// lowest validation loss.
pub fn train_autoencoder(
    windows: &[FeatureWindow],
    config: AeConfig,
    train: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLoss),
) -> Result<(Autoencoder, AeReport), NeuralError> {
    if windows.is_empty() {
        return Err(NeuralError::EmptyDataset);
    }
    let n = config.window;
    let (train_idx, val_idx) = split_indices(windows.len(), train.train_fraction, train.seed);
    let train_set: Vec<FeatureWindow> = train_idx.iter().map(|&i| windows[i].clone()).collect();
    let mut val_set: Vec<FeatureWindow> = val_idx.iter().map(|&i| windows[i].clone()).collect();
    if val_set.is_empty() {
        val_set = train_set.clone();
    }
    let x_train = stack_windows(&train_set, n)?;

    let mut model = Autoencoder::new(config, train.seed);
    let mut adam = Adam::new(*train, model.param_count());
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed ^ 0x5eed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best = (model.clone(), 0usize, f64::INFINITY);
    let mut history = Vec::with_capacity(train.epochs);
    let row = n * CHANNELS;

    for epoch in 1..=train.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(train.batch_size.max(1)) {
            let mut data = Vec::with_capacity(batch.len() * row);
            for &i in batch {
                data.extend_from_slice(
                    &x_train.as_slice().expect("standard layout")[i * row..(i + 1) * row],
                );
            }
            let x = Array2::from_shape_vec((batch.len() * n, CHANNELS), data).expect("batch shape");
            let loss = model.loss_and_grad(&x, batch.len());
            if !loss.is_finite() {
                return Err(NeuralError::Diverged { epoch, loss });
            }
            total += loss * batch.len() as f64;
            adam.step(
                model
                    .encoder
                    .layers
                    .iter_mut()
                    .chain(model.decoder.layers.iter_mut()),
            );
        }
        let train_loss = total / train_set.len() as f64;
        let val_loss = model.mean_loss(&val_set)?;
        if !val_loss.is_finite() {
            return Err(NeuralError::Diverged {
                epoch,
                loss: val_loss,
            });
        }
        let rec = EpochLoss {
            epoch,
            train_loss,
            val_loss,
        };
        on_epoch(&rec);
        history.push(rec);
        if val_loss < best.2 {
            best = (model.clone(), epoch, val_loss);
        }
    }
    let (model, best_epoch, best_val_loss) = best;
    let channel_rmse = model.channel_rmse(&val_set)?;
    Ok((
        model,
        AeReport {
            history,
            best_epoch,
            best_val_loss,
            channel_rmse,
            train_size: train_set.len(),
            val_size: val_idx.len(),
        },
    ))
}
