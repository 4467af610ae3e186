#![allow(clippy::needless_range_loop)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sharedwalk::features::{FeatureWindow, Manoeuvre, CHANNELS};
use sharedwalk::neural::{
    stack_windows, train_autoencoder, train_head, AeConfig, Autoencoder, ClassifierHead,
    Confidence, LayerKind, Network, NeuralError, TrainConfig, LATENT,
};

fn random_window(rng: &mut ChaCha8Rng, n: usize) -> FeatureWindow {
    FeatureWindow::from_rows(
        n,
        (0..CHANNELS * n)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect(),
    )
}

/// Encoder oracle: plain loops over `x[channel][t]`, independent of the batched code.
fn naive_forward(net: &Network, window: &FeatureWindow) -> Vec<f64> {
    let n = window.len();
    let mut seq: Vec<Vec<f64>> = (0..CHANNELS).map(|c| window.row(c).to_vec()).collect();
    let mut flat: Vec<f64> = Vec::new();
    for layer in net.layers() {
        let w = layer.weight();
        let b = layer.bias();
        let act = |v: f64| if layer.relu() { v.max(0.0) } else { v };
        match layer.kind() {
            LayerKind::Conv => {
                let k = layer.kernel();
                let pad = (k / 2) as isize;
                let mut out = vec![vec![0.0; n]; layer.outputs()];
                for o in 0..layer.outputs() {
                    for t in 0..n {
                        let mut acc = b[o];
                        for i in 0..layer.inputs() {
                            for kk in 0..k {
                                let src = t as isize + kk as isize - pad;
                                if src >= 0 && (src as usize) < n {
                                    acc += w[[i * k + kk, o]] * seq[i][src as usize];
                                }
                            }
                        }
                        out[o][t] = act(acc);
                    }
                }
                seq = out;
            }
            LayerKind::ConvTranspose => unreachable!("encoder has no transposed convolutions"),
            LayerKind::Dense => {
                if flat.is_empty() {
                    // flatten position-major: index t * channels + c
                    let ch = seq.len();
                    flat = (0..n * ch).map(|j| seq[j % ch][j / ch]).collect();
                }
                flat = (0..layer.outputs())
                    .map(|o| {
                        act(b[o]
                            + (0..layer.inputs())
                                .map(|i| w[[i, o]] * flat[i])
                                .sum::<f64>())
                    })
                    .collect();
                seq.clear();
            }
        }
    }
    flat
}

/// Decoder oracle: a latent vector in, position-major `(t, channel)` values out.
fn naive_decode(net: &Network, z: &[f64], n: usize) -> Vec<f64> {
    let mut flat = z.to_vec();
    let mut rest = Vec::new();
    for (i, layer) in net.layers().iter().enumerate() {
        if layer.kind() != LayerKind::Dense {
            rest = net.layers()[i..].to_vec();
            break;
        }
        let (w, b) = (layer.weight(), layer.bias());
        flat = (0..layer.outputs())
            .map(|o| {
                let v = b[o]
                    + (0..layer.inputs())
                        .map(|i| w[[i, o]] * flat[i])
                        .sum::<f64>();
                if layer.relu() {
                    v.max(0.0)
                } else {
                    v
                }
            })
            .collect();
    }
    let ch = rest[0].inputs();
    let mut seq: Vec<Vec<f64>> = (0..ch)
        .map(|c| (0..n).map(|t| flat[t * ch + c]).collect())
        .collect();
    for layer in &rest {
        let (w, b, k) = (layer.weight(), layer.bias(), layer.kernel());
        let pad = (k / 2) as isize;
        let mut out: Vec<Vec<f64>> = (0..layer.outputs()).map(|o| vec![b[o]; n]).collect();
        for i in 0..layer.inputs() {
            for t in 0..n {
                for o in 0..layer.outputs() {
                    for kk in 0..k {
                        let dst = t as isize + kk as isize - pad;
                        if dst >= 0 && (dst as usize) < n {
                            out[o][dst as usize] += w[[i, o * k + kk]] * seq[i][t];
                        }
                    }
                }
            }
        }
        seq = out
            .into_iter()
            .map(|r| {
                r.into_iter()
                    .map(|v| if layer.relu() { v.max(0.0) } else { v })
                    .collect()
            })
            .collect();
    }
    (0..n * CHANNELS)
        .map(|j| seq[j % CHANNELS][j / CHANNELS])
        .collect()
}

#[test]
fn zero_model_gives_zero_latent() {
    let mut m = Autoencoder::new(AeConfig::default(), 1);
    for l in m.encoder_mut().layers_mut() {
        l.weight_mut().fill(0.0);
        l.bias_mut().fill(0.0);
    }
    let z = m.encode(&FeatureWindow::zeros(12)).unwrap();
    assert_eq!(z, [0.0; LATENT]);
}

#[test]
fn forward_matches_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut m = Autoencoder::new(AeConfig::default(), 4);
    // non-zero biases so they are exercised
    for l in m.encoder_mut().layers_mut() {
        l.bias_mut().mapv_inplace(|_| rng.gen_range(-0.1..0.1));
    }
    for l in m.decoder_mut().layers_mut() {
        l.bias_mut().mapv_inplace(|_| rng.gen_range(-0.1..0.1));
    }
    for _ in 0..100 {
        let w = random_window(&mut rng, 12);
        let z = m.encode(&w).unwrap();
        let oracle = naive_forward(m.encoder(), &w);
        for (a, b) in z.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }
    // decoder too: naive encoder output pushed through the naive decoder
    let w = random_window(&mut rng, 12);
    let rec = m.reconstruct(&w).unwrap();
    let z = naive_forward(m.encoder(), &w);
    let oracle = naive_decode(m.decoder(), &z, 12);
    for t in 0..12 {
        for c in 0..CHANNELS {
            assert!((oracle[t * CHANNELS + c] - rec.get(c, t)).abs() < 1e-6);
        }
    }
}

#[test]
fn linear_configuration_is_homogeneous() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut m = Autoencoder::new(AeConfig::default(), 9);
    for l in m.encoder_mut().layers_mut() {
        l.bias_mut().fill(0.0);
        l.set_relu(false);
    }
    let w = random_window(&mut rng, 12);
    let w2 = FeatureWindow::from_rows(12, w.as_slice().iter().map(|v| 2.0 * v).collect());
    let (a, b) = (m.encode(&w).unwrap(), m.encode(&w2).unwrap());
    for i in 0..LATENT {
        assert!((b[i] - 2.0 * a[i]).abs() < 1e-12 * (1.0 + a[i].abs()));
    }
}

#[test]
fn shape_mismatch() {
    let m = Autoencoder::new(AeConfig::default(), 0);
    assert!(matches!(
        m.encode(&FeatureWindow::zeros(10)),
        Err(NeuralError::Shape {
            expected: 12,
            got: 10
        })
    ));
}

#[test]
fn classifier_arithmetic() {
    let head = ClassifierHead::zeros();
    assert_eq!(
        head.classify(&[0.3, -1.0, 2.0, 0.0, 5.0]),
        Confidence::uniform()
    );
    assert_eq!(head.param_count(), 18);

    let mut head = ClassifierHead::new(3);
    let z = [0.5, -0.25, 1.0, 2.0, -1.5];
    let w = head.layer().weight().clone();
    let b = head.layer().bias().clone();
    let logits: Vec<f64> = (0..3)
        .map(|j| b[j] + (0..5).map(|i| z[i] * w[[i, j]]).sum::<f64>())
        .collect();
    let e: Vec<f64> = logits.iter().map(|l| l.exp()).collect();
    let s: f64 = e.iter().sum();
    let c = head.classify(&z);
    for j in 0..3 {
        assert!((c.0[j] - e[j] / s).abs() < 1e-14);
    }
    // shifting every bias by the same constant leaves the output unchanged
    head.layer_mut().bias_mut().mapv_inplace(|v| v + 7.25);
    let shifted = head.classify(&z);
    for j in 0..3 {
        assert!((shifted.0[j] - c.0[j]).abs() < 1e-14);
    }
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

#[test]
fn autoencoder_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut m = Autoencoder::new(AeConfig::default(), 5);
    let windows: Vec<FeatureWindow> = (0..4).map(|_| random_window(&mut rng, 12)).collect();
    let x = stack_windows(&windows, 12).unwrap();
    m.loss_and_grad(&x, 4);
    let total = m.param_count();
    let mut checked = 0;
    while checked < 20 {
        let i = rng.gen_range(0..total);
        let analytic = m.grad(i);
        let p = m.param(i);
        let h = 1e-5;
        m.set_param(i, p + h);
        let up = m.loss(&x, 4);
        m.set_param(i, p - h);
        let down = m.loss(&x, 4);
        m.set_param(i, p);
        let numeric = (up - down) / (2.0 * h);
        if analytic.abs() < 1e-9 && numeric.abs() < 1e-9 {
            continue;
        }
        assert!(
            relative(analytic, numeric) < 1e-4,
            "param {i}: {analytic} vs {numeric}"
        );
        checked += 1;
    }
}

#[test]
fn classifier_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut head = ClassifierHead::new(1);
    let z = Array2::from_shape_fn((16, LATENT), |_| rng.gen_range(-2.0..2.0));
    let labels: Vec<usize> = (0..16).map(|i| i % 3).collect();
    head.loss_and_grad(&z, &labels);
    let grads: Vec<f64> = (0..head.param_count()).map(|i| head.grad(i)).collect();
    for (i, analytic) in grads.into_iter().enumerate() {
        let p = head.param(i);
        let h = 1e-6;
        head.set_param(i, p + h);
        let up = head.loss_and_grad(&z, &labels);
        head.set_param(i, p - h);
        let down = head.loss_and_grad(&z, &labels);
        head.set_param(i, p);
        let numeric = (up - down) / (2.0 * h);
        assert!(
            relative(analytic, numeric) < 1e-4,
            "param {i}: {analytic} vs {numeric}"
        );
    }
}

#[test]
fn memorises_a_single_window() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = random_window(&mut rng, 12);
    let data = vec![w; 640];
    let (_, report) =
        train_autoencoder(&data, AeConfig::default(), &TrainConfig::default(), |_| {}).unwrap();
    let worst = report.channel_rmse.iter().copied().fold(0.0, f64::max);
    assert!(worst < 1e-3, "{:?}", report.channel_rmse);
}

#[test]
fn training_is_deterministic_and_keeps_best() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let data: Vec<FeatureWindow> = (0..200).map(|_| random_window(&mut rng, 12)).collect();
    let cfg = TrainConfig {
        epochs: 8,
        ..TrainConfig::default()
    };
    let small = AeConfig {
        conv_channels: [4, 4, 4],
        hidden: [8, 8],
        ..AeConfig::default()
    };
    let (m1, r1) = train_autoencoder(&data, small, &cfg, |_| {}).unwrap();
    let (m2, r2) = train_autoencoder(&data, small, &cfg, |_| {}).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(m1, m2);
    let best = r1
        .history
        .iter()
        .map(|e| e.val_loss)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(best, r1.best_val_loss);
    assert_eq!(r1.history[r1.best_epoch - 1].val_loss, best);
    assert_eq!((r1.train_size, r1.val_size), (160, 40));
}

#[test]
fn separable_latents_are_learned() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut z = Array2::zeros((300, LATENT));
    let mut labels = Vec::new();
    for r in 0..300 {
        let m = Manoeuvre::ALL[r % 3];
        for c in 0..LATENT {
            z[[r, c]] = rng.gen_range(-0.3..0.3);
        }
        z[[r, m.index()]] += 3.0;
        labels.push(m);
    }
    let (_, report) = train_head(
        &z,
        &labels,
        &TrainConfig {
            epochs: 100,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    assert_eq!(report.per_class, [1.0; 3]);
    assert_eq!(report.average, 1.0);
}

#[test]
fn model_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let m = Autoencoder::new(AeConfig::default(), 77);
    let head = ClassifierHead::new(78);
    let (pm, ph) = (dir.path().join("ae.json"), dir.path().join("head.json"));
    m.save(&pm).unwrap();
    head.save(&ph).unwrap();
    let (m2, head2) = (
        Autoencoder::load(&pm).unwrap(),
        ClassifierHead::load(&ph).unwrap(),
    );
    assert_eq!(m2, m);
    assert_eq!(head2, head);
    let windows: Vec<FeatureWindow> = (0..50).map(|_| random_window(&mut rng, 12)).collect();
    for w in &windows {
        let (a, b) = (m.encode(w).unwrap(), m2.encode(w).unwrap());
        assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
        assert_eq!(head.classify(&a), head2.classify(&b));
    }
    assert_eq!(
        m.channel_rmse(&windows).unwrap(),
        m2.channel_rmse(&windows).unwrap()
    );

    let text = std::fs::read_to_string(&pm).unwrap();
    std::fs::write(&pm, &text[..text.len() / 2]).unwrap();
    assert!(matches!(
        Autoencoder::load(&pm),
        Err(NeuralError::Corrupt(_))
    ));
    std::fs::write(&pm, text.replacen("\"version\":1", "\"version\":2", 1)).unwrap();
    assert!(matches!(
        Autoencoder::load(&pm),
        Err(NeuralError::Version { found: 2, .. })
    ));
    assert!(matches!(
        ClassifierHead::from_json(&m.to_json()),
        Err(NeuralError::Corrupt(_))
    ));
}
