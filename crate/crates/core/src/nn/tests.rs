use super::train::zero_velocity;
use super::*;
use crate::error::Error;
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_input(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor { shape: shape.to_vec(), data: (0..n).map(|_| r.gen_range(-1.0..1.0)).collect() }
}

fn loss_with(net: &Network, x: &Tensor, label: usize, mask_seed: u64) -> f64 {
    let mut r = rng(mask_seed);
    let (_, logits) = forward_train(net, x, &mut r).unwrap();
    softmax_cross_entropy(&logits, label).unwrap().0
}

/// Central-difference check of every parameter and input coordinate.
/// Coordinates that fail at the primary epsilon are re-tried at a smaller
/// one: a perturbation of 1e-3 can step across a pool-argmax or PReLU kink,
/// where the loss is locally non-smooth and the comparison is meaningless.
fn grad_check(config: NetworkConfig, seed: u64) {
    let mut r = rng(seed);
    let mut net = Network::build(config, &mut r).unwrap();
    let x = random_input(&net.config.input_shape.clone(), &mut r);
    let label = seed as usize % net.config.n_classes;
    let mask_seed = seed ^ 0x5EED;

    let mut mr = rng(mask_seed);
    let (caches, logits) = forward_train(&net, &x, &mut mr).unwrap();
    let (_, dlogits) = softmax_cross_entropy(&logits, label).unwrap();
    let (dx, grads) = backward(&net, &caches, &dlogits).unwrap();

    for li in 0..net.layers.len() {
        for pi in 0..net.layers[li].params.len() {
            for k in 0..net.layers[li].params[pi].numel() {
                let orig = net.layers[li].params[pi].data[k];
                let analytic = grads[li][pi].data[k];
                let mut numeric = |d: f64| {
                    net.layers[li].params[pi].data[k] = orig + d;
                    let l = loss_with(&net, &x, label, mask_seed);
                    net.layers[li].params[pi].data[k] = orig;
                    l
                };
                // Closure borrow rules: evaluate both sides here.
                for eps in [1e-3_f64, 1e-5] {
                    let n = (numeric(eps) - numeric(-eps)) / (2.0 * eps);
                    let rel = (analytic - n).abs() / analytic.abs().max(n.abs()).max(1.0);
                    if rel < 1e-4 {
                        break;
                    }
                    assert!(
                        eps != 1e-5,
                        "seed {seed} layer {li} param {pi}[{k}]: analytic {analytic} vs numeric {n}"
                    );
                }
            }
        }
    }
    for k in 0..x.numel() {
        let mut xp = x.clone();
        let analytic = dx.data[k];
        for eps in [1e-3_f64, 1e-5] {
            xp.data[k] = x.data[k] + eps;
            let lp = loss_with(&net, &xp, label, mask_seed);
            xp.data[k] = x.data[k] - eps;
            let lm = loss_with(&net, &xp, label, mask_seed);
            xp.data[k] = x.data[k];
            let n = (lp - lm) / (2.0 * eps);
            let rel = (analytic - n).abs() / analytic.abs().max(n.abs()).max(1.0);
            if rel < 1e-4 {
                break;
            }
            assert!(eps != 1e-5, "seed {seed} input[{k}]: analytic {analytic} vs numeric {n}");
        }
    }
}

fn net_3d_valid() -> NetworkConfig {
    use LayerSpec::*;
    NetworkConfig {
        input_shape: vec![4, 4, 2, 5],
        layers: vec![
            Conv3D { filter: (2, 2, 2), stride: (1, 1, 1), depth: 2, padding: Padding::Valid },
            PReLU,
            MaxPool3D { window: (2, 2, 2), stride: (2, 2, 2) },
            FullyConnected { out: 3 },
        ],
        n_classes: 3,
        weight_decay: 0.0,
    }
}

fn net_3d_same() -> NetworkConfig {
    use LayerSpec::*;
    NetworkConfig {
        input_shape: vec![4, 4, 2, 6],
        layers: vec![
            Conv3D { filter: (3, 3, 3), stride: (1, 1, 2), depth: 2, padding: Padding::Same },
            PReLU,
            FullyConnected { out: 2 },
        ],
        n_classes: 2,
        weight_decay: 0.0,
    }
}

fn net_2d_valid() -> NetworkConfig {
    use LayerSpec::*;
    NetworkConfig {
        input_shape: vec![6, 6, 2],
        layers: vec![
            Conv2D { filter: (3, 3), stride: (1, 1), depth: 3, padding: Padding::Valid },
            PReLU,
            MaxPool2D { window: (2, 2), stride: (2, 2) },
            FullyConnected { out: 3 },
        ],
        n_classes: 3,
        weight_decay: 0.0,
    }
}

fn net_2d_same_dropout() -> NetworkConfig {
    use LayerSpec::*;
    NetworkConfig {
        input_shape: vec![5, 5, 2],
        layers: vec![
            Conv2D { filter: (3, 3), stride: (2, 2), depth: 2, padding: Padding::Same },
            PReLU,
            Dropout { ratio: 0.3 },
            FullyConnected { out: 2 },
        ],
        n_classes: 2,
        weight_decay: 0.0,
    }
}

#[test]
fn gradients_match_finite_differences_3d_valid() {
    for seed in 0..100 {
        grad_check(net_3d_valid(), seed);
    }
}

#[test]
fn gradients_match_finite_differences_3d_same() {
    for seed in 0..100 {
        grad_check(net_3d_same(), seed);
    }
}

#[test]
fn gradients_match_finite_differences_2d_valid() {
    for seed in 0..100 {
        grad_check(net_2d_valid(), seed);
    }
}

#[test]
fn gradients_match_finite_differences_2d_same_dropout() {
    for seed in 0..100 {
        grad_check(net_2d_same_dropout(), seed);
    }
}

#[test]
fn he_init_statistics() {
    let mut r = rng(0);
    let t = he_init(&[100_000], 54, &mut r);
    let mean = t.data.iter().sum::<f64>() / t.numel() as f64;
    let var = t.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t.numel() as f64;
    let target = 2.0 / 54.0;
    assert!(mean.abs() < 0.005);
    assert!((var - target).abs() / target < 0.1, "var {var} vs {target}");
    // Fixed seed reproduces.
    let again = he_init(&[100_000], 54, &mut rng(0));
    assert_eq!(t.data, again.data);
}

#[test]
fn fresh_network_has_zero_biases_and_quarter_slopes() {
    let net = Network::build(net_3d_valid(), &mut rng(3)).unwrap();
    assert!(net.layers[0].params[1].data.iter().all(|&v| v == 0.0));
    assert!(net.layers[1].params[0].data.iter().all(|&v| v == 0.25));
}

#[test]
fn identity_1x1x1_conv_passes_input_through() {
    use LayerSpec::*;
    let config = NetworkConfig {
        input_shape: vec![2, 2, 2, 2],
        layers: vec![Conv3D {
            filter: (1, 1, 1),
            stride: (1, 1, 1),
            depth: 2,
            padding: Padding::Valid,
        }],
        n_classes: 16,
        weight_decay: 0.0,
    };
    let mut net = Network::build(config, &mut rng(0)).unwrap();
    // Weight [1,1,1,c,d] = identity over (c,d).
    net.layers[0].params[0].data = vec![1.0, 0.0, 0.0, 1.0];
    let x = random_input(&[2, 2, 2, 2], &mut rng(5));
    let y = forward(&net, &x).unwrap();
    assert_eq!(y, x.data);
}

#[test]
fn initial_loss_is_ln_c() {
    // A fresh net's logits are small, so the softmax is near uniform and
    // the batch loss sits at ln C. Inputs at the scale of zero-centered
    // motion data (fractions of a pixel).
    for (config, c) in [
        (NetworkConfig::temporal3d_desk(6), 6.0_f64),
        (NetworkConfig::spatial2d_desk(64, 4), 4.0),
    ] {
        let net = Network::build(config, &mut rng(1)).unwrap();
        let mut mean = 0.0;
        let samples = 8;
        for s in 0..samples {
            let mut x = random_input(&net.config.input_shape.clone(), &mut rng(2 + s));
            for v in &mut x.data {
                *v *= 0.3;
            }
            let logits = forward(&net, &x).unwrap();
            let (loss, _) = softmax_cross_entropy(&logits, s as usize % c as usize).unwrap();
            mean += loss / samples as f64;
        }
        assert!((mean - c.ln()).abs() < 0.1, "loss {mean} vs ln {c}");
    }
}

#[test]
fn single_sample_overfit() {
    let mut net = Network::build(net_2d_valid(), &mut rng(7)).unwrap();
    let x = random_input(&[6, 6, 2], &mut rng(8));
    let sample = vec![(x, 1usize)];
    let cfg = TrainConfig {
        batch_size: 1,
        lr_initial: 0.05,
        lr_step_interval: 50,
        total_iters: 50,
        seed: 9,
        ..Default::default()
    };
    let mut vel = zero_velocity(&net);
    let mut last = f64::MAX;
    for iter in 0..50 {
        last = train_step(&mut net, &mut vel, &sample, &cfg, iter).unwrap();
    }
    assert!(last < 0.01, "loss after 50 steps: {last}");
}

#[test]
fn zero_learning_rate_leaves_weights_untouched() {
    let mut net = Network::build(net_2d_valid(), &mut rng(4)).unwrap();
    let before: Vec<Vec<Tensor>> = net.layers.iter().map(|l| l.params.clone()).collect();
    let x = random_input(&[6, 6, 2], &mut rng(5));
    let cfg = TrainConfig {
        batch_size: 1,
        lr_initial: 0.0,
        lr_step_interval: 1,
        total_iters: 1,
        seed: 0,
        ..Default::default()
    };
    let mut vel = zero_velocity(&net);
    train_step(&mut net, &mut vel, &[(x, 0)], &cfg, 0).unwrap();
    for (layer, orig) in net.layers.iter().zip(&before) {
        for (p, o) in layer.params.iter().zip(orig) {
            assert_eq!(p.data, o.data);
        }
    }
}

#[test]
fn momentum_matches_the_closed_form_over_two_steps() {
    // FC [1] -> 2 classes: six scalar parameters, everything computable by
    // hand from the softmax gradient.
    use LayerSpec::*;
    let config = NetworkConfig {
        input_shape: vec![1],
        layers: vec![FullyConnected { out: 2 }],
        n_classes: 2,
        weight_decay: 0.0,
    };
    let mut net = Network::build(config, &mut rng(11)).unwrap();
    let w0 = net.layers[0].params[0].data.clone();
    let b0 = net.layers[0].params[1].data.clone();
    let xv = 0.7_f64;
    let label = 0usize;
    let cfg = TrainConfig {
        batch_size: 1,
        momentum: 0.9,
        lr_initial: 0.1,
        lr_step_interval: 2,
        total_iters: 2,
        seed: 0,
        ..Default::default()
    };

    // Independent recomputation of two momentum steps.
    let mut w = [w0[0], w0[1]];
    let mut b = [b0[0], b0[1]];
    let mut vw = [0.0_f64; 2];
    let mut vb = [0.0_f64; 2];
    for _ in 0..2 {
        let logits = [w[0] * xv + b[0], w[1] * xv + b[1]];
        let m = logits[0].max(logits[1]);
        let e = [(logits[0] - m).exp(), (logits[1] - m).exp()];
        let z = e[0] + e[1];
        let p = [e[0] / z, e[1] / z];
        let mut g = p;
        g[label] -= 1.0;
        for j in 0..2 {
            vw[j] = 0.9 * vw[j] - 0.1 * (g[j] * xv);
            w[j] += vw[j];
            vb[j] = 0.9 * vb[j] - 0.1 * g[j];
            b[j] += vb[j];
        }
    }

    let sample = vec![(Tensor { shape: vec![1], data: vec![xv] }, label)];
    let mut vel = zero_velocity(&net);
    for iter in 0..2 {
        train_step(&mut net, &mut vel, &sample, &cfg, iter).unwrap();
    }
    for j in 0..2 {
        assert!((net.layers[0].params[0].data[j] - w[j]).abs() < 1e-12);
        assert!((net.layers[0].params[1].data[j] - b[j]).abs() < 1e-12);
    }
}

#[test]
fn inverted_dropout_preserves_expected_activation() {
    use LayerSpec::*;
    let config = NetworkConfig {
        input_shape: vec![8],
        layers: vec![Dropout { ratio: 0.4 }, FullyConnected { out: 2 }],
        n_classes: 2,
        weight_decay: 0.0,
    };
    let net = Network::build(config, &mut rng(2)).unwrap();
    let x = random_input(&[8], &mut rng(3));
    let eval = forward(&net, &x).unwrap();
    let mut mean = [0.0_f64; 2];
    let reps = 10_000;
    let mut r = rng(42);
    for _ in 0..reps {
        let (_, logits) = forward_train(&net, &x, &mut r).unwrap();
        mean[0] += logits[0] / reps as f64;
        mean[1] += logits[1] / reps as f64;
    }
    for j in 0..2 {
        assert!((mean[j] - eval[j]).abs() < 0.05, "{} vs {}", mean[j], eval[j]);
    }
}

#[test]
fn maxpool_routes_gradient_to_the_argmax_only() {
    use LayerSpec::*;
    let config2 = NetworkConfig {
        input_shape: vec![2, 2, 1],
        layers: vec![MaxPool2D { window: (2, 2), stride: (2, 2) }],
        n_classes: 1,
        weight_decay: 0.0,
    };
    let net = Network::build(config2, &mut rng(0)).unwrap();
    let x = Tensor { shape: vec![2, 2, 1], data: vec![0.3, 0.9, 0.1, 0.5] };
    let mut r = rng(0);
    let (caches, logits) = forward_train(&net, &x, &mut r).unwrap();
    assert_eq!(logits, vec![0.9]);
    let (dx, _) = backward(&net, &caches, &[2.5]).unwrap();
    assert_eq!(dx.data, vec![0.0, 2.5, 0.0, 0.0]);

    let config3 = NetworkConfig {
        input_shape: vec![2, 2, 1, 2],
        layers: vec![MaxPool3D { window: (2, 2, 2), stride: (2, 2, 2) }],
        n_classes: 1,
        weight_decay: 0.0,
    };
    let net3 = Network::build(config3, &mut rng(0)).unwrap();
    let x3 = Tensor {
        shape: vec![2, 2, 1, 2],
        data: vec![0.1, 0.2, 0.3, 0.4, 0.8, 0.6, 0.5, 0.7],
    };
    let (caches3, logits3) = forward_train(&net3, &x3, &mut rng(0)).unwrap();
    assert_eq!(logits3, vec![0.8]);
    let (dx3, _) = backward(&net3, &caches3, &[1.0]).unwrap();
    let mut expected = vec![0.0; 8];
    expected[4] = 1.0;
    assert_eq!(dx3.data, expected);
}

#[test]
fn training_is_deterministic() {
    let data: Vec<(Tensor, usize)> = (0..6)
        .map(|i| (random_input(&[6, 6, 2], &mut rng(100 + i)), (i % 3) as usize))
        .collect();
    let cfg = TrainConfig {
        batch_size: 4,
        lr_initial: 0.02,
        lr_step_interval: 5,
        total_iters: 5,
        seed: 3,
        ..Default::default()
    };
    let mut a = Network::build(net_2d_valid(), &mut rng(9)).unwrap();
    let mut b = Network::build(net_2d_valid(), &mut rng(9)).unwrap();
    let ra = train(&mut a, &data, &cfg).unwrap();
    let rb = train(&mut b, &data, &cfg).unwrap();
    assert_eq!(ra.losses, rb.losses);
    for (la, lb) in a.layers.iter().zip(&b.layers) {
        for (pa, pb) in la.params.iter().zip(&lb.params) {
            assert_eq!(pa.data, pb.data);
        }
    }
}

#[test]
fn parameter_count_closed_forms() {
    use LayerSpec::*;
    let conv = NetworkConfig {
        input_shape: vec![24, 24, 2, 160],
        layers: vec![Conv3D {
            filter: (3, 3, 3),
            stride: (1, 1, 2),
            depth: 64,
            padding: Padding::Same,
        }],
        n_classes: 0,
        weight_decay: 0.0,
    };
    assert_eq!(parameter_count(&conv).unwrap(), 3520);

    let fc = NetworkConfig {
        input_shape: vec![4096],
        layers: vec![FullyConnected { out: 2048 }],
        n_classes: 2048,
        weight_decay: 0.0,
    };
    assert_eq!(parameter_count(&fc).unwrap(), 8_390_656);

    // Paper preset: hand-derived closed form, order of magnitude tens of
    // millions.
    for c in [2usize, 6, 101] {
        let total = parameter_count(&NetworkConfig::temporal3d_paper(c)).unwrap();
        assert_eq!(total, 16_754_432 + 2049 * c);
        assert!((10_000_000..100_000_000).contains(&total));
    }
    let built = Network::build(NetworkConfig::temporal3d_desk(4), &mut rng(0)).unwrap();
    assert_eq!(built.parameter_count(), parameter_count(&built.config).unwrap());
}

#[test]
fn paper_preset_shape_walk() {
    let config = NetworkConfig::temporal3d_paper(6);
    config.validate().unwrap();
    let shapes = config.activation_shapes().unwrap();
    assert_eq!(shapes[0], vec![24, 24, 2, 160]);
    assert_eq!(shapes[3], vec![12, 12, 64, 40]);
    // Input of the third conv layer.
    assert_eq!(shapes[6], vec![6, 6, 128, 10]);
    assert_eq!(shapes[12], vec![3, 3, 512, 7]);
    // After the final pool, 1536 values feed FC6.
    assert_eq!(shapes[13], vec![1, 1, 512, 3]);
    assert_eq!(shapes[14], vec![4096]);
    assert_eq!(*shapes.last().unwrap(), vec![6]);
}

#[test]
fn desk_presets_validate() {
    NetworkConfig::temporal3d_desk(6).validate().unwrap();
    NetworkConfig::spatial2d_desk(224, 6).validate().unwrap();
    assert!(NetworkConfig::preset("temporal3d-paper", 3).is_ok());
    assert!(NetworkConfig::preset("nope", 3).is_err());
}

#[test]
fn checkpoint_round_trip() {
    let net = Network::build(net_2d_same_dropout(), &mut rng(21)).unwrap();
    let mut buf = Vec::new();
    save_checkpoint(&net, &mut buf).unwrap();
    assert_eq!(&buf[..4], b"CKP1");
    let loaded = load_checkpoint(&mut &buf[..]).unwrap();
    assert_eq!(loaded.config, net.config);
    // Save-load-save is byte stable (f32 quantization happens once).
    let mut buf2 = Vec::new();
    save_checkpoint(&loaded, &mut buf2).unwrap();
    assert_eq!(buf, buf2);
    for (a, b) in net.layers.iter().zip(&loaded.layers) {
        for (pa, pb) in a.params.iter().zip(&b.params) {
            for (&va, &vb) in pa.data.iter().zip(&pb.data) {
                assert!((va - vb).abs() <= (va as f32).abs() as f64 * 1e-6 + 1e-12);
            }
        }
    }
}

#[test]
fn corrupt_checkpoint_is_rejected() {
    let net = Network::build(net_2d_valid(), &mut rng(1)).unwrap();
    let mut buf = Vec::new();
    save_checkpoint(&net, &mut buf).unwrap();
    buf.truncate(buf.len() - 3);
    assert!(load_checkpoint(&mut &buf[..]).is_err());
    let mut bad_magic = buf.clone();
    bad_magic[0] = b'X';
    assert!(load_checkpoint(&mut &bad_magic[..]).is_err());
}

#[test]
fn transfer_copies_matching_tensors_only() {
    let src = Network::build(NetworkConfig::temporal3d_desk(6), &mut rng(31)).unwrap();
    let mut dst = Network::build(NetworkConfig::temporal3d_desk(4), &mut rng(32)).unwrap();
    let copied = transfer_weights(&mut dst, &src);
    // Every tensor except the head FC weight and bias matches shapes.
    let total: usize = dst.layers.iter().map(|l| l.params.len()).sum();
    assert_eq!(copied, total - 2);
    assert_eq!(dst.layers[0].params[0].data, src.layers[0].params[0].data);
    let head = dst.layers.last().unwrap();
    assert_ne!(head.params[0].data.len(), src.layers.last().unwrap().params[0].data.len());
}

#[test]
fn label_out_of_range_is_an_error() {
    assert!(matches!(
        softmax_cross_entropy(&[0.0, 0.0], 2),
        Err(Error::OutOfRange { index: 2, count: 2 })
    ));
}
