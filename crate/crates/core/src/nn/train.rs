//! Momentum SGD with a stepped learning-rate schedule.

use super::{backward, forward_train, softmax_cross_entropy, LayerSpec, Network};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub momentum: f64,
    pub lr_initial: f64,
    pub lr_decay_factor: f64,
    /// Iterations between learning-rate drops.
    pub lr_step_interval: usize,
    pub total_iters: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            batch_size: 64,
            momentum: 0.9,
            lr_initial: 1e-2,
            lr_decay_factor: 0.1,
            lr_step_interval: 10_000,
            total_iters: 20_000,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.total_iters == 0 || self.lr_step_interval == 0 {
            return Err(Error::InvalidConfig("batch size, iterations and step must be positive".into()));
        }
        if self.lr_initial <= 0.0 && self.lr_initial != 0.0 {
            return Err(Error::InvalidConfig("learning rate must be >= 0".into()));
        }
        Ok(())
    }

    pub fn learning_rate(&self, iter: usize) -> f64 {
        self.lr_initial * self.lr_decay_factor.powi((iter / self.lr_step_interval) as i32)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Momentum buffers, one per parameter tensor.
pub fn zero_velocity(net: &Network) -> Vec<Vec<Tensor>> {
    net.layers
        .iter()
        .map(|l| l.params.iter().map(|p| Tensor::zeros(&p.shape)).collect())
        .collect()
}

/// One SGD step over `batch`. Per-sample dropout RNG is derived from
/// (seed, iteration, position in batch), so the result is bit-identical
/// whether samples run in parallel or not. Returns the mean loss.
pub fn train_step(
    net: &mut Network,
    velocity: &mut [Vec<Tensor>],
    batch: &[(Tensor, usize)],
    cfg: &TrainConfig,
    iter: usize,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let per_sample: Vec<(f64, Vec<Vec<Tensor>>)> = batch
        .par_iter()
        .enumerate()
        .map(|(k, (x, label))| -> Result<(f64, Vec<Vec<Tensor>>)> {
            let sample_seed = splitmix64(cfg.seed ^ ((iter as u64) << 20) ^ k as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
            let (caches, logits) = forward_train(net, x, &mut rng)?;
            let (loss, dlogits) = softmax_cross_entropy(&logits, *label)?;
            let (_, grads) = backward(net, &caches, &dlogits)?;
            Ok((loss, grads))
        })
        .collect::<Result<Vec<_>>>()?;

    let scale = 1.0 / batch.len() as f64;
    let mut mean_loss = 0.0;
    let mut total: Vec<Vec<Tensor>> = zero_velocity(net);
    // Sequential accumulation in batch order keeps the sum deterministic.
    for (loss, grads) in &per_sample {
        mean_loss += loss * scale;
        for (tl, gl) in total.iter_mut().zip(grads) {
            for (t, g) in tl.iter_mut().zip(gl) {
                for (tv, gv) in t.data.iter_mut().zip(&g.data) {
                    *tv += gv * scale;
                }
            }
        }
    }

    let lr = cfg.learning_rate(iter);
    let wd = net.config.weight_decay;
    for ((layer, vel), grads) in net.layers.iter_mut().zip(velocity.iter_mut()).zip(&total) {
        for (p, (param, (v, g))) in
            layer.params.iter_mut().zip(vel.iter_mut().zip(grads)).enumerate()
        {
            // L2 decay applies to conv/FC weights only, not biases or slopes.
            let decay = match layer.spec {
                LayerSpec::Conv3D { .. } | LayerSpec::Conv2D { .. } | LayerSpec::FullyConnected { .. } => {
                    if p == 0 {
                        wd
                    } else {
                        0.0
                    }
                }
                _ => 0.0,
            };
            for ((w, vv), gv) in param.data.iter_mut().zip(v.data.iter_mut()).zip(&g.data) {
                *vv = cfg.momentum * *vv - lr * (gv + decay * *w);
                *w += *vv;
            }
        }
    }
    Ok(mean_loss)
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub losses: Vec<f64>,
}

/// Full training loop: batches are drawn uniformly with replacement from
/// `dataset` by a seed-determined RNG.
pub fn train(
    net: &mut Network,
    dataset: &[(Tensor, usize)],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    let mut velocity = zero_velocity(net);
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(cfg.seed));
    let mut losses = Vec::with_capacity(cfg.total_iters);
    for iter in 0..cfg.total_iters {
        let batch: Vec<(Tensor, usize)> = (0..cfg.batch_size)
            .map(|_| dataset[rng.gen_range(0..dataset.len())].clone())
            .collect();
        losses.push(train_step(net, &mut velocity, &batch, cfg, iter)?);
    }
    Ok(TrainReport { losses })
}
