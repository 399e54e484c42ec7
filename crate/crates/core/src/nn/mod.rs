//! From-scratch differentiable tensor engine.
//!
//! Exactly the layer set the two streams need: 3D/2D convolution, max
//! pooling, fully connected, PReLU, inverted dropout and a softmax
//! cross-entropy head, trained with momentum SGD. Everything runs in f64;
//! checkpoints and tensors interchange as f32.

mod checkpoint;
mod ops;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, transfer_weights};
pub use train::{train, train_step, zero_velocity, TrainConfig, TrainReport};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Valid,
    Same,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LayerSpec {
    /// Filter (h, w, t), stride (h, w, t), on [H, W, C, T] tensors.
    Conv3D {
        filter: (usize, usize, usize),
        stride: (usize, usize, usize),
        depth: usize,
        padding: Padding,
    },
    /// Filter (h, w), stride (h, w), on [H, W, C] tensors.
    Conv2D { filter: (usize, usize), stride: (usize, usize), depth: usize, padding: Padding },
    MaxPool3D { window: (usize, usize, usize), stride: (usize, usize, usize) },
    MaxPool2D { window: (usize, usize), stride: (usize, usize) },
    FullyConnected { out: usize },
    /// One learned slope per channel (per unit after flattening).
    PReLU,
    /// `ratio` is the drop probability; activations are rescaled at train
    /// time so eval needs no correction.
    Dropout { ratio: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub n_classes: usize,
    pub weight_decay: f64,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        for spec in &self.layers {
            match *spec {
                LayerSpec::Conv3D { filter, stride, depth, .. } => {
                    if filter.0 == 0 || filter.1 == 0 || filter.2 == 0 || stride.0 == 0
                        || stride.1 == 0 || stride.2 == 0 || depth == 0
                    {
                        return Err(Error::InvalidConfig("conv extents must be positive".into()));
                    }
                }
                LayerSpec::Conv2D { filter, stride, depth, .. } => {
                    if filter.0 == 0 || filter.1 == 0 || stride.0 == 0 || stride.1 == 0 || depth == 0
                    {
                        return Err(Error::InvalidConfig("conv extents must be positive".into()));
                    }
                }
                LayerSpec::Dropout { ratio } => {
                    if !(0.0..1.0).contains(&ratio) {
                        return Err(Error::InvalidConfig("dropout ratio must be in [0,1)".into()));
                    }
                }
                LayerSpec::FullyConnected { out } if out == 0 => {
                    return Err(Error::InvalidConfig("FC width must be positive".into()));
                }
                _ => {}
            }
        }
        // Shape inference doubles as the compatibility check.
        let shapes = self.activation_shapes()?;
        let last: usize = shapes.last().unwrap().iter().product();
        if last != self.n_classes {
            return Err(Error::InvalidConfig(format!(
                "network emits {last} values for {} classes",
                self.n_classes
            )));
        }
        Ok(())
    }

    /// The shape after every layer, starting with the input shape. Fails if
    /// any consecutive pair is incompatible.
    pub fn activation_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input_shape.clone()];
        for spec in &self.layers {
            let prev = shapes.last().unwrap();
            shapes.push(output_shape(spec, prev)?);
        }
        Ok(shapes)
    }

    /// The full-scale temporal stream: [24, 24, 2, 160] in, two 3x3x3 convs
    /// with temporal stride 2 (spatial-preserving padding), three 2x2x2
    /// valid convs, pooling after conv1/conv2/conv5, FC 4096 and 2048 heads
    /// with dropout 0.8.
    pub fn temporal3d_paper(n_classes: usize) -> NetworkConfig {
        use LayerSpec::*;
        NetworkConfig {
            input_shape: vec![24, 24, 2, 160],
            layers: vec![
                Conv3D { filter: (3, 3, 3), stride: (1, 1, 2), depth: 64, padding: Padding::Same },
                PReLU,
                MaxPool3D { window: (2, 2, 2), stride: (2, 2, 2) },
                Conv3D { filter: (3, 3, 3), stride: (1, 1, 2), depth: 128, padding: Padding::Same },
                PReLU,
                MaxPool3D { window: (2, 2, 2), stride: (2, 2, 2) },
                Conv3D { filter: (2, 2, 2), stride: (1, 1, 1), depth: 256, padding: Padding::Valid },
                PReLU,
                Conv3D { filter: (2, 2, 2), stride: (1, 1, 1), depth: 256, padding: Padding::Valid },
                PReLU,
                Conv3D { filter: (2, 2, 2), stride: (1, 1, 1), depth: 512, padding: Padding::Valid },
                PReLU,
                MaxPool3D { window: (2, 2, 2), stride: (2, 2, 2) },
                FullyConnected { out: 4096 },
                PReLU,
                Dropout { ratio: 0.8 },
                FullyConnected { out: 2048 },
                PReLU,
                Dropout { ratio: 0.8 },
                FullyConnected { out: n_classes },
            ],
            n_classes,
            weight_decay: 0.005,
        }
    }

    /// Same topology at desk scale: [24, 24, 2, 32] in, narrow depths.
    pub fn temporal3d_desk(n_classes: usize) -> NetworkConfig {
        use LayerSpec::*;
        NetworkConfig {
            input_shape: vec![24, 24, 2, 32],
            layers: vec![
                Conv3D { filter: (3, 3, 3), stride: (1, 1, 2), depth: 8, padding: Padding::Same },
                PReLU,
                MaxPool3D { window: (2, 2, 2), stride: (2, 2, 2) },
                Conv3D { filter: (3, 3, 3), stride: (1, 1, 2), depth: 16, padding: Padding::Same },
                PReLU,
                MaxPool3D { window: (2, 2, 2), stride: (2, 2, 2) },
                Conv3D { filter: (2, 2, 2), stride: (1, 1, 1), depth: 32, padding: Padding::Valid },
                PReLU,
                FullyConnected { out: 128 },
                PReLU,
                Dropout { ratio: 0.3 },
                FullyConnected { out: n_classes },
            ],
            n_classes,
            weight_decay: 0.005,
        }
    }

    /// Small 2D CNN for the spatial stream; `side` is the square input edge
    /// (224 matches the full input contract).
    pub fn spatial2d_desk(side: usize, n_classes: usize) -> NetworkConfig {
        use LayerSpec::*;
        NetworkConfig {
            input_shape: vec![side, side, 3],
            layers: vec![
                Conv2D { filter: (3, 3), stride: (2, 2), depth: 8, padding: Padding::Same },
                PReLU,
                MaxPool2D { window: (2, 2), stride: (2, 2) },
                Conv2D { filter: (3, 3), stride: (2, 2), depth: 16, padding: Padding::Same },
                PReLU,
                MaxPool2D { window: (2, 2), stride: (2, 2) },
                Conv2D { filter: (3, 3), stride: (1, 1), depth: 32, padding: Padding::Valid },
                PReLU,
                MaxPool2D { window: (2, 2), stride: (2, 2) },
                FullyConnected { out: 64 },
                PReLU,
                Dropout { ratio: 0.3 },
                FullyConnected { out: n_classes },
            ],
            n_classes,
            weight_decay: 0.005,
        }
    }

    pub fn preset(name: &str, n_classes: usize) -> Result<NetworkConfig> {
        match name {
            "temporal3d-paper" => Ok(NetworkConfig::temporal3d_paper(n_classes)),
            "temporal3d-desk" => Ok(NetworkConfig::temporal3d_desk(n_classes)),
            "spatial2d-desk" => Ok(NetworkConfig::spatial2d_desk(224, n_classes)),
            other => Err(Error::InvalidConfig(format!("unknown preset '{other}'"))),
        }
    }
}

/// Output shape of one layer given its input shape.
pub fn output_shape(spec: &LayerSpec, input: &[usize]) -> Result<Vec<usize>> {
    let conv_axis = |n: usize, f: usize, s: usize, p: Padding| -> Result<usize> {
        match p {
            Padding::Valid => {
                if f > n {
                    Err(Error::DimensionMismatch(format!("filter {f} exceeds extent {n}")))
                } else {
                    Ok((n - f) / s + 1)
                }
            }
            Padding::Same => Ok(n.div_ceil(s)),
        }
    };
    let pool_axis = |n: usize, w: usize, s: usize| -> Result<usize> {
        if w > n {
            Err(Error::DimensionMismatch(format!("pool window {w} exceeds extent {n}")))
        } else {
            Ok((n - w) / s + 1)
        }
    };
    match *spec {
        LayerSpec::Conv3D { filter, stride, depth, padding } => {
            let [h, w, _c, t]: [usize; 4] = input
                .try_into()
                .map_err(|_| Error::DimensionMismatch("Conv3D needs a rank-4 input".into()))?;
            Ok(vec![
                conv_axis(h, filter.0, stride.0, padding)?,
                conv_axis(w, filter.1, stride.1, padding)?,
                depth,
                conv_axis(t, filter.2, stride.2, padding)?,
            ])
        }
        LayerSpec::Conv2D { filter, stride, depth, padding } => {
            let [h, w, _c]: [usize; 3] = input
                .try_into()
                .map_err(|_| Error::DimensionMismatch("Conv2D needs a rank-3 input".into()))?;
            Ok(vec![
                conv_axis(h, filter.0, stride.0, padding)?,
                conv_axis(w, filter.1, stride.1, padding)?,
                depth,
            ])
        }
        LayerSpec::MaxPool3D { window, stride } => {
            let [h, w, c, t]: [usize; 4] = input
                .try_into()
                .map_err(|_| Error::DimensionMismatch("MaxPool3D needs a rank-4 input".into()))?;
            Ok(vec![
                pool_axis(h, window.0, stride.0)?,
                pool_axis(w, window.1, stride.1)?,
                c,
                pool_axis(t, window.2, stride.2)?,
            ])
        }
        LayerSpec::MaxPool2D { window, stride } => {
            let [h, w, c]: [usize; 3] = input
                .try_into()
                .map_err(|_| Error::DimensionMismatch("MaxPool2D needs a rank-3 input".into()))?;
            Ok(vec![pool_axis(h, window.0, stride.0)?, pool_axis(w, window.1, stride.1)?, c])
        }
        LayerSpec::FullyConnected { out } => Ok(vec![out]),
        LayerSpec::PReLU | LayerSpec::Dropout { .. } => Ok(input.to_vec()),
    }
}

/// Channel count PReLU learns slopes over: the channel axis for conv
/// activations, every unit for vectors.
fn prelu_channels(shape: &[usize]) -> usize {
    match shape.len() {
        4 | 3 => shape[2],
        _ => shape.iter().product(),
    }
}

/// Learned state of one layer. `params` is empty for pools and dropout;
/// convs and FC hold [weights, bias]; PReLU holds [slopes].
#[derive(Debug, Clone)]
pub struct LayerState {
    pub spec: LayerSpec,
    pub params: Vec<Tensor>,
}

#[derive(Debug, Clone)]
pub struct Network {
    pub config: NetworkConfig,
    pub layers: Vec<LayerState>,
}

/// Normal(0, 2/fan_in) samples.
pub fn he_init<R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
    let n: usize = shape.iter().product();
    Tensor { shape: shape.to_vec(), data: (0..n).map(|_| dist.sample(rng)).collect() }
}

impl Network {
    /// Builds a network with He-initialized weights, zero biases and PReLU
    /// slopes at 0.25.
    pub fn build(config: NetworkConfig, rng: &mut ChaCha8Rng) -> Result<Network> {
        config.validate()?;
        let shapes = config.activation_shapes()?;
        let mut layers = Vec::with_capacity(config.layers.len());
        for (i, spec) in config.layers.iter().enumerate() {
            let input = &shapes[i];
            let params = match *spec {
                LayerSpec::Conv3D { filter, depth, .. } => {
                    let c_in = input[2];
                    let fan_in = filter.0 * filter.1 * filter.2 * c_in;
                    vec![
                        he_init(&[filter.0, filter.1, filter.2, c_in, depth], fan_in, rng),
                        Tensor::zeros(&[depth]),
                    ]
                }
                LayerSpec::Conv2D { filter, depth, .. } => {
                    let c_in = input[2];
                    let fan_in = filter.0 * filter.1 * c_in;
                    vec![
                        he_init(&[filter.0, filter.1, c_in, depth], fan_in, rng),
                        Tensor::zeros(&[depth]),
                    ]
                }
                LayerSpec::FullyConnected { out } => {
                    let fan_in: usize = input.iter().product();
                    vec![he_init(&[fan_in, out], fan_in, rng), Tensor::zeros(&[out])]
                }
                LayerSpec::PReLU => {
                    let c = prelu_channels(input);
                    vec![Tensor { shape: vec![c], data: vec![0.25; c] }]
                }
                _ => vec![],
            };
            layers.push(LayerState { spec: *spec, params });
        }
        Ok(Network { config, layers })
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().flat_map(|l| &l.params).map(Tensor::numel).sum()
    }
}

/// Closed-form parameter count for a config, without building it.
pub fn parameter_count(config: &NetworkConfig) -> Result<usize> {
    let shapes = config.activation_shapes()?;
    let mut total = 0usize;
    for (i, spec) in config.layers.iter().enumerate() {
        let input = &shapes[i];
        total += match *spec {
            LayerSpec::Conv3D { filter, depth, .. } => {
                filter.0 * filter.1 * filter.2 * input[2] * depth + depth
            }
            LayerSpec::Conv2D { filter, depth, .. } => filter.0 * filter.1 * input[2] * depth + depth,
            LayerSpec::FullyConnected { out } => input.iter().product::<usize>() * out + out,
            LayerSpec::PReLU => prelu_channels(input),
            _ => 0,
        };
    }
    Ok(total)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::MIN, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / z).collect()
}

/// Cross-entropy loss and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::OutOfRange { index: label, count: logits.len() });
    }
    let p = softmax(logits);
    let loss = -p[label].max(1e-300).ln();
    let mut grad = p;
    grad[label] -= 1.0;
    Ok((loss, grad))
}

pub use ops::{backward, forward, forward_train, Cache};

#[cfg(test)]
mod tests;
