//! The four-block CNN: conv -> ReLU -> batch norm per block, then
//! adaptive average pooling and a two-layer fully connected head.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::batchnorm::{batchnorm2d_backward, batchnorm2d_eval, batchnorm2d_train, update_running_stats, BnBatchStats, BnCache};
use super::conv::{conv2d_backward_opt, conv2d_forward, Conv2dGeom};
use super::layers::{
    adaptive_avg_pool2d, adaptive_avg_pool2d_backward, linear_backward, linear_forward, relu, relu_backward,
};
use super::{NnError, Tensor};
use crate::rng::{stream_rng, Stream};
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlockConfig {
    pub out_filters: usize,
    pub kernel: (usize, usize),
    pub padding: (usize, usize),
    pub stride: (usize, usize),
}

impl ConvBlockConfig {
    pub fn geom(&self) -> Conv2dGeom {
        Conv2dGeom { kernel: self.kernel, padding: self.padding, stride: self.stride }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub input_hw: (usize, usize),
    pub blocks: Vec<ConvBlockConfig>,
    pub pool_grid: (usize, usize),
    pub hidden: usize,
    pub classes: usize,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

const fn block(out_filters: usize, kernel: (usize, usize), stride: (usize, usize)) -> ConvBlockConfig {
    ConvBlockConfig { out_filters, kernel, padding: (2, 2), stride }
}

/// The published block table.
pub const PAPER_BLOCKS: [ConvBlockConfig; 4] = [
    block(32, (3, 5), (2, 2)),
    block(64, (3, 5), (1, 1)),
    block(128, (5, 5), (1, 1)),
    block(256, (5, 5), (1, 1)),
];

impl ModelConfig {
    /// Full-size network for `classes` outputs on `[2, 64, 344]` input.
    pub fn paper(classes: usize) -> Self {
        Self {
            in_channels: 2,
            input_hw: (64, 344),
            blocks: PAPER_BLOCKS.to_vec(),
            pool_grid: (2, 4),
            hidden: 512,
            classes,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
        }
    }

    /// Same topology with filter counts and the hidden width divided by
    /// `divisor`. Used where the full network is too slow to train on a CPU.
    pub fn scaled(classes: usize, divisor: usize) -> Self {
        let mut cfg = Self::paper(classes);
        let d = divisor.max(1);
        for b in &mut cfg.blocks {
            b.out_filters = (b.out_filters / d).max(1);
        }
        cfg.hidden = (cfg.hidden / d).max(1);
        cfg
    }

    /// Parses `paper` or `scaled:<divisor>`.
    pub fn from_arch(arch: &str, classes: usize) -> Result<Self, NnError> {
        match arch.split_once(':') {
            None if arch == "paper" => Ok(Self::paper(classes)),
            Some(("scaled", d)) => match d.parse::<usize>() {
                Ok(d) if d >= 1 => Ok(Self::scaled(classes, d)),
                _ => Err(NnError::Config(format!("bad divisor in architecture {arch:?}"))),
            },
            _ => Err(NnError::Config(format!("unknown architecture {arch:?}; expected paper or scaled:<n>"))),
        }
    }

    pub fn flat_features(&self) -> usize {
        self.last_channels() * self.pool_grid.0 * self.pool_grid.1
    }

    fn last_channels(&self) -> usize {
        self.blocks.last().map_or(self.in_channels, |b| b.out_filters)
    }

    /// `(C, H, W)` after each block, then after pooling.
    pub fn activation_shapes(&self) -> Result<Vec<(usize, usize, usize)>, NnError> {
        let (mut h, mut w) = self.input_hw;
        let mut out = Vec::with_capacity(self.blocks.len() + 1);
        for b in &self.blocks {
            (h, w) = b.geom().output_hw(h, w)?;
            out.push((b.out_filters, h, w));
        }
        if h < self.pool_grid.0 || w < self.pool_grid.1 {
            return Err(NnError::Shape(format!("final feature map {h}x{w} smaller than pool grid {:?}", self.pool_grid)));
        }
        out.push((self.last_channels(), self.pool_grid.0, self.pool_grid.1));
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.blocks.is_empty() || self.in_channels == 0 || self.hidden == 0 || self.classes == 0 {
            return Err(NnError::Config("model needs at least one block, one input channel, one hidden unit and one class".into()));
        }
        self.activation_shapes().map(|_| ())
    }

    /// `(name, shape, trainable)` of every stored tensor, in serialization order.
    pub fn tensor_layout(&self) -> Vec<(String, Vec<usize>, bool)> {
        let mut out = Vec::new();
        let mut c_in = self.in_channels;
        for (i, b) in self.blocks.iter().enumerate() {
            let f = b.out_filters;
            let p = format!("block{}", i + 1);
            out.push((format!("{p}.conv.weight"), vec![f, c_in, b.kernel.0, b.kernel.1], true));
            out.push((format!("{p}.conv.bias"), vec![f], true));
            out.push((format!("{p}.bn.weight"), vec![f], true));
            out.push((format!("{p}.bn.bias"), vec![f], true));
            out.push((format!("{p}.bn.running_mean"), vec![f], false));
            out.push((format!("{p}.bn.running_var"), vec![f], false));
            c_in = f;
        }
        out.push(("fc1.weight".into(), vec![self.hidden, self.flat_features()], true));
        out.push(("fc1.bias".into(), vec![self.hidden], true));
        out.push(("fc2.weight".into(), vec![self.classes, self.hidden], true));
        out.push(("fc2.bias".into(), vec![self.classes], true));
        out
    }

    /// Trainable scalars: weights, biases and batch-norm scale/shift.
    pub fn count_params(&self) -> usize {
        self.tensor_layout()
            .iter()
            .filter(|(_, _, trainable)| *trainable)
            .map(|(_, s, _)| s.iter().product::<usize>())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlockParams<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub bn_gamma: Tensor<T>,
    pub bn_beta: Tensor<T>,
    pub bn_running_mean: Tensor<T>,
    pub bn_running_var: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub blocks: Vec<ConvBlockParams<T>>,
    pub fc1_weight: Tensor<T>,
    pub fc1_bias: Tensor<T>,
    pub fc2_weight: Tensor<T>,
    pub fc2_bias: Tensor<T>,
    /// Number of running-statistic updates applied; 0 means eval mode still
    /// uses the initial (0, 1) statistics.
    pub bn_updates: u64,
}

/// Activations kept from a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    block_inputs: Vec<Tensor<T>>,
    pre_relu: Vec<Tensor<T>>,
    bn: Vec<BnCache<T>>,
    pool_input_shape: Vec<usize>,
    flat: Tensor<T>,
    fc1_pre: Tensor<T>,
    hidden: Tensor<T>,
}

/// Output of [`Model::forward_train`]. Running statistics are not touched
/// until [`Model::apply_bn_stats`] is called.
#[derive(Debug, Clone)]
pub struct TrainForward<T> {
    pub logits: Tensor<T>,
    pub cache: ForwardCache<T>,
    pub bn_stats: Vec<BnBatchStats<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

fn kaiming_uniform<T: Scalar>(shape: &[usize], fan_in: usize, rng: &mut crate::rng::Rng) -> Tensor<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| lit(rng.random_range(-bound..bound)))
}

impl<T: Scalar> Model<T> {
    /// Kaiming-uniform weights, zero biases, unit BN scale, running stats (0, 1).
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, NnError> {
        config.validate()?;
        let mut rng = stream_rng(seed, Stream::Init);
        let mut blocks = Vec::with_capacity(config.blocks.len());
        let mut c_in = config.in_channels;
        for b in &config.blocks {
            let f = b.out_filters;
            let fan_in = c_in * b.kernel.0 * b.kernel.1;
            blocks.push(ConvBlockParams {
                weight: kaiming_uniform(&[f, c_in, b.kernel.0, b.kernel.1], fan_in, &mut rng),
                bias: Tensor::zeros(&[f]),
                bn_gamma: Tensor::full(&[f], T::one()),
                bn_beta: Tensor::zeros(&[f]),
                bn_running_mean: Tensor::zeros(&[f]),
                bn_running_var: Tensor::full(&[f], T::one()),
            });
            c_in = f;
        }
        let d = config.flat_features();
        let fc1_weight = kaiming_uniform(&[config.hidden, d], d, &mut rng);
        let fc2_weight = kaiming_uniform(&[config.classes, config.hidden], config.hidden, &mut rng);
        Ok(Self {
            fc1_bias: Tensor::zeros(&[config.hidden]),
            fc2_bias: Tensor::zeros(&[config.classes]),
            fc1_weight,
            fc2_weight,
            blocks,
            config,
            bn_updates: 0,
        })
    }

    pub fn classes(&self) -> usize {
        self.config.classes
    }

    pub fn count_params(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    /// Trainable tensors in a fixed order shared with [`Gradients`].
    pub fn trainable(&self) -> Vec<&Tensor<T>> {
        let mut v = Vec::new();
        for b in &self.blocks {
            v.extend([&b.weight, &b.bias, &b.bn_gamma, &b.bn_beta]);
        }
        v.extend([&self.fc1_weight, &self.fc1_bias, &self.fc2_weight, &self.fc2_bias]);
        v
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = Vec::new();
        for b in &mut self.blocks {
            v.extend([&mut b.weight, &mut b.bias, &mut b.bn_gamma, &mut b.bn_beta]);
        }
        v.extend([&mut self.fc1_weight, &mut self.fc1_bias, &mut self.fc2_weight, &mut self.fc2_bias]);
        v
    }

    /// Every stored tensor with its name, in [`ModelConfig::tensor_layout`] order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut refs: Vec<&Tensor<T>> = Vec::new();
        for b in &self.blocks {
            refs.extend([&b.weight, &b.bias, &b.bn_gamma, &b.bn_beta, &b.bn_running_mean, &b.bn_running_var]);
        }
        refs.extend([&self.fc1_weight, &self.fc1_bias, &self.fc2_weight, &self.fc2_bias]);
        self.config.tensor_layout().into_iter().map(|(n, _, _)| n).zip(refs).collect()
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let names = self.config.tensor_layout().into_iter().map(|(n, _, _)| n);
        let mut refs: Vec<&mut Tensor<T>> = Vec::new();
        for b in &mut self.blocks {
            refs.extend([
                &mut b.weight,
                &mut b.bias,
                &mut b.bn_gamma,
                &mut b.bn_beta,
                &mut b.bn_running_mean,
                &mut b.bn_running_var,
            ]);
        }
        refs.extend([&mut self.fc1_weight, &mut self.fc1_bias, &mut self.fc2_weight, &mut self.fc2_bias]);
        names.zip(refs).collect()
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|b| ConvBlockParams {
                    weight: b.weight.cast(),
                    bias: b.bias.cast(),
                    bn_gamma: b.bn_gamma.cast(),
                    bn_beta: b.bn_beta.cast(),
                    bn_running_mean: b.bn_running_mean.cast(),
                    bn_running_var: b.bn_running_var.cast(),
                })
                .collect(),
            fc1_weight: self.fc1_weight.cast(),
            fc1_bias: self.fc1_bias.cast(),
            fc2_weight: self.fc2_weight.cast(),
            fc2_bias: self.fc2_bias.cast(),
            bn_updates: self.bn_updates,
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<usize, NnError> {
        let (n, c, h, w) = x.dims4()?;
        if c != self.config.in_channels || (h, w) != self.config.input_hw {
            return Err(NnError::Shape(format!(
                "model expects [N, {}, {}, {}], got {:?}",
                self.config.in_channels,
                self.config.input_hw.0,
                self.config.input_hw.1,
                x.shape()
            )));
        }
        Ok(n)
    }

    fn head(&self, pooled: Tensor<T>) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>, Tensor<T>), NnError> {
        let n = pooled.shape()[0];
        let flat = pooled.reshape(&[n, self.config.flat_features()])?;
        let fc1_pre = linear_forward(&flat, &self.fc1_weight, &self.fc1_bias)?;
        let hidden = relu(&fc1_pre);
        let logits = linear_forward(&hidden, &self.fc2_weight, &self.fc2_bias)?;
        Ok((flat, fc1_pre, hidden, logits))
    }

    /// Inference with running statistics. A pure function of parameters and input.
    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        self.check_input(x)?;
        let eps = lit(self.config.bn_eps);
        let mut a = x.clone();
        for (cfg, p) in self.config.blocks.iter().zip(&self.blocks) {
            let z = relu(&conv2d_forward(&a, &p.weight, &p.bias, cfg.geom())?);
            a = batchnorm2d_eval(
                &z,
                p.bn_gamma.data(),
                p.bn_beta.data(),
                p.bn_running_mean.data(),
                p.bn_running_var.data(),
                eps,
            )?;
        }
        let pooled = adaptive_avg_pool2d(&a, self.config.pool_grid)?;
        Ok(self.head(pooled)?.3)
    }

    /// Training-mode forward with batch statistics; keeps what backward needs.
    pub fn forward_train(&self, x: &Tensor<T>) -> Result<TrainForward<T>, NnError> {
        self.check_input(x)?;
        let eps = lit(self.config.bn_eps);
        let nb = self.blocks.len();
        let (mut block_inputs, mut pre_relu, mut bn, mut bn_stats) =
            (Vec::with_capacity(nb), Vec::with_capacity(nb), Vec::with_capacity(nb), Vec::with_capacity(nb));
        let mut a = x.clone();
        for (cfg, p) in self.config.blocks.iter().zip(&self.blocks) {
            let z = conv2d_forward(&a, &p.weight, &p.bias, cfg.geom())?;
            let (y, cache, stats) = batchnorm2d_train(&relu(&z), p.bn_gamma.data(), p.bn_beta.data(), eps)?;
            block_inputs.push(std::mem::replace(&mut a, y));
            pre_relu.push(z);
            bn.push(cache);
            bn_stats.push(stats);
        }
        let pool_input_shape = a.shape().to_vec();
        let pooled = adaptive_avg_pool2d(&a, self.config.pool_grid)?;
        let (flat, fc1_pre, hidden, logits) = self.head(pooled)?;
        Ok(TrainForward {
            logits,
            cache: ForwardCache { block_inputs, pre_relu, bn, pool_input_shape, flat, fc1_pre, hidden },
            bn_stats,
        })
    }

    /// Folds one batch's statistics into the running estimates.
    pub fn apply_bn_stats(&mut self, stats: &[BnBatchStats<T>]) {
        let momentum = lit(self.config.bn_momentum);
        for (p, s) in self.blocks.iter_mut().zip(stats) {
            update_running_stats(p.bn_running_mean.data_mut(), p.bn_running_var.data_mut(), s, momentum);
        }
        self.bn_updates += 1;
    }

    /// Logits for `x`. Train mode also updates the running statistics.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        match mode {
            Mode::Eval => self.forward_eval(x),
            Mode::Train => {
                let out = self.forward_train(x)?;
                self.apply_bn_stats(&out.bn_stats);
                Ok(out.logits)
            }
        }
    }

    /// Reverse-mode gradients of every trainable tensor.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_logits: &Tensor<T>) -> Result<Gradients<T>, NnError> {
        let (gh, g_fc2w, g_fc2b) = linear_backward(grad_logits, &cache.hidden, &self.fc2_weight)?;
        let g_fc1_pre = relu_backward(&gh, &cache.fc1_pre)?;
        let (g_flat, g_fc1w, g_fc1b) = linear_backward(&g_fc1_pre, &cache.flat, &self.fc1_weight)?;
        let n = g_flat.shape()[0];
        let (gy, gx) = self.config.pool_grid;
        let g_pooled = g_flat.reshape(&[n, self.config.last_channels(), gy, gx])?;
        let mut g = adaptive_avg_pool2d_backward(&g_pooled, &cache.pool_input_shape)?;

        let mut per_block = Vec::with_capacity(self.blocks.len());
        for i in (0..self.blocks.len()).rev() {
            let p = &self.blocks[i];
            let (g_act, g_gamma, g_beta) = batchnorm2d_backward(&g, &cache.bn[i], p.bn_gamma.data())?;
            let g_z = relu_backward(&g_act, &cache.pre_relu[i])?;
            let cg = conv2d_backward_opt(&g_z, &cache.block_inputs[i], &p.weight, self.config.blocks[i].geom(), i > 0)?;
            let f = [p.bn_gamma.len()];
            per_block.push([cg.weight, cg.bias, Tensor::new(&f, g_gamma)?, Tensor::new(&f, g_beta)?]);
            if let Some(gi) = cg.input {
                g = gi;
            }
        }
        let mut tensors: Vec<Tensor<T>> = per_block.into_iter().rev().flatten().collect();
        tensors.extend([g_fc1w, g_fc1b, g_fc2w, g_fc2b]);
        Ok(Gradients { tensors })
    }
}

/// Gradients aligned with [`Model::trainable`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn max_abs(&self) -> T {
        self.tensors.iter().flat_map(|t| t.data().iter()).fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

/// Trainable parameter count of `config`.
pub fn count_params(config: &ModelConfig) -> usize {
    config.count_params()
}
