//! Dense masked-reconstruction network with hand-written gradients.
//!
//! Each hidden block is `affine → batch norm → swish`, with inverted dropout
//! after one configurable block. The output layer is a plain affine map back
//! to `p` standardized thicknesses.

mod optim;
mod scaler;
mod train;

use std::fmt::{Debug, Display};
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::mask::SamplingMask;
use crate::error::{Result, ScsrError};

pub use optim::{adamw_step, AdamState, AdamWConfig};
pub use scaler::{fit_scaler, FeatureScaler, ScalerMode};
pub use train::{train, EpochStats, TrainConfig, TrainOutcome};

/// Floating-point element type of a network.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + std::iter::Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + Debug
    + Display
    + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("representable constant")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// `x · sigmoid(x)`
    #[default]
    Swish,
}

impl Activation {
    fn apply<F: Real>(self, x: F) -> F {
        match self {
            Activation::Swish => x * sigmoid(x),
        }
    }

    fn derivative<F: Real>(self, x: F) -> F {
        match self {
            Activation::Swish => {
                let s = sigmoid(x);
                s * (F::one() + x * (F::one() - s))
            }
        }
    }
}

fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    /// `[p, hidden..., p]`
    pub dims: Vec<usize>,
    pub activation: Activation,
    pub dropout_rate: f64,
    /// Zero-based hidden block followed by dropout.
    pub dropout_block: usize,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Architecture {
    pub fn new(p: usize, hidden: &[usize]) -> Self {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(p);
        dims.extend_from_slice(hidden);
        dims.push(p);
        Self {
            dims,
            activation: Activation::Swish,
            dropout_rate: 0.5,
            dropout_block: 1,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }

    /// Three hidden layers of width 1024.
    pub fn standard(p: usize) -> Self {
        Self::new(p, &[1024, 1024, 1024])
    }

    pub fn p(&self) -> usize {
        self.dims[0]
    }

    pub fn n_hidden(&self) -> usize {
        self.dims.len() - 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.len() < 3 || self.dims.contains(&0) {
            return Err(ScsrError::Config(format!(
                "invalid layer dims {:?}",
                self.dims
            )));
        }
        if self.dims[0] != *self.dims.last().unwrap() {
            return Err(ScsrError::Config("input and output dims must match".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(ScsrError::Config(format!(
                "dropout rate {} not in [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    /// `fan_in × fan_out`
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<F> {
    pub gamma: Array1<F>,
    pub beta: Array1<F>,
    pub running_mean: Array1<F>,
    pub running_var: Array1<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F> {
    pub arch: Architecture,
    pub layers: Vec<Dense<F>>,
    pub norms: Vec<BatchNorm<F>>,
    pub scaler: FeatureScaler,
    /// Sampling rate used while training.
    pub train_sampling_rate: f64,
}

/// Whether a parameter block receives weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    Norm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub layers: Vec<(Array2<F>, Array1<F>)>,
    pub norms: Vec<(Array1<F>, Array1<F>)>,
}

impl<F: Real> Gradients<F> {
    /// Blocks in optimizer order: every affine weight and bias, then every
    /// batch-norm gamma and beta.
    pub fn blocks(&self) -> Vec<&[F]> {
        let mut out = Vec::with_capacity(2 * (self.layers.len() + self.norms.len()));
        for (w, b) in &self.layers {
            out.push(w.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        for (g, b) in &self.norms {
            out.push(g.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn scale(&mut self, c: F) {
        for (w, b) in &mut self.layers {
            *w *= c;
            *b *= c;
        }
        for (g, b) in &mut self.norms {
            *g *= c;
            *b *= c;
        }
    }
}

struct BlockCache<F> {
    input: Array2<F>,
    xhat: Array2<F>,
    inv_std: Array1<F>,
    pre_activation: Array2<F>,
    batch_mean: Array1<F>,
    batch_var: Array1<F>,
    dropout: Option<Array2<F>>,
}

/// Intermediate values of a training-mode forward pass.
pub struct ForwardCache<F> {
    blocks: Vec<BlockCache<F>>,
    last_hidden: Array2<F>,
}

impl<F: Real> Mlp<F> {
    /// Glorot-uniform weights, zero biases, identity batch norm.
    pub fn init<R: Rng + ?Sized>(
        arch: Architecture,
        scaler: FeatureScaler,
        rng: &mut R,
    ) -> Result<Self> {
        arch.validate()?;
        if scaler.len() != arch.p() {
            return Err(ScsrError::Shape {
                context: "scaler length",
                expected: arch.p(),
                actual: scaler.len(),
            });
        }
        let layers = arch
            .dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weight = Array2::from_shape_simple_fn((fan_in, fan_out), || {
                    F::of(rng.random_range(-limit..limit))
                });
                Dense {
                    weight,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        let norms = arch.dims[1..arch.dims.len() - 1]
            .iter()
            .map(|&d| BatchNorm {
                gamma: Array1::ones(d),
                beta: Array1::zeros(d),
                running_mean: Array1::zeros(d),
                running_var: Array1::ones(d),
            })
            .collect();
        Ok(Self {
            arch,
            layers,
            norms,
            scaler,
            train_sampling_rate: 0.2,
        })
    }

    pub fn p(&self) -> usize {
        self.arch.p()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum::<usize>()
            + self.norms.iter().map(|n| 2 * n.gamma.len()).sum::<usize>()
    }

    /// Mutable parameter blocks in the same order as [`Gradients::blocks`].
    pub fn param_blocks_mut(&mut self) -> Vec<(ParamKind, &mut [F])> {
        let mut out = Vec::with_capacity(2 * (self.layers.len() + self.norms.len()));
        for l in &mut self.layers {
            out.push((
                ParamKind::Weight,
                l.weight.as_slice_mut().expect("standard layout"),
            ));
            out.push((
                ParamKind::Bias,
                l.bias.as_slice_mut().expect("standard layout"),
            ));
        }
        for n in &mut self.norms {
            out.push((
                ParamKind::Norm,
                n.gamma.as_slice_mut().expect("standard layout"),
            ));
            out.push((
                ParamKind::Norm,
                n.beta.as_slice_mut().expect("standard layout"),
            ));
        }
        out
    }

    /// Converts every parameter to another float type.
    pub fn cast<G: Real>(&self) -> Mlp<G> {
        let c1 = |a: &Array1<F>| a.mapv(|x| G::of(x.to_f64().unwrap()));
        let c2 = |a: &Array2<F>| a.mapv(|x| G::of(x.to_f64().unwrap()));
        Mlp {
            arch: self.arch.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: c2(&l.weight),
                    bias: c1(&l.bias),
                })
                .collect(),
            norms: self
                .norms
                .iter()
                .map(|n| BatchNorm {
                    gamma: c1(&n.gamma),
                    beta: c1(&n.beta),
                    running_mean: c1(&n.running_mean),
                    running_var: c1(&n.running_var),
                })
                .collect(),
            scaler: self.scaler.clone(),
            train_sampling_rate: self.train_sampling_rate,
        }
    }

    /// Inverted-dropout multipliers (0 or `1/(1-rate)`) for a training batch.
    pub fn sample_dropout<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Option<Array2<F>> {
        let rate = self.arch.dropout_rate;
        if rate == 0.0 || self.arch.dropout_block >= self.arch.n_hidden() {
            return None;
        }
        let keep = F::of(1.0 / (1.0 - rate));
        let width = self.arch.dims[self.arch.dropout_block + 1];
        Some(Array2::from_shape_simple_fn((batch, width), || {
            if rng.random::<f64>() < rate {
                F::zero()
            } else {
                keep
            }
        }))
    }

    fn check_input(&self, x: &ArrayView2<F>) -> Result<()> {
        if x.ncols() != self.p() {
            return Err(ScsrError::Shape {
                context: "network input width",
                expected: self.p(),
                actual: x.ncols(),
            });
        }
        Ok(())
    }

    /// Eval-mode forward pass: running batch-norm statistics, no dropout.
    /// Rows are processed independently.
    pub fn predict(&self, x: ArrayView2<F>) -> Result<Array2<F>> {
        self.check_input(&x)?;
        let eps = F::of(self.arch.bn_eps);
        let act = self.arch.activation;
        let mut h = x.to_owned();
        for (i, (layer, bn)) in self.layers.iter().zip(&self.norms).enumerate() {
            let mut a = h.dot(&layer.weight);
            let scale = Zip::from(&bn.gamma)
                .and(&bn.running_var)
                .map_collect(|&g, &v| g / (v + eps).sqrt());
            let shift = Zip::from(&bn.beta)
                .and(&bn.running_mean)
                .and(&scale)
                .and(&layer.bias)
                .map_collect(|&b, &m, &s, &bias| b + (bias - m) * s);
            Zip::from(a.rows_mut()).for_each(|mut row| {
                Zip::from(&mut row)
                    .and(&scale)
                    .and(&shift)
                    .for_each(|x, &s, &t| *x = act.apply(*x * s + t));
            });
            check_finite(&a, i)?;
            h = a;
        }
        let out_layer = self.layers.last().unwrap();
        let out = h.dot(&out_layer.weight) + &out_layer.bias;
        check_finite(&out, self.layers.len() - 1)?;
        Ok(out)
    }

    /// Training-mode forward pass using batch statistics and the given
    /// dropout multipliers. Returns the output and the cache needed by
    /// [`Mlp::backward`].
    pub fn forward_train(
        &self,
        x: ArrayView2<F>,
        dropout: Option<&Array2<F>>,
    ) -> Result<(Array2<F>, ForwardCache<F>)> {
        self.check_input(&x)?;
        let batch = F::of(x.nrows() as f64);
        let eps = F::of(self.arch.bn_eps);
        let act = self.arch.activation;
        let mut h = x.to_owned();
        let mut blocks = Vec::with_capacity(self.norms.len());
        for (i, (layer, bn)) in self.layers.iter().zip(&self.norms).enumerate() {
            let a = h.dot(&layer.weight) + &layer.bias;
            let mean = a.sum_axis(Axis(0)) / batch;
            let centered = &a - &mean;
            let var = centered.mapv(|c| c * c).sum_axis(Axis(0)) / batch;
            let inv_std = var.mapv(|v| F::one() / (v + eps).sqrt());
            let xhat = centered * &inv_std;
            let pre = &xhat * &bn.gamma + &bn.beta;
            let mut out = pre.mapv(|y| act.apply(y));
            let drop = if i == self.arch.dropout_block {
                dropout.cloned()
            } else {
                None
            };
            if let Some(d) = &drop {
                out *= d;
            }
            check_finite(&out, i)?;
            blocks.push(BlockCache {
                input: std::mem::replace(&mut h, out),
                xhat,
                inv_std,
                pre_activation: pre,
                batch_mean: mean,
                batch_var: var,
                dropout: drop,
            });
        }
        let out_layer = self.layers.last().unwrap();
        let out = h.dot(&out_layer.weight) + &out_layer.bias;
        check_finite(&out, self.layers.len() - 1)?;
        Ok((
            out,
            ForwardCache {
                blocks,
                last_hidden: h,
            },
        ))
    }

    /// Exact gradients of a scalar loss given `d_out = ∂loss/∂output`.
    /// Batch statistics are differentiated as functions of the batch.
    pub fn backward(&self, cache: &ForwardCache<F>, d_out: &Array2<F>) -> Result<Gradients<F>> {
        let act = self.arch.activation;
        let batch = F::of(d_out.nrows() as f64);
        let n_layers = self.layers.len();
        let mut layer_grads = Vec::with_capacity(n_layers);
        let mut norm_grads = Vec::with_capacity(self.norms.len());

        let out_layer = &self.layers[n_layers - 1];
        layer_grads.push((cache.last_hidden.t().dot(d_out), d_out.sum_axis(Axis(0))));
        let mut d_h = d_out.dot(&out_layer.weight.t());

        for (i, block) in cache.blocks.iter().enumerate().rev() {
            if let Some(d) = &block.dropout {
                d_h *= d;
            }
            let d_pre = Zip::from(&d_h)
                .and(&block.pre_activation)
                .map_collect(|&g, &y| g * act.derivative(y));
            let d_gamma = (&d_pre * &block.xhat).sum_axis(Axis(0));
            let d_beta = d_pre.sum_axis(Axis(0));
            let d_xhat = d_pre * &self.norms[i].gamma;
            let sum_dx = d_xhat.sum_axis(Axis(0));
            let sum_dx_xhat = (&d_xhat * &block.xhat).sum_axis(Axis(0));
            let mut d_a = d_xhat * batch - &sum_dx - &(&block.xhat * &sum_dx_xhat);
            d_a *= &(&block.inv_std / batch);
            check_finite(&d_a, i)?;

            layer_grads.push((block.input.t().dot(&d_a), d_a.sum_axis(Axis(0))));
            norm_grads.push((d_gamma, d_beta));
            if i > 0 {
                d_h = d_a.dot(&self.layers[i].weight.t());
            }
        }
        layer_grads.reverse();
        norm_grads.reverse();
        Ok(Gradients {
            layers: layer_grads,
            norms: norm_grads,
        })
    }

    /// Exponential moving average of batch statistics (unbiased variance).
    pub fn update_running_stats(&mut self, cache: &ForwardCache<F>, batch: usize) {
        let momentum = F::of(self.arch.bn_momentum);
        let correction = if batch > 1 {
            F::of(batch as f64 / (batch as f64 - 1.0))
        } else {
            F::one()
        };
        for (bn, block) in self.norms.iter_mut().zip(&cache.blocks) {
            Zip::from(&mut bn.running_mean)
                .and(&block.batch_mean)
                .for_each(|r, &m| *r = (F::one() - momentum) * *r + momentum * m);
            Zip::from(&mut bn.running_var)
                .and(&block.batch_var)
                .for_each(|r, &v| *r = (F::one() - momentum) * *r + momentum * v * correction);
        }
    }

    /// Masked loss over a batch together with its gradients.
    pub fn loss_and_gradients(
        &self,
        x_std: ArrayView2<F>,
        masks: &[SamplingMask],
        target_std: ArrayView2<F>,
        dropout: Option<&Array2<F>>,
    ) -> Result<(F, Gradients<F>, ForwardCache<F>)> {
        let input = masked_input(x_std, masks)?;
        let (out, cache) = self.forward_train(input.view(), dropout)?;
        let (loss, d_out) = batch_masked_mse(out.view(), target_std, masks)?;
        let grads = self.backward(&cache, &d_out)?;
        Ok((loss, grads, cache))
    }

    /// Single-vector forward with masking. Train mode uses batch statistics
    /// of this one sample and draws dropout from `rng`.
    pub fn masked_forward<R: Rng + ?Sized>(
        &self,
        x_std: ArrayView1<F>,
        mask: &SamplingMask,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Array1<F>> {
        let x = x_std.insert_axis(Axis(0));
        let input = masked_input(x, std::slice::from_ref(mask))?;
        let out = match mode {
            Mode::Eval => self.predict(input.view())?,
            Mode::Train => {
                let drop = self.sample_dropout(1, rng);
                self.forward_train(input.view(), drop.as_ref())?.0
            }
        };
        Ok(out.row(0).to_owned())
    }
}

fn check_finite<F: Real>(a: &Array2<F>, layer: usize) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(ScsrError::NonFiniteActivation { layer })
    }
}

/// Copies `x_std`, zeroing every position that is not sampled.
pub fn masked_input<F: Real>(x_std: ArrayView2<F>, masks: &[SamplingMask]) -> Result<Array2<F>> {
    if masks.len() != x_std.nrows() {
        return Err(ScsrError::Shape {
            context: "mask count",
            expected: x_std.nrows(),
            actual: masks.len(),
        });
    }
    let mut out = x_std.to_owned();
    for (mut row, mask) in out.rows_mut().into_iter().zip(masks) {
        if mask.len() != row.len() {
            return Err(ScsrError::Shape {
                context: "mask length",
                expected: row.len(),
                actual: mask.len(),
            });
        }
        for (x, &s) in row.iter_mut().zip(&mask.sampled) {
            if !s {
                *x = F::zero();
            }
        }
    }
    Ok(out)
}

/// Mean squared error over the positions that were *not* sampled.
pub fn masked_mse<F: Real>(pred: &[F], target: &[F], mask: &SamplingMask) -> Result<f64> {
    if pred.len() != target.len() || pred.len() != mask.len() {
        return Err(ScsrError::Shape {
            context: "masked_mse operands",
            expected: mask.len(),
            actual: pred.len().max(target.len()),
        });
    }
    let (sum, count) = pred
        .iter()
        .zip(target)
        .zip(&mask.sampled)
        .filter(|(_, &s)| !s)
        .fold((0.0, 0usize), |(s, c), ((&p, &t), _)| {
            let d = (p - t).to_f64().unwrap();
            (s + d * d, c + 1)
        });
    if count == 0 {
        return Err(ScsrError::DegenerateMask("no non-sampled positions".into()));
    }
    Ok(sum / count as f64)
}

/// Batch loss: the average over samples of each sample's masked MSE.
/// Returns the loss and its gradient with respect to `pred`.
pub fn batch_masked_mse<F: Real>(
    pred: ArrayView2<F>,
    target: ArrayView2<F>,
    masks: &[SamplingMask],
) -> Result<(F, Array2<F>)> {
    if pred.dim() != target.dim() || masks.len() != pred.nrows() {
        return Err(ScsrError::Shape {
            context: "batch_masked_mse operands",
            expected: pred.nrows(),
            actual: masks.len(),
        });
    }
    let batch = F::of(pred.nrows() as f64);
    let mut grad = Array2::zeros(pred.raw_dim());
    let mut loss = F::zero();
    for (i, mask) in masks.iter().enumerate() {
        let n = mask.sampled.iter().filter(|&&s| !s).count();
        if n == 0 {
            return Err(ScsrError::DegenerateMask("no non-sampled positions".into()));
        }
        let inv_n = F::one() / F::of(n as f64);
        let mut row_loss = F::zero();
        for (j, &s) in mask.sampled.iter().enumerate() {
            if !s {
                let d = pred[[i, j]] - target[[i, j]];
                row_loss += d * d;
                grad[[i, j]] = F::of(2.0) * d * inv_n / batch;
            }
        }
        loss += row_loss * inv_n;
    }
    Ok((loss / batch, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn tiny_model(seed: u64) -> Mlp<f64> {
        let arch = Architecture::new(12, &[8, 8, 8]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mlp::init(arch, FeatureScaler::identity(12), &mut rng).unwrap()
    }

    #[test]
    fn masked_mse_examples() {
        let mask = SamplingMask::from_indices(4, &[0, 1]);
        let loss = masked_mse(&[0.0f64, 0.0, 0.0, 0.0], &[1.0, 2.0, 3.0, 4.0], &mask).unwrap();
        assert_eq!(loss, 12.5);
        let t = [1.0f64, 2.0, 3.0, 4.0];
        assert_eq!(masked_mse(&t, &t, &mask).unwrap(), 0.0);
        let shifted: Vec<f64> = t.iter().map(|x| x + 1.0).collect();
        assert_eq!(masked_mse(&shifted, &t, &mask).unwrap(), 1.0);
        let all = SamplingMask::from_indices(4, &[0, 1, 2, 3]);
        assert!(matches!(
            masked_mse(&t, &t, &all),
            Err(ScsrError::DegenerateMask(_))
        ));
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut model = tiny_model(1);
        for l in &mut model.layers {
            l.weight.fill(0.0);
            l.bias.fill(0.0);
        }
        let x = Array1::from_shape_fn(12, |i| i as f64 - 5.0);
        let mask = SamplingMask::from_indices(12, &[1, 4, 7]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for mode in [Mode::Eval, Mode::Train] {
            let out = model
                .masked_forward(x.view(), &mask, mode, &mut rng)
                .unwrap();
            assert!(out.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn all_false_mask_zeroes_input() {
        let x = Array2::from_shape_fn((1, 12), |(_, j)| j as f64 + 1.0);
        let mask = SamplingMask::from_indices(12, &[]);
        let input = masked_input(x.view(), &[mask]).unwrap();
        assert!(input.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eval_is_repeatable_and_ignores_hidden_positions() {
        let model = tiny_model(2);
        let mask = SamplingMask::from_indices(12, &[0, 3, 5]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Array1::from_shape_fn(12, |i| (i as f64).sin());
        let a = model
            .masked_forward(x.view(), &mask, Mode::Eval, &mut rng)
            .unwrap();
        let b = model
            .masked_forward(x.view(), &mask, Mode::Eval, &mut rng)
            .unwrap();
        assert_eq!(a, b);
        let mut y = x.clone();
        y[1] = 100.0;
        y[11] = -7.0;
        let c = model
            .masked_forward(y.view(), &mask, Mode::Eval, &mut rng)
            .unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let model = tiny_model(3);
        let x = Array1::<f64>::zeros(11);
        let mask = SamplingMask::from_indices(11, &[0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            model.masked_forward(x.view(), &mask, Mode::Eval, &mut rng),
            Err(ScsrError::Shape { .. })
        ));
    }

    #[test]
    fn eval_batch_equals_per_sample() {
        let model = tiny_model(4);
        let x = Array2::from_shape_fn((5, 12), |(i, j)| ((i * 12 + j) as f64 * 0.37).cos());
        let batch = model.predict(x.view()).unwrap();
        for i in 0..5 {
            let single = model.predict(x.slice(ndarray::s![i..i + 1, ..])).unwrap();
            for j in 0..12 {
                assert!((single[[0, j]] - batch[[i, j]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dropout_rate_and_rescale() {
        let arch = Architecture::new(12, &[8, 64, 8]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model: Mlp<f64> = Mlp::init(arch, FeatureScaler::identity(12), &mut rng).unwrap();
        let drop = model.sample_dropout(100, &mut rng).unwrap();
        let n = drop.len() as f64;
        let zeros = drop.iter().filter(|&&d| d == 0.0).count() as f64;
        assert!(drop.iter().all(|&d| d == 0.0 || d == 2.0));
        // normal approximation to Binomial(6400, 0.5); |z| < 3.29 is p > 0.001
        let z = (zeros - 0.5 * n) / (0.25 * n).sqrt();
        assert!(z.abs() < 3.29, "z = {z}");

        // the second hidden block's output is exactly the swish output times the multipliers
        let x = Array2::from_shape_fn((100, 12), |(i, j)| ((i + 2 * j) as f64 * 0.1).sin());
        let (_, cache) = model.forward_train(x.view(), Some(&drop)).unwrap();
        let block = &cache.blocks[2];
        let swish = cache.blocks[1]
            .pre_activation
            .mapv(|y| y / (1.0 + (-y).exp()));
        let expected = swish * &drop;
        assert!((&block.input - &expected).iter().all(|d| d.abs() < 1e-15));
    }

    #[test]
    fn loss_scaling_scales_gradients() {
        let model = tiny_model(5);
        let x = Array2::from_shape_fn((4, 12), |(i, j)| ((i * 7 + j) as f64 * 0.21).sin());
        let masks: Vec<_> = (0..4)
            .map(|i| SamplingMask::from_indices(12, &[i, i + 3]))
            .collect();
        let input = masked_input(x.view(), &masks).unwrap();
        let (out, cache) = model.forward_train(input.view(), None).unwrap();
        let (_, d_out) = batch_masked_mse(out.view(), x.view(), &masks).unwrap();
        let g1 = model.backward(&cache, &d_out).unwrap();
        let g3 = model.backward(&cache, &(d_out * 3.0)).unwrap();
        let mut scaled = g1.clone();
        scaled.scale(3.0);
        for (a, b) in scaled.blocks().iter().zip(g3.blocks()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn perfect_prediction_has_zero_output_bias_gradient() {
        let model = tiny_model(6);
        let x = Array2::from_shape_fn((4, 12), |(i, j)| ((i * 5 + j) as f64 * 0.3).cos());
        let masks: Vec<_> = (0..4)
            .map(|_| SamplingMask::from_indices(12, &[0, 1, 2]))
            .collect();
        let input = masked_input(x.view(), &masks).unwrap();
        let (out, cache) = model.forward_train(input.view(), None).unwrap();
        // target equals prediction on the non-sampled set
        let (loss, d_out) = batch_masked_mse(out.view(), out.view(), &masks).unwrap();
        assert_eq!(loss, 0.0);
        let g = model.backward(&cache, &d_out).unwrap();
        assert!(g.layers.last().unwrap().1.iter().all(|&v| v == 0.0));
    }
}
