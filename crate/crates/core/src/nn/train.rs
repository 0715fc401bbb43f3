use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{adamw_step, AdamState, AdamWConfig};
use super::scaler::{fit_scaler, FeatureScaler, ScalerMode};
use super::{masked_input, masked_mse, Architecture, Mlp, Real};
use crate::cohort::Cohort;
use crate::engine::mask::{MaskSampler, SamplingMask};
use crate::error::{Result, ScsrError};

/// Offset mixed into the training seed to derive validation mask seeds.
const VAL_SEED_SALT: u64 = 0x5653_4545_4453_4545;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub sampling_rate: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub hidden: Vec<usize>,
    pub dropout_rate: f64,
    pub scaler_mode: ScalerMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 5e-3,
            epochs: 200,
            batch_size: 128,
            sampling_rate: 0.2,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            hidden: vec![1024, 1024, 1024],
            dropout_rate: 0.5,
            scaler_mode: ScalerMode::Standardize,
        }
    }
}

impl TrainConfig {
    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sampling_rate > 0.0 && self.sampling_rate < 1.0) {
            return Err(ScsrError::Config(format!(
                "sampling rate {} not in (0, 1)",
                self.sampling_rate
            )));
        }
        if !(self.lr > 0.0) {
            return Err(ScsrError::Config(format!(
                "learning rate {} must be positive",
                self.lr
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(ScsrError::Config(
                "batch_size and epochs must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| ScsrError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Checkpoint with the lowest validation loss.
    pub model: Mlp<f32>,
    pub best_epoch: usize,
    pub history: Vec<EpochStats>,
}

fn standardized(cohort: &Cohort, scaler: &FeatureScaler) -> Array2<f32> {
    let mut out = Array2::zeros((cohort.len(), cohort.p()));
    for (mut row, s) in out.rows_mut().into_iter().zip(&cohort.subjects) {
        for (dst, v) in row.iter_mut().zip(scaler.transform::<f32>(&s.thickness)) {
            *dst = v;
        }
    }
    out
}

fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    // a trailing batch of one has zero batch variance; fold it into its neighbor
    if out.len() > 1 && out.last().map(|b| b.len()) == Some(1) {
        out.pop();
        let n = out.len();
        let start = (n - 1) * size;
        out[n - 1] = &order[start..];
    }
    out
}

/// Mean masked MSE (standardized units) of an eval-mode model on fixed masks.
pub(crate) fn validation_loss<F: Real>(
    model: &Mlp<F>,
    x_std: &Array2<F>,
    masks: &[SamplingMask],
) -> Result<f64> {
    let input = masked_input(x_std.view(), masks)?;
    let pred = model.predict(input.view())?;
    let mut total = 0.0;
    for (i, mask) in masks.iter().enumerate() {
        let p = pred.index_axis(Axis(0), i);
        let t = x_std.index_axis(Axis(0), i);
        total += masked_mse(p.as_slice().unwrap(), t.as_slice().unwrap(), mask)?;
    }
    Ok(total / masks.len() as f64)
}

/// Trains a reconstruction network on healthy subjects.
///
/// The scaler is fitted on `train`. Every epoch reshuffles the training set
/// and draws a fresh mask per sample; validation uses one fixed mask per
/// subject. The checkpoint with the lowest validation loss is returned.
pub fn train(
    train: &Cohort,
    val: &Cohort,
    cfg: &TrainConfig,
    masks: &MaskSampler,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.len() < 2 {
        return Err(ScsrError::InsufficientData(format!(
            "training needs at least 2 subjects, got {}",
            train.len()
        )));
    }
    if val.is_empty() {
        return Err(ScsrError::InsufficientData(
            "validation cohort is empty".into(),
        ));
    }
    let p = train.p();
    if val.p() != p || masks.p() != p {
        return Err(ScsrError::Shape {
            context: "cohort vertex count",
            expected: p,
            actual: if val.p() != p { val.p() } else { masks.p() },
        });
    }

    let scaler = fit_scaler(train, cfg.scaler_mode)?;
    let x_train = standardized(train, &scaler);
    let x_val = standardized(val, &scaler);

    let mut arch = Architecture::new(p, &cfg.hidden);
    arch.dropout_rate = cfg.dropout_rate;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model: Mlp<f32> = Mlp::init(arch, scaler, &mut rng)?;
    model.train_sampling_rate = masks.rate();

    let val_seed = cfg.seed ^ VAL_SEED_SALT;
    let val_masks = (0..val.len())
        .map(|k| masks.draw(&mut ChaCha8Rng::seed_from_u64(val_seed ^ k as u64)))
        .collect::<Result<Vec<_>>>()?;

    let adam = cfg.adamw();
    let mut state: Option<AdamState<f32>> = None;
    let mut step = 0u64;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Mlp<f32>)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in batches(&order, cfg.batch_size) {
            let x = x_train.select(Axis(0), batch);
            let batch_masks = batch
                .iter()
                .map(|_| masks.draw(&mut rng))
                .collect::<Result<Vec<_>>>()?;
            let dropout = model.sample_dropout(batch.len(), &mut rng);
            let (loss, grads, cache) =
                model.loss_and_gradients(x.view(), &batch_masks, x.view(), dropout.as_ref())?;
            let loss = f64::from(loss);
            if !loss.is_finite() {
                return Err(ScsrError::NonFiniteLoss { epoch });
            }
            loss_sum += loss * batch.len() as f64;
            step += 1;
            let state = state.get_or_insert_with(|| AdamState::zeros_like(&grads));
            adamw_step(&mut model, &grads, state, &adam, step)?;
            model.update_running_stats(&cache, batch.len());
        }
        let train_loss = loss_sum / train.len() as f64;
        let val_loss = validation_loss(&model, &x_val, &val_masks)?;
        if !val_loss.is_finite() {
            return Err(ScsrError::NonFiniteLoss { epoch });
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
        if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch, model.clone()));
        }
    }

    let (_, best_epoch, model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        model,
        best_epoch,
        history,
    })
}
