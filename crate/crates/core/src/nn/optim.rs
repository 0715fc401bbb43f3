use serde::{Deserialize, Serialize};

use super::{Gradients, Mlp, ParamKind, Real};
use crate::error::{Result, ScsrError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 5e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one buffer per parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub m: Vec<Vec<F>>,
    pub v: Vec<Vec<F>>,
}

impl<F: Real> AdamState<F> {
    pub fn zeros_like(grads: &Gradients<F>) -> Self {
        let m: Vec<Vec<F>> = grads
            .blocks()
            .iter()
            .map(|b| vec![F::zero(); b.len()])
            .collect();
        Self { v: m.clone(), m }
    }
}

/// One AdamW update at step `t ≥ 1`:
/// `θ ← θ − lr·m̂/(√v̂ + ε) − lr·wd·θ`, with decay on affine weights only.
pub fn adamw_step<F: Real>(
    model: &mut Mlp<F>,
    grads: &Gradients<F>,
    state: &mut AdamState<F>,
    cfg: &AdamWConfig,
    t: u64,
) -> Result<()> {
    if t == 0 {
        return Err(ScsrError::Config("AdamW step index starts at 1".into()));
    }
    let grad_blocks = grads.blocks();
    for (i, g) in grad_blocks.iter().enumerate() {
        if g.iter().any(|x| !x.is_finite()) {
            return Err(ScsrError::NonFiniteGradient { block: i });
        }
    }

    let (b1, b2) = (F::of(cfg.beta1), F::of(cfg.beta2));
    let bc1 = F::of(1.0 - cfg.beta1.powi(t as i32));
    let bc2 = F::of(1.0 - cfg.beta2.powi(t as i32));
    let lr = F::of(cfg.lr);
    let decay = F::of(cfg.lr * cfg.weight_decay);
    let eps = F::of(cfg.eps);

    let params = model.param_blocks_mut();
    if params.len() != grad_blocks.len() || state.m.len() != params.len() {
        return Err(ScsrError::Shape {
            context: "optimizer parameter blocks",
            expected: params.len(),
            actual: grad_blocks.len(),
        });
    }
    for ((((kind, theta), g), m), v) in params
        .into_iter()
        .zip(grad_blocks)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        let wd = if kind == ParamKind::Weight {
            decay
        } else {
            F::zero()
        };
        for (((th, &gi), mi), vi) in theta.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (F::one() - b1) * gi;
            *vi = b2 * *vi + (F::one() - b2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *th = *th - lr * m_hat / (v_hat.sqrt() + eps) - wd * *th;
        }
    }
    Ok(())
}
