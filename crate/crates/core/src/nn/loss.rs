//! Training losses with analytic gradients with respect to network outputs.
//!
//! Only forward values and output gradients are provided; there is no
//! backpropagation through the layers. Every loss averages over the pixels
//! selected by a per-pixel mask.

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub class_weight: f64,
    pub regression_weight: f64,
    pub focal_gamma: f64,
    pub focal_alpha: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            class_weight: 5.0,
            regression_weight: 1.0,
            focal_gamma: 2.0,
            focal_alpha: 0.25,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.class_weight > 0.0 && self.regression_weight > 0.0) {
            return Err(Error::InvalidConfig("loss weights must be positive".into()));
        }
        if !(self.focal_gamma >= 0.0) {
            return Err(Error::InvalidConfig(
                "focal gamma must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

fn check_targets(logits: &Tensor, target: &[u32], mask: &[bool]) -> Result<usize> {
    let s = logits.shape();
    if target.len() != s.plane() || mask.len() != s.plane() {
        return Err(Error::shape(format!(
            "targets/mask must have {} entries for logits {s}",
            s.plane()
        )));
    }
    let mut count = 0;
    for (&t, &m) in target.iter().zip(mask) {
        if m {
            if t as usize >= s.depth {
                return Err(Error::shape(format!(
                    "target class {t} >= {} channels",
                    s.depth
                )));
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(count)
}

/// Mean over masked pixels of `-log softmax(logits)[target]`.
pub fn cross_entropy(logits: &Tensor, target: &[u32], mask: &[bool]) -> Result<(f64, Tensor)> {
    focal_like(logits, target, mask, 0.0, 1.0)
}

/// Mean over masked pixels of `-α (1 - p_t)^γ log p_t`, with `p_t` the
/// softmax probability of the target class.
pub fn focal_loss(
    logits: &Tensor,
    target: &[u32],
    mask: &[bool],
    cfg: &LossConfig,
) -> Result<(f64, Tensor)> {
    focal_like(logits, target, mask, cfg.focal_gamma, cfg.focal_alpha)
}

fn focal_like(
    logits: &Tensor,
    target: &[u32],
    mask: &[bool],
    gamma: f64,
    alpha: f64,
) -> Result<(f64, Tensor)> {
    let count = check_targets(logits, target, mask)?;
    let s = logits.shape();
    let plane = s.plane();
    let probs = log_softmax(logits);
    let mut grad = Tensor::zeros(s);
    let mut total = 0.0;
    for p in 0..plane {
        if !mask[p] {
            continue;
        }
        let t = target[p] as usize;
        let log_pt = probs[t * plane + p];
        let pt = log_pt.exp();
        let q = 1.0 - pt;
        total += -alpha * q.powf(gamma) * log_pt;

        // dL/dz_j = α [γ q^(γ-1) p_t log p_t − q^γ] (δ_jt − p_j)
        let focal_term = if gamma == 0.0 {
            0.0
        } else if q > 0.0 {
            gamma * q.powf(gamma - 1.0) * pt * log_pt
        } else {
            0.0
        };
        let coeff = alpha * (focal_term - q.powf(gamma)) / count as f64;
        for c in 0..s.depth {
            let pj = probs[c * plane + p].exp();
            let delta = if c == t { 1.0 } else { 0.0 };
            grad.data_mut()[c * plane + p] = (coeff * (delta - pj)) as f32;
        }
    }
    Ok((total / count as f64, grad))
}

/// Log-softmax over channels, computed in `f64`.
fn log_softmax(logits: &Tensor) -> Vec<f64> {
    let s = logits.shape();
    let plane = s.plane();
    let mut out = vec![0f64; s.len()];
    for p in 0..plane {
        let max = (0..s.depth)
            .map(|c| logits.data()[c * plane + p] as f64)
            .fold(f64::NEG_INFINITY, f64::max);
        let lse = (0..s.depth)
            .map(|c| (logits.data()[c * plane + p] as f64 - max).exp())
            .sum::<f64>()
            .ln()
            + max;
        for c in 0..s.depth {
            out[c * plane + p] = logits.data()[c * plane + p] as f64 - lse;
        }
    }
    out
}

/// Mean absolute error over every channel of the masked pixels. The
/// subgradient at an exactly zero residual is 0.
pub fn l1_loss(pred: &Tensor, target: &Tensor, mask: &[bool]) -> Result<(f64, Tensor)> {
    let s = pred.shape();
    if target.shape() != s {
        return Err(Error::shape(format!(
            "l1 pred {s} vs target {}",
            target.shape()
        )));
    }
    if mask.len() != s.plane() {
        return Err(Error::shape(format!("l1 mask needs {} entries", s.plane())));
    }
    let pixels = mask.iter().filter(|&&m| m).count();
    if pixels == 0 || s.depth == 0 {
        return Err(Error::EmptyMask);
    }
    let count = (pixels * s.depth) as f64;
    let plane = s.plane();
    let mut grad = Tensor::zeros(s);
    let mut total = 0.0;
    for c in 0..s.depth {
        for p in (0..plane).filter(|&p| mask[p]) {
            let i = c * plane + p;
            let r = pred.data()[i] as f64 - target.data()[i] as f64;
            total += r.abs();
            let sign = if r > 0.0 {
                1.0
            } else if r < 0.0 {
                -1.0
            } else {
                0.0
            };
            grad.data_mut()[i] = (sign / count) as f32;
        }
    }
    Ok((total / count, grad))
}

/// Second-stage loss: weighted focal loss on class logits plus weighted L1
/// on box parameters of object cells.
pub struct DetectionLoss {
    pub total: f64,
    pub class_loss: f64,
    pub box_loss: f64,
    pub class_grad: Tensor,
    pub box_grad: Tensor,
}

pub fn detection_loss(
    class_logits: &Tensor,
    class_target: &[u32],
    class_mask: &[bool],
    box_pred: &Tensor,
    box_target: &Tensor,
    box_mask: &[bool],
    cfg: &LossConfig,
) -> Result<DetectionLoss> {
    cfg.validate()?;
    let (class_loss, mut class_grad) = focal_loss(class_logits, class_target, class_mask, cfg)?;
    let (box_loss, mut box_grad) = l1_loss(box_pred, box_target, box_mask)?;
    for g in class_grad.data_mut() {
        *g = (*g as f64 * cfg.class_weight) as f32;
    }
    for g in box_grad.data_mut() {
        *g = (*g as f64 * cfg.regression_weight) as f32;
    }
    Ok(DetectionLoss {
        total: cfg.class_weight * class_loss + cfg.regression_weight * box_loss,
        class_loss,
        box_loss,
        class_grad,
        box_grad,
    })
}
