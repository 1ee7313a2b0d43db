//! Training loss over score curves.
//!
//! Three terms, each a mean over the sequence: a Huber value term, a squared
//! penalty on first-difference mismatch (how much the curve moves), and a
//! hinge on first-difference direction disagreement (which way it moves).
//!
//! ```text
//! L = L_base + lambda_magn * L_magn + lambda_trend * L_trend
//! ```
//!
//! Every entry point returns the loss value together with its exact gradient
//! with respect to the predicted curve.

use crate::error::{Error, Result};

/// Term weights and shape parameters. Defaults match the tuned values used
/// throughout: magnitude 0.5, trend 0.3, Huber delta 1.0, deadzone 1e-4.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda_magn: f64,
    pub lambda_trend: f64,
    pub huber_delta: f64,
    pub trend_deadzone: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_magn: 0.5,
            lambda_trend: 0.3,
            huber_delta: 1.0,
            trend_deadzone: 1e-4,
        }
    }
}

impl LossWeights {
    /// Value term only; used for ablation baselines.
    pub fn base_only() -> Self {
        LossWeights {
            lambda_magn: 0.0,
            lambda_trend: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_magn.is_finite() && self.lambda_magn >= 0.0) {
            return Err(Error::invalid("lambda_magn must be finite and non-negative"));
        }
        if !(self.lambda_trend.is_finite() && self.lambda_trend >= 0.0) {
            return Err(Error::invalid("lambda_trend must be finite and non-negative"));
        }
        if !(self.huber_delta.is_finite() && self.huber_delta > 0.0) {
            return Err(Error::invalid("huber_delta must be finite and positive"));
        }
        if !(self.trend_deadzone.is_finite() && self.trend_deadzone >= 0.0) {
            return Err(Error::invalid("trend_deadzone must be finite and non-negative"));
        }
        Ok(())
    }
}

/// A loss value and its gradient with respect to the prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTerm {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Sign with a symmetric deadzone: 0 whenever `|x| <= deadzone`.
#[inline]
pub fn sign_with_deadzone(x: f64, deadzone: f64) -> f64 {
    if x.abs() <= deadzone {
        0.0
    } else if x > 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn check_pair(pred: &[f64], gt: &[f64], min_len: usize) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::invalid(format!(
            "curve lengths differ: {} vs {}",
            pred.len(),
            gt.len()
        )));
    }
    if pred.len() < min_len {
        return Err(Error::invalid(format!(
            "need at least {min_len} frames, got {}",
            pred.len()
        )));
    }
    Ok(())
}

/// Mean Huber loss: `0.5 e^2 / delta` inside `|e| < delta`, `|e| - 0.5 delta`
/// outside. Value and slope are continuous at the joint.
pub fn base_loss(pred: &[f64], gt: &[f64], delta: f64) -> Result<LossTerm> {
    check_pair(pred, gt, 1)?;
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::invalid("huber delta must be finite and positive"));
    }
    let t = pred.len() as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for i in 0..pred.len() {
        let e = pred[i] - gt[i];
        if e.abs() < delta {
            value += 0.5 * e * e / delta;
            grad[i] = e / delta / t;
        } else {
            value += e.abs() - 0.5 * delta;
            grad[i] = e.signum() / t;
        }
    }
    Ok(LossTerm {
        value: value / t,
        grad,
    })
}

/// Mean squared mismatch of first differences; penalizes moving by the wrong
/// amount regardless of absolute level (shift-invariant).
pub fn magnitude_loss(pred: &[f64], gt: &[f64]) -> Result<LossTerm> {
    check_pair(pred, gt, 2)?;
    let m = (pred.len() - 1) as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for i in 0..pred.len() - 1 {
        let r = (pred[i + 1] - pred[i]) - (gt[i + 1] - gt[i]);
        value += r * r;
        grad[i + 1] += 2.0 * r / m;
        grad[i] -= 2.0 * r / m;
    }
    Ok(LossTerm {
        value: value / m,
        grad,
    })
}

/// Mean hinge on direction disagreement: a step against the reference
/// direction costs its size; steps with the reference (or where the
/// reference is flat within the deadzone) are free. The kink at zero uses
/// subgradient 0.
pub fn trend_loss(pred: &[f64], gt: &[f64], deadzone: f64) -> Result<LossTerm> {
    check_pair(pred, gt, 2)?;
    if !(deadzone.is_finite() && deadzone >= 0.0) {
        return Err(Error::invalid("deadzone must be finite and non-negative"));
    }
    let m = (pred.len() - 1) as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for i in 0..pred.len() - 1 {
        let s = sign_with_deadzone(gt[i + 1] - gt[i], deadzone);
        let dp = pred[i + 1] - pred[i];
        let h = -dp * s;
        if h > 0.0 {
            value += h;
            grad[i + 1] -= s / m;
            grad[i] += s / m;
        }
    }
    Ok(LossTerm {
        value: value / m,
        grad,
    })
}

/// Weighted sum of the three terms with the combined exact gradient.
pub fn total_loss(pred: &[f64], gt: &[f64], w: &LossWeights) -> Result<LossTerm> {
    w.validate()?;
    check_pair(pred, gt, 2)?;
    let base = base_loss(pred, gt, w.huber_delta)?;
    let magn = magnitude_loss(pred, gt)?;
    let trend = trend_loss(pred, gt, w.trend_deadzone)?;
    let mut grad = base.grad;
    for i in 0..grad.len() {
        grad[i] += w.lambda_magn * magn.grad[i] + w.lambda_trend * trend.grad[i];
    }
    Ok(LossTerm {
        value: base.value + w.lambda_magn * magn.value + w.lambda_trend * trend.value,
        grad,
    })
}
