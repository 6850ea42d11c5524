use crate::error::{Error, Result};

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::InvalidArgument("softmax of empty vector".into()));
    }
    if !logits.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("softmax logits".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// `ln Σ exp(z)` without overflow.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln()
}

/// Index of the single 1 in a one-hot vector.
pub fn one_hot_class(target: &[f64]) -> Result<usize> {
    let mut class = None;
    for (k, &v) in target.iter().enumerate() {
        if v == 1.0 && class.is_none() {
            class = Some(k);
        } else if v != 0.0 {
            return Err(Error::InvalidArgument(format!("target is not one-hot: {target:?}")));
        }
    }
    class.ok_or_else(|| Error::InvalidArgument(format!("target is not one-hot: {target:?}")))
}

pub fn cross_entropy_loss(probs: &[f64], target: &[f64]) -> Result<f64> {
    if probs.len() != target.len() {
        return Err(Error::dim("cross-entropy target", probs.len(), target.len()));
    }
    let class = one_hot_class(target)?;
    Ok(-probs[class].ln())
}

/// `½·Σ(pred − target)²`
pub fn l2_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::dim("l2 target", pred.len(), target.len()));
    }
    Ok(0.5 * pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>())
}
