use super::model::{Gradients, SeqModel};
use crate::error::{Error, Result};

/// Plain SGD step with global-norm clipping. Returns the gradient norm
/// measured before clipping.
pub fn sgd_update(params: &mut SeqModel, grads: &Gradients, lr: f64, clip_norm: f64) -> Result<f64> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidArgument(format!("learning rate must be positive, got {lr}")));
    }
    if !(clip_norm > 0.0) {
        return Err(Error::InvalidArgument(format!("clip_norm must be positive, got {clip_norm}")));
    }
    let norm = grads.global_norm();
    if !norm.is_finite() {
        return Err(Error::NonFinite("gradients".into()));
    }
    let scale = if norm > clip_norm { clip_norm / norm } else { 1.0 };
    let step = lr * scale;
    for ((_, p), (_, g)) in params.parts_mut().into_iter().zip(grads.parts()) {
        for (pv, gv) in p.iter_mut().zip(g) {
            *pv -= step * gv;
        }
    }
    Ok(norm)
}
