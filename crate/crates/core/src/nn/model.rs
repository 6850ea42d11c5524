//! A single recurrent stage: LSTM layer followed by a dense head on the final
//! hidden state, with loss evaluation, backpropagation through time and a
//! finite-difference gradient checker.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Array3, ArrayView2, Axis};
use rand::Rng;

use super::dense::DenseParams;
use super::loss::log_sum_exp;
use super::lstm::{backward_batch, forward_batch, Gate, LstmParams};
use crate::error::{Error, Result};

/// Training target for one sequence.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    /// Softmax + cross-entropy on the head output, scaled by `weight`.
    Class { class: usize, weight: f64 },
    /// Identity head + `½·Σ(pred − target)²`.
    Values(&'a [f64]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeqModel {
    pub lstm: LstmParams,
    pub head: DenseParams,
}

/// Partial derivatives of a scalar loss, shaped like [`SeqModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub lstm: LstmParams,
    pub head: DenseParams,
}

macro_rules! impl_parts {
    ($t:ty) => {
        impl $t {
            /// Flat views of every parameter tensor, in a fixed order.
            pub fn parts(&self) -> [(&'static str, &[f64]); 5] {
                [
                    ("lstm.w_x", self.lstm.w_x.as_slice().expect("standard layout")),
                    ("lstm.w_h", self.lstm.w_h.as_slice().expect("standard layout")),
                    ("lstm.b", self.lstm.b.as_slice().expect("standard layout")),
                    ("head.w", self.head.w.as_slice().expect("standard layout")),
                    ("head.b", self.head.b.as_slice().expect("standard layout")),
                ]
            }

            pub fn parts_mut(&mut self) -> [(&'static str, &mut [f64]); 5] {
                [
                    ("lstm.w_x", self.lstm.w_x.as_slice_mut().expect("standard layout")),
                    ("lstm.w_h", self.lstm.w_h.as_slice_mut().expect("standard layout")),
                    ("lstm.b", self.lstm.b.as_slice_mut().expect("standard layout")),
                    ("head.w", self.head.w.as_slice_mut().expect("standard layout")),
                    ("head.b", self.head.b.as_slice_mut().expect("standard layout")),
                ]
            }

            /// Human-readable name of flat parameter `idx` within part `part`,
            /// e.g. `lstm.w_hf[3]`.
            pub fn param_name(&self, part: &str, idx: usize) -> String {
                let h = self.lstm.hidden_dim();
                let gate_of = |row: usize| Gate::ALL[(row / h).min(3)].suffix();
                match part {
                    "lstm.w_x" => format!("lstm.w_x{}[{idx}]", gate_of(idx / self.lstm.w_x.ncols())),
                    "lstm.w_h" => format!("lstm.w_h{}[{idx}]", gate_of(idx / self.lstm.w_h.ncols())),
                    "lstm.b" => format!("lstm.b_{}[{idx}]", gate_of(idx)),
                    other => format!("{other}[{idx}]"),
                }
            }
        }
    };
}

impl_parts!(SeqModel);
impl_parts!(Gradients);

impl Gradients {
    pub fn zeros_like(model: &SeqModel) -> Self {
        Self {
            lstm: LstmParams::zeros(model.lstm.input_dim(), model.lstm.hidden_dim()),
            head: DenseParams::zeros(model.head.in_dim(), model.head.out_dim()),
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.parts()
            .iter()
            .flat_map(|(_, s)| s.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    fn check_finite(&self) -> Result<()> {
        for (part, values) in self.parts() {
            if let Some(idx) = values.iter().position(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {}", self.param_name(part, idx))));
            }
        }
        Ok(())
    }
}

impl SeqModel {
    pub fn zeros(input_dim: usize, hidden_dim: usize, out_dim: usize) -> Self {
        Self {
            lstm: LstmParams::zeros(input_dim, hidden_dim),
            head: DenseParams::zeros(hidden_dim, out_dim),
        }
    }

    pub fn init<R: Rng>(input_dim: usize, hidden_dim: usize, out_dim: usize, forget_bias: f64, rng: &mut R) -> Self {
        Self {
            lstm: LstmParams::init(input_dim, hidden_dim, forget_bias, rng),
            head: DenseParams::init(hidden_dim, out_dim, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.lstm.input_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.head.out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.lstm.num_params() + self.head.w.len() + self.head.b.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.lstm.validate()?;
        self.head.validate()?;
        if self.head.in_dim() != self.lstm.hidden_dim() {
            return Err(Error::dim("head input", self.lstm.hidden_dim(), self.head.in_dim()));
        }
        Ok(())
    }

    /// Head outputs (`B × out`) for a batch of sequences laid out `T × B × I`.
    pub fn forward_batch(&self, xs: Array3<f64>) -> Result<Array2<f64>> {
        let tape = forward_batch(&self.lstm, xs)?;
        Ok(self.head_out(tape.last_hidden()))
    }

    fn head_out(&self, h: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::from_shape_fn((h.nrows(), self.out_dim()), |(_, k)| self.head.b[k]);
        general_mat_mul(1.0, h, &self.head.w.t(), 1.0, &mut out);
        out
    }

    /// Mean weighted loss over the batch, without gradients.
    pub fn batch_loss(&self, xs: Array3<f64>, targets: &[Target<'_>]) -> Result<f64> {
        check_batch(&xs, targets)?;
        let out = self.forward_batch(xs)?;
        let mut total = 0.0;
        for (row, target) in out.rows().into_iter().zip(targets) {
            let row = row.as_slice().expect("standard layout");
            total += sample_loss(row, target, None)?;
        }
        Ok(total / targets.len() as f64)
    }

    /// Mean weighted loss over the batch and its exact gradient, unrolled
    /// over every time step.
    pub fn batch_loss_and_grads(&self, xs: Array3<f64>, targets: &[Target<'_>]) -> Result<(f64, Gradients)> {
        check_batch(&xs, targets)?;
        let batch = targets.len();
        let tape = forward_batch(&self.lstm, xs)?;
        let h_last = tape.last_hidden();
        let out = self.head_out(h_last);

        let scale = 1.0 / batch as f64;
        let mut d_out = Array2::zeros(out.raw_dim());
        let mut total = 0.0;
        for (b, target) in targets.iter().enumerate() {
            let row = out.row(b);
            let mut d_row = d_out.row_mut(b);
            let d_slice = d_row.as_slice_mut().expect("standard layout");
            total += sample_loss(row.as_slice().expect("standard layout"), target, Some(d_slice))?;
            d_slice.iter_mut().for_each(|d| *d *= scale);
        }
        let loss = total * scale;
        if !loss.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }

        let mut grads = Gradients::zeros_like(self);
        general_mat_mul(1.0, &d_out.t(), h_last, 0.0, &mut grads.head.w);
        grads.head.b = d_out.sum_axis(Axis(0));
        let mut dh = Array2::zeros(h_last.raw_dim());
        general_mat_mul(1.0, &d_out, &self.head.w, 0.0, &mut dh);
        backward_batch(&self.lstm, &tape, &dh, &mut grads.lstm);
        grads.check_finite()?;
        Ok((loss, grads))
    }
}

fn check_batch(xs: &Array3<f64>, targets: &[Target<'_>]) -> Result<()> {
    let batch = xs.len_of(Axis(1));
    if batch != targets.len() || batch == 0 {
        return Err(Error::dim("batch targets", batch, targets.len()));
    }
    Ok(())
}

/// Loss for one head output row; writes `∂loss/∂out` into `grad` if given.
fn sample_loss(out: &[f64], target: &Target<'_>, grad: Option<&mut [f64]>) -> Result<f64> {
    match *target {
        Target::Class { class, weight } => {
            if class >= out.len() {
                return Err(Error::dim("class index", out.len(), class));
            }
            let lse = log_sum_exp(out);
            if let Some(g) = grad {
                for (k, (gk, &z)) in g.iter_mut().zip(out).enumerate() {
                    let p = (z - lse).exp();
                    *gk = weight * (p - if k == class { 1.0 } else { 0.0 });
                }
            }
            Ok(weight * (lse - out[class]))
        }
        Target::Values(t) => {
            if t.len() != out.len() {
                return Err(Error::dim("regression target", out.len(), t.len()));
            }
            if let Some(g) = grad {
                for ((gk, &p), &y) in g.iter_mut().zip(out).zip(t) {
                    *gk = p - y;
                }
            }
            Ok(0.5 * out.iter().zip(t).map(|(p, y)| (p - y) * (p - y)).sum::<f64>())
        }
    }
}

fn single(window: ArrayView2<'_, f64>) -> Array3<f64> {
    window.to_owned().insert_axis(Axis(1))
}

/// Loss and gradients for one window (`T × I`).
pub fn bptt(model: &SeqModel, window: ArrayView2<'_, f64>, target: Target<'_>) -> Result<(f64, Gradients)> {
    model.batch_loss_and_grads(single(window), &[target])
}

/// Largest relative disagreement between [`bptt`] and central differences,
/// `|a − n| / max(|a|, |n|, 1e-8)` over every parameter.
pub fn grad_check(model: &SeqModel, window: ArrayView2<'_, f64>, target: Target<'_>, eps: f64) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::InvalidArgument(format!("eps {eps} outside [1e-7, 1e-3]")));
    }
    let (_, analytic) = bptt(model, window, target)?;
    let xs = single(window);
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (p, (_, grad)) in analytic.parts().iter().enumerate() {
        for (idx, &a) in grad.iter().enumerate() {
            let orig = probe.parts()[p].1[idx];
            probe.parts_mut()[p].1[idx] = orig + eps;
            let up = probe.batch_loss(xs.clone(), &[target])?;
            probe.parts_mut()[p].1[idx] = orig - eps;
            let down = probe.batch_loss(xs.clone(), &[target])?;
            probe.parts_mut()[p].1[idx] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
