//! From-scratch recurrent learning kernel.

pub mod dense;
pub mod loss;
pub mod lstm;
pub mod model;
pub mod sgd;

pub use dense::{dense_forward, DenseParams};
pub use loss::{cross_entropy_loss, l2_loss, softmax};
pub use lstm::{lstm_forward, lstm_step, Gate, LstmParams, LstmState};
pub use model::{bptt, grad_check, Gradients, SeqModel, Target};
pub use sgd::sgd_update;
