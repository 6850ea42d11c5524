//! LSTM cell: single-step reference path and a batched, tape-recording path
//! used for training.
//!
//! Gate pre-activations are stacked row-wise in the order input, forget,
//! output, candidate, so one GEMM produces all four gates for a batch.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Output = 2,
    Candidate = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Candidate];

    pub fn suffix(self) -> &'static str {
        match self {
            Gate::Input => "i",
            Gate::Forget => "f",
            Gate::Output => "o",
            Gate::Candidate => "c",
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Weights and biases of one LSTM layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `4·hidden × input`, gate blocks stacked as `[w_xi; w_xf; w_xo; w_xc]`.
    pub w_x: Array2<f64>,
    /// `4·hidden × hidden`, gate blocks stacked as `[w_hi; w_hf; w_ho; w_hc]`.
    pub w_h: Array2<f64>,
    /// `4·hidden`, stacked as `[b_i; b_f; b_o; b_c]`.
    pub b: Array1<f64>,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            w_x: Array2::zeros((4 * hidden_dim, input_dim)),
            w_h: Array2::zeros((4 * hidden_dim, hidden_dim)),
            b: Array1::zeros(4 * hidden_dim),
        }
    }

    /// Glorot-uniform weights per gate block, zero biases except the forget
    /// gate, which starts at `forget_bias`.
    pub fn init<R: Rng>(input_dim: usize, hidden_dim: usize, forget_bias: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_dim, hidden_dim);
        let sx = (6.0 / (input_dim + hidden_dim) as f64).sqrt();
        let sh = (6.0 / (2 * hidden_dim) as f64).sqrt();
        p.w_x.iter_mut().for_each(|w| *w = rng.random_range(-sx..=sx));
        p.w_h.iter_mut().for_each(|w| *w = rng.random_range(-sh..=sh));
        p.b.slice_mut(s![hidden_dim..2 * hidden_dim]).fill(forget_bias);
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w_x.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_h.ncols()
    }

    pub fn w_x_gate(&self, gate: Gate) -> ArrayView2<'_, f64> {
        let h = self.hidden_dim();
        let g = gate as usize;
        self.w_x.slice(s![g * h..(g + 1) * h, ..])
    }

    pub fn w_h_gate(&self, gate: Gate) -> ArrayView2<'_, f64> {
        let h = self.hidden_dim();
        let g = gate as usize;
        self.w_h.slice(s![g * h..(g + 1) * h, ..])
    }

    pub fn b_gate(&self, gate: Gate) -> ArrayView1<'_, f64> {
        let h = self.hidden_dim();
        let g = gate as usize;
        self.b.slice(s![g * h..(g + 1) * h])
    }

    pub fn num_params(&self) -> usize {
        self.w_x.len() + self.w_h.len() + self.b.len()
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden_dim();
        if self.w_h.nrows() != 4 * h {
            return Err(Error::dim("lstm w_h rows", 4 * h, self.w_h.nrows()));
        }
        if self.w_x.nrows() != 4 * h {
            return Err(Error::dim("lstm w_x rows", 4 * h, self.w_x.nrows()));
        }
        if self.b.len() != 4 * h {
            return Err(Error::dim("lstm bias", 4 * h, self.b.len()));
        }
        let finite = self
            .w_x
            .iter()
            .chain(self.w_h.iter())
            .chain(self.b.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("lstm parameters".into()));
        }
        Ok(())
    }
}

/// Hidden and cell state of one LSTM layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Array1<f64>,
    pub c: Array1<f64>,
}

impl LstmState {
    pub fn zeros(hidden_dim: usize) -> Self {
        Self {
            h: Array1::zeros(hidden_dim),
            c: Array1::zeros(hidden_dim),
        }
    }
}

fn check_finite(xs: impl IntoIterator<Item = f64>, what: &str) -> Result<()> {
    if xs.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

pub fn lstm_step(params: &LstmParams, x_t: ArrayView1<'_, f64>, prev: &LstmState) -> Result<LstmState> {
    let h = params.hidden_dim();
    if x_t.len() != params.input_dim() {
        return Err(Error::dim("lstm input", params.input_dim(), x_t.len()));
    }
    if prev.h.len() != h || prev.c.len() != h {
        return Err(Error::dim("lstm state", h, prev.h.len().max(prev.c.len())));
    }
    check_finite(x_t.iter().copied(), "lstm input")?;
    check_finite(prev.h.iter().chain(prev.c.iter()).copied(), "lstm state")?;

    let z = params.w_x.dot(&x_t) + params.w_h.dot(&prev.h) + &params.b;
    let mut next = LstmState::zeros(h);
    for j in 0..h {
        let i = sigmoid(z[j]);
        let f = sigmoid(z[h + j]);
        let o = sigmoid(z[2 * h + j]);
        let g = z[3 * h + j].tanh();
        let c = f * prev.c[j] + i * g;
        next.c[j] = c;
        next.h[j] = o * c.tanh();
    }
    Ok(next)
}

/// Runs the cell over `xs` (one row per time step) and returns every state.
pub fn lstm_forward(params: &LstmParams, xs: ArrayView2<'_, f64>, init: &LstmState) -> Result<Vec<LstmState>> {
    if xs.nrows() == 0 {
        return Err(Error::InvalidArgument("empty input sequence".into()));
    }
    let mut states = Vec::with_capacity(xs.nrows());
    let mut prev = init.clone();
    for row in xs.rows() {
        let next = lstm_step(params, row, &prev)?;
        states.push(next.clone());
        prev = next;
    }
    Ok(states)
}

/// Activations recorded by [`forward_batch`] for the backward pass.
///
/// `h[t]`/`c[t]` hold the state *before* step `t`, so both have `T + 1`
/// entries with index 0 being the zero initial state.
#[derive(Debug)]
pub struct LstmTape {
    /// `T × B × I`
    xs: Array3<f64>,
    /// Activated gates per step, `B × 4H` in `[i, f, o, g]` order.
    gates: Vec<Array2<f64>>,
    h: Vec<Array2<f64>>,
    c: Vec<Array2<f64>>,
    tanh_c: Vec<Array2<f64>>,
}

impl LstmTape {
    pub fn last_hidden(&self) -> &Array2<f64> {
        self.h.last().expect("tape has at least the initial state")
    }

    pub fn steps(&self) -> usize {
        self.gates.len()
    }
}

/// Batched forward from a zero initial state. `xs` is `T × B × I`.
pub fn forward_batch(params: &LstmParams, xs: Array3<f64>) -> Result<LstmTape> {
    let (steps, batch, input) = xs.dim();
    if steps == 0 {
        return Err(Error::InvalidArgument("empty input sequence".into()));
    }
    if input != params.input_dim() {
        return Err(Error::dim("lstm input", params.input_dim(), input));
    }
    check_finite(xs.iter().copied(), "lstm input")?;
    let hd = params.hidden_dim();

    let mut tape = LstmTape {
        gates: Vec::with_capacity(steps),
        h: Vec::with_capacity(steps + 1),
        c: Vec::with_capacity(steps + 1),
        tanh_c: Vec::with_capacity(steps),
        xs,
    };
    tape.h.push(Array2::zeros((batch, hd)));
    tape.c.push(Array2::zeros((batch, hd)));

    for t in 0..steps {
        let mut z = Array2::from_shape_fn((batch, 4 * hd), |(_, k)| params.b[k]);
        general_mat_mul(1.0, &tape.xs.index_axis(Axis(0), t), &params.w_x.t(), 1.0, &mut z);
        general_mat_mul(1.0, &tape.h[t], &params.w_h.t(), 1.0, &mut z);

        let c_prev = &tape.c[t];
        let mut c = Array2::zeros((batch, hd));
        let mut h = Array2::zeros((batch, hd));
        let mut tc = Array2::zeros((batch, hd));
        for b in 0..batch {
            let zr = z.row_mut(b).into_slice().expect("standard layout");
            let cp = c_prev.row(b);
            let (i_g, rest) = zr.split_at_mut(hd);
            let (f_g, rest) = rest.split_at_mut(hd);
            let (o_g, g_g) = rest.split_at_mut(hd);
            for j in 0..hd {
                i_g[j] = sigmoid(i_g[j]);
                f_g[j] = sigmoid(f_g[j]);
                o_g[j] = sigmoid(o_g[j]);
                g_g[j] = g_g[j].tanh();
                let cj = f_g[j] * cp[j] + i_g[j] * g_g[j];
                let tcj = cj.tanh();
                c[[b, j]] = cj;
                tc[[b, j]] = tcj;
                h[[b, j]] = o_g[j] * tcj;
            }
        }
        tape.gates.push(z);
        tape.c.push(c);
        tape.tanh_c.push(tc);
        tape.h.push(h);
    }
    Ok(tape)
}

/// Backpropagates `dh_last` (gradient w.r.t. the final hidden state, `B × H`)
/// through every recorded step, accumulating into `grads`.
pub fn backward_batch(params: &LstmParams, tape: &LstmTape, dh_last: &Array2<f64>, grads: &mut LstmParams) {
    let hd = params.hidden_dim();
    let batch = dh_last.nrows();
    let mut dh = dh_last.clone();
    let mut dc = Array2::<f64>::zeros((batch, hd));
    let mut da = Array2::<f64>::zeros((batch, 4 * hd));

    for t in (0..tape.steps()).rev() {
        let gates = &tape.gates[t];
        let tc = &tape.tanh_c[t];
        let c_prev = &tape.c[t];
        for b in 0..batch {
            let gr = gates.row(b);
            let dar = da.row_mut(b).into_slice().expect("standard layout");
            for j in 0..hd {
                let (i, f, o, g) = (gr[j], gr[hd + j], gr[2 * hd + j], gr[3 * hd + j]);
                let tcj = tc[[b, j]];
                let dhj = dh[[b, j]];
                let dcj = dc[[b, j]] + dhj * o * (1.0 - tcj * tcj);
                dar[j] = dcj * g * i * (1.0 - i);
                dar[hd + j] = dcj * c_prev[[b, j]] * f * (1.0 - f);
                dar[2 * hd + j] = dhj * tcj * o * (1.0 - o);
                dar[3 * hd + j] = dcj * i * (1.0 - g * g);
                dc[[b, j]] = dcj * f;
            }
        }
        general_mat_mul(1.0, &da.t(), &tape.xs.index_axis(Axis(0), t), 1.0, &mut grads.w_x);
        general_mat_mul(1.0, &da.t(), &tape.h[t], 1.0, &mut grads.w_h);
        grads.b += &da.sum_axis(Axis(0));
        if t > 0 {
            general_mat_mul(1.0, &da, &params.w_h, 0.0, &mut dh);
        }
    }
}
