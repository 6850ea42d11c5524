//! Text checkpoint holding both networks.
//!
//! ```text
//! DUALLSTM v1
//! TENSOR intent.lstm.w_xi 64 8
//! <row-major values, one matrix row per line>
//! ...
//! HYPER
//! dt=0.1
//! ...
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{s, Array1, Array2};

use crate::error::{Error, Result};
use crate::features::DT;
use crate::intention::IntentionModel;
use crate::nn::{DenseParams, Gate, LstmParams, SeqModel};
use crate::train::HyperConfig;
use crate::trajectory::TrajectoryModel;

pub const MAGIC: &str = "DUALLSTM v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub intent: IntentionModel,
    pub traj: TrajectoryModel,
    /// Free-form `key=value` metadata: dimensions, time step, clipping,
    /// forget bias and the training hyperparameters.
    pub hyper: BTreeMap<String, String>,
}

fn tensors(prefix: &str, m: &SeqModel) -> Vec<(String, Array2<f64>)> {
    let mut out = Vec::new();
    for g in Gate::ALL {
        out.push((format!("{prefix}.lstm.w_x{}", g.suffix()), m.lstm.w_x_gate(g).to_owned()));
    }
    for g in Gate::ALL {
        out.push((format!("{prefix}.lstm.w_h{}", g.suffix()), m.lstm.w_h_gate(g).to_owned()));
    }
    for g in Gate::ALL {
        let b = m.lstm.b_gate(g);
        out.push((format!("{prefix}.lstm.b_{}", g.suffix()), b.to_owned().insert_axis(ndarray::Axis(1))));
    }
    out.push((format!("{prefix}.head.w"), m.head.w.clone()));
    out.push((format!("{prefix}.head.b"), m.head.b.clone().insert_axis(ndarray::Axis(1))));
    out
}

fn assemble(prefix: &str, map: &mut BTreeMap<String, Array2<f64>>, source: &str) -> Result<SeqModel> {
    let mut take = |name: String| {
        map.remove(&name)
            .ok_or_else(|| Error::InvalidArgument(format!("{source}: missing tensor {name}")))
    };
    let head_w = take(format!("{prefix}.head.w"))?;
    let head_b = take(format!("{prefix}.head.b"))?;
    let first = take(format!("{prefix}.lstm.w_xi"))?;
    let (hidden, input) = first.dim();
    let mut lstm = LstmParams::zeros(input, hidden);
    for g in Gate::ALL {
        let k = g as usize;
        let rows = s![k * hidden..(k + 1) * hidden, ..];
        let wx = if g == Gate::Input { first.clone() } else { take(format!("{prefix}.lstm.w_x{}", g.suffix()))? };
        let wh = take(format!("{prefix}.lstm.w_h{}", g.suffix()))?;
        let b = take(format!("{prefix}.lstm.b_{}", g.suffix()))?;
        let shape_ok = wx.dim() == (hidden, input) && wh.dim() == (hidden, hidden) && b.dim() == (hidden, 1);
        if !shape_ok {
            return Err(Error::InvalidArgument(format!(
                "{source}: tensor shapes of gate {} in {prefix} disagree",
                g.suffix()
            )));
        }
        lstm.w_x.slice_mut(rows).assign(&wx);
        lstm.w_h.slice_mut(rows).assign(&wh);
        lstm.b.slice_mut(s![k * hidden..(k + 1) * hidden]).assign(&b.column(0));
    }
    if head_b.ncols() != 1 {
        return Err(Error::dim("head bias columns", 1, head_b.ncols()));
    }
    let head = DenseParams {
        w: head_w,
        b: Array1::from_iter(head_b.column(0).iter().copied()),
    };
    let model = SeqModel { lstm, head };
    model.validate()?;
    Ok(model)
}

impl Checkpoint {
    pub fn new(intent: IntentionModel, traj: TrajectoryModel, hyper: &HyperConfig) -> Self {
        let mut meta = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            meta.insert(k.to_string(), v);
        };
        put("input_dim", intent.0.input_dim().to_string());
        put("intent_hidden", intent.0.lstm.hidden_dim().to_string());
        put("traj_hidden", traj.0.lstm.hidden_dim().to_string());
        put("dt", DT.to_string());
        put("init_seed", hyper.seed.to_string());
        for line in hyper.to_config().lines() {
            if let Some((k, v)) = line.split_once('=') {
                put(k, v.to_string());
            }
        }
        Self { intent, traj, hyper: meta }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from(MAGIC);
        out.push('\n');
        let all = tensors("intent", &self.intent.0).into_iter().chain(tensors("traj", &self.traj.0));
        for (name, t) in all {
            let _ = writeln!(out, "TENSOR {name} {} {}", t.nrows(), t.ncols());
            for row in t.rows() {
                let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        }
        out.push_str("HYPER\n");
        for (k, v) in &self.hyper {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn from_text(text: &str, source: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end()));
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: source.to_string(),
            line,
            msg,
        };
        match lines.next() {
            Some((_, MAGIC)) => {}
            Some((_, other)) => {
                return Err(Error::Version(format!("{source}: expected header {MAGIC:?}, found {other:?}")));
            }
            None => return Err(Error::Version(format!("{source}: empty checkpoint"))),
        }
        let mut map = BTreeMap::new();
        let mut hyper = BTreeMap::new();
        let mut in_hyper = false;
        while let Some((n, line)) = lines.next() {
            if line.is_empty() {
                continue;
            }
            if in_hyper {
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| parse_err(n, format!("expected key=value, got {line:?}")))?;
                hyper.insert(k.trim().to_string(), v.trim().to_string());
                continue;
            }
            if line == "HYPER" {
                in_hyper = true;
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [tag, name, rows, cols] = parts[..] else {
                return Err(parse_err(n, format!("expected TENSOR header, got {line:?}")));
            };
            if tag != "TENSOR" {
                return Err(parse_err(n, format!("expected TENSOR header, got {line:?}")));
            }
            let dim = |s: &str| s.parse::<usize>().map_err(|e| parse_err(n, format!("bad dimension {s:?}: {e}")));
            let (rows, cols) = (dim(rows)?, dim(cols)?);
            let mut values = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (m, row) = lines
                    .next()
                    .ok_or_else(|| parse_err(n, format!("tensor {name} truncated")))?;
                let before = values.len();
                for tok in row.split_whitespace() {
                    let v: f64 = tok.parse().map_err(|e| parse_err(m, format!("bad value {tok:?}: {e}")))?;
                    values.push(v);
                }
                if values.len() - before != cols {
                    return Err(parse_err(m, format!("tensor {name}: expected {cols} values, got {}", values.len() - before)));
                }
            }
            let t = Array2::from_shape_vec((rows, cols), values).expect("row count checked");
            if map.insert(name.to_string(), t).is_some() {
                return Err(parse_err(n, format!("duplicate tensor {name}")));
            }
        }
        let intent = IntentionModel(assemble("intent", &mut map, source)?);
        let traj = TrajectoryModel(assemble("traj", &mut map, source)?);
        if let Some(extra) = map.keys().next() {
            return Err(Error::InvalidArgument(format!("{source}: unexpected tensor {extra}")));
        }
        intent.validate()?;
        traj.validate()?;
        Ok(Self { intent, traj, hyper })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, &path.display().to_string())
    }
}
