//! Python bindings: geometry, the LSTM primitives, datasets, and the two
//! trained networks behind a single `Model` class.

use std::io::BufReader;
use std::path::PathBuf;

use ndarray::{Array1, Array2};
use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use duallstm::checkpoint::Checkpoint;
use duallstm::dataset::{self, SampleSet, SliceConfig, SynthConfig, Track, Units};
use duallstm::eval::{evaluate_lead_times, evaluate_rmse, predict_all};
use duallstm::features::FeatureWindow;
use duallstm::nn::{LstmParams, LstmState};
use duallstm::train::{initial_models, intention_accuracy, train_intention, train_trajectory, HyperConfig};
use duallstm::{Error, Intention, IntentionClassifier, IntentionModel, TrajectoryModel};

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io { .. } => PyIOError::new_err(err.to_string()),
        Error::NonFinite(_) => PyArithmeticError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn intention_from_code(code: &str) -> PyResult<Intention> {
    Intention::ALL
        .into_iter()
        .find(|i| i.code().eq_ignore_ascii_case(code))
        .ok_or_else(|| PyValueError::new_err(format!("unknown intention {code:?}; expected LK, LLC or RLC")))
}

fn matrix(rows: Vec<Vec<f64>>, what: &str) -> PyResult<Array2<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err(format!("{what}: ragged rows")));
    }
    let n = rows.len();
    Ok(Array2::from_shape_vec((n, cols), rows.into_iter().flatten().collect()).expect("shape checked"))
}

/// Straight road with equal-width lanes numbered from the left edge.
#[pyclass(name = "LaneGeometry", from_py_object)]
#[derive(Clone)]
struct PyLaneGeometry {
    inner: duallstm::LaneGeometry,
}

#[pymethods]
impl PyLaneGeometry {
    #[new]
    #[pyo3(signature = (num_lanes=6, lane_width=3.66, leftmost_marking=0.0))]
    fn new(num_lanes: usize, lane_width: f64, leftmost_marking: f64) -> PyResult<Self> {
        let inner = duallstm::LaneGeometry::new(num_lanes, lane_width, leftmost_marking).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn num_lanes(&self) -> usize {
        self.inner.num_lanes()
    }

    #[getter]
    fn lane_width(&self) -> f64 {
        self.inner.lane_width()
    }

    fn centerline(&self, lane: usize) -> PyResult<f64> {
        self.inner.centerline(lane).map_err(to_py)
    }

    fn lane_of(&self, x: f64) -> usize {
        self.inner.lane_of(x)
    }

    /// Lane a vehicle in `current` heads to under intention `LK`, `LLC` or `RLC`.
    fn target_lane(&self, current: usize, intention: &str) -> PyResult<usize> {
        duallstm::geometry::target_lane(current, intention_from_code(intention)?, &self.inner).map_err(to_py)
    }
}

fn geometry_or_default(geom: Option<PyLaneGeometry>) -> duallstm::LaneGeometry {
    geom.map(|g| g.inner).unwrap_or_default()
}

/// Tracks plus their labeled, sliced windows.
#[pyclass(name = "Dataset")]
struct PyDataset {
    tracks: Vec<Track>,
    samples: SampleSet,
    geom: duallstm::LaneGeometry,
}

impl PyDataset {
    fn build(tracks: Vec<Track>, geom: duallstm::LaneGeometry) -> Self {
        let samples = dataset::slice_windows(&tracks, &geom, &SliceConfig::default());
        Self { tracks, samples, geom }
    }

    fn windows(&self) -> Vec<&FeatureWindow> {
        self.samples.windows.iter().collect()
    }

    fn subset(&self, part: SampleSet) -> Self {
        let ids = part.vehicle_ids();
        let tracks = self
            .tracks
            .iter()
            .filter(|t| ids.binary_search(&t.vehicle_id).is_ok())
            .cloned()
            .collect();
        Self {
            tracks,
            samples: part,
            geom: self.geom.clone(),
        }
    }
}

#[pymethods]
impl PyDataset {
    /// Reads an NGSIM-format file (`units` is "meters" or "feet").
    #[staticmethod]
    #[pyo3(signature = (path, units="meters", geom=None))]
    fn from_file(path: PathBuf, units: &str, geom: Option<PyLaneGeometry>) -> PyResult<Self> {
        let units: Units = units.parse().map_err(to_py)?;
        let file = std::fs::File::open(&path).map_err(|e| to_py(Error::io(&path, e)))?;
        let report =
            dataset::parse_trajectory_file(BufReader::new(file), &path.display().to_string(), units).map_err(to_py)?;
        Ok(Self::build(report.tracks, geometry_or_default(geom)))
    }

    #[staticmethod]
    #[pyo3(signature = (seed=0, lane_keep=200, left_change=50, right_change=50, duration_s=120.0, lateral_noise=0.05, geom=None))]
    fn synthetic(
        seed: u64,
        lane_keep: usize,
        left_change: usize,
        right_change: usize,
        duration_s: f64,
        lateral_noise: f64,
        geom: Option<PyLaneGeometry>,
    ) -> PyResult<Self> {
        let geom = geometry_or_default(geom);
        let config = SynthConfig {
            lane_keep_tracks: lane_keep,
            left_change_tracks: left_change,
            right_change_tracks: right_change,
            duration_s,
            lateral_noise,
            ..SynthConfig::default()
        };
        let tracks = dataset::synth_generate(&config, &geom, seed)
            .map_err(to_py)?
            .into_iter()
            .map(|s| s.track)
            .collect();
        Ok(Self::build(tracks, geom))
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        let file = std::fs::File::create(&path).map_err(|e| to_py(Error::io(&path, e)))?;
        dataset::write_trajectory_file(&self.tracks, std::io::BufWriter::new(file)).map_err(|e| to_py(Error::io(&path, e)))
    }

    fn __len__(&self) -> usize {
        self.samples.len()
    }

    #[getter]
    fn num_tracks(&self) -> usize {
        self.tracks.len()
    }

    /// Window counts as `{"LK": n, "LLC": n, "RLC": n}`.
    fn class_counts<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        let counts = self.samples.class_counts();
        for c in Intention::ALL {
            d.set_item(c.code(), counts[c.index()])?;
        }
        Ok(d)
    }

    /// Leakage-free split by vehicle.
    #[pyo3(signature = (train_ratio=0.7, seed=0))]
    fn split(&self, train_ratio: f64, seed: u64) -> PyResult<(Self, Self)> {
        let (train, val) = dataset::split_train_val(&self.samples, train_ratio, seed).map_err(to_py)?;
        Ok((self.subset(train), self.subset(val)))
    }

    /// Features of window `index` as a 50 × 8 nested list.
    fn features(&self, index: usize) -> PyResult<Vec<Vec<f64>>> {
        let w = self
            .samples
            .windows
            .get(index)
            .ok_or_else(|| PyValueError::new_err(format!("window index {index} out of range")))?;
        Ok(w.features.rows().into_iter().map(|r| r.to_vec()).collect())
    }

    fn labels(&self) -> Vec<&'static str> {
        self.samples.windows.iter().map(|w| w.intention.code()).collect()
    }
}

/// Intention classifier and trajectory regressor.
#[pyclass(name = "Model")]
struct PyModel {
    checkpoint: Checkpoint,
}

#[pymethods]
impl PyModel {
    /// All-zero parameters: uniform intentions and uniform-motion trajectories.
    #[staticmethod]
    fn zeros() -> Self {
        let hyper = HyperConfig::default();
        Self {
            checkpoint: Checkpoint::new(IntentionModel::zeros(), TrajectoryModel::zeros(), &hyper),
        }
    }

    #[staticmethod]
    #[pyo3(signature = (seed=0))]
    fn initial(seed: u64) -> Self {
        let hyper = HyperConfig { seed, ..HyperConfig::default() };
        let (i, t) = initial_models(&hyper);
        Self {
            checkpoint: Checkpoint::new(i, t, &hyper),
        }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            checkpoint: Checkpoint::load(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.checkpoint.save(&path).map_err(to_py)
    }

    /// Trains the intention network, then the trajectory network.
    #[staticmethod]
    #[pyo3(signature = (train, val, epochs=5, lr_init=1.0, batch_size=100, seed=0))]
    fn train(
        py: Python<'_>,
        train: &PyDataset,
        val: &PyDataset,
        epochs: usize,
        lr_init: f64,
        batch_size: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let hyper = HyperConfig {
            epochs,
            lr_init,
            batch_size,
            seed,
            ..HyperConfig::default()
        };
        let (ts, vs) = (&train.samples, &val.samples);
        let checkpoint = py
            .detach(|| {
                let (i, _) = train_intention(ts, vs, &hyper)?;
                let (t, _) = train_trajectory(ts, vs, &hyper)?;
                Ok::<_, Error>(Checkpoint::new(i, t, &hyper))
            })
            .map_err(to_py)?;
        Ok(Self { checkpoint })
    }

    /// `[p_LK, p_LLC, p_RLC]` for every window.
    fn intention_probabilities(&self, data: &PyDataset) -> PyResult<Vec<[f64; 3]>> {
        self.checkpoint.intent.probabilities(&data.windows()).map_err(to_py)
    }

    fn intention_accuracy(&self, data: &PyDataset) -> PyResult<f64> {
        intention_accuracy(&self.checkpoint.intent, &data.samples).map_err(to_py)
    }

    /// One dict per window with the predicted 5 s trajectory.
    fn predict<'py>(&self, py: Python<'py>, data: &PyDataset) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let windows = data.windows();
        let ck = &self.checkpoint;
        let preds = predict_all(&ck.intent, &ck.traj, &windows, &data.geom).map_err(to_py)?;
        windows
            .iter()
            .zip(preds)
            .map(|(w, p)| {
                let d = PyDict::new(py);
                d.set_item("vehicle_id", w.vehicle_id)?;
                d.set_item("anchor_frame", w.anchor_frame)?;
                d.set_item("intention", p.recognized().code())?;
                d.set_item("probabilities", p.intention.to_vec())?;
                d.set_item("target_lane", p.target_lane)?;
                d.set_item("x", p.x_hat)?;
                d.set_item("y", p.y_hat)?;
                d.set_item("v", p.v_hat)?;
                d.set_item("a", p.a_hat)?;
                Ok(d)
            })
            .collect()
    }

    /// RMSE at 1..5 s: `{"longitudinal": [...], "lateral": [...], "samples": n}`.
    fn evaluate<'py>(&self, py: Python<'py>, data: &PyDataset) -> PyResult<Bound<'py, PyDict>> {
        let ck = &self.checkpoint;
        let t = evaluate_rmse(&ck.intent, &ck.traj, &data.samples, &data.geom).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("longitudinal", t.longitudinal.to_vec())?;
        d.set_item("lateral", t.lateral.to_vec())?;
        d.set_item("samples", t.sample_count)?;
        Ok(d)
    }

    /// Recognition lead times of every detected lane change.
    fn lead_times<'py>(&self, py: Python<'py>, data: &PyDataset) -> PyResult<Bound<'py, PyDict>> {
        let s = evaluate_lead_times(&self.checkpoint.intent, &data.tracks, &data.geom).map_err(to_py)?;
        let d = PyDict::new(py);
        for (name, stats) in [("LLC", &s.left), ("RLC", &s.right)] {
            let e = PyDict::new(py);
            e.set_item("events", stats.events)?;
            e.set_item("lead_times", stats.lead_times.clone())?;
            e.set_item("missed", stats.missed)?;
            d.set_item(name, e)?;
        }
        d.set_item("positive_rate", s.positive_rate())?;
        Ok(d)
    }
}

#[pyfunction]
fn softmax(logits: Vec<f64>) -> PyResult<Vec<f64>> {
    duallstm::nn::softmax(&logits).map_err(to_py)
}

/// One LSTM step with stacked `[i; f; o; c]` weights. Returns `(h, c)`.
#[pyfunction]
fn lstm_step(
    w_x: Vec<Vec<f64>>,
    w_h: Vec<Vec<f64>>,
    b: Vec<f64>,
    x: Vec<f64>,
    h: Vec<f64>,
    c: Vec<f64>,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let params = LstmParams {
        w_x: matrix(w_x, "w_x")?,
        w_h: matrix(w_h, "w_h")?,
        b: Array1::from(b),
    };
    let prev = LstmState {
        h: Array1::from(h),
        c: Array1::from(c),
    };
    let next = duallstm::nn::lstm_step(&params, Array1::from(x).view(), &prev).map_err(to_py)?;
    Ok((next.h.to_vec(), next.c.to_vec()))
}

/// Euler integration of accelerations into speeds and positions.
#[pyfunction]
#[pyo3(signature = (v0, y0, accel, dt=0.1))]
fn integrate_longitudinal(v0: f64, y0: f64, accel: Vec<f64>, dt: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    duallstm::trajectory::integrate_longitudinal(v0, y0, &accel, dt).map_err(to_py)
}

/// Runs the command-line tool in-process and returns its exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let argv: Vec<String> = std::iter::once("duallstm".to_string()).chain(args).collect();
    py.detach(|| duallstm::cli::run(argv))
}

#[pymodule]
fn pyduallstm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLaneGeometry>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(softmax, m)?)?;
    m.add_function(wrap_pyfunction!(lstm_step, m)?)?;
    m.add_function(wrap_pyfunction!(integrate_longitudinal, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
