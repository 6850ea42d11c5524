//! `duallstm synth|train|predict|eval`.
//!
//! Every command computes all of its outputs in memory first and only then
//! writes them, each through a temporary file renamed into place, so a
//! failing run leaves no partial files behind. Each command also writes a
//! run manifest next to its main output.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::checkpoint::Checkpoint;
use crate::dataset::{parse_trajectory_file, slice_windows, split_train_val, synth_generate, write_trajectory_file};
use crate::dataset::{SampleSet, SliceConfig, SynthConfig, Track, Units};
use crate::error::{Error, Result};
use crate::eval::{constant_velocity, evaluate_lead_times, evaluate_rmse, predict_all, rmse_from_forecasts};
use crate::features::FeatureWindow;
use crate::geometry::LaneGeometry;
use crate::train::{train_intention, train_trajectory, HyperConfig};
use crate::trajectory::format_prediction;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "duallstm", version, about = "Intention-aware dual-LSTM trajectory prediction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic NGSIM-format tracks.
    Synth(SynthArgs),
    /// Train both networks and write a checkpoint.
    Train(TrainArgs),
    /// Write one trajectory record per feasible anchor.
    Predict(PredictArgs),
    /// Write RMSE and lead-time tables.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// NGSIM-format trajectory file; repeat for several files.
    #[arg(long = "data", required = true)]
    pub data: Vec<PathBuf>,
    /// Lane geometry (`key=value`); defaults to I-80.
    #[arg(long)]
    pub geom: Option<PathBuf>,
    #[arg(long, default_value = "meters")]
    pub units: Units,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator settings (`key=value`); defaults when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub geom: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Hyperparameters (`key=value`); defaults when absent.
    #[arg(long)]
    pub hyper: Option<PathBuf>,
    /// Output checkpoint. Histories and the manifest are written next to it.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Overrides the seed of the hyperparameter file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fraction of vehicles used for training; the rest validate.
    #[arg(long, default_value_t = 0.7)]
    pub train_ratio: f64,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output directory for `rmse.csv`, `baseline_rmse.csv`,
    /// `lead_times.csv` and `manifest.txt`.
    #[arg(long)]
    pub out: PathBuf,
}

/// Provenance record written alongside every command's outputs.
#[derive(Debug, Clone, Default)]
pub struct RunManifest {
    pub command: String,
    pub seed: Option<u64>,
    /// `(role, path, sha256)`.
    pub inputs: Vec<(String, String, String)>,
    pub outputs: Vec<String>,
    pub notes: Vec<(String, String)>,
    pub wall_time_s: f64,
}

impl RunManifest {
    fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            ..Self::default()
        }
    }

    fn input(&mut self, role: &str, path: &Path, bytes: &[u8]) {
        self.inputs.push((role.to_string(), path.display().to_string(), sha256_hex(bytes)));
    }

    fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.push((key.to_string(), value.to_string()));
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "command={}", self.command);
        let _ = writeln!(out, "tool_version={} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
        if let Some(seed) = self.seed {
            let _ = writeln!(out, "seed={seed}");
        }
        for (role, path, digest) in &self.inputs {
            let _ = writeln!(out, "input.{role}={path} sha256={digest}");
        }
        for path in &self.outputs {
            let _ = writeln!(out, "output={path}");
        }
        for (k, v) in &self.notes {
            let _ = writeln!(out, "{k}={v}");
        }
        let _ = writeln!(out, "wall_time_s={:.3}", self.wall_time_s);
        out
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read_bytes(path)?)
        .map_err(|e| Error::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, e)))
}

fn load_geometry(path: Option<&Path>, manifest: &mut RunManifest) -> Result<LaneGeometry> {
    match path {
        None => Ok(LaneGeometry::default()),
        Some(p) => {
            let text = read_text(p)?;
            manifest.input("geom", p, text.as_bytes());
            LaneGeometry::from_config(&text, &p.display().to_string())
        }
    }
}

fn load_tracks(args: &DataArgs, manifest: &mut RunManifest) -> Result<(Vec<Track>, Vec<(String, String)>)> {
    let mut tracks = Vec::new();
    let mut sources = Vec::new();
    let (mut rows, mut malformed, mut gaps) = (0, 0, 0);
    for path in &args.data {
        let bytes = read_bytes(path)?;
        manifest.input("data", path, &bytes);
        sources.push((path.display().to_string(), sha256_hex(&bytes)));
        let report = parse_trajectory_file(BufReader::new(bytes.as_slice()), &path.display().to_string(), args.units)?;
        rows += report.rows;
        malformed += report.malformed;
        gaps += report.gap_splits;
        tracks.extend(report.tracks);
    }
    manifest.note("rows", rows);
    manifest.note("malformed_rows", malformed);
    manifest.note("gap_splits", gaps);
    manifest.note("tracks", tracks.len());
    Ok((tracks, sources))
}

fn samples(tracks: &[Track], geom: &LaneGeometry, sources: Vec<(String, String)>, manifest: &mut RunManifest) -> Result<SampleSet> {
    let mut set = slice_windows(tracks, geom, &SliceConfig::default());
    set.provenance.sources = sources;
    manifest.note("windows", set.len());
    manifest.note("short_tracks", set.short_tracks);
    manifest.note("skipped_anchors", set.skipped_anchors);
    if set.is_empty() {
        return Err(Error::NoSamples);
    }
    Ok(set)
}

/// Writes every file or none: each goes to a temporary sibling first and
/// all are renamed once every write succeeded.
fn commit(files: Vec<(PathBuf, String)>) -> Result<()> {
    let mut staged = Vec::with_capacity(files.len());
    for (path, content) in files {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut tmp = path.clone().into_os_string();
        tmp.push(".partial");
        let tmp = PathBuf::from(tmp);
        if let Err(e) = std::fs::write(&tmp, content) {
            staged.iter().for_each(|(t, _): &(PathBuf, PathBuf)| {
                let _ = std::fs::remove_file(t);
            });
            return Err(Error::io(&tmp, e));
        }
        staged.push((tmp, path));
    }
    for (tmp, path) in staged {
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("synth");
    manifest.seed = Some(args.seed);
    let config = match &args.config {
        None => SynthConfig::default(),
        Some(p) => {
            let text = read_text(p)?;
            manifest.input("config", p, text.as_bytes());
            SynthConfig::from_config(&text, &p.display().to_string())?
        }
    };
    let geom = load_geometry(args.geom.as_deref(), &mut manifest)?;
    let tracks: Vec<Track> = synth_generate(&config, &geom, args.seed)?.into_iter().map(|s| s.track).collect();
    let mut buf = Vec::new();
    write_trajectory_file(&tracks, &mut buf).map_err(|e| Error::io(&args.out, e))?;
    let data = String::from_utf8(buf).expect("writer emits ASCII");
    manifest.note("tracks", tracks.len());
    manifest.note("synth_config", config.to_config().trim_end().replace('\n', ";"));
    let manifest_path = sibling(&args.out, ".manifest");
    manifest.outputs = vec![args.out.display().to_string()];
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    commit(vec![(args.out.clone(), data), (manifest_path, manifest.to_text())])
}

/// Outcome of a training run that produced a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainOutcome {
    Converged,
    /// A stage hit a non-finite loss; its last good parameters were kept.
    Diverged,
}

pub fn cmd_train(args: &TrainArgs) -> Result<TrainOutcome> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("train");
    let mut hyper = match &args.hyper {
        None => HyperConfig::default(),
        Some(p) => {
            let text = read_text(p)?;
            manifest.input("hyper", p, text.as_bytes());
            HyperConfig::from_config(&text, &p.display().to_string())?
        }
    };
    if let Some(seed) = args.seed {
        hyper.seed = seed;
    }
    manifest.seed = Some(hyper.seed);
    let geom = load_geometry(args.data.geom.as_deref(), &mut manifest)?;
    let (tracks, sources) = load_tracks(&args.data, &mut manifest)?;
    let set = samples(&tracks, &geom, sources, &mut manifest)?;
    let (train, val) = split_train_val(&set, args.train_ratio, hyper.seed)?;
    manifest.note("train_windows", train.len());
    manifest.note("val_windows", val.len());

    let (intent, intent_history) = train_intention(&train, &val, &hyper)?;
    let (traj, traj_history) = train_trajectory(&train, &val, &hyper)?;
    let mut outcome = TrainOutcome::Converged;
    for (stage, h) in [("intent", &intent_history), ("traj", &traj_history)] {
        let total: f64 = h.epochs.iter().map(|e| e.wall_time_s).sum();
        manifest.note(&format!("{stage}_epoch_time_s"), format!("{total:.3}"));
        if let Some(best) = h.best_epoch {
            manifest.note(&format!("{stage}_best_epoch"), best);
        }
        if let Some(why) = &h.diverged {
            manifest.note(&format!("{stage}_diverged"), why);
            outcome = TrainOutcome::Diverged;
        }
    }
    let checkpoint = Checkpoint::new(intent, traj, &hyper);
    let intent_path = sibling(&args.checkpoint, ".intent_history.csv");
    let traj_path = sibling(&args.checkpoint, ".traj_history.csv");
    let manifest_path = sibling(&args.checkpoint, ".manifest");
    manifest.outputs = [&args.checkpoint, &intent_path, &traj_path]
        .iter()
        .map(|p| p.display().to_string())
        .collect();
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    commit(vec![
        (args.checkpoint.clone(), checkpoint.to_text()),
        (intent_path, intent_history.to_table()),
        (traj_path, traj_history.to_table()),
        (manifest_path, manifest.to_text()),
    ])?;
    Ok(outcome)
}

fn load_checkpoint(path: &Path, manifest: &mut RunManifest) -> Result<Checkpoint> {
    let text = read_text(path)?;
    manifest.input("checkpoint", path, text.as_bytes());
    Checkpoint::from_text(&text, &path.display().to_string())
}

pub fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("predict");
    let ck = load_checkpoint(&args.checkpoint, &mut manifest)?;
    let geom = load_geometry(args.data.geom.as_deref(), &mut manifest)?;
    let (tracks, sources) = load_tracks(&args.data, &mut manifest)?;
    let set = samples(&tracks, &geom, sources, &mut manifest)?;
    let refs: Vec<&FeatureWindow> = set.windows.iter().collect();
    let predictions = predict_all(&ck.intent, &ck.traj, &refs, &geom)?;
    let mut out = String::new();
    let (mut clamped, mut negative) = (0, 0);
    for (w, p) in refs.iter().zip(&predictions) {
        out.push_str(&format_prediction(w.vehicle_id, w.anchor_frame, p));
        clamped += p.clamped;
        negative += p.negative_speeds;
    }
    manifest.note("records", predictions.len());
    manifest.note("clamped_deviations", clamped);
    manifest.note("negative_speeds", negative);
    manifest.outputs = vec![args.out.display().to_string()];
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    commit(vec![(args.out.clone(), out), (sibling(&args.out, ".manifest"), manifest.to_text())])
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let started = Instant::now();
    let mut manifest = RunManifest::new("eval");
    let ck = load_checkpoint(&args.checkpoint, &mut manifest)?;
    let geom = load_geometry(args.data.geom.as_deref(), &mut manifest)?;
    let (tracks, sources) = load_tracks(&args.data, &mut manifest)?;
    let set = samples(&tracks, &geom, sources, &mut manifest)?;
    let rmse = evaluate_rmse(&ck.intent, &ck.traj, &set, &geom)?;
    let refs: Vec<&FeatureWindow> = set.windows.iter().collect();
    let cv: Vec<_> = refs.iter().map(|w| constant_velocity(w)).collect();
    let baseline = rmse_from_forecasts(&refs, &cv)?;
    let leads = evaluate_lead_times(&ck.intent, &tracks, &geom)?;
    manifest.note("samples", rmse.sample_count);
    manifest.note("lane_change_events", leads.events());
    let files = [
        ("rmse.csv", rmse.to_table()),
        ("baseline_rmse.csv", baseline.to_table()),
        ("lead_times.csv", leads.to_table()),
    ];
    manifest.outputs = files.iter().map(|(f, _)| args.out.join(f).display().to_string()).collect();
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    let mut all: Vec<(PathBuf, String)> = files.into_iter().map(|(f, s)| (args.out.join(f), s)).collect();
    all.push((args.out.join("manifest.txt"), manifest.to_text()));
    commit(all)
}

/// Exit code for a library error: numeric failures get 3, everything else
/// concerns the inputs and gets 2.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonFinite(_) | Error::Dimension { .. } => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a).map(|_| EXIT_OK),
        Command::Train(a) => cmd_train(a).map(|o| match o {
            TrainOutcome::Converged => EXIT_OK,
            TrainOutcome::Diverged => {
                eprintln!("duallstm: training diverged; the last finite parameters were written");
                EXIT_NUMERIC
            }
        }),
        Command::Predict(a) => cmd_predict(a).map(|_| EXIT_OK),
        Command::Eval(a) => cmd_eval(a).map(|_| EXIT_OK),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("duallstm: {e}");
            exit_code(&e)
        }
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}
