use std::path::{Path, PathBuf};
use std::process::Command;

use duallstm::checkpoint::Checkpoint;
use duallstm::cli::{run, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use duallstm::dataset::{anchor_indices, parse_trajectory_file, SliceConfig, Units};
use duallstm::train::{initial_models, HyperConfig};
use duallstm::{IntentionModel, LaneGeometry, TrajectoryModel};
use tempfile::TempDir;

const SMALL_SYNTH: &str = "lk_tracks=3\nllc_tracks=1\nrlc_tracks=1\nduration_s=25\n";
const QUICK_HYPER: &str = "epochs=1\nbatch_size=20\nseed=4\n";

fn cli(args: &[&str]) -> i32 {
    run(std::iter::once("duallstm").chain(args.iter().copied()))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, seed: &str) -> PathBuf {
    let cfg = write(dir, "synth.cfg", SMALL_SYNTH);
    let out = dir.join(format!("tracks_{seed}.csv"));
    assert_eq!(cli(&["synth", "--config", s(&cfg), "--out", s(&out), "--seed", seed]), EXIT_OK);
    out
}

#[test]
fn synth_train_predict_eval_round_trip() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let data = synth(d, "3");
    assert!(d.join("tracks_3.csv.manifest").exists());
    let hyper = write(d, "hyper.cfg", QUICK_HYPER);
    let ck = d.join("model.ck");
    assert_eq!(cli(&["train", "--data", s(&data), "--hyper", s(&hyper), "--checkpoint", s(&ck)]), EXIT_OK);
    Checkpoint::load(&ck).unwrap();
    let history = std::fs::read_to_string(d.join("model.ck.intent_history.csv")).unwrap();
    assert_eq!(history.lines().count(), 2);
    assert!(std::fs::read_to_string(d.join("model.ck.manifest")).unwrap().contains("seed=4"));

    let preds = d.join("preds.txt");
    assert_eq!(cli(&["predict", "--checkpoint", s(&ck), "--data", s(&data), "--out", s(&preds)]), EXIT_OK);
    let text = std::fs::read_to_string(&preds).unwrap();
    assert!(text.lines().filter(|l| l.starts_with('#')).count() > 0);

    let out = d.join("eval");
    assert_eq!(cli(&["eval", "--checkpoint", s(&ck), "--data", s(&data), "--out", s(&out)]), EXIT_OK);
    let rmse = std::fs::read_to_string(out.join("rmse.csv")).unwrap();
    let lines: Vec<&str> = rmse.lines().collect();
    assert_eq!(lines.len(), 6);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 3));
    assert!(out.join("lead_times.csv").exists());
    assert!(out.join("baseline_rmse.csv").exists());
    assert!(out.join("manifest.txt").exists());
}

#[test]
fn synth_is_byte_reproducible() {
    let dir = TempDir::new().unwrap();
    let a = std::fs::read(synth(dir.path(), "8")).unwrap();
    let b = std::fs::read(synth(&dir.path().join("again").tap_mkdir(), "8")).unwrap();
    assert_eq!(a, b);
    let c = std::fs::read(synth(dir.path(), "9")).unwrap();
    assert_ne!(a, c);
}

trait TapMkdir {
    fn tap_mkdir(self) -> Self;
}

impl TapMkdir for PathBuf {
    fn tap_mkdir(self) -> Self {
        std::fs::create_dir_all(&self).unwrap();
        self
    }
}

#[test]
fn missing_config_leaves_no_output() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("tracks.csv");
    let code = cli(&["synth", "--config", s(&dir.path().join("nope.cfg")), "--out", s(&out)]);
    assert_eq!(code, EXIT_DATA);
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn zero_epochs_writes_the_initialization() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let data = synth(d, "1");
    let hyper = write(d, "hyper.cfg", "epochs=0\nseed=12\n");
    let ck = d.join("init.ck");
    assert_eq!(cli(&["train", "--data", s(&data), "--hyper", s(&hyper), "--checkpoint", s(&ck)]), EXIT_OK);
    let loaded = Checkpoint::load(&ck).unwrap();
    let (i, t) = initial_models(&HyperConfig { epochs: 0, seed: 12, ..HyperConfig::default() });
    assert_eq!(loaded.intent, i);
    assert_eq!(loaded.traj, t);
}

#[test]
fn zero_model_predicts_centerline_uniform_motion() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let data = synth(d, "2");
    let ck = d.join("zero.ck");
    Checkpoint::new(IntentionModel::zeros(), TrajectoryModel::zeros(), &HyperConfig::default())
        .save(&ck)
        .unwrap();
    let preds = d.join("preds.txt");
    assert_eq!(cli(&["predict", "--checkpoint", s(&ck), "--data", s(&data), "--out", s(&preds)]), EXIT_OK);

    let tracks = parse_trajectory_file(std::fs::read(&data).unwrap().as_slice(), "tracks", Units::Meters)
        .unwrap()
        .tracks;
    let expected: usize = tracks.iter().map(|t| anchor_indices(t.len(), &SliceConfig::default()).count()).sum();
    let text = std::fs::read_to_string(&preds).unwrap();
    let headers: Vec<&str> = text.lines().filter(|l| l.starts_with('#')).collect();
    assert_eq!(headers.len(), expected);
    assert_eq!(text.lines().count(), expected * 51);

    let g = LaneGeometry::default();
    let mut lines = text.lines();
    while let Some(h) = lines.next() {
        let third = 1.0 / 3.0;
        assert!(h.contains(&format!("p_LK={third} p_LLC={third} p_RLC={third}")), "{h}");
        let lane: usize = h.rsplit("target_lane=").next().unwrap().parse().unwrap();
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect())
            .collect();
        let v0 = rows[0][3];
        let y0 = rows[0][2] - v0 * 0.1;
        for (k, r) in rows.iter().enumerate() {
            assert_eq!(r[1], g.centerline(lane).unwrap());
            assert_eq!(r[3], v0);
            assert!((r[2] - (y0 + v0 * 0.1 * (k + 1) as f64)).abs() < 1e-9);
        }
    }
}

#[test]
fn corrupted_data_names_file_and_line() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let data = synth(d, "5");
    let mut text = std::fs::read_to_string(&data).unwrap();
    for _ in 0..200 {
        text.push_str("1,2,garbage\n");
    }
    let bad = write(d, "bad.csv", &text);
    let ck = d.join("model.ck");
    let out = Command::new(env!("CARGO_BIN_EXE_duallstm"))
        .args(["train", "--data", s(&bad), "--checkpoint", s(&ck)])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_DATA));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.csv"), "{err}");
    assert!(err.contains("line"), "{err}");
    assert!(!ck.exists());
}

#[test]
fn checkpoint_version_mismatch_is_refused() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let data = synth(d, "6");
    let text = Checkpoint::new(IntentionModel::zeros(), TrajectoryModel::zeros(), &HyperConfig::default())
        .to_text()
        .replacen("DUALLSTM v1", "DUALLSTM v2", 1);
    let ck = write(d, "v2.ck", &text);
    let out = d.join("preds.txt");
    assert_eq!(cli(&["predict", "--checkpoint", s(&ck), "--data", s(&data), "--out", s(&out)]), EXIT_DATA);
    assert!(!out.exists());
}

#[test]
fn empty_data_reports_no_samples() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let empty = write(d, "empty.csv", &format!("{}\n", duallstm::dataset::ngsim::HEADER));
    let ck = d.join("zero.ck");
    Checkpoint::new(IntentionModel::zeros(), TrajectoryModel::zeros(), &HyperConfig::default())
        .save(&ck)
        .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_duallstm"))
        .args(["eval", "--checkpoint", s(&ck), "--data", s(&empty), "--out", s(&d.join("eval"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_DATA));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no samples"));
    assert!(!d.join("eval").exists());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(cli(&["train"]), EXIT_USAGE);
    assert_eq!(cli(&["fly"]), EXIT_USAGE);
    assert_eq!(cli(&["synth", "--out", "x.csv", "--units", "parsecs"]), EXIT_USAGE);
    let out = Command::new(env!("CARGO_BIN_EXE_duallstm")).arg("--bogus").output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
}

#[test]
fn inputs_are_not_modified() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let data = synth(d, "7");
    let before = std::fs::read(&data).unwrap();
    let hyper = write(d, "hyper.cfg", "epochs=0\n");
    let ck = d.join("m.ck");
    assert_eq!(cli(&["train", "--data", s(&data), "--hyper", s(&hyper), "--checkpoint", s(&ck)]), EXIT_OK);
    assert_eq!(std::fs::read(&data).unwrap(), before);
}
