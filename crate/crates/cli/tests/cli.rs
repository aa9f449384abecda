//! Subprocess tests of the command-line surface: exit codes, artifacts,
//! printed summaries, and the PNG prediction round trip.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use radarseg4d::config::{BinConfig, FovConfig};
use radarseg4d::dataset::{read_mask_png, Dataset, SplitId};
use radarseg4d::metrics::OverlapCounts;
use radarseg4d::network::{save_checkpoint, Model, NetworkConfig};
use radarseg4d::projection::ViewSpecs;
use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_radarseg4d"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 stdout")
}

fn assert_usage_error(args: &[&str], needle: &str) {
    let out = run(args);
    assert_eq!(out.status.code(), Some(2), "command {args:?} should exit 2");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains(needle), "stderr missing {needle:?}: {stderr}");
}

/// A compiled 16-frame synthetic dataset (two 8-frame sequences, 8x8 views,
/// one sequence in train and one in val) plus a short training run on it.
struct Fixture {
    _dir: tempfile::TempDir,
    config: PathBuf,
    dataset: PathBuf,
    run_dir: PathBuf,
    synth_stdout: String,
}

impl Fixture {
    fn checkpoint(&self) -> PathBuf {
        self.run_dir.join("best.ckpt")
    }
}

fn pipeline_config() -> Value {
    json!({
        "dataset": {
            "bins": {
                "elevation": 8, "azimuth": 8, "range": 8, "doppler": 8,
                "coarse_elevation": 4, "coarse_azimuth": 4
            },
            "split": { "ratios": [0.5, 0.5, 0.0] },
            "synth": {
                "seed": 11, "frames": 16, "frames_per_sequence": 8,
                "persons_min": 1, "persons_max": 2,
                "points_per_person": 40, "clutter_points": 30
            }
        },
        "network": serde_json::to_value(NetworkConfig::tiny()).unwrap(),
        "train": {
            "input_frames": 3, "batch_size": 2, "learning_rate": 1e-3,
            "lr_step_epochs": 1, "lr_decay": 0.9, "epochs": 2,
            "lambda_wce": 1.0, "lambda_sdice": 10.0, "seed": 5
        }
    })
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("config.json");
        fs::write(&config, serde_json::to_string_pretty(&pipeline_config()).unwrap()).unwrap();
        let dataset = dir.path().join("data");
        let run_dir = dir.path().join("run");
        let synth_stdout = run_ok(&[
            "synth",
            "--out",
            dataset.to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
        ]);
        run_ok(&[
            "train",
            "--dataset",
            dataset.to_str().unwrap(),
            "--out",
            run_dir.to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
        ]);
        Fixture {
            _dir: dir,
            config,
            dataset,
            run_dir,
            synth_stdout,
        }
    })
}

/// All files under a directory, keyed by relative path.
fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn synth_summary_matches_a_rescan_of_the_emitted_masks() {
    let fx = fixture();
    let line = fx
        .synth_stdout
        .lines()
        .find(|l| l.starts_with("person pixel fraction:"))
        .expect("summary line");
    let printed: f64 = line.rsplit(':').next().unwrap().trim().parse().unwrap();

    let dataset = Dataset::open(&fx.dataset).unwrap();
    let mut person = 0u64;
    let mut total = 0u64;
    for (s, seq) in dataset.sequences().iter().enumerate() {
        for t in 0..seq.frames.len() {
            let mask = dataset.load_mask(s, t).unwrap();
            person += mask.person_pixels() as u64;
            total += mask.pixels() as u64;
        }
    }
    let rescanned = person as f64 / total as f64;
    assert!(rescanned > 0.0, "fixture should contain people");
    assert_eq!(rescanned, dataset.stats().class.person_pixel_fraction);
    assert!((printed - rescanned).abs() < 1e-6, "{printed} vs {rescanned}");
}

#[test]
fn synth_rejects_a_zero_frame_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    assert_usage_error(
        &["synth", "--out", out.to_str().unwrap(), "--frames", "0"],
        "frame count must be positive",
    );
}

#[test]
fn synth_with_a_fixed_seed_is_byte_reproducible() {
    let fx = fixture();
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        run_ok(&[
            "synth",
            "--out",
            out.to_str().unwrap(),
            "--config",
            fx.config.to_str().unwrap(),
            "--seed",
            "7",
        ]);
    }
    let ta = tree(&a);
    assert!(ta.len() > 16 * 6, "expected heatmaps, masks and manifests");
    assert_eq!(ta, tree(&b));
}

#[test]
fn stats_prints_the_manifest_json() {
    let fx = fixture();
    let stdout = run_ok(&["stats", "--dataset", fx.dataset.to_str().unwrap()]);
    let v: Value = serde_json::from_str(&stdout).expect("stats output is JSON");
    let fraction = v["class"]["person_pixel_fraction"].as_f64().unwrap();
    assert!(fraction > 0.0 && fraction < 1.0);
    for view in ["ea", "er", "ed", "ra", "da"] {
        assert!(v["norm"][view]["max"].as_f64().unwrap() > 0.0, "view {view}");
    }
}

#[test]
fn stats_on_a_missing_dataset_is_a_usage_error() {
    assert_usage_error(&["stats", "--dataset", "/no/such/dataset"], "error");
}

#[test]
fn train_writes_artifacts_and_eval_round_trips_through_png_masks() {
    let fx = fixture();
    assert!(fx.checkpoint().is_file());
    assert!(fx.run_dir.join("train_log.jsonl").is_file());

    let ckpt = fx.checkpoint();
    let stdout = run_ok(&[
        "eval",
        "--dataset",
        fx.dataset.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--split",
        "val",
    ]);
    let report: Value = serde_json::from_str(&stdout).expect("eval output is JSON");
    let mean_dice = report["mean_dice"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&mean_dice));
    assert!(report["loss"]["total"].as_f64().unwrap().is_finite());

    let dir = tempfile::tempdir().unwrap();
    let preds = dir.path().join("preds");
    run_ok(&[
        "predict",
        "--dataset",
        fx.dataset.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--split",
        "val",
        "--out",
        preds.to_str().unwrap(),
    ]);

    // Re-derive the eval scores from the exported masks alone: the PNG
    // round trip must not change a single pixel count.
    let dataset = Dataset::open(&fx.dataset).unwrap();
    let windows = dataset.windows(SplitId::Val, 3).unwrap();
    assert_eq!(fs::read_dir(&preds).unwrap().count(), windows.len());
    let mut counts = OverlapCounts::default();
    for w in &windows {
        let frame_id = &dataset.sequences()[w.sequence].frames[w.t].frame_id;
        let pred = read_mask_png(&preds.join(format!("{frame_id}.png"))).unwrap();
        let actual = dataset.load_mask(w.sequence, w.t).unwrap();
        counts.merge(&OverlapCounts::from_masks(&pred, &actual).unwrap());
    }
    assert_eq!(counts.person.iou(), report["per_class"]["person"]["iou"].as_f64().unwrap());
    assert_eq!(counts.person.dice(), report["per_class"]["person"]["dice"].as_f64().unwrap());
    assert_eq!(counts.background.iou(), report["per_class"]["background"]["iou"].as_f64().unwrap());
    assert_eq!(counts.mean_iou(), report["mean_iou"].as_f64().unwrap());
    assert_eq!(counts.mean_dice(), mean_dice);
}

#[test]
fn eval_can_write_the_report_to_a_file() {
    let fx = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let ckpt = fx.checkpoint();
    let stdout = run_ok(&[
        "eval",
        "--dataset",
        fx.dataset.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--split",
        "val",
        "--out",
        out.to_str().unwrap(),
    ]);
    let written = fs::read_to_string(&out).unwrap();
    assert_eq!(written.trim_end(), stdout.trim_end());
}

#[test]
fn eval_with_a_checkpoint_from_another_geometry_is_a_usage_error() {
    let fx = fixture();
    // A valid architecture for 16x16 views whose dilation rate cannot fit
    // the fixture's 8x8 views.
    let bins = BinConfig {
        elevation: 16,
        azimuth: 16,
        range: 16,
        doppler: 16,
        coarse_elevation: 8,
        coarse_azimuth: 8,
    };
    let specs = ViewSpecs::new(&FovConfig::default(), &bins).unwrap();
    let cfg = NetworkConfig {
        aspp_rates: vec![1, 3],
        latent_rows: 4,
        latent_cols: 4,
        ..NetworkConfig::tiny()
    };
    let model = Model::<f32>::new(cfg, &specs, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("other.ckpt");
    save_checkpoint(&ckpt, model.config(), model.params()).unwrap();

    assert_usage_error(
        &[
            "eval",
            "--dataset",
            fx.dataset.to_str().unwrap(),
            "--checkpoint",
            ckpt.to_str().unwrap(),
        ],
        "invalid config",
    );
}

#[test]
fn predict_handles_single_frames_and_rejects_frames_without_history() {
    let fx = fixture();
    let dataset = Dataset::open(&fx.dataset).unwrap();
    let seq = &dataset.sequences()[0];
    let early = seq.frames[0].frame_id.clone();
    let late = seq.frames[5].frame_id.clone();
    let ckpt = fx.checkpoint();

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("one");
    run_ok(&[
        "predict",
        "--dataset",
        fx.dataset.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--frame",
        &late,
        "--out",
        out.to_str().unwrap(),
    ]);
    let mask = read_mask_png(&out.join(format!("{late}.png"))).unwrap();
    assert_eq!(mask.dims(), (8, 8));
    assert_eq!(fs::read_dir(&out).unwrap().count(), 1);

    assert_usage_error(
        &[
            "predict",
            "--dataset",
            fx.dataset.to_str().unwrap(),
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--frame",
            &early,
            "--out",
            out.to_str().unwrap(),
        ],
        "prediction needs 3",
    );
}

#[test]
fn render_writes_view_heatmaps_and_both_masks() {
    let fx = fixture();
    let dataset = Dataset::open(&fx.dataset).unwrap();
    let frame = dataset.sequences()[0].frames[7].frame_id.clone();
    let ckpt = fx.checkpoint();

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("images");
    run_ok(&[
        "render",
        "--dataset",
        fx.dataset.to_str().unwrap(),
        "--frame",
        &frame,
        "--out",
        out.to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
    ]);

    let mut names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    let mut expected: Vec<String> = ["da", "ea", "ed", "er", "ra"]
        .iter()
        .map(|v| format!("{frame}_{v}.png"))
        .collect();
    expected.push(format!("{frame}_mask.png"));
    expected.push(format!("{frame}_pred.png"));
    expected.sort();
    assert_eq!(names, expected);

    // Masks only ever use black and red.
    for name in [format!("{frame}_mask.png"), format!("{frame}_pred.png")] {
        let img = image::open(out.join(&name)).unwrap().into_rgb8();
        assert_eq!((img.width(), img.height()), (8, 8));
        assert!(img
            .pixels()
            .all(|p| *p == image::Rgb([0, 0, 0]) || *p == image::Rgb([255, 0, 0])));
    }
    // Heatmaps decode at view dimensions (rows x cols = 8x8 here).
    let img = image::open(out.join(format!("{frame}_ea.png"))).unwrap().into_rgb8();
    assert_eq!((img.width(), img.height()), (8, 8));
}

#[test]
fn render_of_an_unknown_frame_is_a_usage_error() {
    let fx = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("images");
    assert_usage_error(
        &[
            "render",
            "--dataset",
            fx.dataset.to_str().unwrap(),
            "--frame",
            "no_such_frame",
            "--out",
            out.to_str().unwrap(),
        ],
        "not found",
    );
}

#[test]
fn unknown_flags_are_usage_errors() {
    let out = run(&["synth", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}
