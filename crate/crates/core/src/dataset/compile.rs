//! Building a dataset directory, either from raw captures (PCD clouds plus
//! annotation PNGs) or from the synthetic generator. Both paths share the
//! same writer, so the emitted layout is identical.
//!
//! Expected raw layout: `<raw>/<sequence>/clouds/<nanoseconds>.pcd` and
//! `<raw>/<sequence>/annotations/<nanoseconds>.png`.

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::config::{DatasetConfig, ViewId};
use crate::error::{Error, Result};
use crate::grid::Mask;
use crate::pointcloud::{read_pcd_file, timestamp_from_path, to_spherical, SphericalPoint};
use crate::projection::{project_frame, StatsAccumulator, ViewSpecs};

use super::layout::{
    frame_id, read_mask_png, write_heatmap, write_json_file, write_mask_png, DatasetPaths,
    StatsFile, ViewSidecar,
};
use super::synth::{generate_synthetic_scene, sequence_name};
use super::{pair_annotations, split_sequences, ClassCounts, DatasetStats, Splits};

/// What a build produced, for reporting.
#[derive(Debug, Clone)]
pub struct CompileSummary {
    /// Sequences written to the output.
    pub sequences: usize,
    /// Sequences left out as short and person-free.
    pub excluded_sequences: Vec<String>,
    /// Frames written across all sequences.
    pub frames: usize,
    /// Clouds dropped because no annotation fell within the pairing window.
    pub dropped_pairs: usize,
    /// Points whose power fell outside the expected sensor range.
    pub power_warnings: usize,
    /// Per-file problems; compilation continued past them.
    pub failures: Vec<String>,
    pub stats: StatsFile,
    pub splits: Splits,
}

fn map_sequences<S: Sync, T: Send>(
    items: &[S],
    f: impl Fn(&S) -> Result<T> + Send + Sync,
) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

struct RawSequence {
    name: String,
    clouds: Vec<(u64, PathBuf)>,
    annotations: Vec<(u64, PathBuf)>,
}

fn scan_timestamped(dir: &Path, ext: &str, failures: &mut Vec<String>) -> Vec<(u64, PathBuf)> {
    let Ok(entries) = fs::read_dir(dir) else {
        return Vec::new();
    };
    let mut files = Vec::new();
    for entry in entries.flatten() {
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some(ext) || !path.is_file() {
            continue;
        }
        match timestamp_from_path(&path) {
            Ok(ts) => files.push((ts, path)),
            Err(_) => failures.push(format!(
                "{}: filename is not a <nanoseconds>.{ext} timestamp",
                path.display()
            )),
        }
    }
    files.sort();
    files
}

fn scan_raw(raw_dir: &Path) -> Result<(Vec<RawSequence>, Vec<String>)> {
    let entries = fs::read_dir(raw_dir).map_err(|e| Error::io(raw_dir, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Dataset(format!(
            "no sequences found under {}",
            raw_dir.display()
        )));
    }

    let mut failures = Vec::new();
    let mut sequences = Vec::new();
    for dir in dirs {
        let Some(name) = dir.file_name().and_then(|n| n.to_str()).map(String::from) else {
            failures.push(format!("{}: non-UTF-8 sequence name", dir.display()));
            continue;
        };
        let clouds = scan_timestamped(&dir.join("clouds"), "pcd", &mut failures);
        let annotations = scan_timestamped(&dir.join("annotations"), "png", &mut failures);
        if clouds.is_empty() {
            failures.push(format!("{name}: no point clouds under clouds/"));
            continue;
        }
        if annotations.is_empty() {
            failures.push(format!("{name}: no annotation images under annotations/"));
            continue;
        }
        sequences.push(RawSequence {
            name,
            clouds,
            annotations,
        });
    }
    Ok((sequences, failures))
}

/// A frame that survived pairing and annotation checks; the cloud is read
/// again at write time so sequences stream instead of living in memory.
struct PlannedFrame {
    cloud_path: PathBuf,
    timestamp_ns: u64,
    mask: Mask,
}

struct PlannedSequence {
    name: String,
    frames: Vec<PlannedFrame>,
    dropped: usize,
    power_warnings: usize,
    failures: Vec<String>,
}

fn plan_sequence(raw: &RawSequence, threshold_ns: u64, mask_dims: (usize, usize)) -> PlannedSequence {
    let mut out = PlannedSequence {
        name: raw.name.clone(),
        frames: Vec::new(),
        dropped: 0,
        power_warnings: 0,
        failures: Vec::new(),
    };
    let cloud_ts: Vec<u64> = raw.clouds.iter().map(|(t, _)| *t).collect();
    let ann_ts: Vec<u64> = raw.annotations.iter().map(|(t, _)| *t).collect();
    let pairing = match pair_annotations(&cloud_ts, &ann_ts, threshold_ns) {
        Ok(p) => p,
        Err(e) => {
            out.failures.push(format!("{}: {e}", raw.name));
            return out;
        }
    };
    out.dropped = pairing.dropped_clouds.len();

    for pair in &pairing.pairs {
        let (ts, cloud_path) = &raw.clouds[pair.cloud];
        let (_, mask_path) = &raw.annotations[pair.annotation];
        let mask = match read_mask_png(mask_path) {
            Ok(m) => m,
            Err(e) => {
                out.failures.push(e.to_string());
                continue;
            }
        };
        if mask.dims() != mask_dims {
            out.failures.push(format!(
                "{}: mask is {}x{}, expected {}x{}",
                mask_path.display(),
                mask.rows(),
                mask.cols(),
                mask_dims.0,
                mask_dims.1
            ));
            continue;
        }
        // Parse now so unreadable clouds are reported (and skipped) here;
        // the write pass re-reads instead of holding every cloud in memory.
        match read_pcd_file(cloud_path) {
            Ok(parsed) => {
                out.power_warnings += parsed.power_out_of_range;
                out.frames.push(PlannedFrame {
                    cloud_path: cloud_path.clone(),
                    timestamp_ns: *ts,
                    mask,
                });
            }
            Err(e) => out.failures.push(e.to_string()),
        }
    }
    out
}

struct FrameRecord {
    timestamp_ns: u64,
    spherical: Vec<SphericalPoint>,
    mask: Mask,
}

/// Project and write one sequence's frames; returns the normalization
/// accumulator and the frame count.
fn write_sequence(
    paths: &DatasetPaths,
    specs: &ViewSpecs,
    name: &str,
    records: impl Iterator<Item = Result<FrameRecord>>,
) -> Result<(StatsAccumulator, usize)> {
    for view in ViewId::ALL {
        let dir = paths.view_dir(name, view);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let ann_dir = paths.annotations_dir(name);
    fs::create_dir_all(&ann_dir).map_err(|e| Error::io(&ann_dir, e))?;

    let mut acc = StatsAccumulator::default();
    let mut count = 0usize;
    for (index, record) in records.enumerate() {
        let record = record?;
        let fid = frame_id(name, index);
        let frame = project_frame(&record.spherical, specs)?;
        for view in ViewId::ALL {
            let grid = frame.view(view);
            write_heatmap(&paths.heatmap_file(name, view, &fid), grid)?;
            write_json_file(
                &paths.sidecar_file(name, view, &fid),
                &ViewSidecar {
                    frame_id: fid.clone(),
                    view: view.name().to_string(),
                    rows: grid.rows(),
                    cols: grid.cols(),
                    timestamp_ns: record.timestamp_ns,
                },
            )?;
        }
        write_mask_png(&paths.mask_file(name, &fid), &record.mask)?;
        acc.observe(&frame);
        count += 1;
    }
    Ok((acc, count))
}

/// Sequences too short to matter that never saw a person, per config.
fn excluded_names<'a>(
    sequences: impl Iterator<Item = (&'a str, usize, bool)>,
    threshold: Option<usize>,
) -> Vec<String> {
    let Some(min_frames) = threshold else {
        return Vec::new();
    };
    sequences
        .filter(|(_, frames, any_person)| *frames < min_frames && !*any_person)
        .map(|(name, _, _)| name.to_string())
        .collect()
}

struct Assembled {
    splits: Splits,
    stats: StatsFile,
}

/// Split the kept sequences, tally class statistics (weights from the train
/// split), and merge per-sequence normalization accumulators.
fn assemble_stats(
    cfg: &DatasetConfig,
    kept: &[(String, Vec<Mask>)],
    accumulators: &[StatsAccumulator],
) -> Result<Assembled> {
    let names: Vec<String> = kept.iter().map(|(n, _)| n.clone()).collect();
    let splits = split_sequences(&names, &cfg.split)?;

    let mut all = ClassCounts::default();
    let mut train = ClassCounts::default();
    for (name, masks) in kept {
        let in_train = splits.train.iter().any(|s| s == name);
        for mask in masks {
            all.observe(mask);
            if in_train {
                train.observe(mask);
            }
        }
    }

    let mut merged = StatsAccumulator::default();
    for acc in accumulators {
        merged.merge(acc);
    }
    Ok(Assembled {
        splits,
        stats: StatsFile {
            norm: merged.finish()?,
            class: DatasetStats::from_counts(&all, &train),
        },
    })
}

fn write_manifests(
    paths: &DatasetPaths,
    cfg: &DatasetConfig,
    assembled: &Assembled,
) -> Result<()> {
    write_json_file(&paths.config_file(), cfg)?;
    write_json_file(&paths.stats_file(), &assembled.stats)?;
    write_json_file(&paths.splits_file(), &assembled.splits)
}

/// Compile raw captures into a dataset directory. Unreadable files are
/// skipped and listed in the summary; identical inputs produce identical
/// output bytes.
pub fn compile_dataset(
    raw_dir: &Path,
    out_dir: &Path,
    cfg: &DatasetConfig,
) -> Result<CompileSummary> {
    cfg.validate()?;
    let specs = ViewSpecs::new(&cfg.fov, &cfg.bins)?;
    let (raw, mut failures) = scan_raw(raw_dir)?;
    let threshold_ns = cfg.pairing_threshold_ns();

    let mask_dims = specs.mask_dims();
    let planned = map_sequences(&raw, |seq| Ok(plan_sequence(seq, threshold_ns, mask_dims)))?;

    let mut dropped_pairs = 0;
    let mut power_warnings = 0;
    let mut nonempty = Vec::new();
    for mut plan in planned {
        dropped_pairs += plan.dropped;
        power_warnings += plan.power_warnings;
        failures.append(&mut plan.failures);
        if plan.frames.is_empty() {
            failures.push(format!("{}: no usable frames", plan.name));
        } else {
            nonempty.push(plan);
        }
    }

    let excluded = excluded_names(
        nonempty.iter().map(|p| {
            let any_person = p.frames.iter().any(|f| f.mask.person_pixels() > 0);
            (p.name.as_str(), p.frames.len(), any_person)
        }),
        cfg.split.exclude_empty_shorter_than,
    );
    let kept: Vec<PlannedSequence> = nonempty
        .into_iter()
        .filter(|p| !excluded.contains(&p.name))
        .collect();
    if kept.is_empty() {
        return Err(Error::Dataset(format!(
            "no usable frames in {} ({} problems, first: {})",
            raw_dir.display(),
            failures.len(),
            failures.first().map(String::as_str).unwrap_or("none")
        )));
    }

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let paths = DatasetPaths::new(out_dir);
    let written = map_sequences(&kept, |plan| {
        write_sequence(
            &paths,
            &specs,
            &plan.name,
            plan.frames.iter().map(|f| {
                let parsed = read_pcd_file(&f.cloud_path)?;
                Ok(FrameRecord {
                    timestamp_ns: f.timestamp_ns,
                    spherical: to_spherical(&parsed.cloud),
                    mask: f.mask.clone(),
                })
            }),
        )
    })?;

    let with_masks: Vec<(String, Vec<Mask>)> = kept
        .into_iter()
        .map(|p| (p.name, p.frames.into_iter().map(|f| f.mask).collect()))
        .collect();
    // Raw compiles never carry generator settings in their manifest.
    let manifest = DatasetConfig {
        synth: None,
        ..cfg.clone()
    };
    let accumulators: Vec<StatsAccumulator> = written.iter().map(|(a, _)| *a).collect();
    let assembled = assemble_stats(&manifest, &with_masks, &accumulators)?;
    write_manifests(&paths, &manifest, &assembled)?;

    Ok(CompileSummary {
        sequences: with_masks.len(),
        excluded_sequences: excluded,
        frames: written.iter().map(|(_, n)| n).sum(),
        dropped_pairs,
        power_warnings,
        failures,
        stats: assembled.stats,
        splits: assembled.splits,
    })
}

/// Generate a synthetic corpus and write it as a compiled dataset.
/// Deterministic: the same config produces byte-identical trees.
pub fn synth_dataset(out_dir: &Path, cfg: &DatasetConfig) -> Result<CompileSummary> {
    cfg.validate()?;
    let synth = cfg.synth_or_default();
    synth.validate(&cfg.fov)?;
    let specs = ViewSpecs::new(&cfg.fov, &cfg.bins)?;

    let chunks: Vec<(String, Range<usize>)> = (0..synth.sequence_count())
        .map(|s| {
            let start = s * synth.frames_per_sequence;
            let end = (start + synth.frames_per_sequence).min(synth.frames);
            (sequence_name(s), start..end)
        })
        .collect();

    // First pass: masks only, to decide exclusions and tally class stats.
    let masks = map_sequences(&chunks, |(_, range)| {
        Ok(range
            .clone()
            .map(|i| generate_synthetic_scene(&synth, &cfg.fov, &specs, i).mask)
            .collect::<Vec<Mask>>())
    })?;

    let excluded = excluded_names(
        chunks.iter().zip(&masks).map(|((name, _), seq_masks)| {
            let any_person = seq_masks.iter().any(|m| m.person_pixels() > 0);
            (name.as_str(), seq_masks.len(), any_person)
        }),
        cfg.split.exclude_empty_shorter_than,
    );
    let kept: Vec<((String, Range<usize>), Vec<Mask>)> = chunks
        .into_iter()
        .zip(masks)
        .filter(|((name, _), _)| !excluded.contains(name))
        .collect();
    if kept.is_empty() {
        return Err(Error::Dataset(
            "synthetic corpus is empty after exclusions".into(),
        ));
    }

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let paths = DatasetPaths::new(out_dir);
    let written = map_sequences(&kept, |((name, range), _)| {
        write_sequence(
            &paths,
            &specs,
            name,
            range.clone().map(|i| {
                let scene = generate_synthetic_scene(&synth, &cfg.fov, &specs, i);
                Ok(FrameRecord {
                    timestamp_ns: scene.cloud.timestamp_ns,
                    spherical: scene.spherical,
                    mask: scene.mask,
                })
            }),
        )
    })?;

    let with_masks: Vec<(String, Vec<Mask>)> = kept
        .into_iter()
        .map(|((name, _), seq_masks)| (name, seq_masks))
        .collect();
    let manifest = DatasetConfig {
        synth: Some(synth),
        ..cfg.clone()
    };
    let accumulators: Vec<StatsAccumulator> = written.iter().map(|(a, _)| *a).collect();
    let assembled = assemble_stats(&manifest, &with_masks, &accumulators)?;
    write_manifests(&paths, &manifest, &assembled)?;

    Ok(CompileSummary {
        sequences: with_masks.len(),
        excluded_sequences: excluded,
        frames: written.iter().map(|(_, n)| n).sum(),
        dropped_pairs: 0,
        power_warnings: 0,
        failures: Vec::new(),
        stats: assembled.stats,
        splits: assembled.splits,
    })
}
