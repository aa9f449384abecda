//! Read access to a compiled dataset: frame discovery, raw and normalized
//! heatmap loading, and fixed-length temporal windows.

use std::fs;
use std::path::Path;

use crate::config::{DatasetConfig, PerView, ViewId};
use crate::error::{Error, Result};
use crate::grid::{Grid, Mask};
use crate::projection::{normalize, FrameHeatmaps, ViewSpecs};

use super::layout::{read_heatmap, read_json_file, read_mask_png, DatasetPaths, StatsFile, ViewSidecar};
use super::{SplitId, Splits};

/// One frame's identity within a sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameMeta {
    pub frame_id: String,
    pub timestamp_ns: u64,
}

/// A sequence's frames in temporal order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceData {
    pub name: String,
    pub frames: Vec<FrameMeta>,
}

/// Handle to a window: sequence index into [`Dataset::sequences`] plus the
/// index of the window's last (predicted) frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowRef {
    pub sequence: usize,
    pub t: usize,
}

/// A loaded training/eval example: the last `n` frames of every view,
/// normalized, oldest first, plus the mask of the final frame.
#[derive(Debug, Clone)]
pub struct WindowSample {
    /// Frame id of the final (predicted) frame.
    pub frame_id: String,
    /// Per view: `n` grids ordered oldest to newest.
    pub views: PerView<Vec<Grid>>,
    pub mask: Mask,
}

/// An opened dataset directory.
#[derive(Debug)]
pub struct Dataset {
    paths: DatasetPaths,
    config: DatasetConfig,
    stats: StatsFile,
    splits: Splits,
    sequences: Vec<SequenceData>,
    specs: ViewSpecs,
}

impl Dataset {
    /// Open a compiled dataset, reading its manifests and frame index.
    pub fn open(root: impl AsRef<Path>) -> Result<Dataset> {
        let paths = DatasetPaths::new(root.as_ref());
        let config: DatasetConfig = read_json_file(&paths.config_file())?;
        config.validate()?;
        let stats: StatsFile = read_json_file(&paths.stats_file())?;
        let splits: Splits = read_json_file(&paths.splits_file())?;
        let specs = ViewSpecs::new(&config.fov, &config.bins)?;

        let mut names: Vec<String> = splits.all_sequences().cloned().collect();
        names.sort();
        names.dedup();
        let mut sequences = Vec::with_capacity(names.len());
        for name in names {
            sequences.push(scan_sequence(&paths, &name)?);
        }
        Ok(Dataset {
            paths,
            config,
            stats,
            splits,
            sequences,
            specs,
        })
    }

    pub fn config(&self) -> &DatasetConfig {
        &self.config
    }

    pub fn stats(&self) -> &StatsFile {
        &self.stats
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    pub fn specs(&self) -> &ViewSpecs {
        &self.specs
    }

    /// All sequences, sorted by name.
    pub fn sequences(&self) -> &[SequenceData] {
        &self.sequences
    }

    pub fn sequence_index(&self, name: &str) -> Result<usize> {
        self.sequences
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| Error::Dataset(format!("no sequence named {name:?} in the dataset")))
    }

    /// Indices of the sequences belonging to `split`, in split-file order.
    pub fn split_members(&self, split: SplitId) -> Result<Vec<usize>> {
        self.splits
            .get(split)
            .iter()
            .map(|name| self.sequence_index(name))
            .collect()
    }

    /// Total frames across all sequences.
    pub fn frame_count(&self) -> usize {
        self.sequences.iter().map(|s| s.frames.len()).sum()
    }

    /// Load one frame's five heatmaps without normalization.
    pub fn load_frame(&self, sequence: usize, t: usize) -> Result<FrameHeatmaps> {
        let seq = self.sequence_at(sequence)?;
        let meta = frame_at(seq, t)?;
        let views = ViewId::ALL.map(|view| {
            let spec = self.specs.get(view);
            read_heatmap(
                &self.paths.heatmap_file(&seq.name, view, &meta.frame_id),
                spec.rows,
                spec.cols,
            )
        });
        let mut grids = Vec::with_capacity(5);
        for v in views {
            grids.push(v?);
        }
        Ok(FrameHeatmaps {
            frame_id: meta.frame_id.clone(),
            views: grids.try_into().expect("five views"),
        })
    }

    /// Load one frame's ground-truth mask.
    pub fn load_mask(&self, sequence: usize, t: usize) -> Result<Mask> {
        let seq = self.sequence_at(sequence)?;
        let meta = frame_at(seq, t)?;
        let mask = read_mask_png(&self.paths.mask_file(&seq.name, &meta.frame_id))?;
        if mask.dims() != self.specs.mask_dims() {
            return Err(Error::Dataset(format!(
                "{}: mask is {}x{}, dataset config says {}x{}",
                meta.frame_id,
                mask.rows(),
                mask.cols(),
                self.specs.mask_dims().0,
                self.specs.mask_dims().1
            )));
        }
        Ok(mask)
    }

    /// Load the window ending at frame `t`: the `n` frames `t-n+1..=t` of
    /// every view, normalized with the dataset statistics, plus frame `t`'s
    /// mask. Windows reaching before the sequence start are refused.
    pub fn load_window(&self, window: WindowRef, n: usize) -> Result<WindowSample> {
        if n == 0 {
            return Err(Error::Config("window length must be positive".into()));
        }
        let seq = self.sequence_at(window.sequence)?;
        let meta = frame_at(seq, window.t)?;
        if window.t + 1 < n {
            return Err(Error::Dataset(format!(
                "frame {} is too early for a {n}-frame window",
                meta.frame_id
            )));
        }
        let mut views = PerView::from_fn(|_| Vec::with_capacity(n));
        for t in window.t + 1 - n..=window.t {
            let frame = self.load_frame(window.sequence, t)?;
            for view in ViewId::ALL {
                let mm = *self.stats.norm.get(view);
                views.get_mut(view).push(normalize(frame.view(view), mm));
            }
        }
        Ok(WindowSample {
            frame_id: meta.frame_id.clone(),
            views,
            mask: self.load_mask(window.sequence, window.t)?,
        })
    }

    /// Every loadable window of length `n` in the given split, in sequence
    /// order then time order.
    pub fn windows(&self, split: SplitId, n: usize) -> Result<Vec<WindowRef>> {
        let mut out = Vec::new();
        for sequence in self.split_members(split)? {
            let frames = self.sequences[sequence].frames.len();
            for t in (n.max(1) - 1)..frames {
                out.push(WindowRef { sequence, t });
            }
        }
        Ok(out)
    }

    fn sequence_at(&self, index: usize) -> Result<&SequenceData> {
        self.sequences.get(index).ok_or_else(|| {
            Error::Dataset(format!(
                "sequence index {index} out of range ({} sequences)",
                self.sequences.len()
            ))
        })
    }
}

fn frame_at(seq: &SequenceData, t: usize) -> Result<&FrameMeta> {
    seq.frames.get(t).ok_or_else(|| {
        Error::Dataset(format!(
            "frame {t} out of range in sequence {} ({} frames)",
            seq.name,
            seq.frames.len()
        ))
    })
}

/// Discover a sequence's frames from its elevation-azimuth sidecars.
fn scan_sequence(paths: &DatasetPaths, name: &str) -> Result<SequenceData> {
    let dir = paths.view_dir(name, ViewId::Ea);
    let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut frames = Vec::new();
    for entry in entries.flatten() {
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let sidecar: ViewSidecar = read_json_file(&path)?;
        frames.push(FrameMeta {
            frame_id: sidecar.frame_id,
            timestamp_ns: sidecar.timestamp_ns,
        });
    }
    if frames.is_empty() {
        return Err(Error::Dataset(format!("sequence {name} has no frames")));
    }
    // Zero-padded ids sort lexicographically in write order.
    frames.sort_by(|a, b| a.frame_id.cmp(&b.frame_id));
    for w in frames.windows(2) {
        if w[0].timestamp_ns >= w[1].timestamp_ns {
            return Err(Error::Dataset(format!(
                "sequence {name}: timestamps not strictly increasing at {}",
                w[1].frame_id
            )));
        }
    }
    Ok(SequenceData {
        name: name.to_string(),
        frames,
    })
}
