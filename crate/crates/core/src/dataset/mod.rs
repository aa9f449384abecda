//! Dataset assembly: cloud/annotation pairing, sequence splitting, class
//! statistics, the on-disk layout, synthetic scene generation, and temporal
//! window loading.

mod compile;
mod layout;
mod loader;
mod synth;

pub use compile::{compile_dataset, synth_dataset, CompileSummary};
pub use layout::{
    frame_id, read_heatmap, read_json_file, read_mask_png, write_heatmap, write_json_file,
    write_mask_png, DatasetPaths, StatsFile, ViewSidecar,
};
pub use loader::{Dataset, FrameMeta, SequenceData, WindowRef, WindowSample};
pub use synth::{
    generate_synthetic_scene, implied_person_pixel_fraction, sequence_name, SynthScene,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::SplitConfig;
use crate::error::{Error, Result};
use crate::grid::Mask;

/// One of the three dataset partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitId {
    Train,
    Val,
    Test,
}

impl SplitId {
    pub const ALL: [SplitId; 3] = [SplitId::Train, SplitId::Val, SplitId::Test];

    pub fn name(self) -> &'static str {
        match self {
            SplitId::Train => "train",
            SplitId::Val => "val",
            SplitId::Test => "test",
        }
    }
}

impl std::str::FromStr for SplitId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitId::Train),
            "val" => Ok(SplitId::Val),
            "test" => Ok(SplitId::Test),
            other => Err(Error::Config(format!(
                "unknown split {other:?}; expected train, val, or test"
            ))),
        }
    }
}

/// Sequence names apportioned to train/val/test. Serialized as `splits.json`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Splits {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Splits {
    pub fn get(&self, id: SplitId) -> &[String] {
        match id {
            SplitId::Train => &self.train,
            SplitId::Val => &self.val,
            SplitId::Test => &self.test,
        }
    }

    pub fn all_sequences(&self) -> impl Iterator<Item = &String> {
        self.train.iter().chain(&self.val).chain(&self.test)
    }
}

/// A matched (cloud index, annotation index) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairedIndices {
    pub cloud: usize,
    pub annotation: usize,
}

/// Result of pairing: matched index pairs plus the clouds dropped because no
/// annotation fell within the time threshold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pairing {
    pub pairs: Vec<PairedIndices>,
    pub dropped_clouds: Vec<usize>,
}

fn check_strictly_increasing(what: &str, ts: &[u64]) -> Result<()> {
    if ts.is_empty() {
        return Err(Error::Dataset(format!("{what} timestamp list is empty")));
    }
    for w in ts.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::Dataset(format!(
                "{what} timestamps must be strictly increasing, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// Match every cloud with the annotation closest in time. Ties go to the
/// earlier annotation; clouds whose best |Δt| exceeds `threshold_ns` are
/// dropped. Both timestamp lists must be nonempty and strictly increasing.
pub fn pair_annotations(
    cloud_ts: &[u64],
    annotation_ts: &[u64],
    threshold_ns: u64,
) -> Result<Pairing> {
    check_strictly_increasing("cloud", cloud_ts)?;
    check_strictly_increasing("annotation", annotation_ts)?;

    let mut pairs = Vec::with_capacity(cloud_ts.len());
    let mut dropped_clouds = Vec::new();
    for (ci, &t) in cloud_ts.iter().enumerate() {
        let right = annotation_ts.partition_point(|&a| a < t);
        // Candidates: the last annotation before t and the first at or after
        // it. On equal distance the earlier one (left) wins.
        let best = match (right.checked_sub(1), annotation_ts.get(right)) {
            (Some(left), Some(&ra)) => {
                if t - annotation_ts[left] <= ra - t {
                    left
                } else {
                    right
                }
            }
            (Some(left), None) => left,
            (None, Some(_)) => right,
            (None, None) => unreachable!("annotation list checked nonempty"),
        };
        if cloud_ts[ci].abs_diff(annotation_ts[best]) > threshold_ns {
            dropped_clouds.push(ci);
        } else {
            pairs.push(PairedIndices {
                cloud: ci,
                annotation: best,
            });
        }
    }
    Ok(Pairing {
        pairs,
        dropped_clouds,
    })
}

/// Shuffle sequence names with the configured seed and apportion them to
/// train/val/test by largest remainder. Every split with a nonzero ratio must
/// receive at least one sequence. Returned split lists are sorted by name.
pub fn split_sequences(names: &[String], cfg: &SplitConfig) -> Result<Splits> {
    cfg.validate()?;
    if names.is_empty() {
        return Err(Error::Dataset("no sequences to split".into()));
    }
    let mut sorted = names.to_vec();
    sorted.sort();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Dataset("duplicate sequence names".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    sorted.shuffle(&mut rng);

    let n = sorted.len();
    let mut counts = [0usize; 3];
    let mut remainders = [0f64; 3];
    for (i, &r) in cfg.ratios.iter().enumerate() {
        let exact = r * n as f64;
        counts[i] = exact.floor() as usize;
        remainders[i] = exact - exact.floor();
    }
    let mut leftover = n - counts.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| remainders[b].total_cmp(&remainders[a]).then(a.cmp(&b)));
    for &i in &order {
        if leftover == 0 {
            break;
        }
        counts[i] += 1;
        leftover -= 1;
    }

    for (i, id) in SplitId::ALL.iter().enumerate() {
        if cfg.ratios[i] > 0.0 && counts[i] == 0 {
            return Err(Error::Dataset(format!(
                "not enough sequences: {} of {n} would leave the {} split empty \
                 (ratios {:?})",
                counts[i],
                id.name(),
                cfg.ratios
            )));
        }
    }

    let mut it = sorted.into_iter();
    let mut take = |k: usize| {
        let mut v: Vec<String> = it.by_ref().take(k).collect();
        v.sort();
        v
    };
    Ok(Splits {
        train: take(counts[0]),
        val: take(counts[1]),
        test: take(counts[2]),
    })
}

/// Streaming tallies over a set of masks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub masks: u64,
    pub nonempty_masks: u64,
    pub pixels: u64,
    pub person_pixels: u64,
}

impl ClassCounts {
    pub fn observe(&mut self, mask: &Mask) {
        let person = mask.person_pixels() as u64;
        self.masks += 1;
        self.nonempty_masks += u64::from(person > 0);
        self.pixels += mask.pixels() as u64;
        self.person_pixels += person;
    }

    pub fn merge(&mut self, other: &ClassCounts) {
        self.masks += other.masks;
        self.nonempty_masks += other.nonempty_masks;
        self.pixels += other.pixels;
        self.person_pixels += other.person_pixels;
    }

    /// Fraction of all pixels labeled person; 0 when no pixels were seen.
    pub fn person_pixel_fraction(&self) -> f64 {
        if self.pixels == 0 {
            0.0
        } else {
            self.person_pixels as f64 / self.pixels as f64
        }
    }

    /// Fraction of masks with at least one person pixel.
    pub fn nonempty_mask_fraction(&self) -> f64 {
        if self.masks == 0 {
            0.0
        } else {
            self.nonempty_masks as f64 / self.masks as f64
        }
    }
}

/// Per-class loss weights: each class weighs 1 minus its pixel prevalence, so
/// the rare person class dominates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassWeights {
    pub background: f64,
    pub person: f64,
}

impl ClassWeights {
    pub fn from_person_prevalence(p: f64) -> Self {
        ClassWeights {
            background: p,
            person: 1.0 - p,
        }
    }

    /// Indexed by class id: 0 = background, 1 = person.
    pub fn as_array(&self) -> [f64; 2] {
        [self.background, self.person]
    }
}

/// Class weights for the views that carry annotations (only EA does).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedViewWeights {
    pub ea: ClassWeights,
}

/// Label statistics stored alongside the normalization stats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetStats {
    /// Person share of all mask pixels, over the whole dataset.
    pub person_pixel_fraction: f64,
    /// Share of masks containing at least one person pixel.
    pub nonempty_mask_fraction: f64,
    /// Person share over the train split only; the weights derive from it.
    pub train_person_pixel_fraction: f64,
    pub class_weights: AnnotatedViewWeights,
}

impl DatasetStats {
    /// Combine whole-dataset counts with train-split counts. Falls back to
    /// whole-dataset prevalence for the weights when the train split is empty
    /// (such a dataset can still be compiled for eval-only use).
    pub fn from_counts(all: &ClassCounts, train: &ClassCounts) -> Self {
        let train_p = if train.pixels == 0 {
            all.person_pixel_fraction()
        } else {
            train.person_pixel_fraction()
        };
        DatasetStats {
            person_pixel_fraction: all.person_pixel_fraction(),
            nonempty_mask_fraction: all.nonempty_mask_fraction(),
            train_person_pixel_fraction: train_p,
            class_weights: AnnotatedViewWeights {
                ea: ClassWeights::from_person_prevalence(train_p),
            },
        }
    }
}
