//! Hard segmentation metrics: per-class IoU and Dice from pixel counts.
//!
//! Metrics are computed from three integers per class — intersection,
//! predicted-pixel count, and actual-pixel count — so partial counts from
//! many frames can be summed before the final division (aggregate scores)
//! or divided per frame and averaged (per-frame scores). A class absent
//! from both masks scores 1.0, so all-background frames that are predicted
//! all-background are not penalized.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Mask;
use crate::network::{Scalar, Tensor};

/// Per-pixel argmax over a two-class probability tensor `[2, rows, cols]`.
/// Ties resolve to the lower class index (background).
pub fn hard_classes<T: Scalar>(probs: &Tensor<T>) -> Result<Mask> {
    if probs.shape().len() != 3 || probs.shape()[0] != 2 {
        return Err(Error::Shape {
            context: "hard class decision".to_string(),
            expected: "[2, rows, cols]".to_string(),
            actual: format!("{:?}", probs.shape()),
        });
    }
    let (rows, cols) = (probs.shape()[1], probs.shape()[2]);
    let plane = rows * cols;
    let bg = &probs.data()[..plane];
    let person = &probs.data()[plane..];
    let data = bg
        .iter()
        .zip(person)
        .map(|(&b, &p)| u8::from(p > b))
        .collect();
    Ok(Mask::from_vec(rows, cols, data))
}

/// Overlap pixel counts for one class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub intersection: u64,
    pub predicted: u64,
    pub actual: u64,
}

impl ClassCounts {
    fn union(&self) -> u64 {
        self.predicted + self.actual - self.intersection
    }

    /// Intersection over union; 1.0 when the class is absent from both.
    pub fn iou(&self) -> f64 {
        if self.union() == 0 {
            1.0
        } else {
            self.intersection as f64 / self.union() as f64
        }
    }

    /// Dice coefficient; 1.0 when the class is absent from both.
    pub fn dice(&self) -> f64 {
        let denom = self.predicted + self.actual;
        if denom == 0 {
            1.0
        } else {
            2.0 * self.intersection as f64 / denom as f64
        }
    }
}

/// Accumulated overlap counts for the two classes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OverlapCounts {
    pub background: ClassCounts,
    pub person: ClassCounts,
}

impl OverlapCounts {
    /// Count one prediction/truth mask pair.
    pub fn from_masks(predicted: &Mask, actual: &Mask) -> Result<Self> {
        if predicted.dims() != actual.dims() {
            return Err(Error::Shape {
                context: "mask overlap".to_string(),
                expected: format!("{:?}", actual.dims()),
                actual: format!("{:?}", predicted.dims()),
            });
        }
        let mut counts = OverlapCounts::default();
        for (&p, &a) in predicted.data().iter().zip(actual.data()) {
            let class = if p == 1 {
                &mut counts.person
            } else {
                &mut counts.background
            };
            class.predicted += 1;
            if p == a {
                class.intersection += 1;
            }
            if a == 1 {
                counts.person.actual += 1;
            } else {
                counts.background.actual += 1;
            }
        }
        Ok(counts)
    }

    /// Fold another accumulator into this one (order-independent).
    pub fn merge(&mut self, other: &OverlapCounts) {
        for (mine, theirs) in [
            (&mut self.background, &other.background),
            (&mut self.person, &other.person),
        ] {
            mine.intersection += theirs.intersection;
            mine.predicted += theirs.predicted;
            mine.actual += theirs.actual;
        }
    }

    pub fn mean_iou(&self) -> f64 {
        (self.background.iou() + self.person.iou()) / 2.0
    }

    pub fn mean_dice(&self) -> f64 {
        (self.background.dice() + self.person.dice()) / 2.0
    }
}

/// IoU and Dice for one class, as reported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub iou: f64,
    pub dice: f64,
}

/// Per-class scores in report order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerClassScores {
    pub background: ClassScore,
    pub person: ClassScore,
}

/// Averaged loss terms, as reported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub wce: f64,
    pub sdice: f64,
    pub total: f64,
}

/// The JSON evaluation report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: PerClassScores,
    pub mean_iou: f64,
    pub mean_dice: f64,
    pub loss: LossSummary,
}

impl MetricsReport {
    pub fn new(counts: &OverlapCounts, loss: LossSummary) -> Self {
        MetricsReport {
            per_class: PerClassScores {
                background: ClassScore {
                    iou: counts.background.iou(),
                    dice: counts.background.dice(),
                },
                person: ClassScore {
                    iou: counts.person.iou(),
                    dice: counts.person.dice(),
                },
            },
            mean_iou: counts.mean_iou(),
            mean_dice: counts.mean_dice(),
            loss,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mask(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mask {
        Mask::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.random_range(0..2)).collect(),
        )
    }

    #[test]
    fn argmax_breaks_ties_toward_background() {
        let probs = Tensor::from_vec(
            &[2, 1, 3],
            vec![
                0.5, 0.4, 0.6, // background plane
                0.5, 0.6, 0.4, // person plane
            ],
        );
        let mask = hard_classes::<f32>(&probs).unwrap();
        assert_eq!(mask.data(), &[0, 1, 0]);

        let bad = Tensor::from_vec(&[3, 1, 1], vec![0.2f32, 0.3, 0.5]);
        assert!(hard_classes(&bad).is_err());
    }

    #[test]
    fn identical_masks_score_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mask = random_mask(6, 6, &mut rng);
        let counts = OverlapCounts::from_masks(&mask, &mask).unwrap();
        assert_eq!(counts.background.iou(), 1.0);
        assert_eq!(counts.person.iou(), 1.0);
        assert_eq!(counts.mean_dice(), 1.0);
    }

    #[test]
    fn counts_match_brute_force_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let pred = random_mask(8, 8, &mut rng);
            let gt = random_mask(8, 8, &mut rng);
            let counts = OverlapCounts::from_masks(&pred, &gt).unwrap();

            for class in 0..2u8 {
                let mut inter = 0u64;
                let mut p_count = 0u64;
                let mut a_count = 0u64;
                for i in 0..64 {
                    let p = pred.data()[i] == class;
                    let a = gt.data()[i] == class;
                    inter += u64::from(p && a);
                    p_count += u64::from(p);
                    a_count += u64::from(a);
                }
                let c = if class == 0 {
                    counts.background
                } else {
                    counts.person
                };
                assert_eq!(
                    c,
                    ClassCounts {
                        intersection: inter,
                        predicted: p_count,
                        actual: a_count
                    }
                );
                let union = p_count + a_count - inter;
                assert_eq!(c.iou(), inter as f64 / union as f64);
            }
        }
    }

    #[test]
    fn dice_equals_two_iou_over_one_plus_iou() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        for _ in 0..20 {
            let pred = random_mask(8, 8, &mut rng);
            let gt = random_mask(8, 8, &mut rng);
            let counts = OverlapCounts::from_masks(&pred, &gt).unwrap();
            for c in [counts.background, counts.person] {
                let iou = c.iou();
                assert!((c.dice() - 2.0 * iou / (1.0 + iou)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn absent_class_scores_one_not_nan() {
        let empty = Mask::zeros(4, 4);
        let counts = OverlapCounts::from_masks(&empty, &empty).unwrap();
        assert_eq!(counts.person.iou(), 1.0);
        assert_eq!(counts.person.dice(), 1.0);
        assert_eq!(counts.background.iou(), 1.0);
        assert_eq!(counts.mean_iou(), 1.0);
    }

    #[test]
    fn merge_equals_counting_concatenated_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let frames: Vec<(Mask, Mask)> = (0..5)
            .map(|_| (random_mask(4, 4, &mut rng), random_mask(4, 4, &mut rng)))
            .collect();

        let mut merged = OverlapCounts::default();
        for (pred, gt) in &frames {
            merged.merge(&OverlapCounts::from_masks(pred, gt).unwrap());
        }

        let mut direct = OverlapCounts::default();
        for (pred, gt) in &frames {
            let c = OverlapCounts::from_masks(pred, gt).unwrap();
            direct.background.intersection += c.background.intersection;
            direct.background.predicted += c.background.predicted;
            direct.background.actual += c.background.actual;
            direct.person.intersection += c.person.intersection;
            direct.person.predicted += c.person.predicted;
            direct.person.actual += c.person.actual;
        }
        assert_eq!(merged, direct);
    }

    #[test]
    fn mismatched_mask_dims_error() {
        let a = Mask::zeros(4, 4);
        let b = Mask::zeros(4, 5);
        assert!(OverlapCounts::from_masks(&a, &b).is_err());
    }

    #[test]
    fn report_serializes_with_contract_field_names() {
        let mask = Mask::from_vec(2, 2, vec![0, 1, 1, 0]);
        let counts = OverlapCounts::from_masks(&mask, &mask).unwrap();
        let report = MetricsReport::new(
            &counts,
            LossSummary {
                wce: 0.25,
                sdice: 0.5,
                total: 5.25,
            },
        );
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["per_class"]["background"]["iou"], 1.0);
        assert_eq!(json["per_class"]["person"]["dice"], 1.0);
        assert_eq!(json["mean_iou"], 1.0);
        assert_eq!(json["mean_dice"], 1.0);
        assert_eq!(json["loss"]["wce"], 0.25);
        assert_eq!(json["loss"]["sdice"], 0.5);
        assert_eq!(json["loss"]["total"], 5.25);

        let back: MetricsReport = serde_json::from_value(json).unwrap();
        assert_eq!(back, report);
    }
}
