//! Segmentation losses over per-class probability planes.
//!
//! The training objective on the annotated elevation–azimuth plane is a
//! weighted sum of two terms:
//!
//! * **weighted cross-entropy** — `−(1/K) Σ_k w_k Σ_ij y·ln(clamp(p))`,
//!   with probabilities clamped to `[1e-7, 1]` before the log so an exactly
//!   zero probability cannot produce an infinite loss;
//! * **soft Dice** — `(1/K) Σ_k (1 − 2Σ y·p / (Σ y² + Σ p² + 1e-6))`,
//!   a differentiable overlap penalty that is 0 for a perfect binary
//!   prediction and 1 for a disjoint one.
//!
//! Both are averaged over classes, not pixels; the per-class inner sums run
//! over the whole plane. All accumulation is in f64 regardless of the
//! element type. Analytic gradients with respect to the probabilities are
//! provided for training and are finite-difference checked in the tests.

use crate::error::{Error, Result};
use crate::grid::Mask;
use crate::network::{Scalar, Tensor};

/// Probabilities below this are clamped before taking the log.
pub const LOG_CLAMP: f64 = 1e-7;
/// Added to the soft-Dice denominator so empty classes stay finite.
pub const DICE_SMOOTHING: f64 = 1e-6;

/// One-hot class planes `[classes, rows, cols]`: per pixel, exactly one
/// plane holds 1 and the rest hold 0.
#[derive(Debug, Clone)]
pub struct OneHotMask<T> {
    planes: Tensor<T>,
}

impl<T: Scalar> OneHotMask<T> {
    /// Expand a class-index mask into one-hot planes.
    pub fn from_mask(mask: &Mask, classes: usize) -> Self {
        assert!(classes >= 2, "one-hot expansion needs at least 2 classes");
        let (rows, cols) = mask.dims();
        let plane = rows * cols;
        let mut data = vec![T::zero(); classes * plane];
        for (i, &c) in mask.data().iter().enumerate() {
            data[c as usize * plane + i] = T::one();
        }
        OneHotMask {
            planes: Tensor::from_vec(&[classes, rows, cols], data),
        }
    }

    pub fn planes(&self) -> &Tensor<T> {
        &self.planes
    }

    pub fn classes(&self) -> usize {
        self.planes.shape()[0]
    }
}

/// Loss hyperparameters: per-class cross-entropy weights and the two
/// term coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct LossParams {
    /// Per-class weights applied inside the cross-entropy term.
    pub class_weights: Vec<f32>,
    /// Coefficient of the weighted cross-entropy term.
    pub lambda_wce: f32,
    /// Coefficient of the soft-Dice term.
    pub lambda_sdice: f32,
}

impl Default for LossParams {
    fn default() -> Self {
        LossParams {
            class_weights: vec![1.0, 1.0],
            lambda_wce: 1.0,
            lambda_sdice: 10.0,
        }
    }
}

impl LossParams {
    /// Default coefficients with the given per-class weights.
    pub fn with_class_weights(class_weights: Vec<f32>) -> Self {
        LossParams {
            class_weights,
            ..LossParams::default()
        }
    }
}

/// The two loss terms and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown<T> {
    pub weighted_cross_entropy: T,
    pub soft_dice: T,
    pub total: T,
}

fn check_conformance<T: Scalar>(
    probs: &Tensor<T>,
    target: &OneHotMask<T>,
    class_weights: usize,
) -> Result<(usize, usize)> {
    if probs.shape() != target.planes().shape() {
        return Err(Error::Shape {
            context: "loss target".to_string(),
            expected: format!("{:?}", probs.shape()),
            actual: format!("{:?}", target.planes().shape()),
        });
    }
    if probs.shape().len() != 3 {
        return Err(Error::Shape {
            context: "loss probabilities".to_string(),
            expected: "[classes, rows, cols]".to_string(),
            actual: format!("{:?}", probs.shape()),
        });
    }
    let classes = probs.shape()[0];
    if class_weights != classes {
        return Err(Error::Shape {
            context: "class weights".to_string(),
            expected: format!("{classes} weights"),
            actual: format!("{class_weights}"),
        });
    }
    Ok((classes, probs.len() / classes))
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(LOG_CLAMP, 1.0)
}

/// Class-weighted cross-entropy of probabilities against a one-hot target:
/// `−(1/K) Σ_k w_k Σ_ij y ln(clamp(p))`. Always ≥ 0.
pub fn weighted_cross_entropy<T: Scalar>(
    probs: &Tensor<T>,
    target: &OneHotMask<T>,
    class_weights: &[f32],
) -> Result<T> {
    let (classes, plane) = check_conformance(probs, target, class_weights.len())?;
    let mut total = 0.0f64;
    for c in 0..classes {
        let w = class_weights[c] as f64;
        let p = &probs.data()[c * plane..(c + 1) * plane];
        let y = &target.planes().data()[c * plane..(c + 1) * plane];
        let mut class_sum = 0.0f64;
        for (&p, &y) in p.iter().zip(y) {
            if y > T::zero() {
                class_sum += clamp_prob(p.to_f64().unwrap()).ln();
            }
        }
        total += w * class_sum;
    }
    Ok(T::from_f64(-total / classes as f64))
}

/// Soft Dice loss: `(1/K) Σ_k (1 − 2Σ y·p / (Σ y² + Σ p² + ε))`.
/// 0 for a perfect binary prediction, ~1 for a fully disjoint one.
pub fn soft_dice<T: Scalar>(probs: &Tensor<T>, target: &OneHotMask<T>) -> Result<T> {
    let (classes, plane) = check_conformance(probs, target, target.classes())?;
    let mut total = 0.0f64;
    for c in 0..classes {
        let (inter, denom) = dice_class_sums(probs, target, c, plane);
        total += 1.0 - 2.0 * inter / denom;
    }
    Ok(T::from_f64(total / classes as f64))
}

/// Per-class overlap `Σ y·p` and denominator `Σ y² + Σ p² + ε`.
fn dice_class_sums<T: Scalar>(
    probs: &Tensor<T>,
    target: &OneHotMask<T>,
    class: usize,
    plane: usize,
) -> (f64, f64) {
    let p = &probs.data()[class * plane..(class + 1) * plane];
    let y = &target.planes().data()[class * plane..(class + 1) * plane];
    let mut inter = 0.0f64;
    let mut p_sq = 0.0f64;
    let mut y_sq = 0.0f64;
    for (&p, &y) in p.iter().zip(y) {
        let pf = p.to_f64().unwrap();
        let yf = y.to_f64().unwrap();
        inter += yf * pf;
        p_sq += pf * pf;
        y_sq += yf * yf;
    }
    (inter, y_sq + p_sq + DICE_SMOOTHING)
}

/// Both loss terms and their weighted sum
/// `lambda_wce · wCE + lambda_sdice · softDice`.
pub fn combined_loss<T: Scalar>(
    probs: &Tensor<T>,
    target: &OneHotMask<T>,
    params: &LossParams,
) -> Result<LossBreakdown<T>> {
    let wce = weighted_cross_entropy(probs, target, &params.class_weights)?;
    let sdice = soft_dice(probs, target)?;
    let total = T::from_f32(params.lambda_wce) * wce + T::from_f32(params.lambda_sdice) * sdice;
    Ok(LossBreakdown {
        weighted_cross_entropy: wce,
        soft_dice: sdice,
        total,
    })
}

/// Gradient of [`combined_loss`]'s total with respect to every probability.
pub fn combined_loss_grad<T: Scalar>(
    probs: &Tensor<T>,
    target: &OneHotMask<T>,
    params: &LossParams,
) -> Result<Tensor<T>> {
    let (classes, plane) = check_conformance(probs, target, params.class_weights.len())?;
    let k = classes as f64;
    let l_wce = params.lambda_wce as f64;
    let l_sdice = params.lambda_sdice as f64;

    let mut grad = vec![T::zero(); probs.len()];
    for c in 0..classes {
        let w = params.class_weights[c] as f64;
        let (inter, denom) = dice_class_sums(probs, target, c, plane);
        let p = &probs.data()[c * plane..(c + 1) * plane];
        let y = &target.planes().data()[c * plane..(c + 1) * plane];
        let g = &mut grad[c * plane..(c + 1) * plane];
        for ((&p, &y), g) in p.iter().zip(y).zip(g.iter_mut()) {
            let pf = p.to_f64().unwrap();
            let yf = y.to_f64().unwrap();

            // d wCE / dp: −w/(K·p) on the true class while the clamp is
            // inactive; zero where clamping flattens the log.
            let mut d = 0.0f64;
            if yf > 0.0 && (LOG_CLAMP..=1.0).contains(&pf) {
                d += l_wce * (-w / (k * pf));
            }

            // d softDice / dp = −(2/K)·(y·D − 2·I·p)/D².
            d += l_sdice * (-2.0 / k) * (yf * denom - 2.0 * inter * pf) / (denom * denom);

            *g = T::from_f64(d);
        }
    }
    Ok(Tensor::from_vec(probs.shape(), grad))
}
