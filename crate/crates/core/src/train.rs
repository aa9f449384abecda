//! Training loop and split evaluation.
//!
//! One optimizer step processes one fixed-size batch: windows are loaded in
//! a seeded shuffled order, flip-augmented from a second seeded stream, run
//! through the network one at a time, and their gradients accumulated
//! sequentially and averaged — so a training run is a pure function of the
//! dataset bytes and the seed. The learning rate decays by a fixed factor
//! every few epochs. The validation split is scored at a configurable
//! cadence and the parameters with the highest validation mean Dice (ties:
//! earliest) are kept as the run's result.
//!
//! The training log is line-delimited JSON with one record per optimizer
//! step and one per validation pass, carrying no timestamps so identical
//! runs produce identical logs.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::augment::random_flips;
use crate::dataset::{Dataset, SplitId, WindowRef};
use crate::error::{Error, Result};
use crate::loss::{combined_loss, combined_loss_grad, LossParams, OneHotMask};
use crate::metrics::{hard_classes, LossSummary, MetricsReport, OverlapCounts};
use crate::network::{
    checkpoint_bytes, window_input, Gradients, Model, NetworkConfig, Parameters, Scalar,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Training hyperparameters. The defaults are the reference recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    /// Temporal window length; must equal the network's input window.
    pub input_frames: usize,
    /// Windows per optimizer step. The final short batch of an epoch is
    /// dropped so every step averages over the same count.
    pub batch_size: usize,
    /// Base learning rate before decay.
    pub learning_rate: f64,
    /// Epochs between learning-rate decays.
    pub lr_step_epochs: usize,
    /// Multiplicative decay applied every `lr_step_epochs`.
    pub lr_decay: f64,
    /// Training epochs.
    pub epochs: usize,
    /// Score the validation split every this many optimizer steps; unset
    /// means once at the end of every epoch.
    pub eval_every_steps: Option<usize>,
    /// Coefficient of the cross-entropy term.
    pub lambda_wce: f32,
    /// Coefficient of the soft-Dice term.
    pub lambda_sdice: f32,
    /// Seed for weight init, shuffling, and augmentation.
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            input_frames: 5,
            batch_size: 6,
            learning_rate: 1e-4,
            lr_step_epochs: 2,
            lr_decay: 0.9,
            epochs: 24,
            eval_every_steps: None,
            lambda_wce: 1.0,
            lambda_sdice: 10.0,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.input_frames == 0 {
            return Err(Error::Config("input_frames must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.lr_step_epochs == 0 {
            return Err(Error::Config("lr_step_epochs must be positive".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config("lr_decay must be in (0, 1]".into()));
        }
        if self.eval_every_steps == Some(0) {
            return Err(Error::Config("eval_every_steps must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate for an epoch: `learning_rate · lr_decay^(epoch/step)`
    /// with integer division, evaluated as a single `powi`.
    pub fn lr_schedule(&self, epoch: usize) -> f64 {
        let decays = (epoch / self.lr_step_epochs) as i32;
        self.learning_rate * self.lr_decay.powi(decays)
    }

    fn loss_params(&self, class_weights: Vec<f32>) -> LossParams {
        LossParams {
            class_weights,
            lambda_wce: self.lambda_wce,
            lambda_sdice: self.lambda_sdice,
        }
    }
}

/// Adam optimizer state: first/second moment estimates per parameter and
/// the step counter driving bias correction.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    first: Gradients<T>,
    second: Gradients<T>,
    step: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl<T: Scalar> AdamState<T> {
    /// Fresh zeroed state shaped like the parameters.
    pub fn new(params: &Parameters<T>) -> Self {
        AdamState {
            first: Gradients::zeros_like(params),
            second: Gradients::zeros_like(params),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update. Rejects non-finite gradients before
/// touching any state, naming the offending parameter.
pub fn adam_step<T: Scalar>(
    params: &mut Parameters<T>,
    grads: &Gradients<T>,
    state: &mut AdamState<T>,
    lr: f64,
) -> Result<()> {
    if let Some((name, _)) = grads.first_non_finite(params) {
        return Err(Error::NonFiniteGradient {
            name,
            step: state.step + 1,
        });
    }
    state.step += 1;
    let correction1 = 1.0 - state.beta1.powi(state.step as i32);
    let correction2 = 1.0 - state.beta2.powi(state.step as i32);
    let (beta1, beta2, epsilon) = (state.beta1, state.beta2, state.epsilon);

    for id in params.ids() {
        let values = params.get_mut(id);
        let g = grads.get(id);
        let m = state.first.get_mut(id);
        let v = state.second.get_mut(id);
        for i in 0..values.len() {
            let grad = g[i].to_f64().unwrap();
            let m_new = beta1 * m[i].to_f64().unwrap() + (1.0 - beta1) * grad;
            let v_new = beta2 * v[i].to_f64().unwrap() + (1.0 - beta2) * grad * grad;
            m[i] = T::from_f64(m_new);
            v[i] = T::from_f64(v_new);

            let m_hat = m_new / correction1;
            let v_hat = v_new / correction2;
            let update = lr * m_hat / (v_hat.sqrt() + epsilon);
            values[i] = T::from_f64(values[i].to_f64().unwrap() - update);
        }
    }
    Ok(())
}

/// Per-step training log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub loss_total: f64,
    pub loss_wce: f64,
    pub loss_sdice: f64,
}

/// Per-validation training log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    /// Ordinal of this validation pass (1-based).
    pub eval: u64,
    pub epoch: usize,
    pub step: u64,
    pub mean_iou: f64,
    pub mean_dice: f64,
    pub per_class: crate::metrics::PerClassScores,
}

/// What a finished run selected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestEval {
    pub eval: u64,
    pub epoch: usize,
    pub step: u64,
    pub mean_dice: f64,
}

/// Result of a training run.
#[derive(Debug)]
pub struct TrainOutcome {
    /// Highest-validation-mean-Dice evaluation, if any ran.
    pub best: Option<BestEval>,
    pub steps: u64,
    pub checkpoint_path: PathBuf,
    pub log_path: PathBuf,
}

/// Train a fresh model on the dataset's train split, validating on its val
/// split, and write `best.ckpt` plus `train_log.jsonl` into `out_dir`.
pub fn run(
    dataset: &Dataset,
    network: NetworkConfig,
    hp: &Hyperparams,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    hp.validate()?;
    if network.window != hp.input_frames {
        return Err(Error::Config(format!(
            "hyperparameter input_frames ({}) must equal the network window ({})",
            hp.input_frames, network.window
        )));
    }

    let train_windows = split_windows(dataset, SplitId::Train, hp.input_frames)?;
    let val_windows = split_windows(dataset, SplitId::Val, hp.input_frames)?;
    if hp.epochs > 0 && train_windows.len() < hp.batch_size {
        return Err(Error::Config(format!(
            "batch size {} exceeds the {} train windows; no complete batch",
            hp.batch_size,
            train_windows.len()
        )));
    }

    let weights = dataset.stats().class.class_weights.ea;
    let loss_params = hp.loss_params(vec![weights.background as f32, weights.person as f32]);

    let mut model = Model::<f32>::new(network, dataset.specs(), hp.seed)?;
    let mut adam = AdamState::new(model.params());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(hp.seed ^ 0x53_48_55_46); // "SHUF"
    let mut flip_rng = ChaCha8Rng::seed_from_u64(hp.seed ^ 0x46_4c_49_50); // "FLIP"

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let log_path = out_dir.join("train_log.jsonl");
    let log_file = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log = BufWriter::new(log_file);

    // The initialization is the fallback result when no evaluation runs.
    let mut best_bytes = checkpoint_bytes(model.config(), model.params())?;
    let mut best: Option<BestEval> = None;
    let mut evals = 0u64;
    let mut step = 0u64;

    let mut order: Vec<usize> = (0..train_windows.len()).collect();
    for epoch in 0..hp.epochs {
        let lr = hp.lr_schedule(epoch);
        order.shuffle(&mut shuffle_rng);

        for batch in order.chunks_exact(hp.batch_size) {
            let mut grads = Gradients::zeros_like(model.params());
            let mut sums = (0.0f64, 0.0f64, 0.0f64);
            for &slot in batch {
                let mut sample = dataset.load_window(train_windows[slot], hp.input_frames)?;
                random_flips(&mut sample, &mut flip_rng);
                let input = window_input::<f32>(&sample);
                let pred = model.forward_train(&input)?;
                let target = OneHotMask::from_mask(&sample.mask, model.config().classes);
                let breakdown = combined_loss(&pred.probs, &target, &loss_params)?;
                sums.0 += breakdown.total as f64;
                sums.1 += breakdown.weighted_cross_entropy as f64;
                sums.2 += breakdown.soft_dice as f64;
                let grad_probs = combined_loss_grad(&pred.probs, &target, &loss_params)?;
                grads.accumulate(&model.backward(&grad_probs)?);
            }
            grads.scale(1.0 / hp.batch_size as f32);
            adam_step(model.params_mut(), &grads, &mut adam, lr)?;
            step += 1;

            let n = hp.batch_size as f64;
            write_record(
                &mut log,
                &log_path,
                &StepRecord {
                    step,
                    epoch,
                    lr,
                    loss_total: sums.0 / n,
                    loss_wce: sums.1 / n,
                    loss_sdice: sums.2 / n,
                },
            )?;

            if let Some(every) = hp.eval_every_steps {
                if step % every as u64 == 0 {
                    validate(
                        &model, dataset, &val_windows, &loss_params, epoch, step, &mut evals,
                        &mut best, &mut best_bytes, &mut log, &log_path,
                    )?;
                }
            }
        }

        if hp.eval_every_steps.is_none() {
            validate(
                &model, dataset, &val_windows, &loss_params, epoch, step, &mut evals, &mut best,
                &mut best_bytes, &mut log, &log_path,
            )?;
        }
    }

    log.flush().map_err(|e| Error::io(&log_path, e))?;
    let checkpoint_path = out_dir.join("best.ckpt");
    fs::write(&checkpoint_path, &best_bytes).map_err(|e| Error::io(&checkpoint_path, e))?;
    Ok(TrainOutcome {
        best,
        steps: step,
        checkpoint_path,
        log_path,
    })
}

#[allow(clippy::too_many_arguments)]
fn validate(
    model: &Model<f32>,
    dataset: &Dataset,
    val_windows: &[WindowRef],
    loss_params: &LossParams,
    epoch: usize,
    step: u64,
    evals: &mut u64,
    best: &mut Option<BestEval>,
    best_bytes: &mut Vec<u8>,
    log: &mut BufWriter<fs::File>,
    log_path: &Path,
) -> Result<()> {
    let report = evaluate_windows(model, dataset, val_windows, loss_params)?;
    *evals += 1;
    write_record(
        log,
        log_path,
        &EvalRecord {
            eval: *evals,
            epoch,
            step,
            mean_iou: report.mean_iou,
            mean_dice: report.mean_dice,
            per_class: report.per_class,
        },
    )?;
    // Strictly greater: ties keep the earlier evaluation.
    if best.as_ref().is_none_or(|b| report.mean_dice > b.mean_dice) {
        *best = Some(BestEval {
            eval: *evals,
            epoch,
            step,
            mean_dice: report.mean_dice,
        });
        *best_bytes = checkpoint_bytes(model.config(), model.params())?;
    }
    Ok(())
}

fn write_record<R: Serialize>(
    log: &mut BufWriter<fs::File>,
    path: &Path,
    record: &R,
) -> Result<()> {
    let line = serde_json::to_string(record)?;
    writeln!(log, "{line}").map_err(|e| Error::io(path, e))
}

fn split_windows(dataset: &Dataset, split: SplitId, n: usize) -> Result<Vec<WindowRef>> {
    let windows = dataset.windows(split, n)?;
    if windows.is_empty() {
        return Err(Error::Dataset(format!(
            "{split:?} split has no {n}-frame windows"
        )));
    }
    Ok(windows)
}

/// Score a model over one split: aggregate IoU/Dice counts over all windows
/// plus window-averaged losses. Parameters are read-only; windows may be
/// scored in parallel and are reduced in a fixed order.
pub fn evaluate(
    model: &Model<f32>,
    dataset: &Dataset,
    split: SplitId,
    loss_params: &LossParams,
) -> Result<MetricsReport> {
    let windows = split_windows(dataset, split, model.config().window)?;
    evaluate_windows(model, dataset, &windows, loss_params)
}

fn evaluate_windows(
    model: &Model<f32>,
    dataset: &Dataset,
    windows: &[WindowRef],
    loss_params: &LossParams,
) -> Result<MetricsReport> {
    let score_one = |window: &WindowRef| -> Result<(OverlapCounts, f64, f64, f64)> {
        let sample = dataset.load_window(*window, model.config().window)?;
        let input = window_input::<f32>(&sample);
        let pred = model.forward(&input)?;
        let target = OneHotMask::from_mask(&sample.mask, model.config().classes);
        let breakdown = combined_loss(&pred.probs, &target, loss_params)?;
        let hard = hard_classes(&pred.probs)?;
        let counts = OverlapCounts::from_masks(&hard, &sample.mask)?;
        Ok((
            counts,
            breakdown.weighted_cross_entropy as f64,
            breakdown.soft_dice as f64,
            breakdown.total as f64,
        ))
    };

    #[cfg(feature = "parallel")]
    let scored: Vec<_> = windows.par_iter().map(score_one).collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let scored: Vec<_> = windows.iter().map(score_one).collect::<Result<_>>()?;

    let mut counts = OverlapCounts::default();
    let mut losses = (0.0f64, 0.0f64, 0.0f64);
    for (c, wce, sdice, total) in &scored {
        counts.merge(c);
        losses.0 += wce;
        losses.1 += sdice;
        losses.2 += total;
    }
    let n = windows.len() as f64;
    Ok(MetricsReport::new(
        &counts,
        LossSummary {
            wce: losses.0 / n,
            sdice: losses.1 / n,
            total: losses.2 / n,
        },
    ))
}
