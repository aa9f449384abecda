//! Implementations behind the subcommands. Each returns the crate-wide
//! `Result`; `main` turns input errors into exit code 2 and everything else
//! into 1.

use std::fs;
use std::path::Path;

use radarseg4d::config::ViewId;
use radarseg4d::dataset::{
    compile_dataset, synth_dataset, write_mask_png, CompileSummary, Dataset, SplitId, WindowRef,
};
use radarseg4d::loss::LossParams;
use radarseg4d::metrics::hard_classes;
use radarseg4d::network::{load_checkpoint, window_input, Model};
use radarseg4d::train::Hyperparams;
use radarseg4d::{train, Error, Result};

use crate::{config, render};
use crate::{CompileArgs, EvalArgs, PredictArgs, RenderArgs, StatsArgs, SynthArgs, TrainArgs};

pub fn synth(args: &SynthArgs) -> Result<()> {
    let mut cfg = config::load(args.config.as_deref())?.dataset;
    let mut synth = cfg.synth_or_default();
    if let Some(seed) = args.seed {
        synth.seed = seed;
    }
    if let Some(frames) = args.frames {
        synth.frames = frames;
    }
    if synth.frames == 0 {
        return Err(Error::Config("frame count must be positive".into()));
    }
    cfg.synth = Some(synth);
    let summary = synth_dataset(&args.out, &cfg)?;
    print_summary(&summary, &args.out);
    Ok(())
}

pub fn compile(args: &CompileArgs) -> Result<()> {
    let cfg = config::load(args.config.as_deref())?.dataset;
    let summary = compile_dataset(&args.raw, &args.out, &cfg)?;
    print_summary(&summary, &args.out);
    if summary.dropped_pairs > 0 {
        println!("dropped {} clouds without a close annotation", summary.dropped_pairs);
    }
    if summary.power_warnings > 0 {
        println!("{} points had power outside the sensor range", summary.power_warnings);
    }
    for failure in &summary.failures {
        println!("skipped: {failure}");
    }
    Ok(())
}

fn print_summary(summary: &CompileSummary, out: &Path) {
    println!(
        "wrote {} frames in {} sequences to {}",
        summary.frames,
        summary.sequences,
        out.display()
    );
    println!(
        "person pixel fraction: {:.6}",
        summary.stats.class.person_pixel_fraction
    );
    println!(
        "masks with a person: {:.6}",
        summary.stats.class.nonempty_mask_fraction
    );
    if !summary.excluded_sequences.is_empty() {
        println!(
            "excluded person-free sequences: {}",
            summary.excluded_sequences.join(", ")
        );
    }
}

pub fn stats(args: &StatsArgs) -> Result<()> {
    let dataset = Dataset::open(&args.dataset)?;
    println!("{}", serde_json::to_string_pretty(dataset.stats())?);
    Ok(())
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let file = config::load(args.config.as_deref())?;
    let dataset = Dataset::open(&args.dataset)?;
    let mut hp = file.train;
    if let Some(seed) = args.seed {
        hp.seed = seed;
    }
    let outcome = train::run(&dataset, file.network, &hp, &args.out)?;
    println!(
        "trained {} steps; log at {}",
        outcome.steps,
        outcome.log_path.display()
    );
    match &outcome.best {
        Some(b) => println!(
            "best eval #{} (epoch {}, step {}): mean dice {:.6}",
            b.eval, b.epoch, b.step, b.mean_dice
        ),
        None => println!("no evaluation ran; the checkpoint holds the initialization"),
    }
    println!("checkpoint at {}", outcome.checkpoint_path.display());
    Ok(())
}

/// Loss weighting used in reports: the dataset's class weights plus the
/// configured term coefficients.
fn loss_params(dataset: &Dataset, hp: &Hyperparams) -> LossParams {
    let weights = dataset.stats().class.class_weights.ea;
    LossParams {
        class_weights: vec![weights.background as f32, weights.person as f32],
        lambda_wce: hp.lambda_wce,
        lambda_sdice: hp.lambda_sdice,
    }
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let file = config::load(args.config.as_deref())?;
    let dataset = Dataset::open(&args.dataset)?;
    let data = load_checkpoint(&args.checkpoint)?;
    let model = Model::<f32>::from_checkpoint(&data, dataset.specs())?;
    let params = loss_params(&dataset, &file.train);
    let report = train::evaluate(&model, &dataset, args.split.into(), &params)?;
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(out) = &args.out {
        fs::write(out, format!("{json}\n")).map_err(|e| Error::io(out, e))?;
        eprintln!("wrote report to {}", out.display());
    }
    println!("{json}");
    Ok(())
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let dataset = Dataset::open(&args.dataset)?;
    let data = load_checkpoint(&args.checkpoint)?;
    let model = Model::<f32>::from_checkpoint(&data, dataset.specs())?;
    let n = model.config().window;

    let windows = match &args.frame {
        Some(frame) => vec![locate_window(&dataset, frame, n)?],
        None => {
            let split: SplitId = args.split.unwrap_or(crate::SplitArg::Val).into();
            let windows = dataset.windows(split, n)?;
            if windows.is_empty() {
                return Err(Error::Dataset(format!(
                    "{split:?} split has no {n}-frame windows"
                )));
            }
            windows
        }
    };

    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    for window in &windows {
        let sample = dataset.load_window(*window, n)?;
        let pred = model.forward(&window_input::<f32>(&sample))?;
        let mask = hard_classes(&pred.probs)?;
        let path = args.out.join(format!("{}.png", sample.frame_id));
        write_mask_png(&path, &mask)?;
    }
    println!("wrote {} masks to {}", windows.len(), args.out.display());
    Ok(())
}

pub fn render(args: &RenderArgs) -> Result<()> {
    let dataset = Dataset::open(&args.dataset)?;
    let (sequence, t) = locate_frame(&dataset, &args.frame)?;
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;

    let frame = dataset.load_frame(sequence, t)?;
    for view in ViewId::ALL {
        let img = render::heatmap_image(frame.view(view));
        let path = args.out.join(format!("{}_{}.png", args.frame, view.name()));
        render::save_png(&path, &img)?;
        println!("wrote {}", path.display());
    }

    let mask = dataset.load_mask(sequence, t)?;
    let path = args.out.join(format!("{}_mask.png", args.frame));
    render::save_png(&path, &render::mask_image(&mask))?;
    println!("wrote {}", path.display());

    if let Some(checkpoint) = &args.checkpoint {
        let data = load_checkpoint(checkpoint)?;
        let model = Model::<f32>::from_checkpoint(&data, dataset.specs())?;
        let n = model.config().window;
        if t + 1 < n {
            return Err(Error::Dataset(format!(
                "frame {} is only {} frames into its sequence; prediction needs {n}",
                args.frame,
                t + 1
            )));
        }
        let sample = dataset.load_window(WindowRef { sequence, t }, n)?;
        let pred = model.forward(&window_input::<f32>(&sample))?;
        let predicted = hard_classes(&pred.probs)?;
        let path = args.out.join(format!("{}_pred.png", args.frame));
        render::save_png(&path, &render::mask_image(&predicted))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// Resolve a frame id to its place in the dataset.
fn locate_frame(dataset: &Dataset, frame: &str) -> Result<(usize, usize)> {
    for (s, seq) in dataset.sequences().iter().enumerate() {
        if let Some(t) = seq.frames.iter().position(|f| f.frame_id == frame) {
            return Ok((s, t));
        }
    }
    Err(Error::Dataset(format!("frame {frame} not found")))
}

/// Resolve a frame id to the temporal window that predicts it.
fn locate_window(dataset: &Dataset, frame: &str, n: usize) -> Result<WindowRef> {
    let (sequence, t) = locate_frame(dataset, frame)?;
    if t + 1 < n {
        return Err(Error::Dataset(format!(
            "frame {frame} is only {} frames into its sequence; prediction needs {n}",
            t + 1
        )));
    }
    Ok(WindowRef { sequence, t })
}
