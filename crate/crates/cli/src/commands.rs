use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use diagprop::checkpoint;
use diagprop::corpus::{write_jsonl, VALIDATION};
use diagprop::evaluator::{evaluate, fit_confidence_probe, predict_all, PredictionRecord};
use diagprop::trainer::train as train_model;
use diagprop::{Dataset, JointModel, Scalar, TrainConfig};
use serde::Serialize;

use crate::config::{Precision, RunConfig};

pub const SNAPSHOT: &str = "config.resolved.toml";

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn write_lines<I: Serialize>(path: &Path, items: impl IntoIterator<Item = I>) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn synth(config: &RunConfig) -> Result<()> {
    let Some(spec) = &config.data.synthetic else {
        bail!("synth needs a [data.synthetic] section");
    };
    config.write_snapshot(SNAPSHOT)?;
    let ds = config.dataset()?;
    for (name, instances) in &ds.splits {
        write_jsonl(config.output_dir.join(format!("{name}.jsonl")), instances)?;
    }
    let counts: serde_json::Map<String, serde_json::Value> =
        ds.splits.iter().map(|(k, v)| (k.clone(), v.len().into())).collect();
    write_json(
        &config.output_dir.join("manifest.json"),
        &serde_json::json!({ "seed": spec.seed, "spec": spec, "instances": counts }),
    )?;
    log::info!("wrote {} splits to {}", ds.splits.len(), config.output_dir.display());
    Ok(())
}

fn train_into<T: Scalar>(config: &TrainConfig, ds: &Dataset, dir: &Path) -> Result<(usize, f64)> {
    let out = train_model::<T>(config, ds)?;
    let final_epoch = config.epochs - 1;
    checkpoint::save(&out.best, out.meta(config, out.best_epoch), dir.join("best.ckpt"))?;
    checkpoint::save(&out.last, out.meta(config, final_epoch), dir.join("final.ckpt"))?;
    write_lines(&dir.join("train_log.jsonl"), &out.steps)?;
    write_lines(
        &dir.join("validation.jsonl"),
        out.validation.iter().enumerate().map(|(epoch, r)| serde_json::json!({ "epoch": epoch, "report": r })),
    )?;
    let score = config.selection_metric.value(&out.validation[out.best_epoch]);
    log::info!("best epoch {} ({} {score:.4}); outputs in {}", out.best_epoch, config.selection_metric, dir.display());
    Ok((out.best_epoch, score))
}

fn train_with(config: &RunConfig, train: &TrainConfig, ds: &Dataset, dir: &Path) -> Result<(usize, f64)> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    match config.precision {
        Precision::F32 => train_into::<f32>(train, ds, dir),
        Precision::F64 => train_into::<f64>(train, ds, dir),
    }
}

pub fn train(config: &RunConfig) -> Result<()> {
    let train = config.train_config()?;
    config.write_snapshot(SNAPSHOT)?;
    let ds = config.dataset()?;
    train_with(config, &train, &ds, &config.output_dir)?;
    Ok(())
}

fn eval_typed<T: Scalar>(config: &RunConfig, checkpoint_path: &Path, ds: &Dataset) -> Result<()> {
    let (model, meta): (JointModel<T>, _) = checkpoint::load(checkpoint_path)?;
    if model.num_classes() != ds.num_classes {
        bail!("checkpoint predicts {} classes but the data has {}", model.num_classes(), ds.num_classes);
    }
    let instances = ds.split(&config.eval.split)?;
    let trained_head = meta["objectives"]["confidence_indication"].as_bool().unwrap_or(false);
    let (head, source) = if !config.eval.properties {
        (None, "none")
    } else if trained_head {
        (Some(model.confidence_head()), "model")
    } else if let Ok(val) = ds.split(VALIDATION) {
        let outputs = predict_all(&model, val)?;
        (Some(fit_confidence_probe(&outputs, config.eval.probe_steps)), "post-hoc probe fitted on validation")
    } else {
        log::warn!("no validation split to fit a confidence probe on; confidence block omitted");
        (None, "none")
    };
    let report = evaluate(&model, instances, &config.eval.options(), head.as_ref())?;

    let dir = &config.output_dir;
    write_json(&dir.join("eval_report.json"), &report)?;
    let title = format!("{} on {} ({} instances)", checkpoint_path.display(), config.eval.split, instances.len());
    let mut md = report.to_markdown(&title);
    if report.confidence.is_some() {
        md.push_str(&format!("\nConfidence estimate: {source}.\n"));
    }
    fs::write(dir.join("eval_report.md"), md)?;
    let outputs = predict_all(&model, instances)?;
    write_lines(
        &dir.join("predictions.jsonl"),
        instances.iter().zip(&outputs).map(|(i, o)| PredictionRecord::new(i, o, config.eval.policy)),
    )?;
    log::info!(
        "F1-C {:.3}, F1-E {:.3}, joint accuracy {:.3}; report in {}",
        report.target.macro_f1,
        report.explanation.macro_f1,
        report.joint_accuracy,
        dir.display()
    );
    Ok(())
}

pub fn eval(config: &RunConfig, checkpoint_path: &Path) -> Result<()> {
    let header = checkpoint::read_header(checkpoint_path)?;
    config.write_snapshot("eval.config.resolved.toml")?;
    let ds = config.dataset()?;
    match header.dtype.as_str() {
        "f32" => eval_typed::<f32>(config, checkpoint_path, &ds),
        "f64" => eval_typed::<f64>(config, checkpoint_path, &ds),
        other => bail!("unsupported checkpoint dtype {other}"),
    }
}

#[derive(Serialize)]
struct SweepRow {
    lambda: f64,
    k: usize,
    seed: u64,
    best_epoch: usize,
    score: f64,
    dir: String,
}

pub fn sweep(config: &RunConfig) -> Result<()> {
    let grid = config.sweep.clone().unwrap_or_default();
    if grid.lambda.is_empty() || grid.k.is_empty() || grid.seeds.is_empty() {
        bail!("sweep grid has an empty axis");
    }
    let base = config.train_config()?;
    config.write_snapshot(SNAPSHOT)?;
    let ds = config.dataset()?;
    let mut rows = Vec::new();
    for &lambda in &grid.lambda {
        for &k in &grid.k {
            for &seed in &grid.seeds {
                let mut run = base.clone();
                run.seed = seed;
                run.objectives.lambda = lambda;
                run.objectives.k = k;
                run.validate()?;
                let name = format!("lambda{lambda}_k{k}_seed{seed}");
                let dir = config.output_dir.join(&name);
                log::info!("sweep run {name}");
                let (best_epoch, score) = train_with(config, &run, &ds, &dir)?;
                rows.push(SweepRow { lambda, k, seed, best_epoch, score, dir: name });
            }
        }
    }
    write_lines(&config.output_dir.join("sweep.jsonl"), &rows)?;
    let best = rows.iter().fold(None::<&SweepRow>, |b, r| match b {
        Some(b) if b.score >= r.score => Some(b),
        _ => Some(r),
    });
    if let Some(b) = best {
        write_json(&config.output_dir.join("sweep_best.json"), b)?;
        log::info!("best: lambda {} k {} seed {} ({} {:.4})", b.lambda, b.k, b.seed, base.selection_metric, b.score);
    }
    Ok(())
}
