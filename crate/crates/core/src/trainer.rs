//! Optimisation loop and checkpoint selection.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamGrads, Tape};
use crate::checkpoint;
use crate::corpus::{Dataset, Instance, TRAIN, VALIDATION};
use crate::encoder::{EncoderConfig, Vocab};
use crate::error::{Error, Result};
use crate::evaluator::{evaluate, EvalOptions, EvalReport};
use crate::model::{DecodePolicy, JointModel, ModelConfig};
use crate::objectives::{instance_losses, LossValues, ObjectiveConfig, RewardBaseline};
use crate::params::{Adam, AdamConfig, GradBuffer};
use crate::rng::{derive_seed, rng_for};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SelectionMetric {
    F1C,
    F1E,
    /// Unweighted mean of target and explanation macro-F1.
    #[default]
    MeanF1,
    AccJoint,
}

impl SelectionMetric {
    pub fn name(self) -> &'static str {
        match self {
            SelectionMetric::F1C => "f1_c",
            SelectionMetric::F1E => "f1_e",
            SelectionMetric::MeanF1 => "mean_f1",
            SelectionMetric::AccJoint => "acc_joint",
        }
    }

    pub fn value(self, report: &EvalReport) -> f64 {
        match self {
            SelectionMetric::F1C => report.target.macro_f1,
            SelectionMetric::F1E => report.explanation.macro_f1,
            SelectionMetric::MeanF1 => (report.target.macro_f1 + report.explanation.macro_f1) / 2.0,
            SelectionMetric::AccJoint => report.joint_accuracy,
        }
    }
}

impl fmt::Display for SelectionMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SelectionMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f1_c" => Ok(SelectionMetric::F1C),
            "f1_e" => Ok(SelectionMetric::F1E),
            "mean_f1" => Ok(SelectionMetric::MeanF1),
            "acc_joint" => Ok(SelectionMetric::AccJoint),
            other => Err(Error::Config(format!("unknown selection metric {other:?}"))),
        }
    }
}

impl Serialize for SelectionMetric {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for SelectionMetric {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// First index of the maximum; `None` for an empty slice.
pub fn argmax_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Epoch whose validation report maximises `metric`; ties go to the earliest.
pub fn select_checkpoint(history: &[EvalReport], metric: SelectionMetric) -> Result<usize> {
    let values: Vec<f64> = history.iter().map(|r| metric.value(r)).collect();
    argmax_first(&values).ok_or_else(|| Error::Config("cannot select a checkpoint from an empty history".into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub selection_metric: SelectionMetric,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Decoding used for validation explanation metrics.
    pub policy: DecodePolicy,
    pub objectives: ObjectiveConfig,
    pub model: EncoderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 20,
            batch_size: 8,
            seed: 0,
            selection_metric: SelectionMetric::MeanF1,
            clip_norm: Some(1.0),
            policy: DecodePolicy::Threshold,
            objectives: ObjectiveConfig::default(),
            model: EncoderConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Optimiser settings reported for BERT-base fine-tuning.
    pub fn paper_preset() -> Self {
        Self {
            lr: 2e-5,
            epochs: 10,
            batch_size: 8,
            objectives: ObjectiveConfig { lambda: 0.5, k: 10, ..ObjectiveConfig::default() },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("lr must be a finite nonnegative number".into()));
        }
        self.objectives.validate()?;
        self.model.validate()
    }
}

/// One optimiser step's logged loss components (batch means).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    #[serde(rename = "L_C")]
    pub l_c: f64,
    #[serde(rename = "L_E", skip_serializing_if = "Option::is_none", default)]
    pub l_e: Option<f64>,
    #[serde(rename = "L_F", skip_serializing_if = "Option::is_none", default)]
    pub l_f: Option<f64>,
    #[serde(rename = "L_DC", skip_serializing_if = "Option::is_none", default)]
    pub l_dc: Option<f64>,
    #[serde(rename = "L_CI", skip_serializing_if = "Option::is_none", default)]
    pub l_ci: Option<f64>,
    pub total: f64,
}

impl StepLog {
    fn from_means(step: usize, epoch: usize, v: &LossValues) -> Self {
        Self {
            step,
            epoch,
            l_c: v.target,
            l_e: v.explanation,
            l_f: v.faithfulness,
            l_dc: v.data_consistency,
            l_ci: v.confidence,
            total: v.total(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub best: JointModel<T>,
    pub last: JointModel<T>,
    pub best_epoch: usize,
    pub validation: Vec<EvalReport>,
    pub steps: Vec<StepLog>,
}

impl<T: Scalar> TrainOutcome<T> {
    /// Metadata stored alongside checkpoints.
    pub fn meta(&self, config: &TrainConfig, epoch: usize) -> serde_json::Value {
        serde_json::json!({
            "epoch": epoch,
            "objectives": config.objectives,
            "seed": config.seed,
        })
    }
}

fn mean_values(values: &[LossValues]) -> LossValues {
    let n = values.len() as f64;
    let mean_opt = |f: fn(&LossValues) -> Option<f64>| -> Option<f64> {
        let xs: Vec<f64> = values.iter().filter_map(f).collect();
        (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / n)
    };
    LossValues {
        target: values.iter().map(|v| v.target).sum::<f64>() / n,
        explanation: mean_opt(|v| v.explanation),
        faithfulness: mean_opt(|v| v.faithfulness),
        data_consistency: mean_opt(|v| v.data_consistency),
        confidence: mean_opt(|v| v.confidence),
    }
}

/// Builds a freshly initialised model, optionally copying encoder weights
/// from a pretrained checkpoint.
pub fn init_model<T: Scalar>(config: &TrainConfig, num_classes: usize, train: &[Instance]) -> Result<JointModel<T>> {
    let model_config = ModelConfig { encoder: config.model.clone(), num_classes };
    match &config.model.pretrained {
        None => JointModel::new(model_config, Vocab::build(train), derive_seed(config.seed, &[0x1417])),
        Some(path) => {
            let (source, _) = checkpoint::load::<T>(path)?;
            let mut model = JointModel::new(model_config, source.vocab().clone(), derive_seed(config.seed, &[0x1417]))?;
            let src = source.params();
            model.params_mut().map_values(|name, m| {
                if name.starts_with("encoder.") {
                    if let Some(v) = src.by_name(name).filter(|v| v.shape() == m.shape()) {
                        *m = v.clone();
                    }
                }
            });
            Ok(model)
        }
    }
}

struct InstanceResult<T> {
    values: LossValues,
    grads: ParamGrads<T>,
    reward: Option<f64>,
}

/// Trains on the `train` split, selecting the epoch that maximises the
/// configured metric on `validation`.
pub fn train<T: Scalar>(config: &TrainConfig, dataset: &Dataset) -> Result<TrainOutcome<T>> {
    config.validate()?;
    dataset.require_training_splits()?;
    let train_set = dataset.split(TRAIN)?;
    let val_set = dataset.split(VALIDATION)?;
    let model = init_model::<T>(config, dataset.num_classes, train_set)?;
    train_model(config, model, train_set, val_set)
}

/// Training loop on an already initialised model.
pub fn train_model<T: Scalar>(
    config: &TrainConfig,
    mut model: JointModel<T>,
    train_set: &[Instance],
    val_set: &[Instance],
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    let objectives = &config.objectives;
    let mut opt = Adam::new(AdamConfig { lr: config.lr, ..AdamConfig::default() }, model.params());
    let mut baseline = RewardBaseline::new(objectives.baseline_momentum, objectives.reward_baseline);
    let eval_options = EvalOptions { policy: config.policy, ..EvalOptions::default() };

    let mut steps = Vec::new();
    let mut validation = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, JointModel<T>)> = None;
    let mut step = 0usize;

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng_for(config.seed, &[0x5F, epoch as u64]));
        for batch in order.chunks(config.batch_size) {
            let b = baseline.current();
            let model_ref = &model;
            let results = batch
                .par_iter()
                .map(|&idx| {
                    let mut rng = rng_for(config.seed, &[0x57, step as u64, idx as u64]);
                    let mut tape = Tape::new();
                    let terms = instance_losses(model_ref, &mut tape, &train_set[idx], objectives, b, &mut rng)?;
                    let grads = tape.backward(terms.total);
                    Ok(InstanceResult {
                        values: terms.values(&tape),
                        grads,
                        reward: terms.faithfulness.as_ref().map(|(_, s)| s.reward),
                    })
                })
                .collect::<Result<Vec<_>>>()?;

            let values: Vec<LossValues> = results.iter().map(|r| r.values.clone()).collect();
            let log = StepLog::from_means(step, epoch, &mean_values(&values));
            if !log.total.is_finite() {
                return Err(Error::Divergence {
                    step,
                    batch_ids: batch.iter().map(|&i| train_set[i].id.clone()).collect(),
                });
            }
            let mut grads = GradBuffer::zeros_like(model.params());
            for r in &results {
                grads.add(&r.grads);
            }
            grads.scale(T::one() / T::of(batch.len() as f64));
            if let Some(max) = config.clip_norm {
                grads.clip_global_norm(T::of(max));
            }
            opt.step(model.params_mut(), &grads);
            for r in results.iter().filter_map(|r| r.reward) {
                baseline.update(r);
            }
            steps.push(log);
            step += 1;
        }

        let report = evaluate(&model, val_set, &eval_options, None)?;
        let score = config.selection_metric.value(&report);
        log::info!(
            "epoch {epoch}: loss {:.4}, val F1-C {:.3}, F1-E {:.3}, {} {:.4}",
            steps.last().map_or(f64::NAN, |s| s.total),
            report.target.macro_f1,
            report.explanation.macro_f1,
            config.selection_metric,
            score
        );
        if best.as_ref().is_none_or(|(_, s, _)| score > *s) {
            best = Some((epoch, score, model.clone()));
        }
        validation.push(report);
    }

    let (best_epoch, _, best_model) = best.expect("at least one epoch");
    debug_assert_eq!(select_checkpoint(&validation, config.selection_metric).ok(), Some(best_epoch));
    Ok(TrainOutcome { best: best_model, last: model, best_epoch, validation, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluator::{ExplanationMetrics, TargetMetrics};

    fn report(f1_c: f64, f1_e: f64) -> EvalReport {
        EvalReport {
            target: TargetMetrics { accuracy: 0.0, macro_f1: f1_c },
            explanation: ExplanationMetrics { macro_f1: f1_e, ..ExplanationMetrics::default() },
            ..EvalReport::default()
        }
    }

    #[test]
    fn selection_examples() {
        assert_eq!(argmax_first(&[0.5, 0.7, 0.6]), Some(1));
        assert_eq!(argmax_first(&[0.3, 0.3, 0.3]), Some(0));
        assert_eq!(argmax_first(&[]), None);
        let h = vec![report(0.8, 0.4), report(0.6, 0.8)];
        assert_eq!(select_checkpoint(&h, SelectionMetric::MeanF1).unwrap(), 1);
        assert_eq!(select_checkpoint(&h, SelectionMetric::F1C).unwrap(), 0);
        assert!(select_checkpoint(&[], SelectionMetric::F1C).is_err());
        assert!("best".parse::<SelectionMetric>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { epochs: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
        let paper = TrainConfig::paper_preset();
        assert_eq!((paper.lr, paper.epochs, paper.batch_size), (2e-5, 10, 8));
        assert_eq!(paper.objectives.lambda, 0.5);
    }

    #[test]
    fn step_log_serialises_only_active_terms() {
        let v = LossValues { target: 0.5, faithfulness: Some(-0.1), ..LossValues::default() };
        let log = StepLog::from_means(3, 0, &v);
        let json = serde_json::to_value(&log).unwrap();
        assert!(json.get("L_E").is_none());
        assert_eq!(json["L_F"], -0.1);
        assert_eq!(log.total, 0.5 + -0.1);
    }
}
