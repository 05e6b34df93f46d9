//! Target, explanation, joint and property metrics, plus report rendering.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::corpus::{mask_random_words, mask_sentences, query_only, Instance};
use crate::error::{Error, Result};
use crate::model::{decode_explanation, ConfidenceHead, DecodePolicy, JointModel, ModelOutput};
use crate::params::{Adam, AdamConfig, GradBuffer, ParamStore};
use crate::rng::rng_for;
use crate::scalar::{sigmoid, Scalar};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and population standard deviation; zeros for an empty slice.
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self::default();
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TargetMetrics {
    pub accuracy: f64,
    pub macro_f1: f64,
}

/// Per-class F1 from counts; 0 when undefined.
pub fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Accuracy (correct / total) and macro-F1 over `num_classes` classes.
pub fn target_metrics(pred: &[usize], gold: &[usize], num_classes: usize) -> Result<TargetMetrics> {
    if pred.len() != gold.len() || pred.is_empty() {
        return Err(Error::Config("target_metrics needs equal-length nonempty label lists".into()));
    }
    if let Some(bad) = pred.iter().chain(gold).find(|&&l| l >= num_classes) {
        return Err(Error::invalid("labels", format!("label {bad} outside [0, {num_classes})")));
    }
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fn_ = vec![0usize; num_classes];
    let mut correct = 0;
    for (&p, &g) in pred.iter().zip(gold) {
        if p == g {
            correct += 1;
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[g] += 1;
        }
    }
    let macro_f1 = (0..num_classes).map(|c| f1_from_counts(tp[c], fp[c], fn_[c])).sum::<f64>() / num_classes as f64;
    Ok(TargetMetrics { accuracy: correct as f64 / pred.len() as f64, macro_f1 })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExplanationMetrics {
    pub precision: f64,
    pub recall: f64,
    /// Mean F1 of the "explanation" and "not explanation" sentence classes.
    pub macro_f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

/// Index of the gold set with the largest overlap with `pred` (first on ties).
pub fn best_gold(pred: &[bool], golds: &[Vec<bool>]) -> Option<usize> {
    let overlap = |g: &Vec<bool>| pred.iter().zip(g).filter(|(&a, &b)| a && b).count();
    let mut best: Option<(usize, usize)> = None;
    for (i, g) in golds.iter().enumerate() {
        let o = overlap(g);
        if best.is_none_or(|(_, bo)| o > bo) {
            best = Some((i, o));
        }
    }
    best.map(|(i, _)| i)
}

/// Sentence-level counts against the best-overlapping gold set of each
/// instance, pooled over the corpus.
pub fn explanation_metrics(preds: &[Vec<bool>], golds: &[Vec<Vec<bool>>]) -> Result<ExplanationMetrics> {
    if preds.len() != golds.len() {
        return Err(Error::Config("explanation_metrics needs aligned prediction and gold lists".into()));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (i, (pred, gs)) in preds.iter().zip(golds).enumerate() {
        let Some(best) = best_gold(pred, gs) else {
            log::warn!("instance {i} has no gold explanation; skipped");
            continue;
        };
        let gold = &gs[best];
        if gold.len() != pred.len() {
            return Err(Error::invalid(format!("#{i}"), "predicted and gold explanation lengths differ"));
        }
        for (&p, &g) in pred.iter().zip(gold) {
            match (p, g) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let macro_f1 = (f1_from_counts(tp, fp, fn_) + f1_from_counts(tn, fn_, fp)) / 2.0;
    Ok(ExplanationMetrics { precision, recall, macro_f1, tp, fp, fn_, tn })
}

/// Fraction of instances with the right label and an explanation equal to
/// one of the gold sets.
pub fn joint_accuracy(
    pred_labels: &[usize],
    pred_expls: &[Vec<bool>],
    gold_labels: &[usize],
    gold_sets: &[Vec<Vec<bool>>],
) -> f64 {
    let n = pred_labels.len();
    assert!(pred_expls.len() == n && gold_labels.len() == n && gold_sets.len() == n, "unaligned inputs");
    if n == 0 {
        return 0.0;
    }
    let correct = (0..n)
        .filter(|&i| pred_labels[i] == gold_labels[i] && gold_sets[i].iter().any(|g| *g == pred_expls[i]))
        .count();
    correct as f64 / n as f64
}

/// Fraction of instances whose explanation exactly equals one gold set.
pub fn explanation_exact_match(pred_expls: &[Vec<bool>], gold_sets: &[Vec<Vec<bool>>]) -> f64 {
    if pred_expls.is_empty() {
        return 0.0;
    }
    let hits = pred_expls.iter().zip(gold_sets).filter(|(p, gs)| gs.iter().any(|g| g == *p)).count();
    hits as f64 / pred_expls.len() as f64
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Faithfulness {
    /// Percent of instances keeping their prediction on the explanation alone.
    pub sufficiency: f64,
    /// Percent keeping it on the complement; lower is better.
    pub completeness: f64,
}

/// Sufficiency and completeness for arbitrary predictors. `full[i]` is the
/// prediction on the untouched instance and `explanations[i]` the selected
/// sentences.
pub fn sufficiency_completeness_with<F>(
    instances: &[Instance],
    full: &[usize],
    explanations: &[Vec<bool>],
    predict: F,
) -> Result<Faithfulness>
where
    F: Fn(&Instance) -> Result<usize> + Sync,
{
    if instances.is_empty() {
        return Ok(Faithfulness::default());
    }
    let flags = instances
        .par_iter()
        .zip(full)
        .zip(explanations)
        .map(|((inst, &c), expl)| {
            let complement: Vec<bool> = expl.iter().map(|&b| !b).collect();
            let c_s = predict(&mask_sentences(inst, expl)?)?;
            let c_co = predict(&mask_sentences(inst, &complement)?)?;
            Ok((c_s == c, c_co == c))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = instances.len() as f64;
    let suff = flags.iter().filter(|f| f.0).count() as f64;
    let compl = flags.iter().filter(|f| f.1).count() as f64;
    Ok(Faithfulness { sufficiency: 100.0 * suff / n, completeness: 100.0 * compl / n })
}

pub fn sufficiency_completeness<T: Scalar>(
    model: &JointModel<T>,
    instances: &[Instance],
    policy: DecodePolicy,
) -> Result<Faithfulness> {
    let outputs = predict_all(model, instances)?;
    let full: Vec<usize> = outputs.iter().map(|o| o.predicted_class).collect();
    let expls: Vec<Vec<bool>> = outputs.iter().map(|o| decode_explanation(&o.sentence_probs, policy)).collect();
    sufficiency_completeness_with(instances, &full, &expls, |i| Ok(model.forward(i)?.predicted_class))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DataConsistency {
    pub pred_diff: MeanStd,
    /// Summed over sentences, so it grows with the number of sentences.
    pub expl_diff: MeanStd,
}

/// Prediction- and explanation-confidence differences between an output and
/// the output on a perturbed copy, both read at the original predicted class.
pub fn consistency_diffs<T: Scalar>(original: &ModelOutput<T>, perturbed: &ModelOutput<T>) -> (f64, f64) {
    let c = original.predicted_class;
    let pred = (original.conditioned[c] - perturbed.conditioned[c]).abs().f64();
    let expl = (0..original.sentence_scores.rows())
        .map(|j| {
            (sigmoid(original.sentence_scores.get(j, c)) - sigmoid(perturbed.sentence_scores.get(j, c))).abs().f64()
        })
        .sum();
    (pred, expl)
}

pub fn data_consistency_metric<T: Scalar>(
    model: &JointModel<T>,
    instances: &[Instance],
    k: usize,
    repeats: usize,
    seed: u64,
) -> Result<DataConsistency> {
    if repeats == 0 {
        return Err(Error::Config("data consistency needs at least one repeat".into()));
    }
    let per_instance = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            let original = model.forward(inst)?;
            (0..repeats)
                .map(|r| {
                    let mut rng = rng_for(seed, &[0xDC, i as u64, r as u64]);
                    let perturbed = model.forward(&mask_random_words(inst, k, &mut rng))?;
                    Ok(consistency_diffs(&original, &perturbed))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let (pred, expl): (Vec<f64>, Vec<f64>) = per_instance.into_iter().flatten().unzip();
    Ok(DataConsistency { pred_diff: MeanStd::of(&pred), expl_diff: MeanStd::of(&expl) })
}

pub fn confidence_indication_metric<T: Scalar>(
    model: &JointModel<T>,
    head: &ConfidenceHead<T>,
    instances: &[Instance],
) -> Result<MeanStd> {
    let outputs = predict_all(model, instances)?;
    let diffs: Vec<f64> =
        outputs.iter().map(|o| (o.confidence() - head.predict(&o.sentence_probs)).abs().f64()).collect();
    Ok(MeanStd::of(&diffs))
}

/// Fits a confidence head on frozen model outputs by minimising the mean
/// L1 gap between predicted and actual confidence.
pub fn fit_confidence_probe<T: Scalar>(outputs: &[ModelOutput<T>], steps: usize) -> ConfidenceHead<T> {
    let data: Vec<([f64; 4], f64)> = outputs
        .iter()
        .map(|o| {
            let s = crate::autodiff::summary_stats(&o.sentence_probs);
            ([s[0].f64(), s[1].f64(), s[2].f64(), s[3].f64()], o.confidence().f64())
        })
        .collect();
    let mut store: ParamStore<f64> = ParamStore::new();
    let mut targets: Vec<f64> = data.iter().map(|d| d.1).collect();
    targets.sort_by(f64::total_cmp);
    let median = targets.get(targets.len() / 2).copied().unwrap_or(0.5).clamp(1e-4, 1.0 - 1e-4);
    let w = store.insert("w", Matrix::zeros(4, 1));
    let b = store.insert("b", Matrix::filled(1, 1, (median / (1.0 - median)).ln()));
    if !data.is_empty() {
        let stats = Matrix::from_rows(&data.iter().map(|d| d.0.to_vec()).collect::<Vec<_>>());
        let target = Matrix::from_vec(data.len(), 1, data.iter().map(|d| d.1).collect());
        let mut opt = Adam::new(AdamConfig { lr: 0.02, ..AdamConfig::default() }, &store);
        for _ in 0..steps {
            let mut tape = Tape::new();
            let x = tape.constant(stats.clone());
            let wv = store.leaf(&mut tape, w);
            let bv = store.leaf(&mut tape, b);
            let z = tape.matmul(x, wv);
            let z = tape.add_row(z, bv);
            let p = tape.sigmoid(z);
            let t = tape.constant(target.clone());
            let d = tape.sub(p, t);
            let d = tape.abs(d);
            let loss: Var = tape.mean(d);
            let mut grads = GradBuffer::zeros_like(&store);
            grads.add(&tape.backward(loss));
            opt.step(&mut store, &grads);
        }
    }
    let wd = store.get(w).data();
    ConfidenceHead {
        weights: [T::of(wd[0]), T::of(wd[1]), T::of(wd[2]), T::of(wd[3])],
        bias: T::of(store.get(b).data()[0]),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryOnly {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub random_accuracy: f64,
    pub random_macro_f1: f64,
}

/// Target metrics with every sentence masked, next to a seeded uniform
/// random-prediction baseline.
pub fn query_only_eval<T: Scalar>(model: &JointModel<T>, instances: &[Instance], seed: u64) -> Result<QueryOnly> {
    let reduced: Vec<Instance> = instances.iter().map(query_only).collect();
    let pred: Vec<usize> = predict_all(model, &reduced)?.iter().map(|o| o.predicted_class).collect();
    let gold: Vec<usize> = instances.iter().map(|i| i.label).collect();
    let n = model.num_classes();
    let qo = target_metrics(&pred, &gold, n)?;
    let mut rng = rng_for(seed, &[0x0A]);
    let random: Vec<usize> = gold.iter().map(|_| rng.gen_range(0..n)).collect();
    let rnd = target_metrics(&random, &gold, n)?;
    Ok(QueryOnly {
        accuracy: qo.accuracy,
        macro_f1: qo.macro_f1,
        random_accuracy: rnd.accuracy,
        random_macro_f1: rnd.macro_f1,
    })
}

pub fn predict_all<T: Scalar>(model: &JointModel<T>, instances: &[Instance]) -> Result<Vec<ModelOutput<T>>> {
    instances.par_iter().map(|i| model.forward(i)).collect()
}

/// One line of the prediction dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub predicted_label: usize,
    pub p_c: Vec<f64>,
    pub sentence_probs: Vec<f64>,
    pub explanation: Vec<u8>,
}

impl PredictionRecord {
    pub fn new<T: Scalar>(instance: &Instance, output: &ModelOutput<T>, policy: DecodePolicy) -> Self {
        Self {
            id: instance.id.clone(),
            predicted_label: output.predicted_class,
            p_c: output.conditioned.iter().map(|x| x.f64()).collect(),
            sentence_probs: output.sentence_probs.iter().map(|x| x.f64()).collect(),
            explanation: decode_explanation(&output.sentence_probs, policy).into_iter().map(u8::from).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalOptions {
    pub policy: DecodePolicy,
    pub k: usize,
    pub repeats: usize,
    pub seed: u64,
    pub properties: bool,
    pub query_only: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { policy: DecodePolicy::Threshold, k: 2, repeats: 5, seed: 0, properties: false, query_only: false }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub instances: usize,
    pub target: TargetMetrics,
    pub explanation: ExplanationMetrics,
    pub joint_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub faithfulness: Option<Faithfulness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_consistency: Option<DataConsistency>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confidence: Option<MeanStd>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub query_only: Option<QueryOnly>,
}

/// Runs the metric suite. Property blocks need `options.properties`; the
/// confidence block additionally needs a head.
pub fn evaluate<T: Scalar>(
    model: &JointModel<T>,
    instances: &[Instance],
    options: &EvalOptions,
    confidence_head: Option<&ConfidenceHead<T>>,
) -> Result<EvalReport> {
    let outputs = predict_all(model, instances)?;
    let pred: Vec<usize> = outputs.iter().map(|o| o.predicted_class).collect();
    let gold: Vec<usize> = instances.iter().map(|i| i.label).collect();
    let expls: Vec<Vec<bool>> = outputs.iter().map(|o| decode_explanation(&o.sentence_probs, options.policy)).collect();
    let gold_sets: Vec<Vec<Vec<bool>>> = instances.iter().map(|i| i.rationales.clone()).collect();

    let mut report = EvalReport {
        instances: instances.len(),
        target: if instances.is_empty() {
            TargetMetrics::default()
        } else {
            target_metrics(&pred, &gold, model.num_classes())?
        },
        explanation: explanation_metrics(&expls, &gold_sets)?,
        joint_accuracy: joint_accuracy(&pred, &expls, &gold, &gold_sets),
        ..EvalReport::default()
    };
    if options.properties {
        report.faithfulness =
            Some(sufficiency_completeness_with(instances, &pred, &expls, |i| Ok(model.forward(i)?.predicted_class))?);
        report.data_consistency =
            Some(data_consistency_metric(model, instances, options.k, options.repeats, options.seed)?);
        if let Some(head) = confidence_head {
            let diffs: Vec<f64> =
                outputs.iter().map(|o| (o.confidence() - head.predict(&o.sentence_probs)).abs().f64()).collect();
            report.confidence = Some(MeanStd::of(&diffs));
        }
    }
    if options.query_only {
        report.query_only = Some(query_only_eval(model, instances, options.seed)?);
    }
    Ok(report)
}

impl EvalReport {
    /// Markdown tables; percentages with one decimal.
    pub fn to_markdown(&self, title: &str) -> String {
        let pct = |x: f64| format!("{:.1}", 100.0 * x);
        let mut s = String::new();
        let _ = writeln!(s, "## {title}\n");
        let _ = writeln!(s, "| F1-C | Acc-C | P-E | R-E | F1-E | Acc-Joint |");
        let _ = writeln!(s, "|---|---|---|---|---|---|");
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} |",
            pct(self.target.macro_f1),
            pct(self.target.accuracy),
            pct(self.explanation.precision),
            pct(self.explanation.recall),
            pct(self.explanation.macro_f1),
            pct(self.joint_accuracy)
        );
        if let Some(f) = &self.faithfulness {
            let _ = writeln!(s, "\n### Faithfulness\n\n| Suff. | Compl. |\n|---|---|");
            let _ = writeln!(s, "| {:.1} | {:.1} |", f.sufficiency, f.completeness);
        }
        if let Some(d) = &self.data_consistency {
            let _ = writeln!(s, "\n### Data consistency\n\n| Pred. | Expl. |\n|---|---|");
            let _ = writeln!(
                s,
                "| {:.4} ({:.4}) | {:.4} ({:.4}) |",
                d.pred_diff.mean, d.pred_diff.std, d.expl_diff.mean, d.expl_diff.std
            );
        }
        if let Some(c) = &self.confidence {
            let _ = writeln!(s, "\n### Confidence indication\n\n| Diff. |\n|---|");
            let _ = writeln!(s, "| {:.4} ({:.4}) |", c.mean, c.std);
        }
        if let Some(q) = &self.query_only {
            let _ = writeln!(s, "\n### Query only\n\n| Model | Acc-C | F1-C |\n|---|---|---|");
            let _ = writeln!(s, "| query only | {} | {} |", pct(q.accuracy), pct(q.macro_f1));
            let _ = writeln!(s, "| random | {} | {} |", pct(q.random_accuracy), pct(q.random_macro_f1));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-4
    }

    #[test]
    fn target_metric_examples() {
        let m = target_metrics(&[0, 1, 1, 0], &[0, 1, 1, 0], 2).unwrap();
        assert_eq!((m.accuracy, m.macro_f1), (1.0, 1.0));

        let m = target_metrics(&[0, 1, 1, 1], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(m.accuracy, 0.75);
        assert!(close(m.macro_f1, 0.7333));

        let m = target_metrics(&[1, 1, 1, 1], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert!(close(m.macro_f1, 0.3333));

        assert!(target_metrics(&[2], &[0], 2).is_err());
        assert!(target_metrics(&[], &[], 2).is_err());
    }

    #[test]
    fn explanation_picks_best_gold() {
        let golds = vec![vec![vec![true, false], vec![false, true]]];
        let m = explanation_metrics(&[vec![false, true]], &golds).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_), (1, 0, 0));
        let m = explanation_metrics(&[vec![false, false]], &[vec![vec![true, false]]]).unwrap();
        assert_eq!(m.recall, 0.0);
        let m = explanation_metrics(&[vec![true]], &[vec![]]).unwrap();
        assert_eq!(m.tp + m.fp + m.fn_ + m.tn, 0);
    }

    #[test]
    fn joint_accuracy_rules() {
        let golds = vec![vec![vec![true, false, false]]];
        assert_eq!(joint_accuracy(&[1], &[vec![true, true, false]], &[1], &golds), 0.0);
        let three = vec![vec![vec![true, false, false], vec![false, true, false], vec![false, false, true]]];
        assert_eq!(joint_accuracy(&[1], &[vec![false, true, false]], &[1], &three), 1.0);
        assert_eq!(joint_accuracy(&[0], &[vec![true, false, false]], &[1], &golds), 0.0);
    }

    #[test]
    fn counting_sufficiency() {
        let mk = |id: &str| Instance {
            id: id.into(),
            query: vec!["q".into()],
            answer: None,
            sentences: vec![vec!["a".into()], vec!["b".into()]],
            label: 0,
            rationales: vec![vec![true, false]],
        };
        let insts = vec![mk("x"), mk("y"), mk("z")];
        let expl = vec![vec![true, false]; 3];
        // input-invariant predictor preserves everything
        let f = sufficiency_completeness_with(&insts, &[1, 1, 1], &expl, |_| Ok(1)).unwrap();
        assert_eq!((f.sufficiency, f.completeness), (100.0, 100.0));
        // predictor that flips only for instance z
        let f = sufficiency_completeness_with(&insts, &[1, 1, 1], &expl, |i| Ok(usize::from(i.id != "z"))).unwrap();
        assert!((f.sufficiency - 200.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn mean_std_population() {
        let m = MeanStd::of(&[0.1, 0.3]);
        assert!((m.mean - 0.2).abs() < 1e-15 && (m.std - 0.1).abs() < 1e-15);
        assert_eq!(MeanStd::of(&[0.0, 0.0]), MeanStd { mean: 0.0, std: 0.0 });
    }

    #[test]
    fn consistency_diffs_hand_arithmetic() {
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let a = ModelOutput {
            prior: vec![0.5, 0.5],
            sentence_scores: Matrix::from_rows(&[vec![0.0, logit(0.9)], vec![0.0, logit(0.2)]]),
            conditioned: vec![0.3, 0.7],
            predicted_class: 1,
            sentence_probs: vec![0.9, 0.2],
        };
        let b = ModelOutput {
            sentence_scores: Matrix::from_rows(&[vec![0.0, logit(0.6)], vec![0.0, logit(0.5)]]),
            conditioned: vec![0.45, 0.55],
            predicted_class: 1,
            ..a.clone()
        };
        let (p, e) = consistency_diffs(&a, &b);
        assert!((p - 0.15).abs() < 1e-12);
        assert!((e - 0.6).abs() < 1e-12);
    }

    #[test]
    fn markdown_has_table_columns() {
        let md = EvalReport::default().to_markdown("test");
        for col in ["F1-C", "Acc-C", "P-E", "R-E", "F1-E", "Acc-Joint"] {
            assert!(md.contains(col));
        }
    }
}
