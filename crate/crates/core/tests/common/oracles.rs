//! Corpus metrics against deliberately naive reimplementations.

use diagprop::corpus::MASK_TOKEN;
use diagprop::evaluator::{explanation_metrics, joint_accuracy, sufficiency_completeness_with, target_metrics};
use diagprop::rng::rng_for;
use diagprop::Instance;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-12;

struct Case {
    num_classes: usize,
    instances: Vec<Instance>,
    pred_labels: Vec<usize>,
    pred_expls: Vec<Vec<bool>>,
}

fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let num_classes = rng.gen_range(2..=4);
    let n = rng.gen_range(1..=20);
    let mut instances = Vec::new();
    let mut pred_labels = Vec::new();
    let mut pred_expls = Vec::new();
    for i in 0..n {
        let s = rng.gen_range(1..=6);
        let sentences =
            (0..s).map(|_| (0..rng.gen_range(1..=4)).map(|_| "x".repeat(rng.gen_range(1..=5))).collect()).collect();
        let rationales = (0..rng.gen_range(1..=3)).map(|_| (0..s).map(|_| rng.gen_bool(0.4)).collect()).collect();
        instances.push(Instance {
            id: format!("r{i}"),
            query: vec!["q".into()],
            answer: None,
            sentences,
            label: rng.gen_range(0..num_classes),
            rationales,
        });
        pred_labels.push(rng.gen_range(0..num_classes));
        pred_expls.push((0..s).map(|_| rng.gen_bool(0.5)).collect());
    }
    Case { num_classes, instances, pred_labels, pred_expls }
}

fn harmonic_f1(tp: f64, fp: f64, fn_: f64) -> f64 {
    if tp == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    }
}

fn naive_target(pred: &[usize], gold: &[usize], n: usize) -> (f64, f64) {
    let pairs: Vec<(usize, usize)> = pred.iter().copied().zip(gold.iter().copied()).collect();
    let acc = pairs.iter().filter(|(p, g)| p == g).count() as f64 / pairs.len() as f64;
    let mut f1 = 0.0;
    for c in 0..n {
        let tp = pairs.iter().filter(|&&(p, g)| p == c && g == c).count() as f64;
        let fp = pairs.iter().filter(|&&(p, g)| p == c && g != c).count() as f64;
        let fn_ = pairs.iter().filter(|&&(p, g)| p != c && g == c).count() as f64;
        f1 += harmonic_f1(tp, fp, fn_);
    }
    (acc, f1 / n as f64)
}

fn naive_explanation(preds: &[Vec<bool>], golds: &[Vec<Vec<bool>>]) -> (f64, f64, f64) {
    let mut flat: Vec<(bool, bool)> = Vec::new();
    for (p, gs) in preds.iter().zip(golds) {
        let mut best = 0;
        let mut best_overlap = None;
        for (k, g) in gs.iter().enumerate() {
            let o = (0..p.len()).filter(|&j| p[j] && g[j]).count();
            if best_overlap.map_or(true, |b| o > b) {
                best = k;
                best_overlap = Some(o);
            }
        }
        flat.extend(p.iter().copied().zip(gs[best].iter().copied()));
    }
    let count = |a: bool, b: bool| flat.iter().filter(|&&x| x == (a, b)).count() as f64;
    let (tp, fp, fn_, tn) = (count(true, true), count(true, false), count(false, true), count(false, false));
    let precision = if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) };
    let recall = if tp + fn_ == 0.0 { 0.0 } else { tp / (tp + fn_) };
    (precision, recall, (harmonic_f1(tp, fp, fn_) + harmonic_f1(tn, fn_, fp)) / 2.0)
}

fn naive_joint(case: &Case) -> f64 {
    let mut hits = 0;
    for i in 0..case.instances.len() {
        let inst = &case.instances[i];
        let label_ok = case.pred_labels[i] == inst.label;
        let expl_ok = inst.rationales.iter().any(|g| g.iter().zip(&case.pred_expls[i]).all(|(a, b)| a == b));
        if label_ok && expl_ok {
            hits += 1;
        }
    }
    hits as f64 / case.instances.len() as f64
}

/// A deterministic toy predictor that depends on which sentences survive.
fn toy_predict(inst: &Instance, n: usize) -> usize {
    let mut h = 0;
    for (j, sent) in inst.sentences.iter().enumerate() {
        for tok in sent {
            if tok != MASK_TOKEN {
                h += tok.len() * (j + 1);
            }
        }
    }
    h % n
}

fn naive_toy_predict(inst: &Instance, keep: &[bool], n: usize) -> usize {
    let mut h = 0;
    for j in 0..inst.sentences.len() {
        if keep[j] {
            h += inst.sentences[j].iter().map(String::len).sum::<usize>() * (j + 1);
        }
    }
    h % n
}

fn naive_faithfulness(case: &Case) -> (f64, f64) {
    let n = case.num_classes;
    let (mut suff, mut compl) = (0, 0);
    for (inst, expl) in case.instances.iter().zip(&case.pred_expls) {
        let all = vec![true; expl.len()];
        let c = naive_toy_predict(inst, &all, n);
        let complement: Vec<bool> = expl.iter().map(|b| !b).collect();
        suff += usize::from(naive_toy_predict(inst, expl, n) == c);
        compl += usize::from(naive_toy_predict(inst, &complement, n) == c);
    }
    let total = case.instances.len() as f64;
    (100.0 * suff as f64 / total, 100.0 * compl as f64 / total)
}

/// Checks every corpus metric on `rounds` random prediction/gold sets.
pub fn check_metrics(rounds: usize) -> Result<(), String> {
    let mut rng = rng_for(2024, &[]);
    for round in 0..rounds {
        let case = random_case(&mut rng);
        let gold: Vec<usize> = case.instances.iter().map(|i| i.label).collect();
        let golds: Vec<Vec<Vec<bool>>> = case.instances.iter().map(|i| i.rationales.clone()).collect();

        let t = target_metrics(&case.pred_labels, &gold, case.num_classes).unwrap();
        let (acc, f1) = naive_target(&case.pred_labels, &gold, case.num_classes);
        if (t.accuracy - acc).abs() > TOL || (t.macro_f1 - f1).abs() > TOL {
            return Err(format!("round {round}: target"));
        }

        let e = explanation_metrics(&case.pred_expls, &golds).unwrap();
        let (p, r, ef1) = naive_explanation(&case.pred_expls, &golds);
        if (e.precision - p).abs() > TOL {
            return Err(format!("round {round}: precision {} vs {p}", e.precision));
        }
        if (e.recall - r).abs() > TOL {
            return Err(format!("round {round}: recall"));
        }
        if (e.macro_f1 - ef1).abs() > TOL {
            return Err(format!("round {round}: explanation F1"));
        }

        let j = joint_accuracy(&case.pred_labels, &case.pred_expls, &gold, &golds);
        if (j - naive_joint(&case)).abs() > TOL {
            return Err(format!("round {round}: joint accuracy"));
        }
        if j > acc + TOL {
            return Err(format!("round {round}: joint accuracy above target accuracy"));
        }

        let n = case.num_classes;
        let full: Vec<usize> = case.instances.iter().map(|i| toy_predict(i, n)).collect();
        let f =
            sufficiency_completeness_with(&case.instances, &full, &case.pred_expls, |i| Ok(toy_predict(i, n))).unwrap();
        let (s, c) = naive_faithfulness(&case);
        if (f.sufficiency - s).abs() > TOL || (f.completeness - c).abs() > TOL {
            return Err(format!("round {round}: faithfulness"));
        }
    }
    Ok(())
}
