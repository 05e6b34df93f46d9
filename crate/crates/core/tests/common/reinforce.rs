use diagprop::autodiff::Tape;
use diagprop::model::JointModel;
use diagprop::objectives::{faithfulness_reward, faithfulness_surrogate, reward_bounds, score_mask, RewardBaseline};
use diagprop::rng::rng_for;
use diagprop::scalar::sigmoid;
use diagprop::tensor::Matrix;
use diagprop::{Instance, ModelOutput};
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, TestRunner};
use rand::Rng;

pub const LAMBDA: f64 = 0.5;

pub fn masks(s: usize) -> impl Iterator<Item = Vec<bool>> {
    (0..1usize << s).map(move |bits| (0..s).map(|j| bits >> j & 1 == 1).collect())
}

pub fn mask_prob(probs: &[f64], mask: &[bool]) -> f64 {
    probs.iter().zip(mask).map(|(&p, &m)| if m { p } else { 1.0 - p }).product()
}

/// Rewards of all 2^S masks under the frozen model, indexed by bit pattern.
pub fn reward_table(model: &JointModel<f64>, inst: &Instance, out: &ModelOutput<f64>) -> Vec<f64> {
    masks(inst.num_sentences()).map(|m| score_mask(model, inst, out, m, LAMBDA).unwrap().reward).collect()
}

pub fn bits(mask: &[bool]) -> usize {
    mask.iter().enumerate().map(|(j, &b)| usize::from(b) << j).sum()
}

/// Exact gradient of E[R] with respect to the logits of the sentence
/// probabilities, by enumeration.
pub fn exact_gradient(logits: &[f64], rewards: &[f64]) -> Vec<f64> {
    let probs: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
    let mut g = vec![0.0; logits.len()];
    for m in masks(logits.len()) {
        let w = rewards[bits(&m)] * mask_prob(&probs, &m);
        for j in 0..logits.len() {
            g[j] += w * (f64::from(u8::from(m[j])) - probs[j]);
        }
    }
    g
}

/// Per-sample REINFORCE estimates obtained by differentiating the tape
/// surrogate with respect to the logits.
fn reinforce_samples(logits: &[f64], rewards: &[f64], n: usize, baseline: bool) -> Vec<Vec<f64>> {
    let s = logits.len();
    let probs: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
    let mut rng = rng_for(99, &[u64::from(baseline)]);
    let mut b = RewardBaseline::new(0.9, baseline);
    (0..n)
        .map(|_| {
            let mask: Vec<bool> = probs.iter().map(|&p| rng.gen::<f64>() < p).collect();
            let r = rewards[bits(&mask)];
            let mut tape = Tape::new();
            let z = tape.param(0, Matrix::from_vec(s, 1, logits.to_vec()));
            let p = tape.sigmoid(z);
            let loss = faithfulness_surrogate(&mut tape, p, &mask, r - b.current());
            b.update(r);
            let grads = tape.backward(loss).grads;
            grads[0].1.data().iter().map(|g| -g).collect()
        })
        .collect()
}

/// Compares the Monte-Carlo REINFORCE gradient over 50k samples with the
/// exact enumeration gradient; returns the relative error.
pub fn check_unbiased(baseline: bool) -> Result<f64, String> {
    // Under this initialisation both prediction flips occur across masks.
    let (model, inst) = super::toy_model::<f64>(34);
    let out = model.forward(&inst).unwrap();
    let logits: Vec<f64> = out.sentence_scores.column(out.predicted_class);
    let rewards = reward_table(&model, &inst, &out);
    let exact = exact_gradient(&logits, &rewards);

    let n = 50_000;
    let samples = reinforce_samples(&logits, &rewards, n, baseline);
    let s = logits.len();
    let mean: Vec<f64> = (0..s).map(|j| samples.iter().map(|g| g[j]).sum::<f64>() / n as f64).collect();
    let se: Vec<f64> = (0..s)
        .map(|j| {
            let var = samples.iter().map(|g| (g[j] - mean[j]).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        })
        .collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = mean.iter().zip(&exact).map(|(a, b)| a - b).collect();
    let rel = norm(&diff) / norm(&exact);
    if rel > 0.05 {
        return Err(format!("relative error {rel:.4} (exact {exact:?}, mc {mean:?})"));
    }
    for j in 0..s {
        if diff[j].abs() > 3.0 * se[j] {
            return Err(format!("coordinate {j}: |{:e}| exceeds 3 standard errors ({:e})", diff[j], se[j]));
        }
    }
    Ok(rel)
}

/// Draws 10,000 random (labels, mask, λ) triples and counts rewards outside
/// the documented bounds.
pub fn reward_bound_violations() -> usize {
    let mut runner = TestRunner::new(Config { cases: 10_000, failure_persistence: None, ..Config::default() });
    let strategy =
        (2usize..6, (0usize..64, 0usize..64, 0usize..64), prop::collection::vec(any::<bool>(), 1..12), 0.001f64..0.999);
    let mut violations = 0;
    for _ in 0..10_000 {
        let (n, raw, mask, lambda) = strategy.new_tree(&mut runner).expect("strategy").current();
        let r = faithfulness_reward(raw.0 % n, raw.1 % n, raw.2 % n, &mask, lambda);
        let (lo, hi) = reward_bounds(lambda);
        if !(lo..=hi).contains(&r) {
            violations += 1;
        }
    }
    violations
}
