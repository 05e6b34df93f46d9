//! Training losses: target and explanation cross-entropy, the REINFORCE
//! surrogate for the faithfulness reward, the data-consistency L1 term and
//! the confidence-indication L1 term. Active terms are summed without
//! weights.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var, LOG_EPS};
use crate::corpus::{mask_random_words, mask_sentences, Instance};
use crate::error::{Error, Result};
use crate::model::{ForwardVars, JointModel, ModelOutput};
use crate::scalar::{sigmoid, Scalar};
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveConfig {
    pub supervised_explanations: bool,
    pub faithfulness: bool,
    pub data_consistency: bool,
    pub confidence_indication: bool,
    /// Target fraction of selected sentences in the faithfulness reward.
    pub lambda: f64,
    /// Words masked for the data-consistency term.
    pub k: usize,
    /// Subtract an exponential moving average of the reward.
    pub reward_baseline: bool,
    pub baseline_momentum: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Preset::Sup.config()
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::Config(format!("lambda must lie in (0, 1), got {}", self.lambda)));
        }
        if !(0.0..1.0).contains(&self.baseline_momentum) {
            return Err(Error::Config("baseline_momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Named objective combinations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Preset {
    Sup,
    SupF,
    SupDc,
    SupCi,
    SupAll,
    Unsup,
    UnsupF,
    UnsupDc,
    UnsupCi,
    UnsupAll,
}

impl Preset {
    pub const ALL: [Preset; 10] = [
        Preset::Sup,
        Preset::SupF,
        Preset::SupDc,
        Preset::SupCi,
        Preset::SupAll,
        Preset::Unsup,
        Preset::UnsupF,
        Preset::UnsupDc,
        Preset::UnsupCi,
        Preset::UnsupAll,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Sup => "sup",
            Preset::SupF => "sup+f",
            Preset::SupDc => "sup+dc",
            Preset::SupCi => "sup+ci",
            Preset::SupAll => "sup+all",
            Preset::Unsup => "unsup",
            Preset::UnsupF => "unsup+f",
            Preset::UnsupDc => "unsup+dc",
            Preset::UnsupCi => "unsup+ci",
            Preset::UnsupAll => "unsup+all",
        }
    }

    pub fn config(self) -> ObjectiveConfig {
        let supervised = matches!(self, Preset::Sup | Preset::SupF | Preset::SupDc | Preset::SupCi | Preset::SupAll);
        let all = matches!(self, Preset::SupAll | Preset::UnsupAll);
        ObjectiveConfig {
            supervised_explanations: supervised,
            faithfulness: all || matches!(self, Preset::SupF | Preset::UnsupF),
            data_consistency: all || matches!(self, Preset::SupDc | Preset::UnsupDc),
            confidence_indication: all || matches!(self, Preset::SupCi | Preset::UnsupCi),
            lambda: 0.5,
            k: 2,
            reward_baseline: true,
            baseline_momentum: 0.9,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown objective preset {s:?}")))
    }
}

/// `−ln p_C[y]`, floored at `LOG_EPS`.
pub fn target_loss<T: Scalar>(p_c: &[T], y: usize) -> T {
    -p_c[y].max(T::of(LOG_EPS)).ln()
}

/// Mean binary cross-entropy between sentence probabilities and gold flags.
pub fn explanation_loss<T: Scalar>(probs: &[T], gold: &[bool]) -> T {
    assert_eq!(probs.len(), gold.len(), "explanation length mismatch");
    let eps = T::of(LOG_EPS);
    let total: T =
        probs.iter().zip(gold).map(|(&p, &e)| if e { -p.max(eps).ln() } else { -(T::one() - p).max(eps).ln() }).sum();
    total / T::of(probs.len() as f64)
}

/// `1[l_s = c] − 1[l_co = c] − |mean(mask) − λ|`.
pub fn faithfulness_reward(l_s: usize, l_co: usize, c: usize, mask: &[bool], lambda: f64) -> f64 {
    let frac = mask.iter().filter(|&&b| b).count() as f64 / mask.len() as f64;
    f64::from(u8::from(l_s == c)) - f64::from(u8::from(l_co == c)) - (frac - lambda).abs()
}

/// Bounds every faithfulness reward lies in.
pub fn reward_bounds(lambda: f64) -> (f64, f64) {
    (-1.0 - lambda.max(1.0 - lambda), 1.0)
}

/// `Σ_j log Bern(mask_j; p_j)`.
pub fn bernoulli_log_prob<T: Scalar>(probs: &[T], mask: &[bool]) -> T {
    let eps = T::of(LOG_EPS);
    probs.iter().zip(mask).map(|(&p, &m)| if m { p.max(eps).ln() } else { (T::one() - p).max(eps).ln() }).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FaithfulnessSample<T> {
    /// Sentences kept in the sufficiency pass.
    pub mask: Vec<bool>,
    pub log_prob: T,
    pub reward: f64,
    pub sufficiency_class: usize,
    pub complement_class: usize,
}

/// Draws a keep-mask from `Bern(sentence_probs)` and scores it by
/// re-predicting on the kept and on the dropped sentences. The auxiliary
/// passes are inference-only.
pub fn faithfulness_sample<T: Scalar, R: Rng + ?Sized>(
    model: &JointModel<T>,
    instance: &Instance,
    output: &ModelOutput<T>,
    lambda: f64,
    rng: &mut R,
) -> Result<FaithfulnessSample<T>> {
    let mask: Vec<bool> = output.sentence_probs.iter().map(|&p| rng.gen::<f64>() < p.f64()).collect();
    score_mask(model, instance, output, mask, lambda)
}

/// Reward and log-probability of a given keep-mask.
pub fn score_mask<T: Scalar>(
    model: &JointModel<T>,
    instance: &Instance,
    output: &ModelOutput<T>,
    mask: Vec<bool>,
    lambda: f64,
) -> Result<FaithfulnessSample<T>> {
    let complement: Vec<bool> = mask.iter().map(|&b| !b).collect();
    let l_s = model.forward(&mask_sentences(instance, &mask)?)?.predicted_class;
    let l_co = model.forward(&mask_sentences(instance, &complement)?)?.predicted_class;
    let reward = faithfulness_reward(l_s, l_co, output.predicted_class, &mask, lambda);
    let log_prob = bernoulli_log_prob(&output.sentence_probs, &mask);
    Ok(FaithfulnessSample { mask, log_prob, reward, sufficiency_class: l_s, complement_class: l_co })
}

/// Value of the REINFORCE surrogate `mean −(R − b)·log_prob`.
pub fn faithfulness_loss<T: Scalar>(samples: &[FaithfulnessSample<T>], baseline: f64) -> T {
    if samples.is_empty() {
        return T::zero();
    }
    let total: T = samples.iter().map(|s| -T::of(s.reward - baseline) * s.log_prob).sum();
    total / T::of(samples.len() as f64)
}

/// Surrogate on the tape for one sample: `−(R − b)·Σ log Bern(mask; probs)`,
/// where `probs` is an S×1 node of sentence probabilities.
pub fn faithfulness_surrogate<T: Scalar>(tape: &mut Tape<T>, probs: Var, mask: &[bool], advantage: f64) -> Var {
    let targets: Vec<T> = mask.iter().map(|&b| if b { T::one() } else { T::zero() }).collect();
    let bce = tape.bce(probs, &targets);
    tape.scale(bce, T::of(advantage * mask.len() as f64))
}

/// Exponential moving average of rewards.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardBaseline {
    pub value: f64,
    pub momentum: f64,
    pub enabled: bool,
}

impl RewardBaseline {
    pub fn new(momentum: f64, enabled: bool) -> Self {
        Self { value: 0.0, momentum, enabled }
    }

    pub fn current(&self) -> f64 {
        if self.enabled {
            self.value
        } else {
            0.0
        }
    }

    pub fn update(&mut self, reward: f64) {
        self.value = self.momentum * self.value + (1.0 - self.momentum) * reward;
    }
}

/// Mean of `|σ(a) − σ(b)|` over all entries.
pub fn data_consistency_value<T: Scalar>(scores: &Matrix<T>, masked_scores: &Matrix<T>) -> T {
    assert_eq!(scores.shape(), masked_scores.shape(), "score shapes differ");
    let total: T = scores.data().iter().zip(masked_scores.data()).map(|(&a, &b)| (sigmoid(a) - sigmoid(b)).abs()).sum();
    total / T::of(scores.len() as f64)
}

/// Data-consistency term on the tape: runs a second forward pass on a copy
/// with `k` masked words; gradients flow through both passes.
pub fn data_consistency_graph<T: Scalar, R: Rng + ?Sized>(
    model: &JointModel<T>,
    tape: &mut Tape<T>,
    instance: &Instance,
    scores: Var,
    k: usize,
    rng: &mut R,
) -> Result<Var> {
    let masked = mask_random_words(instance, k, rng);
    let mvars = model.forward_graph(tape, &masked)?;
    Ok(data_consistency_between(tape, scores, mvars.scores))
}

pub fn data_consistency_between<T: Scalar>(tape: &mut Tape<T>, scores: Var, masked_scores: Var) -> Var {
    let a = tape.sigmoid(scores);
    let b = tape.sigmoid(masked_scores);
    let d = tape.sub(a, b);
    let d = tape.abs(d);
    tape.mean(d)
}

/// Confidence-indication term on the tape: `|p^C[c] − ĉ|` with `ĉ` the
/// confidence head applied to the statistics of `σ(p^E[:, c])`.
pub fn confidence_indication_graph<T: Scalar>(
    model: &JointModel<T>,
    tape: &mut Tape<T>,
    vars: ForwardVars,
    class: usize,
) -> Var {
    let col = tape.slice_cols(vars.scores, class, 1);
    let probs = tape.sigmoid(col);
    let estimate = model.confidence_graph(tape, probs);
    let confidence = tape.entry(vars.conditioned, 0, class);
    let d = tape.sub(confidence, estimate);
    tape.abs(d)
}

/// Per-instance loss terms recorded on one tape.
#[derive(Clone, Debug)]
pub struct LossTerms<T> {
    pub target: Var,
    pub explanation: Option<Var>,
    pub faithfulness: Option<(Var, FaithfulnessSample<T>)>,
    pub data_consistency: Option<Var>,
    pub confidence: Option<Var>,
    pub total: Var,
}

/// Named values of the active terms, in a fixed order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossValues {
    pub target: f64,
    pub explanation: Option<f64>,
    pub faithfulness: Option<f64>,
    pub data_consistency: Option<f64>,
    pub confidence: Option<f64>,
}

impl LossValues {
    pub fn total(&self) -> f64 {
        let mut t = self.target;
        for v in [self.explanation, self.faithfulness, self.data_consistency, self.confidence].into_iter().flatten() {
            t += v;
        }
        t
    }
}

impl<T: Scalar> LossTerms<T> {
    pub fn values(&self, tape: &Tape<T>) -> LossValues {
        let v = |x: Var| tape.scalar(x).f64();
        LossValues {
            target: v(self.target),
            explanation: self.explanation.map(v),
            faithfulness: self.faithfulness.as_ref().map(|(x, _)| v(*x)),
            data_consistency: self.data_consistency.map(v),
            confidence: self.confidence.map(v),
        }
    }
}

/// Plain sum of the active terms.
pub fn total_loss<T: Scalar>(tape: &mut Tape<T>, parts: &[Var]) -> Var {
    assert!(!parts.is_empty(), "at least one loss term must be active");
    parts[1..].iter().fold(parts[0], |acc, &p| tape.add(acc, p))
}

/// Records every active loss term for one training instance.
///
/// The explanation cross-entropy is taken on the gold-class column; the
/// faithfulness and confidence terms use the predicted class.
pub fn instance_losses<T: Scalar, R: Rng + ?Sized>(
    model: &JointModel<T>,
    tape: &mut Tape<T>,
    instance: &Instance,
    config: &ObjectiveConfig,
    baseline: f64,
    rng: &mut R,
) -> Result<LossTerms<T>> {
    let vars = model.forward_graph(tape, instance)?;
    let output = model.output(tape, vars);
    let p = tape.entry(vars.conditioned, 0, instance.label);
    let target = tape.neg_log(p);
    let mut parts = vec![target];

    let explanation = match (config.supervised_explanations, instance.primary_rationale()) {
        (true, Some(gold)) => {
            let col = tape.slice_cols(vars.scores, instance.label, 1);
            let probs = tape.sigmoid(col);
            let targets: Vec<T> = gold.iter().map(|&b| if b { T::one() } else { T::zero() }).collect();
            let l = tape.bce(probs, &targets);
            parts.push(l);
            Some(l)
        }
        _ => None,
    };

    let faithfulness = if config.faithfulness {
        let sample = faithfulness_sample(model, instance, &output, config.lambda, rng)?;
        let col = tape.slice_cols(vars.scores, output.predicted_class, 1);
        let probs = tape.sigmoid(col);
        let l = faithfulness_surrogate(tape, probs, &sample.mask, sample.reward - baseline);
        parts.push(l);
        Some((l, sample))
    } else {
        None
    };

    let data_consistency = if config.data_consistency {
        let l = data_consistency_graph(model, tape, instance, vars.scores, config.k, rng)?;
        parts.push(l);
        Some(l)
    } else {
        None
    };

    let confidence = if config.confidence_indication {
        let l = confidence_indication_graph(model, tape, vars, output.predicted_class);
        parts.push(l);
        Some(l)
    } else {
        None
    };

    let total = total_loss(tape, &parts);
    Ok(LossTerms { target, explanation, faithfulness, data_consistency, confidence, total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::summary_stats;

    #[test]
    fn target_loss_values() {
        assert_eq!(target_loss(&[0.0, 1.0], 1), 0.0);
        assert!((target_loss(&[0.5, 0.5], 0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((target_loss(&[0.25f64, 0.75], 1) - 0.287_682_072_451_780_9).abs() < 1e-12);
        assert!(target_loss(&[1.0f64, 0.0], 1).is_finite());
    }

    #[test]
    fn explanation_loss_values() {
        assert!(explanation_loss(&[1.0f64, 0.0], &[true, false]).abs() < 1e-9);
        assert!((explanation_loss(&[0.5, 0.5, 0.5], &[true, false, true]) - std::f64::consts::LN_2).abs() < 1e-15);
        let expected = (-(0.9f64.ln()) - 0.8f64.ln()) / 2.0;
        assert!((explanation_loss(&[0.9, 0.2], &[true, false]) - expected).abs() < 1e-15);
        assert!((expected - 0.1643).abs() < 1e-4);
    }

    #[test]
    fn reward_extremes() {
        assert_eq!(faithfulness_reward(1, 0, 1, &[true, false], 0.5), 1.0);
        assert_eq!(faithfulness_reward(0, 1, 1, &[true, true], 0.5), -1.5);
        assert_eq!(faithfulness_reward(1, 0, 1, &[true, true], 1.0), 1.0);
    }

    #[test]
    fn centered_rewards_give_zero_loss() {
        let s = FaithfulnessSample {
            mask: vec![true],
            log_prob: -0.7,
            reward: 0.3,
            sufficiency_class: 0,
            complement_class: 0,
        };
        assert_eq!(faithfulness_loss(&[s.clone(), s], 0.3), 0.0);
    }

    #[test]
    fn positive_advantage_raises_sample_probability() {
        let mut tape: Tape<f64> = Tape::new();
        let z = tape.param(0, Matrix::from_vec(2, 1, vec![0.2, -0.4]));
        let probs = tape.sigmoid(z);
        let mask = [true, false];
        let loss = faithfulness_surrogate(&mut tape, probs, &mask, 0.8);
        let g = tape.backward(loss);
        let grad = &g.grads[0].1;
        // descending the loss moves logits toward the sampled mask
        assert!(grad.get(0, 0) < 0.0);
        assert!(grad.get(1, 0) > 0.0);
        let expected = -0.8 * bernoulli_log_prob(&[sigmoid(0.2), sigmoid(-0.4)], &mask);
        assert!((tape.scalar(loss) - expected).abs() < 1e-12);
    }

    #[test]
    fn data_consistency_arithmetic() {
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let a = Matrix::from_vec(2, 1, vec![logit(0.2), logit(0.8)]);
        let b = Matrix::from_vec(2, 1, vec![logit(0.4), logit(0.6)]);
        assert!((data_consistency_value(&a, &b) - 0.2).abs() < 1e-12);
        assert_eq!(data_consistency_value(&a, &a), 0.0);
    }

    #[test]
    fn confidence_stats() {
        assert_eq!(summary_stats(&[0.5, 0.5, 0.5]), [0.5, 0.5, 0.5, 0.0]);
        let s = summary_stats(&[0.1f64, 0.5, 0.9]);
        assert!((s[0] - 0.9).abs() < 1e-15 && (s[1] - 0.1).abs() < 1e-15 && (s[2] - 0.5).abs() < 1e-15);
        assert!((s[3] - (0.32f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((s[3] - 0.3266).abs() < 1e-4);
        assert_eq!(summary_stats(&[0.7])[3], 0.0);
    }

    #[test]
    fn presets_parse_and_toggle_terms() {
        assert_eq!("sup".parse::<Preset>().unwrap().config().faithfulness, false);
        let all = "sup+all".parse::<Preset>().unwrap().config();
        assert!(all.supervised_explanations && all.faithfulness && all.data_consistency && all.confidence_indication);
        let unsup_f = "unsup+F".parse::<Preset>().unwrap().config();
        assert!(!unsup_f.supervised_explanations && unsup_f.faithfulness);
        assert!("sup+xyz".parse::<Preset>().is_err());
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
    }

    #[test]
    fn total_of_zero_terms_is_zero() {
        let mut tape: Tape<f64> = Tape::new();
        let a = tape.constant(Matrix::filled(1, 1, 0.0));
        let b = tape.constant(Matrix::filled(1, 1, 0.0));
        let t = total_loss(&mut tape, &[a, b]);
        assert_eq!(tape.scalar(t), 0.0);
        let v = LossValues { target: 0.4, explanation: Some(0.1), ..LossValues::default() };
        assert_eq!(v.total(), 0.4 + 0.1);
    }

    #[test]
    fn lambda_is_validated() {
        let mut c = ObjectiveConfig::default();
        c.lambda = 1.0;
        assert!(c.validate().is_err());
        c.lambda = 0.3;
        assert!(c.validate().is_ok());
    }
}
