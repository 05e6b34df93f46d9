//! The joint explanation-and-prediction model.
//!
//! The query-marker representation goes through the class head to give the
//! prior class distribution `p^{C'}`; every sentence-marker representation
//! goes through the explanation head to give one score per class (`p^E`,
//! S×N). The final prediction `p^C` is the prior reweighted by the mean
//! sentence evidence for each class and renormalised.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var, LOG_EPS};
use crate::corpus::Instance;
use crate::encoder::{layout, Encoder, EncoderConfig, Vocab};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::scalar::{sigmoid, Scalar};
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub num_classes: usize,
}

/// Everything one forward pass produces, as plain values.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelOutput<T> {
    /// `p^{C'}`, softmax of the class head.
    pub prior: Vec<T>,
    /// `p^E`, raw per-sentence per-class scores (S×N).
    pub sentence_scores: Matrix<T>,
    /// `p^C`, the conditioned distribution.
    pub conditioned: Vec<T>,
    pub predicted_class: usize,
    /// `σ(p^E[:, c])` for the predicted class `c`.
    pub sentence_probs: Vec<T>,
}

impl<T: Scalar> ModelOutput<T> {
    pub fn confidence(&self) -> T {
        self.conditioned[self.predicted_class]
    }

    /// `σ(p^E[:, class])`.
    pub fn class_sentence_probs(&self, class: usize) -> Vec<T> {
        self.sentence_scores.column(class).into_iter().map(sigmoid).collect()
    }
}

/// Tape handles of a forward pass, for building losses.
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    pub prior: Var,
    pub scores: Var,
    pub conditioned: Var,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodePolicy {
    /// Every sentence with probability ≥ 0.5, falling back to top-1 when none qualifies.
    Threshold,
    /// The single highest-scoring sentence.
    Top1,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn decode_explanation<T: Scalar>(sentence_probs: &[T], policy: DecodePolicy) -> Vec<bool> {
    let top1 = || {
        let mut v = vec![false; sentence_probs.len()];
        if !v.is_empty() {
            v[argmax(sentence_probs)] = true;
        }
        v
    };
    match policy {
        DecodePolicy::Top1 => top1(),
        DecodePolicy::Threshold => {
            let half = T::of(0.5);
            let sel: Vec<bool> = sentence_probs.iter().map(|&p| p >= half).collect();
            if sel.iter().any(|&b| b) {
                sel
            } else {
                top1()
            }
        }
    }
}

/// Reweights `prior` by the per-class mean of `σ(scores)` and renormalises.
pub fn condition<T: Scalar>(prior: &[T], scores: &Matrix<T>) -> Vec<T> {
    assert_eq!(prior.len(), scores.cols(), "class count mismatch");
    assert!(scores.rows() > 0, "conditioning needs at least one sentence");
    let s = T::of(scores.rows() as f64);
    let u: Vec<T> = (0..prior.len())
        .map(|c| {
            let g = (0..scores.rows()).map(|j| sigmoid(scores.get(j, c))).sum::<T>() / s;
            prior[c] * g
        })
        .collect();
    let total = u.iter().copied().sum::<T>().max(T::of(LOG_EPS));
    u.into_iter().map(|x| x / total).collect()
}

#[derive(Clone, Debug)]
struct HeadIds {
    class_hidden_w: usize,
    class_hidden_b: usize,
    class_out_w: usize,
    class_out_b: usize,
    expl_hidden_w: usize,
    expl_hidden_b: usize,
    expl_out_w: usize,
    expl_out_b: usize,
    conf_w: usize,
    conf_b: usize,
}

/// Encoder, both projection heads and the confidence head, sharing one
/// parameter store.
#[derive(Clone, Debug)]
pub struct JointModel<T> {
    config: ModelConfig,
    vocab: Vocab,
    store: ParamStore<T>,
    encoder: Encoder,
    heads: HeadIds,
}

impl<T: Scalar> JointModel<T> {
    pub fn new(config: ModelConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        if config.num_classes < 1 {
            return Err(Error::Config("num_classes must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        Encoder::init(&config.encoder, vocab.len(), &mut store, &mut rng)?;
        let d = config.encoder.hidden;
        let n = config.num_classes;
        for head in ["class", "expl"] {
            store.insert_uniform(&format!("head.{head}.hidden.w"), d, d, d, &mut rng);
            store.insert(format!("head.{head}.hidden.b"), Matrix::zeros(1, d));
            store.insert_uniform(&format!("head.{head}.out.w"), d, n, d, &mut rng);
            store.insert(format!("head.{head}.out.b"), Matrix::zeros(1, n));
        }
        store.insert_uniform("head.confidence.w", 4, 1, 4, &mut rng);
        store.insert("head.confidence.b", Matrix::zeros(1, 1));
        Self::from_parts(config, vocab, store)
    }

    /// Rebuilds a model around existing parameters (checkpoint loading).
    pub fn from_parts(config: ModelConfig, vocab: Vocab, store: ParamStore<T>) -> Result<Self> {
        let encoder = Encoder::bind(&config.encoder, &store)?;
        if store.get(store.id("encoder.tok_emb").expect("bound")).rows() != vocab.len() {
            return Err(Error::Checkpoint("token embedding rows do not match the vocabulary".into()));
        }
        let d = config.encoder.hidden;
        let n = config.num_classes;
        let get = |name: &str, shape: (usize, usize)| -> Result<usize> {
            let id = store.id(name).ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
            if store.get(id).shape() != shape {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} has shape {:?}, expected {shape:?}",
                    store.get(id).shape()
                )));
            }
            Ok(id)
        };
        let heads = HeadIds {
            class_hidden_w: get("head.class.hidden.w", (d, d))?,
            class_hidden_b: get("head.class.hidden.b", (1, d))?,
            class_out_w: get("head.class.out.w", (d, n))?,
            class_out_b: get("head.class.out.b", (1, n))?,
            expl_hidden_w: get("head.expl.hidden.w", (d, d))?,
            expl_hidden_b: get("head.expl.hidden.b", (1, d))?,
            expl_out_w: get("head.expl.out.w", (d, n))?,
            expl_out_b: get("head.expl.out.b", (1, n))?,
            conf_w: get("head.confidence.w", (4, 1))?,
            conf_b: get("head.confidence.b", (1, 1))?,
        };
        Ok(Self { config, vocab, store, encoder, heads })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn into_parts(self) -> (ModelConfig, Vocab, ParamStore<T>) {
        (self.config, self.vocab, self.store)
    }

    /// Ids of the two confidence-head parameters (weights 4×1, bias 1×1).
    pub fn confidence_param_ids(&self) -> (usize, usize) {
        (self.heads.conf_w, self.heads.conf_b)
    }

    pub fn confidence_head(&self) -> ConfidenceHead<T> {
        ConfidenceHead::from_store(&self.store, self.heads.conf_w, self.heads.conf_b)
    }

    /// Records a full forward pass on `tape`.
    pub fn forward_graph(&self, tape: &mut Tape<T>, instance: &Instance) -> Result<ForwardVars> {
        let input = layout(instance, &self.vocab, &self.config.encoder)?;
        let hidden = self.encoder.encode_input(tape, &self.store, &input).map_err(|e| match e {
            Error::Unencodable { message, .. } => Error::Unencodable { id: instance.id.clone(), message },
            other => other,
        })?;
        let q = tape.gather(hidden, &[input.query_marker_pos]);
        let s = tape.gather(hidden, &input.sentence_marker_pos);
        let h = &self.heads;
        let hc = self.linear(tape, q, h.class_hidden_w, h.class_hidden_b);
        let logits = self.linear(tape, hc, h.class_out_w, h.class_out_b);
        let prior = tape.softmax_rows(logits);
        let he = self.linear(tape, s, h.expl_hidden_w, h.expl_hidden_b);
        let scores = self.linear(tape, he, h.expl_out_w, h.expl_out_b);
        let conditioned = condition_graph(tape, prior, scores);
        Ok(ForwardVars { prior, scores, conditioned })
    }

    fn linear(&self, tape: &mut Tape<T>, x: Var, w: usize, b: usize) -> Var {
        let wv = self.store.leaf(tape, w);
        let bv = self.store.leaf(tape, b);
        let y = tape.matmul(x, wv);
        tape.add_row(y, bv)
    }

    /// Reads plain outputs off a recorded forward pass.
    pub fn output(&self, tape: &Tape<T>, vars: ForwardVars) -> ModelOutput<T> {
        let prior = tape.value(vars.prior).data().to_vec();
        let sentence_scores = tape.value(vars.scores).clone();
        let conditioned = tape.value(vars.conditioned).data().to_vec();
        let predicted_class = argmax(&conditioned);
        let sentence_probs = sentence_scores.column(predicted_class).into_iter().map(sigmoid).collect();
        ModelOutput { prior, sentence_scores, conditioned, predicted_class, sentence_probs }
    }

    /// Inference-mode forward pass.
    pub fn forward(&self, instance: &Instance) -> Result<ModelOutput<T>> {
        let mut tape = Tape::new();
        let vars = self.forward_graph(&mut tape, instance)?;
        Ok(self.output(&tape, vars))
    }

    /// `σ(w · stats + b)` on the tape, from sentence probabilities `probs` (S×1).
    pub fn confidence_graph(&self, tape: &mut Tape<T>, probs: Var) -> Var {
        let stats = tape.stats(probs);
        let z = self.linear(tape, stats, self.heads.conf_w, self.heads.conf_b);
        tape.sigmoid(z)
    }
}

/// `normalize(p^{C'} ⊙ mean_j σ(p^E[j, ·]))` on the tape.
pub fn condition_graph<T: Scalar>(tape: &mut Tape<T>, prior: Var, scores: Var) -> Var {
    let sig = tape.sigmoid(scores);
    let evidence = tape.col_mean(sig);
    let u = tape.mul(prior, evidence);
    tape.normalize_row(u)
}

/// Linear map from the four sentence-probability statistics to a
/// confidence estimate, squashed by a sigmoid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceHead<T> {
    pub weights: [T; 4],
    pub bias: T,
}

impl<T: Scalar> ConfidenceHead<T> {
    fn from_store(store: &ParamStore<T>, w: usize, b: usize) -> Self {
        let wd = store.get(w).data();
        Self { weights: [wd[0], wd[1], wd[2], wd[3]], bias: store.get(b).data()[0] }
    }

    pub fn predict(&self, sentence_probs: &[T]) -> T {
        let stats = crate::autodiff::summary_stats(sentence_probs);
        let z = stats.iter().zip(&self.weights).map(|(&s, &w)| s * w).sum::<T>() + self.bias;
        sigmoid(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, SyntheticSpec, TRAIN};

    #[test]
    fn decode_threshold_and_top1() {
        let p = [0.9, 0.4, 0.6];
        assert_eq!(decode_explanation(&p, DecodePolicy::Threshold), vec![true, false, true]);
        assert_eq!(decode_explanation(&p, DecodePolicy::Top1), vec![true, false, false]);
        assert_eq!(decode_explanation(&[0.3, 0.3], DecodePolicy::Threshold), vec![true, false]);
    }

    #[test]
    fn condition_neutral_evidence_keeps_prior() {
        let prior = [0.3, 0.7];
        let out = condition(&prior, &Matrix::zeros(4, 2));
        assert!((out[0] - 0.3_f64).abs() < 1e-15 && (out[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn condition_arithmetic() {
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let scores = Matrix::from_rows(&[vec![logit(0.8), logit(0.2)]]);
        let out = condition(&[0.5, 0.5], &scores);
        assert!((out[0] - 0.8).abs() < 1e-12 && (out[1] - 0.2).abs() < 1e-12);

        // column means of σ: (0.5, 0.25)
        let scores = Matrix::from_rows(&[vec![logit(0.4), logit(0.1)], vec![logit(0.6), logit(0.4)]]);
        let out = condition(&[0.6, 0.4], &scores);
        assert!((out[0] - 0.75).abs() < 1e-12 && (out[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn condition_can_flip_the_argmax() {
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let scores = Matrix::from_rows(&[vec![logit(0.1), logit(0.9)]]);
        let prior = [0.6, 0.4];
        let out = condition(&prior, &scores);
        assert_eq!(argmax(&prior), 0);
        assert_eq!(argmax(&out), 1);
    }

    fn small_model() -> (JointModel<f64>, Vec<Instance>) {
        let spec = SyntheticSpec {
            sentences_per_instance: 3..=3,
            instances_per_split: [(TRAIN.to_owned(), 4)].into_iter().collect(),
            ..SyntheticSpec::default()
        };
        let ds = generate_synthetic(&spec).unwrap();
        let train = ds.splits[TRAIN].clone();
        let vocab = Vocab::build(&train);
        let config = ModelConfig {
            encoder: EncoderConfig { hidden: 16, heads: 2, ff_hidden: 16, ..EncoderConfig::default() },
            num_classes: 2,
        };
        (JointModel::new(config, vocab, 11).unwrap(), train)
    }

    #[test]
    fn zero_parameters_give_uniform_outputs() {
        let (mut model, data) = small_model();
        model.params_mut().map_values(|_, m| m.data_mut().iter_mut().for_each(|x| *x = 0.0));
        let out = model.forward(&data[0]).unwrap();
        assert_eq!(out.prior, vec![0.5, 0.5]);
        assert!(out.sentence_scores.data().iter().all(|&x| x == 0.0));
        assert_eq!(out.sentence_scores.shape(), (3, 2));
        assert_eq!(out.sentence_probs, vec![0.5; 3]);
        assert_eq!(out.conditioned, vec![0.5, 0.5]);
    }

    #[test]
    fn forward_invariants_and_determinism() {
        let (model, data) = small_model();
        for inst in &data {
            let a = model.forward(inst).unwrap();
            let b = model.forward(inst).unwrap();
            assert_eq!(a, b);
            assert!((a.prior.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!((a.conditioned.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert_eq!(a.predicted_class, argmax(&a.conditioned));
            assert!(a.sentence_probs.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn target_loss_reaches_the_explanation_head() {
        let (model, data) = small_model();
        let mut tape = Tape::new();
        let vars = model.forward_graph(&mut tape, &data[0]).unwrap();
        let p = tape.entry(vars.conditioned, 0, data[0].label);
        let loss = tape.neg_log(p);
        let grads = tape.backward(loss);
        let expl_norm: f64 = grads
            .grads
            .iter()
            .filter(|(id, _)| model.params().name(*id).starts_with("head.expl"))
            .map(|(_, g)| g.sq_norm())
            .sum();
        assert!(expl_norm > 0.0);
    }

    #[test]
    fn swapping_sentences_changes_representations() {
        let (model, data) = small_model();
        let inst = &data[0];
        let mut swapped = inst.clone();
        swapped.sentences.swap(0, 1);
        let a = model.forward(inst).unwrap();
        let b = model.forward(&swapped).unwrap();
        assert_ne!(a.sentence_scores.row(0), b.sentence_scores.row(1));
    }
}
