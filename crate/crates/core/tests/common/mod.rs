#![allow(dead_code)]

pub mod gradcheck;
pub mod oracles;
pub mod reinforce;

use diagprop::encoder::EncoderConfig;
use diagprop::{Instance, JointModel, ModelConfig, Scalar, Vocab};

pub fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_owned).collect()
}

/// Three sentences, gold label 1, rationale on the middle sentence.
pub fn toy_instance() -> Instance {
    Instance {
        id: "toy".into(),
        query: words("k0 about"),
        answer: None,
        sentences: vec![words("k0 w1 w2"), words("k0 c1 w3 w4"), words("w5 k0")],
        label: 1,
        rationales: vec![vec![false, true, false]],
    }
}

pub fn small_config(hidden: usize) -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            hidden,
            layers: 2,
            heads: 2,
            ff_hidden: 2 * hidden,
            max_len: 24,
            ..EncoderConfig::default()
        },
        num_classes: 2,
    }
}

pub fn toy_model<T: Scalar>(seed: u64) -> (JointModel<T>, Instance) {
    let inst = toy_instance();
    let vocab = Vocab::build([&inst]);
    (JointModel::new(small_config(16), vocab, seed).unwrap(), inst)
}
