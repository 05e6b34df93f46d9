//! Marker layout and the pre-LN transformer encoder.
//!
//! A sequence is laid out as
//! `[QRY] query [SEP] (answer [SEP]) ([SNT] sentence)* [SEP]`; the
//! representation at `[QRY]` feeds the class head and the one at each
//! `[SNT]` feeds the explanation head.

use std::collections::{BTreeSet, HashMap};
use std::ops::Range;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::corpus::{Instance, MASK_TOKEN, QUERY_MARKER, RESERVED_TOKENS, SENTENCE_MARKER, SEP_TOKEN, UNK_TOKEN};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::scalar::Scalar;

/// Token ↔ id mapping; reserved tokens occupy the first ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    /// Reserved tokens followed by every distinct token of `instances`, sorted.
    pub fn build<'a>(instances: impl IntoIterator<Item = &'a Instance>) -> Self {
        let mut words = BTreeSet::new();
        for inst in instances {
            let answer = inst.answer.iter().flatten();
            for tok in inst.query.iter().chain(answer).chain(inst.sentences.iter().flatten()) {
                if !RESERVED_TOKENS.contains(&tok.as_str()) {
                    words.insert(tok.clone());
                }
            }
        }
        let tokens: Vec<String> = RESERVED_TOKENS.iter().map(|s| (*s).to_owned()).chain(words).collect();
        Self::from(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or_else(|| self.index[UNK_TOKEN])
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn mask_id(&self) -> usize {
        self.index[MASK_TOKEN]
    }

    pub fn sep_id(&self) -> usize {
        self.index[SEP_TOKEN]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub size: usize,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_hidden: usize,
    /// Positions per encoder pass (size of the position table).
    pub max_len: usize,
    /// Long inputs are split into overlapping windows when set.
    pub window: Option<WindowConfig>,
    pub ln_eps: f64,
    /// Checkpoint whose encoder weights initialise the model.
    pub pretrained: Option<String>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            layers: 2,
            heads: 2,
            ff_hidden: 128,
            max_len: 64,
            window: None,
            ln_eps: 1e-5,
            pretrained: None,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("encoder: {m}")));
        if self.hidden == 0 || self.layers == 0 || self.heads == 0 || self.ff_hidden == 0 || self.max_len == 0 {
            return bad("sizes must be positive");
        }
        if self.hidden % self.heads != 0 {
            return bad("hidden size must be divisible by the number of heads");
        }
        if let Some(w) = self.window {
            if w.stride == 0 || w.stride >= w.size {
                return bad("window stride must be positive and smaller than the window size");
            }
            if w.size > self.max_len {
                return bad("window size exceeds max_len");
            }
        }
        Ok(())
    }
}

/// Token ids plus marker positions for one instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderInput {
    pub ids: Vec<usize>,
    pub query_marker_pos: usize,
    pub sentence_marker_pos: Vec<usize>,
}

impl EncoderInput {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Query marker first, then one position per sentence.
    pub fn marker_positions(&self) -> Vec<usize> {
        std::iter::once(self.query_marker_pos).chain(self.sentence_marker_pos.iter().copied()).collect()
    }
}

pub fn layout(instance: &Instance, vocab: &Vocab, config: &EncoderConfig) -> Result<EncoderInput> {
    let sep = vocab.sep_id();
    let mut ids = vec![vocab.id(QUERY_MARKER)];
    ids.extend(instance.query.iter().map(|t| vocab.id(t)));
    ids.push(sep);
    let mut structural = 2;
    if let Some(answer) = &instance.answer {
        ids.extend(answer.iter().map(|t| vocab.id(t)));
        ids.push(sep);
        structural += 1;
    }
    let snt = vocab.id(SENTENCE_MARKER);
    let mut sentence_marker_pos = Vec::with_capacity(instance.sentences.len());
    for sent in &instance.sentences {
        sentence_marker_pos.push(ids.len());
        ids.push(snt);
        ids.extend(sent.iter().map(|t| vocab.id(t)));
    }
    ids.push(sep);
    structural += 1 + instance.sentences.len();
    if structural > config.max_len {
        return Err(Error::Unencodable {
            id: instance.id.clone(),
            message: format!("{structural} marker and separator tokens exceed max_len {}", config.max_len),
        });
    }
    Ok(EncoderInput { ids, query_marker_pos: 0, sentence_marker_pos })
}

/// Window spans over `len` positions. Consecutive starts are `stride` apart;
/// a window never ends on a marker, so each marker shares a window with the
/// token that follows it.
pub fn window_spans(len: usize, window: WindowConfig, is_marker: impl Fn(usize) -> bool) -> Vec<Range<usize>> {
    if len <= window.size {
        return vec![0..len];
    }
    let mut spans = Vec::new();
    let mut start = 0;
    loop {
        let mut end = (start + window.size).min(len);
        if end < len && is_marker(end - 1) {
            end -= 1;
        }
        spans.push(start..end);
        if end == len {
            break;
        }
        start += window.stride;
    }
    spans
}

#[derive(Clone, Debug)]
struct LayerIds {
    ln1_g: usize,
    ln1_b: usize,
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    ln2_g: usize,
    ln2_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

/// Parameter handles of the encoder inside a shared [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Encoder {
    config: EncoderConfig,
    tok_emb: usize,
    pos_emb: usize,
    layers: Vec<LayerIds>,
    final_g: usize,
    final_b: usize,
}

fn zeros_row<T: Scalar>(n: usize) -> crate::tensor::Matrix<T> {
    crate::tensor::Matrix::zeros(1, n)
}

fn ones_row<T: Scalar>(n: usize) -> crate::tensor::Matrix<T> {
    crate::tensor::Matrix::filled(1, n, T::one())
}

impl Encoder {
    /// Registers freshly initialised encoder parameters.
    pub fn init<T: Scalar>(
        config: &EncoderConfig,
        vocab_size: usize,
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.hidden;
        let f = config.ff_hidden;
        store.insert_uniform("encoder.tok_emb", vocab_size, d, 3, rng);
        store.insert_uniform("encoder.pos_emb", config.max_len, d, 3 * 4, rng);
        for l in 0..config.layers {
            let p = |s: &str| format!("encoder.layer{l}.{s}");
            store.insert(p("ln1.g"), ones_row(d));
            store.insert(p("ln1.b"), zeros_row(d));
            for w in ["wq", "wk", "wv", "wo"] {
                store.insert_uniform(&p(&format!("attn.{w}")), d, d, d, rng);
                store.insert(p(&format!("attn.b{}", &w[1..])), zeros_row(d));
            }
            store.insert(p("ln2.g"), ones_row(d));
            store.insert(p("ln2.b"), zeros_row(d));
            store.insert_uniform(&p("ff.w1"), d, f, d, rng);
            store.insert(p("ff.b1"), zeros_row(f));
            store.insert_uniform(&p("ff.w2"), f, d, f, rng);
            store.insert(p("ff.b2"), zeros_row(d));
        }
        store.insert("encoder.final_ln.g", ones_row(d));
        store.insert("encoder.final_ln.b", zeros_row(d));
        Self::bind(config, store)
    }

    /// Resolves parameter handles from an existing store.
    pub fn bind<T: Scalar>(config: &EncoderConfig, store: &ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let get = |name: String, rows: usize, cols: usize| -> Result<usize> {
            let id = store.id(&name).ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
            let shape = store.get(id).shape();
            if rows != 0 && shape != (rows, cols) {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} has shape {shape:?}, expected ({rows}, {cols})"
                )));
            }
            Ok(id)
        };
        let d = config.hidden;
        let f = config.ff_hidden;
        let tok_emb = get("encoder.tok_emb".into(), 0, 0)?;
        if store.get(tok_emb).cols() != d {
            return Err(Error::Checkpoint("token embedding width does not match hidden size".into()));
        }
        let pos_emb = get("encoder.pos_emb".into(), config.max_len, d)?;
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let p = |s: &str| format!("encoder.layer{l}.{s}");
            layers.push(LayerIds {
                ln1_g: get(p("ln1.g"), 1, d)?,
                ln1_b: get(p("ln1.b"), 1, d)?,
                wq: get(p("attn.wq"), d, d)?,
                bq: get(p("attn.bq"), 1, d)?,
                wk: get(p("attn.wk"), d, d)?,
                bk: get(p("attn.bk"), 1, d)?,
                wv: get(p("attn.wv"), d, d)?,
                bv: get(p("attn.bv"), 1, d)?,
                wo: get(p("attn.wo"), d, d)?,
                bo: get(p("attn.bo"), 1, d)?,
                ln2_g: get(p("ln2.g"), 1, d)?,
                ln2_b: get(p("ln2.b"), 1, d)?,
                w1: get(p("ff.w1"), d, f)?,
                b1: get(p("ff.b1"), 1, f)?,
                w2: get(p("ff.w2"), f, d)?,
                b2: get(p("ff.b2"), 1, d)?,
            });
        }
        Ok(Self {
            config: config.clone(),
            tok_emb,
            pos_emb,
            layers,
            final_g: get("encoder.final_ln.g".into(), 1, d)?,
            final_b: get("encoder.final_ln.b".into(), 1, d)?,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    /// Contextual representations (`ids.len()` × d) of one window.
    pub fn encode<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, ids: &[usize]) -> Result<Var> {
        let n = ids.len();
        if n > self.config.max_len {
            return Err(Error::Unencodable {
                id: String::new(),
                message: format!("sequence of {n} tokens exceeds max_len {}", self.config.max_len),
            });
        }
        let vocab = store.get(self.tok_emb).rows();
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
            return Err(Error::Unencodable {
                id: String::new(),
                message: format!("token id {bad} outside vocabulary"),
            });
        }
        let eps = T::of(self.config.ln_eps);
        let tok = store.leaf(tape, self.tok_emb);
        let pos = store.leaf(tape, self.pos_emb);
        let te = tape.gather(tok, ids);
        let positions: Vec<usize> = (0..n).collect();
        let pe = tape.gather(pos, &positions);
        let mut x = tape.add(te, pe);
        for layer in &self.layers {
            let g = store.leaf(tape, layer.ln1_g);
            let b = store.leaf(tape, layer.ln1_b);
            let h = tape.layer_norm(x, g, b, eps);
            let a = self.attention(tape, store, layer, h);
            x = tape.add(x, a);
            let g = store.leaf(tape, layer.ln2_g);
            let b = store.leaf(tape, layer.ln2_b);
            let h = tape.layer_norm(x, g, b, eps);
            let f = self.feed_forward(tape, store, layer, h);
            x = tape.add(x, f);
        }
        let g = store.leaf(tape, self.final_g);
        let b = store.leaf(tape, self.final_b);
        Ok(tape.layer_norm(x, g, b, eps))
    }

    /// Encodes a full laid-out input, windowing when it exceeds `max_len`
    /// and windowing is configured. Overlapping positions are averaged.
    pub fn encode_input<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        input: &EncoderInput,
    ) -> Result<Var> {
        match self.config.window {
            Some(w) if input.len() > w.size => self.windowed_encode(tape, store, input, w),
            _ => self.encode(tape, store, &input.ids),
        }
    }

    pub fn windowed_encode<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        input: &EncoderInput,
        window: WindowConfig,
    ) -> Result<Var> {
        let markers: BTreeSet<usize> = input.marker_positions().into_iter().collect();
        let spans = window_spans(input.len(), window, |p| markers.contains(&p));
        if spans.len() == 1 {
            return self.encode(tape, store, &input.ids);
        }
        let mut parts = Vec::with_capacity(spans.len());
        for span in spans {
            let v = self.encode(tape, store, &input.ids[span.clone()])?;
            parts.push((span.start, v));
        }
        Ok(tape.window_merge(&parts, input.len()))
    }

    fn linear<T: Scalar>(tape: &mut Tape<T>, store: &ParamStore<T>, x: Var, w: usize, b: usize) -> Var {
        let wv = store.leaf(tape, w);
        let bv = store.leaf(tape, b);
        let y = tape.matmul(x, wv);
        tape.add_row(y, bv)
    }

    fn attention<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, l: &LayerIds, h: Var) -> Var {
        let q = Self::linear(tape, store, h, l.wq, l.bq);
        let k = Self::linear(tape, store, h, l.wk, l.bk);
        let v = Self::linear(tape, store, h, l.wv, l.bv);
        let dh = self.config.hidden / self.config.heads;
        let scale = T::one() / T::of(dh as f64).sqrt();
        let mut heads = Vec::with_capacity(self.config.heads);
        for i in 0..self.config.heads {
            let qh = tape.slice_cols(q, i * dh, dh);
            let kh = tape.slice_cols(k, i * dh, dh);
            let vh = tape.slice_cols(v, i * dh, dh);
            let s = tape.matmul_t(qh, kh);
            let s = tape.scale(s, scale);
            let a = tape.softmax_rows(s);
            heads.push(tape.matmul(a, vh));
        }
        let cat = if heads.len() == 1 { heads[0] } else { tape.concat_cols(&heads) };
        Self::linear(tape, store, cat, l.wo, l.bo)
    }

    fn feed_forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, l: &LayerIds, h: Var) -> Var {
        let a = Self::linear(tape, store, h, l.w1, l.b1);
        let a = tape.gelu(a);
        Self::linear(tape, store, a, l.w2, l.b2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Matrix;
    use rand::SeedableRng;

    fn inst(query: &[&str], answer: Option<&[&str]>, sentences: &[&[&str]]) -> Instance {
        let s = |xs: &[&str]| xs.iter().map(|x| (*x).to_owned()).collect::<Vec<_>>();
        Instance {
            id: "i".into(),
            query: s(query),
            answer: answer.map(s),
            sentences: sentences.iter().map(|x| s(x)).collect(),
            label: 0,
            rationales: vec![vec![true; sentences.len()]],
        }
    }

    #[test]
    fn layout_two_by_one() {
        let i = inst(&["q1", "q2"], None, &[&["a"], &["b"]]);
        let vocab = Vocab::build([&i]);
        let input = layout(&i, &vocab, &EncoderConfig::default()).unwrap();
        assert_eq!(input.len(), 9);
        assert_eq!(input.marker_positions(), vec![0, 4, 6]);
        assert_eq!(*input.ids.last().unwrap(), vocab.sep_id());
    }

    #[test]
    fn layout_with_answer_has_two_separators_before_sentences() {
        let i = inst(&["q"], Some(&["yes", "no"]), &[&["a", "b"]]);
        let vocab = Vocab::build([&i]);
        let input = layout(&i, &vocab, &EncoderConfig::default()).unwrap();
        let first = input.sentence_marker_pos[0];
        let seps = input.ids[..first].iter().filter(|&&t| t == vocab.sep_id()).count();
        assert_eq!(seps, 2);
        assert_eq!(input.sentence_marker_pos.len(), 1);
    }

    #[test]
    fn layout_rejects_too_many_markers() {
        let sents: Vec<&[&str]> = vec![&["a"]; 10];
        let i = inst(&["q"], None, &sents);
        let vocab = Vocab::build([&i]);
        let config = EncoderConfig { max_len: 8, ..EncoderConfig::default() };
        assert!(matches!(layout(&i, &vocab, &config), Err(Error::Unencodable { .. })));
    }

    #[test]
    fn unknown_tokens_map_to_unk() {
        let i = inst(&["q"], None, &[&["a"]]);
        let vocab = Vocab::build([&i]);
        assert_eq!(vocab.id("zzz"), vocab.id(UNK_TOKEN));
        assert_eq!(vocab.token(vocab.mask_id()), MASK_TOKEN);
    }

    #[test]
    fn spans_cover_and_avoid_trailing_markers() {
        let w = WindowConfig { size: 5, stride: 3 };
        assert_eq!(window_spans(4, w, |_| false), vec![0..4]);
        assert_eq!(window_spans(8, w, |_| false), vec![0..5, 3..8]);
        assert_eq!(window_spans(11, w, |_| false), vec![0..5, 3..8, 6..11]);
        assert_eq!(window_spans(8, w, |p| p == 4), vec![0..4, 3..8]);
    }

    #[test]
    fn encode_shape_and_sensitivity() {
        let config = EncoderConfig { hidden: 16, heads: 2, ff_hidden: 24, max_len: 32, ..EncoderConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store: ParamStore<f64> = ParamStore::new();
        let enc = Encoder::init(&config, 12, &mut store, &mut rng).unwrap();
        let ids = vec![0, 5, 6, 7, 8, 9, 10, 11];
        let mut tape = Tape::new();
        let out = enc.encode(&mut tape, &store, &ids).unwrap();
        let a: Matrix<f64> = tape.value(out).clone();
        assert_eq!(a.shape(), (8, 16));

        let mut ids2 = ids.clone();
        ids2[7] = 5;
        let mut tape = Tape::new();
        let out = enc.encode(&mut tape, &store, &ids2).unwrap();
        let b = tape.value(out);
        assert_ne!(a.row(7), b.row(7));

        let mut tape = Tape::new();
        let too_long = vec![1; 33];
        assert!(enc.encode(&mut tape, &store, &too_long).is_err());
    }
}
