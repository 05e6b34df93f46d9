//! Instances, datasets, JSONL ingestion, the synthetic corpus generator and
//! the input perturbations used by the training objectives and evaluations.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::RangeInclusive;
use std::path::Path;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_for;

pub const MASK_TOKEN: &str = "[MASK]";
pub const UNK_TOKEN: &str = "[UNK]";
pub const QUERY_MARKER: &str = "[QRY]";
pub const SENTENCE_MARKER: &str = "[SNT]";
pub const SEP_TOKEN: &str = "[SEP]";

/// Tokens every vocabulary reserves ahead of the content words.
pub const RESERVED_TOKENS: [&str; 5] = [UNK_TOKEN, MASK_TOKEN, QUERY_MARKER, SENTENCE_MARKER, SEP_TOKEN];

pub const TRAIN: &str = "train";
pub const VALIDATION: &str = "validation";
pub const TEST: &str = "test";

/// One classification example with its gold rationale sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub id: String,
    pub query: Vec<String>,
    pub answer: Option<Vec<String>>,
    pub sentences: Vec<Vec<String>>,
    pub label: usize,
    /// Each entry has one flag per sentence.
    pub rationales: Vec<Vec<bool>>,
}

impl Instance {
    pub fn num_sentences(&self) -> usize {
        self.sentences.len()
    }

    pub fn num_sentence_tokens(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    /// First gold rationale with at least one selected sentence.
    pub fn primary_rationale(&self) -> Option<&[bool]> {
        self.rationales.iter().find(|r| r.iter().any(|&b| b)).map(Vec::as_slice)
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if self.sentences.is_empty() {
            return Err(Error::invalid(&self.id, "instance has no sentences"));
        }
        if self.label >= num_classes {
            return Err(Error::invalid(&self.id, format!("label {} outside [0, {num_classes})", self.label)));
        }
        let s = self.sentences.len();
        for (k, r) in self.rationales.iter().enumerate() {
            if r.len() != s {
                return Err(Error::invalid(
                    &self.id,
                    format!("rationale {k} has length {} but the instance has {s} sentences", r.len()),
                ));
            }
        }
        Ok(())
    }
}

/// On-disk JSONL record.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    query: String,
    answer: Option<String>,
    sentences: Vec<String>,
    label: usize,
    rationales: Vec<Vec<u8>>,
}

fn tokenize(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_owned).collect()
}

impl Record {
    fn into_instance(self) -> std::result::Result<Instance, String> {
        let rationales = self
            .rationales
            .into_iter()
            .map(|r| {
                r.into_iter()
                    .map(|b| match b {
                        0 => Ok(false),
                        1 => Ok(true),
                        other => Err(format!("rationale entries must be 0 or 1, found {other}")),
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Instance {
            id: self.id,
            query: tokenize(&self.query),
            answer: self.answer.as_deref().map(tokenize),
            sentences: self.sentences.iter().map(|s| tokenize(s)).collect(),
            label: self.label,
            rationales,
        })
    }

    fn from_instance(inst: &Instance) -> Self {
        Self {
            id: inst.id.clone(),
            query: inst.query.join(" "),
            answer: inst.answer.as_ref().map(|a| a.join(" ")),
            sentences: inst.sentences.iter().map(|s| s.join(" ")).collect(),
            label: inst.label,
            rationales: inst.rationales.iter().map(|r| r.iter().map(|&b| u8::from(b)).collect()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub name: String,
    pub num_classes: usize,
    pub splits: BTreeMap<String, Vec<Instance>>,
    pub multi_gold: bool,
}

impl Dataset {
    pub fn split(&self, name: &str) -> Result<&[Instance]> {
        self.splits
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Config(format!("dataset {} has no split {name:?}", self.name)))
    }

    pub fn validate(&self) -> Result<()> {
        for inst in self.splits.values().flatten() {
            inst.validate(self.num_classes)?;
        }
        Ok(())
    }

    /// Checks the dataset can drive a training run.
    pub fn require_training_splits(&self) -> Result<()> {
        for name in [TRAIN, VALIDATION] {
            if self.split(name)?.is_empty() {
                return Err(Error::Config(format!("split {name:?} is empty")));
            }
        }
        Ok(())
    }
}

/// Parses JSONL instances from a reader. Line numbers in errors are 1-based.
pub fn read_instances(reader: impl BufRead, num_classes: usize) -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record =
            serde_json::from_str(&line).map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        let id = record.id.clone();
        let inst = record.into_instance().map_err(|m| Error::invalid(id, m))?;
        inst.validate(num_classes)?;
        out.push(inst);
    }
    Ok(out)
}

/// Loads one JSONL file as a dataset with a single split named after the
/// file stem.
pub fn load_jsonl(path: impl AsRef<Path>, num_classes: usize) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let instances = read_instances(BufReader::new(file), num_classes)?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("data").to_owned();
    let multi_gold = instances.iter().any(|i| i.rationales.len() > 1);
    let mut splits = BTreeMap::new();
    splits.insert(stem.clone(), instances);
    Ok(Dataset { name: stem, num_classes, splits, multi_gold })
}

/// Loads `train.jsonl`, `validation.jsonl` and `test.jsonl` (whichever exist)
/// from a directory.
pub fn load_split_dir(dir: impl AsRef<Path>, num_classes: usize) -> Result<Dataset> {
    let dir = dir.as_ref();
    let mut splits = BTreeMap::new();
    for name in [TRAIN, VALIDATION, TEST] {
        let path = dir.join(format!("{name}.jsonl"));
        if path.exists() {
            let ds = load_jsonl(&path, num_classes)?;
            splits.extend(ds.splits);
        }
    }
    if splits.is_empty() {
        return Err(Error::Config(format!("no split files found in {}", dir.display())));
    }
    let multi_gold = splits.values().flatten().any(|i| i.rationales.len() > 1);
    let name = dir.file_name().and_then(|s| s.to_str()).unwrap_or("data").to_owned();
    Ok(Dataset { name, num_classes, splits, multi_gold })
}

pub fn write_jsonl(path: impl AsRef<Path>, instances: &[Instance]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for inst in instances {
        serde_json::to_writer(&mut w, &Record::from_instance(inst))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `RangeInclusive` as a `[min, max]` pair.
mod inclusive_pair {
    use std::ops::RangeInclusive;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(r: &RangeInclusive<usize>, s: S) -> Result<S::Ok, S::Error> {
        [*r.start(), *r.end()].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<RangeInclusive<usize>, D::Error> {
        let [lo, hi] = <[usize; 2]>::deserialize(d)?;
        Ok(lo..=hi)
    }
}

/// Parameters of the desk-scale synthetic corpus.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    /// Content word types, reserved tokens included.
    pub vocab_size: usize,
    pub num_classes: usize,
    /// Distinct query keys; labels are balanced within every key.
    pub num_query_keys: usize,
    #[serde(with = "inclusive_pair")]
    pub sentences_per_instance: RangeInclusive<usize>,
    #[serde(with = "inclusive_pair")]
    pub rationale_sentences: RangeInclusive<usize>,
    #[serde(with = "inclusive_pair")]
    pub sentence_length: RangeInclusive<usize>,
    pub instances_per_split: BTreeMap<String, usize>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        let instances_per_split =
            [(TRAIN.to_owned(), 500), (VALIDATION.to_owned(), 100), (TEST.to_owned(), 100)].into_iter().collect();
        Self {
            vocab_size: 40,
            num_classes: 2,
            num_query_keys: 4,
            sentences_per_instance: 6..=6,
            rationale_sentences: 1..=2,
            sentence_length: 4..=4,
            instances_per_split,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    fn num_fillers(&self) -> isize {
        self.vocab_size as isize
            - RESERVED_TOKENS.len() as isize
            - self.num_classes as isize
            - self.num_query_keys as isize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("synthetic spec: {m}")));
        if self.num_classes < 2 {
            return bad("num_classes must be at least 2".into());
        }
        if self.vocab_size <= self.num_classes + RESERVED_TOKENS.len() {
            return bad(format!(
                "vocab_size {} must exceed num_classes + {} reserved tokens",
                self.vocab_size,
                RESERVED_TOKENS.len()
            ));
        }
        if self.num_query_keys == 0 {
            return bad("num_query_keys must be positive".into());
        }
        if self.num_fillers() < 2 {
            return bad("vocab_size leaves fewer than 2 filler words".into());
        }
        if self.sentences_per_instance.is_empty() || *self.sentences_per_instance.start() == 0 {
            return bad("sentences_per_instance must be a nonempty range of positive counts".into());
        }
        if self.rationale_sentences.is_empty() || *self.rationale_sentences.start() == 0 {
            return bad("rationale_sentences must be a nonempty range of positive counts".into());
        }
        if self.rationale_sentences.end() > self.sentences_per_instance.start() {
            return bad("rationale_sentences max exceeds sentences_per_instance min".into());
        }
        if self.sentence_length.is_empty() || *self.sentence_length.start() < 2 {
            return bad("sentence_length must allow at least 2 tokens".into());
        }
        Ok(())
    }

    pub fn indicator_token(class: usize) -> String {
        format!("c{class}")
    }

    pub fn key_token(key: usize) -> String {
        format!("k{key}")
    }

    fn filler_token(i: usize) -> String {
        format!("w{i}")
    }
}

/// Generates the synthetic corpus.
///
/// The query is a single key token. Every sentence contains the key token;
/// rationale sentences pair it with the indicator token of the gold class,
/// distractors pair it with a random filler word. Labels are assigned so each
/// key sees every class equally often, which leaves the query uninformative.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let n_fill = spec.num_fillers() as usize;
    let mut splits = BTreeMap::new();
    for (split_idx, (name, &count)) in spec.instances_per_split.iter().enumerate() {
        let mut rng = rng_for(spec.seed, &[0x5157, split_idx as u64]);
        let mut instances = Vec::with_capacity(count);
        for i in 0..count {
            let label = i % spec.num_classes;
            let key = SyntheticSpec::key_token((i / spec.num_classes) % spec.num_query_keys);
            let s = rng.gen_range(spec.sentences_per_instance.clone());
            let r = rng.gen_range(spec.rationale_sentences.clone());
            let mut rationale = vec![false; s];
            for j in sample(&mut rng, s, r) {
                rationale[j] = true;
            }
            let sentences = rationale
                .iter()
                .map(|&is_rationale| {
                    let len = rng.gen_range(spec.sentence_length.clone());
                    let mut toks: Vec<String> =
                        (0..len).map(|_| SyntheticSpec::filler_token(rng.gen_range(0..n_fill))).collect();
                    let slots = sample(&mut rng, len, 2);
                    toks[slots.index(0)] = key.clone();
                    toks[slots.index(1)] = if is_rationale {
                        SyntheticSpec::indicator_token(label)
                    } else {
                        SyntheticSpec::filler_token(rng.gen_range(0..n_fill))
                    };
                    toks
                })
                .collect();
            instances.push(Instance {
                id: String::new(),
                query: vec![key],
                answer: None,
                sentences,
                label,
                rationales: vec![rationale],
            });
        }
        instances.shuffle(&mut rng);
        for (i, inst) in instances.iter_mut().enumerate() {
            inst.id = format!("{name}-{i:05}");
        }
        splits.insert(name.clone(), instances);
    }
    Ok(Dataset { name: "synthetic".into(), num_classes: spec.num_classes, splits, multi_gold: false })
}

/// Replaces `k` distinct sentence tokens, drawn uniformly, with the mask
/// token. Query and answer are never touched. `k` larger than the number of
/// sentence tokens masks everything.
pub fn mask_random_words<R: Rng + ?Sized>(instance: &Instance, k: usize, rng: &mut R) -> Instance {
    let total = instance.num_sentence_tokens();
    let k = if k > total {
        log::warn!("instance {}: asked to mask {k} words but only {total} are available", instance.id);
        total
    } else {
        k
    };
    let mut out = instance.clone();
    if k == 0 {
        return out;
    }
    let mut chosen: Vec<usize> = sample(rng, total, k).into_vec();
    chosen.sort_unstable();
    let mut next = chosen.into_iter().peekable();
    let mut flat = 0;
    for sent in &mut out.sentences {
        for tok in sent.iter_mut() {
            if next.peek() == Some(&flat) {
                *tok = MASK_TOKEN.to_owned();
                next.next();
            }
            flat += 1;
        }
    }
    out
}

/// Masks every token of each sentence whose `keep` flag is false.
pub fn mask_sentences(instance: &Instance, keep: &[bool]) -> Result<Instance> {
    if keep.len() != instance.num_sentences() {
        return Err(Error::invalid(
            &instance.id,
            format!(
                "keep vector has length {} but the instance has {} sentences",
                keep.len(),
                instance.num_sentences()
            ),
        ));
    }
    let mut out = instance.clone();
    for (sent, &k) in out.sentences.iter_mut().zip(keep) {
        if !k {
            for tok in sent.iter_mut() {
                *tok = MASK_TOKEN.to_owned();
            }
        }
    }
    Ok(out)
}

/// The query(-answer)-only view of an instance.
pub fn query_only(instance: &Instance) -> Instance {
    mask_sentences(instance, &vec![false; instance.num_sentences()]).expect("keep length matches")
}
