use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use diagprop::corpus::{generate_synthetic, load_split_dir};
use diagprop::{
    Dataset, DecodePolicy, EncoderConfig, EvalOptions, ObjectiveConfig, Preset, SelectionMetric, SyntheticSpec,
    TrainConfig,
};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

/// Everything one command needs, read from a single TOML file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub model: EncoderConfig,
    #[serde(default)]
    pub objectives: ObjectivesSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

/// Either a directory of `{train,validation,test}.jsonl` files or an
/// inline synthetic corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Label count of the JSONL data; the synthetic spec carries its own.
    #[serde(default = "two")]
    pub num_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
}

fn two() -> usize {
    2
}

impl Default for DataSection {
    fn default() -> Self {
        Self { path: None, num_classes: 2, synthetic: None }
    }
}

/// A named preset plus optional per-field overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectivesSection {
    pub preset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supervised_explanations: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faithfulness: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_consistency: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence_indication: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_baseline: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_momentum: Option<f64>,
}

impl Default for ObjectivesSection {
    fn default() -> Self {
        Self::from_resolved(Preset::Sup, &Preset::Sup.config())
    }
}

impl ObjectivesSection {
    pub fn preset(&self) -> Result<Preset> {
        Ok(self.preset.parse()?)
    }

    pub fn resolve(&self) -> Result<ObjectiveConfig> {
        let base = self.preset()?.config();
        let config = ObjectiveConfig {
            supervised_explanations: self.supervised_explanations.unwrap_or(base.supervised_explanations),
            faithfulness: self.faithfulness.unwrap_or(base.faithfulness),
            data_consistency: self.data_consistency.unwrap_or(base.data_consistency),
            confidence_indication: self.confidence_indication.unwrap_or(base.confidence_indication),
            lambda: self.lambda.unwrap_or(base.lambda),
            k: self.k.unwrap_or(base.k),
            reward_baseline: self.reward_baseline.unwrap_or(base.reward_baseline),
            baseline_momentum: self.baseline_momentum.unwrap_or(base.baseline_momentum),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_resolved(preset: Preset, c: &ObjectiveConfig) -> Self {
        Self {
            preset: preset.name().to_owned(),
            supervised_explanations: Some(c.supervised_explanations),
            faithfulness: Some(c.faithfulness),
            data_consistency: Some(c.data_consistency),
            confidence_indication: Some(c.confidence_indication),
            lambda: Some(c.lambda),
            k: Some(c.k),
            reward_baseline: Some(c.reward_baseline),
            baseline_momentum: Some(c.baseline_momentum),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hyperparameters {
    /// Small-encoder defaults.
    #[default]
    Desk,
    /// Values reported for fine-tuning a pretrained encoder.
    Paper,
}

/// Optimisation settings; unset fields fall back to the chosen defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default)]
    pub defaults: Hyperparameters,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection_metric: Option<SelectionMetric>,
    /// Global gradient-norm clip; 0 disables clipping.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<DecodePolicy>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub split: String,
    pub policy: DecodePolicy,
    pub k: usize,
    pub repeats: usize,
    pub seed: u64,
    pub properties: bool,
    pub query_only: bool,
    /// Optimiser steps for the post-hoc confidence probe.
    pub probe_steps: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        let o = EvalOptions::default();
        Self {
            split: diagprop::corpus::TEST.to_owned(),
            policy: o.policy,
            k: o.k,
            repeats: o.repeats,
            seed: o.seed,
            properties: o.properties,
            query_only: o.query_only,
            probe_steps: 2000,
        }
    }
}

impl EvalSection {
    pub fn options(&self) -> EvalOptions {
        EvalOptions {
            policy: self.policy,
            k: self.k,
            repeats: self.repeats,
            seed: self.seed,
            properties: self.properties,
            query_only: self.query_only,
        }
    }
}

/// Grid searched by `sweep`; every combination is trained and scored on
/// the validation split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub lambda: Vec<f64>,
    pub k: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { lambda: vec![0.3, 0.5, 0.7], k: vec![2, 5], seeds: vec![0] }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let config: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        config.check_paths()?;
        Ok(config)
    }

    fn check_paths(&self) -> Result<()> {
        if let Some(p) = &self.data.path {
            if !p.exists() {
                bail!("data.path {} does not exist", p.display());
            }
        }
        if let Some(p) = &self.model.pretrained {
            if !Path::new(p).exists() {
                bail!("model.pretrained {p} does not exist");
            }
        }
        Ok(())
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let base = match self.train.defaults {
            Hyperparameters::Desk => TrainConfig::default(),
            Hyperparameters::Paper => TrainConfig::paper_preset(),
        };
        let t = &self.train;
        let config = TrainConfig {
            lr: t.lr.unwrap_or(base.lr),
            epochs: t.epochs.unwrap_or(base.epochs),
            batch_size: t.batch_size.unwrap_or(base.batch_size),
            seed: t.seed.unwrap_or(base.seed),
            selection_metric: t.selection_metric.unwrap_or(base.selection_metric),
            clip_norm: match t.clip_norm {
                Some(c) if c <= 0.0 => None,
                Some(c) => Some(c),
                None => base.clip_norm,
            },
            policy: t.policy.unwrap_or(base.policy),
            objectives: self.objectives.resolve()?,
            model: self.model.clone(),
        };
        config.validate()?;
        Ok(config)
    }

    /// The same run with every default written out.
    pub fn resolved(&self) -> Result<Self> {
        let t = self.train_config()?;
        let mut out = self.clone();
        out.objectives = ObjectivesSection::from_resolved(self.objectives.preset()?, &t.objectives);
        out.train = TrainSection {
            defaults: self.train.defaults,
            lr: Some(t.lr),
            epochs: Some(t.epochs),
            batch_size: Some(t.batch_size),
            seed: Some(t.seed),
            selection_metric: Some(t.selection_metric),
            clip_norm: Some(t.clip_norm.unwrap_or(0.0)),
            policy: Some(t.policy),
        };
        Ok(out)
    }

    pub fn write_snapshot(&self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.output_dir)
            .with_context(|| format!("creating output directory {}", self.output_dir.display()))?;
        let path = self.output_dir.join(name);
        let text = toml::to_string_pretty(&self.resolved()?)?;
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn dataset(&self) -> Result<Dataset> {
        let ds = match (&self.data.path, &self.data.synthetic) {
            (Some(_), Some(_)) => bail!("data.path and data.synthetic are mutually exclusive"),
            (Some(p), None) => load_split_dir(p, self.data.num_classes)?,
            (None, Some(spec)) => generate_synthetic(spec)?,
            (None, None) => bail!("the data section needs either path or synthetic"),
        };
        Ok(ds)
    }
}
