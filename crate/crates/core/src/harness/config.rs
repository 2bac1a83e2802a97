use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::contrastive::{FairClipConfig, DEFAULT_TEMPERATURE};
use crate::data::AttributeSchema;
use crate::encoders::{AdamConfig, AdamPreset, EncoderKind};
use crate::synth::GeneratorConfig;
use crate::{Error, Result};

/// Training objective. `clip` pins the fairness weight to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Clip,
    #[default]
    Fairclip,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Clip => "clip",
            Mode::Fairclip => "fairclip",
        }
    }
}

/// Train/val/test fractions of the generated samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl SplitFractions {
    /// Record counts for `n` samples: train and val are floored, test takes
    /// the remainder.
    pub fn counts(&self, n: usize) -> [usize; 3] {
        let train = (self.train * n as f64).floor() as usize;
        let val = ((self.val * n as f64).floor() as usize).min(n - train);
        [train, val, n - train - val]
    }

    fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::config("data.split", "fractions must be non-negative"));
        }
        let total: f64 = parts.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config("data.split", format!("fractions sum to {total}, not 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "serde_json::Map<String, serde_json::Value>")]
pub struct DataSection {
    /// Existing dataset directory (`schema.toml` plus split files). When
    /// unset, commands read what `generate` wrote under the output directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub split: SplitFractions,
    #[serde(flatten)]
    pub generator: GeneratorConfig,
}

// Unknown keys inside a flattened struct are not reported by serde, so the
// generator fields are split off and parsed on their own.
impl TryFrom<serde_json::Map<String, serde_json::Value>> for DataSection {
    type Error = String;

    fn try_from(mut map: serde_json::Map<String, serde_json::Value>) -> std::result::Result<Self, String> {
        let path = map
            .remove("path")
            .map(serde_json::from_value)
            .transpose()
            .map_err(|e| format!("data.path: {e}"))?;
        let split = map
            .remove("split")
            .map(serde_json::from_value)
            .transpose()
            .map_err(|e| format!("data.split: {e}"))?
            .unwrap_or_default();
        let generator = serde_json::from_value(serde_json::Value::Object(map)).map_err(|e| e.to_string())?;
        Ok(Self {
            path,
            split,
            generator,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: EncoderKind,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub temperature: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Linear,
            hidden_dim: 64,
            embed_dim: 16,
            temperature: DEFAULT_TEMPERATURE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub mode: Mode,
    pub epochs: usize,
    pub batch_size: usize,
    /// Starting point for the optimizer fields below.
    pub preset: AdamPreset,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adam_epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_decay: Option<f64>,
    /// Periodic checkpoint interval in epochs; 0 keeps only the final one.
    pub checkpoint_every: usize,
    /// Validation interval in epochs; 0 disables it.
    pub eval_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            mode: Mode::Fairclip,
            epochs: 10,
            batch_size: 32,
            preset: AdamPreset::Standard,
            learning_rate: None,
            beta1: None,
            beta2: None,
            adam_epsilon: None,
            weight_decay: None,
            checkpoint_every: 0,
            eval_every: 1,
        }
    }
}

impl TrainSection {
    pub fn adam(&self) -> AdamConfig {
        let base = AdamConfig::preset(self.preset);
        AdamConfig {
            learning_rate: self.learning_rate.unwrap_or(base.learning_rate),
            beta1: self.beta1.unwrap_or(base.beta1),
            beta2: self.beta2.unwrap_or(base.beta2),
            epsilon: self.adam_epsilon.unwrap_or(base.epsilon),
            weight_decay: self.weight_decay.unwrap_or(base.weight_decay),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeKind {
    #[default]
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSection {
    pub kind: ProbeKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    /// Binarization cut for DPD and DEOdds.
    pub threshold: f64,
    /// Checkpoint to evaluate; defaults to the final training checkpoint.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    /// Class prompt features for zero-shot evaluation; when unset the
    /// per-class mean text features of the training split are used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompts: Option<PathBuf>,
}

impl Default for ProbeSection {
    fn default() -> Self {
        Self {
            kind: ProbeKind::Logistic,
            learning_rate: 1e-2,
            epochs: 100,
            batch_size: 64,
            l2: 1e-4,
            threshold: 0.5,
            checkpoint: None,
            prompts: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    pub out_dir: PathBuf,
    /// Attributes to evaluate; empty means every schema attribute.
    pub attributes: Vec<String>,
    /// Report directories for `compare`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidate: Option<PathBuf>,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("runs/default"),
            attributes: Vec::new(),
            baseline: None,
            candidate: None,
        }
    }
}

/// Everything a run needs, parsed from one TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub fair: FairClipConfig,
    #[serde(default)]
    pub probe: ProbeSection,
    #[serde(default)]
    pub report: ReportSection,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config {
            field: "config".into(),
            message: e.to_string(),
        })?;
        cfg.finish()
    }

    pub fn load(path: impl AsRef<Path>, overrides: &Overrides) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
            cfg.data.generator.seed = seed;
        }
        if let Some(out) = &overrides.out_dir {
            cfg.report.out_dir = out.clone();
        }
        // Relative paths in the file are taken relative to the file itself.
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.data.path,
            &mut cfg.probe.checkpoint,
            &mut cfg.probe.prompts,
            &mut cfg.report.baseline,
            &mut cfg.report.candidate,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.finish()
    }

    /// Applies the mode rule and validates every section.
    fn finish(mut self) -> Result<Self> {
        if self.train.mode == Mode::Clip && self.fair.lambda_fair != 0.0 {
            log::info!("train.mode = clip: fair.lambda_fair {} forced to 0", self.fair.lambda_fair);
            self.fair.lambda_fair = 0.0;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.data.generator.validate()?;
        self.data.split.validate()?;
        let m = &self.model;
        if m.embed_dim == 0 {
            return Err(Error::config("model.embed_dim", "must be positive"));
        }
        if m.kind == EncoderKind::Mlp1 && m.hidden_dim == 0 {
            return Err(Error::config("model.hidden_dim", "must be positive for mlp1"));
        }
        if !(m.temperature.is_finite() && m.temperature > 0.0) {
            return Err(Error::config("model.temperature", "must be positive"));
        }
        if self.train.epochs == 0 {
            return Err(Error::config("train.epochs", "must be at least 1"));
        }
        if self.train.batch_size < 2 {
            return Err(Error::config("train.batch_size", "must be at least 2"));
        }
        self.train.adam().validate()?;
        self.fair.validate()?;
        let attrs = &self.data.generator.attributes;
        if self.fair.attribute_name.is_empty() {
            return Err(Error::config("fair.attribute_name", "must name a schema attribute"));
        }
        check_attribute(attrs, &self.fair.attribute_name, "fair.attribute_name")?;
        for a in &self.report.attributes {
            check_attribute(attrs, a, "report.attributes")?;
        }
        let p = &self.probe;
        if !(p.learning_rate.is_finite() && p.learning_rate >= 0.0) {
            return Err(Error::config("probe.learning_rate", "must be non-negative"));
        }
        if !(p.l2.is_finite() && p.l2 >= 0.0) {
            return Err(Error::config("probe.l2", "must be non-negative"));
        }
        if p.batch_size == 0 {
            return Err(Error::config("probe.batch_size", "must be positive"));
        }
        if !p.threshold.is_finite() {
            return Err(Error::config("probe.threshold", "must be finite"));
        }
        Ok(())
    }

    /// Attributes that reports are produced for.
    pub fn report_attributes(&self) -> Vec<String> {
        if self.report.attributes.is_empty() {
            self.data
                .generator
                .attributes
                .attributes()
                .iter()
                .map(|a| a.name.clone())
                .collect()
        } else {
            self.report.attributes.clone()
        }
    }

    /// Canonical JSON form; the config hash is taken over these bytes.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical form. The output directory is left out
    /// so that the same run written to two places hashes the same.
    pub fn hash(&self) -> String {
        let mut plain = self.clone();
        plain.report.out_dir = PathBuf::new();
        let digest = Sha256::digest(plain.canonical_json().as_bytes());
        let mut out = String::with_capacity(64);
        for b in digest.iter() {
            let _ = write!(out, "{b:02x}");
        }
        out
    }

    pub fn out_dir(&self) -> &Path {
        &self.report.out_dir
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data
            .path
            .clone()
            .unwrap_or_else(|| self.report.out_dir.join("data"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.probe
            .checkpoint
            .clone()
            .unwrap_or_else(|| self.report.out_dir.join("train").join(super::FINAL_CHECKPOINT))
    }
}

fn check_attribute(attrs: &AttributeSchema, name: &str, field: &str) -> Result<()> {
    attrs
        .attribute(name)
        .map(|_| ())
        .map_err(|_| Error::config(field, format!("`{name}` is not a schema attribute")))
}
