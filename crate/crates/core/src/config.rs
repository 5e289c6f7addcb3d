//! Experiment configuration: flat TOML with dotted section prefixes, e.g.
//!
//! ```toml
//! seed = 7
//! catalog.num_shows = 500
//! curation.weeks = 4
//! model.kind = "rnn"
//! ```
//!
//! Every section has defaults, so an empty file is a valid desk-scale run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curate::{AgeBracket, Constraint, CurationConfig};
use crate::error::{Error, Result};
use crate::seeds::digest_hex;
use crate::synthcat::{CatalogConfig, PopulationConfig, StreamConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    Kg,
    Cbow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rnn,
    Mlp,
    Cf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Paper,
}

macro_rules! name_and_parse {
    ($ty:ty { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub fn name(self) -> &'static str {
                match self { $(Self::$variant => $name),+ }
            }
        }

        impl std::str::FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok(Self::$variant),)+
                    other => Err(Error::config(format!(
                        concat!("unknown ", stringify!($ty), " {:?}"), other
                    ))),
                }
            }
        }
    };
}

name_and_parse!(Precision { F32 => "f32", F64 => "f64" });
name_and_parse!(EmbeddingKind { Kg => "kg", Cbow => "cbow" });
name_and_parse!(ModelKind { Rnn => "rnn", Mlp => "mlp", Cf => "cf" });
name_and_parse!(Preset { Desk => "desk", Paper => "paper" });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_users: usize,
    pub test_users: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { train_users: 4000, test_users: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurationSection {
    pub threshold_seconds: u32,
    pub coverage: f64,
    /// Omitted keeps the whole log.
    pub weeks: Option<u32>,
    /// A bracket label such as "20-29", or "all".
    pub age_bracket: String,
    pub constraint: Constraint,
    /// Input window length.
    pub k: usize,
    /// With the topic constraint, train one network per topic instead of one
    /// over all topic windows.
    pub per_topic: bool,
}

impl Default for CurationSection {
    fn default() -> Self {
        let base = CurationConfig::default();
        CurationSection {
            threshold_seconds: base.threshold_seconds,
            coverage: base.coverage,
            weeks: None,
            age_bracket: "all".into(),
            constraint: Constraint::None,
            k: 2,
            per_topic: false,
        }
    }
}

impl CurationSection {
    pub fn bracket(&self) -> Result<Option<AgeBracket>> {
        match self.age_bracket.as_str() {
            "all" => Ok(None),
            label => label.parse().map(Some),
        }
    }

    pub fn to_curation(&self) -> Result<CurationConfig> {
        Ok(CurationConfig {
            threshold_seconds: self.threshold_seconds,
            coverage: self.coverage,
            weeks: self.weeks,
            age_bracket: self.bracket()?,
            constraint: self.constraint,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    pub kind: EmbeddingKind,
    pub dim: usize,
    pub lr: f64,
    pub negatives: usize,
    pub kg_epochs: usize,
    pub cbow_epochs: usize,
    pub cbow_window: usize,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        EmbeddingSection {
            kind: EmbeddingKind::Kg,
            dim: 64,
            lr: 0.05,
            negatives: 5,
            kg_epochs: 100,
            cbow_epochs: 10,
            cbow_window: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub preset: Preset,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Optional overrides of the preset shape.
    pub lstm_layers: Option<usize>,
    pub hidden: Option<usize>,
    pub dense_widths: Option<Vec<usize>>,
    pub mlp_widths: Option<Vec<usize>>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            kind: ModelKind::Rnn,
            preset: Preset::Desk,
            epochs: 20,
            batch_size: 64,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lstm_layers: None,
            hidden: None,
            dense_widths: None,
            mlp_widths: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CfSection {
    pub rank: usize,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for CfSection {
    fn default() -> Self {
        CfSection { rank: 40, max_iters: 200, tol: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub precision: Precision,
    /// Permute every curated sequence before windowing.
    pub shuffle: bool,
    pub catalog: CatalogConfig,
    pub population: PopulationConfig,
    pub streams: StreamConfig,
    pub split: SplitConfig,
    pub curation: CurationSection,
    pub embedding: EmbeddingSection,
    pub model: ModelSection,
    pub cf: CfSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            precision: Precision::F32,
            shuffle: false,
            catalog: CatalogConfig::default(),
            population: PopulationConfig::default(),
            streams: StreamConfig::default(),
            split: SplitConfig::default(),
            curation: CurationSection::default(),
            embedding: EmbeddingSection::default(),
            model: ModelSection::default(),
            cf: CfSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::config(describe_toml_error(&e, text)))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_table(table: toml::Table) -> Result<Self> {
        let config: ExperimentConfig = table.try_into().map_err(|e: toml::de::Error| Error::config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.catalog.validate()?;
        self.population.validate()?;
        self.streams.validate()?;
        if self.curation.k == 0 {
            return Err(Error::config("curation.k must be >= 1"));
        }
        if !(self.curation.coverage > 0.0 && self.curation.coverage <= 1.0) {
            return Err(Error::config("curation.coverage must lie in (0, 1]"));
        }
        if self.curation.weeks == Some(0) {
            return Err(Error::config("curation.weeks must be >= 1"));
        }
        self.curation.bracket()?;
        if self.curation.per_topic && self.curation.constraint != Constraint::Topic {
            return Err(Error::config("curation.per_topic needs curation.constraint = \"topic\""));
        }
        if self.split.train_users == 0 || self.split.test_users == 0 {
            return Err(Error::config("split.train_users and split.test_users must be >= 1"));
        }
        if self.embedding.dim < 2 {
            return Err(Error::config("embedding.dim must be >= 2"));
        }
        if self.embedding.cbow_window == 0 {
            return Err(Error::config("embedding.cbow_window must be >= 1"));
        }
        if self.model.batch_size == 0 {
            return Err(Error::config("model.batch_size must be >= 1"));
        }
        let zero_width = |w: &Option<Vec<usize>>| w.as_ref().is_some_and(|w| w.contains(&0));
        if self.model.hidden == Some(0)
            || self.model.lstm_layers == Some(0)
            || zero_width(&self.model.dense_widths)
            || zero_width(&self.model.mlp_widths)
        {
            return Err(Error::config("model layer sizes must be positive"));
        }
        if self.cf.rank == 0 {
            return Err(Error::config("cf.rank must be >= 1"));
        }
        Ok(())
    }

    /// Total population generated: the train and test users together.
    pub fn num_users(&self) -> usize {
        self.split.train_users + self.split.test_users
    }

    /// SHA-256 over the canonical JSON form, which lists fields in declaration order.
    pub fn fingerprint(&self) -> String {
        digest_hex(&serde_json::to_vec(self).expect("config serializes"))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn describe_toml_error(e: &toml::de::Error, text: &str) -> String {
    match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            format!("line {line}: {}", e.message())
        }
        None => e.message().to_string(),
    }
}
