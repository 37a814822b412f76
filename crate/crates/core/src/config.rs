//! Run configuration: one TOML file naming the model settings, data files,
//! backends and output directory. Relative paths resolve against the
//! directory holding the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::Aggregation;
use crate::error::{Error, Result};
use crate::explain::Block;
use crate::label::Task;
use crate::network::{KinnConfig, Variant};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    preset: Option<String>,
    variant: Option<Variant>,
    dim: Option<usize>,
    heads: Option<usize>,
    dense_dim: Option<usize>,
    max_len: Option<usize>,
    task: Option<Task>,
    num_classes: Option<usize>,
    lr: Option<f64>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    epsilon: Option<f64>,
    class_weights: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataSection {
    lexicon: PathBuf,
    dataset: PathBuf,
    #[serde(default)]
    aggregation: Aggregation,
    #[serde(default = "yes")]
    knowledge: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderChoice {
    #[default]
    Stub,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommonsenseChoice {
    #[default]
    Stub,
    Fixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UmlsChoice {
    #[default]
    None,
    Fixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmChoice {
    #[default]
    Stub,
    Recorded,
    Http,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct BackendSection {
    #[serde(default)]
    encoder: EncoderChoice,
    #[serde(default)]
    commonsense: CommonsenseChoice,
    commonsense_fixture: Option<PathBuf>,
    #[serde(default)]
    umls: UmlsChoice,
    umls_fixture: Option<PathBuf>,
    #[serde(default)]
    llm: LlmChoice,
    llm_fixture: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmSettings {
    #[serde(default)]
    pub endpoint: String,
    #[serde(default)]
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_timeout() -> u64 {
    30
}

fn default_max_tokens() -> u32 {
    256
}

impl Default for LlmSettings {
    fn default() -> Self {
        LlmSettings {
            endpoint: String::new(),
            model: String::new(),
            timeout_secs: default_timeout(),
            max_tokens: default_max_tokens(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplainSection {
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default)]
    pub block: Block,
}

fn default_top_k() -> usize {
    5
}

impl Default for ExplainSection {
    fn default() -> Self {
        ExplainSection {
            top_k: default_top_k(),
            block: Block::Fused,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    seed: u64,
    out: Option<PathBuf>,
    #[serde(default)]
    model: ModelSection,
    data: DataSection,
    #[serde(default)]
    backends: BackendSection,
    #[serde(default)]
    llm: LlmSettings,
    #[serde(default)]
    explain: ExplainSection,
}

/// Backend selections with their resolved fixture paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Backends {
    pub encoder: EncoderChoice,
    pub commonsense: CommonsenseChoice,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub commonsense_fixture: Option<PathBuf>,
    pub umls: UmlsChoice,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub umls_fixture: Option<PathBuf>,
    pub llm: LlmChoice,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub llm_fixture: Option<PathBuf>,
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub model: KinnConfig,
    pub lexicon: PathBuf,
    pub dataset: PathBuf,
    pub aggregation: Aggregation,
    /// Tagging and commonsense aspects on (false = plain-text ablation).
    pub knowledge: bool,
    pub backends: Backends,
    pub llm: LlmSettings,
    pub explain: ExplainSection,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base, overrides)
    }

    /// Parse TOML text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path, overrides: &Overrides) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let seed = overrides.seed.unwrap_or(raw.seed);

        let m = &raw.model;
        let mut model = KinnConfig::preset(m.preset.as_deref().unwrap_or("clef"))?;
        model.seed = seed;
        if let Some(v) = m.variant {
            model.variant = v;
        }
        if let Some(v) = m.task {
            model.task = v;
        }
        if let Some(v) = m.num_classes {
            model.num_classes = v;
        }
        if let Some(v) = m.dim {
            model.dim = v;
            model.dense_dim = v;
        }
        if let Some(v) = m.dense_dim {
            model.dense_dim = v;
        }
        macro_rules! set {
            ($($field:ident),*) => {$(if let Some(v) = m.$field { model.$field = v; })*};
        }
        set!(heads, max_len, lr, epochs, batch_size, epsilon, class_weights);
        model.validate()?;

        let b = &raw.backends;
        let backends = Backends {
            encoder: b.encoder,
            commonsense: b.commonsense,
            commonsense_fixture: b.commonsense_fixture.as_deref().map(resolve),
            umls: b.umls,
            umls_fixture: b.umls_fixture.as_deref().map(resolve),
            llm: b.llm,
            llm_fixture: b.llm_fixture.as_deref().map(resolve),
        };
        let need = |choice: bool, path: &Option<PathBuf>, what: &str| -> Result<()> {
            match (choice, path) {
                (true, None) => Err(Error::Config(format!("{what} backend needs a fixture path"))),
                _ => Ok(()),
            }
        };
        need(backends.commonsense == CommonsenseChoice::Fixture, &backends.commonsense_fixture, "commonsense")?;
        need(backends.umls == UmlsChoice::Fixture, &backends.umls_fixture, "umls")?;
        need(backends.llm == LlmChoice::Recorded, &backends.llm_fixture, "llm")?;
        if backends.llm == LlmChoice::Http && (raw.llm.endpoint.is_empty() || raw.llm.model.is_empty()) {
            return Err(Error::Config("http llm backend needs [llm] endpoint and model".into()));
        }

        let out = match &overrides.out {
            Some(o) => o.clone(),
            None => resolve(raw.out.as_deref().unwrap_or(Path::new("out"))),
        };
        let cfg = RunConfig {
            seed,
            out,
            model,
            lexicon: resolve(&raw.data.lexicon),
            dataset: resolve(&raw.data.dataset),
            aggregation: raw.data.aggregation,
            knowledge: raw.data.knowledge,
            backends,
            llm: raw.llm,
            explain: raw.explain,
        };
        cfg.check_paths()?;
        Ok(cfg)
    }

    fn check_paths(&self) -> Result<()> {
        let mut paths = vec![&self.lexicon, &self.dataset];
        let b = &self.backends;
        paths.extend(b.commonsense_fixture.iter());
        paths.extend(b.umls_fixture.iter());
        paths.extend(b.llm_fixture.iter());
        for p in paths {
            if !p.exists() {
                return Err(Error::Config(format!("referenced path {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// The resolved configuration as pretty JSON, for logs and run records.
    pub fn echo(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_else(|e| format!("<unprintable config: {e}>"))
    }
}
