use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Task;

/// Which block consumes the commonsense-augmented branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Cross-attention: domain queries, commonsense keys and values.
    #[serde(rename = "KINN1", alias = "kinn1")]
    Kinn1,
    /// Self-attention over the commonsense branch.
    #[serde(rename = "KINN2", alias = "kinn2")]
    Kinn2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinnConfig {
    pub variant: Variant,
    pub dim: usize,
    pub heads: usize,
    pub max_len: usize,
    pub num_classes: usize,
    pub task: Task,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Training stops once a mini-batch loss drops to or below this value.
    pub epsilon: f64,
    pub seed: u64,
    /// Width of the pooled representation; defaults to `dim`.
    pub dense_dim: usize,
    /// Inverse-frequency loss weights computed from the training labels.
    pub class_weights: bool,
}

impl Default for KinnConfig {
    fn default() -> Self {
        KinnConfig {
            variant: Variant::Kinn2,
            dim: 128,
            heads: 4,
            max_len: 512,
            num_classes: 2,
            task: Task::Binary,
            lr: 1e-3,
            epochs: 15,
            batch_size: 16,
            epsilon: 1e-3,
            seed: 0,
            dense_dim: 128,
            class_weights: true,
        }
    }
}

impl KinnConfig {
    /// Binary depression detection over long user histories.
    pub fn clef() -> Self {
        KinnConfig {
            max_len: 2000,
            ..Self::default()
        }
    }

    /// Nine-way multi-label symptom detection.
    pub fn primate() -> Self {
        KinnConfig {
            max_len: 150,
            num_classes: 9,
            task: Task::MultiLabel,
            epochs: 25,
            ..Self::default()
        }
    }

    /// Six-way cause classification over short posts.
    pub fn cams() -> Self {
        KinnConfig {
            max_len: 50,
            num_classes: 6,
            task: Task::MultiClass,
            epochs: 25,
            batch_size: 128,
            ..Self::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "clef" => Ok(Self::clef()),
            "primate" => Ok(Self::primate()),
            "cams" => Ok(Self::cams()),
            other => Err(Error::Config(format!(
                "unknown preset {other:?} (expected clef, primate or cams)"
            ))),
        }
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.dim == 0 || self.heads == 0 {
            return fail("dim and heads must be positive".into());
        }
        if !self.dim.is_multiple_of(self.heads) {
            return fail(format!("dim {} is not divisible by heads {}", self.dim, self.heads));
        }
        if self.dense_dim == 0 {
            return fail("dense_dim must be positive".into());
        }
        if self.max_len == 0 {
            return fail("max_len must be positive".into());
        }
        if self.num_classes < 2 {
            return fail(format!("num_classes must be at least 2, got {}", self.num_classes));
        }
        if self.task == Task::Binary && self.num_classes != 2 {
            return fail(format!("binary task needs num_classes = 2, got {}", self.num_classes));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return fail(format!("lr must be a positive number, got {}", self.lr));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return fail(format!("epsilon must be a positive number, got {}", self.epsilon));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        Ok(())
    }
}
