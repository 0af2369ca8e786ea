//! Run configuration: one JSON document, all fields defaulted, carried
//! alongside every artifact via its hash.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::TruncationLimits;
use crate::error::{Error, Result};
use crate::numerics::AdagradConfig;
use crate::training::{Lambdas, TrainSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Precision {
    #[serde(rename = "f32")]
    F32,
    #[serde(rename = "f64")]
    F64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // paths
    pub train_path: Option<String>,
    pub dev_path: Option<String>,
    pub test_path: Option<String>,
    pub embeddings_path: Option<String>,
    pub vocab_path: Option<String>,
    pub out_dir: String,

    // corpus
    pub vocab_size: usize,
    pub max_question_len: usize,
    pub max_answer_len: usize,
    pub max_summary_len: usize,

    // model
    pub emb_dim: usize,
    pub hidden: usize,
    pub precision: Precision,

    // training
    pub learning_rate: f64,
    pub accumulator_init: f64,
    pub adagrad_eps: f64,
    pub dropout: f64,
    pub batch_size: usize,
    pub lambda_qa: f64,
    pub lambda_sum: f64,
    pub lambda_cov: f64,
    pub clip_norm: f64,
    pub epochs: usize,
    pub patience: usize,
    pub neg_per_question: Option<usize>,
    pub seed: u64,

    // decoding
    pub beam_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train_path: None,
            dev_path: None,
            test_path: None,
            embeddings_path: None,
            vocab_path: None,
            out_dir: "out".into(),
            vocab_size: 50_000,
            max_question_len: 60,
            max_answer_len: 400,
            max_summary_len: 100,
            emb_dim: 100,
            hidden: 150,
            precision: Precision::F32,
            learning_rate: 0.15,
            accumulator_init: 0.1,
            adagrad_eps: 1e-8,
            dropout: 0.5,
            batch_size: 32,
            lambda_qa: 1.0,
            lambda_sum: 1.0,
            lambda_cov: 1.0,
            clip_norm: 2.0,
            epochs: 5,
            patience: 1,
            neg_per_question: None,
            seed: 17,
            beam_size: 4,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 5 {
            return Err(Error::Config("vocab_size must be at least 5".into()));
        }
        if self.hidden == 0 || self.emb_dim == 0 {
            return Err(Error::Config("hidden and emb_dim must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.beam_size == 0 {
            return Err(Error::Config("beam_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form; equal configs hash equally.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn as_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn truncation(&self) -> TruncationLimits {
        TruncationLimits {
            question: self.max_question_len,
            answer: self.max_answer_len,
            summary: self.max_summary_len,
        }
    }

    pub fn optimizer(&self) -> AdagradConfig {
        AdagradConfig {
            learning_rate: self.learning_rate,
            initial_accumulator: self.accumulator_init,
            epsilon: self.adagrad_eps,
        }
    }

    pub fn lambdas(&self) -> Lambdas {
        Lambdas { qa: self.lambda_qa, sum: self.lambda_sum, cov: self.lambda_cov }
    }

    pub fn train_settings(&self) -> TrainSettings {
        TrainSettings {
            batch_size: self.batch_size,
            epochs: self.epochs,
            patience: self.patience,
            lambdas: self.lambdas(),
            dropout: self.dropout,
            clip_norm: self.clip_norm,
            max_summary_len: self.max_summary_len,
            freeze: Default::default(),
        }
    }
}
