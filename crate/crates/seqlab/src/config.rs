//! Run configuration: model sizes, training schedule, paths, precision.
//!
//! The file format is line-based `key = value` UTF-8 text with `#`
//! comments. Hyper-parameter keys are accepted both under their
//! presentation names ("Hidden size char") and snake_case aliases
//! (`hidden_char`); the canonical rendering uses the presentation names.
//! Command-line flags override file values.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::tensor::Dtype;

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub char_dim: usize,
    pub word_dim: usize,
    pub hidden_char: usize,
    pub hidden_word: usize,
    pub dropout_char: f64,
    pub dropout_bilstm: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_phase1: f64,
    pub lr_phase2: f64,
    pub phase1_epochs: usize,
    pub seed: u64,
    pub precision: Dtype,
    pub grad_clip: Option<f64>,
    /// Initialize a trainable word table from the training vocabulary
    /// instead of loading an embedding file.
    pub scratch_embeddings: bool,
    /// Unfreeze a loaded embedding table during training.
    pub finetune_embeddings: bool,
    pub train: Option<String>,
    pub validation: Option<String>,
    pub test: Option<String>,
    pub embeddings: Option<String>,
    pub checkpoint: Option<String>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            char_dim: 60,
            word_dim: 300,
            hidden_char: 30,
            hidden_word: 64,
            dropout_char: 0.3,
            dropout_bilstm: 0.5,
            batch_size: 64,
            epochs: 40,
            lr_phase1: 0.004,
            lr_phase2: 0.0004,
            phase1_epochs: 20,
            seed: 42,
            precision: Dtype::F32,
            grad_clip: None,
            scratch_embeddings: false,
            finetune_embeddings: false,
            train: None,
            validation: None,
            test: None,
            embeddings: None,
            checkpoint: None,
        }
    }
}

impl Config {
    /// Applies one `key = value` assignment. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("{key}: {what} (got {value:?})"));
        match key {
            "char_dim" | "Character dimension" => {
                self.char_dim = value.parse().map_err(|_| bad("expected an integer"))?
            }
            "word_dim" | "Word dimension" => {
                self.word_dim = value.parse().map_err(|_| bad("expected an integer"))?
            }
            "hidden_char" | "Hidden size char" => {
                self.hidden_char = value.parse().map_err(|_| bad("expected an integer"))?
            }
            "hidden_word" | "Hidden size word" => {
                self.hidden_word = value.parse().map_err(|_| bad("expected an integer"))?
            }
            "update_function" | "Update function" => {
                if !value.eq_ignore_ascii_case("nadam") {
                    return Err(bad("only Nadam is supported"));
                }
            }
            "dropout_char" | "Dropout character embedding" => {
                self.dropout_char = value.parse().map_err(|_| bad("expected a number"))?
            }
            "dropout_bilstm" | "Dropout two Bi-LSTM layers" => {
                self.dropout_bilstm = value.parse().map_err(|_| bad("expected a number"))?
            }
            "batch_size" | "Batch size" => {
                self.batch_size = value.parse().map_err(|_| bad("expected an integer"))?
            }
            "lr_phase1" | "Learning rate first 20 epoch" => {
                self.lr_phase1 = value.parse().map_err(|_| bad("expected a number"))?
            }
            "lr_phase2" | "Learning rate last 20 epoch" => {
                self.lr_phase2 = value.parse().map_err(|_| bad("expected a number"))?
            }
            "epochs" => self.epochs = value.parse().map_err(|_| bad("expected an integer"))?,
            "phase1_epochs" => {
                self.phase1_epochs = value.parse().map_err(|_| bad("expected an integer"))?
            }
            "seed" => self.seed = value.parse().map_err(|_| bad("expected an integer"))?,
            "precision" => {
                self.precision = match value {
                    "f32" => Dtype::F32,
                    "f64" => Dtype::F64,
                    _ => return Err(bad("expected f32 or f64")),
                }
            }
            "grad_clip" => {
                self.grad_clip = match value {
                    "off" | "none" => None,
                    v => Some(v.parse().map_err(|_| bad("expected a number or off"))?),
                }
            }
            "scratch_embeddings" => {
                self.scratch_embeddings = value.parse().map_err(|_| bad("expected true or false"))?
            }
            "finetune_embeddings" => {
                self.finetune_embeddings =
                    value.parse().map_err(|_| bad("expected true or false"))?
            }
            "train" => self.train = non_empty(value),
            "validation" => self.validation = non_empty(value),
            "test" => self.test = non_empty(value),
            "embeddings" => self.embeddings = non_empty(value),
            "checkpoint" => self.checkpoint = non_empty(value),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses a configuration file body on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected `key = value`, got {raw:?}"),
                });
            };
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Canonical rendering; embedded verbatim in checkpoints and echoed in
    /// training logs. `parse(to_text())` reproduces the config exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Character dimension = {}", self.char_dim);
        let _ = writeln!(s, "Word dimension = {}", self.word_dim);
        let _ = writeln!(s, "Hidden size char = {}", self.hidden_char);
        let _ = writeln!(s, "Hidden size word = {}", self.hidden_word);
        let _ = writeln!(s, "Update function = Nadam");
        let _ = writeln!(s, "Learning rate first 20 epoch = {}", self.lr_phase1);
        let _ = writeln!(s, "Learning rate last 20 epoch = {}", self.lr_phase2);
        let _ = writeln!(s, "Dropout character embedding = {}", self.dropout_char);
        let _ = writeln!(s, "Dropout two Bi-LSTM layers = {}", self.dropout_bilstm);
        let _ = writeln!(s, "Batch size = {}", self.batch_size);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "phase1_epochs = {}", self.phase1_epochs);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "precision = {}", self.precision.name());
        if let Some(c) = self.grad_clip {
            let _ = writeln!(s, "grad_clip = {}", c);
        }
        let _ = writeln!(s, "scratch_embeddings = {}", self.scratch_embeddings);
        let _ = writeln!(s, "finetune_embeddings = {}", self.finetune_embeddings);
        for (key, value) in [
            ("train", &self.train),
            ("validation", &self.validation),
            ("test", &self.test),
            ("embeddings", &self.embeddings),
            ("checkpoint", &self.checkpoint),
        ] {
            if let Some(v) = value {
                let _ = writeln!(s, "{key} = {v}");
            }
        }
        s
    }
}

fn non_empty(value: &str) -> Option<String> {
    if value.is_empty() {
        None
    } else {
        Some(value.to_string())
    }
}
