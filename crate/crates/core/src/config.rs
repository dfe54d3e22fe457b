//! Settings file (TOML or JSON). Missing keys fall back to the full-size
//! defaults; `configs/desk.toml` holds the small settings used in tests.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::ClassifierOptions;
use crate::corpus::PreprocessConfig;
use crate::generator::GenerateOptions;
use crate::nn::{HeadKind, ModelConfig, TrainConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("TOML config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("JSON config: {0}")]
    Json(#[from] serde_json::Error),
}

/// Model and training keys shared by the two model sections.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSettings {
    pub n_embd: usize,
    pub n_layer: usize,
    pub n_head: usize,
    pub n_positions: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
}

impl ModelSettings {
    fn from_parts(m: &ModelConfig, t: &TrainConfig) -> ModelSettings {
        ModelSettings {
            n_embd: m.n_embd,
            n_layer: m.n_layer,
            n_head: m.n_head,
            n_positions: m.n_positions,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            weight_decay: t.weight_decay,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            seed,
        }
    }

    fn model_config(&self, vocab_size: usize, causal: bool, head: HeadKind) -> ModelConfig {
        ModelConfig {
            n_embd: self.n_embd,
            n_layer: self.n_layer,
            n_head: self.n_head,
            n_positions: self.n_positions,
            vocab_size,
            causal,
            head,
        }
    }
}

/// `[generator]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSettings {
    pub n_embd: usize,
    pub n_layer: usize,
    pub n_head: usize,
    pub n_positions: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
}

impl Default for GeneratorSettings {
    fn default() -> Self {
        let m = ModelSettings::from_parts(&ModelConfig::generator(0), &TrainConfig::default());
        GeneratorSettings {
            n_embd: m.n_embd,
            n_layer: m.n_layer,
            n_head: m.n_head,
            n_positions: m.n_positions,
            epochs: m.epochs,
            learning_rate: m.learning_rate,
            batch_size: m.batch_size,
            weight_decay: m.weight_decay,
        }
    }
}

impl GeneratorSettings {
    pub fn model(&self) -> ModelSettings {
        ModelSettings {
            n_embd: self.n_embd,
            n_layer: self.n_layer,
            n_head: self.n_head,
            n_positions: self.n_positions,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            weight_decay: self.weight_decay,
        }
    }
}

/// `[classifier]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSettings {
    pub n_embd: usize,
    pub n_layer: usize,
    pub n_head: usize,
    pub n_positions: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub split: f64,
    pub subword_vocab_size: usize,
}

impl Default for ClassifierSettings {
    fn default() -> Self {
        let m = ModelSettings::from_parts(&ModelConfig::classifier(0), &TrainConfig::classifier());
        ClassifierSettings {
            n_embd: m.n_embd,
            n_layer: m.n_layer,
            n_head: m.n_head,
            n_positions: m.n_positions,
            epochs: m.epochs,
            learning_rate: m.learning_rate,
            batch_size: m.batch_size,
            weight_decay: m.weight_decay,
            split: 0.85,
            subword_vocab_size: 30_522,
        }
    }
}

impl ClassifierSettings {
    pub fn model(&self) -> ModelSettings {
        ModelSettings {
            n_embd: self.n_embd,
            n_layer: self.n_layer,
            n_head: self.n_head,
            n_positions: self.n_positions,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StructureSettings {
    pub k_structure: usize,
}

impl Default for StructureSettings {
    fn default() -> Self {
        StructureSettings { k_structure: 6 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub corpus: PreprocessConfig,
    pub generator: GeneratorSettings,
    pub generation: GenerateOptions,
    pub classifier: ClassifierSettings,
    pub structure: StructureSettings,
}

impl Settings {
    /// Reads TOML when the extension is `.toml`, JSON otherwise.
    pub fn load(path: &Path) -> Result<Settings, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if path.extension().is_some_and(|e| e == "toml") {
            Settings::from_toml(&text)
        } else {
            Ok(serde_json::from_str(&text)?)
        }
    }

    pub fn from_toml(text: &str) -> Result<Settings, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn generator_model(&self, vocab_size: usize) -> ModelConfig {
        self.generator.model().model_config(vocab_size, true, HeadKind::TiedLm)
    }

    pub fn generator_train(&self, seed: u64) -> TrainConfig {
        self.generator.model().train_config(seed)
    }

    pub fn classifier_options(&self, seed: u64) -> ClassifierOptions {
        let c = &self.classifier;
        let m = c.model();
        ClassifierOptions {
            model: m.model_config(0, false, HeadKind::Classifier { classes: 2 }),
            train: m.train_config(seed),
            split: c.split,
            subword_vocab_size: c.subword_vocab_size,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_full_size() {
        let s = Settings::default();
        assert_eq!(s.generator_model(10), ModelConfig::generator(10));
        let c = s.classifier_options(0);
        assert_eq!((c.model.n_embd, c.model.n_layer, c.model.n_head, c.model.n_positions), (768, 6, 12, 512));
        assert_eq!(c.train.epochs, 3);
        assert_eq!(s.generation.top_k, 5);
        assert_eq!(s.generation.no_repeat_window, 15);
    }

    #[test]
    fn partial_toml_overrides() {
        let s = Settings::from_toml("[generator]\nn_embd = 32\nn_head = 2\n[structure]\nk_structure = 3\n").unwrap();
        assert_eq!(s.generator.n_embd, 32);
        assert_eq!(s.generator.n_layer, 3);
        assert_eq!(s.structure.k_structure, 3);
        assert!(Settings::from_toml("[generator]\nbogus = 1\n").is_err());
    }

    #[test]
    fn desk_file_parses() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
        let s = Settings::load(&path).unwrap();
        assert_eq!(s.generator.n_embd, 32);
        assert!(s.generator_model(5).validate().is_ok());
    }
}
