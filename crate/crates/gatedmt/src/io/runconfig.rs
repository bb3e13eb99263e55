//! Full run configuration in TOML: `[model]`, `[optimizer]`, and `[data]`
//! sections, all optional, with every field defaulted. Unknown keys are
//! rejected with an error naming the key.

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::trainer::OptimizerConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub vision_store: Option<PathBuf>,
    pub phrases: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub max_vocab: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub data: DataConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            optimizer: OptimizerConfig::default(),
            data: DataConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parse and validate; `origin` prefixes parse errors.
    pub fn from_toml_str(text: &str, origin: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text)
            .map_err(|e| Error::config(format!("{origin}: {}", e.message())))?;
        cfg.model.validate()?;
        if cfg.optimizer.warmup_steps == 0 {
            return Err(Error::config("optimizer.warmup_steps must be >= 1"));
        }
        if cfg.optimizer.peak_lr <= 0.0 {
            return Err(Error::config("optimizer.peak_lr must be positive"));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::config(format!("serialize config: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::Decay;

    fn load_str(text: &str) -> Result<RunConfig> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, text).unwrap();
        RunConfig::load(&path)
    }

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = load_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.optimizer.peak_lr, 7e-4);
        assert_eq!(cfg.optimizer.beta2, 0.98);
    }

    #[test]
    fn partial_override_keeps_other_defaults() {
        let cfg = load_str("[model]\nd = 32\n\n[optimizer]\npeak_lr = 2e-4\n").unwrap();
        assert_eq!(cfg.model.d, 32);
        assert_eq!(cfg.model.vocab_size, ModelConfig::default().vocab_size);
        assert_eq!(cfg.optimizer.peak_lr, 2e-4);
        assert_eq!(cfg.optimizer.warmup_steps, 4000);
    }

    #[test]
    fn misspelled_key_is_rejected_by_name() {
        let err = load_str("[optimizer]\nleraning_rate = 1e-3\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("leraning_rate"), "{err}");
    }

    #[test]
    fn unknown_section_is_rejected() {
        assert!(load_str("[nonsense]\nx = 1\n").is_err());
    }

    #[test]
    fn invalid_model_shape_is_rejected() {
        let err = load_str("[model]\nd = 65\n").unwrap_err().to_string();
        assert!(err.contains("heads"), "{err}");
    }

    #[test]
    fn decay_and_site_parse_as_snake_case() {
        let cfg = load_str(
            "[model]\ninsertion_site = \"both\"\n\n[optimizer]\ndecay = \"inverse_sqrt\"\n",
        )
        .unwrap();
        assert_eq!(cfg.optimizer.decay, Decay::InverseSqrt);
        assert_eq!(
            cfg.model.insertion_site,
            crate::model::InsertionSite::Both
        );
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        let mut cfg = RunConfig::default();
        cfg.model.d = 48;
        cfg.optimizer.warmup_steps = 240;
        cfg.data.max_vocab = Some(5000);
        cfg.save(&path).unwrap();
        let back = RunConfig::load(&path).unwrap();
        assert_eq!(back, cfg);
    }
}
