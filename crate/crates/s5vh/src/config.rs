//! Run configuration: one JSON document covering training hyperparameters
//! and model dimensions. Every field has a default; the resolved document is
//! persisted verbatim next to training outputs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::model::ModelConfig;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Code length K.
    pub code_bits: usize,
    /// Number of semantic centers N_c.
    pub num_centers: usize,
    /// Fraction of frames masked per view.
    pub mask_ratio: f64,
    pub tau: f64,
    pub alpha: f64,
    pub beta: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    /// Minimum epoch-loss improvement that resets early-stopping patience.
    pub improvement_threshold: f64,
    pub weight_decay: f64,
    pub d_encoder: usize,
    pub encoder_layers: usize,
    pub d_decoder: usize,
    pub decoder_layers: usize,
    pub state_size: usize,
    pub conv_width: usize,
    pub expand: usize,
    pub residual: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            code_bits: 16,
            num_centers: 100,
            mask_ratio: 0.5,
            tau: 0.5,
            alpha: 1.0,
            beta: 1.0,
            batch_size: 128,
            max_epochs: 350,
            patience: 5,
            lr_max: 5e-4,
            lr_min: 1e-5,
            improvement_threshold: 1e-4,
            weight_decay: 0.01,
            d_encoder: 256,
            encoder_layers: 6,
            d_decoder: 192,
            decoder_layers: 1,
            state_size: 16,
            conv_width: 4,
            expand: 2,
            residual: true,
        }
    }
}

impl RunConfig {
    /// Small-model defaults for desk-scale synthetic corpora.
    pub fn desk_scale() -> RunConfig {
        RunConfig {
            num_centers: 5,
            max_epochs: 100,
            d_encoder: 48,
            encoder_layers: 2,
            d_decoder: 32,
            state_size: 8,
            ..Default::default()
        }
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let config: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::json(path.display().to_string(), e))?;
        std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mask_ratio > 0.0 && self.mask_ratio < 1.0) {
            return Err(Error::Config(format!(
                "mask_ratio {} outside (0, 1)",
                self.mask_ratio
            )));
        }
        if !(self.lr_max > self.lr_min && self.lr_min > 0.0) {
            return Err(Error::Config(format!(
                "need lr_max > lr_min > 0, got {} and {}",
                self.lr_max, self.lr_min
            )));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be >= 1".to_string()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "batch_size and max_epochs must be positive".to_string(),
            ));
        }
        self.loss_weights().validate()?;
        self.model_config(1).validate()
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            alpha: self.alpha,
            beta: self.beta,
            tau: self.tau,
        }
    }

    pub fn model_config(&self, feature_dim: usize) -> ModelConfig {
        ModelConfig {
            feature_dim,
            code_bits: self.code_bits,
            d_encoder: self.d_encoder,
            encoder_layers: self.encoder_layers,
            d_decoder: self.d_decoder,
            decoder_layers: self.decoder_layers,
            state_size: self.state_size,
            conv_width: self.conv_width,
            expand: self.expand,
            residual: self.residual,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let config = RunConfig::default();
        config.validate().unwrap();
        let path = std::env::temp_dir().join("s5vh-config-test.json");
        config.save(&path).unwrap();
        assert_eq!(RunConfig::load(&path).unwrap(), config);
    }

    #[test]
    fn partial_document_fills_defaults() {
        let path = std::env::temp_dir().join("s5vh-config-partial.json");
        std::fs::write(&path, r#"{"code_bits": 32, "seed": 3}"#).unwrap();
        let config = RunConfig::load(&path).unwrap();
        assert_eq!(config.code_bits, 32);
        assert_eq!(config.seed, 3);
        assert_eq!(config.batch_size, RunConfig::default().batch_size);
    }

    #[test]
    fn unknown_fields_and_bad_values_rejected() {
        let path = std::env::temp_dir().join("s5vh-config-bad.json");
        std::fs::write(&path, r#"{"code_bitz": 32}"#).unwrap();
        assert!(RunConfig::load(&path).is_err());
        std::fs::write(&path, r#"{"mask_ratio": 1.5}"#).unwrap();
        assert!(RunConfig::load(&path).is_err());
        std::fs::write(&path, r#"{"lr_max": 1e-6}"#).unwrap();
        assert!(RunConfig::load(&path).is_err());
    }
}
