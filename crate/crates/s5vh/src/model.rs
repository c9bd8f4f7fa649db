//! The full hashing model: temporal encoder, hash head, and the
//! training-only decoder with its mask token.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::{Binarize, HashLayer};
use crate::params::{Lifted, ParamId, ParamStore};
use crate::rng::StreamRng;
use crate::scalar::Scalar;
use crate::ssm::{SequenceStack, SsmConfig};
use crate::tensor::{io, ops, Tape, Tensor};

/// Architecture hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelConfig {
    /// Frame feature dimension D.
    pub feature_dim: usize,
    /// Code length K.
    pub code_bits: usize,
    pub d_encoder: usize,
    pub encoder_layers: usize,
    pub d_decoder: usize,
    pub decoder_layers: usize,
    pub state_size: usize,
    pub conv_width: usize,
    pub expand: usize,
    /// Residual connection around each bidirectional layer.
    pub residual: bool,
}

impl ModelConfig {
    /// Full-scale defaults: 6 encoder layers at width 256, 1 decoder layer
    /// at width 192.
    pub fn full_scale(feature_dim: usize, code_bits: usize) -> ModelConfig {
        ModelConfig {
            feature_dim,
            code_bits,
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

    /// Small configuration for desk-scale corpora and tests.
    pub fn desk_scale(feature_dim: usize, code_bits: usize) -> ModelConfig {
        ModelConfig {
            feature_dim,
            code_bits,
            d_encoder: 48,
            encoder_layers: 2,
            d_decoder: 32,
            decoder_layers: 1,
            state_size: 8,
            conv_width: 4,
            expand: 2,
            residual: true,
        }
    }

    fn encoder_ssm(&self) -> SsmConfig {
        SsmConfig {
            d_model: self.d_encoder,
            state_size: self.state_size,
            conv_width: self.conv_width,
            expand: self.expand,
            dt_rank: self.d_encoder.div_ceil(16),
        }
    }

    fn decoder_ssm(&self) -> SsmConfig {
        SsmConfig {
            d_model: self.d_decoder,
            state_size: self.state_size,
            conv_width: self.conv_width,
            expand: self.expand,
            dt_rank: self.d_decoder.div_ceil(16),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("feature_dim", self.feature_dim),
            ("code_bits", self.code_bits),
            ("d_encoder", self.d_encoder),
            ("encoder_layers", self.encoder_layers),
            ("d_decoder", self.d_decoder),
            ("decoder_layers", self.decoder_layers),
            ("state_size", self.state_size),
            ("conv_width", self.conv_width),
            ("expand", self.expand),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Encoder + hash head (+ decoder and mask token during training).
pub struct HashModel<S: Scalar> {
    pub config: ModelConfig,
    pub store: ParamStore<S>,
    encoder: SequenceStack,
    hash: HashLayer,
    decoder: SequenceStack,
    mask_token: ParamId,
}

impl<S: Scalar> HashModel<S> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<HashModel<S>> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = StreamRng::new(seed, "init");
        let encoder = SequenceStack::init(
            &mut store,
            &mut rng,
            "encoder",
            config.feature_dim,
            config.encoder_ssm(),
            config.encoder_layers,
            config.residual,
            None,
        );
        let hash = HashLayer::init(&mut store, &mut rng, "hash", config.d_encoder, config.code_bits);
        let decoder = SequenceStack::init(
            &mut store,
            &mut rng,
            "decoder",
            config.code_bits,
            config.decoder_ssm(),
            config.decoder_layers,
            config.residual,
            Some(config.feature_dim),
        );
        let mask_token = store.add(
            "mask_token",
            vec![1, config.code_bits],
            (0..config.code_bits)
                .map(|_| S::from_f64(rng.normal() * 0.02))
                .collect(),
        );
        Ok(HashModel {
            config,
            store,
            encoder,
            hash,
            decoder,
            mask_token,
        })
    }

    /// Lift parameters onto a tape (training) or as constants (inference).
    pub fn lift(&self, tape: Option<&Tape<S>>) -> Result<Lifted<S>> {
        self.store.lift(tape)
    }

    /// Encoder + hash head over visible frames: [T_visible, D] -> [T_visible, K].
    pub fn frame_codes(&self, p: &Lifted<S>, visible_features: &Tensor<S>) -> Result<Tensor<S>> {
        let embeddings = self.encoder.forward(p, visible_features)?;
        self.hash.frame_hash(p, &embeddings)
    }

    /// Decoder over frame codes re-expanded to the full sequence with the
    /// mask token at masked positions: returns reconstructed features
    /// [total_frames, D].
    pub fn reconstruct(
        &self,
        p: &Lifted<S>,
        frame_codes: &Tensor<S>,
        visible_indices: &[usize],
        total_frames: usize,
    ) -> Result<Tensor<S>> {
        let decoder_input = ops::scatter_rows(
            frame_codes,
            visible_indices,
            total_frames,
            p.get(self.mask_token),
        )?;
        self.decoder.forward(p, &decoder_input)
    }

    /// Inference: binary code for one video's full feature sequence.
    pub fn encode_video(&self, p: &Lifted<S>, features: &Tensor<S>) -> Result<Vec<S>> {
        let codes = self.frame_codes(p, features)?;
        let video = crate::hashing::video_hash(&codes, Binarize::SignSte)?;
        Ok(video.data().to_vec())
    }

    // ── Checkpointing ───────────────────────────────────────────────

    /// Save parameters into a checkpoint archive. The inference export drops
    /// the decoder stack and mask token, which exist only for training.
    pub fn save_checkpoint(&self, dir: &Path, include_decoder: bool) -> Result<()> {
        let meta = serde_json::json!({
            "model": self.config,
            "includes_decoder": include_decoder,
        });
        let tensors: Vec<(String, Vec<usize>, Vec<S>)> = self
            .store
            .iter()
            .filter(|(name, _, _)| {
                include_decoder || !(name.starts_with("decoder.") || *name == "mask_token")
            })
            .map(|(name, shape, data)| (name.to_string(), shape.to_vec(), data.to_vec()))
            .collect();
        io::save_archive(dir, &meta, &tensors)
    }

    /// Rebuild a model from a checkpoint archive.
    ///
    /// Every parameter the archive claims to cover must be present: an
    /// inference checkpoint must provide the full encoder and hash head, a
    /// training checkpoint everything. Missing tensors are an error rather
    /// than silently left at their initialization.
    pub fn load_checkpoint(dir: &Path) -> Result<HashModel<S>> {
        let (meta, tensors) = io::load_archive::<S>(dir)?;
        let config: ModelConfig =
            serde_json::from_value(meta["model"].clone()).map_err(|e| {
                Error::Config(format!("invalid model config in checkpoint: {e}"))
            })?;
        let includes_decoder = meta["includes_decoder"].as_bool().unwrap_or(true);
        let mut model = HashModel::new(config, 0)?;
        model.store.load_named(&tensors)?;
        let provided: std::collections::BTreeSet<&str> =
            tensors.iter().map(|(name, _, _)| name.as_str()).collect();
        let missing: Vec<&str> = model
            .store
            .iter()
            .map(|(name, _, _)| name)
            .filter(|name| {
                let training_only = name.starts_with("decoder.") || *name == "mask_token";
                (includes_decoder || !training_only) && !provided.contains(name)
            })
            .collect();
        if !missing.is_empty() {
            return Err(Error::Config(format!(
                "checkpoint at {} is missing {} tensors (first: {})",
                dir.display(),
                missing.len(),
                missing[0]
            )));
        }
        Ok(model)
    }
}
