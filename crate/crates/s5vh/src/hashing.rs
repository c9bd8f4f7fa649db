//! Hash layer and the packed binary code format.
//!
//! Frame embeddings map through a linear layer and tanh to per-frame soft
//! codes in (-1, +1); the video code is the sign of their temporal mean,
//! with the gradient passed straight through the sign. Encoded databases
//! persist as a packed bitmap (bit = 1 means +1) with a JSON sidecar mapping
//! rows to video ids.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::params::{Lifted, ParamId, ParamStore};
use crate::rng::StreamRng;
use crate::scalar::Scalar;
use crate::tensor::{ops, Tensor};

/// Whether the video code keeps the exact sign values (straight-through
/// gradient) or stays at the soft mean, which has the identical backward
/// pass and a smooth forward for finite-difference verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binarize {
    SignSte,
    Identity,
}

/// Linear + tanh hash head over encoder embeddings.
pub struct HashLayer {
    weight: ParamId,
    bias: ParamId,
    pub code_bits: usize,
    pub input_dim: usize,
}

impl HashLayer {
    pub fn init<S: Scalar>(
        store: &mut ParamStore<S>,
        rng: &mut StreamRng,
        prefix: &str,
        input_dim: usize,
        code_bits: usize,
    ) -> HashLayer {
        let bound = 1.0 / (input_dim as f64).sqrt();
        let weight = store.add(
            format!("{prefix}.weight"),
            vec![input_dim, code_bits],
            (0..input_dim * code_bits)
                .map(|_| S::from_f64(rng.uniform(-bound, bound)))
                .collect(),
        );
        let bias = store.add(
            format!("{prefix}.bias"),
            vec![code_bits],
            (0..code_bits)
                .map(|_| S::from_f64(rng.uniform(-bound, bound)))
                .collect(),
        );
        HashLayer {
            weight,
            bias,
            code_bits,
            input_dim,
        }
    }

    /// Per-frame soft hash vectors: tanh(linear(E)), shape [T, K].
    pub fn frame_hash<S: Scalar>(&self, p: &Lifted<S>, embeddings: &Tensor<S>) -> Result<Tensor<S>> {
        if embeddings.rank() != 2 || embeddings.cols() != self.input_dim {
            return Err(Error::shape(
                "frame_hash",
                format!(
                    "expected [T, {}], got {:?}",
                    self.input_dim,
                    embeddings.shape()
                ),
            ));
        }
        let projected = ops::add_row_broadcast(
            &ops::matmul(embeddings, p.get(self.weight))?,
            p.get(self.bias),
        )?;
        Ok(ops::tanh(&projected))
    }
}

/// Video-level code: sign of the temporal mean of frame soft codes
/// (sign(0) = +1). Under `Binarize::Identity` the mean is returned as-is;
/// both variants share the exact same backward pass.
pub fn video_hash<S: Scalar>(frame_codes: &Tensor<S>, mode: Binarize) -> Result<Tensor<S>> {
    if frame_codes.rank() != 2 || frame_codes.rows() == 0 {
        return Err(Error::shape(
            "video_hash",
            format!("expected non-empty [T, K], got {:?}", frame_codes.shape()),
        ));
    }
    let mean = ops::mean_over_axis(frame_codes, 0)?;
    match mode {
        Binarize::SignSte => Ok(ops::sign_ste(&mean)),
        Binarize::Identity => Ok(mean),
    }
}

// ── Packed code bitmap ──────────────────────────────────────────────

/// Pack a ±1 code into bytes, bit = 1 for +1, little-endian bit order
/// within each byte.
pub fn pack_code<S: Scalar>(code: &[S]) -> Vec<u8> {
    let mut bytes = vec![0u8; code.len().div_ceil(8)];
    for (i, &v) in code.iter().enumerate() {
        if v >= S::ZERO {
            bytes[i / 8] |= 1 << (i % 8);
        }
    }
    bytes
}

pub fn unpack_code(bytes: &[u8], bits: usize) -> Vec<f32> {
    (0..bits)
        .map(|i| {
            if bytes[i / 8] >> (i % 8) & 1 == 1 {
                1.0
            } else {
                -1.0
            }
        })
        .collect()
}

/// A set of packed binary codes with row ids.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeDatabase {
    pub code_bits: usize,
    packed: Vec<u8>,
    pub ids: Vec<String>,
}

impl CodeDatabase {
    pub fn new(code_bits: usize) -> CodeDatabase {
        CodeDatabase {
            code_bits,
            packed: Vec::new(),
            ids: Vec::new(),
        }
    }

    pub fn stride(&self) -> usize {
        self.code_bits.div_ceil(8)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn push<S: Scalar>(&mut self, id: impl Into<String>, code: &[S]) -> Result<()> {
        if code.len() != self.code_bits {
            return Err(Error::shape(
                "code_database",
                format!("code of {} bits, expected {}", code.len(), self.code_bits),
            ));
        }
        self.packed.extend_from_slice(&pack_code(code));
        self.ids.push(id.into());
        Ok(())
    }

    pub fn row(&self, index: usize) -> &[u8] {
        let s = self.stride();
        &self.packed[index * s..(index + 1) * s]
    }

    pub fn row_unpacked(&self, index: usize) -> Vec<f32> {
        unpack_code(self.row(index), self.code_bits)
    }

    /// Write `codes.bin` (header: num_items u64, K u16, then packed rows)
    /// plus an `ids.json` sidecar into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        let bin_path = dir.join("codes.bin");
        let mut bytes = Vec::with_capacity(10 + self.packed.len());
        bytes.extend_from_slice(&(self.len() as u64).to_le_bytes());
        bytes.extend_from_slice(&(self.code_bits as u16).to_le_bytes());
        bytes.extend_from_slice(&self.packed);
        fs::File::create(&bin_path)
            .and_then(|mut f| f.write_all(&bytes))
            .map_err(|e| Error::io(bin_path.display().to_string(), e))?;
        let ids_path = dir.join("ids.json");
        let json = serde_json::to_string_pretty(&serde_json::json!({ "rows": self.ids }))
            .map_err(|e| Error::json(ids_path.display().to_string(), e))?;
        fs::write(&ids_path, json).map_err(|e| Error::io(ids_path.display().to_string(), e))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<CodeDatabase> {
        let bin_path = dir.join("codes.bin");
        let mut bytes = Vec::new();
        fs::File::open(&bin_path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(bin_path.display().to_string(), e))?;
        if bytes.len() < 10 {
            return Err(Error::Format {
                path: bin_path.display().to_string(),
                detail: "truncated header".to_string(),
            });
        }
        let num_items = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
        let code_bits = u16::from_le_bytes(bytes[8..10].try_into().unwrap()) as usize;
        let stride = code_bits.div_ceil(8);
        if bytes.len() != 10 + num_items * stride {
            return Err(Error::Format {
                path: bin_path.display().to_string(),
                detail: format!(
                    "expected {} payload bytes for {num_items} items of {code_bits} bits, found {}",
                    num_items * stride,
                    bytes.len() - 10
                ),
            });
        }
        let ids_path = dir.join("ids.json");
        let sidecar: serde_json::Value = serde_json::from_str(
            &fs::read_to_string(&ids_path).map_err(|e| Error::io(ids_path.display().to_string(), e))?,
        )
        .map_err(|e| Error::json(ids_path.display().to_string(), e))?;
        let ids: Vec<String> = sidecar["rows"]
            .as_array()
            .ok_or_else(|| Error::Format {
                path: ids_path.display().to_string(),
                detail: "missing rows array".to_string(),
            })?
            .iter()
            .map(|v| v.as_str().unwrap_or_default().to_string())
            .collect();
        if ids.len() != num_items {
            return Err(Error::Format {
                path: ids_path.display().to_string(),
                detail: format!("{} ids for {num_items} items", ids.len()),
            });
        }
        Ok(CodeDatabase {
            code_bits,
            packed: bytes[10..].to_vec(),
            ids,
        })
    }
}
