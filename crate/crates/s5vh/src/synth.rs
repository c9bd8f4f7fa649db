//! Synthetic labeled corpus generator for pipeline runs and benchmarks.
//!
//! Each class gets a Gaussian prototype in feature space; every video draws
//! per-frame Gaussian noise around its prototype plus a class-specific
//! linear drift over time, so the reconstruction task has real temporal
//! structure to exploit. Labels are kept in the manifests for evaluation
//! only and never enter training.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{DatasetManifest, VideoEntry};
use crate::rng::StreamRng;
use crate::tensor::io;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthOptions {
    pub classes: usize,
    pub videos: usize,
    pub frames: usize,
    pub dim: usize,
    pub seed: u64,
    /// Per-frame noise standard deviation.
    pub noise_sigma: f64,
    /// Total drift amplitude across the clip.
    pub drift_scale: f64,
    /// Fraction of videos held out as queries, stratified per class.
    pub query_fraction: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            classes: 5,
            videos: 500,
            frames: 16,
            dim: 32,
            seed: 7,
            noise_sigma: 0.3,
            drift_scale: 1.0,
            query_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSummary {
    pub train_manifest: PathBuf,
    pub database_manifest: PathBuf,
    pub query_manifest: PathBuf,
    pub labels_path: PathBuf,
    pub num_train: usize,
    pub num_database: usize,
    pub num_query: usize,
}

/// Generate the corpus under `out_dir`: per-video feature files, train /
/// database / query manifests (train and database share the same videos) and
/// a labels.json map.
pub fn generate(out_dir: &Path, opts: &SynthOptions) -> Result<SynthSummary> {
    if opts.classes == 0 || opts.videos < opts.classes || opts.frames == 0 || opts.dim == 0 {
        return Err(Error::Config(format!(
            "invalid synth options: {} classes, {} videos, {} frames, dim {}",
            opts.classes, opts.videos, opts.frames, opts.dim
        )));
    }
    if !(0.0..1.0).contains(&opts.query_fraction) {
        return Err(Error::Config(format!(
            "query_fraction {} outside [0, 1)",
            opts.query_fraction
        )));
    }
    let features_dir = out_dir.join("features");
    std::fs::create_dir_all(&features_dir)
        .map_err(|e| Error::io(features_dir.display().to_string(), e))?;

    let mut proto_rng = StreamRng::new(opts.seed, "synth-prototypes");
    let prototypes: Vec<Vec<f64>> = (0..opts.classes)
        .map(|_| (0..opts.dim).map(|_| proto_rng.normal()).collect())
        .collect();
    let drifts: Vec<Vec<f64>> = (0..opts.classes)
        .map(|_| {
            let raw: Vec<f64> = (0..opts.dim).map(|_| proto_rng.normal()).collect();
            let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            raw.into_iter().map(|v| v / norm).collect()
        })
        .collect();

    let noise_base = StreamRng::new(opts.seed, "synth-noise");
    let mut entries = Vec::with_capacity(opts.videos);
    for vid in 0..opts.videos {
        let class = vid % opts.classes;
        let mut rng = noise_base.substream(&[vid as u64]);
        let mut data = Vec::with_capacity(opts.frames * opts.dim);
        for t in 0..opts.frames {
            let phase = if opts.frames > 1 {
                t as f64 / (opts.frames - 1) as f64 - 0.5
            } else {
                0.0
            };
            for j in 0..opts.dim {
                let value = prototypes[class][j]
                    + opts.noise_sigma * rng.normal()
                    + opts.drift_scale * phase * drifts[class][j];
                data.push(value as f32);
            }
        }
        let id = format!("video{vid:04}");
        let file = format!("features/{id}.s5vt");
        io::write_tensor::<f32>(&out_dir.join(&file), &data, &[opts.frames, opts.dim])?;
        entries.push(VideoEntry {
            id,
            path: file,
            n_frames: opts.frames,
            dim: opts.dim,
            label: Some(class as i64),
        });
    }

    // Stratified split: the first per-class block of queries is held out;
    // the rest forms both the training corpus and the retrieval database.
    let query_per_class = ((opts.videos as f64 * opts.query_fraction) / opts.classes as f64)
        .round() as usize;
    let mut query = Vec::new();
    let mut database = Vec::new();
    let mut seen_per_class = vec![0usize; opts.classes];
    for (vid, entry) in entries.iter().enumerate() {
        let class = vid % opts.classes;
        if seen_per_class[class] < query_per_class {
            query.push(entry.clone());
        } else {
            database.push(entry.clone());
        }
        seen_per_class[class] += 1;
    }
    if database.is_empty() || query.is_empty() {
        return Err(Error::Config(
            "query fraction leaves an empty split".to_string(),
        ));
    }

    let write = |name: &str, split: &str, videos: Vec<VideoEntry>| -> Result<PathBuf> {
        let path = out_dir.join(name);
        DatasetManifest {
            split: split.to_string(),
            videos,
        }
        .save(&path)?;
        Ok(path)
    };
    let train_manifest = write("manifest_train.json", "train", database.clone())?;
    let database_manifest = write("manifest_database.json", "database", database.clone())?;
    let query_manifest = write("manifest_query.json", "query", query.clone())?;

    let labels: std::collections::BTreeMap<String, i64> = entries
        .iter()
        .map(|e| (e.id.clone(), e.label.unwrap()))
        .collect();
    let labels_path = out_dir.join("labels.json");
    let json = serde_json::to_string_pretty(&labels)
        .map_err(|e| Error::json(labels_path.display().to_string(), e))?;
    std::fs::write(&labels_path, json)
        .map_err(|e| Error::io(labels_path.display().to_string(), e))?;

    Ok(SynthSummary {
        train_manifest,
        database_manifest,
        query_manifest,
        labels_path,
        num_train: database.len(),
        num_database: database.len(),
        num_query: query.len(),
    })
}
