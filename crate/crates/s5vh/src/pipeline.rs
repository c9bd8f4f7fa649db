//! High-level pipeline stages behind the command-line interface. Each stage
//! reads and writes only the documented file formats (see FORMATS.md) and is
//! deterministic given its inputs and seed.

use std::collections::BTreeMap;
use std::path::Path;

use crate::bench::{self, BenchConfig, BenchReport};
use crate::centers::{self, AdmmOptions};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::hashing::CodeDatabase;
use crate::manifest::DatasetManifest;
use crate::model::HashModel;
use crate::retrieval::{self, EvalInputs, EvalReport};
use crate::synth::{self, SynthOptions, SynthSummary};
use crate::tensor::{io, Tensor};
use crate::training::{Trainer, TrainSummary};

fn manifest_dir(path: &Path) -> &Path {
    path.parent().unwrap_or_else(|| Path::new("."))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| Error::json(path.display().to_string(), e))?;
    std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

// ── synth ───────────────────────────────────────────────────────────

pub fn run_synth(out_dir: &Path, opts: &SynthOptions) -> Result<SynthSummary> {
    synth::generate(out_dir, opts)
}

// ── cluster ─────────────────────────────────────────────────────────

#[derive(Debug, serde::Serialize)]
pub struct ClusterSummary {
    pub num_videos: usize,
    pub num_clusters: usize,
    pub dim: usize,
    pub seed: u64,
    pub iterations: usize,
    pub final_objective: f64,
}

/// Cluster temporally averaged video features; writes centroids,
/// assignments, the cosine similarity matrix and a report into `out_dir`.
pub fn run_cluster(
    manifest_path: &Path,
    num_clusters: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<ClusterSummary> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let videos = manifest.load_features(manifest_dir(manifest_path))?;
    let dim = videos[0].dim;
    let mut averaged = Vec::with_capacity(videos.len() * dim);
    for video in &videos {
        for j in 0..dim {
            let mut acc = 0.0f64;
            for t in 0..video.n_frames {
                acc += video.data[t * dim + j] as f64;
            }
            averaged.push(acc / video.n_frames as f64);
        }
    }
    let clustering = centers::kmeans(&averaged, videos.len(), dim, num_clusters, seed)?;
    let similarity = centers::cosine_matrix(&clustering.centroids, num_clusters, dim)?;

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    io::write_tensor::<f64>(
        &out_dir.join("centroids.s5vt"),
        &clustering.centroids,
        &[num_clusters, dim],
    )?;
    io::write_tensor::<f64>(
        &out_dir.join("similarity.s5vt"),
        &similarity,
        &[num_clusters, num_clusters],
    )?;
    let assignments: BTreeMap<String, usize> = videos
        .iter()
        .zip(&clustering.assignments)
        .map(|(v, &a)| (v.id.clone(), a))
        .collect();
    write_json(&out_dir.join("assignments.json"), &assignments)?;
    let summary = ClusterSummary {
        num_videos: videos.len(),
        num_clusters,
        dim,
        seed,
        iterations: clustering.objective_trace.len(),
        final_objective: *clustering.objective_trace.last().unwrap_or(&0.0),
    };
    write_json(
        &out_dir.join("cluster_report.json"),
        &serde_json::json!({
            "num_videos": summary.num_videos,
            "num_clusters": summary.num_clusters,
            "dim": summary.dim,
            "seed": summary.seed,
            "objective_trace": clustering.objective_trace,
        }),
    )?;
    Ok(summary)
}

// ── centers ─────────────────────────────────────────────────────────

/// Transform the clustered similarity matrix into ±1 hash centers; writes
/// `centers.s5vt` and the optimization report into `out_dir`.
pub fn run_centers(
    cluster_dir: &Path,
    code_bits: usize,
    seed: u64,
    out_dir: &Path,
    opts: &AdmmOptions,
) -> Result<centers::CentersReport> {
    let (similarity, shape) = io::read_tensor::<f64>(&cluster_dir.join("similarity.s5vt"))?;
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(Error::Format {
            path: cluster_dir.join("similarity.s5vt").display().to_string(),
            detail: format!("similarity matrix must be square, got {shape:?}"),
        });
    }
    let num_centers = shape[0];
    let result = centers::generate_hash_centers(&similarity, num_centers, code_bits, seed, opts)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    io::write_tensor::<f64>(
        &out_dir.join("centers.s5vt"),
        &result.phi,
        &[num_centers, code_bits],
    )?;
    write_json(&out_dir.join("centers_report.json"), &result.report)?;
    Ok(result.report)
}

// ── train ───────────────────────────────────────────────────────────

/// Train on a manifest with precomputed centers and pseudo labels; writes
/// the best-epoch inference checkpoint, the step log and the resolved
/// config into `out_dir`.
pub fn run_train(
    manifest_path: &Path,
    centers_dir: &Path,
    config: &RunConfig,
    out_dir: &Path,
) -> Result<TrainSummary> {
    let manifest = DatasetManifest::load(manifest_path)?;
    manifest.uniform_shape()?;
    let videos = manifest.load_features(manifest_dir(manifest_path))?;

    let (phi, shape) = io::read_tensor::<f64>(&centers_dir.join("centers.s5vt"))?;
    if shape.len() != 2 || shape[1] != config.code_bits {
        return Err(Error::Config(format!(
            "centers of shape {shape:?} do not match code_bits {}",
            config.code_bits
        )));
    }
    let num_centers = shape[0];
    let assignments: BTreeMap<String, usize> = read_json(&centers_dir.join("assignments.json"))?;
    let pseudo_labels: Vec<usize> = videos
        .iter()
        .map(|v| {
            assignments.get(&v.id).copied().ok_or_else(|| {
                Error::Manifest(format!("video `{}` has no cluster assignment", v.id))
            })
        })
        .collect::<Result<_>>()?;
    let centers_f32: Vec<f32> = phi.iter().map(|&v| v as f32).collect();

    let feature_dim = videos[0].dim;
    let num_videos = videos.len();
    let mut trainer = Trainer::new(
        config.clone(),
        videos,
        pseudo_labels,
        centers_f32,
        num_centers,
    )?;
    let summary = trainer.train()?;

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    trainer
        .model
        .save_checkpoint(&out_dir.join("checkpoint"), false)?;
    trainer.write_log(out_dir)?;
    write_json(
        &out_dir.join("config_resolved.json"),
        &serde_json::json!({
            "config": config,
            "feature_dim": feature_dim,
            "num_centers": num_centers,
            "num_train_videos": num_videos,
            "early_stop": {
                "monitor": "epoch_mean_total_loss",
                "improvement_threshold": config.improvement_threshold,
                "patience": config.patience,
            },
            "deterministic_single_threaded": true,
        }),
    )?;
    write_json(&out_dir.join("train_summary.json"), &summary)?;
    Ok(summary)
}

// ── encode ──────────────────────────────────────────────────────────

/// Encode every video in the manifest into packed binary codes.
pub fn run_encode(manifest_path: &Path, checkpoint_dir: &Path, out_dir: &Path) -> Result<usize> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let videos = manifest.load_features(manifest_dir(manifest_path))?;
    let model: HashModel<f32> = HashModel::load_checkpoint(checkpoint_dir)?;
    let params = model.lift(None)?;
    let mut db = CodeDatabase::new(model.config.code_bits);
    for video in &videos {
        if video.dim != model.config.feature_dim {
            return Err(Error::Manifest(format!(
                "video `{}` has dim {}, checkpoint expects {}",
                video.id, video.dim, model.config.feature_dim
            )));
        }
        let features = Tensor::constant(video.data.clone(), vec![video.n_frames, video.dim])?;
        let code = model.encode_video(&params, &features)?;
        db.push(video.id.clone(), &code)?;
    }
    db.save(out_dir)?;
    Ok(db.len())
}

// ── eval ────────────────────────────────────────────────────────────

/// Evaluate query codes against a database; writes `metrics.json` and
/// `pr_curve.csv` into the output file's directory.
pub fn run_eval(
    queries_dir: &Path,
    database_dir: &Path,
    labels_path: &Path,
    out_path: &Path,
) -> Result<EvalReport> {
    let queries = CodeDatabase::load(queries_dir)?;
    let database = CodeDatabase::load(database_dir)?;
    let labels: BTreeMap<String, i64> = read_json(labels_path)?;
    let report = retrieval::evaluate(&EvalInputs {
        queries: &queries,
        database: &database,
        labels: &labels,
    })?;
    if let Some(parent) = out_path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
    }
    write_json(out_path, &report)?;
    let pr_path = out_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join("pr_curve.csv");
    let mut csv = String::from("radius,precision,recall\n");
    for (radius, (precision, recall)) in report.pr_curve.iter().enumerate() {
        csv.push_str(&format!("{radius},{precision},{recall}\n"));
    }
    std::fs::write(&pr_path, csv).map_err(|e| Error::io(pr_path.display().to_string(), e))?;
    Ok(report)
}

// ── bench ───────────────────────────────────────────────────────────

pub fn run_bench(config: &BenchConfig, out_path: &Path) -> Result<BenchReport> {
    let report = bench::run(config)?;
    if let Some(parent) = out_path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
    }
    write_json(out_path, &report)?;
    Ok(report)
}
