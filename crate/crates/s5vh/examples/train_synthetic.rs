//! End-to-end pipeline on a small synthetic corpus: generate data, cluster,
//! build hash centers, train, encode, and evaluate retrieval. Finishes in
//! well under a minute.
//!
//! ```bash
//! cargo run --release --example train_synthetic
//! ```

use s5vh::centers::AdmmOptions;
use s5vh::config::RunConfig;
use s5vh::pipeline;
use s5vh::synth::SynthOptions;

fn main() -> s5vh::Result<()> {
    let base = std::env::temp_dir().join("s5vh-example-train");
    let _ = std::fs::remove_dir_all(&base);

    let data = base.join("data");
    let summary = pipeline::run_synth(
        &data,
        &SynthOptions {
            classes: 3,
            videos: 90,
            frames: 12,
            dim: 24,
            seed: 7,
            ..Default::default()
        },
    )?;
    println!(
        "generated {} database/train videos and {} queries",
        summary.num_database, summary.num_query
    );

    let work = base.join("work");
    let cluster = pipeline::run_cluster(&summary.train_manifest, 3, 7, &work)?;
    println!(
        "k-means: {} videos -> {} centroids in {} iterations",
        cluster.num_videos, cluster.num_clusters, cluster.iterations
    );
    let report = pipeline::run_centers(&work, 16, 7, &work, &AdmmOptions::default())?;
    println!(
        "hash centers: objective {:.2} (from {:.2} at the binarized start)",
        report.objective_final, report.objective_init_binarized
    );

    let config = RunConfig {
        seed: 7,
        num_centers: 3,
        batch_size: 32,
        max_epochs: 25,
        d_encoder: 32,
        encoder_layers: 2,
        d_decoder: 24,
        state_size: 8,
        ..RunConfig::default()
    };
    let train_out = base.join("train");
    let train = pipeline::run_train(&summary.train_manifest, &work, &config, &train_out)?;
    println!(
        "trained {} epochs (best epoch {}, loss {:.4})",
        train.epochs_run, train.best_epoch, train.best_loss
    );

    let codes_db = base.join("codes-db");
    let codes_q = base.join("codes-q");
    pipeline::run_encode(&summary.database_manifest, &train_out.join("checkpoint"), &codes_db)?;
    pipeline::run_encode(&summary.query_manifest, &train_out.join("checkpoint"), &codes_q)?;
    let metrics = pipeline::run_eval(
        &codes_q,
        &codes_db,
        &summary.labels_path,
        &base.join("metrics.json"),
    )?;
    for (n, value) in &metrics.map_at {
        println!("mAP@{n}: {value:.4}");
    }
    println!("GmAP: {:.4}", metrics.gmap);
    println!("outputs under {}", base.display());
    Ok(())
}
