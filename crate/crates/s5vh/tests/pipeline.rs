//! Integration tests over the pipeline stages and their file contracts.

use std::path::PathBuf;

use s5vh::centers::AdmmOptions;
use s5vh::config::RunConfig;
use s5vh::hashing::CodeDatabase;
use s5vh::manifest::{DatasetManifest, VideoEntry};
use s5vh::pipeline;
use s5vh::synth::SynthOptions;
use s5vh::tensor::io;

fn fresh_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("s5vh-it-{tag}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn tiny_synth(dir: &std::path::Path) -> s5vh::synth::SynthSummary {
    pipeline::run_synth(
        dir,
        &SynthOptions {
            classes: 3,
            videos: 36,
            frames: 8,
            dim: 12,
            seed: 5,
            ..Default::default()
        },
    )
    .unwrap()
}

fn tiny_config() -> RunConfig {
    RunConfig {
        seed: 5,
        num_centers: 3,
        batch_size: 16,
        max_epochs: 8,
        d_encoder: 16,
        encoder_layers: 1,
        d_decoder: 12,
        decoder_layers: 1,
        state_size: 4,
        ..RunConfig::default()
    }
}

#[test]
fn full_pipeline_produces_metrics() {
    let base = fresh_dir("full");
    let summary = tiny_synth(&base.join("data"));
    let work = base.join("work");
    pipeline::run_cluster(&summary.train_manifest, 3, 5, &work).unwrap();
    pipeline::run_centers(&work, 16, 5, &work, &AdmmOptions::default()).unwrap();
    let train_out = base.join("train");
    let train =
        pipeline::run_train(&summary.train_manifest, &work, &tiny_config(), &train_out).unwrap();
    assert!(train.epochs_run >= 1);

    let codes_db = base.join("codes-db");
    let codes_q = base.join("codes-q");
    let encoded =
        pipeline::run_encode(&summary.database_manifest, &train_out.join("checkpoint"), &codes_db)
            .unwrap();
    assert_eq!(encoded, summary.num_database);
    pipeline::run_encode(&summary.query_manifest, &train_out.join("checkpoint"), &codes_q).unwrap();

    let metrics_path = base.join("metrics.json");
    let report =
        pipeline::run_eval(&codes_q, &codes_db, &summary.labels_path, &metrics_path).unwrap();
    assert_eq!(report.num_queries, summary.num_query);
    assert!(report.gmap > 0.0);
    assert!(metrics_path.exists());
    assert!(metrics_path.parent().unwrap().join("pr_curve.csv").exists());

    // The training outputs carry the documented files.
    for name in ["train_log.csv", "config_resolved.json", "train_summary.json"] {
        assert!(train_out.join(name).exists(), "{name} missing");
    }
    let log = std::fs::read_to_string(train_out.join("train_log.csv")).unwrap();
    assert!(log.starts_with("epoch,step,l_tr,l_cl,l_ca,total,lr\n"));

    // The inference checkpoint reloads and reproduces codes.
    let db = CodeDatabase::load(&codes_db).unwrap();
    assert_eq!(db.code_bits, 16);
    assert_eq!(db.len(), summary.num_database);
}

#[test]
fn encode_rejects_dimension_mismatch_naming_the_video() {
    let base = fresh_dir("encode-mismatch");
    let summary = tiny_synth(&base.join("data"));
    let work = base.join("work");
    pipeline::run_cluster(&summary.train_manifest, 3, 5, &work).unwrap();
    pipeline::run_centers(&work, 16, 5, &work, &AdmmOptions::default()).unwrap();
    let train_out = base.join("train");
    let mut config = tiny_config();
    config.max_epochs = 1;
    pipeline::run_train(&summary.train_manifest, &work, &config, &train_out).unwrap();

    // A manifest whose features have the wrong dimension.
    let other = fresh_dir("encode-mismatch-other");
    io::write_tensor::<f32>(&other.join("v.s5vt"), &[0.0; 8 * 6], &[8, 6]).unwrap();
    let manifest = DatasetManifest {
        split: "database".to_string(),
        videos: vec![VideoEntry {
            id: "odd-video".to_string(),
            path: "v.s5vt".to_string(),
            n_frames: 8,
            dim: 6,
            label: None,
        }],
    };
    let manifest_path = other.join("manifest.json");
    manifest.save(&manifest_path).unwrap();
    let err = pipeline::run_encode(&manifest_path, &train_out.join("checkpoint"), &other.join("c"))
        .unwrap_err();
    assert!(err.to_string().contains("odd-video"), "{err}");
}

#[test]
fn train_requires_assignments_for_every_video() {
    let base = fresh_dir("train-missing-assignment");
    let summary = tiny_synth(&base.join("data"));
    let work = base.join("work");
    pipeline::run_cluster(&summary.train_manifest, 3, 5, &work).unwrap();
    pipeline::run_centers(&work, 16, 5, &work, &AdmmOptions::default()).unwrap();
    // Drop one entry from assignments.json.
    let path = work.join("assignments.json");
    let mut assignments: std::collections::BTreeMap<String, usize> =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let dropped = assignments.keys().next().unwrap().clone();
    assignments.remove(&dropped);
    std::fs::write(&path, serde_json::to_string(&assignments).unwrap()).unwrap();
    let err = pipeline::run_train(&summary.train_manifest, &work, &tiny_config(), &base.join("t"))
        .unwrap_err();
    assert!(err.to_string().contains(&dropped), "{err}");
}

#[test]
fn eval_rejects_code_width_mismatch() {
    let base = fresh_dir("eval-mismatch");
    let mut a = CodeDatabase::new(8);
    a.push("x", &[1.0f32; 8]).unwrap();
    a.save(&base.join("a")).unwrap();
    let mut b = CodeDatabase::new(16);
    b.push("y", &[-1.0f32; 16]).unwrap();
    b.save(&base.join("b")).unwrap();
    let labels = base.join("labels.json");
    std::fs::write(&labels, r#"{"x": 0, "y": 0}"#).unwrap();
    let err =
        pipeline::run_eval(&base.join("a"), &base.join("b"), &labels, &base.join("m.json"))
            .unwrap_err();
    assert!(err.to_string().contains("bits"), "{err}");
}

#[test]
fn checkpoint_meta_survives_for_reuse() {
    let base = fresh_dir("ckpt-meta");
    let summary = tiny_synth(&base.join("data"));
    let work = base.join("work");
    pipeline::run_cluster(&summary.train_manifest, 3, 5, &work).unwrap();
    pipeline::run_centers(&work, 16, 5, &work, &AdmmOptions::default()).unwrap();
    let mut config = tiny_config();
    config.max_epochs = 1;
    let train_out = base.join("train");
    pipeline::run_train(&summary.train_manifest, &work, &config, &train_out).unwrap();
    let (meta, tensors) = io::load_archive::<f32>(&train_out.join("checkpoint")).unwrap();
    assert_eq!(meta["model"]["code_bits"], 16);
    assert_eq!(meta["includes_decoder"], false);
    assert!(tensors.iter().any(|(name, _, _)| name.starts_with("encoder.")));
    assert!(tensors.iter().any(|(name, _, _)| name.starts_with("hash.")));
}
