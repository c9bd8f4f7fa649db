//! Acceptance suite: one pass/fail line per criterion, exit code 0 only if
//! every criterion holds. Oracles (unrolled recurrences, exhaustive search,
//! brute-force metrics) are implemented here, independent of the library
//! code paths they check.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use s5vh::bench::{self, BenchConfig};
use s5vh::centers::{center_objective, cosine_matrix, generate_hash_centers, AdmmOptions};
use s5vh::config::RunConfig;
use s5vh::hashing::{pack_code, CodeDatabase};
use s5vh::manifest::{DatasetManifest, VideoFeatures};
use s5vh::pipeline;
use s5vh::retrieval::{self, EvalInputs};
use s5vh::rng::StreamRng;
use s5vh::scalar::Scalar;
use s5vh::ssm::selective_scan;
use s5vh::synth::SynthOptions;
use s5vh::tensor::{io, Tensor};
use s5vh::training::Trainer;

type Outcome = Result<String, String>;

struct Context {
    base: PathBuf,
    work_dir: PathBuf,
    train_manifest: PathBuf,
    database_manifest: PathBuf,
    query_manifest: PathBuf,
    labels: BTreeMap<String, i64>,
    train_videos: Vec<VideoFeatures>,
    query_videos: Vec<VideoFeatures>,
    pseudo_labels: Vec<usize>,
    centers_f32: Vec<f32>,
    num_centers: usize,
}

impl Context {
    /// Generate the synthetic corpus once (5 classes, 500 videos, 16 frames,
    /// 32 dims, seed 7) and run the cluster + centers stages shared by the
    /// end-to-end criteria.
    fn prepare(base: &Path) -> Result<Context, String> {
        let data_dir = base.join("data");
        let summary = pipeline::run_synth(
            &data_dir,
            &SynthOptions {
                classes: 5,
                videos: 500,
                frames: 16,
                dim: 32,
                seed: 7,
                ..Default::default()
            },
        )
        .map_err(|e| format!("synth failed: {e}"))?;
        let work_dir = base.join("work");
        pipeline::run_cluster(&summary.train_manifest, 5, 7, &work_dir)
            .map_err(|e| format!("cluster failed: {e}"))?;
        pipeline::run_centers(&work_dir, 16, 7, &work_dir, &AdmmOptions::default())
            .map_err(|e| format!("centers failed: {e}"))?;

        let train = DatasetManifest::load(&summary.train_manifest).map_err(|e| e.to_string())?;
        let query = DatasetManifest::load(&summary.query_manifest).map_err(|e| e.to_string())?;
        let train_videos = train.load_features(&data_dir).map_err(|e| e.to_string())?;
        let query_videos = query.load_features(&data_dir).map_err(|e| e.to_string())?;
        let mut labels = train.labels();
        labels.extend(query.labels());

        let assignments: BTreeMap<String, usize> = serde_json::from_str(
            &std::fs::read_to_string(work_dir.join("assignments.json")).map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        let pseudo_labels = train_videos
            .iter()
            .map(|v| assignments[&v.id])
            .collect::<Vec<_>>();
        let (phi, shape) =
            io::read_tensor::<f64>(&work_dir.join("centers.s5vt")).map_err(|e| e.to_string())?;
        let centers_f32: Vec<f32> = phi.iter().map(|&v| v as f32).collect();
        Ok(Context {
            base: base.to_path_buf(),
            work_dir,
            train_manifest: summary.train_manifest,
            database_manifest: summary.database_manifest,
            query_manifest: summary.query_manifest,
            labels,
            train_videos,
            query_videos,
            pseudo_labels,
            centers_f32,
            num_centers: shape[0],
        })
    }
}

fn check_runtime(elapsed: Duration, budget: Duration) -> Result<(), String> {
    if elapsed > budget {
        Err(format!(
            "runtime {:.1}s exceeded the {:.0}s budget",
            elapsed.as_secs_f64(),
            budget.as_secs_f64()
        ))
    } else {
        Ok(())
    }
}

// ── A1: scan equals the unrolled recurrence ─────────────────────────

/// Independent oracle: the recurrence unrolled step by step with the direct
/// discretization formulas.
fn oracle_scan<S: Scalar>(
    u: &[S],
    delta: &[S],
    a: &[S],
    b: &[S],
    c: &[S],
    t_len: usize,
    channels: usize,
    state: usize,
) -> Vec<S> {
    let mut hidden = vec![S::ZERO; channels * state];
    let mut out = vec![S::ZERO; t_len * channels];
    for t in 0..t_len {
        for ch in 0..channels {
            let dt = delta[t * channels + ch];
            let mut acc = S::ZERO;
            for n in 0..state {
                let idx = ch * state + n;
                let a_bar = (dt * a[idx]).exp();
                let b_bar = ((dt * a[idx]).exp() - S::ONE) / a[idx] * b[t * state + n];
                hidden[idx] = a_bar * hidden[idx] + b_bar * u[t * channels + ch];
                acc += c[t * state + n] * hidden[idx];
            }
            out[t * channels + ch] = acc;
        }
    }
    out
}

fn a1_scan_oracle(_ctx: &Context) -> Outcome {
    let start = Instant::now();
    let mut rng = StreamRng::new(101, "a1");
    let mut worst32 = 0.0f64;
    let mut worst64 = 0.0f64;
    for trial in 0..100 {
        let t_len = 1 + rng.below(256);
        let channels = 1 + rng.below(3);
        let state = 1 + rng.below(8);
        let u: Vec<f64> = (0..t_len * channels).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let delta: Vec<f64> = (0..t_len * channels).map(|_| rng.uniform(5e-3, 0.25)).collect();
        let a: Vec<f64> = (0..channels * state).map(|_| rng.uniform(-2.5, -0.2)).collect();
        let b: Vec<f64> = (0..t_len * state).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let c: Vec<f64> = (0..t_len * state).map(|_| rng.uniform(-1.0, 1.0)).collect();

        let y64 = selective_scan(
            &Tensor::constant(u.clone(), vec![t_len, channels]).unwrap(),
            &Tensor::constant(delta.clone(), vec![t_len, channels]).unwrap(),
            &Tensor::constant(a.clone(), vec![channels, state]).unwrap(),
            &Tensor::constant(b.clone(), vec![t_len, state]).unwrap(),
            &Tensor::constant(c.clone(), vec![t_len, state]).unwrap(),
        )
        .map_err(|e| format!("trial {trial}: {e}"))?;
        let oracle64 = oracle_scan(&u, &delta, &a, &b, &c, t_len, channels, state);
        for (got, want) in y64.data().iter().zip(&oracle64) {
            worst64 = worst64.max((got - want).abs() / want.abs().max(1.0));
        }

        let cast = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<f32>>();
        let (u32v, d32, a32, b32, c32) = (cast(&u), cast(&delta), cast(&a), cast(&b), cast(&c));
        let y32 = selective_scan(
            &Tensor::constant(u32v.clone(), vec![t_len, channels]).unwrap(),
            &Tensor::constant(d32.clone(), vec![t_len, channels]).unwrap(),
            &Tensor::constant(a32.clone(), vec![channels, state]).unwrap(),
            &Tensor::constant(b32.clone(), vec![t_len, state]).unwrap(),
            &Tensor::constant(c32.clone(), vec![t_len, state]).unwrap(),
        )
        .map_err(|e| format!("trial {trial}: {e}"))?;
        let oracle32 = oracle_scan(&u32v, &d32, &a32, &b32, &c32, t_len, channels, state);
        for (got, want) in y32.data().iter().zip(&oracle32) {
            worst32 = worst32.max(((got - want).abs() / want.abs().max(1.0)) as f64);
        }
    }
    let elapsed = start.elapsed();
    check_runtime(elapsed, Duration::from_secs(30))?;
    if worst32 > 1e-6 {
        return Err(format!("32-bit worst relative error {worst32:.3e} > 1e-6"));
    }
    if worst64 > 1e-10 {
        return Err(format!("64-bit worst relative error {worst64:.3e} > 1e-10"));
    }
    Ok(format!(
        "100 configs, lengths <= 256: worst rel error {worst32:.2e} (f32), {worst64:.2e} (f64)"
    ))
}

// ── A2: gradient suite ──────────────────────────────────────────────

fn a2_gradient_suite(_ctx: &Context) -> Outcome {
    let start = Instant::now();
    let results = s5vh::verify::run_all(7).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check_runtime(elapsed, Duration::from_secs(120))?;
    let worst = results
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .unwrap();
    if worst.max_rel_error > 1e-4 {
        return Err(format!(
            "{} has max relative error {:.3e} > 1e-4",
            worst.name, worst.max_rel_error
        ));
    }
    Ok(format!(
        "{} checks (primitives, losses, full 2-video objective); worst {} at {:.2e}",
        results.len(),
        worst.name,
        worst.max_rel_error
    ))
}

// ── A3: exhaustive center optimum ───────────────────────────────────

fn exhaustive_center_optimum(w: &[f64], num_centers: usize, code_bits: usize) -> f64 {
    let n = num_centers * code_bits;
    assert!(n <= 20);
    let mut best = f64::INFINITY;
    for mask in 0u32..(1u32 << n) {
        let phi: Vec<f64> = (0..n)
            .map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 })
            .collect();
        best = best.min(center_objective(&phi, w, num_centers, code_bits));
    }
    best
}

fn a3_admm_exhaustive(_ctx: &Context) -> Outcome {
    let start = Instant::now();
    let (num_centers, code_bits) = (3, 4);
    let mut hits = 0;
    let mut details = Vec::new();
    for seed in 0..10u64 {
        // Clustered instance: two group directions plus per-centroid noise.
        let mut rng = StreamRng::new(seed, "a3-instance");
        let dim = 6;
        let groups: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..dim).map(|_| rng.normal()).collect())
            .collect();
        let mut centroids = Vec::with_capacity(num_centers * dim);
        for i in 0..num_centers {
            let group = &groups[i % 2];
            for j in 0..dim {
                centroids.push(group[j] + 0.3 * rng.normal());
            }
        }
        let w = cosine_matrix(&centroids, num_centers, dim).map_err(|e| e.to_string())?;
        let out = generate_hash_centers(&w, num_centers, code_bits, seed, &AdmmOptions::default())
            .map_err(|e| e.to_string())?;
        let optimum = exhaustive_center_optimum(&w, num_centers, code_bits);
        if out.report.objective_final > out.report.objective_init_binarized + 1e-9 {
            return Err(format!(
                "seed {seed}: final objective {:.4} worse than binarized init {:.4}",
                out.report.objective_final, out.report.objective_init_binarized
            ));
        }
        let within = out.report.objective_final <= 1.05 * optimum + 1e-9;
        if within {
            hits += 1;
        }
        details.push(format!(
            "seed {seed}: {:.3} vs optimum {:.3}{}",
            out.report.objective_final,
            optimum,
            if within { "" } else { " (miss)" }
        ));
    }
    let elapsed = start.elapsed();
    check_runtime(elapsed, Duration::from_secs(60))?;
    if hits < 8 {
        return Err(format!(
            "only {hits}/10 seeds within 5% of the exhaustive optimum: {}",
            details.join("; ")
        ));
    }
    Ok(format!(
        "{hits}/10 seeds within 5% of the exhaustive optimum, none worse than its initialization"
    ))
}

// ── A4: center structure ────────────────────────────────────────────

fn row_hamming(phi: &[f64], code_bits: usize, i: usize, j: usize) -> usize {
    (0..code_bits)
        .filter(|&k| phi[i * code_bits + k] != phi[j * code_bits + k])
        .count()
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    cov / (vx.sqrt() * vy.sqrt()).max(1e-30)
}

fn a4_center_structure(_ctx: &Context) -> Outcome {
    // Orthogonal similarity: centers must separate.
    let (num_centers, code_bits) = (4usize, 16usize);
    let mut identity = vec![0.0; num_centers * num_centers];
    for i in 0..num_centers {
        identity[i * num_centers + i] = 1.0;
    }
    let out = generate_hash_centers(&identity, num_centers, code_bits, 7, &AdmmOptions::default())
        .map_err(|e| e.to_string())?;
    let mut min_hamming = code_bits;
    for i in 0..num_centers {
        for j in (i + 1)..num_centers {
            min_hamming = min_hamming.min(row_hamming(&out.phi, code_bits, i, j));
        }
    }
    if min_hamming < code_bits / 4 {
        return Err(format!(
            "identity similarity: min pairwise Hamming {min_hamming} < {}",
            code_bits / 4
        ));
    }

    // Two-block similarity: code similarities must track it.
    let blocks = 8usize;
    let mut w = vec![0.0; blocks * blocks];
    for i in 0..blocks {
        for j in 0..blocks {
            w[i * blocks + j] = if i == j {
                1.0
            } else if (i < 4) == (j < 4) {
                0.9
            } else {
                0.0
            };
        }
    }
    let out = generate_hash_centers(&w, blocks, code_bits, 7, &AdmmOptions::default())
        .map_err(|e| e.to_string())?;
    let mut sims = Vec::new();
    let mut targets = Vec::new();
    for i in 0..blocks {
        for j in 0..blocks {
            if i != j {
                let dot: f64 = (0..code_bits)
                    .map(|k| out.phi[i * code_bits + k] * out.phi[j * code_bits + k])
                    .sum();
                sims.push(dot / code_bits as f64);
                targets.push(w[i * blocks + j]);
            }
        }
    }
    let correlation = pearson(&sims, &targets);
    if correlation < 0.8 {
        return Err(format!(
            "two-block similarity: Pearson correlation {correlation:.3} < 0.8"
        ));
    }
    Ok(format!(
        "identity W: min pairwise Hamming {min_hamming} >= {}; block W: Pearson {correlation:.3}",
        code_bits / 4
    ))
}

// ── A5: end-to-end synthetic retrieval ──────────────────────────────

fn a5_run_config() -> RunConfig {
    RunConfig {
        seed: 7,
        code_bits: 16,
        num_centers: 5,
        mask_ratio: 0.5,
        tau: 0.5,
        alpha: 1.0,
        beta: 1.0,
        batch_size: 128,
        max_epochs: 100,
        patience: 5,
        lr_max: 5e-4,
        lr_min: 1e-5,
        improvement_threshold: 1e-4,
        weight_decay: 0.01,
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

fn random_code_database(ids: &[String], code_bits: usize, rng: &mut StreamRng) -> CodeDatabase {
    let mut db = CodeDatabase::new(code_bits);
    for id in ids {
        let code: Vec<f32> = (0..code_bits)
            .map(|_| if rng.next_f64() < 0.5 { -1.0 } else { 1.0 })
            .collect();
        db.push(id.clone(), &code).unwrap();
    }
    db
}

fn a5_end_to_end(ctx: &Context) -> Outcome {
    let start = Instant::now();
    let out_dir = ctx.base.join("a5-train");
    let summary = pipeline::run_train(&ctx.train_manifest, &ctx.work_dir, &a5_run_config(), &out_dir)
        .map_err(|e| e.to_string())?;
    let codes_db = ctx.base.join("a5-codes-db");
    let codes_q = ctx.base.join("a5-codes-q");
    pipeline::run_encode(&ctx.database_manifest, &out_dir.join("checkpoint"), &codes_db)
        .map_err(|e| e.to_string())?;
    pipeline::run_encode(&ctx.query_manifest, &out_dir.join("checkpoint"), &codes_q)
        .map_err(|e| e.to_string())?;
    let report = pipeline::run_eval(
        &codes_q,
        &codes_db,
        &ctx.base.join("data/labels.json"),
        &ctx.base.join("a5-metrics.json"),
    )
    .map_err(|e| e.to_string())?;
    let map5 = report.map_at[&5];

    // Random ±1 codes over the same ids and labels give the floor.
    let mut rng = StreamRng::new(991, "a5-random-baseline");
    let queries = CodeDatabase::load(&codes_q).map_err(|e| e.to_string())?;
    let database = CodeDatabase::load(&codes_db).map_err(|e| e.to_string())?;
    let random_q = random_code_database(&queries.ids, 16, &mut rng);
    let random_db = random_code_database(&database.ids, 16, &mut rng);
    let random_map5 = retrieval::map_at_n(
        &EvalInputs {
            queries: &random_q,
            database: &random_db,
            labels: &ctx.labels,
        },
        5,
    )
    .map_err(|e| e.to_string())?;

    let elapsed = start.elapsed();
    check_runtime(elapsed, Duration::from_secs(600))?;
    if map5 < 0.85 {
        return Err(format!("mAP@5 {map5:.4} < 0.85"));
    }
    // Hard floor: 3x the class-prior random baseline (5 balanced classes
    // -> 0.2). The measured random-code mAP@5 runs higher than the prior
    // under the relevant-within-top-N normalizer and is reported alongside;
    // the model must also beat it outright.
    if map5 < 3.0 * 0.2 {
        return Err(format!("mAP@5 {map5:.4} < 0.6 (3x the class-prior baseline)"));
    }
    if map5 <= random_map5 {
        return Err(format!(
            "mAP@5 {map5:.4} does not beat measured random codes at {random_map5:.4}"
        ));
    }
    Ok(format!(
        "mAP@5 {map5:.4} (measured random-code baseline {random_map5:.4}), {} epochs, {:.0}s",
        summary.epochs_run,
        elapsed.as_secs_f64()
    ))
}

// ── A6: center alignment speeds and does not hurt convergence ───────

fn a6_run_config(seed: u64) -> RunConfig {
    RunConfig {
        seed,
        max_epochs: 30,
        patience: 30,
        d_encoder: 32,
        encoder_layers: 1,
        d_decoder: 24,
        ..a5_run_config()
    }
}

fn map5_of_current_model(trainer: &Trainer, ctx: &Context) -> Result<f64, String> {
    let params = trainer.model.lift(None).map_err(|e| e.to_string())?;
    let encode = |videos: &[VideoFeatures]| -> Result<CodeDatabase, String> {
        let mut db = CodeDatabase::new(trainer.model.config.code_bits);
        for v in videos {
            let features = Tensor::constant(v.data.clone(), vec![v.n_frames, v.dim])
                .map_err(|e| e.to_string())?;
            let code = trainer
                .model
                .encode_video(&params, &features)
                .map_err(|e| e.to_string())?;
            db.push(v.id.clone(), &code).map_err(|e| e.to_string())?;
        }
        Ok(db)
    };
    let queries = encode(&ctx.query_videos)?;
    let database = encode(&ctx.train_videos)?;
    retrieval::map_at_n(
        &EvalInputs {
            queries: &queries,
            database: &database,
            labels: &ctx.labels,
        },
        5,
    )
    .map_err(|e| e.to_string())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values[values.len() / 2]
}

fn a6_ablation(ctx: &Context) -> Outcome {
    let epochs = 30usize;
    let mut epochs_to_target = [Vec::new(), Vec::new()]; // [with, without]
    let mut final_maps = [Vec::new(), Vec::new()];
    for seed in [7u64, 8, 9] {
        for (slot, with_center_alignment) in [(0usize, true), (1usize, false)] {
            let mut trainer = Trainer::new(
                a6_run_config(seed),
                ctx.train_videos.clone(),
                ctx.pseudo_labels.clone(),
                ctx.centers_f32.clone(),
                ctx.num_centers,
            )
            .map_err(|e| e.to_string())?;
            if !with_center_alignment {
                trainer.weights.beta = 0.0;
            }
            let mut trace = Vec::with_capacity(epochs);
            for epoch in 0..epochs {
                trainer.run_epoch(epoch).map_err(|e| e.to_string())?;
                trace.push(map5_of_current_model(&trainer, ctx)?);
            }
            let final_map = *trace.last().unwrap();
            let target = 0.8 * final_map;
            let reach = trace
                .iter()
                .position(|&m| m >= target)
                .map(|i| i + 1)
                .unwrap_or(epochs) as f64;
            epochs_to_target[slot].push(reach);
            final_maps[slot].push(final_map);
        }
    }
    let with_epochs = median(&mut epochs_to_target[0].clone());
    let without_epochs = median(&mut epochs_to_target[1].clone());
    let with_final = median(&mut final_maps[0].clone());
    let without_final = median(&mut final_maps[1].clone());
    if with_epochs > without_epochs {
        return Err(format!(
            "median epochs to 0.8 x final mAP: {with_epochs} with center alignment vs {without_epochs} without"
        ));
    }
    if with_final < without_final - 0.01 {
        return Err(format!(
            "median final mAP@5 {with_final:.4} with center alignment vs {without_final:.4} without"
        ));
    }
    Ok(format!(
        "median epochs-to-0.8·final: {with_epochs} (with) vs {without_epochs} (without); median final mAP@5: {with_final:.4} vs {without_final:.4}"
    ))
}

// ── A7: scaling laws ────────────────────────────────────────────────

fn a7_linear_scaling(_ctx: &Context) -> Outcome {
    let report = bench::run(&BenchConfig::default()).map_err(|e| e.to_string())?;
    let scan = &report.scan;
    // Longer sequences cannot afford larger batches under one byte budget.
    for pair in scan.measurements.windows(2) {
        if pair[1].max_batch > pair[0].max_batch {
            return Err(format!(
                "max batch grew from {} at L={} to {} at L={}",
                pair[0].max_batch, pair[0].length, pair[1].max_batch, pair[1].length
            ));
        }
    }
    if scan.linear.r_squared < 0.98 {
        return Err(format!(
            "scan encoder: linear fit R^2 {:.4} < 0.98",
            scan.linear.r_squared
        ));
    }
    if scan.quadratic_share_at_max > 0.15 {
        return Err(format!(
            "scan encoder: quadratic term contributes {:.3} > 0.15 at the longest length",
            scan.quadratic_share_at_max
        ));
    }
    let reference = &report.reference;
    if reference.quadratic_share_at_max < 0.5 {
        return Err(format!(
            "quadratic reference: quadratic term contributes {:.3} < 0.5 (fitter sanity check)",
            reference.quadratic_share_at_max
        ));
    }
    Ok(format!(
        "scan: linear R^2 {:.4}, quadratic share {:.3}; reference: quadratic share {:.3}",
        scan.linear.r_squared, scan.quadratic_share_at_max, reference.quadratic_share_at_max
    ))
}

// ── A8: metric oracles ──────────────────────────────────────────────

fn naive_rank(query: &[f32], database: &[Vec<f32>]) -> Vec<usize> {
    let mut order: Vec<(usize, usize)> = database
        .iter()
        .enumerate()
        .map(|(i, code)| {
            let dist = query
                .iter()
                .zip(code)
                .filter(|(a, b)| (**a >= 0.0) != (**b >= 0.0))
                .count();
            (dist, i)
        })
        .collect();
    order.sort();
    order.into_iter().map(|(_, i)| i).collect()
}

fn naive_ap(relevance: &[bool], n: usize) -> f64 {
    let top = relevance.len().min(n);
    let rel = relevance[..top].iter().filter(|&&r| r).count();
    if rel == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for pos in 0..top {
        if relevance[pos] {
            let hits = relevance[..=pos].iter().filter(|&&r| r).count();
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    sum / rel as f64
}

fn a8_metric_oracles(_ctx: &Context) -> Outcome {
    // Worked example first.
    let ap = retrieval::ap_at_n(&[true, false, true], 3);
    if (ap - 5.0 / 6.0).abs() > 1e-15 {
        return Err(format!("AP worked example: {ap} != 5/6"));
    }

    let mut rng = StreamRng::new(808, "a8");
    let mut worst = 0.0f64;
    for instance in 0..50 {
        let code_bits = 4 + rng.below(21);
        let n_db = 10 + rng.below(191); // <= 200
        let n_q = 1 + rng.below(6);
        let draw_code = |rng: &mut StreamRng| -> Vec<f32> {
            (0..code_bits)
                .map(|_| if rng.next_f64() < 0.5 { -1.0 } else { 1.0 })
                .collect()
        };
        let db_codes: Vec<Vec<f32>> = (0..n_db).map(|_| draw_code(&mut rng)).collect();
        let q_codes: Vec<Vec<f32>> = (0..n_q).map(|_| draw_code(&mut rng)).collect();
        let mut database = CodeDatabase::new(code_bits);
        let mut labels = BTreeMap::new();
        for (i, code) in db_codes.iter().enumerate() {
            database.push(format!("d{i}"), code).unwrap();
            labels.insert(format!("d{i}"), rng.below(3) as i64);
        }
        let mut queries = CodeDatabase::new(code_bits);
        for (i, code) in q_codes.iter().enumerate() {
            queries.push(format!("q{i}"), code).unwrap();
            labels.insert(format!("q{i}"), rng.below(3) as i64);
        }
        let report = retrieval::evaluate(&EvalInputs {
            queries: &queries,
            database: &database,
            labels: &labels,
        })
        .map_err(|e| e.to_string())?;

        // Brute-force mAP at every cut-off.
        let mut naive_maps = Vec::new();
        for &n in retrieval::MAP_CUTOFFS.iter() {
            let mut total = 0.0;
            for (qi, q_code) in q_codes.iter().enumerate() {
                let q_label = labels[&format!("q{qi}")];
                let order = naive_rank(q_code, &db_codes);
                let relevance: Vec<bool> = order
                    .iter()
                    .map(|&i| labels[&format!("d{i}")] == q_label)
                    .collect();
                total += naive_ap(&relevance, n);
            }
            let value = total / n_q as f64;
            naive_maps.push(value);
            worst = worst.max((report.map_at[&n] - value).abs());
        }
        let naive_gmap = naive_maps.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max((report.gmap - naive_gmap).abs());

        // Brute-force PR at every radius, micro-averaged the same way.
        let mut total_relevant = 0u64;
        let mut relevant_within = vec![0u64; code_bits + 1];
        let mut retrieved_within = vec![0u64; code_bits + 1];
        for (qi, q_code) in q_codes.iter().enumerate() {
            let q_label = labels[&format!("q{qi}")];
            for (di, d_code) in db_codes.iter().enumerate() {
                let dist = q_code
                    .iter()
                    .zip(d_code)
                    .filter(|(a, b)| (**a >= 0.0) != (**b >= 0.0))
                    .count();
                let relevant = labels[&format!("d{di}")] == q_label;
                if relevant {
                    total_relevant += 1;
                }
                for (radius, slot) in retrieved_within.iter_mut().enumerate() {
                    if dist <= radius {
                        *slot += 1;
                        if relevant {
                            relevant_within[radius] += 1;
                        }
                    }
                }
            }
        }
        for radius in 0..=code_bits {
            let precision = if retrieved_within[radius] == 0 {
                1.0
            } else {
                relevant_within[radius] as f64 / retrieved_within[radius] as f64
            };
            let recall = if total_relevant == 0 {
                0.0
            } else {
                relevant_within[radius] as f64 / total_relevant as f64
            };
            worst = worst.max((report.pr_curve[radius].0 - precision).abs());
            worst = worst.max((report.pr_curve[radius].1 - recall).abs());
        }
        if worst > 1e-12 {
            return Err(format!(
                "instance {instance}: metric disagrees with the brute-force oracle by {worst:.3e}"
            ));
        }
    }
    Ok(format!(
        "AP worked example = 5/6; 50 random instances match brute force within {worst:.1e}"
    ))
}

// ── A9: determinism ─────────────────────────────────────────────────

fn files_equal(a: &Path, b: &Path) -> Result<bool, String> {
    let left = std::fs::read(a).map_err(|e| format!("{}: {e}", a.display()))?;
    let right = std::fs::read(b).map_err(|e| format!("{}: {e}", b.display()))?;
    Ok(left == right)
}

fn a9_determinism(ctx: &Context) -> Outcome {
    // Small corpus for the train half.
    let data_dir = ctx.base.join("a9-data");
    let summary = pipeline::run_synth(
        &data_dir,
        &SynthOptions {
            classes: 3,
            videos: 60,
            frames: 8,
            dim: 16,
            seed: 11,
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let config = RunConfig {
        seed: 11,
        num_centers: 3,
        max_epochs: 4,
        batch_size: 32,
        d_encoder: 24,
        encoder_layers: 1,
        d_decoder: 16,
        decoder_layers: 1,
        state_size: 4,
        ..a5_run_config()
    };

    let mut compared = 0;
    for stage in ["first", "second"] {
        let work = ctx.base.join(format!("a9-work-{stage}"));
        pipeline::run_cluster(&summary.train_manifest, 3, 11, &work).map_err(|e| e.to_string())?;
        pipeline::run_centers(&work, 16, 11, &work, &AdmmOptions::default())
            .map_err(|e| e.to_string())?;
        let train_out = ctx.base.join(format!("a9-train-{stage}"));
        pipeline::run_train(&summary.train_manifest, &work, &config, &train_out)
            .map_err(|e| e.to_string())?;
    }
    let first_work = ctx.base.join("a9-work-first");
    let second_work = ctx.base.join("a9-work-second");
    for name in [
        "centroids.s5vt",
        "similarity.s5vt",
        "assignments.json",
        "centers.s5vt",
        "centers_report.json",
    ] {
        if !files_equal(&first_work.join(name), &second_work.join(name))? {
            return Err(format!("centers stage output `{name}` differs between runs"));
        }
        compared += 1;
    }
    let first_train = ctx.base.join("a9-train-first");
    let second_train = ctx.base.join("a9-train-second");
    for name in ["train_log.csv", "config_resolved.json", "train_summary.json"] {
        if !files_equal(&first_train.join(name), &second_train.join(name))? {
            return Err(format!("train output `{name}` differs between runs"));
        }
        compared += 1;
    }
    let index =
        std::fs::read_dir(first_train.join("checkpoint")).map_err(|e| e.to_string())?;
    for entry in index {
        let entry = entry.map_err(|e| e.to_string())?;
        let name = entry.file_name();
        if !files_equal(
            &first_train.join("checkpoint").join(&name),
            &second_train.join("checkpoint").join(&name),
        )? {
            return Err(format!(
                "checkpoint file `{}` differs between runs",
                name.to_string_lossy()
            ));
        }
        compared += 1;
    }
    Ok(format!(
        "{compared} output files byte-identical across repeated centers and strict train runs"
    ))
}

// ── A10: format round trips ─────────────────────────────────────────

fn a10_format_round_trips(ctx: &Context) -> Outcome {
    let dir = ctx.base.join("a10");
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let mut rng = StreamRng::new(1010, "a10");
    let shapes: Vec<Vec<usize>> = vec![vec![1], vec![7], vec![3, 5], vec![2, 3, 4], vec![2, 1, 3, 2]];
    for (i, shape) in shapes.iter().enumerate() {
        let n: usize = shape.iter().product();
        let data32: Vec<f32> = (0..n).map(|_| rng.uniform(-1e6, 1e6) as f32).collect();
        let path = dir.join(format!("t32_{i}.s5vt"));
        io::write_tensor(&path, &data32, shape).map_err(|e| e.to_string())?;
        let (back, bshape) = io::read_tensor::<f32>(&path).map_err(|e| e.to_string())?;
        if bshape != *shape
            || back.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
                != data32.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        {
            return Err(format!("f32 tensor round trip failed for shape {shape:?}"));
        }
        let data64: Vec<f64> = (0..n).map(|_| rng.uniform(-1e12, 1e12)).collect();
        let path = dir.join(format!("t64_{i}.s5vt"));
        io::write_tensor(&path, &data64, shape).map_err(|e| e.to_string())?;
        let (back, _) = io::read_tensor::<f64>(&path).map_err(|e| e.to_string())?;
        if back.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            != data64.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        {
            return Err(format!("f64 tensor round trip failed for shape {shape:?}"));
        }
    }

    for code_bits in [1usize, 5, 8, 13, 16, 31, 64] {
        let mut db = CodeDatabase::new(code_bits);
        let rows = 1 + rng.below(20);
        let mut originals = Vec::new();
        for r in 0..rows {
            let code: Vec<f32> = (0..code_bits)
                .map(|_| if rng.next_f64() < 0.5 { -1.0 } else { 1.0 })
                .collect();
            db.push(format!("row{r}"), &code).unwrap();
            originals.push(code);
        }
        let code_dir = dir.join(format!("codes-{code_bits}"));
        db.save(&code_dir).map_err(|e| e.to_string())?;
        let loaded = CodeDatabase::load(&code_dir).map_err(|e| e.to_string())?;
        if loaded != db {
            return Err(format!("packed codes of {code_bits} bits differ after reload"));
        }
        for (r, original) in originals.iter().enumerate() {
            if &loaded.row_unpacked(r) != original {
                return Err(format!(
                    "packed codes of {code_bits} bits: row {r} decodes differently"
                ));
            }
        }
        // Cross-check the packed Hamming path against sign agreement.
        if rows >= 2 {
            let arithmetic: u32 = originals[0]
                .iter()
                .zip(&originals[1])
                .filter(|(a, b)| (**a >= 0.0) != (**b >= 0.0))
                .count() as u32;
            let packed =
                retrieval::hamming_distance(&pack_code(&originals[0]), &pack_code(&originals[1]));
            if arithmetic != packed {
                return Err(format!(
                    "packed Hamming {packed} != arithmetic {arithmetic} at {code_bits} bits"
                ));
            }
        }
    }
    Ok("tensor files (f32/f64, ranks 1-4) and packed codes (K = 1..64, incl. K % 8 != 0) round-trip bit-exactly".to_string())
}

// ── Driver ──────────────────────────────────────────────────────────

fn main() {
    let base = std::env::temp_dir().join("s5vh-acceptance");
    let _ = std::fs::remove_dir_all(&base);
    std::fs::create_dir_all(&base).expect("create acceptance work dir");
    println!("acceptance work dir: {}", base.display());

    let prepare_start = Instant::now();
    let ctx = match Context::prepare(&base) {
        Ok(ctx) => ctx,
        Err(detail) => {
            eprintln!("setup failed: {detail}");
            std::process::exit(2);
        }
    };
    println!(
        "shared corpus + cluster + centers prepared in {:.1}s",
        prepare_start.elapsed().as_secs_f64()
    );

    let criteria: Vec<(&str, fn(&Context) -> Outcome)> = vec![
        ("A1 selective scan matches the unrolled recurrence oracle", a1_scan_oracle),
        ("A2 gradient suite (primitives, losses, full model) at 1e-4", a2_gradient_suite),
        ("A3 center generation within 5% of the exhaustive optimum", a3_admm_exhaustive),
        ("A4 center separation and semantic consistency", a4_center_structure),
        ("A5 end-to-end synthetic retrieval reaches mAP@5 >= 0.85", a5_end_to_end),
        ("A6 center alignment converges no slower and no worse", a6_ablation),
        ("A7 encode time scales linearly; quadratic reference detected", a7_linear_scaling),
        ("A8 retrieval metrics match brute-force oracles", a8_metric_oracles),
        ("A9 centers and strict-mode training are byte-deterministic", a9_determinism),
        ("A10 tensor and packed-code formats round-trip bit-exactly", a10_format_round_trips),
    ];

    let mut failures = 0;
    for (title, run) in criteria {
        let start = Instant::now();
        match run(&ctx) {
            Ok(detail) => println!(
                "[PASS] {title} — {detail} [{:.1}s]",
                start.elapsed().as_secs_f64()
            ),
            Err(detail) => {
                failures += 1;
                println!(
                    "[FAIL] {title} — {detail} [{:.1}s]",
                    start.elapsed().as_secs_f64()
                );
            }
        }
    }
    if failures > 0 {
        println!("{failures} criterion(s) failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
