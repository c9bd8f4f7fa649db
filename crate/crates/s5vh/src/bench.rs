//! Inference-efficiency bench: stress-tests the affordable batch size under
//! a memory budget, times per-sample encoding across sequence lengths, and
//! fits scaling laws of time versus length by least squares.
//!
//! The memory budget is checked against the allocator-tracked activation
//! byte estimate rather than device probing, which keeps the stress test
//! portable and deterministic. Absolute fitted coefficients are
//! hardware-bound; only the functional form (linear for the scan encoder,
//! quadratic for the pairwise reference) is meaningful across machines.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HashModel, ModelConfig};
use crate::rng::StreamRng;
use crate::tensor::{self, Tensor};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub lengths: Vec<usize>,
    pub feature_dim: usize,
    pub d_encoder: usize,
    pub encoder_layers: usize,
    pub state_size: usize,
    pub code_bits: usize,
    /// Cap on samples per timed run; per-sample time is wall time over the
    /// batch actually used.
    pub batch: usize,
    /// Each timed window is padded to at least this long by batching, so
    /// short sequences are not scheduler-noise dominated.
    pub min_window_ms: f64,
    pub repeats: usize,
    pub warmup: usize,
    /// Activation byte budget for the stress probe.
    pub budget_bytes: u64,
    /// Hard cap on the probed batch size.
    pub batch_cap: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            lengths: vec![32, 64, 128, 256, 512, 1024],
            feature_dim: 32,
            d_encoder: 32,
            encoder_layers: 1,
            state_size: 8,
            code_bits: 16,
            batch: 512,
            min_window_ms: 50.0,
            repeats: 11,
            warmup: 3,
            budget_bytes: 256 * 1024 * 1024,
            batch_cap: 4096,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearFit {
    pub b: f64,
    pub c: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LengthMeasurement {
    pub length: usize,
    pub median_ms_per_sample: f64,
    pub max_batch: usize,
    pub activation_bytes_per_sample: u64,
    /// All timed repeats, ms per sample, for external plotting.
    pub raw_ms_per_sample: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelBench {
    pub measurements: Vec<LengthMeasurement>,
    pub quadratic: QuadraticFit,
    pub linear: LinearFit,
    /// Share of the quadratic fit's prediction contributed by the a L^2
    /// term at the largest length.
    pub quadratic_share_at_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    /// The scan-based encoder.
    pub scan: ModelBench,
    /// Naive pairwise-mixing reference with genuinely quadratic work,
    /// included to sanity-check the fitter.
    pub reference: ModelBench,
}

// ── Least-squares fits ──────────────────────────────────────────────

fn solve3(mut m: [[f64; 4]; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        m.swap(col, pivot);
        if m[col][col].abs() < 1e-300 {
            return None;
        }
        let inv = 1.0 / m[col][col];
        for j in col..4 {
            m[col][j] *= inv;
        }
        for row in 0..3 {
            if row != col {
                let factor = m[row][col];
                for j in col..4 {
                    m[row][j] -= factor * m[col][j];
                }
            }
        }
    }
    Some([m[0][3], m[1][3], m[2][3]])
}

fn r_squared(points: &[(f64, f64)], predict: impl Fn(f64) -> f64) -> f64 {
    let n = points.len() as f64;
    let mean = points.iter().map(|p| p.1).sum::<f64>() / n;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - mean).powi(2)).sum();
    let ss_res: f64 = points.iter().map(|p| (p.1 - predict(p.0)).powi(2)).sum();
    if ss_tot < 1e-30 {
        if ss_res < 1e-30 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    }
}

/// Least-squares fit of `T = a L^2 + b L + c` via the normal equations.
pub fn fit_quadratic(points: &[(f64, f64)]) -> Result<QuadraticFit> {
    let distinct = {
        let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        xs.len()
    };
    if distinct < 4 {
        return Err(Error::invalid(
            "fit_scaling",
            format!("need at least 4 distinct lengths, got {distinct}"),
        ));
    }
    let mut s = [0.0f64; 5]; // sums of L^0..L^4
    let mut t = [0.0f64; 3]; // sums of T, T L, T L^2
    for &(l, y) in points {
        let mut p = 1.0;
        for sk in s.iter_mut() {
            *sk += p;
            p *= l;
        }
        t[0] += y;
        t[1] += y * l;
        t[2] += y * l * l;
    }
    // Unknowns ordered (c, b, a).
    let m = [
        [s[0], s[1], s[2], t[0]],
        [s[1], s[2], s[3], t[1]],
        [s[2], s[3], s[4], t[2]],
    ];
    let [c, b, a] =
        solve3(m).ok_or_else(|| Error::invalid("fit_scaling", "singular normal equations"))?;
    let r2 = r_squared(points, |l| a * l * l + b * l + c);
    Ok(QuadraticFit {
        a,
        b,
        c,
        r_squared: r2,
    })
}

/// Least-squares fit of `T = b L + c`.
pub fn fit_linear(points: &[(f64, f64)]) -> Result<LinearFit> {
    if points.len() < 2 {
        return Err(Error::invalid("fit_scaling", "need at least 2 points"));
    }
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return Err(Error::invalid("fit_scaling", "degenerate lengths"));
    }
    let b = (n * sxy - sx * sy) / denom;
    let c = (sy - b * sx) / n;
    let r2 = r_squared(points, |l| b * l + c);
    Ok(LinearFit { b, c, r_squared: r2 })
}

// ── Workloads ───────────────────────────────────────────────────────

fn bench_model_config(config: &BenchConfig) -> ModelConfig {
    ModelConfig {
        feature_dim: config.feature_dim,
        code_bits: config.code_bits,
        d_encoder: config.d_encoder,
        encoder_layers: config.encoder_layers,
        d_decoder: 16,
        decoder_layers: 1,
        state_size: config.state_size,
        conv_width: 4,
        expand: 2,
        residual: true,
    }
}

fn random_features(rng: &mut StreamRng, length: usize, dim: usize) -> Vec<f32> {
    (0..length * dim)
        .map(|_| rng.uniform(-1.0, 1.0) as f32)
        .collect()
}

/// Forward pass with genuinely quadratic cost in the sequence length: every
/// output step mixes all input steps with data-dependent pairwise weights.
pub fn quadratic_reference_forward(features: &[f32], length: usize, dim: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; length * dim];
    let inv_len = 1.0 / length as f32;
    for t in 0..length {
        let row_t = &features[t * dim..(t + 1) * dim];
        for s in 0..length {
            let row_s = &features[s * dim..(s + 1) * dim];
            let mut weight = 0.0f32;
            for (a, b) in row_t.iter().zip(row_s) {
                weight += a * b;
            }
            weight = (weight / dim as f32).tanh() * inv_len;
            let out_row = &mut out[t * dim..(t + 1) * dim];
            for (o, v) in out_row.iter_mut().zip(row_s) {
                *o += weight * v;
            }
        }
    }
    out
}

enum Workload<'a> {
    Scan {
        model: &'a HashModel<f32>,
        params: &'a crate::params::Lifted<f32>,
    },
    Reference,
}

impl Workload<'_> {
    fn run(&self, features: &[f32], length: usize, dim: usize) -> Result<f64> {
        match self {
            Workload::Scan { model, params } => {
                let input = Tensor::constant(features.to_vec(), vec![length, dim])?;
                let code = model.encode_video(params, &input)?;
                Ok(code[0] as f64)
            }
            Workload::Reference => {
                let out = quadratic_reference_forward(features, length, dim);
                Ok(out[0] as f64)
            }
        }
    }
}

/// Median per-sample wall time in milliseconds over `repeats` timed runs,
/// after `warmup` discarded runs. Returns (median, all repeats).
fn time_workload(
    workload: &Workload,
    features: &[f32],
    length: usize,
    dim: usize,
    batch: usize,
    repeats: usize,
    warmup: usize,
) -> Result<(f64, Vec<f64>)> {
    let mut sink = 0.0;
    for _ in 0..warmup {
        sink += workload.run(features, length, dim)?;
    }
    let mut samples = Vec::with_capacity(repeats.max(1));
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        for _ in 0..batch.max(1) {
            sink += workload.run(features, length, dim)?;
        }
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        samples.push(elapsed / batch.max(1) as f64);
    }
    std::hint::black_box(sink);
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    Ok((sorted[sorted.len() / 2], samples))
}

/// Batch size that pads one timed window to at least `min_window_ms`, from
/// a single untimed probe of the workload, clamped to `cap`.
fn window_batch(
    workload: &Workload,
    features: &[f32],
    length: usize,
    dim: usize,
    min_window_ms: f64,
    cap: usize,
) -> Result<usize> {
    if min_window_ms <= 0.0 {
        return Ok(cap.max(1));
    }
    let start = Instant::now();
    std::hint::black_box(workload.run(features, length, dim)?);
    let probe_ms = (start.elapsed().as_secs_f64() * 1e3).max(1e-6);
    Ok(((min_window_ms / probe_ms).ceil() as usize).clamp(1, cap.max(1)))
}

/// Largest multiple of 5 whose activation estimate fits the byte budget,
/// clamped to the configured cap. Zero when even a unit of 5 does not fit.
fn stress_batch(bytes_per_sample: u64, budget_bytes: u64, cap: usize) -> usize {
    if bytes_per_sample == 0 {
        return cap / 5 * 5;
    }
    if 5 * bytes_per_sample > budget_bytes {
        return 0;
    }
    let affordable = (budget_bytes / bytes_per_sample) as usize / 5 * 5;
    affordable.min(cap / 5 * 5)
}

fn bench_workload(
    workload: &Workload,
    config: &BenchConfig,
    measure_bytes: impl Fn(&[f32], usize) -> Result<u64>,
) -> Result<ModelBench> {
    let mut rng = StreamRng::new(config.seed, "bench-inputs");
    let dim = config.feature_dim;

    // Setup pass: inputs, activation estimates and window batches per
    // length. The probe runs double as warmup.
    struct Prepared {
        length: usize,
        features: Vec<f32>,
        bytes: u64,
        batch: usize,
        samples: Vec<f64>,
    }
    let mut prepared = Vec::with_capacity(config.lengths.len());
    for &length in &config.lengths {
        let features = random_features(&mut rng, length, dim);
        let bytes = measure_bytes(&features, length)?;
        for _ in 0..config.warmup {
            std::hint::black_box(workload.run(&features, length, dim)?);
        }
        let batch = window_batch(
            workload,
            &features,
            length,
            dim,
            config.min_window_ms,
            config.batch,
        )?;
        prepared.push(Prepared {
            length,
            features,
            bytes,
            batch,
            samples: Vec::with_capacity(config.repeats),
        });
    }

    // Timed repeats are interleaved round-robin across lengths so that any
    // slow drift of the machine spreads evenly instead of biasing the fit.
    for _ in 0..config.repeats.max(1) {
        for p in prepared.iter_mut() {
            let (per_sample, _) =
                time_workload(workload, &p.features, p.length, dim, p.batch, 1, 0)?;
            p.samples.push(per_sample);
        }
    }

    let mut measurements = Vec::with_capacity(prepared.len());
    for p in prepared {
        let mut sorted = p.samples.clone();
        sorted.sort_by(f64::total_cmp);
        measurements.push(LengthMeasurement {
            length: p.length,
            median_ms_per_sample: sorted[sorted.len() / 2],
            max_batch: stress_batch(p.bytes, config.budget_bytes, config.batch_cap),
            activation_bytes_per_sample: p.bytes,
            raw_ms_per_sample: p.samples,
        });
    }
    let points: Vec<(f64, f64)> = measurements
        .iter()
        .map(|m| (m.length as f64, m.median_ms_per_sample))
        .collect();
    let quadratic = fit_quadratic(&points)?;
    let linear = fit_linear(&points)?;
    let l_max = points.iter().map(|p| p.0).fold(0.0, f64::max);
    let predicted = quadratic.a * l_max * l_max + quadratic.b * l_max + quadratic.c;
    let quadratic_share_at_max = if predicted.abs() < 1e-30 {
        0.0
    } else {
        quadratic.a * l_max * l_max / predicted
    };
    Ok(ModelBench {
        measurements,
        quadratic,
        linear,
        quadratic_share_at_max,
    })
}

/// Run the full bench: the scan encoder and the quadratic reference.
pub fn run(config: &BenchConfig) -> Result<BenchReport> {
    if config.lengths.len() < 4 {
        return Err(Error::Config(
            "bench needs at least 4 sequence lengths".to_string(),
        ));
    }
    let model: HashModel<f32> = HashModel::new(bench_model_config(config), config.seed)?;
    let params = model.lift(None)?;

    let scan = bench_workload(
        &Workload::Scan {
            model: &model,
            params: &params,
        },
        config,
        |features, length| {
            tensor::reset_alloc_bytes();
            let input = Tensor::constant(features.to_vec(), vec![length, config.feature_dim])?;
            model.encode_video(&params, &input)?;
            Ok(tensor::alloc_bytes())
        },
    )?;
    let reference = bench_workload(&Workload::Reference, config, |_features, length| {
        // The reference materializes only its output buffer.
        Ok((length * config.feature_dim * std::mem::size_of::<f32>()) as u64)
    })?;
    Ok(BenchReport {
        config: config.clone(),
        scan,
        reference,
    })
}
