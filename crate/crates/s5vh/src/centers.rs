//! Global semantic structure extraction and binary hash-center generation.
//!
//! Temporally averaged video features are clustered with k-means; the
//! cluster cosine-similarity matrix is then transformed into well-separated,
//! semantically consistent ±1 hash centers by minimizing
//! `|Phi Phi^T - K W|_F^2 + 1/2 sum_ij phi_i^T phi_j` over binary matrices.
//! The binary constraint is split box-and-sphere style and solved by ADMM:
//! the relaxed subproblem runs L-BFGS, the box variable is a clamp
//! projection, the sphere variable is a Frobenius rescaling, and the duals
//! ascend on the constraint residuals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lbfgs::{self, LbfgsOptions};
use crate::rng::StreamRng;
use crate::tensor::raw;

// ── k-means ─────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct Centroids {
    /// Row-major [num_clusters, dim].
    pub centroids: Vec<f64>,
    pub num_clusters: usize,
    pub dim: usize,
    /// Nearest-centroid index per input point.
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squares per Lloyd iteration.
    pub objective_trace: Vec<f64>,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Index of the nearest centroid in Euclidean distance, ties broken toward
/// the smallest index.
pub fn assign_pseudo_label(feature: &[f64], centroids: &[f64], num_clusters: usize) -> usize {
    let dim = feature.len();
    let mut best = 0;
    let mut best_dist = squared_distance(feature, &centroids[0..dim]);
    for c in 1..num_clusters {
        let dist = squared_distance(feature, &centroids[c * dim..(c + 1) * dim]);
        if dist < best_dist {
            best_dist = dist;
            best = c;
        }
    }
    best
}

/// Lloyd's k-means with k-means++ seeding.
///
/// Runs at most `max_iters` iterations or until the relative objective
/// change drops below 1e-4; empty clusters are reseeded to the point
/// farthest from its assigned centroid.
pub fn kmeans(
    features: &[f64],
    num_points: usize,
    dim: usize,
    num_clusters: usize,
    seed: u64,
) -> Result<Centroids> {
    if num_clusters < 2 {
        return Err(Error::invalid("kmeans", "need at least 2 clusters"));
    }
    if num_points < num_clusters {
        return Err(Error::invalid(
            "kmeans",
            format!("{num_points} points for {num_clusters} clusters"),
        ));
    }
    if features.len() != num_points * dim {
        return Err(Error::shape(
            "kmeans",
            format!("{} values for {num_points}x{dim}", features.len()),
        ));
    }
    let point = |i: usize| &features[i * dim..(i + 1) * dim];
    let mut rng = StreamRng::new(seed, "kmeans");

    // k-means++ seeding.
    let mut centroids = vec![0.0; num_clusters * dim];
    let first = rng.below(num_points);
    centroids[0..dim].copy_from_slice(point(first));
    let mut min_dist: Vec<f64> = (0..num_points)
        .map(|i| squared_distance(point(i), &centroids[0..dim]))
        .collect();
    for c in 1..num_clusters {
        let total: f64 = min_dist.iter().sum();
        let chosen = if total <= 0.0 {
            rng.below(num_points)
        } else {
            let mut target = rng.next_f64() * total;
            let mut pick = num_points - 1;
            for (i, &d) in min_dist.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        };
        centroids[c * dim..(c + 1) * dim].copy_from_slice(point(chosen));
        for i in 0..num_points {
            let d = squared_distance(point(i), &centroids[c * dim..(c + 1) * dim]);
            if d < min_dist[i] {
                min_dist[i] = d;
            }
        }
    }

    let mut assignments = vec![0usize; num_points];
    let mut objective_trace = Vec::new();
    let max_iters = 100;
    for _ in 0..max_iters {
        // Assignment step.
        let mut objective = 0.0;
        for i in 0..num_points {
            let a = assign_pseudo_label(point(i), &centroids, num_clusters);
            assignments[i] = a;
            objective += squared_distance(point(i), &centroids[a * dim..(a + 1) * dim]);
        }
        // Update step.
        let mut sums = vec![0.0; num_clusters * dim];
        let mut counts = vec![0usize; num_clusters];
        for i in 0..num_points {
            let a = assignments[i];
            counts[a] += 1;
            for (s, v) in sums[a * dim..(a + 1) * dim].iter_mut().zip(point(i)) {
                *s += v;
            }
        }
        for c in 0..num_clusters {
            if counts[c] == 0 {
                // Reseed to the point farthest from its assigned centroid.
                let mut far = 0;
                let mut far_dist = -1.0;
                for i in 0..num_points {
                    let a = assignments[i];
                    let d = squared_distance(point(i), &centroids[a * dim..(a + 1) * dim]);
                    if d > far_dist {
                        far_dist = d;
                        far = i;
                    }
                }
                centroids[c * dim..(c + 1) * dim].copy_from_slice(point(far));
            } else {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centroids[c * dim..(c + 1) * dim]
                    .iter_mut()
                    .zip(&sums[c * dim..(c + 1) * dim])
                {
                    *dst = s * inv;
                }
            }
        }
        if let Some(&last) = objective_trace.last() {
            objective_trace.push(objective);
            if last > 0.0 && (last - objective).abs() / last < 1e-4 {
                break;
            }
        } else {
            objective_trace.push(objective);
        }
    }
    // Final assignment against the converged centroids.
    for i in 0..num_points {
        assignments[i] = assign_pseudo_label(point(i), &centroids, num_clusters);
    }
    Ok(Centroids {
        centroids,
        num_clusters,
        dim,
        assignments,
        objective_trace,
    })
}

// ── Similarity matrix ───────────────────────────────────────────────

/// Pairwise cosine similarity of centroid rows: symmetric, unit diagonal,
/// entries clamped into [-1, 1].
pub fn cosine_matrix(centroids: &[f64], num_clusters: usize, dim: usize) -> Result<Vec<f64>> {
    let mut normalized = vec![0.0; num_clusters * dim];
    for c in 0..num_clusters {
        let row = &centroids[c * dim..(c + 1) * dim];
        let norm = raw::norm2(row);
        if norm <= 0.0 || !norm.is_finite() {
            return Err(Error::invalid(
                "cosine_matrix",
                format!("centroid {c} has zero norm"),
            ));
        }
        for (dst, v) in normalized[c * dim..(c + 1) * dim].iter_mut().zip(row) {
            *dst = v / norm;
        }
    }
    let mut w = vec![0.0; num_clusters * num_clusters];
    for i in 0..num_clusters {
        w[i * num_clusters + i] = 1.0;
        for j in (i + 1)..num_clusters {
            let value = raw::dot(
                &normalized[i * dim..(i + 1) * dim],
                &normalized[j * dim..(j + 1) * dim],
            )
            .clamp(-1.0, 1.0);
            w[i * num_clusters + j] = value;
            w[j * num_clusters + i] = value;
        }
    }
    Ok(w)
}

// ── Center objective ────────────────────────────────────────────────

/// The hash-center objective for binary (or relaxed) `phi`:
/// consistency `|Phi Phi^T - K W|_F^2` plus separation
/// `1/2 sum_ij phi_i^T phi_j` (diagonal included as printed; it only shifts
/// the value by a constant for ±1 matrices).
pub fn center_objective(phi: &[f64], w: &[f64], num_centers: usize, code_bits: usize) -> f64 {
    let gram = raw::matmul_nt(phi, phi, num_centers, code_bits, num_centers);
    let k = code_bits as f64;
    let mut consistency = 0.0;
    let mut separation = 0.0;
    for (g, wv) in gram.iter().zip(w) {
        let diff = g - k * wv;
        consistency += diff * diff;
        separation += g;
    }
    consistency + 0.5 * separation
}

fn binarize(phi: &[f64]) -> Vec<f64> {
    phi.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect()
}

// ── ADMM ────────────────────────────────────────────────────────────

pub fn box_project(v: &mut [f64]) {
    for x in v {
        *x = x.clamp(-1.0, 1.0);
    }
}

/// Rescale onto the sphere of squared radius `target_norm_sq`
/// (`sqrt(N_c K) * v / |v|_F`).
pub fn sphere_project(v: &mut [f64], target_norm_sq: f64) {
    let norm = raw::norm2(v).max(f64::MIN_POSITIVE);
    let factor = target_norm_sq.sqrt() / norm;
    for x in v {
        *x *= factor;
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdmmOptions {
    pub max_outer: usize,
    /// Stop when both infinity-norm residuals fall below this.
    pub residual_tol: f64,
    pub mu_init: f64,
    pub mu_growth: f64,
    pub mu_cap: f64,
    /// Dual ascent step.
    pub eta: f64,
    pub lbfgs_memory: usize,
    pub lbfgs_max_iters: usize,
    pub lbfgs_grad_tol: f64,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        AdmmOptions {
            max_outer: 200,
            residual_tol: 1e-4,
            mu_init: 1e-4,
            mu_growth: 1.03,
            mu_cap: 1e3,
            eta: 1.0,
            lbfgs_memory: 10,
            lbfgs_max_iters: 20,
            lbfgs_grad_tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CentersReport {
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub warning: Option<String>,
    /// Objective of the binarized iterate per outer iteration.
    pub objective_trace: Vec<f64>,
    /// (box residual, sphere residual) infinity norms per outer iteration.
    pub residual_trace: Vec<(f64, f64)>,
    pub objective_init_binarized: f64,
    pub objective_final: f64,
}

#[derive(Debug, Clone)]
pub struct HashCenters {
    /// Row-major [num_centers, code_bits], entries exactly ±1.
    pub phi: Vec<f64>,
    pub num_centers: usize,
    pub code_bits: usize,
    pub report: CentersReport,
}

/// Gradient of the relaxed subproblem:
/// `4 (Phi Phi^T - K W) Phi + 1 1^T Phi + (mu_b + mu_p) Phi + G`.
fn subproblem(
    phi: &[f64],
    grad: &mut [f64],
    w: &[f64],
    num_centers: usize,
    code_bits: usize,
    mu_sum: f64,
    g_lin: &[f64],
) -> f64 {
    let k = code_bits as f64;
    let mut gram = raw::matmul_nt(phi, phi, num_centers, code_bits, num_centers);
    let mut consistency = 0.0;
    let mut separation = 0.0;
    for (g, wv) in gram.iter_mut().zip(w) {
        let diff = *g - k * wv;
        consistency += diff * diff;
        separation += *g;
        *g = diff; // reuse as (Phi Phi^T - K W)
    }
    // Column sums of Phi for the separation gradient 1 1^T Phi.
    let mut col_sum = vec![0.0; code_bits];
    for row in phi.chunks_exact(code_bits) {
        for (s, v) in col_sum.iter_mut().zip(row) {
            *s += v;
        }
    }
    let grad_consistency = raw::matmul_nn(&gram, phi, num_centers, num_centers, code_bits);
    let mut value = consistency + 0.5 * separation;
    let mut quad = 0.0;
    let mut lin = 0.0;
    for i in 0..num_centers * code_bits {
        quad += phi[i] * phi[i];
        lin += phi[i] * g_lin[i];
        grad[i] = 4.0 * grad_consistency[i] + col_sum[i % code_bits] + mu_sum * phi[i] + g_lin[i];
    }
    value += 0.5 * mu_sum * quad + lin;
    value
}

/// Transform a similarity matrix into ±1 hash centers.
///
/// Returns the best binarized iterate seen over the run (including the
/// initialization), so the reported objective never exceeds the binarized
/// initialization. Non-convergence within the iteration budget is flagged
/// in the report, never silent.
pub fn generate_hash_centers(
    w: &[f64],
    num_centers: usize,
    code_bits: usize,
    seed: u64,
    opts: &AdmmOptions,
) -> Result<HashCenters> {
    if code_bits == 0 {
        return Err(Error::invalid("generate_hash_centers", "code_bits must be >= 1"));
    }
    if w.len() != num_centers * num_centers || num_centers == 0 {
        return Err(Error::shape(
            "generate_hash_centers",
            format!("{} similarity entries for {num_centers} centers", w.len()),
        ));
    }
    for i in 0..num_centers {
        for j in 0..num_centers {
            let v = w[i * num_centers + j];
            if !(-1.0..=1.0).contains(&v) || (i == j && (v - 1.0).abs() > 1e-9) {
                return Err(Error::invalid(
                    "generate_hash_centers",
                    format!("similarity[{i},{j}] = {v} is not a valid cosine matrix entry"),
                ));
            }
        }
    }

    let n = num_centers * code_bits;
    let mut rng = StreamRng::new(seed, "admm");
    let mut phi: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let mut psi_box = phi.clone();
    let mut psi_sphere = phi.clone();
    let mut dual_box = vec![0.0; n];
    let mut dual_sphere = vec![0.0; n];
    let mut mu_box = opts.mu_init;
    let mut mu_sphere = opts.mu_init;

    let mut best = binarize(&phi);
    let mut best_objective = center_objective(&best, w, num_centers, code_bits);
    let objective_init_binarized = best_objective;

    let mut objective_trace = Vec::new();
    let mut residual_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..opts.max_outer {
        iterations += 1;
        // Relaxed subproblem in Phi.
        let mu_sum = mu_box + mu_sphere;
        let g_lin: Vec<f64> = (0..n)
            .map(|i| {
                dual_box[i] + dual_sphere[i] - mu_box * psi_box[i] - mu_sphere * psi_sphere[i]
            })
            .collect();
        let result = lbfgs::minimize(
            |x, grad| subproblem(x, grad, w, num_centers, code_bits, mu_sum, &g_lin),
            phi,
            &LbfgsOptions {
                memory: opts.lbfgs_memory,
                max_iters: opts.lbfgs_max_iters,
                grad_tol: opts.lbfgs_grad_tol,
            },
        );
        phi = result.x;

        // Auxiliary updates: clamp for the box constraint, Frobenius
        // rescaling for the sphere constraint.
        for i in 0..n {
            psi_box[i] = phi[i] + dual_box[i] / mu_box;
        }
        box_project(&mut psi_box);
        for i in 0..n {
            psi_sphere[i] = phi[i] + dual_sphere[i] / mu_sphere;
        }
        sphere_project(&mut psi_sphere, n as f64);

        // Dual ascent.
        let mut res_box = 0.0f64;
        let mut res_sphere = 0.0f64;
        for i in 0..n {
            let rb = phi[i] - psi_box[i];
            let rp = phi[i] - psi_sphere[i];
            dual_box[i] += opts.eta * mu_box * rb;
            dual_sphere[i] += opts.eta * mu_sphere * rp;
            res_box = res_box.max(rb.abs());
            res_sphere = res_sphere.max(rp.abs());
        }
        residual_trace.push((res_box, res_sphere));

        let candidate = binarize(&phi);
        let objective = center_objective(&candidate, w, num_centers, code_bits);
        objective_trace.push(objective);
        if objective < best_objective {
            best_objective = objective;
            best = candidate;
        }

        mu_box = (mu_box * opts.mu_growth).min(opts.mu_cap);
        mu_sphere = (mu_sphere * opts.mu_growth).min(opts.mu_cap);

        if res_box.max(res_sphere) < opts.residual_tol {
            converged = true;
            break;
        }
    }

    let warning = (!converged).then(|| {
        format!(
            "residuals above {} after {} outer iterations; returning best binarized iterate",
            opts.residual_tol, iterations
        )
    });
    Ok(HashCenters {
        phi: best,
        num_centers,
        code_bits,
        report: CentersReport {
            seed,
            iterations,
            converged,
            warning,
            objective_trace,
            residual_trace,
            objective_init_binarized,
            objective_final: best_objective,
        },
    })
}
