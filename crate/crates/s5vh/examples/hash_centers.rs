//! Generate semantic hash centers from a two-block similarity matrix and
//! inspect separation and semantic consistency.
//!
//! ```bash
//! cargo run --example hash_centers
//! ```

use s5vh::centers::{generate_hash_centers, AdmmOptions};

fn main() -> s5vh::Result<()> {
    // Two semantic groups of four clusters: high similarity inside a group,
    // none across.
    let num_centers = 8;
    let code_bits = 16;
    let mut w = vec![0.0f64; num_centers * num_centers];
    for i in 0..num_centers {
        for j in 0..num_centers {
            w[i * num_centers + j] = if i == j {
                1.0
            } else if (i < 4) == (j < 4) {
                0.9
            } else {
                0.0
            };
        }
    }

    let result = generate_hash_centers(&w, num_centers, code_bits, 7, &AdmmOptions::default())?;
    println!(
        "{} outer iterations, converged: {}, objective {:.3} (binarized init {:.3})",
        result.report.iterations,
        result.report.converged,
        result.report.objective_final,
        result.report.objective_init_binarized
    );
    if let Some(warning) = &result.report.warning {
        println!("note: {warning}");
    }

    println!("centers (+ for +1, - for -1):");
    for row in result.phi.chunks(code_bits) {
        let bits: String = row.iter().map(|&v| if v > 0.0 { '+' } else { '-' }).collect();
        println!("  {bits}");
    }

    println!("pairwise Hamming distances:");
    for i in 0..num_centers {
        let row: Vec<usize> = (0..num_centers)
            .map(|j| {
                (0..code_bits)
                    .filter(|&k| result.phi[i * code_bits + k] != result.phi[j * code_bits + k])
                    .count()
            })
            .collect();
        println!("  {row:?}");
    }

    // Code-space similarity should track the feature-space similarity:
    // within-group pairs high, cross-group pairs near zero.
    let mut within = Vec::new();
    let mut across = Vec::new();
    for i in 0..num_centers {
        for j in (i + 1)..num_centers {
            let dot: f64 = (0..code_bits)
                .map(|k| result.phi[i * code_bits + k] * result.phi[j * code_bits + k])
                .sum();
            let sim = dot / code_bits as f64;
            if (i < 4) == (j < 4) {
                within.push(sim);
            } else {
                across.push(sim);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!(
        "mean code similarity within groups: {:.3}, across groups: {:.3}",
        mean(&within),
        mean(&across)
    );
    Ok(())
}
