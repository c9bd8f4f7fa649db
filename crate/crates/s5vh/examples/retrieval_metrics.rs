//! Hamming ranking and the retrieval metrics on a small hand-built code set.
//!
//! ```bash
//! cargo run --example retrieval_metrics
//! ```

use std::collections::BTreeMap;

use s5vh::hashing::{pack_code, CodeDatabase};
use s5vh::retrieval::{self, ap_at_n, gmap, hamming_distance, rank, EvalInputs};
use s5vh::rng::StreamRng;

fn main() -> s5vh::Result<()> {
    // Two codes four bits apart.
    let a: Vec<f32> = vec![1.0; 16];
    let mut b = a.clone();
    for bit in b.iter_mut().take(4) {
        *bit = -1.0;
    }
    println!(
        "hamming(a, b) = {}",
        hamming_distance(&pack_code(&a), &pack_code(&b))
    );

    // Average precision of the sequence [relevant, irrelevant, relevant].
    println!("AP@3 of [1, 0, 1] = {:.4} (= 5/6)", ap_at_n(&[true, false, true], 3));
    println!("root-sum-of-squares of six 0.5 values = {:.4}", gmap(&[0.5; 6]));

    // A labeled toy instance: 3 classes of noisy codes around class anchors.
    let mut rng = StreamRng::new(11, "example");
    let code_bits = 16;
    let mut database = CodeDatabase::new(code_bits);
    let mut labels = BTreeMap::new();
    let anchors: Vec<Vec<f32>> = (0..3)
        .map(|_| {
            (0..code_bits)
                .map(|_| if rng.next_f64() < 0.5 { -1.0 } else { 1.0 })
                .collect()
        })
        .collect();
    let noisy = |anchor: &[f32], rng: &mut StreamRng| -> Vec<f32> {
        anchor
            .iter()
            .map(|&v| if rng.next_f64() < 0.12 { -v } else { v })
            .collect()
    };
    for i in 0..60 {
        let class = i % 3;
        let code = noisy(&anchors[class], &mut rng);
        database.push(format!("db{i}"), &code)?;
        labels.insert(format!("db{i}"), class as i64);
    }
    let mut queries = CodeDatabase::new(code_bits);
    for i in 0..9 {
        let class = i % 3;
        let code = noisy(&anchors[class], &mut rng);
        queries.push(format!("q{i}"), &code)?;
        labels.insert(format!("q{i}"), class as i64);
    }

    let order = rank(queries.row(0), &database)?;
    println!("top-5 for query 0: {:?}", &order[..5]);

    let report = retrieval::evaluate(&EvalInputs {
        queries: &queries,
        database: &database,
        labels: &labels,
    })?;
    for (n, value) in &report.map_at {
        println!("mAP@{n}: {value:.4}");
    }
    println!("GmAP: {:.4}", report.gmap);
    println!("PR curve (radius, precision, recall):");
    for (radius, (precision, recall)) in report.pr_curve.iter().enumerate().step_by(4) {
        println!("  {radius:>2}  {precision:.3}  {recall:.3}");
    }
    Ok(())
}
