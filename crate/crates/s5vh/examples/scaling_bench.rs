//! Time per-sample encoding across sequence lengths and fit scaling laws:
//! the scan encoder should be near-linear, the pairwise reference clearly
//! quadratic.
//!
//! ```bash
//! cargo run --release --example scaling_bench
//! ```

use s5vh::bench::{self, BenchConfig};

fn main() -> s5vh::Result<()> {
    let config = BenchConfig {
        lengths: vec![32, 64, 128, 256, 512],
        repeats: 7,
        ..Default::default()
    };
    let report = bench::run(&config)?;

    println!("scan encoder:");
    for m in &report.scan.measurements {
        println!(
            "  L = {:>4}: {:.3} ms/sample, max batch {} under the byte budget",
            m.length, m.median_ms_per_sample, m.max_batch
        );
    }
    println!(
        "  quadratic fit: {:.3e} L^2 + {:.3e} L + {:.3e} (R^2 {:.4})",
        report.scan.quadratic.a,
        report.scan.quadratic.b,
        report.scan.quadratic.c,
        report.scan.quadratic.r_squared
    );
    println!(
        "  linear fit:    {:.3e} L + {:.3e} (R^2 {:.4}), quadratic share at max L: {:.3}",
        report.scan.linear.b,
        report.scan.linear.c,
        report.scan.linear.r_squared,
        report.scan.quadratic_share_at_max
    );

    println!("pairwise quadratic reference:");
    for m in &report.reference.measurements {
        println!("  L = {:>4}: {:.3} ms/sample", m.length, m.median_ms_per_sample);
    }
    println!(
        "  quadratic share at max L: {:.3}",
        report.reference.quadratic_share_at_max
    );
    Ok(())
}
