//! Run the full gradient verification suite: every primitive, every loss
//! term, and the complete two-view objective on a toy batch, all against
//! 64-bit central finite differences.
//!
//! ```bash
//! cargo run --release --example gradient_verification
//! ```

fn main() -> s5vh::Result<()> {
    let results = s5vh::verify::run_all(7)?;
    let mut worst = (String::new(), 0.0f64);
    for check in &results {
        println!("{:<44} {:.3e}", check.name, check.max_rel_error);
        if check.max_rel_error > worst.1 {
            worst = (check.name.clone(), check.max_rel_error);
        }
    }
    println!(
        "worst of {} checks: {} at {:.3e}",
        results.len(),
        worst.0,
        worst.1
    );
    Ok(())
}
