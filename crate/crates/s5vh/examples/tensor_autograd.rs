//! Build a small computation on the tape, run the reverse pass, and compare
//! one gradient against central finite differences.
//!
//! ```bash
//! cargo run --example tensor_autograd
//! ```

use s5vh::tensor::gradcheck::grad_check;
use s5vh::tensor::{ops, Tape, Tensor};

fn main() -> s5vh::Result<()> {
    // Forward: y = mean(tanh(x W + b)^2), everything tracked on one tape.
    let tape = Tape::new();
    let x = Tensor::leaf(&tape, vec![0.4, -1.2, 0.9, 0.1, -0.5, 2.0], vec![2, 3])?;
    let w = Tensor::leaf(&tape, vec![0.3, -0.7, 0.5, 0.2, -0.1, 0.8], vec![3, 2])?;
    let b = Tensor::leaf(&tape, vec![0.05, -0.02], vec![2])?;

    let hidden = ops::tanh(&ops::add_row_broadcast(&ops::matmul(&x, &w)?, &b)?);
    let loss = ops::mean_all(&ops::hadamard(&hidden, &hidden)?);
    println!("loss = {:.6}", loss.item());

    let grads = loss.backward()?;
    println!("dL/db = {:?}", grads.wrt(&b));
    println!("dL/dW rows:");
    for row in grads.wrt(&w).chunks(2) {
        println!("  {row:?}");
    }

    // The finite-difference harness replays the same computation.
    let max_err = grad_check(
        |inputs| {
            let hidden = ops::tanh(&ops::add_row_broadcast(
                &ops::matmul(&inputs[0], &inputs[1])?,
                &inputs[2],
            )?);
            Ok(ops::mean_all(&ops::hadamard(&hidden, &hidden)?))
        },
        &[
            (vec![0.4, -1.2, 0.9, 0.1, -0.5, 2.0], vec![2, 3]),
            (vec![0.3, -0.7, 0.5, 0.2, -0.1, 0.8], vec![3, 2]),
            (vec![0.05, -0.02], vec![2]),
        ],
        1e-5,
    )?;
    println!("max relative error vs central differences: {max_err:.3e}");
    Ok(())
}
