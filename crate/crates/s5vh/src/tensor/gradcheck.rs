//! Central finite-difference verification of analytic gradients.

use super::{ops, Tape, Tensor};
use crate::error::{Error, Result};

/// Default step for 64-bit central differences.
pub const DEFAULT_EPS: f64 = 1e-5;

/// Compare the analytic gradient of a scalar-valued computation against
/// central finite differences, returning the maximum relative error
/// `|analytic - fd| / max(1, |fd|)` over every entry of every input.
///
/// `f` is evaluated both on tape (for the analytic pass) and on plain
/// constants (for perturbed forward passes), so it must be deterministic in
/// its inputs.
pub fn grad_check<F>(f: F, inputs: &[(Vec<f64>, Vec<usize>)], eps: f64) -> Result<f64>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    let tape = Tape::new();
    let leaves: Vec<Tensor<f64>> = inputs
        .iter()
        .map(|(data, shape)| Tensor::leaf(&tape, data.clone(), shape.clone()))
        .collect::<Result<_>>()?;
    let out = f(&leaves)?;
    if out.numel() != 1 {
        return Err(Error::invalid(
            "grad_check",
            format!("expected scalar output, got {:?}", out.shape()),
        ));
    }
    if !out.item().is_finite() {
        return Err(Error::NonFinite("grad_check forward value".to_string()));
    }
    let grads = out.backward()?;
    let analytic: Vec<Vec<f64>> = leaves.iter().map(|leaf| grads.wrt(leaf)).collect();

    let eval = |values: &[Vec<f64>]| -> Result<f64> {
        let consts: Vec<Tensor<f64>> = values
            .iter()
            .zip(inputs)
            .map(|(data, (_, shape))| Tensor::constant(data.clone(), shape.clone()))
            .collect::<Result<_>>()?;
        let y = f(&consts)?;
        if y.numel() != 1 {
            return Err(Error::invalid("grad_check", "non-scalar perturbed output"));
        }
        Ok(y.item())
    };

    let mut values: Vec<Vec<f64>> = inputs.iter().map(|(data, _)| data.clone()).collect();
    let mut max_rel = 0.0f64;
    for i in 0..values.len() {
        for e in 0..values[i].len() {
            let original = values[i][e];
            values[i][e] = original + eps;
            let plus = eval(&values)?;
            values[i][e] = original - eps;
            let minus = eval(&values)?;
            values[i][e] = original;
            let fd = (plus - minus) / (2.0 * eps);
            if !fd.is_finite() {
                return Err(Error::NonFinite(format!(
                    "finite difference at input {i} entry {e}"
                )));
            }
            let rel = (analytic[i][e] - fd).abs() / fd.abs().max(1.0);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}

/// Finite-difference checks for each primitive on small random shapes.
/// Returns `(name, max relative error)` pairs.
pub fn check_primitives(seed: u64) -> Result<Vec<(String, f64)>> {
    use crate::rng::StreamRng;
    let mut rng = StreamRng::new(seed, "gradcheck-primitives");
    let mut draw = |n: usize, lo: f64, hi: f64| -> Vec<f64> {
        (0..n).map(|_| rng.uniform(lo, hi)).collect()
    };
    let mut results = Vec::new();
    let mut run = |name: &str,
                   inputs: Vec<(Vec<f64>, Vec<usize>)>,
                   f: Box<dyn Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>>|
     -> Result<()> {
        let err = grad_check(|xs| f(xs), &inputs, DEFAULT_EPS)?;
        results.push((name.to_string(), err));
        Ok(())
    };

    // A mild squash on top of each op makes the scalar reduction sensitive
    // to every entry rather than summing gradients of constants.
    let squash_sum =
        |t: &Tensor<f64>| -> Tensor<f64> { ops::sum_all(&ops::tanh(&ops::scale(t, 0.7))) };

    run(
        "add",
        vec![(draw(24, -1.0, 1.0), vec![2, 3, 4]), (draw(24, -1.0, 1.0), vec![2, 3, 4])],
        Box::new(move |xs| Ok(squash_sum(&ops::add(&xs[0], &xs[1])?))),
    )?;
    run(
        "sub",
        vec![(draw(12, -1.0, 1.0), vec![3, 4]), (draw(12, -1.0, 1.0), vec![3, 4])],
        Box::new(move |xs| Ok(squash_sum(&ops::sub(&xs[0], &xs[1])?))),
    )?;
    run(
        "hadamard_product",
        vec![
            (draw(16, -1.0, 1.0), vec![2, 2, 2, 2]),
            (draw(16, -1.0, 1.0), vec![2, 2, 2, 2]),
        ],
        Box::new(move |xs| Ok(squash_sum(&ops::hadamard(&xs[0], &xs[1])?))),
    )?;
    run(
        "matmul",
        vec![(draw(12, -1.0, 1.0), vec![3, 4]), (draw(20, -1.0, 1.0), vec![4, 5])],
        Box::new(move |xs| Ok(squash_sum(&ops::matmul(&xs[0], &xs[1])?))),
    )?;
    run(
        "transpose",
        vec![(draw(12, -1.0, 1.0), vec![3, 4])],
        Box::new(move |xs| Ok(squash_sum(&ops::transpose(&xs[0])?))),
    )?;
    run(
        "add_row_broadcast",
        vec![(draw(12, -1.0, 1.0), vec![3, 4]), (draw(4, -1.0, 1.0), vec![4])],
        Box::new(move |xs| Ok(squash_sum(&ops::add_row_broadcast(&xs[0], &xs[1])?))),
    )?;
    run(
        "tanh",
        vec![(draw(24, -2.0, 2.0), vec![2, 3, 4])],
        Box::new(move |xs| Ok(ops::sum_all(&ops::tanh(&xs[0])))),
    )?;
    run(
        "silu",
        vec![(draw(24, -2.0, 2.0), vec![24])],
        Box::new(move |xs| Ok(squash_sum(&ops::silu(&xs[0])))),
    )?;
    run(
        "softplus",
        vec![(draw(24, -3.0, 3.0), vec![24])],
        Box::new(move |xs| Ok(squash_sum(&ops::softplus(&xs[0])))),
    )?;
    run(
        "exp",
        vec![(draw(12, -1.0, 1.0), vec![12])],
        Box::new(move |xs| Ok(squash_sum(&ops::exp(&xs[0])))),
    )?;
    run(
        "layer_norm",
        vec![
            (draw(24, -1.0, 1.0), vec![4, 6]),
            (draw(6, 0.5, 1.5), vec![6]),
            (draw(6, -0.5, 0.5), vec![6]),
        ],
        Box::new(move |xs| Ok(squash_sum(&ops::layer_norm(&xs[0], &xs[1], &xs[2])?))),
    )?;
    run(
        "depthwise_conv1d",
        vec![
            (draw(18, -1.0, 1.0), vec![6, 3]),
            (draw(12, -1.0, 1.0), vec![3, 4]),
            (draw(3, -0.5, 0.5), vec![3]),
        ],
        Box::new(move |xs| Ok(squash_sum(&ops::depthwise_conv1d(&xs[0], &xs[1], &xs[2])?))),
    )?;
    run(
        "mean_over_axis",
        vec![(draw(24, -1.0, 1.0), vec![2, 3, 4])],
        Box::new(move |xs| Ok(squash_sum(&ops::mean_over_axis(&xs[0], 1)?))),
    )?;
    run(
        "log_sum_exp",
        vec![(draw(12, -2.0, 2.0), vec![3, 4])],
        Box::new(move |xs| Ok(squash_sum(&ops::log_sum_exp_rows(&xs[0])?))),
    )?;
    run(
        "slice_concat",
        vec![(draw(15, -1.0, 1.0), vec![5, 3]), (draw(6, -1.0, 1.0), vec![2, 3])],
        Box::new(move |xs| {
            let head = ops::slice_rows(&xs[0], 1, 3)?;
            Ok(squash_sum(&ops::concat_rows(&[&head, &xs[1]])?))
        }),
    )?;
    run(
        "reverse_along_time",
        vec![(draw(12, -1.0, 1.0), vec![4, 3])],
        Box::new(move |xs| {
            let rev = ops::reverse_rows(&xs[0])?;
            let ramp = Tensor::constant((0..12).map(|i| 0.1 * i as f64).collect(), vec![4, 3])?;
            Ok(ops::sum_all(&ops::hadamard(&rev, &ramp)?))
        }),
    )?;
    run(
        "gather_scatter",
        vec![(draw(8, -1.0, 1.0), vec![4, 2]), (draw(2, -1.0, 1.0), vec![1, 2])],
        Box::new(move |xs| {
            let picked = ops::gather_rows(&xs[0], &[2, 0])?;
            let placed = ops::scatter_rows(&picked, &[1, 3], 5, &xs[1])?;
            Ok(squash_sum(&placed))
        }),
    )?;
    run(
        "diag_pick",
        vec![(draw(9, -1.0, 1.0), vec![3, 3])],
        Box::new(move |xs| {
            let d = ops::diag(&xs[0])?;
            let p = ops::pick(&d, 1)?;
            ops::add(&ops::sum_all(&ops::tanh(&d)), &p)
        }),
    )?;
    run(
        "sum_mean",
        vec![(draw(10, -1.0, 1.0), vec![10])],
        Box::new(move |xs| ops::add(&ops::mean_all(&xs[0]), &ops::sum_all(&xs[0]))),
    )?;
    Ok(results)
}
