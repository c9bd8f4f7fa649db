//! Run the selective scan on a toy sequence and check it against the
//! recurrence unrolled by hand, plus a look at zero-order-hold
//! discretization behavior.
//!
//! ```bash
//! cargo run --example selective_scan
//! ```

use s5vh::rng::StreamRng;
use s5vh::ssm::{discretize, selective_scan};
use s5vh::tensor::Tensor;

fn main() -> s5vh::Result<()> {
    // Discretization: a = -1 with timescale ln 2 halves the state per step.
    let (a_bar, b_bar) = discretize(-1.0f64, 1.0, std::f64::consts::LN_2);
    println!("discretize(a=-1, b=1, delta=ln 2) -> a_bar={a_bar:.4}, b_bar={b_bar:.4}");
    let (_, b_small) = discretize(1e-9f64, 1.0, 0.1);
    println!("near a=0 the series branch gives b_bar -> delta*b = {b_small:.6}");

    // An impulse through a one-channel scan with those constants decays
    // geometrically: y = [0.5, 0.25, 0.125, ...].
    let t_len = 6;
    let u = Tensor::constant(
        std::iter::once(1.0)
            .chain(std::iter::repeat(0.0))
            .take(t_len)
            .collect(),
        vec![t_len, 1],
    )?;
    let delta = Tensor::constant(vec![1.0; t_len], vec![t_len, 1])?;
    let a = Tensor::constant(vec![0.5f64.ln()], vec![1, 1])?;
    let b_coef = 0.5 * 0.5f64.ln() / (0.5 - 1.0);
    let b = Tensor::constant(vec![b_coef; t_len], vec![t_len, 1])?;
    let c = Tensor::constant(vec![1.0; t_len], vec![t_len, 1])?;
    let y = selective_scan(&u, &delta, &a, &b, &c)?;
    println!("impulse response: {:?}", y.data());

    // Random configuration against the naive unrolled recurrence.
    let mut rng = StreamRng::new(5, "example");
    let (t_len, channels, state) = (64, 2, 4);
    let draw = |rng: &mut StreamRng, n: usize, lo: f64, hi: f64| -> Vec<f64> {
        (0..n).map(|_| rng.uniform(lo, hi)).collect()
    };
    let u = draw(&mut rng, t_len * channels, -1.0, 1.0);
    let dt = draw(&mut rng, t_len * channels, 1e-2, 0.2);
    let a = draw(&mut rng, channels * state, -2.0, -0.2);
    let bm = draw(&mut rng, t_len * state, -1.0, 1.0);
    let cm = draw(&mut rng, t_len * state, -1.0, 1.0);

    let fast = selective_scan(
        &Tensor::constant(u.clone(), vec![t_len, channels])?,
        &Tensor::constant(dt.clone(), vec![t_len, channels])?,
        &Tensor::constant(a.clone(), vec![channels, state])?,
        &Tensor::constant(bm.clone(), vec![t_len, state])?,
        &Tensor::constant(cm.clone(), vec![t_len, state])?,
    )?;

    // Unrolled recurrence, step by step.
    let mut hidden = vec![0.0f64; channels * state];
    let mut worst = 0.0f64;
    for t in 0..t_len {
        for ch in 0..channels {
            let mut acc = 0.0;
            for n in 0..state {
                let idx = ch * state + n;
                let (a_bar, b_bar) = discretize(a[idx], bm[t * state + n], dt[t * channels + ch]);
                hidden[idx] = a_bar * hidden[idx] + b_bar * u[t * channels + ch];
                acc += cm[t * state + n] * hidden[idx];
            }
            let got = fast.data()[t * channels + ch];
            worst = worst.max((got - acc).abs() / acc.abs().max(1.0));
        }
    }
    println!("scan vs unrolled recurrence over {t_len} steps: max rel diff {worst:.2e}");
    Ok(())
}
