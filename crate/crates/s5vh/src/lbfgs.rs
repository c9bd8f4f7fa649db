//! Limited-memory BFGS for smooth unconstrained minimization, used by the
//! hash-center subproblem solver.
//!
//! Standard two-loop recursion over a bounded history of (step, gradient
//! difference) pairs, with the initial Hessian scaled by the most recent
//! curvature and an Armijo backtracking line search.

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iters: usize,
    /// Stop when the gradient Euclidean norm falls below this.
    pub grad_tol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            memory: 10,
            max_iters: 20,
            grad_tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimize `f`, which writes the gradient into its second argument and
/// returns the value.
pub fn minimize<F>(f: F, x0: Vec<f64>, opts: &LbfgsOptions) -> LbfgsResult
where
    F: Fn(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut grad = vec![0.0; n];
    let mut value = f(&x, &mut grad);
    let mut history: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)> =
        std::collections::VecDeque::with_capacity(opts.memory);
    let mut iterations = 0;

    for _ in 0..opts.max_iters {
        let grad_norm = dot(&grad, &grad).sqrt();
        if grad_norm < opts.grad_tol {
            break;
        }
        iterations += 1;

        // Two-loop recursion: direction = -H grad.
        let mut q = grad.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let alpha = rho * dot(s, &q);
            for (qv, yv) in q.iter_mut().zip(y) {
                *qv -= alpha * yv;
            }
            alphas.push(alpha);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y).max(f64::MIN_POSITIVE);
            for qv in q.iter_mut() {
                *qv *= gamma;
            }
        }
        for ((s, y, rho), alpha) in history.iter().zip(alphas.iter().rev()) {
            let beta = rho * dot(y, &q);
            for (qv, sv) in q.iter_mut().zip(s) {
                *qv += (alpha - beta) * sv;
            }
        }
        let direction: Vec<f64> = q.iter().map(|v| -v).collect();

        let mut slope = dot(&grad, &direction);
        let descent = if slope < 0.0 {
            direction
        } else {
            // Fall back to steepest descent if curvature info went bad.
            slope = -grad_norm * grad_norm;
            grad.iter().map(|v| -v).collect()
        };

        // Armijo backtracking.
        let mut step = if history.is_empty() {
            (1.0 / grad_norm).min(1.0)
        } else {
            1.0
        };
        let c1 = 1e-4;
        let mut new_x = vec![0.0; n];
        let mut new_grad = vec![0.0; n];
        let mut accepted = false;
        for _ in 0..40 {
            for i in 0..n {
                new_x[i] = x[i] + step * descent[i];
            }
            let new_value = f(&new_x, &mut new_grad);
            if new_value.is_finite() && new_value <= value + c1 * step * slope {
                let s: Vec<f64> = new_x.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                let curvature_ok =
                    sy > 1e-10 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt().max(f64::MIN_POSITIVE);
                if curvature_ok {
                    if history.len() == opts.memory {
                        history.pop_front();
                    }
                    history.push_back((s, y, 1.0 / sy));
                }
                x.copy_from_slice(&new_x);
                grad.copy_from_slice(&new_grad);
                value = new_value;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    let grad_norm = dot(&grad, &grad).sqrt();
    LbfgsResult {
        x,
        value,
        grad_norm,
        iterations,
    }
}
