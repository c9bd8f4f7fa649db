//! Shared dense kernels over plain slices, used by the taped ops and by the
//! solvers that work on raw matrices.

use crate::scalar::Scalar;

/// out[m,n] = a[m,k] * b[k,n]
pub fn matmul_nn<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut out = vec![S::ZERO; m * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (kk, &av) in a_row.iter().enumerate() {
            let b_row = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    out
}

/// out[m,k] = a[m,n] * b[k,n]^T
pub fn matmul_nt<S: Scalar>(a: &[S], b: &[S], m: usize, n: usize, k: usize) -> Vec<S> {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    let mut out = vec![S::ZERO; m * k];
    for i in 0..m {
        let a_row = &a[i * n..(i + 1) * n];
        for kk in 0..k {
            let b_row = &b[kk * n..(kk + 1) * n];
            let mut acc = S::ZERO;
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc += av * bv;
            }
            out[i * k + kk] = acc;
        }
    }
    out
}

/// out[k,n] = a[m,k]^T * b[m,n]
pub fn matmul_tn<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    let mut out = vec![S::ZERO; k * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * n..(i + 1) * n];
        for (kk, &av) in a_row.iter().enumerate() {
            let out_row = &mut out[kk * n..(kk + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    out
}

pub fn transpose<S: Scalar>(a: &[S], m: usize, n: usize) -> Vec<S> {
    let mut out = vec![S::ZERO; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = S::ZERO;
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub fn norm2<S: Scalar>(a: &[S]) -> S {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_variants_agree() {
        // a: 2x3, b: 3x2
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [7.0f64, 8.0, 9.0, 10.0, 11.0, 12.0];
        let nn = matmul_nn(&a, &b, 2, 3, 2);
        assert_eq!(nn, vec![58.0, 64.0, 139.0, 154.0]);

        let b_t = transpose(&b, 3, 2); // 2x3
        let nt = matmul_nt(&a, &b_t, 2, 3, 2);
        assert_eq!(nt, nn);

        let a_t = transpose(&a, 2, 3); // 3x2
        let tn = matmul_tn(&a_t, &b, 3, 2, 2);
        assert_eq!(tn, nn);
    }
}
