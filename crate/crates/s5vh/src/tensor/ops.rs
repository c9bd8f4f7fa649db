//! Primitive tensor operations: forward kernels plus registered backward
//! rules. Elementwise ops accept any shape; matrix ops are rank-2.

use super::{raw, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn check_same_shape<S: Scalar>(op: &'static str, a: &Tensor<S>, b: &Tensor<S>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

fn check_rank2<S: Scalar>(op: &'static str, t: &Tensor<S>) -> Result<()> {
    if t.rank() != 2 {
        return Err(Error::shape(
            op,
            format!("expected rank-2 tensor, got shape {:?}", t.shape()),
        ));
    }
    Ok(())
}

// ── Arithmetic ──────────────────────────────────────────────────────

pub fn add<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    check_same_shape("add", a, b)?;
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| x + y)
        .collect();
    Ok(Tensor::from_op(&[a, b], data, a.shape().to_vec(), |g| {
        vec![Some(g.to_vec()), Some(g.to_vec())]
    }))
}

pub fn sub<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    check_same_shape("sub", a, b)?;
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| x - y)
        .collect();
    Ok(Tensor::from_op(&[a, b], data, a.shape().to_vec(), |g| {
        vec![
            Some(g.to_vec()),
            Some(g.iter().map(|&v| -v).collect()),
        ]
    }))
}

/// Elementwise product.
pub fn hadamard<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    check_same_shape("hadamard_product", a, b)?;
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| x * y)
        .collect();
    let a_data = a.data_rc();
    let b_data = b.data_rc();
    Ok(Tensor::from_op(&[a, b], data, a.shape().to_vec(), move |g| {
        let da = g.iter().zip(b_data.iter()).map(|(&gv, &bv)| gv * bv).collect();
        let db = g.iter().zip(a_data.iter()).map(|(&gv, &av)| gv * av).collect();
        vec![Some(da), Some(db)]
    }))
}

pub fn scale<S: Scalar>(x: &Tensor<S>, c: S) -> Tensor<S> {
    let data = x.data().iter().map(|&v| v * c).collect();
    Tensor::from_op(&[x], data, x.shape().to_vec(), move |g| {
        vec![Some(g.iter().map(|&v| v * c).collect())]
    })
}

pub fn add_scalar<S: Scalar>(x: &Tensor<S>, c: S) -> Tensor<S> {
    let data = x.data().iter().map(|&v| v + c).collect();
    Tensor::from_op(&[x], data, x.shape().to_vec(), |g| vec![Some(g.to_vec())])
}

pub fn neg<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    scale(x, -S::ONE)
}

// ── Matrix ops ──────────────────────────────────────────────────────

pub fn matmul<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    check_rank2("matmul", a)?;
    check_rank2("matmul", b)?;
    let (m, k) = (a.rows(), a.cols());
    let (k2, n) = (b.rows(), b.cols());
    if k != k2 {
        return Err(Error::shape(
            "matmul",
            format!("[{m}, {k}] x [{k2}, {n}]"),
        ));
    }
    let data = raw::matmul_nn(a.data(), b.data(), m, k, n);
    let a_data = a.data_rc();
    let b_data = b.data_rc();
    Ok(Tensor::from_op(&[a, b], data, vec![m, n], move |g| {
        let da = raw::matmul_nt(g, &b_data, m, n, k);
        let db = raw::matmul_tn(&a_data, g, m, k, n);
        vec![Some(da), Some(db)]
    }))
}

pub fn transpose<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>> {
    check_rank2("transpose", x)?;
    let (m, n) = (x.rows(), x.cols());
    let data = raw::transpose(x.data(), m, n);
    Ok(Tensor::from_op(&[x], data, vec![n, m], move |g| {
        vec![Some(raw::transpose(g, n, m))]
    }))
}

/// `y[i, j] = x[i, j] + bias[j]`
pub fn add_row_broadcast<S: Scalar>(x: &Tensor<S>, bias: &Tensor<S>) -> Result<Tensor<S>> {
    check_rank2("add_row_broadcast", x)?;
    let (m, n) = (x.rows(), x.cols());
    if bias.numel() != n {
        return Err(Error::shape(
            "add_row_broadcast",
            format!("matrix [{m}, {n}] with bias {:?}", bias.shape()),
        ));
    }
    let bias_data = bias.data();
    let mut data = Vec::with_capacity(m * n);
    for row in x.data().chunks_exact(n) {
        for (v, b) in row.iter().zip(bias_data) {
            data.push(*v + *b);
        }
    }
    Ok(Tensor::from_op(&[x, bias], data, vec![m, n], move |g| {
        let mut db = vec![S::ZERO; n];
        for row in g.chunks_exact(n) {
            for (acc, &gv) in db.iter_mut().zip(row) {
                *acc += gv;
            }
        }
        vec![Some(g.to_vec()), Some(db)]
    }))
}

// ── Elementwise nonlinearities ──────────────────────────────────────

pub fn tanh<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let data: Vec<S> = x.data().iter().map(|&v| v.tanh()).collect();
    let y = std::rc::Rc::new(data.clone());
    Tensor::from_op(&[x], data, x.shape().to_vec(), move |g| {
        let dx = g
            .iter()
            .zip(y.iter())
            .map(|(&gv, &yv)| gv * (S::ONE - yv * yv))
            .collect();
        vec![Some(dx)]
    })
}

fn sigmoid_scalar<S: Scalar>(x: S) -> S {
    if x >= S::ZERO {
        S::ONE / (S::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::ONE + e)
    }
}

/// x * sigmoid(x)
pub fn silu<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let data: Vec<S> = x
        .data()
        .iter()
        .map(|&v| v * sigmoid_scalar(v))
        .collect();
    let x_data = x.data_rc();
    Tensor::from_op(&[x], data, x.shape().to_vec(), move |g| {
        let dx = g
            .iter()
            .zip(x_data.iter())
            .map(|(&gv, &xv)| {
                let s = sigmoid_scalar(xv);
                gv * s * (S::ONE + xv * (S::ONE - s))
            })
            .collect();
        vec![Some(dx)]
    })
}

fn softplus_scalar<S: Scalar>(x: S) -> S {
    let twenty = S::from_f64(20.0);
    if x > twenty {
        x
    } else if x < -twenty {
        x.exp()
    } else {
        (S::ONE + x.exp()).ln()
    }
}

/// ln(1 + e^x), numerically stable.
pub fn softplus<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let data: Vec<S> = x.data().iter().map(|&v| softplus_scalar(v)).collect();
    let x_data = x.data_rc();
    Tensor::from_op(&[x], data, x.shape().to_vec(), move |g| {
        let dx = g
            .iter()
            .zip(x_data.iter())
            .map(|(&gv, &xv)| gv * sigmoid_scalar(xv))
            .collect();
        vec![Some(dx)]
    })
}

pub fn exp<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let data: Vec<S> = x.data().iter().map(|&v| v.exp()).collect();
    let y = std::rc::Rc::new(data.clone());
    Tensor::from_op(&[x], data, x.shape().to_vec(), move |g| {
        let dx = g.iter().zip(y.iter()).map(|(&gv, &yv)| gv * yv).collect();
        vec![Some(dx)]
    })
}

/// sign with the zero entry mapped to +1; gradient passes straight through.
pub fn sign_ste<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let data = x
        .data()
        .iter()
        .map(|&v| if v >= S::ZERO { S::ONE } else { -S::ONE })
        .collect();
    Tensor::from_op(&[x], data, x.shape().to_vec(), |g| vec![Some(g.to_vec())])
}

// ── Normalization ───────────────────────────────────────────────────

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Layer normalization over the last axis with learnable affine parameters.
pub fn layer_norm<S: Scalar>(
    x: &Tensor<S>,
    gamma: &Tensor<S>,
    beta: &Tensor<S>,
) -> Result<Tensor<S>> {
    let d = *x
        .shape()
        .last()
        .ok_or_else(|| Error::shape("layer_norm", "rank-0 input".to_string()))?;
    if gamma.numel() != d || beta.numel() != d {
        return Err(Error::shape(
            "layer_norm",
            format!(
                "input {:?} with gamma {:?}, beta {:?}",
                x.shape(),
                gamma.shape(),
                beta.shape()
            ),
        ));
    }
    let eps = S::from_f64(LAYER_NORM_EPS);
    let rows = x.numel() / d;
    let inv_d = S::ONE / S::from_f64(d as f64);
    let mut data = Vec::with_capacity(x.numel());
    let mut xhat = Vec::with_capacity(x.numel());
    let mut inv_std = Vec::with_capacity(rows);
    let gamma_v = gamma.data();
    let beta_v = beta.data();
    for row in x.data().chunks_exact(d) {
        let mut mean = S::ZERO;
        for &v in row {
            mean += v;
        }
        mean *= inv_d;
        let mut var = S::ZERO;
        for &v in row {
            let c = v - mean;
            var += c * c;
        }
        var *= inv_d;
        let istd = S::ONE / (var + eps).sqrt();
        inv_std.push(istd);
        for (j, &v) in row.iter().enumerate() {
            let h = (v - mean) * istd;
            xhat.push(h);
            data.push(gamma_v[j] * h + beta_v[j]);
        }
    }
    let xhat = std::rc::Rc::new(xhat);
    let gamma_data = gamma.data_rc();
    let shape = x.shape().to_vec();
    Ok(Tensor::from_op(&[x, gamma, beta], data, shape, move |g| {
        let mut dx = vec![S::ZERO; g.len()];
        let mut dgamma = vec![S::ZERO; d];
        let mut dbeta = vec![S::ZERO; d];
        for (r, g_row) in g.chunks_exact(d).enumerate() {
            let h_row = &xhat[r * d..(r + 1) * d];
            let istd = inv_std[r];
            let mut mean_gy = S::ZERO;
            let mut mean_gyh = S::ZERO;
            for j in 0..d {
                let gy = g_row[j] * gamma_data[j];
                mean_gy += gy;
                mean_gyh += gy * h_row[j];
                dgamma[j] += g_row[j] * h_row[j];
                dbeta[j] += g_row[j];
            }
            mean_gy *= inv_d;
            mean_gyh *= inv_d;
            let dx_row = &mut dx[r * d..(r + 1) * d];
            for j in 0..d {
                let gy = g_row[j] * gamma_data[j];
                dx_row[j] = istd * (gy - mean_gy - h_row[j] * mean_gyh);
            }
        }
        vec![Some(dx), Some(dgamma), Some(dbeta)]
    }))
}

// ── Convolution ─────────────────────────────────────────────────────

/// Causal depthwise 1-D convolution over the time axis.
///
/// `x` is `[T, C]`, `weight` is `[C, W]`, `bias` is `[C]`. Left zero-padding so that output
/// step t sees inputs t-W+1..=t only.
pub fn depthwise_conv1d<S: Scalar>(
    x: &Tensor<S>,
    weight: &Tensor<S>,
    bias: &Tensor<S>,
) -> Result<Tensor<S>> {
    check_rank2("depthwise_conv1d", x)?;
    check_rank2("depthwise_conv1d", weight)?;
    let (t_len, channels) = (x.rows(), x.cols());
    let (wc, width) = (weight.rows(), weight.cols());
    if wc != channels || bias.numel() != channels {
        return Err(Error::shape(
            "depthwise_conv1d",
            format!(
                "input [{t_len}, {channels}] with weight {:?}, bias {:?}",
                weight.shape(),
                bias.shape()
            ),
        ));
    }
    let xv = x.data();
    let wv = weight.data();
    let bv = bias.data();
    let mut data = vec![S::ZERO; t_len * channels];
    for t in 0..t_len {
        for c in 0..channels {
            let mut acc = bv[c];
            for j in 0..width {
                // tap j reads input at t - (width-1-j)
                let offset = width - 1 - j;
                if t >= offset {
                    acc += wv[c * width + j] * xv[(t - offset) * channels + c];
                }
            }
            data[t * channels + c] = acc;
        }
    }
    let x_data = x.data_rc();
    let w_data = weight.data_rc();
    Ok(Tensor::from_op(
        &[x, weight, bias],
        data,
        vec![t_len, channels],
        move |g| {
            let mut dx = vec![S::ZERO; t_len * channels];
            let mut dw = vec![S::ZERO; channels * width];
            let mut db = vec![S::ZERO; channels];
            for t in 0..t_len {
                for c in 0..channels {
                    let gv = g[t * channels + c];
                    db[c] += gv;
                    for j in 0..width {
                        let offset = width - 1 - j;
                        if t >= offset {
                            let src = (t - offset) * channels + c;
                            dw[c * width + j] += gv * x_data[src];
                            dx[src] += gv * w_data[c * width + j];
                        }
                    }
                }
            }
            vec![Some(dx), Some(dw), Some(db)]
        },
    ))
}

// ── Reductions ──────────────────────────────────────────────────────

pub fn sum_all<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let mut acc = S::ZERO;
    for &v in x.data() {
        acc += v;
    }
    let n = x.numel();
    Tensor::from_op(&[x], vec![acc], vec![1], move |g| {
        vec![Some(vec![g[0]; n])]
    })
}

pub fn mean_all<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let n = x.numel();
    scale(&sum_all(x), S::ONE / S::from_f64(n as f64))
}

/// Mean over one axis of a tensor of any rank.
pub fn mean_over_axis<S: Scalar>(x: &Tensor<S>, axis: usize) -> Result<Tensor<S>> {
    let shape = x.shape();
    if axis >= shape.len() {
        return Err(Error::shape(
            "mean_over_axis",
            format!("axis {axis} out of range for shape {shape:?}"),
        ));
    }
    let axis_len = shape[axis];
    if axis_len == 0 {
        return Err(Error::invalid("mean_over_axis", "axis of length 0"));
    }
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out_shape: Vec<usize> = shape.to_vec();
    out_shape.remove(axis);
    if out_shape.is_empty() {
        out_shape.push(1);
    }
    let inv = S::ONE / S::from_f64(axis_len as f64);
    let xv = x.data();
    let mut data = vec![S::ZERO; outer * inner];
    for o in 0..outer {
        for a in 0..axis_len {
            let base = (o * axis_len + a) * inner;
            let out_base = o * inner;
            for i in 0..inner {
                data[out_base + i] += xv[base + i];
            }
        }
    }
    for v in &mut data {
        *v *= inv;
    }
    Ok(Tensor::from_op(&[x], data, out_shape, move |g| {
        let mut dx = vec![S::ZERO; outer * axis_len * inner];
        for o in 0..outer {
            for a in 0..axis_len {
                let base = (o * axis_len + a) * inner;
                let g_base = o * inner;
                for i in 0..inner {
                    dx[base + i] = g[g_base + i] * inv;
                }
            }
        }
        vec![Some(dx)]
    }))
}

/// Row-wise log(sum(exp(x))) of a matrix, with max-shift stabilization.
pub fn log_sum_exp_rows<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>> {
    check_rank2("log_sum_exp", x)?;
    let (m, n) = (x.rows(), x.cols());
    if n == 0 {
        return Err(Error::invalid("log_sum_exp", "empty rows"));
    }
    let xv = x.data();
    let mut data = Vec::with_capacity(m);
    for row in xv.chunks_exact(n) {
        let mut mx = row[0];
        for &v in row {
            mx = mx.maximum(v);
        }
        let mut acc = S::ZERO;
        for &v in row {
            acc += (v - mx).exp();
        }
        data.push(mx + acc.ln());
    }
    let lse = std::rc::Rc::new(data.clone());
    let x_data = x.data_rc();
    Ok(Tensor::from_op(&[x], data, vec![m], move |g| {
        let mut dx = vec![S::ZERO; m * n];
        for i in 0..m {
            let gi = g[i];
            let li = lse[i];
            for j in 0..n {
                dx[i * n + j] = gi * (x_data[i * n + j] - li).exp();
            }
        }
        vec![Some(dx)]
    }))
}

// ── Structural ops ──────────────────────────────────────────────────

pub fn slice_rows<S: Scalar>(x: &Tensor<S>, start: usize, len: usize) -> Result<Tensor<S>> {
    check_rank2("slice_rows", x)?;
    let (m, n) = (x.rows(), x.cols());
    if start + len > m {
        return Err(Error::shape(
            "slice_rows",
            format!("rows {start}..{} of [{m}, {n}]", start + len),
        ));
    }
    let data = x.data()[start * n..(start + len) * n].to_vec();
    Ok(Tensor::from_op(&[x], data, vec![len, n], move |g| {
        let mut dx = vec![S::ZERO; m * n];
        dx[start * n..(start + len) * n].copy_from_slice(g);
        vec![Some(dx)]
    }))
}

pub fn concat_rows<S: Scalar>(parts: &[&Tensor<S>]) -> Result<Tensor<S>> {
    if parts.is_empty() {
        return Err(Error::invalid("concat_rows", "no inputs"));
    }
    for p in parts {
        check_rank2("concat_rows", p)?;
    }
    let n = parts[0].cols();
    let mut total_rows = 0;
    for p in parts {
        if p.cols() != n {
            return Err(Error::shape(
                "concat_rows",
                format!("column mismatch: {} vs {}", n, p.cols()),
            ));
        }
        total_rows += p.rows();
    }
    let mut data = Vec::with_capacity(total_rows * n);
    for p in parts {
        data.extend_from_slice(p.data());
    }
    let sizes: Vec<usize> = parts.iter().map(|p| p.rows()).collect();
    Ok(Tensor::from_op(parts, data, vec![total_rows, n], move |g| {
        let mut out = Vec::with_capacity(sizes.len());
        let mut offset = 0;
        for &rows in &sizes {
            out.push(Some(g[offset * n..(offset + rows) * n].to_vec()));
            offset += rows;
        }
        out
    }))
}

/// Reverse the row (time) order of a matrix.
pub fn reverse_rows<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>> {
    check_rank2("reverse_along_time", x)?;
    let (m, n) = (x.rows(), x.cols());
    let xv = x.data();
    let mut data = Vec::with_capacity(m * n);
    for i in (0..m).rev() {
        data.extend_from_slice(&xv[i * n..(i + 1) * n]);
    }
    Ok(Tensor::from_op(&[x], data, vec![m, n], move |g| {
        let mut dx = Vec::with_capacity(m * n);
        for i in (0..m).rev() {
            dx.extend_from_slice(&g[i * n..(i + 1) * n]);
        }
        vec![Some(dx)]
    }))
}

/// Select rows of `x` by index, in the given order.
pub fn gather_rows<S: Scalar>(x: &Tensor<S>, indices: &[usize]) -> Result<Tensor<S>> {
    check_rank2("gather_rows", x)?;
    let (m, n) = (x.rows(), x.cols());
    for &i in indices {
        if i >= m {
            return Err(Error::invalid(
                "gather_rows",
                format!("row {i} out of range for [{m}, {n}]"),
            ));
        }
    }
    let xv = x.data();
    let mut data = Vec::with_capacity(indices.len() * n);
    for &i in indices {
        data.extend_from_slice(&xv[i * n..(i + 1) * n]);
    }
    let idx = indices.to_vec();
    let out_rows = indices.len();
    Ok(Tensor::from_op(&[x], data, vec![out_rows, n], move |g| {
        let mut dx = vec![S::ZERO; m * n];
        for (p, &i) in idx.iter().enumerate() {
            for j in 0..n {
                dx[i * n + j] += g[p * n + j];
            }
        }
        vec![Some(dx)]
    }))
}

/// Build a [total, n] matrix whose rows at `indices` come from `src` (in
/// order) and whose remaining rows are copies of the single `fill` row.
pub fn scatter_rows<S: Scalar>(
    src: &Tensor<S>,
    indices: &[usize],
    total: usize,
    fill: &Tensor<S>,
) -> Result<Tensor<S>> {
    check_rank2("scatter_rows", src)?;
    let n = src.cols();
    if src.rows() != indices.len() {
        return Err(Error::shape(
            "scatter_rows",
            format!("{} source rows with {} indices", src.rows(), indices.len()),
        ));
    }
    if fill.numel() != n {
        return Err(Error::shape(
            "scatter_rows",
            format!("fill {:?} for {n} columns", fill.shape()),
        ));
    }
    let mut seen = vec![false; total];
    for &i in indices {
        if i >= total {
            return Err(Error::invalid(
                "scatter_rows",
                format!("row {i} out of range for {total} rows"),
            ));
        }
        if seen[i] {
            return Err(Error::invalid("scatter_rows", format!("duplicate row {i}")));
        }
        seen[i] = true;
    }
    let fill_v = fill.data();
    let src_v = src.data();
    let mut data = Vec::with_capacity(total * n);
    for row_is_src in &seen {
        let _ = row_is_src;
        data.extend_from_slice(fill_v);
    }
    for (p, &i) in indices.iter().enumerate() {
        data[i * n..(i + 1) * n].copy_from_slice(&src_v[p * n..(p + 1) * n]);
    }
    let idx = indices.to_vec();
    Ok(Tensor::from_op(
        &[src, fill],
        data,
        vec![total, n],
        move |g| {
            let mut dsrc = vec![S::ZERO; idx.len() * n];
            for (p, &i) in idx.iter().enumerate() {
                dsrc[p * n..(p + 1) * n].copy_from_slice(&g[i * n..(i + 1) * n]);
            }
            let mut taken = vec![false; total];
            for &i in &idx {
                taken[i] = true;
            }
            let mut dfill = vec![S::ZERO; n];
            for (i, is_src) in taken.iter().enumerate() {
                if !is_src {
                    for j in 0..n {
                        dfill[j] += g[i * n + j];
                    }
                }
            }
            vec![Some(dsrc), Some(dfill)]
        },
    ))
}

/// Same data under a new shape with equal element count.
pub fn reshape<S: Scalar>(x: &Tensor<S>, shape: Vec<usize>) -> Result<Tensor<S>> {
    if shape.iter().product::<usize>() != x.numel() {
        return Err(Error::shape(
            "reshape",
            format!("{:?} -> {:?}", x.shape(), shape),
        ));
    }
    Ok(Tensor::from_op(&[x], x.data().to_vec(), shape, |g| {
        vec![Some(g.to_vec())]
    }))
}

/// Main diagonal of a square matrix.
pub fn diag<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>> {
    check_rank2("diag", x)?;
    let (m, n) = (x.rows(), x.cols());
    if m != n {
        return Err(Error::shape("diag", format!("[{m}, {n}] is not square")));
    }
    let xv = x.data();
    let data: Vec<S> = (0..m).map(|i| xv[i * n + i]).collect();
    Ok(Tensor::from_op(&[x], data, vec![m], move |g| {
        let mut dx = vec![S::ZERO; m * n];
        for i in 0..m {
            dx[i * n + i] = g[i];
        }
        vec![Some(dx)]
    }))
}

/// One element of a vector as a scalar tensor.
pub fn pick<S: Scalar>(x: &Tensor<S>, index: usize) -> Result<Tensor<S>> {
    if index >= x.numel() {
        return Err(Error::invalid(
            "pick",
            format!("index {index} out of range for {} elements", x.numel()),
        ));
    }
    let n = x.numel();
    let v = x.data()[index];
    Ok(Tensor::from_op(&[x], vec![v], vec![1], move |g| {
        let mut dx = vec![S::ZERO; n];
        dx[index] = g[0];
        vec![Some(dx)]
    }))
}
