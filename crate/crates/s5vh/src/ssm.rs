//! Selective state-space scan, gated blocks, and the bidirectional layers
//! that form the temporal encoder and decoder.
//!
//! Per channel the scan evolves `h_t = a_bar * h_{t-1} + b_bar * x_t` with
//! `y_t = c_t . h_t`, where `(a_bar, b_bar)` come from zero-order-hold
//! discretization of a diagonal continuous system under an input-dependent
//! timescale. The scan is a single fused tape operation with a hand-derived
//! backward pass; everything around it is built from the shared primitives.

use crate::error::{Error, Result};
use crate::params::{Lifted, ParamId, ParamStore};
use crate::rng::StreamRng;
use crate::scalar::Scalar;
use crate::tensor::{ops, Tensor};

// ── Discretization ──────────────────────────────────────────────────

/// (e^z - 1) / z, switching to the series 1 + z/2 below the cancellation
/// threshold. Computed in f64 for stability at every element type.
fn phi(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        1.0 + 0.5 * z
    } else {
        (z.exp() - 1.0) / z
    }
}

/// d/dz of `phi`, with a matching series branch.
fn phi_prime(z: f64) -> f64 {
    if z.abs() < 1e-3 {
        0.5 + z / 3.0 + z * z / 8.0
    } else {
        (z.exp() * (z - 1.0) + 1.0) / (z * z)
    }
}

/// Zero-order-hold discretization of a scalar diagonal system:
/// `a_bar = exp(delta a)`, `b_bar = (delta a)^{-1} (exp(delta a) - 1) delta b`.
///
/// The `a -> 0` singularity is handled by a series branch, so `b_bar` is
/// continuous there and tends to `delta * b`.
pub fn discretize<S: Scalar>(a: S, b: S, delta: S) -> (S, S) {
    let a_bar = (delta * a).exp();
    let b_bar = delta * S::from_f64(phi((delta * a).to_f64())) * b;
    (a_bar, b_bar)
}

// ── Selective scan ──────────────────────────────────────────────────

/// Input-dependent scan over a sequence.
///
/// Shapes: `u` and `delta` are `[T, C]`, `a` is `[C, N]` (diagonal entries,
/// expected negative), `b` and `c` are `[T, N]` shared across channels.
/// Returns `[T, C]`, identical to the unrolled recurrence with `h_0 = 0`.
pub fn selective_scan<S: Scalar>(
    u: &Tensor<S>,
    delta: &Tensor<S>,
    a: &Tensor<S>,
    b: &Tensor<S>,
    c: &Tensor<S>,
) -> Result<Tensor<S>> {
    for (name, t) in [("u", u), ("delta", delta), ("a", a), ("b", b), ("c", c)] {
        if t.rank() != 2 {
            return Err(Error::shape(
                "selective_scan",
                format!("{name} must be rank-2, got {:?}", t.shape()),
            ));
        }
    }
    let (t_len, channels) = (u.rows(), u.cols());
    if t_len == 0 {
        return Err(Error::invalid("selective_scan", "empty sequence"));
    }
    let state = a.cols();
    if delta.shape() != u.shape()
        || a.rows() != channels
        || b.shape() != [t_len, state]
        || c.shape() != [t_len, state]
    {
        return Err(Error::shape(
            "selective_scan",
            format!(
                "u {:?}, delta {:?}, a {:?}, b {:?}, c {:?}",
                u.shape(),
                delta.shape(),
                a.shape(),
                b.shape(),
                c.shape()
            ),
        ));
    }

    let uv = u.data();
    let dv = delta.data();
    let av = a.data();
    let bv = b.data();
    let cv = c.data();
    let mut hidden = vec![S::ZERO; channels * state];
    let mut saved_hidden = vec![S::ZERO; t_len * channels * state];
    let mut out = vec![S::ZERO; t_len * channels];
    for t in 0..t_len {
        for ch in 0..channels {
            let dt = dv[t * channels + ch];
            let x_t = uv[t * channels + ch];
            let mut acc = S::ZERO;
            for n in 0..state {
                let idx = ch * state + n;
                let z = dt * av[idx];
                let a_bar = z.exp();
                let b_bar = dt * S::from_f64(phi(z.to_f64())) * bv[t * state + n];
                let h_new = a_bar * hidden[idx] + b_bar * x_t;
                hidden[idx] = h_new;
                saved_hidden[(t * channels + ch) * state + n] = h_new;
                acc += cv[t * state + n] * h_new;
            }
            out[t * channels + ch] = acc;
        }
    }

    let u_data = u.data_rc();
    let d_data = delta.data_rc();
    let a_data = a.data_rc();
    let b_data = b.data_rc();
    let c_data = c.data_rc();
    let hs = std::rc::Rc::new(saved_hidden);
    Ok(Tensor::from_op(
        &[u, delta, a, b, c],
        out,
        vec![t_len, channels],
        move |g| {
            let mut du = vec![S::ZERO; t_len * channels];
            let mut ddelta = vec![S::ZERO; t_len * channels];
            let mut da = vec![S::ZERO; channels * state];
            let mut db = vec![S::ZERO; t_len * state];
            let mut dc = vec![S::ZERO; t_len * state];
            let mut dh = vec![S::ZERO; channels * state];
            for t in (0..t_len).rev() {
                for ch in 0..channels {
                    let gy = g[t * channels + ch];
                    let dt = d_data[t * channels + ch];
                    let x_t = u_data[t * channels + ch];
                    let mut du_acc = S::ZERO;
                    let mut ddt_acc = S::ZERO;
                    for n in 0..state {
                        let idx = ch * state + n;
                        let b_t = b_data[t * state + n];
                        let h_t = hs[(t * channels + ch) * state + n];
                        dc[t * state + n] += gy * h_t;
                        let dh_cur = dh[idx] + gy * c_data[t * state + n];
                        let z = dt * a_data[idx];
                        let a_bar = z.exp();
                        let z = z.to_f64();
                        let phi_v = S::from_f64(phi(z));
                        let dphi_v = S::from_f64(phi_prime(z));
                        let b_bar = dt * phi_v * b_t;
                        let h_prev = if t == 0 {
                            S::ZERO
                        } else {
                            hs[((t - 1) * channels + ch) * state + n]
                        };
                        let d_abar = dh_cur * h_prev;
                        let d_bbar = dh_cur * x_t;
                        du_acc += dh_cur * b_bar;
                        let dz = d_abar * a_bar + d_bbar * dt * b_t * dphi_v;
                        ddt_acc += dz * a_data[idx] + d_bbar * phi_v * b_t;
                        da[idx] += dz * dt;
                        db[t * state + n] += d_bbar * dt * phi_v;
                        dh[idx] = dh_cur * a_bar;
                    }
                    du[t * channels + ch] += du_acc;
                    ddelta[t * channels + ch] += ddt_acc;
                }
            }
            vec![Some(du), Some(ddelta), Some(da), Some(db), Some(dc)]
        },
    ))
}

// ── Layer configuration ─────────────────────────────────────────────

/// Hyperparameters for one gated scan block and the layers built from it.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct SsmConfig {
    /// Width of the sequence the layer operates on.
    pub d_model: usize,
    /// Diagonal state size per channel.
    pub state_size: usize,
    /// Causal depthwise convolution width.
    pub conv_width: usize,
    /// Inner expansion factor: the scan runs at `expand * d_model` channels.
    pub expand: usize,
    /// Rank of the timescale bottleneck projection.
    pub dt_rank: usize,
}

impl SsmConfig {
    pub fn with_defaults(d_model: usize) -> SsmConfig {
        SsmConfig {
            d_model,
            state_size: 16,
            conv_width: 4,
            expand: 2,
            dt_rank: d_model.div_ceil(16),
        }
    }

    pub fn d_inner(&self) -> usize {
        self.expand * self.d_model
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

// ── Initializers ────────────────────────────────────────────────────

fn uniform_vec<S: Scalar>(rng: &mut StreamRng, n: usize, bound: f64) -> Vec<S> {
    (0..n).map(|_| S::from_f64(rng.uniform(-bound, bound))).collect()
}

/// Linear layer weights `[fan_in, fan_out]` with the conventional
/// `1/sqrt(fan_in)` uniform bound.
fn linear_init<S: Scalar>(
    store: &mut ParamStore<S>,
    rng: &mut StreamRng,
    name: &str,
    fan_in: usize,
    fan_out: usize,
    bias: bool,
) -> (ParamId, Option<ParamId>) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let w = store.add(
        format!("{name}.weight"),
        vec![fan_in, fan_out],
        uniform_vec(rng, fan_in * fan_out, bound),
    );
    let b = bias.then(|| {
        store.add(
            format!("{name}.bias"),
            vec![fan_out],
            uniform_vec(rng, fan_out, bound),
        )
    });
    (w, b)
}

fn layer_norm_init<S: Scalar>(store: &mut ParamStore<S>, name: &str, d: usize) -> (ParamId, ParamId) {
    let gamma = store.add(format!("{name}.gamma"), vec![d], vec![S::ONE; d]);
    let beta = store.add(format!("{name}.beta"), vec![d], vec![S::ZERO; d]);
    (gamma, beta)
}

fn apply_linear<S: Scalar>(
    p: &Lifted<S>,
    x: &Tensor<S>,
    w: ParamId,
    b: Option<ParamId>,
) -> Result<Tensor<S>> {
    let y = ops::matmul(x, p.get(w))?;
    match b {
        Some(b) => ops::add_row_broadcast(&y, p.get(b)),
        None => Ok(y),
    }
}

// ── Gated scan block ────────────────────────────────────────────────

/// One gated two-branch block: normalized input is projected up, passed
/// through a causal conv, SiLU and the selective scan on the main branch,
/// normalized again, gated by the SiLU branch and projected back down.
pub struct MambaBlock {
    pub config: SsmConfig,
    ln1: (ParamId, ParamId),
    in_proj: (ParamId, Option<ParamId>),
    conv_w: ParamId,
    conv_b: ParamId,
    dt_low: (ParamId, Option<ParamId>),
    dt_proj: (ParamId, Option<ParamId>),
    b_proj: (ParamId, Option<ParamId>),
    c_proj: (ParamId, Option<ParamId>),
    a_log: ParamId,
    ln2: (ParamId, ParamId),
    gate_proj: (ParamId, Option<ParamId>),
    out_proj: (ParamId, Option<ParamId>),
}

impl MambaBlock {
    /// Initialize parameters under `prefix` in the store.
    ///
    /// The diagonal state matrix is parameterized as `a = -exp(a_log)` with
    /// `a_log[c, n] = ln(n + 1)`, keeping every entry strictly negative for
    /// any trained value. The timescale bias is drawn so that softplus
    /// outputs start inside [1e-3, 1e-1].
    pub fn init<S: Scalar>(
        store: &mut ParamStore<S>,
        rng: &mut StreamRng,
        prefix: &str,
        config: SsmConfig,
    ) -> MambaBlock {
        let d = config.d_model;
        let inner = config.d_inner();
        let ln1 = layer_norm_init(store, &format!("{prefix}.ln1"), d);
        let in_proj = linear_init(store, rng, &format!("{prefix}.in_proj"), d, inner, true);
        let conv_bound = 1.0 / (config.conv_width as f64).sqrt();
        let conv_w = store.add(
            format!("{prefix}.conv.weight"),
            vec![inner, config.conv_width],
            uniform_vec(rng, inner * config.conv_width, conv_bound),
        );
        let conv_b = store.add(
            format!("{prefix}.conv.bias"),
            vec![inner],
            uniform_vec(rng, inner, conv_bound),
        );
        let dt_low = linear_init(store, rng, &format!("{prefix}.dt_low"), inner, config.dt_rank, false);
        // dt_proj bias: inverse softplus of a log-uniform draw in [1e-3, 1e-1].
        let dt_w_bound = 1.0 / (config.dt_rank as f64).sqrt();
        let dt_w = store.add(
            format!("{prefix}.dt_proj.weight"),
            vec![config.dt_rank, inner],
            uniform_vec(rng, config.dt_rank * inner, dt_w_bound),
        );
        let dt_bias: Vec<S> = (0..inner)
            .map(|_| {
                let target = (rng.uniform((1e-3f64).ln(), (1e-1f64).ln())).exp();
                S::from_f64((target.exp_m1()).ln())
            })
            .collect();
        let dt_b = store.add(format!("{prefix}.dt_proj.bias"), vec![inner], dt_bias);
        let b_proj = linear_init(store, rng, &format!("{prefix}.b_proj"), inner, config.state_size, false);
        let c_proj = linear_init(store, rng, &format!("{prefix}.c_proj"), inner, config.state_size, false);
        let a_log_data: Vec<S> = (0..inner)
            .flat_map(|_| (0..config.state_size).map(|n| S::from_f64(((n + 1) as f64).ln())))
            .collect();
        let a_log = store.add(
            format!("{prefix}.a_log"),
            vec![inner, config.state_size],
            a_log_data,
        );
        let ln2 = layer_norm_init(store, &format!("{prefix}.ln2"), inner);
        let gate_proj = linear_init(store, rng, &format!("{prefix}.gate_proj"), d, inner, true);
        let out_proj = linear_init(store, rng, &format!("{prefix}.out_proj"), inner, d, true);
        MambaBlock {
            config,
            ln1,
            in_proj,
            conv_w,
            conv_b,
            dt_low: (dt_low.0, dt_low.1),
            dt_proj: (dt_w, Some(dt_b)),
            b_proj,
            c_proj,
            a_log,
            ln2,
            gate_proj,
            out_proj,
        }
    }

    fn scan_branch<S: Scalar>(&self, p: &Lifted<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
        let normed = ops::layer_norm(x, p.get(self.ln1.0), p.get(self.ln1.1))?;
        let projected = apply_linear(p, &normed, self.in_proj.0, self.in_proj.1)?;
        let conv = ops::depthwise_conv1d(&projected, p.get(self.conv_w), p.get(self.conv_b))?;
        let activated = ops::silu(&conv);
        let dt_low = apply_linear(p, &activated, self.dt_low.0, self.dt_low.1)?;
        let delta = ops::softplus(&apply_linear(p, &dt_low, self.dt_proj.0, self.dt_proj.1)?);
        let b = apply_linear(p, &activated, self.b_proj.0, self.b_proj.1)?;
        let c = apply_linear(p, &activated, self.c_proj.0, self.c_proj.1)?;
        let a = ops::neg(&ops::exp(p.get(self.a_log)));
        let scanned = selective_scan(&activated, &delta, &a, &b, &c)?;
        ops::layer_norm(&scanned, p.get(self.ln2.0), p.get(self.ln2.1))
    }

    /// Apply the block in the given scan direction. The backward direction
    /// is literally reverse -> forward machinery -> reverse with this
    /// block's own parameters.
    pub fn forward<S: Scalar>(
        &self,
        p: &Lifted<S>,
        input: &Tensor<S>,
        direction: Direction,
    ) -> Result<Tensor<S>> {
        let x = match direction {
            Direction::Forward => input.clone(),
            Direction::Backward => ops::reverse_rows(input)?,
        };
        let main = self.scan_branch(p, &x)?;
        let gate = ops::silu(&apply_linear(p, &x, self.gate_proj.0, self.gate_proj.1)?);
        let gated = ops::hadamard(&main, &gate)?;
        let out = apply_linear(p, &gated, self.out_proj.0, self.out_proj.1)?;
        match direction {
            Direction::Forward => Ok(out),
            Direction::Backward => ops::reverse_rows(&out),
        }
    }
}

// ── Bidirectional layer ─────────────────────────────────────────────

/// Sum of a forward-scanning and a backward-scanning block over the same
/// input, with an optional residual connection around the pair.
pub struct BidirectionalLayer {
    pub forward_block: MambaBlock,
    pub backward_block: MambaBlock,
    pub residual: bool,
}

impl BidirectionalLayer {
    pub fn init<S: Scalar>(
        store: &mut ParamStore<S>,
        rng: &mut StreamRng,
        prefix: &str,
        config: SsmConfig,
        residual: bool,
    ) -> BidirectionalLayer {
        BidirectionalLayer {
            forward_block: MambaBlock::init(store, rng, &format!("{prefix}.fwd"), config),
            backward_block: MambaBlock::init(store, rng, &format!("{prefix}.bwd"), config),
            residual,
        }
    }

    pub fn forward<S: Scalar>(&self, p: &Lifted<S>, input: &Tensor<S>) -> Result<Tensor<S>> {
        let fwd = self.forward_block.forward(p, input, Direction::Forward)?;
        let bwd = self.backward_block.forward(p, input, Direction::Backward)?;
        let sum = ops::add(&fwd, &bwd)?;
        if self.residual {
            ops::add(&sum, input)
        } else {
            Ok(sum)
        }
    }
}

/// Stack of bidirectional layers behind an input projection, used as the
/// temporal encoder (and, with an output projection, the decoder).
pub struct SequenceStack {
    in_proj: (ParamId, Option<ParamId>),
    layers: Vec<BidirectionalLayer>,
    out_proj: Option<(ParamId, Option<ParamId>)>,
    pub input_dim: usize,
    pub d_model: usize,
}

impl SequenceStack {
    #[allow(clippy::too_many_arguments)]
    pub fn init<S: Scalar>(
        store: &mut ParamStore<S>,
        rng: &mut StreamRng,
        prefix: &str,
        input_dim: usize,
        config: SsmConfig,
        num_layers: usize,
        residual: bool,
        output_dim: Option<usize>,
    ) -> SequenceStack {
        let in_proj = linear_init(
            store,
            rng,
            &format!("{prefix}.in_proj"),
            input_dim,
            config.d_model,
            true,
        );
        let layers = (0..num_layers)
            .map(|i| {
                BidirectionalLayer::init(store, rng, &format!("{prefix}.layer{i}"), config, residual)
            })
            .collect();
        let out_proj = output_dim.map(|dim| {
            linear_init(
                store,
                rng,
                &format!("{prefix}.out_proj"),
                config.d_model,
                dim,
                true,
            )
        });
        SequenceStack {
            in_proj,
            layers,
            out_proj,
            input_dim,
            d_model: config.d_model,
        }
    }

    pub fn forward<S: Scalar>(&self, p: &Lifted<S>, input: &Tensor<S>) -> Result<Tensor<S>> {
        if input.rank() != 2 || input.cols() != self.input_dim {
            return Err(Error::shape(
                "sequence_stack",
                format!(
                    "expected [T, {}], got {:?}",
                    self.input_dim,
                    input.shape()
                ),
            ));
        }
        let mut x = apply_linear(p, input, self.in_proj.0, self.in_proj.1)?;
        for layer in &self.layers {
            x = layer.forward(p, &x)?;
        }
        match &self.out_proj {
            Some((w, b)) => apply_linear(p, &x, *w, *b),
            None => Ok(x),
        }
    }
}
