//! End-to-end gradient verification: every primitive, every loss term, and
//! the full two-view model objective on a toy batch, all checked against
//! 64-bit central finite differences.

use crate::error::Result;
use crate::hashing::Binarize;
use crate::losses::{
    center_alignment_loss, contrastive_loss, reconstruction_loss, total_loss, LossWeights,
};
use crate::model::{HashModel, ModelConfig};
use crate::rng::StreamRng;
use crate::tensor::gradcheck::{check_primitives, grad_check, DEFAULT_EPS};
use crate::tensor::{ops, Tape, Tensor};
use crate::training::{batch_loss, make_views};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_error: f64,
}

/// Finite-difference checks for each tensor primitive.
pub fn primitive_checks(seed: u64) -> Result<Vec<CheckResult>> {
    Ok(check_primitives(seed)?
        .into_iter()
        .map(|(name, max_rel_error)| CheckResult {
            name: format!("primitive/{name}"),
            max_rel_error,
        })
        .collect())
}

/// Finite-difference checks for the three loss terms and their total.
pub fn loss_checks(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = StreamRng::new(seed, "gradcheck-losses");
    fn draw(rng: &mut StreamRng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.uniform(-0.9, 0.9)).collect()
    }
    let mut results = Vec::new();

    let err = grad_check(
        |xs| reconstruction_loss(&xs[0], &xs[1], &[0, 2, 3]),
        &[
            (draw(&mut rng, 5 * 4), vec![5, 4]),
            (draw(&mut rng, 5 * 4), vec![5, 4]),
        ],
        DEFAULT_EPS,
    )?;
    results.push(CheckResult {
        name: "loss/temporal_reconstruction".to_string(),
        max_rel_error: err,
    });

    let err = grad_check(
        |xs| contrastive_loss(&xs[0], &xs[1], 0.5),
        &[
            (draw(&mut rng, 4 * 6), vec![4, 6]),
            (draw(&mut rng, 4 * 6), vec![4, 6]),
        ],
        DEFAULT_EPS,
    )?;
    results.push(CheckResult {
        name: "loss/contrastive".to_string(),
        max_rel_error: err,
    });

    let code_input = (draw(&mut rng, 4 * 6), vec![4, 6]);
    let centers: Vec<f64> = (0..3 * 6)
        .map(|_| if rng.next_f64() < 0.5 { -1.0 } else { 1.0 })
        .collect();
    let centers_t = Tensor::constant(centers, vec![3, 6])?;
    let err = grad_check(
        move |xs| center_alignment_loss(&xs[0], &[2, 0, 1, 2], &centers_t, 0.5),
        &[code_input],
        DEFAULT_EPS,
    )?;
    results.push(CheckResult {
        name: "loss/center_alignment".to_string(),
        max_rel_error: err,
    });

    let weights = LossWeights {
        alpha: 0.8,
        beta: 1.2,
        tau: 0.5,
    };
    let err = grad_check(
        move |xs| {
            total_loss(
                (&ops::mean_all(&xs[0]), &ops::mean_all(&xs[1])),
                &ops::mean_all(&xs[2]),
                (&ops::mean_all(&xs[3]), &ops::mean_all(&xs[4])),
                &weights,
            )
        },
        &[
            (draw(&mut rng, 3), vec![3]),
            (draw(&mut rng, 3), vec![3]),
            (draw(&mut rng, 1), vec![1]),
            (draw(&mut rng, 1), vec![1]),
            (draw(&mut rng, 1), vec![1]),
        ],
        DEFAULT_EPS,
    )?;
    results.push(CheckResult {
        name: "loss/total".to_string(),
        max_rel_error: err,
    });
    Ok(results)
}

fn toy_model_config() -> ModelConfig {
    ModelConfig {
        feature_dim: 6,
        code_bits: 4,
        d_encoder: 8,
        encoder_layers: 1,
        d_decoder: 8,
        decoder_layers: 1,
        state_size: 4,
        conv_width: 3,
        expand: 2,
        residual: true,
    }
}

/// Full objective on a 2-video toy batch, differentiated with respect to
/// every model parameter and every input feature.
///
/// The sign binarization is replaced by its smooth surrogate for the
/// perturbed forward passes; the straight-through training path has the
/// identical backward pass by construction (asserted separately), so this
/// verifies exactly the gradients training uses.
pub fn full_model_check(seed: u64, eps: f64) -> Result<CheckResult> {
    let config = toy_model_config();
    let (t_frames, dim) = (5, config.feature_dim);
    let mut model: HashModel<f64> = HashModel::new(config.clone(), seed)?;
    let mut rng = StreamRng::new(seed, "gradcheck-model");
    let mut feature_data: Vec<Vec<f64>> = (0..2)
        .map(|_| (0..t_frames * dim).map(|_| rng.uniform(-1.0, 1.0)).collect())
        .collect();
    let mut view_rng = StreamRng::new(seed, "gradcheck-views");
    let views = vec![
        make_views(t_frames, 0.4, &mut view_rng)?,
        make_views(t_frames, 0.4, &mut view_rng)?,
    ];
    let labels = vec![0usize, 2];
    let centers: Vec<f64> = (0..3 * config.code_bits)
        .map(|_| if rng.next_f64() < 0.5 { -1.0 } else { 1.0 })
        .collect();
    let weights = LossWeights {
        alpha: 1.0,
        beta: 1.0,
        tau: 0.5,
    };

    // Analytic pass: parameters and features both on the tape.
    let tape = Tape::new();
    let params = model.lift(Some(&tape))?;
    let feature_tensors: Vec<Tensor<f64>> = feature_data
        .iter()
        .map(|d| Tensor::leaf(&tape, d.clone(), vec![t_frames, dim]))
        .collect::<Result<_>>()?;
    let centers_t = Tensor::constant(centers.clone(), vec![3, config.code_bits])?;
    let losses = batch_loss(
        &model,
        &params,
        &feature_tensors,
        &views,
        &labels,
        &centers_t,
        &weights,
        Binarize::Identity,
    )?;
    let grads = losses.total.backward()?;
    let param_grads: Vec<Vec<f64>> = model
        .store
        .ids()
        .map(|id| grads.wrt(params.get(id)))
        .collect();
    let feature_grads: Vec<Vec<f64>> = feature_tensors.iter().map(|t| grads.wrt(t)).collect();

    // Forward-only evaluation for perturbed points.
    let eval = |model: &HashModel<f64>, feature_data: &[Vec<f64>]| -> Result<f64> {
        let params = model.lift(None)?;
        let feature_tensors: Vec<Tensor<f64>> = feature_data
            .iter()
            .map(|d| Tensor::constant(d.clone(), vec![t_frames, dim]))
            .collect::<Result<_>>()?;
        let centers_t = Tensor::constant(centers.clone(), vec![3, config.code_bits])?;
        let losses = batch_loss(
            model,
            &params,
            &feature_tensors,
            &views,
            &labels,
            &centers_t,
            &weights,
            Binarize::Identity,
        )?;
        Ok(losses.total.item())
    };

    let mut max_rel: f64 = 0.0;
    let ids: Vec<_> = model.store.ids().collect();
    for (slot, id) in ids.iter().enumerate() {
        for e in 0..model.store.data(*id).len() {
            let original = model.store.data(*id)[e];
            model.store.data_mut(*id)[e] = original + eps;
            let plus = eval(&model, &feature_data)?;
            model.store.data_mut(*id)[e] = original - eps;
            let minus = eval(&model, &feature_data)?;
            model.store.data_mut(*id)[e] = original;
            let fd = (plus - minus) / (2.0 * eps);
            let rel = (param_grads[slot][e] - fd).abs() / fd.abs().max(1.0);
            max_rel = max_rel.max(rel);
        }
    }
    for (v, grad) in feature_grads.iter().enumerate() {
        for e in 0..feature_data[v].len() {
            let original = feature_data[v][e];
            feature_data[v][e] = original + eps;
            let plus = eval(&model, &feature_data)?;
            feature_data[v][e] = original - eps;
            let minus = eval(&model, &feature_data)?;
            feature_data[v][e] = original;
            let fd = (plus - minus) / (2.0 * eps);
            let rel = (grad[e] - fd).abs() / fd.abs().max(1.0);
            max_rel = max_rel.max(rel);
        }
    }
    Ok(CheckResult {
        name: "model/full_objective_2_videos".to_string(),
        max_rel_error: max_rel,
    })
}

/// The complete verification suite, as run by the `gradcheck` subcommand.
pub fn run_all(seed: u64) -> Result<Vec<CheckResult>> {
    let mut results = primitive_checks(seed)?;
    results.extend(loss_checks(seed)?);
    results.push(full_model_check(seed, DEFAULT_EPS)?);
    Ok(results)
}
