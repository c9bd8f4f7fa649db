//! The three training signals and their weighted total: masked temporal
//! reconstruction, symmetric contrastive alignment between two views' video
//! codes, and cross-entropy alignment of each code to its semantic hash
//! center.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{ops, Tensor};

/// Balancing weights and softmax temperature.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 1.0,
            beta: 1.0,
            tau: 0.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.alpha <= 0.0 || self.beta <= 0.0 || self.tau <= 0.0 {
            return Err(Error::Config(format!(
                "loss weights must be positive: alpha={}, beta={}, tau={}",
                self.alpha, self.beta, self.tau
            )));
        }
        Ok(())
    }
}

/// Mean squared reconstruction error over the masked frames only.
///
/// `reconstructed` and `original` are [N_t, D]; `masked` lists the dropped
/// frame indices and must be non-empty.
pub fn reconstruction_loss<S: Scalar>(
    reconstructed: &Tensor<S>,
    original: &Tensor<S>,
    masked: &[usize],
) -> Result<Tensor<S>> {
    if reconstructed.shape() != original.shape() {
        return Err(Error::shape(
            "reconstruction_loss",
            format!("{:?} vs {:?}", reconstructed.shape(), original.shape()),
        ));
    }
    if masked.is_empty() {
        return Err(Error::invalid("reconstruction_loss", "empty mask set"));
    }
    let picked_rec = ops::gather_rows(reconstructed, masked)?;
    let picked_orig = ops::gather_rows(original, masked)?;
    let diff = ops::sub(&picked_rec, &picked_orig)?;
    let squared = ops::hadamard(&diff, &diff)?;
    Ok(ops::scale(
        &ops::sum_all(&squared),
        S::ONE / S::from_f64(masked.len() as f64),
    ))
}

/// Cosine of two ±1 codes is their inner product over K, so the similarity
/// matrix between views is `B1 B2^T / K`.
fn code_similarity_logits<S: Scalar>(
    view1: &Tensor<S>,
    view2: &Tensor<S>,
    tau: f64,
) -> Result<Tensor<S>> {
    let k = view1.cols();
    let sim = ops::matmul(view1, &ops::transpose(view2)?)?;
    Ok(ops::scale(&sim, S::from_f64(1.0 / (k as f64 * tau))))
}

/// Symmetric two-view contrastive loss over a batch of video codes.
///
/// For each video, both the row softmax (its view-1 code against every
/// view-2 code) and the column softmax must put mass on the matching pair;
/// the per-video losses are averaged over the batch.
pub fn contrastive_loss<S: Scalar>(
    view1: &Tensor<S>,
    view2: &Tensor<S>,
    tau: f64,
) -> Result<Tensor<S>> {
    if view1.rank() != 2 || view1.shape() != view2.shape() {
        return Err(Error::shape(
            "contrastive_loss",
            format!("{:?} vs {:?}", view1.shape(), view2.shape()),
        ));
    }
    if view1.rows() == 0 {
        return Err(Error::invalid("contrastive_loss", "empty batch"));
    }
    let logits = code_similarity_logits(view1, view2, tau)?;
    let row_lse = ops::log_sum_exp_rows(&logits)?;
    let col_lse = ops::log_sum_exp_rows(&ops::transpose(&logits)?)?;
    let matched = ops::diag(&logits)?;
    let per_video = ops::add(
        &ops::sub(&row_lse, &matched)?,
        &ops::sub(&col_lse, &matched)?,
    )?;
    Ok(ops::mean_all(&per_video))
}

/// Cross-entropy of each video code against all hash centers under cosine
/// similarity over temperature, targeting the code's pseudo label. Averaged
/// over the batch.
pub fn center_alignment_loss<S: Scalar>(
    codes: &Tensor<S>,
    labels: &[usize],
    centers: &Tensor<S>,
    tau: f64,
) -> Result<Tensor<S>> {
    if codes.rank() != 2 || centers.rank() != 2 || codes.cols() != centers.cols() {
        return Err(Error::shape(
            "center_alignment_loss",
            format!("codes {:?} vs centers {:?}", codes.shape(), centers.shape()),
        ));
    }
    let batch = codes.rows();
    if batch == 0 || labels.len() != batch {
        return Err(Error::invalid(
            "center_alignment_loss",
            format!("{} labels for batch of {batch}", labels.len()),
        ));
    }
    let num_centers = centers.rows();
    for (i, &c) in labels.iter().enumerate() {
        if c >= num_centers {
            return Err(Error::invalid(
                "center_alignment_loss",
                format!("label {c} of video {i} out of range for {num_centers} centers"),
            ));
        }
    }
    let logits = code_similarity_logits(codes, centers, tau)?;
    let lse = ops::log_sum_exp_rows(&logits)?;
    // Pull each row's own-label logit via a constant one-hot mask.
    let mut one_hot = vec![S::ZERO; batch * num_centers];
    for (i, &c) in labels.iter().enumerate() {
        one_hot[i * num_centers + c] = S::ONE;
    }
    let mask = Tensor::constant(one_hot, vec![batch, num_centers])?;
    let own = ops::scale(
        &ops::mean_over_axis(&ops::hadamard(&logits, &mask)?, 1)?,
        S::from_f64(num_centers as f64),
    );
    Ok(ops::mean_all(&ops::sub(&lse, &own)?))
}

/// Weighted total: mean of the two reconstruction terms, plus
/// `alpha` times the contrastive term, plus `beta` times the mean of the two
/// center-alignment terms.
pub fn total_loss<S: Scalar>(
    reconstruction: (&Tensor<S>, &Tensor<S>),
    contrastive: &Tensor<S>,
    center_alignment: (&Tensor<S>, &Tensor<S>),
    weights: &LossWeights,
) -> Result<Tensor<S>> {
    let half = S::from_f64(0.5);
    let tr = ops::scale(&ops::add(reconstruction.0, reconstruction.1)?, half);
    let ca = ops::scale(
        &ops::add(center_alignment.0, center_alignment.1)?,
        S::from_f64(0.5 * weights.beta),
    );
    let cl = ops::scale(contrastive, S::from_f64(weights.alpha));
    ops::add(&ops::add(&tr, &cl)?, &ca)
}
