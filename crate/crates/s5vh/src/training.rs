//! Two-view masked training: augmentation, optimizer, schedule, early
//! stopping and checkpointing.

use std::path::Path;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::hashing::{video_hash, Binarize};
use crate::losses::{
    center_alignment_loss, contrastive_loss, reconstruction_loss, total_loss, LossWeights,
};
use crate::manifest::VideoFeatures;
use crate::model::HashModel;
use crate::params::Lifted;
use crate::rng::StreamRng;
use crate::scalar::Scalar;
use crate::tensor::{ops, Tape, Tensor};

// ── Masked views ────────────────────────────────────────────────────

/// One augmented view: the kept frame indices (in temporal order) and the
/// dropped ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedView {
    pub visible: Vec<usize>,
    pub masked: Vec<usize>,
}

/// Sample one view by dropping `round(mask_ratio * n_frames)` frames
/// uniformly without replacement.
pub fn make_view(n_frames: usize, mask_ratio: f64, rng: &mut StreamRng) -> Result<MaskedView> {
    if n_frames < 2 {
        return Err(Error::invalid("make_views", "need at least 2 frames"));
    }
    let num_masked = (mask_ratio * n_frames as f64).round() as usize;
    if num_masked == 0 || num_masked >= n_frames {
        return Err(Error::invalid(
            "make_views",
            format!("mask ratio {mask_ratio} drops {num_masked} of {n_frames} frames"),
        ));
    }
    let mut masked = rng.sample_without_replacement(n_frames, num_masked);
    masked.sort_unstable();
    let mut is_masked = vec![false; n_frames];
    for &m in &masked {
        is_masked[m] = true;
    }
    let visible = (0..n_frames).filter(|&i| !is_masked[i]).collect();
    Ok(MaskedView { visible, masked })
}

/// Two independent views of one video.
pub fn make_views(
    n_frames: usize,
    mask_ratio: f64,
    rng: &mut StreamRng,
) -> Result<(MaskedView, MaskedView)> {
    Ok((
        make_view(n_frames, mask_ratio, rng)?,
        make_view(n_frames, mask_ratio, rng)?,
    ))
}

// ── Schedule ────────────────────────────────────────────────────────

/// Cosine-annealed learning rate from `lr_max` at epoch 0 to `lr_min` at the
/// final epoch.
pub fn step_schedule(epoch: usize, max_epochs: usize, lr_max: f64, lr_min: f64) -> f64 {
    if max_epochs <= 1 {
        return lr_max;
    }
    let progress = epoch as f64 / (max_epochs - 1) as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (std::f64::consts::PI * progress).cos())
}

// ── Optimizer ───────────────────────────────────────────────────────

/// AdamW with the conventional defaults (beta1 0.9, beta2 0.999, eps 1e-8,
/// decoupled weight decay 0.01).
pub struct AdamW<S: Scalar> {
    first_moment: Vec<Vec<S>>,
    second_moment: Vec<Vec<S>>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl<S: Scalar> AdamW<S> {
    pub fn new(param_sizes: &[usize], weight_decay: f64) -> AdamW<S> {
        AdamW {
            first_moment: param_sizes.iter().map(|&n| vec![S::ZERO; n]).collect(),
            second_moment: param_sizes.iter().map(|&n| vec![S::ZERO; n]).collect(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }

    /// Apply one update; `grads[i]` pairs with the store's i-th parameter.
    pub fn step(&mut self, store: &mut crate::params::ParamStore<S>, grads: &[Vec<S>], lr: f64) {
        assert_eq!(store.len(), self.first_moment.len());
        assert_eq!(grads.len(), self.first_moment.len());
        self.step += 1;
        let b1 = S::from_f64(self.beta1);
        let b2 = S::from_f64(self.beta2);
        let one_minus_b1 = S::from_f64(1.0 - self.beta1);
        let one_minus_b2 = S::from_f64(1.0 - self.beta2);
        let bias1 = S::from_f64(1.0 - self.beta1.powi(self.step as i32));
        let bias2 = S::from_f64(1.0 - self.beta2.powi(self.step as i32));
        let eps = S::from_f64(self.eps);
        let lr_s = S::from_f64(lr);
        let decay = S::from_f64(lr * self.weight_decay);
        for ((id, grad), (m, v)) in store
            .ids()
            .collect::<Vec<_>>()
            .into_iter()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(&mut self.second_moment))
        {
            let param = store.data_mut(id);
            for i in 0..param.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + one_minus_b1 * g;
                v[i] = b2 * v[i] + one_minus_b2 * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                param[i] -= lr_s * (m_hat / (v_hat.sqrt() + eps)) + decay * param[i];
            }
        }
    }
}

// ── Batch loss ──────────────────────────────────────────────────────

/// Scalar loss parts of one batch, still attached to the tape.
pub struct BatchLosses<S: Scalar> {
    pub total: Tensor<S>,
    pub reconstruction: f64,
    pub contrastive: f64,
    pub center_alignment: f64,
}

/// Full two-view objective for a batch of videos. Both views run through
/// the same lifted parameter set, so the encoder and hash layer are shared
/// by construction. `binarize` selects the straight-through code path
/// (training) or its smooth surrogate (gradient verification).
#[allow(clippy::too_many_arguments)]
pub fn batch_loss<S: Scalar>(
    model: &HashModel<S>,
    params: &Lifted<S>,
    features: &[Tensor<S>],
    views: &[(MaskedView, MaskedView)],
    pseudo_labels: &[usize],
    centers: &Tensor<S>,
    weights: &LossWeights,
    binarize: Binarize,
) -> Result<BatchLosses<S>> {
    let batch = features.len();
    if batch == 0 {
        return Err(Error::invalid("batch_loss", "empty batch"));
    }
    if views.len() != batch || pseudo_labels.len() != batch {
        return Err(Error::invalid(
            "batch_loss",
            format!(
                "{batch} feature tensors with {} views and {} labels",
                views.len(),
                pseudo_labels.len()
            ),
        ));
    }
    let mut tr_sums: [Option<Tensor<S>>; 2] = [None, None];
    let mut codes: [Vec<Tensor<S>>; 2] = [Vec::with_capacity(batch), Vec::with_capacity(batch)];
    for (item, (view1, view2)) in features.iter().zip(views) {
        let total_frames = item.rows();
        for (slot, view) in [view1, view2].into_iter().enumerate() {
            let visible = ops::gather_rows(item, &view.visible)?;
            let frame_codes = model.frame_codes(params, &visible)?;
            let code = video_hash(&frame_codes, binarize)?;
            codes[slot].push(ops::reshape(&code, vec![1, code.numel()])?);
            let reconstructed =
                model.reconstruct(params, &frame_codes, &view.visible, total_frames)?;
            let tr = reconstruction_loss(&reconstructed, item, &view.masked)?;
            tr_sums[slot] = Some(match tr_sums[slot].take() {
                Some(acc) => ops::add(&acc, &tr)?,
                None => tr,
            });
        }
    }
    let inv_batch = S::ONE / S::from_f64(batch as f64);
    let tr1 = ops::scale(tr_sums[0].as_ref().unwrap(), inv_batch);
    let tr2 = ops::scale(tr_sums[1].as_ref().unwrap(), inv_batch);
    let view1_refs: Vec<&Tensor<S>> = codes[0].iter().collect();
    let view2_refs: Vec<&Tensor<S>> = codes[1].iter().collect();
    let b1 = ops::concat_rows(&view1_refs)?;
    let b2 = ops::concat_rows(&view2_refs)?;
    let cl = contrastive_loss(&b1, &b2, weights.tau)?;
    let ca1 = center_alignment_loss(&b1, pseudo_labels, centers, weights.tau)?;
    let ca2 = center_alignment_loss(&b2, pseudo_labels, centers, weights.tau)?;
    let total = total_loss((&tr1, &tr2), &cl, (&ca1, &ca2), weights)?;
    Ok(BatchLosses {
        reconstruction: 0.5 * (tr1.item().to_f64() + tr2.item().to_f64()),
        contrastive: cl.item().to_f64(),
        center_alignment: 0.5 * (ca1.item().to_f64() + ca2.item().to_f64()),
        total,
    })
}

// ── Trainer ─────────────────────────────────────────────────────────

#[derive(Debug, Clone, serde::Serialize)]
pub struct LogRow {
    pub epoch: usize,
    pub step: u64,
    pub l_tr: f64,
    pub l_cl: f64,
    pub l_ca: f64,
    pub total: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_total: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub stopped_early: bool,
}

pub struct Trainer {
    pub model: HashModel<f32>,
    pub config: RunConfig,
    /// Effective loss weights; initialized from the config. Ablation
    /// experiments may zero individual terms here.
    pub weights: LossWeights,
    videos: Vec<VideoFeatures>,
    pseudo_labels: Vec<usize>,
    centers: Vec<f32>,
    num_centers: usize,
    optimizer: AdamW<f32>,
    mask_stream: StreamRng,
    batch_stream: StreamRng,
    pub log: Vec<LogRow>,
    global_step: u64,
    best_loss: f64,
    best_epoch: usize,
    best_snapshot: Option<Vec<Vec<f32>>>,
    epochs_without_improvement: usize,
}

impl Trainer {
    /// `centers` is the row-major [num_centers, code_bits] ±1 matrix;
    /// `pseudo_labels[i]` is the precomputed cluster of `videos[i]`.
    pub fn new(
        config: RunConfig,
        videos: Vec<VideoFeatures>,
        pseudo_labels: Vec<usize>,
        centers: Vec<f32>,
        num_centers: usize,
    ) -> Result<Trainer> {
        config.validate()?;
        if videos.is_empty() {
            return Err(Error::invalid("train", "no training videos"));
        }
        if pseudo_labels.len() != videos.len() {
            return Err(Error::invalid(
                "train",
                format!(
                    "{} pseudo labels for {} videos",
                    pseudo_labels.len(),
                    videos.len()
                ),
            ));
        }
        if centers.len() != num_centers * config.code_bits {
            return Err(Error::shape(
                "train",
                format!(
                    "{} center values for {num_centers} centers of {} bits",
                    centers.len(),
                    config.code_bits
                ),
            ));
        }
        if let Some(&bad) = pseudo_labels.iter().find(|&&l| l >= num_centers) {
            return Err(Error::invalid(
                "train",
                format!("pseudo label {bad} out of range for {num_centers} centers"),
            ));
        }
        let dim = videos[0].dim;
        for v in &videos {
            if v.dim != dim || v.n_frames != videos[0].n_frames {
                return Err(Error::Manifest(format!(
                    "video `{}` breaks the uniform training shape",
                    v.id
                )));
            }
        }
        let model = HashModel::new(config.model_config(dim), config.seed)?;
        let param_sizes: Vec<usize> = model
            .store
            .ids()
            .map(|id| model.store.data(id).len())
            .collect();
        let optimizer = AdamW::new(&param_sizes, config.weight_decay);
        let mask_stream = StreamRng::new(config.seed, "masks");
        let batch_stream = StreamRng::new(config.seed, "batches");
        let weights = config.loss_weights();
        Ok(Trainer {
            model,
            config,
            weights,
            videos,
            pseudo_labels,
            centers,
            num_centers,
            optimizer,
            mask_stream,
            batch_stream,
            log: Vec::new(),
            global_step: 0,
            best_loss: f64::INFINITY,
            best_epoch: 0,
            best_snapshot: None,
            epochs_without_improvement: 0,
        })
    }

    pub fn num_videos(&self) -> usize {
        self.videos.len()
    }

    /// One pass over the corpus: masked views are re-sampled per epoch, the
    /// video order is reshuffled, and one optimizer step runs per batch.
    pub fn run_epoch(&mut self, epoch: usize) -> Result<EpochStats> {
        let lr = step_schedule(
            epoch,
            self.config.max_epochs,
            self.config.lr_max,
            self.config.lr_min,
        );
        let weights = self.weights;
        let mut order: Vec<usize> = (0..self.videos.len()).collect();
        self.batch_stream.substream(&[epoch as u64]).shuffle(&mut order);

        let mut weighted_total = 0.0;
        let mut examples = 0usize;
        for (batch_index, batch_ids) in order.chunks(self.config.batch_size).enumerate() {
            let tape = Tape::new();
            let params = self.model.lift(Some(&tape))?;
            let mut features = Vec::with_capacity(batch_ids.len());
            let mut views = Vec::with_capacity(batch_ids.len());
            let mut labels = Vec::with_capacity(batch_ids.len());
            for &vid in batch_ids {
                let video = &self.videos[vid];
                features.push(Tensor::constant(
                    video.data.clone(),
                    vec![video.n_frames, video.dim],
                )?);
                let mut view_rng = self.mask_stream.substream(&[epoch as u64, vid as u64]);
                views.push(make_views(
                    video.n_frames,
                    self.config.mask_ratio,
                    &mut view_rng,
                )?);
                labels.push(self.pseudo_labels[vid]);
            }
            let centers_t = Tensor::constant(
                self.centers.clone(),
                vec![self.num_centers, self.config.code_bits],
            )?;
            let losses = batch_loss(
                &self.model,
                &params,
                &features,
                &views,
                &labels,
                &centers_t,
                &weights,
                Binarize::SignSte,
            )?;
            let total_value = losses.total.item().to_f64();
            if !total_value.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss at epoch {epoch}, batch {batch_index} (videos {:?})",
                    batch_ids
                        .iter()
                        .map(|&v| self.videos[v].id.as_str())
                        .collect::<Vec<_>>()
                )));
            }
            let grads = losses.total.backward()?;
            let grad_buffers: Vec<Vec<f32>> = self
                .model
                .store
                .ids()
                .map(|id| grads.wrt(params.get(id)))
                .collect();
            self.optimizer.step(&mut self.model.store, &grad_buffers, lr);

            self.global_step += 1;
            self.log.push(LogRow {
                epoch,
                step: self.global_step,
                l_tr: losses.reconstruction,
                l_cl: losses.contrastive,
                l_ca: losses.center_alignment,
                total: total_value,
                lr,
            });
            weighted_total += total_value * batch_ids.len() as f64;
            examples += batch_ids.len();
        }
        Ok(EpochStats {
            epoch,
            mean_total: weighted_total / examples as f64,
            lr,
        })
    }

    /// Track the best epoch and report whether patience is exhausted.
    pub fn observe_epoch(&mut self, stats: &EpochStats) -> bool {
        if stats.mean_total < self.best_loss - self.config.improvement_threshold {
            self.best_loss = stats.mean_total;
            self.best_epoch = stats.epoch;
            self.best_snapshot = Some(self.model.store.snapshot());
            self.epochs_without_improvement = 0;
        } else {
            self.epochs_without_improvement += 1;
        }
        self.epochs_without_improvement >= self.config.patience
    }

    /// Full loop with early stopping; restores the best parameters.
    pub fn train(&mut self) -> Result<TrainSummary> {
        let mut epochs_run = 0;
        let mut stopped_early = false;
        for epoch in 0..self.config.max_epochs {
            let stats = self.run_epoch(epoch)?;
            epochs_run = epoch + 1;
            if self.observe_epoch(&stats) {
                stopped_early = true;
                break;
            }
        }
        self.restore_best();
        Ok(TrainSummary {
            epochs_run,
            best_epoch: self.best_epoch,
            best_loss: self.best_loss,
            stopped_early,
        })
    }

    /// Load the best snapshot back into the model (no-op when training never
    /// improved on the initialization).
    pub fn restore_best(&mut self) {
        if let Some(snapshot) = &self.best_snapshot {
            self.model.store.restore(snapshot);
        }
    }

    /// Write `train_log.csv` under `dir`.
    pub fn write_log(&self, dir: &Path) -> Result<()> {
        let path = dir.join("train_log.csv");
        let mut text = String::from("epoch,step,l_tr,l_cl,l_ca,total,lr\n");
        for row in &self.log {
            text.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                row.epoch, row.step, row.l_tr, row.l_cl, row.l_ca, row.total, row.lr
            ));
        }
        std::fs::write(&path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn view_sizes_follow_rounding() {
        let mut rng = StreamRng::new(1, "views");
        let (v1, v2) = make_views(30, 0.5, &mut rng).unwrap();
        assert_eq!(v1.masked.len(), 15);
        assert_eq!(v2.masked.len(), 15);
        let (v1, _) = make_views(25, 0.75, &mut rng).unwrap();
        assert_eq!(v1.masked.len(), 19);
        // Visible indices keep temporal order and partition the range.
        let mut all: Vec<usize> = v1.visible.iter().chain(&v1.masked).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..25).collect::<Vec<_>>());
        assert!(v1.visible.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn views_deterministic_given_seed() {
        let mut a = StreamRng::new(9, "masks").substream(&[3, 14]);
        let mut b = StreamRng::new(9, "masks").substream(&[3, 14]);
        assert_eq!(
            make_views(20, 0.5, &mut a).unwrap(),
            make_views(20, 0.5, &mut b).unwrap()
        );
    }

    #[test]
    fn infeasible_mask_ratio_errors() {
        let mut rng = StreamRng::new(1, "views");
        assert!(make_view(10, 0.01, &mut rng).is_err()); // rounds to 0 frames
        assert!(make_view(10, 0.99, &mut rng).is_err()); // rounds to all frames
        assert!(make_view(1, 0.5, &mut rng).is_err());
    }

    #[test]
    fn schedule_endpoints_and_midpoint() {
        let max = 350;
        assert!((step_schedule(0, max, 5e-4, 1e-5) - 5e-4).abs() < 1e-12);
        assert!((step_schedule(max - 1, max, 5e-4, 1e-5) - 1e-5).abs() < 1e-12);
        // Odd epoch count puts an exact midpoint on the grid.
        let mid = step_schedule(50, 101, 5e-4, 1e-5);
        assert!((mid - 2.55e-4).abs() < 1e-9, "{mid}");
        assert_eq!(step_schedule(0, 1, 5e-4, 1e-5), 5e-4);
    }

    #[test]
    fn both_views_share_one_parameter_set() {
        use crate::model::{HashModel, ModelConfig};
        let config = ModelConfig {
            feature_dim: 4,
            code_bits: 4,
            d_encoder: 6,
            encoder_layers: 1,
            d_decoder: 6,
            decoder_layers: 1,
            state_size: 3,
            conv_width: 3,
            expand: 2,
            residual: true,
        };
        let model: HashModel<f64> = HashModel::new(config, 3).unwrap();
        let tape = Tape::new();
        let params = model.lift(Some(&tape)).unwrap();
        // Exactly one tape leaf per parameter: the views cannot be feeding
        // copies, there is only a single lifted set.
        assert_eq!(tape.num_nodes(), model.store.len());
        let features = vec![Tensor::leaf(&tape, vec![0.1; 6 * 4], vec![6, 4]).unwrap()];
        let mut rng = StreamRng::new(1, "t");
        let views = vec![make_views(6, 0.5, &mut rng).unwrap()];
        let centers = Tensor::constant(vec![1.0, -1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0], vec![2, 4])
            .unwrap();
        let losses = batch_loss(
            &model,
            &params,
            &features,
            &views,
            &[0],
            &centers,
            &LossWeights::default(),
            Binarize::SignSte,
        )
        .unwrap();
        let grads = losses.total.backward().unwrap();
        // Both views' contributions land on the single lifted tensors.
        for id in model.store.ids() {
            if model.store.name(id).starts_with("hash.") {
                assert!(grads.get(params.get(id)).is_some());
            }
        }
    }

    #[test]
    fn nan_features_abort_with_batch_diagnostic() {
        use crate::manifest::VideoFeatures;
        let mut videos = Vec::new();
        for i in 0..4 {
            let mut data = vec![0.1f32; 6 * 4];
            if i == 2 {
                data[5] = f32::NAN;
            }
            videos.push(VideoFeatures {
                id: format!("v{i}"),
                label: None,
                n_frames: 6,
                dim: 4,
                data,
            });
        }
        let config = RunConfig {
            seed: 1,
            num_centers: 2,
            code_bits: 4,
            batch_size: 4,
            max_epochs: 2,
            d_encoder: 6,
            encoder_layers: 1,
            d_decoder: 6,
            decoder_layers: 1,
            state_size: 3,
            conv_width: 3,
            ..RunConfig::default()
        };
        let centers = vec![1.0f32, -1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0];
        let mut trainer = Trainer::new(config, videos, vec![0, 1, 0, 1], centers, 2).unwrap();
        let err = trainer.run_epoch(0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("batch") && msg.contains("epoch 0"), "{msg}");
    }

    #[test]
    fn early_stopping_waits_out_the_full_patience() {
        use crate::manifest::VideoFeatures;
        let videos = vec![VideoFeatures {
            id: "v0".to_string(),
            label: None,
            n_frames: 4,
            dim: 2,
            data: vec![0.1; 8],
        }];
        let config = RunConfig {
            seed: 1,
            num_centers: 1,
            code_bits: 2,
            patience: 5,
            d_encoder: 4,
            encoder_layers: 1,
            d_decoder: 4,
            decoder_layers: 1,
            state_size: 2,
            conv_width: 2,
            ..RunConfig::default()
        };
        let mut trainer = Trainer::new(config, videos, vec![0], vec![1.0, -1.0], 1).unwrap();
        // Flat loss: the first observation improves on +inf, then nothing
        // does. Patience 5 means the stop signal fires on the 6th epoch at
        // the earliest.
        for epoch in 0..5 {
            let stats = EpochStats {
                epoch,
                mean_total: 1.0,
                lr: 1e-4,
            };
            let stop = trainer.observe_epoch(&stats);
            assert_eq!(stop, epoch == 5, "epoch {epoch}");
            if stop {
                break;
            }
        }
        let stats = EpochStats {
            epoch: 5,
            mean_total: 1.0,
            lr: 1e-4,
        };
        assert!(trainer.observe_epoch(&stats));
    }

    #[test]
    fn adamw_descends_on_a_quadratic() {
        let mut store: crate::params::ParamStore<f32> = crate::params::ParamStore::new();
        let id = store.add("x", vec![2], vec![5.0, -3.0]);
        let mut opt: AdamW<f32> = AdamW::new(&[2], 0.0);
        for _ in 0..500 {
            let grads = vec![store.data(id).iter().map(|&x| 2.0 * x).collect::<Vec<f32>>()];
            opt.step(&mut store, &grads, 0.05);
        }
        assert!(store.data(id).iter().all(|&x| x.abs() < 1e-2));
    }
}
