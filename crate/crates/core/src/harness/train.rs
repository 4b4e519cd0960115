//! Optimizer, input encoding and the per-iteration training step.

use alloc::format;
use alloc::vec::Vec;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use super::augment::{augment, TrainSample};
use super::sampling::sample_minibatch;
use crate::geometry::{aabb_of, AnchorBox};
use crate::image::{ColorImage, DepthImage};
use crate::net::{
    assign_gpn_targets, assign_groi_targets, backbone_forward, generate_anchors, gpn_forward, gpn_loss, groi_forward,
    groi_loss, proposal_selection, total_loss, GpnAssignment, GpnBatch, GpnOutput, Graph, GroiAssignment, GroiBatch,
    IouThresholds, LossWeights, ModelConfig, ParamStore, ProposalConfig, Roi, Scalar, Tensor,
};
use crate::{Error, Result};

/// Source of the grasp depth at inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthMode {
    /// Regress the offset from the reference depth.
    Regress,
    /// Measured depth at the grasp center plus a fixed offset; the depth
    /// head is neither trained nor read.
    Center,
}

impl FromStr for DepthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regress" => Ok(Self::Regress),
            "center" => Ok(Self::Center),
            other => Err(Error::Config(format!("unknown depth mode {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Fraction of `iterations` after which the learning rate drops tenfold.
    pub decay_at: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub gpn_samples: usize,
    pub groi_samples: usize,
    pub gpn_positive_fraction: f64,
    pub groi_positive_fraction: f64,
    pub augment: bool,
    /// Add ground-truth boxes to the second-stage candidates.
    pub gt_proposals: bool,
    pub proposals: ProposalConfig,
    pub loss_weights: LossWeights,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            momentum: 0.9,
            weight_decay: 1e-4,
            decay_at: 0.8,
            batch_size: 2,
            iterations: 6000,
            gpn_samples: 512,
            groi_samples: 512,
            gpn_positive_fraction: 0.5,
            groi_positive_fraction: 0.25,
            augment: true,
            gt_proposals: true,
            proposals: ProposalConfig::default(),
            loss_weights: LossWeights::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fraction = |f: f64| f > 0.0 && f < 1.0;
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("optimizer settings out of range".into()));
        }
        if self.batch_size == 0 || self.gpn_samples == 0 || self.groi_samples == 0 {
            return Err(Error::Config("batch and sample counts must be positive".into()));
        }
        if !fraction(self.gpn_positive_fraction) || !fraction(self.groi_positive_fraction) {
            return Err(Error::Config("positive fractions must lie in (0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.decay_at) {
            return Err(Error::Config("decay point must be a fraction of the run".into()));
        }
        self.loss_weights.validate()
    }

    /// Learning rate in effect at `iteration`.
    pub fn learning_rate_at(&self, iteration: usize) -> f64 {
        if (iteration as f64) < self.decay_at * self.iterations as f64 {
            self.learning_rate
        } else {
            self.learning_rate * 0.1
        }
    }
}

/// `v <- momentum v + grad + decay p; p <- p - lr v`.
pub fn sgd_step<T: Scalar>(
    params: &mut ParamStore<T>,
    grads: &ParamStore<T>,
    velocity: &mut ParamStore<T>,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    let (lr, momentum, weight_decay) = (T::from_f64(lr), T::from_f64(momentum), T::from_f64(weight_decay));
    for (name, p) in params.tensors.iter_mut() {
        let g = grads.get(name)?;
        let v = velocity.tensors.entry(name.clone()).or_insert_with(|| Tensor::zeros(&p.shape));
        if g.shape != p.shape || v.shape != p.shape {
            return Err(Error::Shape(format!("gradient for {name} has the wrong shape")));
        }
        for ((p, &g), v) in p.data.iter_mut().zip(&g.data).zip(v.data.iter_mut()) {
            *v = momentum * *v + g + weight_decay * *p;
            *p -= lr * *v;
        }
    }
    Ok(())
}

/// Input scaling: color to roughly unit range, depth around the working
/// distance.
pub const COLOR_MEAN: f64 = 0.5;
pub const COLOR_SCALE: f64 = 0.25;
pub const DEPTH_MEAN: f64 = 0.55;
pub const DEPTH_SCALE: f64 = 0.05;

/// Network inputs `[N, 3, H, W]` for color and for depth replicated to three
/// channels. Holes map to zero.
pub fn network_inputs<T: Scalar>(color: &[&ColorImage], depth: &[&DepthImage]) -> Result<(Tensor<T>, Tensor<T>)> {
    let first = color.first().ok_or_else(|| Error::Shape("empty image batch".into()))?;
    let (w, h) = (first.width, first.height);
    if depth.len() != color.len()
        || color.iter().any(|c| (c.width, c.height) != (w, h))
        || depth.iter().any(|d| (d.width, d.height) != (w, h))
    {
        return Err(Error::Shape("color and depth images must share one size".into()));
    }
    let hw = w * h;
    let mut rgb = Vec::with_capacity(color.len() * 3 * hw);
    let mut dep = Vec::with_capacity(color.len() * 3 * hw);
    for (c, d) in color.iter().zip(depth) {
        for ch in 0..3 {
            rgb.extend((0..hw).map(|i| T::from_f64((c.data[3 * i + ch] as f64 / 255.0 - COLOR_MEAN) / COLOR_SCALE)));
        }
        let plane: Vec<T> = d
            .data
            .iter()
            .map(|&v| if v > 0.0 { T::from_f64((v as f64 - DEPTH_MEAN) / DEPTH_SCALE) } else { T::zero() })
            .collect();
        for _ in 0..3 {
            dep.extend_from_slice(&plane);
        }
    }
    let shape = [color.len(), 3, h, w];
    Ok((Tensor::from_vec(&shape, rgb)?, Tensor::from_vec(&shape, dep)?))
}

/// Unweighted loss terms and the weighted total of one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepLosses {
    pub gpn_cls: f64,
    pub gpn_reg: f64,
    pub groi_cls: f64,
    pub groi_reg: f64,
    pub groi_score: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Trained(StepLosses),
    /// No positive or negative sample in the batch; parameters unchanged.
    Skipped,
}

/// Stateless 64-bit mixer for deriving sub-seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Training state: parameters, momentum buffers and the iteration counter.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: ModelConfig,
    pub config: TrainConfig,
    pub mode: DepthMode,
    pub params: ParamStore<f32>,
    pub velocity: ParamStore<f32>,
    pub iteration: usize,
    order: Vec<usize>,
    epoch: Option<usize>,
}

impl Trainer {
    pub fn new(model: ModelConfig, config: TrainConfig, mode: DepthMode) -> Result<Self> {
        config.validate()?;
        let params = model.init_params(mix_seed(config.seed, 1))?;
        Ok(Self::resume(model, config, mode, params, 0))
    }

    pub fn resume(model: ModelConfig, config: TrainConfig, mode: DepthMode, params: ParamStore<f32>, iteration: usize) -> Self {
        Self { model, config, mode, params, velocity: ParamStore::new(), iteration, order: Vec::new(), epoch: None }
    }

    /// Dataset indices of the next batch: epochs are seeded permutations.
    fn batch_indices(&mut self, len: usize) -> Vec<usize> {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        (0..self.config.batch_size)
            .map(|b| {
                let pos = self.iteration * self.config.batch_size + b;
                let epoch = pos / len;
                if self.epoch != Some(epoch) || self.order.len() != len {
                    self.order = (0..len).collect();
                    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(mix_seed(self.config.seed, 0x100 + epoch as u64));
                    self.order.shuffle(&mut rng);
                    self.epoch = Some(epoch);
                }
                self.order[pos % len]
            })
            .collect()
    }

    /// Draw the next batch from `dataset`, augment it and take one step.
    pub fn train_iteration(&mut self, dataset: &[TrainSample]) -> Result<StepOutcome> {
        if dataset.is_empty() {
            return Err(Error::Config("empty training set".into()));
        }
        let picked = self.batch_indices(dataset.len());
        let batch: Vec<TrainSample> = picked
            .iter()
            .enumerate()
            .map(|(b, &i)| {
                if self.config.augment {
                    augment(&dataset[i], mix_seed(self.config.seed, ((self.iteration as u64) << 8) | b as u64))
                } else {
                    dataset[i].clone()
                }
            })
            .collect();
        self.step(&batch)
    }

    /// One optimizer step on an already prepared batch.
    pub fn step(&mut self, batch: &[TrainSample]) -> Result<StepOutcome> {
        let seed = mix_seed(self.config.seed, 0x5000_0000 + self.iteration as u64);
        let (grads, losses) = match compute_gradients(&self.params, &self.model, &self.config, self.mode, batch, seed)? {
            Some(x) => x,
            None => {
                self.iteration += 1;
                return Ok(StepOutcome::Skipped);
            }
        };
        if !losses.total.is_finite() {
            return Err(Error::Diverged(self.iteration));
        }
        let lr = self.config.learning_rate_at(self.iteration);
        sgd_step(&mut self.params, &grads, &mut self.velocity, lr, self.config.momentum, self.config.weight_decay)?;
        self.iteration += 1;
        Ok(StepOutcome::Trained(losses))
    }
}

/// Forward, target assignment, sampling, losses and backward for one batch.
/// `None` when the batch holds no usable sample.
pub fn compute_gradients<T: Scalar>(
    params: &ParamStore<T>,
    model: &ModelConfig,
    cfg: &TrainConfig,
    mode: DepthMode,
    batch: &[TrainSample],
    seed: u64,
) -> Result<Option<(ParamStore<T>, StepLosses)>> {
    let colors: Vec<&ColorImage> = batch.iter().map(|s| &s.color).collect();
    let depths: Vec<&DepthImage> = batch.iter().map(|s| &s.depth).collect();
    let (rgb, dep) = network_inputs::<T>(&colors, &depths)?;
    let (w, h) = (colors[0].width, colors[0].height);
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let rgb = g.input(rgb, false);
    let dep = g.input(dep, false);
    let backbone = backbone_forward(&mut g, &bound, rgb, Some(dep), model)?;
    let (_, _, fh, fw) = g.value(backbone.feature).dims4();
    let anchors: Vec<AnchorBox> = generate_anchors(fh, fw, &model.anchors);
    let heads = gpn_forward(&mut g, &bound, backbone.feature, model)?;
    let gpn_out = GpnOutput::read(&g, &heads);

    let per_image = anchors.len();
    let mut gpn_batch = GpnBatch::default();
    let mut groi_batch = GroiBatch { regress_depth: mode == DepthMode::Regress, ..Default::default() };
    let mut rois: Vec<Roi> = Vec::new();
    let mut roi_labels: Vec<usize> = Vec::new();
    for (b, sample) in batch.iter().enumerate() {
        let offset = b * per_image;
        let assigned = assign_gpn_targets(&anchors, &sample.labels, &IouThresholds::gpn())?;
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for (i, a) in assigned.iter().enumerate() {
            match a {
                GpnAssignment::Positive { .. } => pos.push(i),
                GpnAssignment::Negative => neg.push(i),
                GpnAssignment::Ignore => {}
            }
        }
        if let Some(mb) = sample_minibatch(&pos, &neg, cfg.gpn_samples, cfg.gpn_positive_fraction, mix_seed(seed, 2 * b as u64)) {
            for &i in &mb.positives {
                let GpnAssignment::Positive { target, .. } = assigned[i] else { unreachable!() };
                gpn_batch.cls_rows.push(offset + i);
                gpn_batch.cls_labels.push(1);
                gpn_batch.reg_rows.push(offset + i);
                gpn_batch.reg_targets.push(target);
            }
            for &i in &mb.negatives {
                gpn_batch.cls_rows.push(offset + i);
                gpn_batch.cls_labels.push(0);
            }
        }

        let mut candidates: Vec<AnchorBox> = proposal_selection(
            &gpn_out.probs[offset..offset + per_image],
            &gpn_out.deltas[offset..offset + per_image],
            &anchors,
            (w, h),
            cfg.proposals.post_nms_train,
            &cfg.proposals,
        )
        .into_iter()
        .map(|p| p.rect)
        .collect();
        if cfg.gt_proposals {
            candidates.extend(sample.labels.iter().map(|l| aabb_of(l).clipped(w, h)).filter(|b| b.w > 0.0 && b.h > 0.0));
        }
        let assigned = assign_groi_targets(&candidates, &sample.labels, &sample.depth, &IouThresholds::groi())?;
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for (i, a) in assigned.iter().enumerate() {
            match a {
                GroiAssignment::Positive { .. } => pos.push(i),
                GroiAssignment::Negative => neg.push(i),
                GroiAssignment::Ignore => {}
            }
        }
        if let Some(mb) =
            sample_minibatch(&pos, &neg, cfg.groi_samples, cfg.groi_positive_fraction, mix_seed(seed, 2 * b as u64 + 1))
        {
            for &i in &mb.positives {
                let GroiAssignment::Positive { target, score, .. } = assigned[i] else { unreachable!() };
                groi_batch.positives.push(rois.len());
                groi_batch.targets.push(target);
                groi_batch.scores.push(score);
                roi_labels.push(1);
                rois.push(Roi { batch: b, rect: candidates[i] });
            }
            for &i in &mb.negatives {
                roi_labels.push(0);
                rois.push(Roi { batch: b, rect: candidates[i] });
            }
        }
    }
    if gpn_batch.cls_rows.is_empty() && rois.is_empty() {
        return Ok(None);
    }
    groi_batch.labels = roi_labels;
    let w8 = &cfg.loss_weights;
    let gpn = gpn_loss(&mut g, heads.cls, heads.reg, &gpn_batch, w8)?;
    let groi = if rois.is_empty() {
        let zero = g.input(Tensor::scalar(T::zero()), false);
        crate::net::GroiLoss { cls: zero, reg: zero, score: zero, total: zero }
    } else {
        let out = groi_forward(&mut g, &bound, backbone.feature, &rois, model)?;
        groi_loss(&mut g, out.reg, out.cls, out.score, &groi_batch, w8)?
    };
    let total = total_loss(&mut g, &gpn, &groi)?;
    let read = |v| g.value(v).data[0].as_f64();
    let losses = StepLosses {
        gpn_cls: read(gpn.cls),
        gpn_reg: read(gpn.reg),
        groi_cls: read(groi.cls),
        groi_reg: read(groi.reg),
        groi_score: read(groi.score),
        total: read(total),
    };
    g.backward(total)?;
    Ok(Some((bound.grads(&g), losses)))
}
