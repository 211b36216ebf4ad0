//! Mini-batch training with Adam.

use alloc::vec::Vec;

use super::network::{accumulate_example, Example, Workspace};
use super::{Adam, ModelParams, PredictionPair, Scalar};
use crate::imaging::{augment, AugmentPolicy, Image};
use crate::rng::{self, Rng};
use crate::taxonomy::{MaterialClass, ObjectClass};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub batch: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub augment: AugmentPolicy,
    pub seed: u64,
    /// Stop before `epochs` once an epoch's running training accuracy
    /// reaches this value on both heads.
    pub stop_at_train_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 1e-4,
            batch: 16,
            epochs: 20,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            augment: AugmentPolicy::default(),
            seed: 0,
            stop_at_train_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0.is_finite() && self.lr0 >= 0.0) {
            return Err(Error::InvalidArgument(alloc::format!("lr0 must be >= 0, got {}", self.lr0)));
        }
        if self.batch == 0 || self.epochs == 0 {
            return Err(Error::InvalidArgument("batch and epochs must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return Err(Error::InvalidArgument("Adam betas must lie in [0, 1) and eps > 0".into()));
        }
        if let Some(a) = self.stop_at_train_accuracy {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::InvalidArgument(alloc::format!("stop accuracy must lie in (0, 1], got {a}")));
            }
        }
        Ok(())
    }
}

/// Learning rate as a function of the epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    Constant,
    /// `lr0 * gamma^epoch`
    ExponentialPerEpoch { gamma: f64 },
}

impl LrSchedule {
    pub fn lr(&self, lr0: f64, epoch: usize) -> f64 {
        match *self {
            LrSchedule::Constant => lr0,
            LrSchedule::ExponentialPerEpoch { gamma } => lr0 * libm::pow(gamma, epoch as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub lr: f64,
    /// Mean joint loss over the epoch's (augmented) new examples.
    pub mean_loss: f64,
    pub acc_object: f64,
    pub acc_material: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub steps: usize,
}

/// A replayed example already prepared by the hook (augmentation included).
#[derive(Debug, Clone)]
pub struct ExtraExample {
    pub image: Image,
    pub object: ObjectClass,
    pub material: MaterialClass,
}

/// Extension points used by the continual-learning loop.
pub trait StepHook {
    /// Examples appended to the batch of step `step`.
    fn extra_examples(&mut self, _step: usize) -> Result<Vec<ExtraExample>> {
        Ok(Vec::new())
    }

    /// Called after each optimizer step with the per-example joint losses of
    /// the new examples (`data` indices) and of the extra examples.
    fn after_step(&mut self, _indices: &[usize], _new_losses: &[f64], _extra_losses: &[f64]) -> Result<()> {
        Ok(())
    }
}

pub(crate) struct NoHook;
impl StepHook for NoHook {}

/// Shuffled example order of an epoch.
pub(crate) fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut r = rng::sub_rng(seed, 0x5155_0000 + epoch as u64);
    for i in (1..n).rev() {
        let j = r.gen_range(0..=i);
        order.swap(i, j);
    }
    order
}

fn augment_seed(seed: u64, epoch: usize, index: usize) -> u64 {
    rng::derive(rng::derive(seed, 0xA000_0000 + epoch as u64), index as u64)
}

/// Trains on `data`, returning the updated weights and per-epoch statistics.
pub fn train<T: Scalar>(
    params: &ModelParams<T>,
    data: &[Example<'_>],
    cfg: &TrainConfig,
    schedule: LrSchedule,
) -> Result<(ModelParams<T>, TrainReport)> {
    let mut p = params.clone();
    let report = train_in_place(&mut p, data, cfg, schedule, &mut NoHook)?;
    Ok((p, report))
}

pub(crate) fn train_in_place<T: Scalar>(
    params: &mut ModelParams<T>,
    data: &[Example<'_>],
    cfg: &TrainConfig,
    schedule: LrSchedule,
    hook: &mut dyn StepHook,
) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut adam = Adam::with_betas(params.param_count(), cfg.beta1, cfg.beta2, cfg.eps);
    let mut ws = Workspace::new();
    let mut grad = alloc::vec![T::zero(); params.param_count()];
    let mut report = TrainReport::default();
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        let lr = schedule.lr(cfg.lr0, epoch);
        let order = epoch_order(data.len(), cfg.seed, epoch);
        let (mut loss_sum, mut ok_o, mut ok_m) = (0.0, 0usize, 0usize);
        for chunk in order.chunks(cfg.batch) {
            let augmented: Vec<Image> = chunk
                .iter()
                .map(|&i| augment(data[i].image, augment_seed(cfg.seed, epoch, i), &cfg.augment))
                .collect::<Result<_>>()?;
            let extra = hook.extra_examples(step)?;
            let total = chunk.len() + extra.len();
            let scale = 1.0 / total as f64;
            if grad.len() != params.param_count() {
                grad.resize(params.param_count(), T::zero());
            }
            for g in grad.iter_mut() {
                *g = T::zero();
            }
            let mut new_losses = Vec::with_capacity(chunk.len());
            for (img, &i) in augmented.iter().zip(chunk) {
                let ex = Example { image: img, object: data[i].object, material: data[i].material };
                let (lo, lm, co, cm) = accumulate_example(params, &ex, scale, &mut ws, &mut grad)?;
                new_losses.push(lo + lm);
                ok_o += co as usize;
                ok_m += cm as usize;
            }
            let mut extra_losses = Vec::with_capacity(extra.len());
            for e in &extra {
                let ex = Example { image: &e.image, object: e.object, material: e.material };
                let (lo, lm, _, _) = accumulate_example(params, &ex, scale, &mut ws, &mut grad)?;
                extra_losses.push(lo + lm);
            }
            let batch_loss = (new_losses.iter().sum::<f64>() + extra_losses.iter().sum::<f64>()) * scale;
            if !batch_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, step, loss: batch_loss });
            }
            adam.step(params.values_mut(), &grad, lr);
            hook.after_step(chunk, &new_losses, &extra_losses)?;
            loss_sum += new_losses.iter().sum::<f64>();
            step += 1;
        }
        let n = data.len() as f64;
        let stats = EpochStats { lr, mean_loss: loss_sum / n, acc_object: ok_o as f64 / n, acc_material: ok_m as f64 / n };
        report.epochs.push(stats);
        if cfg.stop_at_train_accuracy.is_some_and(|a| stats.acc_object >= a && stats.acc_material >= a) {
            break;
        }
    }
    report.steps = step;
    Ok(report)
}

/// Predictions for every image, in order.
pub fn predict_all<T: Scalar>(params: &ModelParams<T>, images: &[&Image]) -> Result<Vec<PredictionPair>> {
    let mut ws = Workspace::new();
    images.iter().map(|img| params.forward_with(img, &mut ws)).collect()
}

/// Top-1 accuracy of both heads, `(object, material)`.
pub fn evaluate<T: Scalar>(params: &ModelParams<T>, data: &[Example<'_>]) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let mut ws = Workspace::new();
    let (mut co, mut cm) = (0usize, 0usize);
    for ex in data {
        let pred = params.forward_with(ex.image, &mut ws)?;
        co += (pred.top1_object == ex.object) as usize;
        cm += (pred.top1_material == ex.material) as usize;
    }
    let n = data.len() as f64;
    Ok((co as f64 / n, cm as f64 / n))
}
