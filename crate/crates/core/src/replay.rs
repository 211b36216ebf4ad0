//! Experience replay: a bounded memory of past examples, the sampling
//! disciplines that decide what it keeps, post-hoc bias correction of newly
//! added classes, and the task-stream training loop.
//!
//! Replay during a task only draws memories stored by *earlier* tasks, so a
//! single task trained from an empty buffer is exactly plain training.

use alloc::collections::BTreeSet;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::corpus::Corpus;
use crate::imaging::{augment, AugmentPolicy, Image};
use crate::nn::{
    cross_entropy, evaluate, train_in_place, Example, ExtraExample, Head, LogitCorrection, LrSchedule,
    ModelParams, Scalar, StepHook, TrainConfig, TrainReport, Workspace,
};
use crate::rng::{self, ChaCha8Rng, Rng};
use crate::taxonomy::{MaterialClass, ObjectClass};
use crate::{Error, Result};

/// Guards inverse-loss weights against zero losses.
pub const LOSS_EPSILON: f64 = 1e-3;

pub const DEFAULT_CAPACITY: usize = 500;

// stands in for the loss of labels a head cannot represent yet
const LOSS_CEILING: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct BufferItem {
    pub image: Arc<Image>,
    pub object: ObjectClass,
    pub material: MaterialClass,
    /// Joint loss the last time the item went through the network.
    pub last_loss: f64,
    pub task_id: usize,
    pub insert_step: u64,
}

impl BufferItem {
    /// Class key used for balancing: the (object, material) pair.
    pub fn class_key(&self) -> (u16, u16) {
        (self.object.0, self.material.0)
    }
}

/// How a full buffer decides what to admit and what to evict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    Reservoir,
    Balanced,
    LossAware,
    /// Balanced admission with inverse-loss eviction inside the
    /// most-populated class.
    BalancedLossAware,
}

impl SamplingMode {
    pub fn from_flags(balanced: bool, loss_aware: bool) -> Self {
        match (balanced, loss_aware) {
            (false, false) => SamplingMode::Reservoir,
            (true, false) => SamplingMode::Balanced,
            (false, true) => SamplingMode::LossAware,
            (true, true) => SamplingMode::BalancedLossAware,
        }
    }

    fn balanced(self) -> bool {
        matches!(self, SamplingMode::Balanced | SamplingMode::BalancedLossAware)
    }

    fn loss_aware(self) -> bool {
        matches!(self, SamplingMode::LossAware | SamplingMode::BalancedLossAware)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    mode: SamplingMode,
    items: Vec<BufferItem>,
    seen_count: u64,
    // slots excluded from replay while they serve as a bias-fitting holdout
    held_out: Vec<bool>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, mode: SamplingMode) -> Self {
        Self { capacity, mode, items: Vec::new(), seen_count: 0, held_out: Vec::new() }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn mode(&self) -> SamplingMode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: SamplingMode) {
        self.mode = mode;
    }

    pub fn items(&self) -> &[BufferItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.items.len() >= self.capacity
    }

    /// Total number of stream items offered so far.
    pub fn seen_count(&self) -> u64 {
        self.seen_count
    }

    pub fn set_loss(&mut self, slot: usize, loss: f64) {
        if let Some(it) = self.items.get_mut(slot) {
            if loss.is_finite() {
                it.last_loss = loss.max(0.0);
            }
        }
    }

    /// Item count per class key, sorted by key.
    pub fn class_counts(&self) -> Vec<((u16, u16), usize)> {
        let mut counts: Vec<((u16, u16), usize)> = Vec::new();
        for it in &self.items {
            let k = it.class_key();
            match counts.binary_search_by_key(&k, |c| c.0) {
                Ok(i) => counts[i].1 += 1,
                Err(i) => counts.insert(i, (k, 1)),
            }
        }
        counts
    }

    /// Offers an item using the buffer's sampling mode. Returns the slot it
    /// was written to, if admitted.
    pub fn insert<R: Rng + ?Sized>(&mut self, item: BufferItem, rng: &mut R) -> Option<usize> {
        self.seen_count += 1;
        if self.capacity == 0 {
            return None;
        }
        if self.items.len() < self.capacity {
            self.items.push(item);
            self.held_out.push(false);
            return Some(self.items.len() - 1);
        }
        let admit = if self.mode.balanced() && self.is_under_represented(item.class_key()) {
            true
        } else {
            rng.gen_range(0..self.seen_count) < self.capacity as u64
        };
        if !admit {
            return None;
        }
        let slot = self.pick_victim(Some(item.class_key()), rng);
        self.items[slot] = item;
        self.held_out[slot] = false;
        Some(slot)
    }

    fn is_under_represented(&self, key: (u16, u16)) -> bool {
        let counts = self.class_counts();
        let max = counts.iter().map(|c| c.1).max().unwrap_or(0);
        let own = counts.iter().find(|c| c.0 == key).map_or(0, |c| c.1);
        own < max
    }

    /// Draws the slot a full buffer would overwrite next.
    pub fn eviction_slot<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.pick_victim(None, rng)
    }

    /// Balanced modes evict from the most-populated class; when the incoming
    /// class is one of several tied at the top it replaces one of its own,
    /// otherwise ties are broken uniformly.
    fn pick_victim<R: Rng + ?Sized>(&self, incoming: Option<(u16, u16)>, rng: &mut R) -> usize {
        let candidates: Vec<usize> = if self.mode.balanced() {
            let counts = self.class_counts();
            let max = counts.iter().map(|c| c.1).max().unwrap_or(0);
            let tied: Vec<(u16, u16)> = counts.iter().filter(|c| c.1 == max).map(|c| c.0).collect();
            let key = match incoming.filter(|k| tied.contains(k)) {
                Some(k) => k,
                None if tied.len() == 1 => tied[0],
                None => tied[rng.gen_range(0..tied.len())],
            };
            (0..self.items.len()).filter(|&i| self.items[i].class_key() == key).collect()
        } else {
            (0..self.items.len()).collect()
        };
        if !self.mode.loss_aware() {
            return candidates[rng.gen_range(0..candidates.len())];
        }
        let weights: Vec<f64> = candidates.iter().map(|&i| 1.0 / (self.items[i].last_loss + LOSS_EPSILON)).collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        for (k, w) in weights.iter().enumerate() {
            if u < *w {
                return candidates[k];
            }
            u -= w;
        }
        *candidates.last().expect("a full buffer has items")
    }

    fn replay_slots(&self, before_task: usize) -> Vec<usize> {
        (0..self.items.len()).filter(|&i| self.items[i].task_id < before_task && !self.held_out[i]).collect()
    }
}

/// Plain reservoir sampling: append while there is room, afterwards replace a
/// uniformly random slot with probability `capacity / seen_count`.
pub fn reservoir_insert<R: Rng + ?Sized>(buf: &mut ReplayBuffer, item: BufferItem, rng: &mut R) -> Option<usize> {
    with_mode(buf, SamplingMode::Reservoir, item, rng)
}

/// Class-balanced reservoir: a full buffer always admits an item whose class
/// holds fewer slots than the largest class and otherwise tosses the
/// reservoir coin; the evicted slot is uniform within the most-populated
/// class (ties broken uniformly).
pub fn balanced_insert<R: Rng + ?Sized>(buf: &mut ReplayBuffer, item: BufferItem, rng: &mut R) -> Option<usize> {
    with_mode(buf, SamplingMode::Balanced, item, rng)
}

/// Loss-aware reservoir: admission by the reservoir coin, eviction with
/// probability proportional to `1 / (last_loss + LOSS_EPSILON)`, so easy
/// memories go first.
pub fn loss_aware_insert<R: Rng + ?Sized>(buf: &mut ReplayBuffer, item: BufferItem, rng: &mut R) -> Option<usize> {
    with_mode(buf, SamplingMode::LossAware, item, rng)
}

fn with_mode<R: Rng + ?Sized>(buf: &mut ReplayBuffer, mode: SamplingMode, item: BufferItem, rng: &mut R) -> Option<usize> {
    let saved = buf.mode;
    buf.mode = mode;
    let slot = buf.insert(item, rng);
    buf.mode = saved;
    slot
}

/// A replayed example and the slot it came from.
#[derive(Debug, Clone)]
pub struct ReplayDraw {
    pub slot: usize,
    pub example: ExtraExample,
}

/// Draws `n` memories uniformly with replacement. With independent
/// augmentation every draw gets its own augmentation seed; without it the
/// stored image is replayed as is.
pub fn sample_replay_batch<R: Rng + ?Sized>(
    buf: &ReplayBuffer,
    n: usize,
    rng: &mut R,
    cfg: &CLConfig,
    policy: &AugmentPolicy,
) -> Result<Vec<ReplayDraw>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if buf.is_empty() {
        return Err(Error::Empty("replay buffer"));
    }
    let slots: Vec<usize> = (0..buf.len()).collect();
    draw_from(buf, &slots, n, rng, cfg.tricks.independent_buffer_augmentation, policy)
}

fn draw_from<R: Rng + ?Sized>(
    buf: &ReplayBuffer,
    slots: &[usize],
    n: usize,
    rng: &mut R,
    independent_aug: bool,
    policy: &AugmentPolicy,
) -> Result<Vec<ReplayDraw>> {
    (0..n)
        .map(|_| {
            let slot = slots[rng.gen_range(0..slots.len())];
            let it = &buf.items[slot];
            let image = if independent_aug {
                let seed = rng.gen::<u64>();
                augment(&it.image, seed, policy)?
            } else {
                (*it.image).clone()
            };
            Ok(ReplayDraw { slot, example: ExtraExample { image, object: it.object, material: it.material } })
        })
        .collect()
}

/// Fits `z -> a z + b` on the `new_classes` logits by minimizing the mean
/// cross-entropy of `labels` (damped Newton on the two parameters; the
/// objective is convex). Returns the identity when there are no new classes
/// or the labels do not cover both old and new classes.
pub fn fit_bias_from_logits(logits: &[Vec<f64>], labels: &[usize], new_classes: &[usize]) -> Result<LogitCorrection> {
    if logits.len() != labels.len() {
        return Err(Error::Shape(alloc::format!("{} logit rows for {} labels", logits.len(), labels.len())));
    }
    for (z, &y) in logits.iter().zip(labels) {
        if y >= z.len() {
            return Err(Error::LabelOutOfRange { what: "bias-fit label", index: y, len: z.len() });
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("bias-fit logits"));
        }
    }
    let is_new = |c: usize| new_classes.contains(&c);
    let has_new = labels.iter().any(|&y| is_new(y));
    let has_old = labels.iter().any(|&y| !is_new(y));
    if new_classes.is_empty() || !has_new || !has_old {
        return Ok(LogitCorrection::identity());
    }

    let n = labels.len() as f64;
    // small ridge towards the identity keeps the Hessian definite when the
    // new-class logits are constant
    let ridge = 1e-6;
    let objective = |a: f64, b: f64| -> f64 {
        let mut total = 0.0;
        for (z, &y) in logits.iter().zip(labels) {
            let zc: Vec<f64> = corrected(z, new_classes, a, b);
            total += cross_entropy(&zc, y).0;
        }
        total / n + 0.5 * ridge * ((a - 1.0) * (a - 1.0) + b * b)
    };

    let (mut a, mut b) = (1.0, 0.0);
    let mut f = objective(a, b);
    for _ in 0..100 {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (z, &y) in logits.iter().zip(labels) {
            let zc = corrected(z, new_classes, a, b);
            let p = crate::nn::softmax(&zc);
            // per-class derivative of the corrected logit w.r.t. (a, b)
            let (mut ea, mut eb) = (0.0, 0.0);
            let (mut saa, mut sab, mut sbb) = (0.0, 0.0, 0.0);
            for &c in new_classes {
                if c >= z.len() {
                    continue;
                }
                let r = p[c] - (c == y) as u8 as f64;
                ga += r * z[c];
                gb += r;
                ea += p[c] * z[c];
                eb += p[c];
                saa += p[c] * z[c] * z[c];
                sab += p[c] * z[c];
                sbb += p[c];
            }
            haa += saa - ea * ea;
            hab += sab - ea * eb;
            hbb += sbb - eb * eb;
        }
        ga = ga / n + ridge * (a - 1.0);
        gb = gb / n + ridge * b;
        haa = haa / n + ridge;
        hab /= n;
        hbb = hbb / n + ridge;
        if libm::sqrt(ga * ga + gb * gb) < 1e-10 {
            break;
        }
        let det = haa * hbb - hab * hab;
        let (da, db) = if det > 1e-300 {
            ((hbb * ga - hab * gb) / det, (haa * gb - hab * ga) / det)
        } else {
            (ga, gb)
        };
        // backtracking line search
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let (na, nb) = (a - t * da, b - t * db);
            let nf = objective(na, nb);
            if nf <= f - 1e-4 * t * (ga * da + gb * db) {
                a = na;
                b = nb;
                f = nf;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok(LogitCorrection { classes: new_classes.to_vec(), scale: a, offset: b })
}

fn corrected(z: &[f64], new_classes: &[usize], a: f64, b: f64) -> Vec<f64> {
    let mut zc = z.to_vec();
    LogitCorrection { classes: new_classes.to_vec(), scale: a, offset: b }.apply(&mut zc);
    zc
}

/// Applies a correction to a logit vector.
pub fn apply_bias(logits: &[f64], bias: &LogitCorrection) -> Vec<f64> {
    let mut out = logits.to_vec();
    bias.apply(&mut out);
    out
}

/// Bias correction of both heads fitted on held-out labeled images with the
/// network frozen.
pub fn fit_bias_correction<T: Scalar>(
    params: &ModelParams<T>,
    holdout: &[BufferItem],
    new_objects: &[usize],
    new_materials: &[usize],
) -> Result<[LogitCorrection; 2]> {
    let mut ws = Workspace::new();
    let mut zs: [Vec<Vec<f64>>; 2] = [Vec::new(), Vec::new()];
    for it in holdout {
        let [zo, zm] = params.raw_logits_with(&it.image, &mut ws)?;
        zs[0].push(zo);
        zs[1].push(zm);
    }
    let lo: Vec<usize> = holdout.iter().map(|it| it.object.index()).collect();
    let lm: Vec<usize> = holdout.iter().map(|it| it.material.index()).collect();
    Ok([fit_bias_from_logits(&zs[0], &lo, new_objects)?, fit_bias_from_logits(&zs[1], &lm, new_materials)?])
}

/// The five optional tricks layered on plain experience replay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Tricks {
    pub independent_buffer_augmentation: bool,
    pub bias_control: bool,
    pub exp_lr_decay: bool,
    pub balanced_sampling: bool,
    pub loss_aware_sampling: bool,
}

impl Tricks {
    pub const NONE: Self = Self {
        independent_buffer_augmentation: false,
        bias_control: false,
        exp_lr_decay: false,
        balanced_sampling: false,
        loss_aware_sampling: false,
    };
    pub const ALL: Self = Self {
        independent_buffer_augmentation: true,
        bias_control: true,
        exp_lr_decay: true,
        balanced_sampling: true,
        loss_aware_sampling: true,
    };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CLConfig {
    pub tricks: Tricks,
    /// Per-task learning-rate decay factor.
    pub gamma: f64,
    /// Replayed examples appended to every batch of new data.
    pub replay_batch: usize,
    /// Share of the buffer (and of the new task's data) held out for fitting
    /// the bias correction.
    pub bias_fit_fraction: f64,
}

impl Default for CLConfig {
    fn default() -> Self {
        Self { tricks: Tricks::ALL, gamma: 0.75, replay_batch: 16, bias_fit_fraction: 0.1 }
    }
}

impl CLConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidArgument(alloc::format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if self.replay_batch == 0 {
            return Err(Error::InvalidArgument("replay_batch must be >= 1".into()));
        }
        if !(self.bias_fit_fraction > 0.0 && self.bias_fit_fraction < 1.0) {
            return Err(Error::InvalidArgument(alloc::format!(
                "bias_fit_fraction must lie in (0, 1), got {}",
                self.bias_fit_fraction
            )));
        }
        Ok(())
    }

    pub fn sampling_mode(&self) -> SamplingMode {
        SamplingMode::from_flags(self.tricks.balanced_sampling, self.tricks.loss_aware_sampling)
    }

    /// Learning rate used for task `task_id`.
    pub fn task_lr(&self, lr0: f64, task_id: usize) -> f64 {
        if self.tricks.exp_lr_decay {
            lr0 * libm::pow(self.gamma, task_id as f64)
        } else {
            lr0
        }
    }
}

/// One labeled shard of the stream. `id` orders the stream and drives the
/// learning-rate decay; a pretrained model counts as task 0.
#[derive(Debug, Clone, Copy)]
pub struct Task<'a> {
    pub id: usize,
    pub train: &'a Corpus,
    pub test: &'a Corpus,
}

/// Accuracy on task `eval_task_id` after training on task `task_id`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskMetrics {
    pub task_id: usize,
    pub eval_task_id: usize,
    pub top1_object: f64,
    pub top1_material: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CLReport {
    pub rows: Vec<TaskMetrics>,
    /// Tasks skipped because their training shard was empty.
    pub skipped: Vec<usize>,
    pub train: Vec<(usize, TrainReport)>,
}

/// Training configuration used for one task of the stream.
pub fn task_train_config(train: &TrainConfig, cfg: &CLConfig, task_id: usize) -> TrainConfig {
    TrainConfig { lr0: cfg.task_lr(train.lr0, task_id), seed: rng::derive(train.seed, task_id as u64), ..*train }
}

/// Fills the buffer with a corpus the model already knows (typically its
/// pretraining data), recording each item's current loss.
pub fn prime_buffer<T: Scalar>(
    buf: &mut ReplayBuffer,
    params: &ModelParams<T>,
    corpus: &Corpus,
    task_id: usize,
    seed: u64,
) -> Result<()> {
    let mut r = rng::rng(seed);
    let mut ws = Workspace::new();
    for rec in corpus.records() {
        let [zo, zm] = params.raw_logits_with(&rec.image, &mut ws)?;
        let loss = joint_loss(&zo, &zm, rec.object.index(), rec.material.index());
        let item = BufferItem {
            image: rec.image.clone(),
            object: rec.object,
            material: rec.material,
            last_loss: loss,
            task_id,
            insert_step: 0,
        };
        buf.insert(item, &mut r);
    }
    Ok(())
}

fn joint_loss(zo: &[f64], zm: &[f64], o: usize, m: usize) -> f64 {
    let lo = if o < zo.len() { cross_entropy(zo, o).0 } else { f64::INFINITY };
    let lm = if m < zm.len() { cross_entropy(zm, m).0 } else { f64::INFINITY };
    let l = lo + lm;
    if l.is_finite() {
        l
    } else {
        LOSS_CEILING
    }
}

struct ReplayHook<'a> {
    buf: &'a mut ReplayBuffer,
    records: &'a [crate::corpus::SampleRecord],
    /// training-example index → record index
    ids: &'a [usize],
    inserted: Vec<bool>,
    task_id: usize,
    replay_batch: usize,
    independent_aug: bool,
    policy: AugmentPolicy,
    rng: ChaCha8Rng,
    pending: Vec<usize>,
    step: u64,
}

impl StepHook for ReplayHook<'_> {
    fn extra_examples(&mut self, _step: usize) -> Result<Vec<ExtraExample>> {
        self.pending.clear();
        let slots = self.buf.replay_slots(self.task_id);
        if slots.is_empty() {
            return Ok(Vec::new());
        }
        let draws = draw_from(self.buf, &slots, self.replay_batch, &mut self.rng, self.independent_aug, &self.policy)?;
        Ok(draws
            .into_iter()
            .map(|d| {
                self.pending.push(d.slot);
                d.example
            })
            .collect())
    }

    fn after_step(&mut self, indices: &[usize], new_losses: &[f64], extra_losses: &[f64]) -> Result<()> {
        for (&slot, &l) in self.pending.iter().zip(extra_losses) {
            self.buf.set_loss(slot, l);
        }
        self.pending.clear();
        for (&i, &l) in indices.iter().zip(new_losses) {
            if core::mem::replace(&mut self.inserted[i], true) {
                continue;
            }
            let rec = &self.records[self.ids[i]];
            let item = BufferItem {
                image: rec.image.clone(),
                object: rec.object,
                material: rec.material,
                last_loss: if l.is_finite() { l } else { LOSS_CEILING },
                task_id: self.task_id,
                insert_step: self.step,
            };
            self.buf.insert(item, &mut self.rng);
        }
        self.step += 1;
        Ok(())
    }
}

fn choose_subset(n: usize, k: usize, r: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k.min(n) {
        let j = r.gen_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(k.min(n));
    idx.sort_unstable();
    idx
}

fn check_label_space<T: Scalar>(params: &ModelParams<T>, tasks: &[Task<'_>]) -> Result<()> {
    let mut reference: Option<&Corpus> = None;
    for t in tasks {
        for c in [t.train, t.test] {
            if let Some(r) = reference {
                let (a, b) = (r.taxonomy(), c.taxonomy());
                let objs = a.objects().len().min(b.objects().len());
                let mats = a.materials().len().min(b.materials().len());
                if a.objects()[..objs] != b.objects()[..objs] || a.materials()[..mats] != b.materials()[..mats] {
                    return Err(Error::InvalidArgument(alloc::format!(
                        "task {} uses a label space that does not extend the earlier ones",
                        t.id
                    )));
                }
                if b.objects().len() > a.objects().len() || b.materials().len() > a.materials().len() {
                    reference = Some(c);
                }
            } else {
                reference = Some(c);
            }
        }
    }
    let _ = params;
    Ok(())
}

/// Trains on each task in order, replaying memories of earlier tasks, and
/// records the accuracy on every task seen so far after each one.
///
/// The buffer's sampling mode is set from the enabled tricks. Output heads
/// grow (He-initialized rows) when a task brings labels beyond their size.
pub fn cl_run<T: Scalar>(
    params: &ModelParams<T>,
    tasks: &[Task<'_>],
    cfg: &CLConfig,
    train: &TrainConfig,
    buf: &mut ReplayBuffer,
) -> Result<(ModelParams<T>, CLReport)> {
    cfg.validate()?;
    train.validate()?;
    check_label_space(params, tasks)?;
    let mut p = params.clone();
    let mut report = CLReport::default();
    buf.set_mode(cfg.sampling_mode());

    let mut known: [BTreeSet<usize>; 2] = [BTreeSet::new(), BTreeSet::new()];
    for it in buf.items() {
        known[0].insert(it.object.index());
        known[1].insert(it.material.index());
    }
    let mut evaluated: Vec<&Task<'_>> = Vec::new();

    for task in tasks {
        if task.train.is_empty() {
            #[cfg(feature = "std")]
            std::eprintln!("warning: task {} has no training data; skipped", task.id);
            report.skipped.push(task.id);
            continue;
        }
        let tax = task.train.taxonomy();
        p.grow_heads(tax.object_count(), tax.material_count(), rng::derive(train.seed, 0x4EAD_0000 + task.id as u64))?;

        let records = task.train.records();
        let new_objects: Vec<usize> = class_set(records.iter().map(|r| r.object.index()), &known[0]);
        let new_materials: Vec<usize> = class_set(records.iter().map(|r| r.material.index()), &known[1]);
        let task_cfg = task_train_config(train, cfg, task.id);
        let mut hold_rng = rng::sub_rng(task_cfg.seed, 0xB1A5);

        // bias-fitting holdout: a share of the old memories (kept in the
        // buffer but not replayed) and of the new data (not trained on)
        let fit_bias = cfg.tricks.bias_control
            && buf.capacity() > 0
            && !buf.replay_slots(task.id).is_empty()
            && !(new_objects.is_empty() && new_materials.is_empty());
        let mut holdout: Vec<BufferItem> = Vec::new();
        let mut held_new: Vec<usize> = Vec::new();
        if fit_bias {
            let old = buf.replay_slots(task.id);
            let k_old = share(old.len(), cfg.bias_fit_fraction);
            for j in choose_subset(old.len(), k_old, &mut hold_rng) {
                buf.held_out[old[j]] = true;
                holdout.push(buf.items[old[j]].clone());
            }
            held_new = choose_subset(records.len(), share(records.len(), cfg.bias_fit_fraction), &mut hold_rng);
            if held_new.len() == records.len() {
                held_new.pop();
            }
        }
        let ids: Vec<usize> = (0..records.len()).filter(|i| held_new.binary_search(i).is_err()).collect();
        let data: Vec<Example<'_>> = ids
            .iter()
            .map(|&i| Example { image: &records[i].image, object: records[i].object, material: records[i].material })
            .collect();

        let mut hook = ReplayHook {
            buf: &mut *buf,
            records,
            ids: &ids,
            inserted: vec![false; ids.len()],
            task_id: task.id,
            replay_batch: cfg.replay_batch,
            independent_aug: cfg.tricks.independent_buffer_augmentation,
            policy: task_cfg.augment,
            rng: rng::sub_rng(task_cfg.seed, 0x5EED_B0F),
            pending: Vec::new(),
            step: 0,
        };
        let tr = train_in_place(&mut p, &data, &task_cfg, LrSchedule::Constant, &mut hook)?;
        let mut hook_rng = hook.rng;
        let step = hook.step;
        report.train.push((task.id, tr));

        if fit_bias {
            let mut ws = Workspace::new();
            for &i in &held_new {
                let rec = &records[i];
                let [zo, zm] = p.raw_logits_with(&rec.image, &mut ws)?;
                holdout.push(BufferItem {
                    image: rec.image.clone(),
                    object: rec.object,
                    material: rec.material,
                    last_loss: joint_loss(&zo, &zm, rec.object.index(), rec.material.index()),
                    task_id: task.id,
                    insert_step: step,
                });
            }
            let [co, cm] = fit_bias_correction(&p, &holdout, &new_objects, &new_materials)?;
            p.set_correction(Head::Object, Some(co));
            p.set_correction(Head::Material, Some(cm));
            for f in buf.held_out.iter_mut() {
                *f = false;
            }
            // the held-out new examples are part of the stream too
            for it in holdout.into_iter().filter(|it| it.task_id == task.id) {
                buf.insert(it, &mut hook_rng);
            }
        }

        known[0].extend(new_objects);
        known[1].extend(new_materials);
        evaluated.push(task);
        for e in &evaluated {
            if e.test.is_empty() {
                continue;
            }
            let (o, m) = evaluate(&p, &e.test.all_examples())?;
            report.rows.push(TaskMetrics { task_id: task.id, eval_task_id: e.id, top1_object: o, top1_material: m });
        }
    }
    Ok((p, report))
}

fn share(n: usize, fraction: f64) -> usize {
    if n == 0 {
        return 0;
    }
    (libm::round(n as f64 * fraction) as usize).clamp(1, n)
}

fn class_set(labels: impl Iterator<Item = usize>, known: &BTreeSet<usize>) -> Vec<usize> {
    let set: BTreeSet<usize> = labels.filter(|c| !known.contains(c)).collect();
    set.into_iter().collect()
}
