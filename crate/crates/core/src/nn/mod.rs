//! Dual-head depthwise-separable CNN.
//!
//! Topology (default [`Arch::desk`]): 3x3 stem (stride 2, 8 filters), three
//! depthwise-separable blocks (3x3 depthwise + 1x1 pointwise, widths
//! 16/32/64, stride 2 each), global average pooling, then one linear softmax
//! head for objects and one for materials. All convolutions pad by one pixel
//! and are followed by ReLU.
//!
//! Parameters live in one flat vector described by a [`Layout`]; gradients
//! and optimizer moments use the same layout.

mod checkpoint;
mod kernels;
mod network;
mod optim;
mod train;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;
use core::iter::Sum;
use core::ops::{AddAssign, MulAssign};

use num_traits::Float;

use crate::rng::{self, Rng};
use crate::taxonomy::{MaterialClass, ObjectClass};
use crate::{Error, Result};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use network::{BatchGrad, Example, Workspace};
pub use optim::Adam;
pub use train::{evaluate, predict_all, train, EpochStats, ExtraExample, LrSchedule, StepHook, TrainConfig, TrainReport};
pub(crate) use network::cross_entropy;
pub(crate) use train::train_in_place;

/// Floating-point element type of the network.
pub trait Scalar: Float + Default + Debug + Send + Sync + Sum + AddAssign + MulAssign + 'static {
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;
    /// `self * a + b`, fused when the target has hardware FMA.
    fn fma(self, a: Self, b: Self) -> Self;
}

macro_rules! fma_impl {
    () => {
        #[inline(always)]
        fn fma(self, a: Self, b: Self) -> Self {
            #[cfg(all(feature = "std", target_feature = "fma"))]
            {
                self.mul_add(a, b)
            }
            #[cfg(not(all(feature = "std", target_feature = "fma")))]
            {
                self * a + b
            }
        }
    };
}

impl Scalar for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    fma_impl!();
}

impl Scalar for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    fma_impl!();
}

/// How raw `[0, 1]` pixels are presented to the stem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputNorm {
    UnitRange,
    /// Per-channel `(x - mean) / std`.
    Standardize { mean: [f32; 3], std: [f32; 3] },
}

impl InputNorm {
    /// The customary ImageNet channel statistics.
    pub const IMAGENET: Self = Self::Standardize { mean: [0.485, 0.456, 0.406], std: [0.229, 0.224, 0.225] };
}

/// Network shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Arch {
    pub input_side: usize,
    pub in_channels: usize,
    pub stem_filters: usize,
    pub stem_stride: usize,
    /// (output width, depthwise stride) per block.
    pub blocks: Vec<(usize, usize)>,
    pub objects: usize,
    pub materials: usize,
    /// Two independent trunks (one per head) instead of a shared one.
    pub parallel_trunks: bool,
    pub input_norm: InputNorm,
}

impl Arch {
    /// 3x224x224 input with ImageNet normalization, 8/16/32/64 channels, 6 objects and 9
    /// materials.
    pub fn desk() -> Self {
        Self {
            input_side: 224,
            in_channels: 3,
            stem_filters: 8,
            stem_stride: 2,
            blocks: vec![(16, 2), (32, 2), (64, 2)],
            objects: crate::taxonomy::OBJECT_COUNT,
            materials: crate::taxonomy::MATERIAL_COUNT,
            parallel_trunks: false,
            input_norm: InputNorm::IMAGENET,
        }
    }

    /// Same topology at another input size.
    pub fn with_side(mut self, side: usize) -> Self {
        self.input_side = side;
        self
    }

    pub fn trunk_count(&self) -> usize {
        if self.parallel_trunks {
            2
        } else {
            1
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.blocks.last().map_or(self.stem_filters, |b| b.0)
    }

    /// Spatial side after each stage: `[stem, block1, ..]`.
    pub fn sides(&self) -> Vec<usize> {
        let mut s = conv_out(self.input_side, self.stem_stride);
        let mut out = vec![s];
        for &(_, stride) in &self.blocks {
            s = conv_out(s, stride);
            out.push(s);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.input_side == 0 || self.stem_filters == 0 || self.stem_stride == 0 {
            return bad("architecture sizes must be positive");
        }
        if self.in_channels != 3 && self.in_channels != 1 {
            return bad("input channels must be 1 or 3");
        }
        if self.blocks.iter().any(|&(w, s)| w == 0 || s == 0) {
            return bad("block widths and strides must be positive");
        }
        if self.objects == 0 || self.materials == 0 {
            return bad("heads need at least one class");
        }
        Ok(())
    }
}

/// 3x3 convolution, padding 1.
pub(crate) fn conv_out(side: usize, stride: usize) -> usize {
    (side - 1) / stride + 1
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    /// Fan-in used for He initialization.
    fn fan_in(&self) -> usize {
        self.shape[1..].iter().product::<usize>().max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct BlockOffsets {
    pub dw_w: usize,
    pub dw_b: usize,
    pub pw_w: usize,
    pub pw_b: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct TrunkOffsets {
    pub stem_w: usize,
    pub stem_b: usize,
    pub blocks: Vec<BlockOffsets>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct HeadOffsets {
    pub w: usize,
    pub b: usize,
    pub classes: usize,
}

/// Named tensors inside the flat parameter vector, in storage order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    tensors: Vec<TensorSpec>,
    len: usize,
    pub(crate) trunks: Vec<TrunkOffsets>,
    pub(crate) heads: [HeadOffsets; 2],
}

impl Layout {
    pub fn new(arch: &Arch) -> Self {
        let mut tensors = Vec::new();
        let mut len = 0;
        let mut push = |name: String, shape: Vec<usize>| {
            let offset = len;
            len += shape.iter().product::<usize>();
            tensors.push(TensorSpec { name, shape, offset });
            offset
        };
        let mut trunks = Vec::new();
        for t in 0..arch.trunk_count() {
            let stem_w = push(alloc::format!("trunk{t}.stem.w"), vec![arch.stem_filters, arch.in_channels, 3, 3]);
            let stem_b = push(alloc::format!("trunk{t}.stem.b"), vec![arch.stem_filters]);
            let mut cin = arch.stem_filters;
            let mut blocks = Vec::new();
            for (i, &(cout, _)) in arch.blocks.iter().enumerate() {
                let dw_w = push(alloc::format!("trunk{t}.block{i}.dw.w"), vec![cin, 3, 3]);
                let dw_b = push(alloc::format!("trunk{t}.block{i}.dw.b"), vec![cin]);
                let pw_w = push(alloc::format!("trunk{t}.block{i}.pw.w"), vec![cout, cin]);
                let pw_b = push(alloc::format!("trunk{t}.block{i}.pw.b"), vec![cout]);
                blocks.push(BlockOffsets { dw_w, dw_b, pw_w, pw_b });
                cin = cout;
            }
            trunks.push(TrunkOffsets { stem_w, stem_b, blocks });
        }
        let f = arch.feature_dim();
        let ow = push("head_object.w".into(), vec![arch.objects, f]);
        let ob = push("head_object.b".into(), vec![arch.objects]);
        let mw = push("head_material.w".into(), vec![arch.materials, f]);
        let mb = push("head_material.b".into(), vec![arch.materials]);
        let heads = [
            HeadOffsets { w: ow, b: ob, classes: arch.objects },
            HeadOffsets { w: mw, b: mb, classes: arch.materials },
        ];
        Self { tensors, len, trunks, heads }
    }

    pub fn tensors(&self) -> &[TensorSpec] {
        &self.tensors
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

/// Which output head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Object = 0,
    Material = 1,
}

/// Post-hoc affine correction of selected logits: `z -> scale * z + offset`
/// for every class in `classes`; all other logits are untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitCorrection {
    pub classes: Vec<usize>,
    pub scale: f64,
    pub offset: f64,
}

impl LogitCorrection {
    pub fn identity() -> Self {
        Self { classes: Vec::new(), scale: 1.0, offset: 0.0 }
    }

    pub fn is_identity(&self) -> bool {
        self.classes.is_empty() || (self.scale == 1.0 && self.offset == 0.0)
    }

    pub fn apply(&self, logits: &mut [f64]) {
        for &c in &self.classes {
            if let Some(z) = logits.get_mut(c) {
                *z = self.scale * *z + self.offset;
            }
        }
    }
}

/// Network weights plus inference-time logit corrections.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = f32> {
    arch: Arch,
    layout: Layout,
    values: Vec<T>,
    corrections: [Option<LogitCorrection>; 2],
}

impl<T: Scalar> ModelParams<T> {
    /// All-zero weights.
    pub fn zeros(arch: Arch) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        let values = vec![T::zero(); layout.len()];
        Ok(Self { arch, layout, values, corrections: [None, None] })
    }

    /// He-uniform weights, zero biases.
    pub fn init(arch: Arch, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        let mut r = rng::rng(seed);
        for spec in p.layout.tensors.clone() {
            if spec.shape.len() < 2 {
                continue;
            }
            let bound = libm::sqrt(6.0 / spec.fan_in() as f64);
            for v in &mut p.values[spec.range()] {
                *v = T::of(r.gen_range(-bound..bound));
            }
        }
        Ok(p)
    }

    /// He-uniform trunk with zero heads: every class starts at the same
    /// logit, which speeds up early training considerably at small learning
    /// rates.
    pub fn init_for_training(arch: Arch, seed: u64) -> Result<Self> {
        let mut p = Self::init(arch, seed)?;
        p.zero_heads();
        Ok(p)
    }

    pub fn from_values(arch: Arch, values: Vec<T>) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        if values.len() != layout.len() {
            return Err(Error::Shape(alloc::format!("{} values for a {}-parameter layout", values.len(), layout.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(Self { arch, layout, values, corrections: [None, None] })
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn param_count(&self) -> usize {
        self.values.len()
    }

    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        self.layout.get(name).map(|s| &self.values[s.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [T]> {
        let range = self.layout.get(name)?.range();
        Some(&mut self.values[range])
    }

    pub fn classes(&self, head: Head) -> usize {
        self.layout.heads[head as usize].classes
    }

    pub fn correction(&self, head: Head) -> Option<&LogitCorrection> {
        self.corrections[head as usize].as_ref()
    }

    pub fn set_correction(&mut self, head: Head, c: Option<LogitCorrection>) {
        self.corrections[head as usize] = c.filter(|c| !c.is_identity());
    }

    /// Sets both head weight matrices and biases to zero.
    pub fn zero_heads(&mut self) {
        for h in self.layout.heads {
            let f = self.arch.feature_dim();
            for v in &mut self.values[h.w..h.w + h.classes * f] {
                *v = T::zero();
            }
            for v in &mut self.values[h.b..h.b + h.classes] {
                *v = T::zero();
            }
        }
    }

    /// Appends He-initialized output rows so the heads have at least
    /// `objects` / `materials` classes. Existing weights are preserved.
    pub fn grow_heads(&mut self, objects: usize, materials: usize, seed: u64) -> Result<bool> {
        if objects <= self.arch.objects && materials <= self.arch.materials {
            return Ok(false);
        }
        let mut arch = self.arch.clone();
        arch.objects = arch.objects.max(objects);
        arch.materials = arch.materials.max(materials);
        let mut grown = Self::init(arch, seed)?;
        for spec in self.layout.tensors.clone() {
            let old = &self.values[spec.range()];
            let new_spec = grown.layout.get(&spec.name).expect("tensor names are stable").clone();
            grown.values[new_spec.offset..new_spec.offset + old.len()].copy_from_slice(old);
            if spec.shape.len() == 1 && spec.name.starts_with("head") {
                for v in &mut grown.values[new_spec.offset + old.len()..new_spec.range().end] {
                    *v = T::zero();
                }
            }
        }
        grown.corrections = self.corrections.clone();
        *self = grown;
        Ok(true)
    }

    /// Element-type conversion (e.g. `f32` weights to `f64` for checking).
    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            arch: self.arch.clone(),
            layout: self.layout.clone(),
            values: self.values.iter().map(|v| U::of(v.as_f64())).collect(),
            corrections: self.corrections.clone(),
        }
    }
}

/// Class distributions of both heads for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionPair {
    pub p_object: Vec<f64>,
    pub p_material: Vec<f64>,
    pub top1_object: ObjectClass,
    pub top1_material: MaterialClass,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| libm::exp(z - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl PredictionPair {
    pub fn from_probabilities(p_object: Vec<f64>, p_material: Vec<f64>) -> Self {
        let top1_object = ObjectClass::from_index(argmax(&p_object));
        let top1_material = MaterialClass::from_index(argmax(&p_material));
        Self { p_object, p_material, top1_object, top1_material }
    }

    pub fn from_logits(object_logits: &[f64], material_logits: &[f64]) -> Self {
        Self::from_probabilities(softmax(object_logits), softmax(material_logits))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_arch_is_small() {
        let p = ModelParams::<f32>::init(Arch::desk(), 1).unwrap();
        assert!(p.param_count() < 100_000, "{}", p.param_count());
        assert_eq!(Arch::desk().sides(), [112, 56, 28, 14]);
        let two = ModelParams::<f32>::init(Arch { parallel_trunks: true, ..Arch::desk() }, 1).unwrap();
        assert!(two.param_count() > p.param_count());
    }

    #[test]
    fn he_init_bounds_and_zero_biases() {
        let p = ModelParams::<f64>::init(Arch::desk(), 3).unwrap();
        let stem = p.tensor("trunk0.stem.w").unwrap();
        let bound = (6.0f64 / 27.0).sqrt();
        assert!(stem.iter().all(|v| v.abs() <= bound));
        assert!(stem.iter().any(|v| v.abs() > bound * 0.5));
        assert!(p.tensor("head_object.b").unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn growing_heads_preserves_weights() {
        let p = ModelParams::<f32>::init(Arch::desk(), 3).unwrap();
        let mut g = p.clone();
        assert!(g.grow_heads(7, 11, 9).unwrap());
        assert_eq!(g.classes(Head::Object), 7);
        assert_eq!(g.classes(Head::Material), 11);
        assert_eq!(g.tensor("trunk0.stem.w"), p.tensor("trunk0.stem.w"));
        let old = p.tensor("head_material.w").unwrap();
        assert_eq!(&g.tensor("head_material.w").unwrap()[..old.len()], old);
        assert!(g.tensor("head_material.w").unwrap()[old.len()..].iter().any(|&v| v != 0.0));
        assert!(!g.grow_heads(7, 11, 9).unwrap());
    }

    #[test]
    fn argmax_ties_lowest_index() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[1.0; 5]), 0);
    }

    #[test]
    fn correction_touches_listed_classes_only() {
        let c = LogitCorrection { classes: vec![2, 3], scale: 0.5, offset: -1.0 };
        let mut z = [1.0, 2.0, 3.0, 4.0];
        c.apply(&mut z);
        assert_eq!(z, [1.0, 2.0, 0.5, 1.0]);
        let mut z = [1.0, 2.0];
        LogitCorrection::identity().apply(&mut z);
        assert_eq!(z, [1.0, 2.0]);
    }
}
