//! Forward pass, cross-entropy loss and analytic backward pass.

use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{
    conv_forward, conv_grad_weights, depthwise_backward, depthwise_forward, matmul_bias_relu, matmul_grad_input,
    matmul_grad_weights, phase_merge, phase_split, relu_backward, ConvGeom,
};
use super::{softmax, Arch, Head, InputNorm, ModelParams, PredictionPair, Scalar};
use crate::imaging::Image;
use crate::taxonomy::{MaterialClass, ObjectClass};
use crate::{Error, Result};

/// One labeled training or evaluation input.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub image: &'a Image,
    pub object: ObjectClass,
    pub material: MaterialClass,
}

#[derive(Debug, Clone, Default)]
struct BlockCache<T> {
    /// Block input in polyphase form.
    input_phases: Vec<T>,
    /// Depthwise output after ReLU.
    dw: Vec<T>,
    /// Pointwise output after ReLU.
    pw: Vec<T>,
}

#[derive(Debug, Clone, Default)]
struct TrunkCache<T> {
    input_phases: Vec<T>,
    stem: Vec<T>,
    blocks: Vec<BlockCache<T>>,
    features: Vec<T>,
}

/// Reusable activation and gradient buffers for one network shape.
#[derive(Debug, Clone, Default)]
pub struct Workspace<T> {
    input: Vec<T>,
    trunks: Vec<TrunkCache<T>>,
    grad_a: Vec<T>,
    grad_b: Vec<T>,
    grad_phases: Vec<T>,
    logits: [Vec<f64>; 2],
}

impl<T: Scalar> Workspace<T> {
    pub fn new() -> Self {
        Self {
            input: Vec::new(),
            trunks: Vec::new(),
            grad_a: Vec::new(),
            grad_b: Vec::new(),
            grad_phases: Vec::new(),
            logits: [Vec::new(), Vec::new()],
        }
    }
}

fn sized<T: Scalar>(v: &mut Vec<T>, n: usize) -> &mut [T] {
    v.resize(n, T::zero());
    &mut v[..n]
}

/// Writes the planar, normalized network input for `img` into `out`.
pub(crate) fn prepare_input<T: Scalar>(arch: &Arch, img: &Image, out: &mut Vec<T>) -> Result<()> {
    if img.width() != arch.input_side || img.height() != arch.input_side || img.channels() != arch.in_channels {
        return Err(Error::Shape(alloc::format!(
            "network expects {}x{}x{}, got {}x{}x{}",
            arch.in_channels,
            arch.input_side,
            arch.input_side,
            img.channels(),
            img.height(),
            img.width()
        )));
    }
    let plane = arch.input_side * arch.input_side;
    let ch = arch.in_channels;
    let buf = sized(out, plane * ch);
    for (i, px) in img.pixels().chunks_exact(ch).enumerate() {
        for (c, &v) in px.iter().enumerate() {
            let v = match arch.input_norm {
                InputNorm::UnitRange => v,
                InputNorm::Standardize { mean, std } => (v - mean[c]) / std[c],
            };
            buf[c * plane + i] = T::of(v as f64);
        }
    }
    Ok(())
}

fn trunk_forward<T: Scalar>(params: &ModelParams<T>, trunk: usize, input: &[T], cache: &mut TrunkCache<T>) {
    let arch = &params.arch;
    let off = &params.layout.trunks[trunk];
    let v = &params.values;
    let sides = arch.sides();
    let cin = arch.in_channels;
    let s0 = arch.input_side;
    let s1 = sides[0];
    let f = arch.stem_filters;

    let g0 = ConvGeom::new(s0, arch.stem_stride);
    phase_split(input, cin, &g0, sized(&mut cache.input_phases, cin * g0.phase_len()));
    conv_forward(
        &cache.input_phases,
        cin,
        &g0,
        &v[off.stem_w..off.stem_w + f * cin * 9],
        &v[off.stem_b..off.stem_b + f],
        sized(&mut cache.stem, f * s1 * s1),
    );

    cache.blocks.resize_with(arch.blocks.len(), Default::default);
    let mut c = f;
    let mut side = s1;
    for (i, &(cout, stride)) in arch.blocks.iter().enumerate() {
        let so = sides[i + 1];
        let po = so * so;
        let bo = off.blocks[i];
        let (prev, rest) = cache.blocks.split_at_mut(i);
        let blk = &mut rest[0];
        let input: &[T] = if i == 0 { &cache.stem } else { &prev[i - 1].pw };
        let g = ConvGeom::new(side, stride);
        phase_split(input, c, &g, sized(&mut blk.input_phases, c * g.phase_len()));
        depthwise_forward(
            &blk.input_phases,
            &g,
            &v[bo.dw_w..bo.dw_w + c * 9],
            &v[bo.dw_b..bo.dw_b + c],
            sized(&mut blk.dw, c * po),
        );
        matmul_bias_relu(
            &v[bo.pw_w..bo.pw_w + cout * c],
            &v[bo.pw_b..bo.pw_b + cout],
            &blk.dw,
            c,
            po,
            sized(&mut blk.pw, cout * po),
        );
        c = cout;
        side = so;
    }

    let last: &[T] = cache.blocks.last().map_or(&cache.stem, |b| &b.pw);
    let p = side * side;
    let inv = T::of(1.0 / p as f64);
    let feats = sized(&mut cache.features, c);
    for (ch, fv) in feats.iter_mut().enumerate() {
        *fv = super::kernels::sum(&last[ch * p..(ch + 1) * p]) * inv;
    }
}

fn head_trunk(arch: &Arch, head: Head) -> usize {
    if arch.parallel_trunks {
        head as usize
    } else {
        0
    }
}

/// Raw logits of both heads; results stay in `ws.logits`.
fn forward_logits<T: Scalar>(params: &ModelParams<T>, img: &Image, ws: &mut Workspace<T>) -> Result<()> {
    prepare_input(&params.arch, img, &mut ws.input)?;
    ws.trunks.resize_with(params.arch.trunk_count(), Default::default);
    for t in 0..params.arch.trunk_count() {
        trunk_forward(params, t, &ws.input, &mut ws.trunks[t]);
    }
    let fdim = params.arch.feature_dim();
    for head in [Head::Object, Head::Material] {
        let h = params.layout.heads[head as usize];
        let feats = &ws.trunks[head_trunk(&params.arch, head)].features;
        let logits = &mut ws.logits[head as usize];
        logits.clear();
        for j in 0..h.classes {
            let row = &params.values[h.w + j * fdim..h.w + (j + 1) * fdim];
            let z = params.values[h.b + j] + super::kernels::dot(row, feats);
            logits.push(z.as_f64());
        }
    }
    Ok(())
}

impl<T: Scalar> ModelParams<T> {
    /// Class probabilities for one image, with any logit corrections applied.
    pub fn forward(&self, img: &Image) -> Result<PredictionPair> {
        self.forward_with(img, &mut Workspace::new())
    }

    pub fn forward_with(&self, img: &Image, ws: &mut Workspace<T>) -> Result<PredictionPair> {
        let [zo, zm] = self.logits_with(img, ws)?;
        Ok(PredictionPair::from_logits(&zo, &zm))
    }

    /// Corrected logits `[object, material]`.
    pub fn logits_with(&self, img: &Image, ws: &mut Workspace<T>) -> Result<[Vec<f64>; 2]> {
        let [mut zo, mut zm] = self.raw_logits_with(img, ws)?;
        if let Some(c) = self.correction(Head::Object) {
            c.apply(&mut zo);
        }
        if let Some(c) = self.correction(Head::Material) {
            c.apply(&mut zm);
        }
        Ok([zo, zm])
    }

    /// Logits without inference-time corrections.
    pub fn raw_logits_with(&self, img: &Image, ws: &mut Workspace<T>) -> Result<[Vec<f64>; 2]> {
        forward_logits(self, img, ws)?;
        Ok([ws.logits[0].clone(), ws.logits[1].clone()])
    }

    /// Pooled trunk features (of the object trunk when trunks are separate).
    pub fn features_with(&self, img: &Image, ws: &mut Workspace<T>) -> Result<Vec<f64>> {
        forward_logits(self, img, ws)?;
        Ok(ws.trunks[0].features.iter().map(|v| v.as_f64()).collect())
    }
}

/// Cross-entropy `logsumexp(z) - z[label]` and its logit gradient `p - onehot`.
pub(crate) fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let p = softmax(logits);
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + libm::log(logits.iter().map(|z| libm::exp(z - max)).sum::<f64>());
    let loss = lse - logits[label];
    let mut g = p;
    g[label] -= 1.0;
    (loss, g)
}

fn trunk_backward<T: Scalar>(
    params: &ModelParams<T>,
    trunk: usize,
    dfeat: &[T],
    ws: &mut Workspace<T>,
    grad: &mut [T],
) {
    let arch = &params.arch;
    let off = &params.layout.trunks[trunk];
    let v = &params.values;
    let sides = arch.sides();
    let cache = &ws.trunks[trunk];
    let nb = arch.blocks.len();
    let f = arch.stem_filters;
    let cin0 = arch.in_channels;

    // Gradient w.r.t. the last activation (average pool broadcast).
    let c_last = arch.feature_dim();
    let s_last = *sides.last().unwrap();
    let p_last = s_last * s_last;
    let inv = T::of(1.0 / p_last as f64);
    {
        let ga = sized(&mut ws.grad_a, c_last * p_last);
        for ch in 0..c_last {
            let g = dfeat[ch] * inv;
            for x in &mut ga[ch * p_last..(ch + 1) * p_last] {
                *x = g;
            }
        }
    }

    for i in (0..nb).rev() {
        let (cout, stride) = arch.blocks[i];
        let cin = if i == 0 { f } else { arch.blocks[i - 1].0 };
        let si = sides[i];
        let so = sides[i + 1];
        let po = so * so;
        let bo = off.blocks[i];
        let blk = &cache.blocks[i];

        // pointwise
        let dz = &mut ws.grad_a[..cout * po];
        relu_backward(&blk.pw, dz);
        {
            let (gw, gb) = grad.split_at_mut(bo.pw_b);
            matmul_grad_weights(dz, &blk.dw, cin, po, &mut gw[bo.pw_w..bo.pw_w + cout * cin], &mut gb[..cout]);
        }
        let ddw = sized(&mut ws.grad_b, cin * po);
        matmul_grad_input(&v[bo.pw_w..bo.pw_w + cout * cin], &ws.grad_a[..cout * po], cout, cin, po, ddw);

        // depthwise
        relu_backward(&blk.dw, &mut ws.grad_b[..cin * po]);
        let g = ConvGeom::new(si, stride);
        let gp = sized(&mut ws.grad_phases, cin * g.phase_len());
        {
            let (gw, gb) = grad.split_at_mut(bo.dw_b);
            depthwise_backward(
                &blk.input_phases,
                &g,
                &v[bo.dw_w..bo.dw_w + cin * 9],
                &ws.grad_b[..cin * po],
                &mut gw[bo.dw_w..bo.dw_w + cin * 9],
                &mut gb[..cin],
                gp,
            );
        }
        phase_merge(&ws.grad_phases, cin, &g, sized(&mut ws.grad_a, cin * si * si));
    }

    // stem
    let p1 = sides[0] * sides[0];
    let dz = &mut ws.grad_a[..f * p1];
    relu_backward(&cache.stem, dz);
    let g0 = ConvGeom::new(arch.input_side, arch.stem_stride);
    let (gw, gb) = grad.split_at_mut(off.stem_b);
    conv_grad_weights(&cache.input_phases, cin0, &g0, dz, &mut gw[off.stem_w..off.stem_w + f * cin0 * 9], &mut gb[..f]);
}

/// Loss and gradient of one example, accumulated into `grad` with weight
/// `scale`. Returns `(loss_object, loss_material, correct_object, correct_material)`.
pub(crate) fn accumulate_example<T: Scalar>(
    params: &ModelParams<T>,
    ex: &Example<'_>,
    scale: f64,
    ws: &mut Workspace<T>,
    grad: &mut [T],
) -> Result<(f64, f64, bool, bool)> {
    let classes = [params.classes(Head::Object), params.classes(Head::Material)];
    let labels = [ex.object.index(), ex.material.index()];
    if labels[0] >= classes[0] {
        return Err(Error::LabelOutOfRange { what: "object", index: labels[0], len: classes[0] });
    }
    if labels[1] >= classes[1] {
        return Err(Error::LabelOutOfRange { what: "material", index: labels[1], len: classes[1] });
    }
    forward_logits(params, ex.image, ws)?;
    let fdim = params.arch.feature_dim();
    let mut losses = [0.0; 2];
    let mut correct = [false; 2];
    let mut dfeats: Vec<Vec<T>> = vec![vec![T::zero(); fdim]; params.arch.trunk_count()];
    for head in [Head::Object, Head::Material] {
        let hi = head as usize;
        let h = params.layout.heads[hi];
        let (loss, dlogit) = cross_entropy(&ws.logits[hi], labels[hi]);
        losses[hi] = loss;
        correct[hi] = super::argmax(&ws.logits[hi]) == labels[hi];
        let t = head_trunk(&params.arch, head);
        let feats = &ws.trunks[t].features;
        for (j, &dl) in dlogit.iter().enumerate() {
            let dl = T::of(dl * scale);
            grad[h.b + j] += dl;
            let row = h.w + j * fdim;
            for k in 0..fdim {
                grad[row + k] += dl * feats[k];
                dfeats[t][k] += dl * params.values[row + k];
            }
        }
    }
    for (t, df) in dfeats.iter().enumerate() {
        trunk_backward(params, t, df, ws, grad);
    }
    Ok((losses[0], losses[1], correct[0], correct[1]))
}

/// Mean loss and gradient over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGrad<T> {
    /// Mean of `CE_object + CE_material`.
    pub loss: f64,
    pub grad: Vec<T>,
    /// `CE_object + CE_material` per example.
    pub per_example: Vec<f64>,
    pub correct_object: usize,
    pub correct_material: usize,
}

impl<T: Scalar> ModelParams<T> {
    /// Joint cross-entropy of both heads and its gradient, averaged over the
    /// batch.
    pub fn loss_and_grad(&self, batch: &[Example<'_>]) -> Result<BatchGrad<T>> {
        self.loss_and_grad_with(batch, &mut Workspace::new())
    }

    pub fn loss_and_grad_with(&self, batch: &[Example<'_>], ws: &mut Workspace<T>) -> Result<BatchGrad<T>> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let mut grad = vec![T::zero(); self.param_count()];
        let scale = 1.0 / batch.len() as f64;
        let mut per_example = Vec::with_capacity(batch.len());
        let (mut co, mut cm) = (0, 0);
        for ex in batch {
            let (lo, lm, ok_o, ok_m) = accumulate_example(self, ex, scale, ws, &mut grad)?;
            per_example.push(lo + lm);
            co += ok_o as usize;
            cm += ok_m as usize;
        }
        let loss = per_example.iter().sum::<f64>() * scale;
        Ok(BatchGrad { loss, grad, per_example, correct_object: co, correct_material: cm })
    }

    /// Joint loss only (no gradient).
    pub fn loss(&self, batch: &[Example<'_>], ws: &mut Workspace<T>) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let mut total = 0.0;
        for ex in batch {
            forward_logits(self, ex.image, ws)?;
            total += cross_entropy(&ws.logits[0], ex.object.index()).0 + cross_entropy(&ws.logits[1], ex.material.index()).0;
        }
        Ok(total / batch.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Arch;
    use crate::rng::{self, Rng};

    fn tiny_arch(side: usize) -> Arch {
        Arch {
            input_side: side,
            in_channels: 3,
            stem_filters: 3,
            stem_stride: 2,
            blocks: alloc::vec![(4, 2), (5, 1)],
            objects: 6,
            materials: 9,
            parallel_trunks: false,
            input_norm: InputNorm::UnitRange,
        }
    }

    fn random_image(side: usize, seed: u64) -> Image {
        let mut r = rng::rng(seed);
        Image::from_fn(side, side, 3, |_, _, _| r.gen::<f32>())
    }

    #[test]
    fn zero_heads_give_uniform_outputs() {
        let mut p = ModelParams::<f32>::init(Arch::desk().with_side(32), 4).unwrap();
        p.zero_heads();
        let out = p.forward(&random_image(32, 1)).unwrap();
        for v in &out.p_object {
            assert!((v - 1.0 / 6.0).abs() < 1e-7);
        }
        for v in &out.p_material {
            assert!((v - 1.0 / 9.0).abs() < 1e-7);
        }
        assert_eq!(out.top1_object, ObjectClass(0));
    }

    #[test]
    fn outputs_are_simplices() {
        let p = ModelParams::<f32>::init(Arch::desk().with_side(48), 5).unwrap();
        for seed in 0..5 {
            let out = p.forward(&random_image(48, seed)).unwrap();
            assert!((out.p_object.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!((out.p_material.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(out.p_object.iter().chain(&out.p_material).all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let p = ModelParams::<f32>::init(Arch::desk(), 5).unwrap();
        assert!(matches!(p.forward(&random_image(32, 0)), Err(Error::Shape(_))));
        let gray = Image::filled(224, 224, 1, 0.5);
        assert!(matches!(p.forward(&gray), Err(Error::Shape(_))));
    }

    #[test]
    fn permuting_head_rows_permutes_probabilities() {
        let p = ModelParams::<f64>::init(tiny_arch(9), 2).unwrap();
        let img = random_image(9, 3);
        let base = p.forward(&img).unwrap();
        let perm = [3usize, 0, 5, 1, 4, 2];
        let mut q = p.clone();
        let f = p.arch().feature_dim();
        let w = p.tensor("head_object.w").unwrap().to_vec();
        let mut b = p.tensor("head_object.b").unwrap().to_vec();
        b[0] = 0.3; // make biases matter too
        let wq = q.tensor_mut("head_object.w").unwrap();
        for (dst, &src) in perm.iter().enumerate() {
            wq[dst * f..(dst + 1) * f].copy_from_slice(&w[src * f..(src + 1) * f]);
        }
        let bq = q.tensor_mut("head_object.b").unwrap();
        for (dst, &src) in perm.iter().enumerate() {
            bq[dst] = b[src];
        }
        let mut p2 = p.clone();
        p2.tensor_mut("head_object.b").unwrap().copy_from_slice(&b);
        let base = if b[0] != 0.0 { p2.forward(&img).unwrap() } else { base };
        let permuted = q.forward(&img).unwrap();
        for (dst, &src) in perm.iter().enumerate() {
            assert!((permuted.p_object[dst] - base.p_object[src]).abs() < 1e-12);
        }
        assert_eq!(permuted.p_material, base.p_material);
    }

    #[test]
    fn uniform_prediction_has_log_six_object_loss() {
        let mut p = ModelParams::<f64>::init(tiny_arch(9), 2).unwrap();
        p.zero_heads();
        let img = random_image(9, 3);
        let mut ws = Workspace::new();
        let [zo, zm] = p.raw_logits_with(&img, &mut ws).unwrap();
        let (lo, _) = cross_entropy(&zo, 2);
        let (lm, _) = cross_entropy(&zm, 7);
        assert!((lo - 6f64.ln()).abs() < 1e-12);
        assert!((lo - 1.7918).abs() < 1e-4);
        assert!((lm - 9f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_batch_and_bad_labels_error() {
        let p = ModelParams::<f64>::init(tiny_arch(9), 2).unwrap();
        assert!(matches!(p.loss_and_grad(&[]), Err(Error::Empty(_))));
        let img = random_image(9, 1);
        let ex = Example { image: &img, object: ObjectClass(6), material: MaterialClass(0) };
        assert!(matches!(p.loss_and_grad(&[ex]), Err(Error::LabelOutOfRange { .. })));
    }

    #[test]
    fn duplicated_example_doubles_its_contribution() {
        let p = ModelParams::<f64>::init(tiny_arch(9), 8).unwrap();
        let a = random_image(9, 1);
        let b = random_image(9, 2);
        let ea = Example { image: &a, object: ObjectClass(1), material: MaterialClass(4) };
        let eb = Example { image: &b, object: ObjectClass(3), material: MaterialClass(5) };
        let ga = p.loss_and_grad(&[ea]).unwrap().grad;
        let gb = p.loss_and_grad(&[eb]).unwrap().grad;
        let gabb = p.loss_and_grad(&[ea, eb, eb]).unwrap().grad;
        for i in 0..ga.len() {
            let expect = (ga[i] + 2.0 * gb[i]) / 3.0;
            assert!((gabb[i] - expect).abs() < 1e-12 * (1.0 + expect.abs()));
        }
    }
}
