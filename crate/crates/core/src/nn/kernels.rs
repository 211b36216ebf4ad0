//! Dense kernels on channel-planar buffers.
//!
//! 3x3 convolutions (padding 1, stride `s`) work on a polyphase copy of the
//! zero-padded input: phase `(a, b)` of a channel holds padded pixels
//! `(a + s*r, b + s*q)`. Tap `(ky, kx)` of output row `oy` then reads the
//! contiguous run starting at `(oy + ky/s, kx/s)` of phase `(ky%s, kx%s)`,
//! so every inner loop is a unit-stride axpy or dot and vectorizes.

use super::Scalar;

const TILE: usize = 64;
const LANES: usize = 16;

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..LANES {
            acc[i] = x[i].fma(y[i], acc[i]);
        }
    }
    let mut s = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        s += *x * *y;
    }
    for v in acc {
        s += v;
    }
    s
}

#[inline]
pub fn sum<T: Scalar>(a: &[T]) -> T {
    let mut acc = [T::zero(); LANES];
    let c = a.chunks_exact(LANES);
    let r = c.remainder();
    for x in c {
        for i in 0..LANES {
            acc[i] += x[i];
        }
    }
    let mut s = r.iter().copied().sum::<T>();
    for v in acc {
        s += v;
    }
    s
}

#[inline]
fn axpy<T: Scalar>(acc: &mut [T], a: T, x: &[T]) {
    for (d, &v) in acc.iter_mut().zip(x) {
        *d = a.fma(v, *d);
    }
}

#[inline]
fn relu_store<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &a) in dst.iter_mut().zip(src) {
        *d = if a > T::zero() { a } else { T::zero() };
    }
}

/// `out[o, p] = relu(b[o] + sum_k w[o, k] * x[k, p])`.
pub fn matmul_bias_relu<T: Scalar>(w: &[T], b: &[T], x: &[T], k: usize, p: usize, out: &mut [T]) {
    let o_n = b.len();
    debug_assert_eq!(w.len(), o_n * k);
    debug_assert_eq!(x.len(), k * p);
    debug_assert_eq!(out.len(), o_n * p);
    let mut start = 0;
    while start < p {
        let len = TILE.min(p - start);
        for o in 0..o_n {
            let mut acc = [b[o]; TILE];
            let wo = &w[o * k..(o + 1) * k];
            for (kk, &wv) in wo.iter().enumerate() {
                axpy(&mut acc[..len], wv, &x[kk * p + start..kk * p + start + len]);
            }
            relu_store(&mut out[o * p + start..o * p + start + len], &acc[..len]);
        }
        start += len;
    }
}

/// `dw[o, k] += sum_p dz[o, p] * x[k, p]`, `db[o] += sum_p dz[o, p]`.
pub fn matmul_grad_weights<T: Scalar>(dz: &[T], x: &[T], k: usize, p: usize, dw: &mut [T], db: &mut [T]) {
    let o_n = db.len();
    for o in 0..o_n {
        let dzo = &dz[o * p..(o + 1) * p];
        db[o] += sum(dzo);
        for kk in 0..k {
            dw[o * k + kk] += dot(dzo, &x[kk * p..(kk + 1) * p]);
        }
    }
}

/// `dx[k, p] = sum_o w[o, k] * dz[o, p]`.
pub fn matmul_grad_input<T: Scalar>(w: &[T], dz: &[T], o_n: usize, k: usize, p: usize, dx: &mut [T]) {
    let mut start = 0;
    while start < p {
        let len = TILE.min(p - start);
        for kk in 0..k {
            let mut acc = [T::zero(); TILE];
            for o in 0..o_n {
                axpy(&mut acc[..len], w[o * k + kk], &dz[o * p + start..o * p + start + len]);
            }
            dx[kk * p + start..kk * p + start + len].copy_from_slice(&acc[..len]);
        }
        start += len;
    }
}

/// Geometry of a padded 3x3 convolution in polyphase form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub side_in: usize,
    pub stride: usize,
    pub side_out: usize,
    /// Side of one phase plane.
    pub phase_side: usize,
}

impl ConvGeom {
    pub fn new(side_in: usize, stride: usize) -> Self {
        let side_out = (side_in - 1) / stride + 1;
        let phase_side = (side_in + 2).div_ceil(stride);
        Self { side_in, stride, side_out, phase_side }
    }

    /// Elements per channel of the polyphase buffer.
    pub fn phase_len(&self) -> usize {
        self.stride * self.stride * self.phase_side * self.phase_side
    }

    /// Start of the input run read by tap `t` of `channel` for output row 0;
    /// row `oy` adds `oy * phase_side`.
    fn tap_base(&self, channel: usize, t: usize) -> usize {
        let (ky, kx) = (t / 3, t % 3);
        let s = self.stride;
        let m = self.phase_side;
        let phase = (ky % s) * s + kx % s;
        channel * self.phase_len() + phase * m * m + (ky / s) * m + kx / s
    }

    fn tap_bases(&self, channels: usize) -> alloc::vec::Vec<usize> {
        (0..channels * 9).map(|k| self.tap_base(k / 9, k % 9)).collect()
    }
}

/// Column range `q` of phase column offset `b` that maps to interior pixels
/// (`1 <= b + s*q <= n`).
fn interior(b: usize, s: usize, n: usize, m: usize) -> core::ops::Range<usize> {
    let lo = if b == 0 { 1 } else { 0 };
    let hi = if b > n { 0 } else { ((n - b) / s + 1).min(m) };
    lo..hi.max(lo)
}

/// Polyphase copy of the zero-padded input (`c` planes of `side_in^2`).
pub fn phase_split<T: Scalar>(x: &[T], c: usize, g: &ConvGeom, out: &mut [T]) {
    let (n, s, m) = (g.side_in, g.stride, g.phase_side);
    debug_assert_eq!(out.len(), c * g.phase_len());
    if s == 2 {
        return phase_split2(x, c, g, out);
    }
    for ch in 0..c {
        let plane = &x[ch * n * n..(ch + 1) * n * n];
        for a in 0..s {
            let rows = interior(a, s, n, m);
            for b in 0..s {
                let cols = interior(b, s, n, m);
                let base = ch * g.phase_len() + (a * s + b) * m * m;
                let dst_plane = &mut out[base..base + m * m];
                for (r, dst) in dst_plane.chunks_exact_mut(m).enumerate() {
                    if !rows.contains(&r) {
                        dst.fill(T::zero());
                        continue;
                    }
                    let y = a + s * r - 1;
                    dst[..cols.start].fill(T::zero());
                    dst[cols.end..].fill(T::zero());
                    let x0 = b + s * cols.start - 1;
                    let src = &plane[y * n + x0..(y + 1) * n];
                    for (d, v) in dst[cols.clone()].iter_mut().zip(src.iter().step_by(s)) {
                        *d = *v;
                    }
                }
            }
        }
    }
}

/// Stride-2 split: padded row `a + 2r` is input row `a + 2r - 1`; even input
/// columns land in column phase 1, odd ones (shifted by one) in phase 0.
fn phase_split2<T: Scalar>(x: &[T], c: usize, g: &ConvGeom, out: &mut [T]) {
    let (n, m) = (g.side_in, g.phase_side);
    for ch in 0..c {
        let plane = &x[ch * n * n..(ch + 1) * n * n];
        let phases = &mut out[ch * g.phase_len()..(ch + 1) * g.phase_len()];
        let (top, bottom) = phases.split_at_mut(2 * m * m);
        let (p00, p01) = top.split_at_mut(m * m);
        let (p10, p11) = bottom.split_at_mut(m * m);
        for r in 0..m {
            for (a, (d0, d1)) in [(0, (&mut *p00, &mut *p01)), (1, (&mut *p10, &mut *p11))] {
                let (d0, d1) = (&mut d0[r * m..(r + 1) * m], &mut d1[r * m..(r + 1) * m]);
                let y = (a + 2 * r).wrapping_sub(1);
                if y >= n {
                    d0.fill(T::zero());
                    d1.fill(T::zero());
                    continue;
                }
                let row = &plane[y * n..(y + 1) * n];
                let (pairs, rest) = row.as_chunks::<2>();
                let k = pairs.len();
                d0[0] = T::zero();
                for (d, p) in d0[1..=k].iter_mut().zip(pairs) {
                    *d = p[1];
                }
                d0[k + 1..].fill(T::zero());
                for (d, p) in d1[..k].iter_mut().zip(pairs) {
                    *d = p[0];
                }
                d1[k..].fill(T::zero());
                if let [v] = rest {
                    d1[k] = *v;
                }
            }
        }
    }
}

fn phase_merge2<T: Scalar>(ph: &[T], c: usize, g: &ConvGeom, dx: &mut [T]) {
    let (n, m) = (g.side_in, g.phase_side);
    for ch in 0..c {
        let plane = &mut dx[ch * n * n..(ch + 1) * n * n];
        let phases = &ph[ch * g.phase_len()..(ch + 1) * g.phase_len()];
        for (y, row) in plane.chunks_exact_mut(n).enumerate() {
            let (a, r) = ((y + 1) % 2, (y + 1) / 2);
            let s0 = &phases[(2 * a) * m * m + r * m..(2 * a) * m * m + (r + 1) * m];
            let s1 = &phases[(2 * a + 1) * m * m + r * m..(2 * a + 1) * m * m + (r + 1) * m];
            let (pairs, rest) = row.as_chunks_mut::<2>();
            let k = pairs.len();
            for ((p, &even), &odd) in pairs.iter_mut().zip(&s1[..k]).zip(&s0[1..=k]) {
                *p = [even, odd];
            }
            if let [v] = rest {
                *v = s1[k];
            }
        }
    }
}

/// Inverse of [`phase_split`] on the interior: writes the unpadded planes.
pub fn phase_merge<T: Scalar>(ph: &[T], c: usize, g: &ConvGeom, dx: &mut [T]) {
    let (n, s, m) = (g.side_in, g.stride, g.phase_side);
    if s == 2 {
        return phase_merge2(ph, c, g, dx);
    }
    for ch in 0..c {
        let plane = &mut dx[ch * n * n..(ch + 1) * n * n];
        for a in 0..s {
            let rows = interior(a, s, n, m);
            for b in 0..s {
                let cols = interior(b, s, n, m);
                let base = ch * g.phase_len() + (a * s + b) * m * m;
                for r in rows.clone() {
                    let y = a + s * r - 1;
                    let x0 = b + s * cols.start - 1;
                    let src = &ph[base + r * m + cols.start..base + r * m + cols.end];
                    let dst = &mut plane[y * n + x0..(y + 1) * n];
                    for (d, v) in dst.iter_mut().step_by(s).zip(src) {
                        *d = *v;
                    }
                }
            }
        }
    }
}

type Lane<T> = [T; LANES];

#[inline(always)]
fn load<T: Scalar>(x: &[T], at: usize) -> Lane<T> {
    x[at..at + LANES].try_into().unwrap()
}

#[inline(always)]
fn fma_scalar<T: Scalar>(acc: Lane<T>, a: T, x: Lane<T>) -> Lane<T> {
    core::array::from_fn(|l| a.fma(x[l], acc[l]))
}

#[inline(always)]
fn fma_lane<T: Scalar>(acc: Lane<T>, x: Lane<T>, y: Lane<T>) -> Lane<T> {
    core::array::from_fn(|l| x[l].fma(y[l], acc[l]))
}

/// Dense 3x3 convolution (`cout x cin x 3 x 3` weights) plus ReLU.
#[inline(never)]
pub fn conv_forward<T: Scalar>(ph: &[T], cin: usize, g: &ConvGeom, w: &[T], b: &[T], out: &mut [T]) {
    let so = g.side_out;
    let m = g.phase_side;
    let taps = g.tap_bases(cin);
    if so % LANES != 0 {
        for oy in 0..so {
            for (o, &bias) in b.iter().enumerate() {
                let row = &mut out[o * so * so + oy * so..o * so * so + (oy + 1) * so];
                row.iter_mut().for_each(|v| *v = bias);
                for (k, &tb) in taps.iter().enumerate() {
                    axpy(row, w[o * cin * 9 + k], &ph[tb + oy * m..tb + oy * m + so]);
                }
                row.iter_mut().for_each(|v| *v = if *v > T::zero() { *v } else { T::zero() });
            }
        }
        return;
    }
    // Four output channels share every input load.
    for o0 in (0..b.len()).step_by(4) {
        let ob = 4.min(b.len() - o0);
        let wt: alloc::vec::Vec<[T; 4]> = (0..cin * 9)
            .map(|k| core::array::from_fn(|i| if i < ob { w[(o0 + i) * cin * 9 + k] } else { T::zero() }))
            .collect();
        let bias: [T; 4] = core::array::from_fn(|i| if i < ob { b[o0 + i] } else { T::zero() });
        for oy in 0..so {
            for start in (0..so).step_by(LANES) {
                let mut a0 = [bias[0]; LANES];
                let mut a1 = [bias[1]; LANES];
                let mut a2 = [bias[2]; LANES];
                let mut a3 = [bias[3]; LANES];
                for (wk, &tb) in wt.iter().zip(&taps) {
                    let x = load(ph, tb + oy * m + start);
                    a0 = fma_scalar(a0, wk[0], x);
                    a1 = fma_scalar(a1, wk[1], x);
                    a2 = fma_scalar(a2, wk[2], x);
                    a3 = fma_scalar(a3, wk[3], x);
                }
                for (i, a) in [a0, a1, a2, a3].iter().enumerate().take(ob) {
                    let d0 = (o0 + i) * so * so + oy * so + start;
                    relu_store(&mut out[d0..d0 + LANES], a);
                }
            }
        }
    }
}

/// Weight and bias gradients of [`conv_forward`] from the pre-activation
/// gradient `dz` (`cout x side_out^2`).
#[inline(never)]
pub fn conv_grad_weights<T: Scalar>(ph: &[T], cin: usize, g: &ConvGeom, dz: &[T], dw: &mut [T], db: &mut [T]) {
    let so = g.side_out;
    let m = g.phase_side;
    let taps = g.tap_bases(cin);
    let plane = so * so;
    for (o, gb) in db.iter_mut().enumerate() {
        *gb += sum(&dz[o * plane..(o + 1) * plane]);
    }
    if so % LANES != 0 {
        for o in 0..db.len() {
            let dzo = &dz[o * plane..(o + 1) * plane];
            for (k, &tb) in taps.iter().enumerate() {
                let mut acc = T::zero();
                for oy in 0..so {
                    acc += dot(&dzo[oy * so..(oy + 1) * so], &ph[tb + oy * m..tb + oy * m + so]);
                }
                dw[o * cin * 9 + k] += acc;
            }
        }
        return;
    }
    // Blocks of 4 output channels x 3 taps: 12 accumulators, 7 loads.
    let zero = [T::zero(); LANES];
    for o0 in (0..db.len()).step_by(4) {
        let ob = 4.min(db.len() - o0);
        let rows: [usize; 4] = core::array::from_fn(|i| (o0 + i.min(ob - 1)) * plane);
        for (ci, tc) in taps.chunks_exact(3).enumerate() {
            let mut acc = [[zero; 3]; 4];
            for oy in 0..so {
                let r = oy * m;
                for start in (0..so).step_by(LANES) {
                    let x = [load(ph, tc[0] + r + start), load(ph, tc[1] + r + start), load(ph, tc[2] + r + start)];
                    for (a, &row) in acc.iter_mut().zip(&rows) {
                        let d = load(dz, row + oy * so + start);
                        for j in 0..3 {
                            a[j] = fma_lane(a[j], d, x[j]);
                        }
                    }
                }
            }
            for (i, a) in acc.iter().enumerate().take(ob) {
                for (j, lane) in a.iter().enumerate() {
                    dw[(o0 + i) * cin * 9 + ci * 3 + j] += lane.iter().copied().sum::<T>();
                }
            }
        }
    }
}

/// Depthwise 3x3 convolution plus ReLU.
pub fn depthwise_forward<T: Scalar>(ph: &[T], g: &ConvGeom, w: &[T], b: &[T], out: &mut [T]) {
    let so = g.side_out;
    let m = g.phase_side;
    let taps = g.tap_bases(b.len());
    for (c, &bias) in b.iter().enumerate() {
        for oy in 0..so {
            let mut start = 0;
            while start < so {
                let len = TILE.min(so - start);
                let mut acc = [bias; TILE];
                for t in 0..9 {
                    let off = taps[c * 9 + t] + oy * m + start;
                    axpy(&mut acc[..len], w[c * 9 + t], &ph[off..off + len]);
                }
                let d0 = c * so * so + oy * so + start;
                relu_store(&mut out[d0..d0 + len], &acc[..len]);
                start += len;
            }
        }
    }
}

/// Gradients of [`depthwise_forward`] from the pre-activation gradient `dz`:
/// accumulates `dw`/`db` and writes the polyphase input gradient `dph`.
pub fn depthwise_backward<T: Scalar>(
    ph: &[T],
    g: &ConvGeom,
    w: &[T],
    dz: &[T],
    dw: &mut [T],
    db: &mut [T],
    dph: &mut [T],
) {
    let so = g.side_out;
    let m = g.phase_side;
    let taps = g.tap_bases(db.len());
    dph.iter_mut().for_each(|v| *v = T::zero());
    for c in 0..db.len() {
        let gz = &dz[c * so * so..(c + 1) * so * so];
        db[c] += sum(gz);
        for t in 0..9 {
            let wv = w[c * 9 + t];
            let mut acc = [T::zero(); TILE];
            for oy in 0..so {
                let off = taps[c * 9 + t] + oy * m;
                let grow = &gz[oy * so..(oy + 1) * so];
                for ((gc, xc), dc) in
                    grow.chunks(TILE).zip(ph[off..off + so].chunks(TILE)).zip(dph[off..off + so].chunks_mut(TILE))
                {
                    for (((a, &gv), &xv), d) in acc.iter_mut().zip(gc).zip(xc).zip(dc) {
                        *a = gv.fma(xv, *a);
                        *d = wv.fma(gv, *d);
                    }
                }
            }
            dw[c * 9 + t] += sum(&acc);
        }
    }
}

/// `da *= (a > 0)`, turning an activation gradient into a pre-activation one.
pub fn relu_backward<T: Scalar>(a: &[T], da: &mut [T]) {
    for (g, &v) in da.iter_mut().zip(a) {
        if v <= T::zero() {
            *g = T::zero();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    fn direct_conv(x: &[f64], cin: usize, n: usize, w: &[f64], b: &[f64], s: usize, depthwise: bool) -> Vec<f64> {
        let so = (n - 1) / s + 1;
        let cout = b.len();
        let mut out = vec![0.0; cout * so * so];
        for o in 0..cout {
            let chans: Vec<usize> = if depthwise { vec![o] } else { (0..cin).collect() };
            for oy in 0..so {
                for ox in 0..so {
                    let mut z = b[o];
                    for &c in &chans {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (oy * s + ky) as isize - 1;
                                let ix = (ox * s + kx) as isize - 1;
                                if iy >= 0 && ix >= 0 && (iy as usize) < n && (ix as usize) < n {
                                    let wi = if depthwise { o * 9 } else { (o * cin + c) * 9 } + ky * 3 + kx;
                                    z += w[wi] * x[c * n * n + iy as usize * n + ix as usize];
                                }
                            }
                        }
                    }
                    out[o * so * so + oy * so + ox] = z.max(0.0);
                }
            }
        }
        out
    }

    #[test]
    fn dot_and_sum_match_naive() {
        let a: Vec<f64> = (0..37).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..37).map(|i| 1.0 - i as f64 * 0.1).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-9);
        assert!((sum(&a) - a.iter().sum::<f64>()).abs() < 1e-9);
    }

    #[test]
    fn matmul_matches_naive() {
        let (o_n, k, p) = (3, 5, 70);
        let w: Vec<f64> = (0..o_n * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = vec![0.1, -0.2, 0.3];
        let x: Vec<f64> = (0..k * p).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut out = vec![0.0; o_n * p];
        matmul_bias_relu(&w, &b, &x, k, p, &mut out);
        for o in 0..o_n {
            for pp in 0..p {
                let z: f64 = b[o] + (0..k).map(|kk| w[o * k + kk] * x[kk * p + pp]).sum::<f64>();
                assert!((out[o * p + pp] - z.max(0.0)).abs() < 1e-12);
            }
        }
        let dz: Vec<f64> = (0..o_n * p).map(|i| (i as f64 * 0.05).sin()).collect();
        let mut dx = vec![0.0; k * p];
        matmul_grad_input(&w, &dz, o_n, k, p, &mut dx);
        for kk in 0..k {
            for pp in 0..p {
                let v: f64 = (0..o_n).map(|o| w[o * k + kk] * dz[o * p + pp]).sum();
                assert!((dx[kk * p + pp] - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn phase_split_and_merge_round_trip() {
        for (n, s) in [(7, 2), (8, 2), (5, 1), (1, 2), (9, 3)] {
            let g = ConvGeom::new(n, s);
            let x: Vec<f64> = (0..2 * n * n).map(|i| i as f64 + 1.0).collect();
            let mut ph = vec![0.0; 2 * g.phase_len()];
            phase_split(&x, 2, &g, &mut ph);
            let mut back = vec![0.0; x.len()];
            phase_merge(&ph, 2, &g, &mut back);
            assert_eq!(back, x, "n={n} s={s}");
            let nonzero = ph.iter().filter(|v| **v != 0.0).count();
            assert_eq!(nonzero, x.len());
        }
    }

    #[test]
    fn convolutions_match_direct_evaluation() {
        for (n, s) in [(7, 2), (8, 2), (6, 1), (1, 2), (70, 1)] {
            let g = ConvGeom::new(n, s);
            let (cin, cout) = (2, 3);
            let x: Vec<f64> = (0..cin * n * n).map(|i| (i as f64 * 0.3).sin()).collect();
            let mut ph = vec![0.0; cin * g.phase_len()];
            phase_split(&x, cin, &g, &mut ph);
            let so = g.side_out;

            let w: Vec<f64> = (0..cout * cin * 9).map(|i| (i as f64 * 0.7).cos()).collect();
            let b = vec![0.05, -0.05, 0.1];
            let mut out = vec![0.0; cout * so * so];
            conv_forward(&ph, cin, &g, &w, &b, &mut out);
            let expect = direct_conv(&x, cin, n, &w, &b, s, false);
            for (a, e) in out.iter().zip(&expect) {
                assert!((a - e).abs() < 1e-12);
            }

            let wd: Vec<f64> = (0..cin * 9).map(|i| (i as f64 * 0.9).sin()).collect();
            let bd = vec![0.02, -0.01];
            let mut outd = vec![0.0; cin * so * so];
            depthwise_forward(&ph, &g, &wd, &bd, &mut outd);
            let expect = direct_conv(&x, cin, n, &wd, &bd, s, true);
            for (a, e) in outd.iter().zip(&expect) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn depthwise_backward_is_the_adjoint() {
        // A large bias keeps every ReLU active so the layer is affine.
        let (n, s, c) = (7, 2, 2);
        let g = ConvGeom::new(n, s);
        let so = g.side_out;
        let x: Vec<f64> = (0..c * n * n).map(|i| (i as f64 * 0.21).cos()).collect();
        let w: Vec<f64> = (0..c * 9).map(|i| (i as f64 * 0.5).sin()).collect();
        let dz: Vec<f64> = (0..c * so * so).map(|i| (i as f64 * 0.13).sin()).collect();
        let mut ph = vec![0.0; c * g.phase_len()];
        phase_split(&x, c, &g, &mut ph);
        let big = vec![100.0; c];
        let mut out = vec![0.0; c * so * so];
        depthwise_forward(&ph, &g, &w, &big, &mut out);
        let lhs: f64 = out.iter().zip(&dz).map(|(o, d)| (o - 100.0) * d).sum();

        let mut dw = vec![0.0; c * 9];
        let mut db = vec![0.0; c];
        let mut dph = vec![0.0; c * g.phase_len()];
        depthwise_backward(&ph, &g, &w, &dz, &mut dw, &mut db, &mut dph);
        let mut dx = vec![0.0; x.len()];
        phase_merge(&dph, c, &g, &mut dx);
        let via_x: f64 = dx.iter().zip(&x).map(|(a, b)| a * b).sum();
        let via_w: f64 = dw.iter().zip(&w).map(|(a, b)| a * b).sum();
        assert!((lhs - via_x).abs() < 1e-10, "{lhs} {via_x}");
        assert!((lhs - via_w).abs() < 1e-10);
        assert!((db.iter().sum::<f64>() - dz.iter().sum::<f64>()).abs() < 1e-12);
    }
}
