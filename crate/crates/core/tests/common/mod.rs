//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use microcam_core::imaging::Image;
use microcam_core::imu::{EventKind, ImuSample, TriggerConfig, TriggerEvent};
use microcam_core::rng::{self, Rng};

/// Offline scan of a whole trace: finds maximal runs of quiet samples and
/// derives the events of each run directly.
pub fn trigger_scan(samples: &[ImuSample], cfg: &TriggerConfig) -> Vec<TriggerEvent> {
    let quiet = |s: &ImuSample| {
        s.la.iter().zip(&cfg.la_thresh).all(|(v, t)| v.abs() < *t) && s.aa.iter().zip(&cfg.aa_thresh).all(|(v, t)| v.abs() < *t)
    };
    let q: Vec<bool> = samples.iter().map(quiet).collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < q.len() {
        if !q[i] {
            i += 1;
            continue;
        }
        let mut j = i;
        while j < q.len() && q[j] {
            j += 1;
        }
        if j - i >= cfg.debounce_n {
            let cap = i + cfg.debounce_n - 1;
            let t0 = samples[cap].t;
            out.push(TriggerEvent { t: t0, kind: EventKind::Capture });
            if let Some(k) = (cap + 1..j).find(|&k| samples[k].t - t0 >= cfg.tt) {
                out.push(TriggerEvent { t: samples[k].t, kind: EventKind::BackgroundEnter });
                if j < q.len() {
                    out.push(TriggerEvent { t: samples[j].t, kind: EventKind::ForegroundResume });
                }
            }
        }
        i = j;
    }
    out
}

/// Random trace of alternating quiet and loud stretches with jittered
/// sample spacing.
pub fn random_trace(seed: u64, cfg: &TriggerConfig) -> Vec<ImuSample> {
    let mut r = rng::rng(seed);
    let n = r.gen_range(0..400);
    let mut t = r.gen_range(-5.0..5.0);
    let mut quiet = r.gen_bool(0.5);
    let mut left = 0usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        if left == 0 {
            quiet = !quiet;
            left = if quiet { r.gen_range(1..3 * cfg.debounce_n + 40) } else { r.gen_range(1..12) };
        }
        left -= 1;
        t += r.gen_range(0.01..1.5);
        let mut axis = |th: f64| {
            if quiet {
                r.gen_range(-0.99..0.99) * th
            } else if r.gen_bool(0.3) {
                // loud samples may still have some quiet axes
                r.gen_range(1.0..5.0) * th * if r.gen_bool(0.5) { 1.0 } else { -1.0 }
            } else {
                r.gen_range(-0.99..0.99) * th
            }
        };
        let la = [axis(cfg.la_thresh[0]), axis(cfg.la_thresh[1]), axis(cfg.la_thresh[2])];
        let mut aa = [axis(cfg.aa_thresh[0]), axis(cfg.aa_thresh[1]), axis(cfg.aa_thresh[2])];
        if !quiet && la.iter().zip(&cfg.la_thresh).all(|(v, th)| v.abs() < *th) && aa.iter().zip(&cfg.aa_thresh).all(|(v, th)| v.abs() < *th) {
            aa[r.gen_range(0..3)] = 2.0 * cfg.aa_thresh[0].max(cfg.aa_thresh[1]).max(cfg.aa_thresh[2]);
        }
        out.push(ImuSample::new(t, la, aa));
    }
    out
}

/// Random but valid trigger settings.
pub fn random_trigger_config(seed: u64) -> TriggerConfig {
    let mut r = rng::rng(seed ^ 0x7716);
    TriggerConfig {
        la_thresh: [r.gen_range(0.01..1.0), r.gen_range(0.01..1.0), r.gen_range(0.01..1.0)],
        aa_thresh: [r.gen_range(0.01..1.0), r.gen_range(0.01..1.0), r.gen_range(0.01..1.0)],
        tt: r.gen_range(0.5..40.0),
        debounce_n: r.gen_range(1..15),
    }
}

fn reflect(i: isize, n: usize) -> usize {
    // mirror without repeating the edge sample, by walking
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let mut i = i;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

/// LoG response variance by direct (non-separable) 2-D convolution with the
/// outer-product Gaussian, then the five-point Laplacian.
pub fn log_variance_dense(lum: &[f64], w: usize, h: usize, sigma: f64) -> f64 {
    let r = (3.0 * sigma).ceil() as isize;
    let g: Vec<f64> = (-r..=r).map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = g.iter().sum();
    let mut blurred = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let k = g[(dy + r) as usize] * g[(dx + r) as usize] / (s * s);
                    acc += k * lum[reflect(y + dy, h) * w + reflect(x + dx, w)];
                }
            }
            blurred[y as usize * w + x as usize] = acc;
        }
    }
    let at = |x: isize, y: isize| blurred[reflect(y, h) * w + reflect(x, w)];
    let mut resp = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            resp.push(at(x + 1, y) + at(x - 1, y) + at(x, y + 1) + at(x, y - 1) - 4.0 * at(x, y));
        }
    }
    let mean = resp.iter().sum::<f64>() / resp.len() as f64;
    resp.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / resp.len() as f64
}

pub fn impulse(w: usize, h: usize, x: usize, y: usize) -> Image {
    let mut img = Image::filled(w, h, 1, 0.0);
    img.set(x, y, 0, 1.0);
    img
}

/// Greedy window walk: the first frame inside each consecutive 1/rate window.
pub fn window_walk(times: &[f64], rate: f64) -> Vec<usize> {
    let mut out = Vec::new();
    if times.is_empty() {
        return out;
    }
    let width = 1.0 / rate;
    let mut last_window = None;
    for (i, &t) in times.iter().enumerate() {
        let k = ((t - times[0]) / width).floor() as i64;
        if last_window != Some(k) {
            out.push(i);
            last_window = Some(k);
        }
    }
    out
}
