//! Times forward, forward+backward and augmentation of the desk model
//! (best of several runs, to filter scheduler noise).
use microcam_core::imaging::{augment, AugmentPolicy};
use microcam_core::nn::{Arch, Example, ModelParams, Workspace};
use microcam_core::{Image, MaterialClass, ObjectClass};
use std::time::Instant;

fn best_ms<F: FnMut(u64)>(mut f: F) -> (f64, f64) {
    let mut best = f64::INFINITY;
    let t0 = Instant::now();
    let n = 200;
    for i in 0..n {
        let t = Instant::now();
        f(i);
        best = best.min(t.elapsed().as_secs_f64());
    }
    (best * 1e3, t0.elapsed().as_secs_f64() * 1e3 / n as f64)
}

fn main() {
    let p = ModelParams::<f32>::init(Arch::desk(), 1).unwrap();
    let img = Image::from_fn(224, 224, 3, |x, y, c| ((x * 7 + y * 3 + c) % 17) as f32 / 17.0);
    let mut ws = Workspace::new();
    let (b, m) = best_ms(|_| {
        std::hint::black_box(p.forward_with(&img, &mut ws).unwrap());
    });
    println!("forward:          best {b:.3} ms, mean {m:.3} ms");
    let ex = [Example { image: &img, object: ObjectClass(1), material: MaterialClass(2) }];
    let (b, m) = best_ms(|_| {
        std::hint::black_box(p.loss_and_grad_with(&ex, &mut ws).unwrap());
    });
    println!("forward+backward: best {b:.3} ms, mean {m:.3} ms");
    let pol = AugmentPolicy::default();
    let (b, m) = best_ms(|i| {
        std::hint::black_box(augment(&img, i, &pol).unwrap());
    });
    println!("augment:          best {b:.3} ms, mean {m:.3} ms");
    let flip = AugmentPolicy { flip_p: 1.0, ..AugmentPolicy::IDENTITY };
    let (b, m) = best_ms(|i| {
        std::hint::black_box(augment(&img, i, &flip).unwrap());
    });
    println!("flip only:        best {b:.3} ms, mean {m:.3} ms");
    let (b, m) = best_ms(|_| {
        std::hint::black_box(img.clone());
    });
    println!("clone:            best {b:.3} ms, mean {m:.3} ms");
}
