mod common;

use std::sync::Arc;

use microcam_core::corpus::{frame_sample_indices, make_split, Corpus, SampleRecord, SplitKind};
use microcam_core::imaging::{augment, center_crop_resize, gaussian_blur, log_variance, AugmentPolicy, Image};
use microcam_core::imu::{run_trace, ImuSample, PlacementState, TriggerConfig};
use microcam_core::nn::{decode_checkpoint, encode_checkpoint, softmax, Arch, ModelParams, PredictionPair};
use microcam_core::replay::{BufferItem, ReplayBuffer, SamplingMode};
use microcam_core::rng::{self, Rng};
use microcam_core::semantics::{validated_predict, MappingTable, ValidationPolicy};
use microcam_core::taxonomy::{LabelTaxonomy, MaterialClass, ObjectClass};
use proptest::prelude::*;

fn item(object: u16, material: u16, loss: f64) -> BufferItem {
    BufferItem {
        image: Arc::new(Image::filled(1, 1, 1, 0.0)),
        object: ObjectClass(object),
        material: MaterialClass(material),
        last_loss: loss,
        task_id: 0,
        insert_step: 0,
    }
}

fn mode(i: u8) -> SamplingMode {
    [SamplingMode::Reservoir, SamplingMode::Balanced, SamplingMode::LossAware, SamplingMode::BalancedLossAware][i as usize % 4]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn streaming_trigger_matches_offline_scan(seed in any::<u64>()) {
        let cfg = common::random_trigger_config(seed);
        let trace = common::random_trace(seed, &cfg);
        prop_assert_eq!(run_trace(&trace, &cfg).unwrap(), common::trigger_scan(&trace, &cfg));
    }

    #[test]
    fn one_capture_per_stationary_episode(seed in any::<u64>()) {
        let cfg = common::random_trigger_config(seed);
        let trace = common::random_trace(seed, &cfg);
        let events = run_trace(&trace, &cfg).unwrap();
        // between two captures there is always a loud sample
        let caps: Vec<f64> = events.iter().filter(|e| e.kind.as_str() == "capture").map(|e| e.t).collect();
        for w in caps.windows(2) {
            prop_assert!(trace.iter().any(|s| s.t > w[0] && s.t < w[1] && !cfg.is_sub_threshold(s)));
        }
    }

    #[test]
    fn rejected_samples_leave_state_untouched(seed in any::<u64>(), k in 0usize..50) {
        let cfg = TriggerConfig::default();
        let trace = common::random_trace(seed, &cfg);
        prop_assume!(k < trace.len());
        let mut st = PlacementState::default();
        for s in &trace[..=k] {
            st.ingest(s, &cfg).unwrap();
        }
        let before = st;
        let stale = ImuSample::new(trace[k].t, [0.0; 3], [0.0; 3]);
        prop_assert!(st.ingest(&stale, &cfg).is_err());
        let nan = ImuSample::new(trace[k].t + 1.0, [f64::NAN, 0.0, 0.0], [0.0; 3]);
        prop_assert!(st.ingest(&nan, &cfg).is_err());
        prop_assert_eq!(st, before);
    }

    // `offset` and `scaled` clamp to [0, 1]; the ranges stay clear of that
    #[test]
    fn log_score_is_shift_invariant_and_quadratic(seed in any::<u64>(), c in -0.25f32..0.25, a in 0.1f32..1.0) {
        let mut r = rng::rng(seed);
        let img = Image::from_fn(12, 10, 1, |_, _, _| r.gen_range(0.25f32..0.75));
        let base = log_variance(&img, 1.0).unwrap();
        let shifted = log_variance(&img.offset(c), 1.0).unwrap();
        prop_assert!((shifted - base).abs() <= 1e-5 * base);
        let scaled = log_variance(&img.scaled(a), 1.0).unwrap();
        let expect = base * (a as f64).powi(2);
        prop_assert!((scaled - expect).abs() <= 1e-5 * expect + 1e-12);
    }

    #[test]
    fn log_matches_dense_oracle_on_small_images(seed in any::<u64>(), w in 1usize..9, h in 1usize..9, sigma in 0.3f64..2.0) {
        let mut r = rng::rng(seed);
        let img = Image::from_fn(w, h, 1, |_, _, _| r.gen::<f32>());
        let fast = log_variance(&img, sigma).unwrap();
        let dense = common::log_variance_dense(&img.luminance(), w, h, sigma);
        prop_assert!((fast - dense).abs() <= 1e-9 * (1.0 + dense), "{} vs {}", fast, dense);
    }

    #[test]
    fn buffer_never_exceeds_capacity(seed in any::<u64>(), cap in 0usize..20, n in 0usize..200, m in 0u8..4) {
        let mut r = rng::rng(seed);
        let mut buf = ReplayBuffer::new(cap, mode(m));
        for i in 0..n {
            let slot = buf.insert(item((i % 3) as u16, (i % 5) as u16, r.gen_range(0.0..5.0)), &mut r);
            prop_assert!(slot.is_none_or(|s| s < cap));
            prop_assert!(buf.len() <= cap);
            prop_assert_eq!(buf.len(), (i + 1).min(cap));
        }
        prop_assert_eq!(buf.seen_count(), n as u64);
        let total: usize = buf.class_counts().iter().map(|c| c.1).sum();
        prop_assert_eq!(total, buf.len());
    }

    #[test]
    fn balanced_buffer_counts_stay_within_one(seed in any::<u64>(), classes in 2u16..6, skew in 1usize..20) {
        // a heavily skewed stream where every class keeps appearing
        let mut r = rng::rng(seed);
        let mut buf = ReplayBuffer::new(60, SamplingMode::Balanced);
        for i in 0..3000usize {
            let c = if i % (skew + 1) == 0 { (i / (skew + 1)) as u16 % classes } else { 0 };
            buf.insert(item(c, c, 1.0), &mut r);
        }
        let counts: Vec<usize> = buf.class_counts().iter().map(|c| c.1).collect();
        prop_assert_eq!(counts.len(), classes as usize);
        let (lo, hi) = (*counts.iter().min().unwrap(), *counts.iter().max().unwrap());
        prop_assert!(hi - lo <= 1, "{:?}", counts);
    }

    #[test]
    fn frame_sampling_matches_window_walk(steps in proptest::collection::vec(1u32..20, 0..60), rate_exp in -2i32..4) {
        // times on a dyadic grid keep the window arithmetic exact
        let mut t = 0.0;
        let times: Vec<f64> = steps.iter().map(|&s| { t += s as f64 / 16.0; t }).collect();
        let rate = 2f64.powi(rate_exp);
        prop_assert_eq!(frame_sample_indices(&times, rate).unwrap(), common::window_walk(&times, rate));
    }

    #[test]
    fn validated_predictions_are_always_table_pairs(seed in any::<u64>(), floor in 0.0f64..0.2) {
        let table = MappingTable::standard();
        let mut r = rng::rng(seed);
        let mut dist = |n: usize| {
            let z: Vec<f64> = (0..n).map(|_| r.gen_range(-6.0..6.0)).collect();
            softmax(&z)
        };
        let pred = PredictionPair::from_probabilities(dist(6), dist(9));
        let policy = ValidationPolicy { max_retries: 1, consistency_floor: floor };
        if let Ok(v) = validated_predict(&table, &policy, |_| Ok(pred.clone())) {
            prop_assert!(table.contains(v.object, v.material));
            prop_assert!(v.joint > floor || !v.repaired);
        }
    }

    #[test]
    fn augmentation_preserves_shape_and_range(seed in any::<u64>(), side in 4usize..24) {
        let mut r = rng::rng(seed);
        let img = Image::from_fn(side, side, 3, |_, _, _| r.gen::<f32>());
        let out = augment(&img, seed, &AugmentPolicy::default()).unwrap();
        prop_assert_eq!((out.width(), out.height(), out.channels()), (side, side, 3));
        let (lo, hi) = img.pixels().iter().fold((f32::MAX, f32::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        prop_assert!(out.pixels().iter().all(|&v| v >= lo - 1e-5 && v <= hi + 1e-5));
        prop_assert_eq!(augment(&img, seed, &AugmentPolicy::default()).unwrap(), out);
    }

    #[test]
    fn crop_resize_keeps_constants(w in 1usize..40, h in 1usize..40, side in 1usize..32, v in 0.0f32..1.0) {
        let out = center_crop_resize(&Image::filled(w, h, 3, v), side).unwrap();
        prop_assert_eq!((out.width(), out.height()), (side, side));
        prop_assert!(out.pixels().iter().all(|&p| (p - v).abs() < 1e-5));
    }

    #[test]
    fn checkpoints_round_trip(seed in any::<u64>(), side in 8usize..40) {
        let p = ModelParams::<f32>::init(Arch::desk().with_side(side), seed).unwrap();
        let back = decode_checkpoint(&encode_checkpoint(&p)).unwrap();
        prop_assert_eq!(back.arch(), p.arch());
        prop_assert_eq!(back.values(), p.values());
    }

    #[test]
    fn time_folds_ignore_record_order(seed in any::<u64>(), n in 4usize..60, k in 2usize..4) {
        prop_assume!(k <= n);
        let mut r = rng::rng(seed);
        let img = Arc::new(Image::filled(1, 1, 3, 0.0));
        let recs: Vec<SampleRecord> = (0..n)
            .map(|i| SampleRecord {
                person: 1 + (i % 3) as u16,
                object: ObjectClass::BED,
                material: MaterialClass::PLUSH,
                image: img.clone(),
                t: (r.gen_range(0..n as u32 * 4)) as f64 + i as f64 * 1e-3,
            })
            .collect();
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, r.gen_range(0..=i));
        }
        let tax = LabelTaxonomy::standard;
        let a = Corpus::new(tax(), MappingTable::standard(), recs.clone()).unwrap();
        let b = Corpus::new(tax(), MappingTable::standard(), perm.iter().map(|&i| recs[i].clone()).collect()).unwrap();
        let pa = make_split(&a, SplitKind::TimeKFold, Some(k), 1).unwrap();
        let pb = make_split(&b, SplitKind::TimeKFold, Some(k), 1).unwrap();
        for (fa, fb) in pa.folds.iter().zip(&pb.folds) {
            let mut ta: Vec<f64> = fa.test.iter().map(|&i| a.records()[i].t).collect();
            let mut tb: Vec<f64> = fb.test.iter().map(|&i| b.records()[i].t).collect();
            ta.sort_by(f64::total_cmp);
            tb.sort_by(f64::total_cmp);
            prop_assert_eq!(ta, tb);
        }
        // every record is tested exactly once
        let mut seen = vec![0; n];
        for f in &pa.folds {
            for &i in &f.test {
                seen[i] += 1;
            }
            prop_assert_eq!(f.train.len() + f.test.len(), n);
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn blur_never_sharpens(seed in any::<u64>()) {
        let mut r = rng::rng(seed);
        let img = Image::from_fn(24, 24, 1, |_, _, _| r.gen::<f32>());
        let mut last = log_variance(&img, 1.0).unwrap();
        for s in [0.5, 1.0, 2.0, 4.0] {
            let v = log_variance(&gaussian_blur(&img, s).unwrap(), 1.0).unwrap();
            prop_assert!(v <= last, "{} > {} at {}", v, last, s);
            last = v;
        }
    }
}

#[test]
fn lopo_folds_hold_out_exactly_one_person() {
    let img = Arc::new(Image::filled(1, 1, 3, 0.0));
    let recs: Vec<SampleRecord> = (0..30)
        .map(|i| SampleRecord { person: 1 + (i % 4) as u16, object: ObjectClass::BED, material: MaterialClass::PLUSH, image: img.clone(), t: i as f64 })
        .collect();
    let c = Corpus::new(LabelTaxonomy::standard(), MappingTable::standard(), recs).unwrap();
    let plan = make_split(&c, SplitKind::LeaveOnePersonOut, None, 0).unwrap();
    assert_eq!(plan.folds.len(), 4);
    for (k, f) in plan.folds.iter().enumerate() {
        let p = k as u16 + 1;
        assert_eq!(f.person, Some(p));
        assert!(f.test.iter().all(|&i| c.records()[i].person == p));
        assert!(f.train.iter().all(|&i| c.records()[i].person != p));
    }
}
