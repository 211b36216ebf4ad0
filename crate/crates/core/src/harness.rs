//! Evaluation: accuracy, confusion matrices, the two cross-validation
//! protocols and the continual-learning comparison.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::corpus::{make_split, Corpus, Fold, PersonId, SampleRecord, SplitKind, SplitPlan};
use crate::imaging::{gaussian_blur, Image};
use crate::nn::{predict_all, train, Arch, Example, LrSchedule, ModelParams, Scalar, TrainConfig};
use crate::replay::{cl_run, prime_buffer, CLConfig, CLReport, ReplayBuffer, Task};
use crate::rng;
use crate::{Error, Result};

/// Fraction of positions where `preds` and `labels` agree.
pub fn top1_accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::Shape(alloc::format!("{} predictions for {} labels", preds.len(), labels.len())));
    }
    if preds.is_empty() {
        return Err(Error::Empty("prediction list"));
    }
    let ok = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(ok as f64 / preds.len() as f64)
}

/// Square confusion matrix: rows are predictions, columns ground truth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self { classes, counts: vec![0; classes * classes] }
    }

    /// Builds the matrix from 0-based predicted and true class indices.
    pub fn from_predictions(preds: &[usize], labels: &[usize], classes: usize) -> Result<Self> {
        if preds.len() != labels.len() {
            return Err(Error::Shape(alloc::format!("{} predictions for {} labels", preds.len(), labels.len())));
        }
        let mut m = Self::new(classes);
        for (&p, &l) in preds.iter().zip(labels) {
            m.add(p, l)?;
        }
        Ok(m)
    }

    pub fn add(&mut self, pred: usize, truth: usize) -> Result<()> {
        for (what, i) in [("predicted class", pred), ("true class", truth)] {
            if i >= self.classes {
                return Err(Error::LabelOutOfRange { what, index: i, len: self.classes });
            }
        }
        self.counts[pred * self.classes + truth] += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::Shape(alloc::format!("{} vs {} classes", self.classes, other.classes)));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn count(&self, pred: usize, truth: usize) -> u64 {
        self.counts[pred * self.classes + truth]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.count(c, c)).sum()
    }

    pub fn accuracy(&self) -> Option<f64> {
        let n = self.total();
        (n > 0).then(|| self.trace() as f64 / n as f64)
    }

    pub fn column_total(&self, truth: usize) -> u64 {
        (0..self.classes).map(|p| self.count(p, truth)).sum()
    }

    /// Each nonempty column divided by its total; empty columns stay zero.
    /// Indexed `[pred][truth]`.
    pub fn normalized(&self) -> Vec<Vec<f64>> {
        let totals: Vec<u64> = (0..self.classes).map(|t| self.column_total(t)).collect();
        (0..self.classes)
            .map(|p| {
                (0..self.classes)
                    .map(|t| if totals[t] == 0 { 0.0 } else { self.count(p, t) as f64 / totals[t] as f64 })
                    .collect()
            })
            .collect()
    }

    /// Per-class recall (diagonal of the normalized matrix); `None` for
    /// classes without samples.
    pub fn recall(&self) -> Vec<Option<f64>> {
        (0..self.classes)
            .map(|c| {
                let n = self.column_total(c);
                (n > 0).then(|| self.count(c, c) as f64 / n as f64)
            })
            .collect()
    }
}

/// Mean and sample standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, libm::sqrt(ss / (n - 1.0)))
}

/// Test results of one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub person: Option<PersonId>,
    pub train_size: usize,
    pub test_size: usize,
    pub accuracy: [f64; 2],
    /// `[object, material]`
    pub confusion: [ConfusionMatrix; 2],
    pub epochs_run: usize,
}

/// Per-person results of a leave-one-person-out run.
#[derive(Debug, Clone, PartialEq)]
pub struct LOPOReport {
    pub persons: Vec<PersonId>,
    /// `[head][person][class]`, `None` where the person has no such sample.
    pub per_person_class: [Vec<Vec<Option<f64>>>; 2],
    /// `[head][class]` averages over the persons possessing the class.
    pub class_average: [Vec<Option<f64>>; 2],
    /// `[head][class]` number of persons possessing the class.
    pub class_denominator: [Vec<usize>; 2],
    /// Mean and SD of the per-person accuracy, per head.
    pub mean: [f64; 2],
    pub sd: [f64; 2],
}

impl LOPOReport {
    pub fn from_folds(folds: &[FoldResult]) -> Result<Self> {
        let mut persons = Vec::with_capacity(folds.len());
        for f in folds {
            persons.push(f.person.ok_or_else(|| Error::InvalidArgument("fold without a held-out person".into()))?);
        }
        let mut per_person_class: [Vec<Vec<Option<f64>>>; 2] = [Vec::new(), Vec::new()];
        let mut class_average: [Vec<Option<f64>>; 2] = [Vec::new(), Vec::new()];
        let mut class_denominator: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        let mut mean = [0.0; 2];
        let mut sd = [0.0; 2];
        for h in 0..2 {
            let rows: Vec<Vec<Option<f64>>> = folds.iter().map(|f| f.confusion[h].recall()).collect();
            let classes = folds.first().map_or(0, |f| f.confusion[h].classes());
            for c in 0..classes {
                let present: Vec<f64> = rows.iter().filter_map(|r| r[c]).collect();
                class_denominator[h].push(present.len());
                class_average[h].push((!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64));
            }
            per_person_class[h] = rows;
            let accs: Vec<f64> = folds.iter().map(|f| f.accuracy[h]).collect();
            (mean[h], sd[h]) = mean_sd(&accs);
        }
        Ok(Self { persons, per_person_class, class_average, class_denominator, mean, sd })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolReport {
    pub kind: SplitKind,
    pub folds: Vec<FoldResult>,
    /// Mean and SD over fold accuracies, `[object, material]`.
    pub mean: [f64; 2],
    pub sd: [f64; 2],
    /// Accuracy pooled over every test prediction.
    pub pooled: [f64; 2],
    pub confusion: [ConfusionMatrix; 2],
    pub lopo: Option<LOPOReport>,
}

/// Trains and evaluates one fold from a fresh initialization.
pub fn run_fold<T: Scalar>(corpus: &Corpus, fold: &Fold, arch: &Arch, cfg: &TrainConfig) -> Result<FoldResult> {
    if fold.train.is_empty() {
        return Err(Error::Empty("fold training set"));
    }
    if fold.test.is_empty() {
        return Err(Error::Empty("fold test set"));
    }
    let tax = corpus.taxonomy();
    let arch = Arch { objects: arch.objects.max(tax.object_count()), materials: arch.materials.max(tax.material_count()), ..arch.clone() };
    let p0 = ModelParams::<T>::init_for_training(arch, cfg.seed)?;
    let (p, report) = train(&p0, &corpus.examples(&fold.train), cfg, LrSchedule::Constant)?;
    let test = corpus.examples(&fold.test);
    let [co, cm] = confusions(&p, &test)?;
    let accuracy = [co.accuracy().unwrap_or(0.0), cm.accuracy().unwrap_or(0.0)];
    Ok(FoldResult {
        person: fold.person,
        train_size: fold.train.len(),
        test_size: fold.test.len(),
        accuracy,
        confusion: [co, cm],
        epochs_run: report.epochs.len(),
    })
}

/// Object and material confusion matrices of a model on labeled examples.
pub fn confusions<T: Scalar>(params: &ModelParams<T>, data: &[Example<'_>]) -> Result<[ConfusionMatrix; 2]> {
    let images: Vec<&Image> = data.iter().map(|e| e.image).collect();
    let preds = predict_all(params, &images)?;
    let mut co = ConfusionMatrix::new(params.arch().objects);
    let mut cm = ConfusionMatrix::new(params.arch().materials);
    for (p, e) in preds.iter().zip(data) {
        co.add(p.top1_object.index(), e.object.index())?;
        cm.add(p.top1_material.index(), e.material.index())?;
    }
    Ok([co, cm])
}

/// Runs every fold of a split plan and aggregates. `on_fold` is called after
/// each fold (progress reporting).
pub fn run_protocol<T: Scalar>(
    corpus: &Corpus,
    plan: &SplitPlan,
    arch: &Arch,
    cfg: &TrainConfig,
    on_fold: &mut dyn FnMut(usize, &FoldResult),
) -> Result<ProtocolReport> {
    if plan.folds.is_empty() {
        return Err(Error::Empty("split plan"));
    }
    let mut folds = Vec::with_capacity(plan.folds.len());
    for (i, fold) in plan.folds.iter().enumerate() {
        let fold_cfg = TrainConfig { seed: rng::derive(cfg.seed, i as u64), ..*cfg };
        let r = run_fold::<T>(corpus, fold, arch, &fold_cfg)?;
        on_fold(i, &r);
        folds.push(r);
    }
    let mut confusion = folds[0].confusion.clone();
    for f in &folds[1..] {
        confusion[0].merge(&f.confusion[0])?;
        confusion[1].merge(&f.confusion[1])?;
    }
    let mut mean = [0.0; 2];
    let mut sd = [0.0; 2];
    for h in 0..2 {
        let accs: Vec<f64> = folds.iter().map(|f| f.accuracy[h]).collect();
        (mean[h], sd[h]) = mean_sd(&accs);
    }
    let pooled = [confusion[0].accuracy().unwrap_or(0.0), confusion[1].accuracy().unwrap_or(0.0)];
    let lopo = match plan.kind {
        SplitKind::LeaveOnePersonOut => Some(LOPOReport::from_folds(&folds)?),
        SplitKind::TimeKFold => None,
    };
    Ok(ProtocolReport { kind: plan.kind, folds, mean, sd, pooled, confusion, lopo })
}

/// Train/test halves of a two-task class-incremental stream.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoTaskSplit {
    pub a_train: Corpus,
    pub a_test: Corpus,
    pub b_train: Corpus,
    pub b_test: Corpus,
}

/// Task A holds the first `first_materials` material classes, task B the
/// rest. Fold 0 of a `k`-fold time split separates train from test.
pub fn two_task_split(corpus: &Corpus, first_materials: usize, k: usize, seed: u64) -> Result<TwoTaskSplit> {
    let plan = make_split(corpus, SplitKind::TimeKFold, Some(k), seed)?;
    let (train, test) = (corpus.subset(&plan.folds[0].train), corpus.subset(&plan.folds[0].test));
    let in_a = |r: &SampleRecord| r.material.index() < first_materials;
    let out = TwoTaskSplit {
        a_train: train.filter(in_a),
        a_test: test.filter(in_a),
        b_train: train.filter(|r| !in_a(r)),
        b_test: test.filter(|r| !in_a(r)),
    };
    if out.a_train.is_empty() || out.b_train.is_empty() {
        return Err(Error::InvalidArgument(alloc::format!("splitting after {first_materials} materials leaves a task empty")));
    }
    Ok(out)
}

/// One image degradation of the hardened evaluation set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Degradation {
    Defocus { sigma: f64 },
    Brightness { factor: f32 },
    Noise { sd: f32 },
}

/// Defocus σ ∈ {2, 4}, brightness ±40 %, additive noise σ = 0.1.
pub const HARDENING: [Degradation; 5] = [
    Degradation::Defocus { sigma: 2.0 },
    Degradation::Defocus { sigma: 4.0 },
    Degradation::Brightness { factor: 0.6 },
    Degradation::Brightness { factor: 1.4 },
    Degradation::Noise { sd: 0.1 },
];

impl Degradation {
    pub fn apply(&self, img: &Image, seed: u64) -> Result<Image> {
        match *self {
            Degradation::Defocus { sigma } => gaussian_blur(img, sigma),
            Degradation::Brightness { factor } => Ok(img.scaled(factor)),
            Degradation::Noise { sd } => Ok(img.with_noise(sd, seed)),
        }
    }
}

/// Hardened copy of a corpus: record `i` gets degradation `(i + offset) mod 5`
/// from [`HARDENING`], with a per-record noise seed.
pub fn harden(corpus: &Corpus, seed: u64) -> Result<Corpus> {
    let offset = (rng::derive(seed, 0) % HARDENING.len() as u64) as usize;
    corpus.map_images(|i, img| HARDENING[(i + offset) % HARDENING.len()].apply(img, rng::derive(seed, i as u64 + 1)))
}

/// Accuracy of the model without and with continual learning on one set.
#[derive(Debug, Clone, PartialEq)]
pub struct SetComparison {
    pub name: String,
    /// `[object, material]`
    pub er_off: [f64; 2],
    pub er_on: [f64; 2],
}

impl SetComparison {
    pub fn delta(&self) -> [f64; 2] {
        [self.er_on[0] - self.er_off[0], self.er_on[1] - self.er_off[1]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CLEvalReport {
    /// original, hardened, novel
    pub sets: [SetComparison; 3],
    pub cl: CLReport,
}

/// Evaluation corpora of the continual-learning comparison.
#[derive(Debug, Clone, Copy)]
pub struct CLEvalSets<'a> {
    pub original: &'a Corpus,
    pub hardened: &'a Corpus,
    pub novel: &'a Corpus,
}

/// Training inputs of the continual-learning comparison.
#[derive(Debug, Clone, Copy)]
pub struct CLEvalData<'a> {
    /// Data the pretrained model was trained on; primes the buffer.
    pub pretrain: &'a Corpus,
    /// New stream data (degraded and novel-class images).
    pub stream: &'a Corpus,
}

/// Compares the pretrained model (ER off: no further learning) against the
/// same model after experience-replay learning on the stream (ER on).
pub fn cl_evaluation<T: Scalar>(
    pretrained: &ModelParams<T>,
    data: CLEvalData<'_>,
    sets: CLEvalSets<'_>,
    cfg: &CLConfig,
    train_cfg: &TrainConfig,
    capacity: usize,
) -> Result<CLEvalReport> {
    for (name, c) in [("original", sets.original), ("hardened", sets.hardened), ("novel", sets.novel)] {
        if c.is_empty() {
            return Err(Error::InvalidArgument(alloc::format!("{name} evaluation corpus is empty")));
        }
    }
    let mut buf = ReplayBuffer::new(capacity, cfg.sampling_mode());
    prime_buffer(&mut buf, pretrained, data.pretrain, 0, rng::derive(train_cfg.seed, 0xB0F))?;
    let task = Task { id: 1, train: data.stream, test: data.stream };
    let (er_on, cl) = cl_run(pretrained, &[task], cfg, train_cfg, &mut buf)?;
    let names = ["original", "hardened", "novel"];
    let corpora = [sets.original, sets.hardened, sets.novel];
    let mut out: Vec<SetComparison> = Vec::with_capacity(3);
    for (name, c) in names.iter().zip(corpora) {
        let ex = c.all_examples();
        out.push(SetComparison { name: (*name).into(), er_off: accuracy_pair(pretrained, &ex)?, er_on: accuracy_pair(&er_on, &ex)? });
    }
    let sets: [SetComparison; 3] = out.try_into().expect("three sets");
    Ok(CLEvalReport { sets, cl })
}

fn accuracy_pair<T: Scalar>(params: &ModelParams<T>, data: &[Example<'_>]) -> Result<[f64; 2]> {
    // labels beyond the model's heads simply count as misses
    let images: Vec<&Image> = data.iter().map(|e| e.image).collect();
    let preds = predict_all(params, &images)?;
    let po: Vec<usize> = preds.iter().map(|p| p.top1_object.index()).collect();
    let pm: Vec<usize> = preds.iter().map(|p| p.top1_material.index()).collect();
    let lo: Vec<usize> = data.iter().map(|e| e.object.index()).collect();
    let lm: Vec<usize> = data.iter().map(|e| e.material.index()).collect();
    Ok([top1_accuracy(&po, &lo)?, top1_accuracy(&pm, &lm)?])
}

/// Wall-time statistics of one pipeline stage, in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTiming {
    pub stage: String,
    pub runs: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Times each stage in isolation `n_runs` times using `clock` (seconds).
/// Stage timings are not expected to add up to an end-to-end time.
pub fn latency_probe_with(
    stages: &mut [(&str, &mut dyn FnMut() -> Result<()>)],
    n_runs: usize,
    clock: &dyn Fn() -> f64,
) -> Result<Vec<StageTiming>> {
    if n_runs == 0 {
        return Err(Error::InvalidArgument("n_runs must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(stages.len());
    for (name, f) in stages.iter_mut() {
        let mut times = Vec::with_capacity(n_runs);
        for _ in 0..n_runs {
            let t0 = clock();
            f()?;
            times.push(clock() - t0);
        }
        let mean = times.iter().sum::<f64>() / n_runs as f64;
        let min = times.iter().copied().fold(f64::INFINITY, f64::min);
        let max = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out.push(StageTiming { stage: (*name).into(), runs: n_runs, mean, min, max });
    }
    Ok(out)
}

/// Times the three on-device stages: trigger ingest (per IMU sample), the
/// LoG quality gate and the forward pass.
#[cfg(feature = "std")]
pub fn latency_probe<T: Scalar>(
    params: &ModelParams<T>,
    image: &Image,
    trace: &[crate::imu::ImuSample],
    trigger: &crate::imu::TriggerConfig,
    gate: &crate::imaging::QualityGate,
    n_runs: usize,
) -> Result<Vec<StageTiming>> {
    use std::time::Instant;
    if trace.is_empty() {
        return Err(Error::Empty("IMU trace"));
    }
    let start = Instant::now();
    let clock = || start.elapsed().as_secs_f64();
    let mut state = crate::imu::PlacementState::default();
    let mut k = 0usize;
    let mut ws = crate::nn::Workspace::new();
    let mut ingest = || -> Result<()> {
        if k == trace.len() {
            state.reset();
            k = 0;
        }
        core::hint::black_box(state.ingest(&trace[k], trigger)?);
        k += 1;
        Ok(())
    };
    let mut quality = || -> Result<()> {
        core::hint::black_box(gate.assess(image)?);
        Ok(())
    };
    let mut forward = || -> Result<()> {
        core::hint::black_box(params.forward_with(image, &mut ws)?);
        Ok(())
    };
    latency_probe_with(
        &mut [("trigger_ingest", &mut ingest), ("quality_gate", &mut quality), ("forward", &mut forward)],
        n_runs,
        &clock,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{make_split, synth_generate, SynthSpec};

    #[test]
    fn accuracy_counts_matches() {
        assert_eq!(top1_accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(top1_accuracy(&[1, 2, 4], &[1, 2, 3]).unwrap(), 2.0 / 3.0);
        assert!(top1_accuracy(&[], &[]).is_err());
        assert!(top1_accuracy(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn confusion_orientation_and_normalization() {
        // half of class 2 predicted as class 0
        let labels = [2, 2, 2, 2, 0, 1];
        let preds = [0, 0, 2, 2, 0, 1];
        let m = ConfusionMatrix::from_predictions(&preds, &labels, 4).unwrap();
        let n = m.normalized();
        assert_eq!(n[0][2], 0.5);
        assert_eq!(n[2][2], 0.5);
        assert_eq!(m.count(0, 2), 2);
        for t in 0..4 {
            let s: f64 = (0..4).map(|p| n[p][t]).sum();
            assert!(if m.column_total(t) == 0 { s == 0.0 } else { (s - 1.0).abs() < 1e-12 });
        }
        assert_eq!(m.accuracy().unwrap(), top1_accuracy(&preds, &labels).unwrap());
    }

    #[test]
    fn constant_predictor_fills_first_row() {
        let m = ConfusionMatrix::from_predictions(&[0; 6], &[0, 1, 2, 0, 1, 2], 3).unwrap();
        assert_eq!(m.normalized()[0], vec![1.0; 3]);
    }

    #[test]
    fn mean_sd_basics() {
        assert_eq!(mean_sd(&[0.5]), (0.5, 0.0));
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-12);
    }

    fn fold_with(person: PersonId, truths: &[usize], preds: &[usize]) -> FoldResult {
        let m = ConfusionMatrix::from_predictions(preds, truths, 3).unwrap();
        let acc = m.accuracy().unwrap();
        FoldResult {
            person: Some(person),
            train_size: 1,
            test_size: truths.len(),
            accuracy: [acc, acc],
            confusion: [m.clone(), m],
            epochs_run: 1,
        }
    }

    #[test]
    fn lopo_averages_only_over_persons_with_the_class() {
        // person 2 has no class-0 sample
        let folds = [
            fold_with(1, &[0, 1, 2], &[0, 1, 2]),
            fold_with(2, &[1, 2], &[1, 1]),
            fold_with(3, &[0, 1, 2], &[1, 1, 2]),
        ];
        let r = LOPOReport::from_folds(&folds).unwrap();
        assert_eq!(r.class_denominator[0], vec![2, 3, 3]);
        assert_eq!(r.class_average[0][0], Some(0.5));
        assert_eq!(r.class_average[0][2], Some(2.0 / 3.0));
        assert_eq!(r.per_person_class[0][1][0], None);
        assert_eq!(r.persons, vec![1, 2, 3]);
    }

    #[test]
    fn two_fold_time_split_on_four_records() {
        let spec = SynthSpec::standard(1, 3).with_side(16).retain_materials(&["plush", "leather", "wood", "marble"]);
        let c = synth_generate(&spec).unwrap();
        assert_eq!(c.len(), 4);
        let plan = make_split(&c, SplitKind::TimeKFold, Some(2), 1).unwrap();
        let cfg = TrainConfig { epochs: 1, batch: 2, ..TrainConfig::default() };
        let mut seen = Vec::new();
        let r = run_protocol::<f32>(&c, &plan, &Arch::desk().with_side(16), &cfg, &mut |i, _| seen.push(i)).unwrap();
        assert_eq!(seen, vec![0, 1]);
        for f in &r.folds {
            assert_eq!((f.train_size, f.test_size), (2, 2));
        }
        assert_eq!(r.confusion[0].total(), 4);
        assert!(r.lopo.is_none());
        let again = run_protocol::<f32>(&c, &plan, &Arch::desk().with_side(16), &cfg, &mut |_, _| {}).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn hardening_cycles_through_degradations() {
        let spec = SynthSpec::standard(1, 5).with_side(24);
        let c = synth_generate(&spec).unwrap();
        let h = harden(&c, 7).unwrap();
        assert_eq!(h.len(), c.len());
        for (a, b) in c.records().iter().zip(h.records()) {
            assert_eq!((a.object, a.material), (b.object, b.material));
            assert_ne!(a.image, b.image);
        }
        assert_eq!(h, harden(&c, 7).unwrap());
    }

    #[test]
    fn probe_with_a_single_run_reports_that_run() {
        let ticks = core::cell::Cell::new(0.0);
        let clock = || {
            let t = ticks.get();
            ticks.set(t + 0.5);
            t
        };
        let mut f = || Ok(());
        let r = latency_probe_with(&mut [("s", &mut f)], 1, &clock).unwrap();
        assert_eq!(r[0].mean, 0.5);
        assert_eq!(r[0].min, r[0].mean);
        assert_eq!(r[0].max, r[0].mean);
        assert!(latency_probe_with(&mut [("s", &mut f)], 0, &clock).is_err());
    }
}
