//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment; unknown keys are an error.
//! Every seed is explicit: module seeds default to values derived from the
//! top-level `seed`, never from the clock.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use microcam_core::corpus::{SplitKind, SynthSpec};
use microcam_core::imaging::{AugmentPolicy, QualityGate};
use microcam_core::imu::TriggerConfig;
use microcam_core::nn::{Arch, TrainConfig};
use microcam_core::replay::{CLConfig, Tricks, DEFAULT_CAPACITY};
use microcam_core::rng::derive;

use crate::error::{Failure, Result};

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("output_dir", "directory receiving every output of the command"),
    ("seed", "master seed; module seeds derive from it unless set"),
    ("corpus.source", "synth | manifest | directory"),
    ("corpus.path", "manifest file or image root for non-synthetic corpora"),
    ("synth.images_per_class", "images generated per material"),
    ("synth.side", "generated image side in pixels"),
    ("synth.persons", "number of synthetic persons"),
    ("synth.seed", "generator seed"),
    ("synth.materials", "comma-separated materials to generate (default: all 9)"),
    ("synth.absent", "comma-separated person:material cells left empty"),
    ("synth.novel_images_per_class", "also generate skin and paper surfaces"),
    ("model.side", "network input side; images are center-cropped and resized"),
    ("model.checkpoint", "checkpoint to evaluate or continue from"),
    ("train.lr0", "Adam learning rate"),
    ("train.batch", "mini-batch size"),
    ("train.epochs", "training epochs"),
    ("train.seed", "initialization, shuffling and augmentation seed"),
    ("train.augment", "true | false"),
    ("train.stop_at_accuracy", "stop once training accuracy of both heads reaches this"),
    ("split.kind", "time_kfold | lopo"),
    ("split.k", "number of time folds"),
    ("split.seed", "tie-break seed for equal timestamps"),
    ("trigger.trace", "IMU trace file, or `bundled`"),
    ("trigger.la_thresh", "three linear-acceleration thresholds, m/s^2"),
    ("trigger.aa_thresh", "three angular-rate thresholds, deg/s"),
    ("trigger.tt", "stationary seconds before backgrounding"),
    ("trigger.debounce_n", "sub-threshold samples needed to count as stationary"),
    ("quality.inputs", "image file or directory to score"),
    ("quality.sigma", "Gaussian sigma of the LoG filter"),
    ("quality.blur_threshold", "minimum LoG variance of a sharp image"),
    ("cl.stream", "task-stream manifest, or `synth` for the two-task split"),
    ("cl.prime", "corpus manifest that primes the buffer (with a pretrained model)"),
    ("cl.tricks", "all | none | comma list of trick names"),
    ("cl.gamma", "per-task learning-rate decay"),
    ("cl.replay_batch", "replayed examples per batch"),
    ("cl.bias_fit_fraction", "share held out for the bias correction"),
    ("cl.capacity", "replay buffer capacity"),
    ("mapping.pairs_file", "pair list replacing the built-in mapping table"),
    ("validate.pairs", "comma-separated object:material pairs to check"),
    ("report.inputs", "directory of earlier command outputs to summarize"),
    ("report.latency_runs", "runs of the latency probe (printed, not stored)"),
];

pub const TRICK_NAMES: [&str; 5] = [
    "independent_buffer_augmentation",
    "bias_control",
    "exp_lr_decay",
    "balanced_sampling",
    "loss_aware_sampling",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    text: String,
    /// Directory of the config file; relative paths resolve against it.
    base: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Failure::Usage(format!("config line {}: expected `key = value`", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.iter().any(|(name, _)| *name == k) {
                return Err(Failure::Usage(format!("config line {}: unknown key `{k}`", n + 1)));
            }
            if values.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Failure::Usage(format!("config line {}: duplicate key `{k}`", n + 1)));
            }
        }
        Ok(Self { values, text: text.to_string(), base: base.to_path_buf() })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    /// The config exactly as read.
    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|v| self.base.join(v))
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key).ok_or_else(|| Failure::Usage(format!("missing key `{key}`")))
    }

    pub fn output_dir(&self) -> Result<PathBuf> {
        self.require_path("output_dir")
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|_| Failure::Usage(format!("key `{key}`: cannot parse `{v}`"))))
            .transpose()
    }

    pub fn or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    fn list(&self, key: &str) -> Vec<String> {
        self.get(key)
            .map(|v| v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
            .unwrap_or_default()
    }

    fn triple(&self, key: &str, default: [f64; 3]) -> Result<[f64; 3]> {
        let Some(v) = self.get(key) else { return Ok(default) };
        let parts: Vec<f64> = v
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Failure::Usage(format!("key `{key}`: expected three comma-separated numbers")))?;
        <[f64; 3]>::try_from(parts).map_err(|_| Failure::Usage(format!("key `{key}`: expected three values")))
    }

    pub fn seed(&self) -> Result<u64> {
        self.or("seed", 0)
    }

    fn sub_seed(&self, key: &str, tag: u64) -> Result<u64> {
        let master = self.seed()?;
        self.or(key, derive(master, tag))
    }

    pub fn trigger(&self) -> Result<TriggerConfig> {
        let d = TriggerConfig::default();
        let cfg = TriggerConfig {
            la_thresh: self.triple("trigger.la_thresh", d.la_thresh)?,
            aa_thresh: self.triple("trigger.aa_thresh", d.aa_thresh)?,
            tt: self.or("trigger.tt", d.tt)?,
            debounce_n: self.or("trigger.debounce_n", d.debounce_n)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn quality_gate(&self) -> Result<QualityGate> {
        let d = QualityGate::default();
        Ok(QualityGate { sigma: self.or("quality.sigma", d.sigma)?, blur_threshold: self.or("quality.blur_threshold", d.blur_threshold)? })
    }

    pub fn synth_spec(&self) -> Result<SynthSpec> {
        let ipc = self.or("synth.images_per_class", 200usize)?;
        let seed = self.sub_seed("synth.seed", 1)?;
        let mut spec = SynthSpec::standard(ipc, seed).with_side(self.or("synth.side", 224usize)?);
        spec.persons = self.or("synth.persons", spec.persons)?;
        let materials = self.list("synth.materials");
        if !materials.is_empty() {
            let refs: Vec<&str> = materials.iter().map(String::as_str).collect();
            for m in &refs {
                if !spec.materials.iter().any(|s| s.name == *m) {
                    return Err(Failure::Usage(format!("synth.materials: unknown material `{m}`")));
                }
            }
            spec = spec.retain_materials(&refs);
        }
        let mut absent = Vec::new();
        for cell in self.list("synth.absent") {
            let (p, m) = cell
                .split_once(':')
                .ok_or_else(|| Failure::Usage(format!("synth.absent: `{cell}` is not person:material")))?;
            let p: u16 = p.parse().map_err(|_| Failure::Usage(format!("synth.absent: bad person `{p}`")))?;
            absent.push((p, m.to_string()));
        }
        spec = spec.with_absent(absent);
        let novel = self.or("synth.novel_images_per_class", 0usize)?;
        if novel > 0 {
            let extra = SynthSpec::novel(novel, seed);
            spec.materials.extend(extra.materials);
        }
        Ok(spec)
    }

    pub fn split(&self) -> Result<(SplitKind, Option<usize>, u64)> {
        let kind = match self.get("split.kind") {
            None => SplitKind::TimeKFold,
            Some(s) => SplitKind::parse(s).ok_or_else(|| Failure::Usage(format!("split.kind: unknown kind `{s}`")))?,
        };
        let k = match kind {
            SplitKind::TimeKFold => Some(self.or("split.k", 10usize)?),
            SplitKind::LeaveOnePersonOut => None,
        };
        Ok((kind, k, self.sub_seed("split.seed", 2)?))
    }

    pub fn arch(&self, default_side: usize) -> Result<Arch> {
        Ok(Arch::desk().with_side(self.or("model.side", default_side)?))
    }

    pub fn train(&self) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let augment = if self.or("train.augment", true)? { AugmentPolicy::default() } else { AugmentPolicy::IDENTITY };
        let cfg = TrainConfig {
            lr0: self.or("train.lr0", d.lr0)?,
            batch: self.or("train.batch", d.batch)?,
            epochs: self.or("train.epochs", d.epochs)?,
            seed: self.sub_seed("train.seed", 3)?,
            augment,
            stop_at_train_accuracy: self.parsed("train.stop_at_accuracy")?,
            ..d
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn cl(&self) -> Result<(CLConfig, usize)> {
        let d = CLConfig::default();
        let tricks = match self.get("cl.tricks").map(str::trim) {
            None | Some("all") => Tricks::ALL,
            Some("none") => Tricks::NONE,
            Some(_) => {
                let mut t = Tricks::NONE;
                for name in self.list("cl.tricks") {
                    match name.as_str() {
                        "independent_buffer_augmentation" => t.independent_buffer_augmentation = true,
                        "bias_control" => t.bias_control = true,
                        "exp_lr_decay" => t.exp_lr_decay = true,
                        "balanced_sampling" => t.balanced_sampling = true,
                        "loss_aware_sampling" => t.loss_aware_sampling = true,
                        other => {
                            return Err(Failure::Usage(format!(
                                "cl.tricks: unknown trick `{other}` (known: {})",
                                TRICK_NAMES.join(", ")
                            )))
                        }
                    }
                }
                t
            }
        };
        let cfg = CLConfig {
            tricks,
            gamma: self.or("cl.gamma", d.gamma)?,
            replay_batch: self.or("cl.replay_batch", d.replay_batch)?,
            bias_fit_fraction: self.or("cl.bias_fit_fraction", d.bias_fit_fraction)?,
        };
        cfg.validate()?;
        Ok((cfg, self.or("cl.capacity", DEFAULT_CAPACITY)?))
    }

    /// `object:material` pairs listed under `validate.pairs`.
    pub fn pairs(&self) -> Result<Vec<(String, String)>> {
        self.list("validate.pairs")
            .into_iter()
            .map(|p| {
                p.split_once(':')
                    .map(|(o, m)| (o.to_string(), m.to_string()))
                    .ok_or_else(|| Failure::Usage(format!("validate.pairs: `{p}` is not object:material")))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> Result<RunConfig> {
        RunConfig::parse(text, Path::new("/base"))
    }

    #[test]
    fn unknown_and_duplicate_keys_are_rejected() {
        let e = cfg("output_dir = out\nfoo = 1\n").unwrap_err();
        assert!(e.to_string().contains("foo"), "{e}");
        assert_eq!(e.exit_code(), 2);
        assert!(cfg("seed = 1\nseed = 2").is_err());
        assert!(cfg("seed 1").is_err());
    }

    #[test]
    fn values_comments_and_paths() {
        let c = cfg("# run\noutput_dir = out # trailing\nseed = 9\ntrain.epochs = 3\n").unwrap();
        assert_eq!(c.output_dir().unwrap(), PathBuf::from("/base/out"));
        assert_eq!(c.seed().unwrap(), 9);
        let t = c.train().unwrap();
        assert_eq!(t.epochs, 3);
        assert_eq!(t.seed, derive(9, 3));
        assert!(cfg("train.epochs = x").unwrap().train().is_err());
    }

    #[test]
    fn tricks_and_triples() {
        let c = cfg("cl.tricks = bias_control, exp_lr_decay\ntrigger.la_thresh = 0.1,0.2,0.3").unwrap();
        let (cl, cap) = c.cl().unwrap();
        assert!(cl.tricks.bias_control && cl.tricks.exp_lr_decay && !cl.tricks.balanced_sampling);
        assert_eq!(cap, 500);
        assert_eq!(c.trigger().unwrap().la_thresh, [0.1, 0.2, 0.3]);
        assert!(cfg("cl.tricks = magic").unwrap().cl().is_err());
        assert!(cfg("trigger.la_thresh = 1,2").unwrap().trigger().is_err());
    }

    #[test]
    fn synth_options() {
        let c = cfg("synth.images_per_class = 4\nsynth.materials = plush, wood\nsynth.absent = 2:wood\nsynth.novel_images_per_class = 1").unwrap();
        let s = c.synth_spec().unwrap();
        let names: Vec<&str> = s.materials.iter().map(|m| m.name.as_str()).collect();
        assert_eq!(names, ["plush", "wood", "skin", "paper"]);
        assert_eq!(s.absent, vec![(2, "wood".to_string())]);
        assert!(cfg("synth.materials = velvet").unwrap().synth_spec().is_err());
    }
}
