//! The eight commands. Each reads a [`RunConfig`], orchestrates one core
//! module and writes every output under `output_dir`.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use microcam_core::corpus::{make_split, synth_generate, Corpus};
use microcam_core::harness::{confusions, latency_probe, run_protocol, two_task_split, ProtocolReport};
use microcam_core::imaging::center_crop_resize;
use microcam_core::imu::{run_trace, EventKind, BUNDLED_TRACE, parse_trace};
use microcam_core::nn::{train, Arch, Head, LrSchedule, ModelParams};
use microcam_core::replay::{cl_run, prime_buffer, ReplayBuffer, Task};
use microcam_core::rng::derive;
use microcam_core::semantics::{parse_pair_list, MappingTable};
use microcam_core::taxonomy::LabelTaxonomy;
use microcam_core::Image;

use crate::config::RunConfig;
use crate::error::{Failure, Result};
use crate::formats::*;
use crate::ingest::ingest_directory;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SimulateTrigger,
    AssessQuality,
    GenCorpus,
    Train,
    Evaluate,
    ClRun,
    Validate,
    Report,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::SimulateTrigger,
        Command::AssessQuality,
        Command::GenCorpus,
        Command::Train,
        Command::Evaluate,
        Command::ClRun,
        Command::Validate,
        Command::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::SimulateTrigger => "simulate-trigger",
            Command::AssessQuality => "assess-quality",
            Command::GenCorpus => "gen-corpus",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::ClRun => "cl-run",
            Command::Validate => "validate",
            Command::Report => "report",
        }
    }
}

/// Files written by a command. Unless [`Outputs::commit`] is called, every
/// file and directory created through it is removed again on drop.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self> {
        let mut out = Self { dir: dir.to_path_buf(), files: Vec::new(), dirs: Vec::new(), committed: false };
        out.create_dirs(dir)?;
        Ok(out)
    }

    fn create_dirs(&mut self, dir: &Path) -> Result<()> {
        let missing: Vec<PathBuf> = dir.ancestors().take_while(|a| !a.as_os_str().is_empty() && !a.exists()).map(Path::to_path_buf).collect();
        for d in missing.into_iter().rev() {
            std::fs::create_dir(&d).map_err(|e| Failure::io(&d, e))?;
            self.dirs.push(d);
        }
        Ok(())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            self.create_dirs(parent)?;
        }
        std::fs::write(&path, bytes).map_err(|e| Failure::io(&path, e))?;
        self.files.push(path.clone());
        Ok(path)
    }

    pub fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.files)
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in self.files.iter().rev() {
            let _ = std::fs::remove_file(f);
        }
        for d in self.dirs.iter().rev() {
            let _ = std::fs::remove_dir(d);
        }
    }
}

/// Runs `cmd`; human-readable progress and timings go to `console`.
pub fn run(cmd: Command, cfg: &RunConfig, console: &mut dyn Write) -> Result<Vec<PathBuf>> {
    let mut out = Outputs::new(&cfg.output_dir()?)?;
    out.write(&format!("{}.config", cmd.name()), cfg.text().as_bytes())?;
    match cmd {
        Command::SimulateTrigger => simulate_trigger(cfg, &mut out, console)?,
        Command::AssessQuality => assess_quality(cfg, &mut out, console)?,
        Command::GenCorpus => gen_corpus(cfg, &mut out, console)?,
        Command::Train => train_model(cfg, &mut out, console)?,
        Command::Evaluate => evaluate(cfg, &mut out, console)?,
        Command::ClRun => cl(cfg, &mut out, console)?,
        Command::Validate => validate(cfg, &mut out, console)?,
        Command::Report => report(cfg, &mut out, console)?,
    }
    Ok(out.commit())
}

fn say(console: &mut dyn Write, msg: std::fmt::Arguments<'_>) {
    // console output is informational only
    let _ = writeln!(console, "{msg}");
}

fn mapping_table(cfg: &RunConfig, tax: &LabelTaxonomy) -> Result<MappingTable> {
    match cfg.path("mapping.pairs_file") {
        Some(p) => Ok(parse_pair_list(tax, &read_text(&p)?)?),
        None => Ok(MappingTable::standard()),
    }
}

fn trace(cfg: &RunConfig) -> Result<Vec<microcam_core::imu::ImuSample>> {
    match cfg.get("trigger.trace") {
        None | Some("bundled") => Ok(parse_trace(BUNDLED_TRACE)?),
        Some(_) => read_trace(&cfg.require_path("trigger.trace")?),
    }
}

/// Loads the configured corpus and, for directory sources, the ingestion
/// report text.
fn load_corpus(cfg: &RunConfig) -> Result<(Corpus, Option<String>)> {
    match cfg.get("corpus.source").unwrap_or("synth") {
        "synth" => Ok((synth_generate(&cfg.synth_spec()?)?, None)),
        "manifest" => Ok((read_corpus(&cfg.require_path("corpus.path")?)?, None)),
        "directory" => {
            let tax = LabelTaxonomy::standard();
            let table = mapping_table(cfg, &tax)?;
            let (c, report) = ingest_directory(&cfg.require_path("corpus.path")?, &tax, &table)?;
            for r in &report.rejected {
                log::warn!("skipped {}: {}", r.path.display(), r.issue);
            }
            Ok((c, Some(report.text())))
        }
        other => Err(Failure::Usage(format!("corpus.source: unknown source `{other}`"))),
    }
}

fn default_side(cfg: &RunConfig) -> Result<usize> {
    match cfg.get("corpus.source").unwrap_or("synth") {
        "synth" => cfg.or("synth.side", 224),
        _ => Ok(224),
    }
}

/// RGB images at the network's input side.
fn fit_to(corpus: &Corpus, side: usize) -> Result<Corpus> {
    if corpus.records().iter().all(|r| r.image.width() == side && r.image.height() == side && r.image.channels() == 3) {
        return Ok(corpus.clone());
    }
    Ok(corpus.map_images(|_, img| center_crop_resize(&img.to_rgb(), side))?)
}

fn prepared_corpus(cfg: &RunConfig, arch: &Arch) -> Result<Corpus> {
    let (c, _) = load_corpus(cfg)?;
    if c.is_empty() {
        return Err(Failure::Data("corpus is empty".into()));
    }
    fit_to(&c, arch.input_side)
}

fn grown(arch: &Arch, tax: &LabelTaxonomy) -> Arch {
    Arch { objects: arch.objects.max(tax.object_count()), materials: arch.materials.max(tax.material_count()), ..arch.clone() }
}

fn simulate_trigger(cfg: &RunConfig, out: &mut Outputs, console: &mut dyn Write) -> Result<()> {
    let trigger = cfg.trigger()?;
    let samples = trace(cfg)?;
    let events = run_trace(&samples, &trigger)?;
    out.write("events.log", events_text(&events).as_bytes())?;
    let captures = events.iter().filter(|e| e.kind == EventKind::Capture).count();
    say(console, format_args!("{} samples, {} events, {captures} captures", samples.len(), events.len()));
    Ok(())
}

fn assess_quality(cfg: &RunConfig, out: &mut Outputs, console: &mut dyn Write) -> Result<()> {
    let gate = cfg.quality_gate()?;
    let inputs = cfg.require_path("quality.inputs")?;
    let mut files = Vec::new();
    if inputs.is_dir() {
        for entry in walkdir::WalkDir::new(&inputs).sort_by_file_name() {
            let entry = entry.map_err(|e| Failure::Data(format!("walking {}: {e}", inputs.display())))?;
            let is_img = matches!(entry.path().extension().and_then(|e| e.to_str()), Some("ppm" | "pgm" | "pnm"));
            if entry.file_type().is_file() && is_img {
                files.push(entry.into_path());
            }
        }
    } else {
        files.push(inputs.clone());
    }
    let mut rows = Vec::with_capacity(files.len());
    let mut rejected = 0;
    for f in &files {
        let score = gate.assess(&read_image(f)?)?;
        rejected += usize::from(!score.pass);
        let name = f.strip_prefix(&inputs).ok().filter(|p| !p.as_os_str().is_empty()).unwrap_or(f.as_path());
        rows.push(vec![name.display().to_string(), format!("{:.9e}", score.log_variance), score.pass.to_string()]);
    }
    out.write("quality.csv", &table_csv(&["path", "log_variance", "sharp"], &rows)?)?;
    say(console, format_args!("{} images scored, {rejected} below the blur threshold {}", files.len(), gate.blur_threshold));
    Ok(())
}

fn gen_corpus(cfg: &RunConfig, out: &mut Outputs, console: &mut dyn Write) -> Result<()> {
    let (corpus, ingest_report) = load_corpus(cfg)?;
    let mut paths = Vec::with_capacity(corpus.len());
    for (i, r) in corpus.records().iter().enumerate() {
        let rel = record_path(&corpus, i);
        out.write(&format!("corpus/{rel}"), &encode_netpbm(&r.image)?)?;
        paths.push(rel);
    }
    out.write("corpus/manifest.txt", manifest_text(&corpus, &paths).as_bytes())?;
    if let Some(text) = ingest_report {
        out.write("corpus/ingest_report.txt", text.as_bytes())?;
    }
    say(console, format_args!("wrote {} images to {}", corpus.len(), out.dir().join("corpus").display()));
    Ok(())
}

fn starting_model(cfg: &RunConfig, arch: &Arch, seed: u64) -> Result<ModelParams<f32>> {
    match cfg.path("model.checkpoint") {
        Some(p) => {
            let mut m = read_checkpoint(&p)?;
            m.grow_heads(arch.objects, arch.materials, derive(seed, 0x4EAD))?;
            Ok(m)
        }
        None => Ok(ModelParams::init_for_training(arch.clone(), seed)?),
    }
}

fn train_model(cfg: &RunConfig, out: &mut Outputs, console: &mut dyn Write) -> Result<()> {
    let tc = cfg.train()?;
    let arch = cfg.arch(default_side(cfg)?)?;
    let corpus = prepared_corpus(cfg, &arch)?;
    let arch = grown(&arch, corpus.taxonomy());
    let p0 = starting_model(cfg, &arch, tc.seed)?;
    if p0.arch().input_side != arch.input_side {
        return Err(Failure::Usage(format!("checkpoint input side {} differs from model.side {}", p0.arch().input_side, arch.input_side)));
    }
    let (p, report) = train(&p0, &corpus.all_examples(), &tc, LrSchedule::Constant)?;
    let rows: Vec<Vec<String>> = report
        .epochs
        .iter()
        .enumerate()
        .map(|(i, e)| {
            vec![
                (i + 1).to_string(),
                format!("{:e}", e.lr),
                format!("{:.6}", e.mean_loss),
                format!("{:.6}", e.acc_object),
                format!("{:.6}", e.acc_material),
            ]
        })
        .collect();
    out.write("train_log.csv", &table_csv(&["epoch", "lr", "mean_loss", "acc_object", "acc_material"], &rows)?)?;
    out.write("model.ckpt", &write_checkpoint_bytes(&p))?;
    if let Some(last) = report.epochs.last() {
        say(console, format_args!("{} epochs, training accuracy object {:.4} material {:.4}", report.epochs.len(), last.acc_object, last.acc_material));
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

fn evaluate(cfg: &RunConfig, out: &mut Outputs, console: &mut dyn Write) -> Result<()> {
    let arch = cfg.arch(default_side(cfg)?)?;
    let corpus = prepared_corpus(cfg, &arch)?;
    let tax = corpus.taxonomy().clone();
    let names = [tax.objects().to_vec(), tax.materials().to_vec()];

    if let Some(ckpt) = cfg.path("model.checkpoint") {
        // score a trained model on the whole corpus
        let p = read_checkpoint(&ckpt)?;
        let data = fit_to(&corpus, p.arch().input_side)?;
        let [co, cm] = confusions(&p, &data.all_examples())?;
        let rows = vec![vec![
            data.len().to_string(),
            format!("{:.6}", co.accuracy().unwrap_or(0.0)),
            format!("{:.6}", cm.accuracy().unwrap_or(0.0)),
        ]];
        out.write("summary.csv", &table_csv(&["images", "top1_object", "top1_material"], &rows)?)?;
        write_confusions(out, &[co, cm], &names)?;
        say(console, format_args!("top-1 object {} material {}", rows[0][1], rows[0][2]));
        return Ok(());
    }

    let tc = cfg.train()?;
    let (kind, k, split_seed) = cfg.split()?;
    let plan = make_split(&corpus, kind, k, split_seed)?;
    let mut progress = |i: usize, f: &microcam_core::harness::FoldResult| {
        say(console, format_args!("fold {}: object {:.4} material {:.4} ({} epochs)", i + 1, f.accuracy[0], f.accuracy[1], f.epochs_run));
    };
    let rep = run_protocol::<f32>(&corpus, &plan, &arch, &tc, &mut progress)?;
    write_protocol(out, &rep, &names)?;
    say(
        console,
        format_args!(
            "{}: object {:.4} ± {:.4}, material {:.4} ± {:.4} (pooled {:.4} / {:.4})",
            kind.as_str(),
            rep.mean[0],
            rep.sd[0],
            rep.mean[1],
            rep.sd[1],
            rep.pooled[0],
            rep.pooled[1]
        ),
    );
    Ok(())
}

fn write_confusions(out: &mut Outputs, m: &[microcam_core::harness::ConfusionMatrix; 2], names: &[Vec<String>; 2]) -> Result<()> {
    for (h, head) in ["object", "material"].iter().enumerate() {
        out.write(&format!("confusion_{head}.csv"), &matrix_csv(&m[h], &names[h], false)?)?;
        out.write(&format!("confusion_{head}_normalized.csv"), &matrix_csv(&m[h], &names[h], true)?)?;
    }
    Ok(())
}

fn write_protocol(out: &mut Outputs, rep: &ProtocolReport, names: &[Vec<String>; 2]) -> Result<()> {
    let folds: Vec<Vec<String>> = rep
        .folds
        .iter()
        .enumerate()
        .map(|(i, f)| {
            vec![
                (i + 1).to_string(),
                f.person.map_or_else(|| "NA".into(), |p| p.to_string()),
                f.train_size.to_string(),
                f.test_size.to_string(),
                format!("{:.6}", f.accuracy[0]),
                format!("{:.6}", f.accuracy[1]),
                f.epochs_run.to_string(),
            ]
        })
        .collect();
    out.write(
        "folds.csv",
        &table_csv(&["fold", "person", "train_size", "test_size", "top1_object", "top1_material", "epochs"], &folds)?,
    )?;
    let summary: Vec<Vec<String>> = ["object", "material"]
        .iter()
        .enumerate()
        .map(|(h, head)| {
            vec![
                rep.kind.as_str().to_string(),
                head.to_string(),
                format!("{:.6}", rep.mean[h]),
                format!("{:.6}", rep.sd[h]),
                format!("{:.6}", rep.pooled[h]),
            ]
        })
        .collect();
    out.write("summary.csv", &table_csv(&["protocol", "head", "mean", "sd", "pooled"], &summary)?)?;
    write_confusions(out, &rep.confusion, names)?;
    if let Some(l) = &rep.lopo {
        for (h, head) in ["object", "material"].iter().enumerate() {
            let mut header = vec!["person".to_string()];
            header.extend(names[h].iter().cloned());
            let mut rows: Vec<Vec<String>> = l
                .persons
                .iter()
                .zip(&l.per_person_class[h])
                .map(|(p, accs)| {
                    let mut row = vec![p.to_string()];
                    row.extend(accs.iter().map(|a| fmt_opt(*a)));
                    row
                })
                .collect();
            let mut avg = vec!["average".to_string()];
            avg.extend(l.class_average[h].iter().map(|a| fmt_opt(*a)));
            rows.push(avg);
            let mut den = vec!["persons".to_string()];
            den.extend(l.class_denominator[h].iter().map(usize::to_string));
            rows.push(den);
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            out.write(&format!("lopo_{head}.csv"), &table_csv(&header, &rows)?)?;
        }
    }
    Ok(())
}

fn cl(cfg: &RunConfig, out: &mut Outputs, console: &mut dyn Write) -> Result<()> {
    let tc = cfg.train()?;
    let (cl_cfg, capacity) = cfg.cl()?;
    let arch = cfg.arch(default_side(cfg)?)?;
    let side = arch.input_side;

    // (id, train, test) per task
    let mut tasks: Vec<(usize, Corpus, Corpus)> = Vec::new();
    match cfg.get("cl.stream").unwrap_or("synth") {
        "synth" => {
            let corpus = fit_to(&synth_generate(&cfg.synth_spec()?)?, side)?;
            let (_, _, split_seed) = cfg.split()?;
            let s = two_task_split(&corpus, 5, 5, split_seed)?;
            tasks.push((0, s.a_train, s.a_test));
            tasks.push((1, s.b_train, s.b_test));
        }
        _ => {
            let path = cfg.require_path("cl.stream")?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            for (id, train_path, test_path) in parse_task_stream(&read_text(&path)?, &base)? {
                let train = fit_to(&read_corpus(&train_path)?, side)?;
                let test = match test_path {
                    Some(p) => fit_to(&read_corpus(&p)?, side)?,
                    None => Corpus::empty(train.taxonomy().clone(), train.table().clone()),
                };
                tasks.push((id, train, test));
            }
        }
    }
    let Some(first) = tasks.first() else {
        return Err(Failure::Data("task stream is empty".into()));
    };
    let arch = grown(&arch, first.1.taxonomy());
    let p0 = starting_model(cfg, &arch, tc.seed)?;
    let mut buf = ReplayBuffer::new(capacity, cl_cfg.sampling_mode());
    if let Some(prime) = cfg.path("cl.prime") {
        let prime = fit_to(&read_corpus(&prime)?, side)?;
        let prime_id = tasks[0].0.checked_sub(1).ok_or_else(|| {
            Failure::Usage("cl.prime needs the first streamed task id to be >= 1".into())
        })?;
        prime_buffer(&mut buf, &p0, &prime, prime_id, derive(tc.seed, 0xB0F))?;
    }
    let task_refs: Vec<Task<'_>> = tasks.iter().map(|(id, train, test)| Task { id: *id, train, test }).collect();
    let (p, rep) = cl_run(&p0, &task_refs, &cl_cfg, &tc, &mut buf)?;
    out.write("cl_metrics.csv", &metrics_csv(&rep.rows)?)?;
    let mut counts = String::new();
    let _ = writeln!(counts, "object,material,count");
    for ((o, m), n) in buf.class_counts() {
        let _ = writeln!(counts, "{o},{m},{n}");
    }
    out.write("buffer_classes.csv", counts.as_bytes())?;
    out.write("model.ckpt", &write_checkpoint_bytes(&p))?;
    for r in &rep.rows {
        say(console, format_args!("after task {} on task {}: object {:.4} material {:.4}", r.task_id, r.eval_task_id, r.top1_object, r.top1_material));
    }
    for id in &rep.skipped {
        say(console, format_args!("task {id} was empty and skipped"));
    }
    for head in [Head::Object, Head::Material] {
        if let Some(c) = p.correction(head) {
            say(console, format_args!("{head:?} bias correction: scale {:.4} offset {:.4}", c.scale, c.offset));
        }
    }
    Ok(())
}

fn validate(cfg: &RunConfig, out: &mut Outputs, console: &mut dyn Write) -> Result<()> {
    let tax = LabelTaxonomy::standard();
    let table = mapping_table(cfg, &tax)?;
    let pairs = cfg.pairs()?;
    if pairs.is_empty() {
        return Err(Failure::Usage("validate.pairs lists no pairs".into()));
    }
    let mut rows = Vec::with_capacity(pairs.len());
    let mut invalid = Vec::new();
    for (o, m) in &pairs {
        let oc = tax.object_by_name(o).ok_or_else(|| Failure::Usage(format!("unknown object `{o}`")))?;
        let mc = tax.material_by_name(m).ok_or_else(|| Failure::Usage(format!("unknown material `{m}`")))?;
        let ok = table.validate_pair(oc, mc)?;
        say(console, format_args!("{o} {m}: {}", if ok { "valid" } else { "invalid" }));
        if !ok {
            invalid.push(format!("{o}:{m}"));
        }
        rows.push(vec![o.clone(), m.clone(), ok.to_string()]);
    }
    out.write("validation.csv", &table_csv(&["object", "material", "valid"], &rows)?)?;
    if invalid.is_empty() {
        Ok(())
    } else {
        Err(Failure::Rejected(format!("not in the mapping table: {}", invalid.join(", "))))
    }
}

fn report(cfg: &RunConfig, out: &mut Outputs, console: &mut dyn Write) -> Result<()> {
    let mut text = String::from("# microcam report\n");
    if let Some(inputs) = cfg.path("report.inputs") {
        let mut csvs = Vec::new();
        for entry in walkdir::WalkDir::new(&inputs).sort_by_file_name() {
            let entry = entry.map_err(|e| Failure::Data(format!("walking {}: {e}", inputs.display())))?;
            let p = entry.path();
            if entry.file_type().is_file() && p.extension().is_some_and(|e| e == "csv") && !p.starts_with(out.dir()) {
                csvs.push(entry.into_path());
            }
        }
        for p in csvs {
            let (header, rows) = read_csv(&p)?;
            let rel = p.strip_prefix(&inputs).unwrap_or(&p);
            let _ = write!(text, "\n## {}\n\n| {} |\n|{}\n", rel.display(), header.join(" | "), "---|".repeat(header.len()));
            for r in rows {
                let _ = writeln!(text, "| {} |", r.join(" | "));
            }
        }
    }
    out.write("report.md", text.as_bytes())?;

    let runs: usize = cfg.or("report.latency_runs", 0)?;
    if runs > 0 {
        // wall-clock numbers are printed only, so report files stay reproducible
        let arch = cfg.arch(224)?;
        let params = match cfg.path("model.checkpoint") {
            Some(p) => read_checkpoint(&p)?,
            None => ModelParams::init(arch.clone(), cfg.seed()?)?,
        };
        let side = params.arch().input_side;
        let image = synth_generate(&microcam_core::corpus::SynthSpec::standard(1, cfg.seed()?).with_side(side))?
            .records()
            .first()
            .map(|r| (*r.image).clone())
            .unwrap_or_else(|| Image::filled(side, side, 3, 0.5));
        let timings = latency_probe(&params, &image, &trace(cfg)?, &cfg.trigger()?, &cfg.quality_gate()?, runs)?;
        for t in timings {
            say(console, format_args!("latency {}: mean {:.3} ms, min {:.3} ms, max {:.3} ms over {} runs", t.stage, t.mean * 1e3, t.min * 1e3, t.max * 1e3, t.runs));
        }
    }
    Ok(())
}
