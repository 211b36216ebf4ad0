//! File formats: netpbm images, IMU traces and event logs, corpus manifests,
//! checkpoints, task-stream manifests and CSV reports.

use std::fmt::Write as _;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat};
use microcam_core::corpus::{Corpus, SampleRecord};
use microcam_core::harness::ConfusionMatrix;
use microcam_core::imu::{format_events, format_trace, parse_trace, ImuSample, TriggerEvent};
use microcam_core::nn::{decode_checkpoint, encode_checkpoint, ModelParams};
use microcam_core::replay::TaskMetrics;
use microcam_core::semantics::MappingTable;
use microcam_core::taxonomy::{LabelTaxonomy, MaterialClass, ObjectClass};
use microcam_core::Image;

use crate::error::{Failure, Result};

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Failure::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

/// Binary P5 (one channel) or P6 (three channels), 8 bits per sample.
pub fn encode_netpbm(img: &Image) -> Result<Vec<u8>> {
    let (subtype, color) = match img.channels() {
        1 => (PnmSubtype::Graymap(SampleEncoding::Binary), ExtendedColorType::L8),
        3 => (PnmSubtype::Pixmap(SampleEncoding::Binary), ExtendedColorType::Rgb8),
        c => return Err(Failure::Data(format!("cannot store a {c}-channel image as netpbm"))),
    };
    let bytes: Vec<u8> = img.pixels().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(subtype)
        .write_image(&bytes, img.width() as u32, img.height() as u32, color)
        .map_err(|e| Failure::Data(format!("netpbm encode: {e}")))?;
    Ok(out)
}

pub fn decode_netpbm(bytes: &[u8]) -> Result<Image> {
    let dynimg = image::load(Cursor::new(bytes), ImageFormat::Pnm).map_err(|e| Failure::Data(format!("netpbm: {e}")))?;
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    let img = match dynimg {
        DynamicImage::ImageLuma8(g) => Image::new(w, h, 1, g.into_raw().iter().map(|&v| v as f32 / 255.0).collect()),
        DynamicImage::ImageLuma16(g) => Image::new(w, h, 1, g.into_raw().iter().map(|&v| v as f32 / 65535.0).collect()),
        DynamicImage::ImageRgb16(c) => Image::new(w, h, 3, c.into_raw().iter().map(|&v| v as f32 / 65535.0).collect()),
        other => Image::new(w, h, 3, other.to_rgb8().into_raw().iter().map(|&v| v as f32 / 255.0).collect()),
    };
    Ok(img?)
}

pub fn read_image(path: &Path) -> Result<Image> {
    decode_netpbm(&read_bytes(path)?).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

pub fn image_extension(img: &Image) -> &'static str {
    if img.channels() == 1 {
        "pgm"
    } else {
        "ppm"
    }
}

pub fn read_trace(path: &Path) -> Result<Vec<ImuSample>> {
    Ok(parse_trace(&read_text(path)?)?)
}

pub fn trace_text(samples: &[ImuSample]) -> String {
    format_trace(samples)
}

pub fn events_text(events: &[TriggerEvent]) -> String {
    format_events(events)
}

const MANIFEST_HEADER: &str = "# microcam corpus manifest v1";

/// Manifest text for `corpus` whose images live at `paths` (relative to
/// the manifest's directory).
pub fn manifest_text(corpus: &Corpus, paths: &[String]) -> String {
    let tax = corpus.taxonomy();
    let mut s = String::new();
    let _ = writeln!(s, "{MANIFEST_HEADER}");
    let _ = writeln!(s, "# objects {}", tax.objects().join(" "));
    let _ = writeln!(s, "# materials {}", tax.materials().join(" "));
    let pairs: Vec<String> = corpus
        .table()
        .pairs()
        .into_iter()
        .map(|(o, m)| format!("{}:{}", tax.objects()[o.index()], tax.materials()[m.index()]))
        .collect();
    let _ = writeln!(s, "# pairs {}", pairs.join(" "));
    let _ = writeln!(s, "# person object material path timestamp");
    for (r, p) in corpus.records().iter().zip(paths) {
        let _ = writeln!(
            s,
            "{} {} {} {} {}",
            r.person,
            tax.objects()[r.object.index()],
            tax.materials()[r.material.index()],
            p,
            r.t
        );
    }
    s
}

/// Image path of record `i` inside a corpus directory.
pub fn record_path(corpus: &Corpus, i: usize) -> String {
    let r = &corpus.records()[i];
    let tax = corpus.taxonomy();
    format!(
        "person{}/{}/{}/{:06}.{}",
        r.person,
        tax.objects()[r.object.index()],
        tax.materials()[r.material.index()],
        i,
        image_extension(&r.image)
    )
}

/// Parsed manifest lines before the images are loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub taxonomy: LabelTaxonomy,
    pub table: MappingTable,
    /// `(person, object, material, path, t)`
    pub entries: Vec<(u16, ObjectClass, MaterialClass, String, f64)>,
}

pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let mut taxonomy = LabelTaxonomy::standard();
    let mut pair_names: Option<Vec<(String, String)>> = None;
    let mut entries = Vec::new();
    let bad = |n: usize, msg: &str| Failure::Data(format!("manifest line {}: {msg}", n + 1));
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let mut words = rest.split_whitespace();
            match words.next() {
                Some("objects") => {
                    let names: Vec<&str> = words.collect();
                    for s in new_names(&names, taxonomy.objects()).map_err(|m| bad(n, &m))? {
                        taxonomy.intern_object(s);
                    }
                }
                Some("materials") => {
                    let names: Vec<&str> = words.collect();
                    for s in new_names(&names, taxonomy.materials()).map_err(|m| bad(n, &m))? {
                        taxonomy.intern_material(s);
                    }
                }
                Some("pairs") => {
                    let mut v = Vec::new();
                    for w in words {
                        let (o, m) = w.split_once(':').ok_or_else(|| bad(n, "pairs are written object:material"))?;
                        v.push((o.to_string(), m.to_string()));
                    }
                    pair_names = Some(v);
                }
                _ => {}
            }
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let [person, object, material, path, t] = f.as_slice() else {
            return Err(bad(n, "expected `person object material path timestamp`"));
        };
        let person: u16 = person.parse().ok().filter(|&p| p >= 1).ok_or_else(|| bad(n, "person must be an integer >= 1"))?;
        let o = taxonomy.object_by_name(object).ok_or_else(|| bad(n, &format!("unknown object `{object}`")))?;
        let m = taxonomy.material_by_name(material).ok_or_else(|| bad(n, &format!("unknown material `{material}`")))?;
        let t: f64 = t.parse().map_err(|_| bad(n, "bad timestamp"))?;
        entries.push((person, o, m, path.to_string(), t));
    }
    let table = match pair_names {
        Some(v) => MappingTable::from_named_pairs(&taxonomy, v.iter().map(|(o, m)| (o.as_str(), m.as_str())))?,
        None => MappingTable::standard(),
    };
    Ok(Manifest { taxonomy, table, entries })
}

/// Names listed beyond the current ones; the shared prefix must agree.
fn new_names<'a>(listed: &[&'a str], current: &[String]) -> std::result::Result<Vec<&'a str>, String> {
    for (i, (name, c)) in listed.iter().zip(current).enumerate() {
        if c != name {
            return Err(format!("class {} is `{name}`, expected `{c}`", i + 1));
        }
    }
    Ok(listed.iter().skip(current.len()).copied().collect())
}

/// Loads a manifest and every image it lists.
pub fn read_corpus(manifest: &Path) -> Result<Corpus> {
    let m = parse_manifest(&read_text(manifest)?)?;
    let dir = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut records = Vec::with_capacity(m.entries.len());
    for (person, object, material, path, t) in m.entries {
        let image = Arc::new(read_image(&dir.join(&path))?);
        records.push(SampleRecord { person, object, material, image, t });
    }
    Ok(Corpus::new(m.taxonomy, m.table, records)?)
}

pub fn write_checkpoint_bytes(params: &ModelParams<f32>) -> Vec<u8> {
    encode_checkpoint(params)
}

pub fn read_checkpoint(path: &Path) -> Result<ModelParams<f32>> {
    decode_checkpoint(&read_bytes(path)?).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

/// Task-stream manifest: `task_id train_manifest [test_manifest]` per line,
/// paths relative to the stream file.
pub fn parse_task_stream(text: &str, base: &Path) -> Result<Vec<(usize, PathBuf, Option<PathBuf>)>> {
    let mut out: Vec<(usize, PathBuf, Option<PathBuf>)> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let (id, train, test) = match f.as_slice() {
            [id, train] => (id, train, None),
            [id, train, test] => (id, train, Some(base.join(test))),
            _ => return Err(Failure::Data(format!("task stream line {}: expected `task_id train [test]`", n + 1))),
        };
        let id: usize = id.parse().map_err(|_| Failure::Data(format!("task stream line {}: bad task id", n + 1)))?;
        if out.last().is_some_and(|l| l.0 >= id) {
            return Err(Failure::Data(format!("task stream line {}: task ids must increase", n + 1)));
        }
        out.push((id, base.join(train), test));
    }
    Ok(out)
}

pub fn metrics_csv(rows: &[TaskMetrics]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["task_id", "eval_task_id", "top1_object", "top1_material"])?;
    for r in rows {
        w.write_record([
            r.task_id.to_string(),
            r.eval_task_id.to_string(),
            format!("{:.6}", r.top1_object),
            format!("{:.6}", r.top1_material),
        ])?;
    }
    finish(w)
}

/// A matrix as CSV with class names on both axes; rows are predictions,
/// columns ground truth.
pub fn matrix_csv(m: &ConfusionMatrix, names: &[String], normalized: bool) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let c = m.classes();
    let label = |i: usize| names.get(i).cloned().unwrap_or_else(|| format!("class{}", i + 1));
    let mut header = vec!["predicted\\true".to_string()];
    header.extend((0..c).map(label));
    w.write_record(&header)?;
    let norm = m.normalized();
    for p in 0..c {
        let mut row = vec![label(p)];
        for t in 0..c {
            row.push(if normalized { format!("{:.6}", norm[p][t]) } else { m.count(p, t).to_string() });
        }
        w.write_record(&row)?;
    }
    finish(w)
}

/// Generic CSV from a header and string rows.
pub fn table_csv(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Failure::Data(format!("csv: {e}")))
}

/// Reads a CSV file into a header and rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_reader(Cursor::new(read_bytes(path)?));
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use microcam_core::corpus::{synth_generate, SynthSpec};

    #[test]
    fn netpbm_round_trip_is_exact_on_8_bit_values() {
        for ch in [1, 3] {
            let img = Image::from_fn(5, 4, ch, |x, y, c| ((x * 37 + y * 11 + c * 5) % 256) as f32 / 255.0);
            let bytes = encode_netpbm(&img).unwrap();
            assert_eq!(&bytes[..2], if ch == 1 { b"P5" } else { b"P6" });
            let back = decode_netpbm(&bytes).unwrap();
            assert_eq!(back, img);
        }
    }

    #[test]
    fn manifest_round_trip_keeps_extended_label_space() {
        let c = synth_generate(&SynthSpec::novel(2, 3).with_side(8)).unwrap();
        let paths: Vec<String> = (0..c.len()).map(|i| record_path(&c, i)).collect();
        let text = manifest_text(&c, &paths);
        let m = parse_manifest(&text).unwrap();
        assert_eq!(&m.taxonomy, c.taxonomy());
        assert_eq!(&m.table, c.table());
        assert_eq!(m.entries.len(), c.len());
        for (e, r) in m.entries.iter().zip(c.records()) {
            assert_eq!((e.0, e.1, e.2, e.4), (r.person, r.object, r.material, r.t));
        }
    }

    #[test]
    fn manifest_without_header_uses_standard_labels() {
        let m = parse_manifest("2 sofa leather person2/sofa/leather/a.ppm 0.5\n").unwrap();
        assert_eq!(m.entries[0].1, ObjectClass::SOFA);
        assert_eq!(m.entries[0].2, MaterialClass::LEATHER);
        assert!(parse_manifest("2 sofa leather a.ppm").is_err());
        assert!(parse_manifest("0 sofa leather a.ppm 1").is_err());
        assert!(parse_manifest("# objects desk bed\n").is_err());
    }

    #[test]
    fn task_stream_lines() {
        let base = Path::new("/x");
        let s = parse_task_stream("# stream\n0 a/manifest.txt\n1 b/m.txt b/t.txt\n", base).unwrap();
        assert_eq!(s[0], (0, PathBuf::from("/x/a/manifest.txt"), None));
        assert_eq!(s[1].2, Some(PathBuf::from("/x/b/t.txt")));
        assert!(parse_task_stream("1 a\n0 b\n", base).is_err());
    }
}
