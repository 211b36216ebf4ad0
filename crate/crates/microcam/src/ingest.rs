//! Directory ingestion: `root/person<k>/<object>/<material>/*.{ppm,pgm}`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use microcam_core::corpus::{labels_from_path, Corpus, LabelIssue, SampleRecord};
use microcam_core::semantics::MappingTable;
use microcam_core::taxonomy::LabelTaxonomy;
use walkdir::WalkDir;

use crate::error::{Failure, Result};
use crate::formats::read_image;

/// Assumed capture rate when file names carry no timestamp.
pub const DEFAULT_FRAME_RATE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub path: PathBuf,
    pub issue: LabelIssue,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
}

impl IngestReport {
    pub fn text(&self) -> String {
        let mut s = format!("accepted {}\nrejected {}\n", self.accepted, self.rejected.len());
        for r in &self.rejected {
            s.push_str(&format!("{}\t{}\n", r.path.display(), r.issue));
        }
        s
    }
}

fn is_image(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("ppm" | "pgm" | "pnm"))
}

/// One record per image file. Files with unknown labels or pairs outside
/// the mapping table are listed in the report instead of being loaded.
///
/// A numeric file stem is taken as the capture time in seconds; otherwise
/// files are timed by their sorted order within each class directory at
/// [`DEFAULT_FRAME_RATE`].
pub fn ingest_directory(root: &Path, taxonomy: &LabelTaxonomy, table: &MappingTable) -> Result<(Corpus, IngestReport)> {
    if !root.is_dir() {
        return Err(Failure::io(root, std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory")));
    }
    let mut files = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            Failure::io(&path, e.into_io_error().unwrap_or_else(|| std::io::Error::other("walk failed")))
        })?;
        if entry.file_type().is_file() && is_image(entry.path()) {
            files.push(entry.into_path());
        }
    }

    let mut report = IngestReport::default();
    let mut records = Vec::new();
    let mut ordinal = std::collections::BTreeMap::<PathBuf, usize>::new();
    for path in files {
        let rel = path.strip_prefix(root).expect("walk stays under root");
        let parts: Vec<&str> = rel.iter().filter_map(|c| c.to_str()).collect();
        let (person, object, material) = match labels_from_path(&parts, taxonomy, table) {
            Ok(l) => l,
            Err(issue) => {
                report.rejected.push(Rejection { path: rel.to_path_buf(), issue });
                continue;
            }
        };
        let dir = rel.parent().map(Path::to_path_buf).unwrap_or_default();
        let n = ordinal.entry(dir).or_insert(0);
        let stem_time = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse::<f64>().ok()).filter(|t| t.is_finite());
        let t = stem_time.unwrap_or(*n as f64 / DEFAULT_FRAME_RATE);
        *n += 1;
        let image = Arc::new(read_image(&path)?);
        records.push(SampleRecord { person, object, material, image, t });
        report.accepted += 1;
    }
    Ok((Corpus::new(taxonomy.clone(), table.clone(), records)?, report))
}
