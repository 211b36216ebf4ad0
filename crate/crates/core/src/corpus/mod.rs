//! Labeled image collections: records, frame sampling, split planning, label
//! paths and the synthetic texture corpus.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::imaging::Image;
use crate::nn::Example;
use crate::semantics::MappingTable;
use crate::taxonomy::{LabelTaxonomy, MaterialClass, ObjectClass};
use crate::{Error, Result};

mod synth;

pub use synth::{
    render_texture, synth_generate, weave_period, MaterialSpec, MaterialStyle, RenderParams, SynthSpec, TextureKind,
    WEAVE_SCALE,
};

/// Person identifiers are 1-based.
pub type PersonId = u16;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub person: PersonId,
    pub object: ObjectClass,
    pub material: MaterialClass,
    pub image: Arc<Image>,
    /// Capture time in seconds.
    pub t: f64,
}

/// An immutable set of records together with the label space they live in.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    taxonomy: LabelTaxonomy,
    table: MappingTable,
    records: Vec<SampleRecord>,
}

impl Corpus {
    /// Checks every record against the taxonomy and the mapping table.
    pub fn new(taxonomy: LabelTaxonomy, table: MappingTable, records: Vec<SampleRecord>) -> Result<Self> {
        for r in &records {
            taxonomy.check_object(r.object)?;
            taxonomy.check_material(r.material)?;
            if !table.contains(r.object, r.material) {
                return Err(Error::InvalidArgument(alloc::format!(
                    "record ({}, {}) violates the mapping table",
                    taxonomy.object_name(r.object).unwrap_or("?"),
                    taxonomy.material_name(r.material).unwrap_or("?")
                )));
            }
            if !r.t.is_finite() {
                return Err(Error::NonFinite("record timestamp"));
            }
            if r.person == 0 {
                return Err(Error::InvalidArgument("person ids are 1-based".into()));
            }
        }
        Ok(Self { taxonomy, table, records })
    }

    pub fn empty(taxonomy: LabelTaxonomy, table: MappingTable) -> Self {
        Self { taxonomy, table, records: Vec::new() }
    }

    pub fn taxonomy(&self) -> &LabelTaxonomy {
        &self.taxonomy
    }

    pub fn table(&self) -> &MappingTable {
        &self.table
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Sorted distinct person ids.
    pub fn persons(&self) -> Vec<PersonId> {
        let mut p: Vec<PersonId> = self.records.iter().map(|r| r.person).collect();
        p.sort_unstable();
        p.dedup();
        p
    }

    /// Training/evaluation views of the records at `ids`.
    pub fn examples(&self, ids: &[usize]) -> Vec<Example<'_>> {
        ids.iter()
            .map(|&i| {
                let r = &self.records[i];
                Example { image: &r.image, object: r.object, material: r.material }
            })
            .collect()
    }

    pub fn all_examples(&self) -> Vec<Example<'_>> {
        self.examples(&(0..self.len()).collect::<Vec<_>>())
    }

    /// A corpus holding the records at `ids` (images are shared, not copied).
    pub fn subset(&self, ids: &[usize]) -> Corpus {
        Corpus {
            taxonomy: self.taxonomy.clone(),
            table: self.table.clone(),
            records: ids.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    /// Records whose labels satisfy `keep`.
    pub fn filter<F: Fn(&SampleRecord) -> bool>(&self, keep: F) -> Corpus {
        let ids: Vec<usize> = (0..self.len()).filter(|&i| keep(&self.records[i])).collect();
        self.subset(&ids)
    }

    /// Concatenation of corpora whose label spaces are nested: the widest
    /// taxonomy must extend every other one (same names on the common
    /// prefix) and its mapping table must contain every other table's pairs.
    pub fn concat(parts: &[&Corpus]) -> Result<Corpus> {
        let widest = parts
            .iter()
            .max_by_key(|p| (p.taxonomy.object_count() + p.taxonomy.material_count(), p.table.pairs().len()))
            .ok_or(Error::Empty("corpus list"))?;
        let mut records = Vec::new();
        for p in parts {
            if !widest.extends(p) {
                return Err(Error::InvalidArgument("corpora use incompatible label spaces".into()));
            }
            records.extend(p.records.iter().cloned());
        }
        Ok(Corpus { taxonomy: widest.taxonomy.clone(), table: widest.table.clone(), records })
    }

    /// True when this corpus's label space contains `other`'s unchanged.
    pub fn extends(&self, other: &Corpus) -> bool {
        let (a, b) = (&self.taxonomy, &other.taxonomy);
        a.objects().starts_with(b.objects())
            && a.materials().starts_with(b.materials())
            && other.table.pairs().into_iter().all(|(o, m)| self.table.contains(o, m))
    }

    /// The same records with every image replaced by `f(index, image)`.
    pub fn map_images<F: FnMut(usize, &Image) -> Result<Image>>(&self, mut f: F) -> Result<Corpus> {
        let records = self
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| Ok(SampleRecord { image: Arc::new(f(i, &r.image)?), ..r.clone() }))
            .collect::<Result<_>>()?;
        Ok(Corpus { taxonomy: self.taxonomy.clone(), table: self.table.clone(), records })
    }

    /// Number of records of each class for one person, `(objects, materials)`.
    pub fn class_counts(&self, person: PersonId) -> (Vec<usize>, Vec<usize>) {
        let mut o = alloc::vec![0; self.taxonomy.object_count()];
        let mut m = alloc::vec![0; self.taxonomy.material_count()];
        for r in self.records.iter().filter(|r| r.person == person) {
            o[r.object.index()] += 1;
            m[r.material.index()] += 1;
        }
        (o, m)
    }
}

/// Indices of the frames kept when sampling `times` at `rate` frames per
/// second: the first frame of each `1/rate` window, windows anchored at the
/// first timestamp.
pub fn frame_sample_indices(times: &[f64], rate: f64) -> Result<Vec<usize>> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("frame rate must be > 0, got {rate}")));
    }
    let mut kept = Vec::new();
    let Some(&t0) = times.first() else { return Ok(kept) };
    let mut last_window: Option<i64> = None;
    let mut prev = t0;
    for (i, &t) in times.iter().enumerate() {
        if !t.is_finite() {
            return Err(Error::NonFinite("frame timestamp"));
        }
        if t < prev {
            return Err(Error::StreamOrder { previous: prev, got: t });
        }
        prev = t;
        // the tolerance keeps frames that sit exactly on a window edge
        // (e.g. 10/30 s at 3 fps) in the window that starts there
        let w = libm::floor((t - t0) * rate + 1e-9) as i64;
        if last_window.is_none_or(|lw| w > lw) {
            kept.push(i);
            last_window = Some(w);
        }
    }
    Ok(kept)
}

/// Keeps the first frame of each `1/rate` window.
pub fn frame_sample(frames: &[(f64, Image)], rate: f64) -> Result<Vec<Image>> {
    let times: Vec<f64> = frames.iter().map(|f| f.0).collect();
    Ok(frame_sample_indices(&times, rate)?.into_iter().map(|i| frames[i].1.clone()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    TimeKFold,
    LeaveOnePersonOut,
}

impl SplitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitKind::TimeKFold => "time_kfold",
            SplitKind::LeaveOnePersonOut => "lopo",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "time_kfold" | "time" => Some(SplitKind::TimeKFold),
            "lopo" | "leave_one_person_out" => Some(SplitKind::LeaveOnePersonOut),
            _ => None,
        }
    }
}

impl fmt::Display for SplitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// The held-out person of a LOPO fold.
    pub person: Option<PersonId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub kind: SplitKind,
    pub folds: Vec<Fold>,
}

/// Plans cross-validation folds over record indices.
///
/// Time folds are contiguous blocks of the timestamp order (sizes differ by
/// at most one, earlier folds larger); LOPO folds follow ascending person id.
/// Both kinds are deterministic; `seed` only orders records whose timestamps
/// are exactly equal.
pub fn make_split(corpus: &Corpus, kind: SplitKind, k: Option<usize>, seed: u64) -> Result<SplitPlan> {
    let n = corpus.len();
    let folds = match kind {
        SplitKind::TimeKFold => {
            let k = k.ok_or_else(|| Error::InvalidArgument("time_kfold needs k".into()))?;
            if k < 2 {
                return Err(Error::InvalidArgument(alloc::format!("time_kfold needs k >= 2, got {k}")));
            }
            if n < k {
                return Err(Error::InvalidArgument(alloc::format!("{n} records cannot fill {k} folds")));
            }
            let mut order: Vec<usize> = (0..n).collect();
            let recs = corpus.records();
            order.sort_by(|&a, &b| {
                recs[a]
                    .t
                    .total_cmp(&recs[b].t)
                    .then_with(|| crate::rng::derive(seed, a as u64).cmp(&crate::rng::derive(seed, b as u64)))
            });
            let (base, extra) = (n / k, n % k);
            let mut start = 0;
            (0..k)
                .map(|f| {
                    let len = base + usize::from(f < extra);
                    let mut test = order[start..start + len].to_vec();
                    let mut train: Vec<usize> = order[..start].iter().chain(&order[start + len..]).copied().collect();
                    test.sort_unstable();
                    train.sort_unstable();
                    start += len;
                    Fold { train, test, person: None }
                })
                .collect()
        }
        SplitKind::LeaveOnePersonOut => {
            let persons = corpus.persons();
            if persons.len() < 2 {
                return Err(Error::InvalidArgument(alloc::format!(
                    "leave-one-person-out needs >= 2 persons, got {}",
                    persons.len()
                )));
            }
            persons
                .iter()
                .map(|&p| {
                    let (test, train) = (0..n).partition(|&i| corpus.records()[i].person == p);
                    Fold { train, test, person: Some(p) }
                })
                .collect()
        }
    };
    Ok(SplitPlan { kind, folds })
}

/// Why a file could not become a record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelIssue {
    /// Not `person<k>/<object>/<material>/<file>`.
    Layout,
    UnknownPerson(String),
    UnknownObject(String),
    UnknownMaterial(String),
    InvalidPair { object: String, material: String },
}

impl fmt::Display for LabelIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelIssue::Layout => f.write_str("path is not person<k>/<object>/<material>/<file>"),
            LabelIssue::UnknownPerson(p) => write!(f, "unknown person directory `{p}`"),
            LabelIssue::UnknownObject(o) => write!(f, "unknown object `{o}`"),
            LabelIssue::UnknownMaterial(m) => write!(f, "unknown material `{m}`"),
            LabelIssue::InvalidPair { object, material } => {
                write!(f, "pair ({object}, {material}) is not in the mapping table")
            }
        }
    }
}

/// Parses `person<k>` into `k` (`k >= 1`).
pub fn parse_person(s: &str) -> Option<PersonId> {
    let digits = s.strip_prefix("person")?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok().filter(|&k| k >= 1)
}

/// Labels from the directory components of a relative image path
/// `person<k>/<object>/<material>/<file>`.
pub fn labels_from_path(
    components: &[&str],
    taxonomy: &LabelTaxonomy,
    table: &MappingTable,
) -> core::result::Result<(PersonId, ObjectClass, MaterialClass), LabelIssue> {
    let [person, object, material, _file] = components else {
        return Err(LabelIssue::Layout);
    };
    let p = parse_person(person).ok_or_else(|| LabelIssue::UnknownPerson(person.to_string()))?;
    let o = taxonomy.object_by_name(object).ok_or_else(|| LabelIssue::UnknownObject(object.to_string()))?;
    let m = taxonomy.material_by_name(material).ok_or_else(|| LabelIssue::UnknownMaterial(material.to_string()))?;
    if !table.contains(o, m) {
        return Err(LabelIssue::InvalidPair { object: object.to_string(), material: material.to_string() });
    }
    Ok((p, o, m))
}
