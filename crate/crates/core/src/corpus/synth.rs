//! Procedural surface textures standing in for microscope captures.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use libm::{exp, fabs, floor, sin, sqrt};

use super::{Corpus, PersonId, SampleRecord};
use crate::imaging::Image;
use crate::rng::{self, ChaCha8Rng, Rng};
use crate::semantics::{MappingTable, STANDARD_PAIRS};
use crate::taxonomy::LabelTaxonomy;
use crate::{Error, Result};

/// Weave period in pixels is `WEAVE_SCALE / thread_count`, so a
/// thread count of 100 gives a 24 px period at the 224 px working size.
pub const WEAVE_SCALE: f64 = 2400.0;

const SEAM_SPACING: f64 = 28.0;

pub fn weave_period(thread_count: f64) -> f64 {
    WEAVE_SCALE / thread_count
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextureKind {
    Plush,
    Weave,
    Leather,
    Fiberboard,
    Wood,
    Ceramic,
    Steel,
    Marble,
    Skin,
    Paper,
}

/// Generator parameters of one material.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialStyle {
    pub texture: TextureKind,
    pub base_rgb: [f64; 3],
    /// Wood ring spacing in pixels.
    pub grain_wavelength: f64,
    /// Range the per-image thread count is drawn from (weaves only).
    pub thread_count: (f64, f64),
    /// Marble veins across the frame.
    pub vein_density: f64,
    pub noise_amp: f64,
}

impl MaterialStyle {
    fn new(texture: TextureKind, base_rgb: [f64; 3], noise_amp: f64) -> Self {
        Self { texture, base_rgb, grain_wavelength: 12.0, thread_count: (0.0, 0.0), vein_density: 2.5, noise_amp }
    }

    /// Built-in style for a material slug, if there is one. Materials of one
    /// object share a hue family.
    pub fn for_material(name: &str) -> Option<Self> {
        use TextureKind::*;
        let s = match name {
            "plush" => Self::new(Plush, [0.92, 0.50, 0.65], 0.25),
            "fabric_tc_high" => Self { thread_count: (120.0, 200.0), ..Self::new(Weave, [0.80, 0.40, 0.85], 0.3) },
            "fabric_tc_low" => Self { thread_count: (40.0, 85.0), ..Self::new(Weave, [0.45, 0.65, 0.30], 0.3) },
            "leather" => Self::new(Leather, [0.12, 0.38, 0.25], 0.08),
            "fiberboard" => Self::new(Fiberboard, [0.85, 0.72, 0.35], 0.2),
            "wood" => Self::new(Wood, [0.70, 0.36, 0.12], 0.22),
            "ceramic" => Self::new(Ceramic, [0.90, 0.94, 1.00], 0.04),
            "stainless_steel" => Self::new(Steel, [0.50, 0.58, 0.70], 0.25),
            "marble" => Self { vein_density: 4.0, ..Self::new(Marble, [0.93, 0.90, 0.86], 0.05) },
            "skin" => Self::new(Skin, [0.90, 0.68, 0.55], 0.08),
            "paper" => Self::new(Paper, [0.98, 0.98, 0.96], 0.04),
            _ => return None,
        };
        Some(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialSpec {
    pub name: String,
    /// Objects this material is rendered on, in rotation.
    pub objects: Vec<String>,
    pub style: MaterialStyle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub materials: Vec<MaterialSpec>,
    /// Images generated per material.
    pub images_per_class: usize,
    pub persons: u16,
    /// `(person, material)` cells left empty.
    pub absent: Vec<(PersonId, String)>,
    pub side: usize,
    /// Capture rate used to assign timestamps.
    pub frame_rate: f64,
    pub rng_seed: u64,
}

impl SynthSpec {
    fn with_materials(names: &[(&str, &[&str])], images_per_class: usize, rng_seed: u64) -> Self {
        let materials = names
            .iter()
            .map(|(m, objects)| MaterialSpec {
                name: m.to_string(),
                objects: objects.iter().map(|o| o.to_string()).collect(),
                style: MaterialStyle::for_material(m).expect("built-in style"),
            })
            .collect();
        Self { materials, images_per_class, persons: 12, absent: Vec::new(), side: 224, frame_rate: 3.0, rng_seed }
    }

    /// All nine materials on their standard objects.
    pub fn standard(images_per_class: usize, rng_seed: u64) -> Self {
        let tax = LabelTaxonomy::standard();
        let names: Vec<(&str, Vec<&str>)> = tax
            .materials()
            .iter()
            .map(|m| (m.as_str(), STANDARD_PAIRS.iter().filter(|p| p.1 == m).map(|p| p.0).collect()))
            .collect();
        let refs: Vec<(&str, &[&str])> = names.iter().map(|(m, o)| (*m, o.as_slice())).collect();
        Self::with_materials(&refs, images_per_class, rng_seed)
    }

    /// Two surfaces outside the standard label set: skin and white paper.
    pub fn novel(images_per_class: usize, rng_seed: u64) -> Self {
        Self::with_materials(&[("skin", &["skin"]), ("paper", &["paper"])], images_per_class, rng_seed)
    }

    /// Keeps only the named materials (in their current order).
    pub fn retain_materials(mut self, names: &[&str]) -> Self {
        self.materials.retain(|m| names.contains(&m.name.as_str()));
        self
    }

    pub fn with_side(mut self, side: usize) -> Self {
        self.side = side;
        self
    }

    pub fn with_absent(mut self, absent: Vec<(PersonId, String)>) -> Self {
        self.absent = absent;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.side < 8 {
            return Err(Error::InvalidArgument(alloc::format!("synthetic side must be >= 8, got {}", self.side)));
        }
        if self.persons == 0 {
            return Err(Error::InvalidArgument("synthetic corpus needs >= 1 person".into()));
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return Err(Error::InvalidArgument("frame_rate must be > 0".into()));
        }
        for m in &self.materials {
            if m.objects.is_empty() {
                return Err(Error::InvalidArgument(alloc::format!("material `{}` has no objects", m.name)));
            }
            let (lo, hi) = m.style.thread_count;
            if m.style.texture == TextureKind::Weave && !(lo > 0.0 && hi >= lo) {
                return Err(Error::InvalidArgument(alloc::format!("material `{}` needs a thread count range", m.name)));
            }
            let present = (1..=self.persons).filter(|&p| !self.is_absent(p, &m.name)).count();
            if present == 0 && self.images_per_class > 0 {
                return Err(Error::InvalidArgument(alloc::format!("material `{}` is absent for every person", m.name)));
            }
        }
        Ok(())
    }

    fn is_absent(&self, person: PersonId, material: &str) -> bool {
        self.absent.iter().any(|(p, m)| *p == person && m == material)
    }
}

/// Per-image rendering knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderParams {
    pub thread_count: f64,
    /// Quarter turns applied to the pattern.
    pub quarter_turns: u8,
    pub tint: f64,
    /// Dark joint lines along the grain, one every `SEAM_SPACING` px.
    pub seam: bool,
    /// Relative per-channel color offset.
    pub rgb_jitter: [f64; 3],
    pub brightness: f64,
    /// Additive linear lighting gradient across the frame.
    pub gradient: (f64, f64),
    /// Standard deviation of the sensor noise.
    pub noise_sd: f64,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            thread_count: 100.0,
            quarter_turns: 0,
            tint: 1.0,
            seam: false,
            rgb_jitter: [0.0; 3],
            brightness: 1.0,
            gradient: (0.0, 0.0),
            noise_sd: 0.0,
        }
    }
}

/// Periodic value noise with smoothstep interpolation.
struct Lattice {
    gw: usize,
    gh: usize,
    cx: f64,
    cy: f64,
    v: Vec<f32>,
}

impl Lattice {
    fn new(r: &mut ChaCha8Rng, side: usize, cx: f64, cy: f64) -> Self {
        let gw = libm::ceil(side as f64 / cx).max(1.0) as usize;
        let gh = libm::ceil(side as f64 / cy).max(1.0) as usize;
        let v = (0..gw * gh).map(|_| r.gen::<f32>()).collect();
        Self { gw, gh, cx, cy, v }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let (fx, fy) = (x / self.cx, y / self.cy);
        let (ix, iy) = (floor(fx), floor(fy));
        let (tx, ty) = (smooth(fx - ix), smooth(fy - iy));
        let x0 = (ix as i64).rem_euclid(self.gw as i64) as usize;
        let y0 = (iy as i64).rem_euclid(self.gh as i64) as usize;
        let (x1, y1) = ((x0 + 1) % self.gw, (y0 + 1) % self.gh);
        let g = |x: usize, y: usize| self.v[y * self.gw + x] as f64;
        let top = g(x0, y0) + (g(x1, y0) - g(x0, y0)) * tx;
        let bot = g(x0, y1) + (g(x1, y1) - g(x0, y1)) * tx;
        top + (bot - top) * ty
    }

    /// Centered to `[-1, 1]`.
    fn signed(&self, x: f64, y: f64) -> f64 {
        2.0 * self.at(x, y) - 1.0
    }
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Jittered-grid feature points: one per cell, each with a random value.
struct Cells {
    n: usize,
    size: f64,
    pts: Vec<(f64, f64, f64)>,
}

impl Cells {
    fn new(r: &mut ChaCha8Rng, side: usize, size: f64) -> Self {
        let n = libm::ceil(side as f64 / size).max(1.0) as usize;
        let pts = (0..n * n).map(|_| (r.gen::<f64>(), r.gen::<f64>(), r.gen::<f64>())).collect();
        Self { n, size, pts }
    }

    /// Distances to the nearest and second-nearest point, and the nearest
    /// point's value.
    fn query(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let (cx, cy) = (floor(x / self.size) as i64, floor(y / self.size) as i64);
        let (mut f1, mut f2, mut val) = (f64::INFINITY, f64::INFINITY, 0.0);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (gx, gy) = (cx + dx, cy + dy);
                let i = gy.rem_euclid(self.n as i64) as usize * self.n + gx.rem_euclid(self.n as i64) as usize;
                let (px, py, v) = self.pts[i];
                let (ex, ey) = ((gx as f64 + px) * self.size - x, (gy as f64 + py) * self.size - y);
                let d = sqrt(ex * ex + ey * ey);
                if d < f1 {
                    f2 = f1;
                    f1 = d;
                    val = v;
                } else if d < f2 {
                    f2 = d;
                }
            }
        }
        (f1, f2, val)
    }
}

/// Pattern state for one image: lattices and phases drawn up front.
enum Pattern {
    Plush { fine: Lattice, coarse: Lattice },
    Weave { period: f64, phase: (f64, f64), fine: Lattice },
    Leather { cells: Cells, mid: Lattice },
    Fiberboard { cells: Cells, fine: Lattice },
    Wood { wavelength: f64, phase: f64, warp: Lattice, streak: Lattice },
    Ceramic { low: Lattice, specks: Lattice },
    Steel { streak: Lattice, broad: Lattice },
    Marble { density: f64, angle: (f64, f64), phase: f64, turb: Lattice, turb2: Lattice, low: Lattice },
    Skin { pores: Cells, mid: Lattice },
    Paper { fiber: Lattice, low: Lattice },
}

impl Pattern {
    fn new(style: &MaterialStyle, p: &RenderParams, side: usize, r: &mut ChaCha8Rng) -> Self {
        use TextureKind::*;
        match style.texture {
            Plush => Pattern::Plush { fine: Lattice::new(r, side, 2.0, 2.0), coarse: Lattice::new(r, side, 24.0, 24.0) },
            Weave => {
                let period = weave_period(p.thread_count);
                let phase = (r.gen::<f64>() * period, r.gen::<f64>() * period);
                Pattern::Weave { period, phase, fine: Lattice::new(r, side, 3.0, 3.0) }
            }
            Leather => Pattern::Leather { cells: Cells::new(r, side, 28.0), mid: Lattice::new(r, side, 6.0, 6.0) },
            Fiberboard => {
                Pattern::Fiberboard { cells: Cells::new(r, side, 5.0), fine: Lattice::new(r, side, 1.5, 1.5) }
            }
            Wood => Pattern::Wood {
                wavelength: style.grain_wavelength,
                phase: r.gen::<f64>() * TAU,
                warp: Lattice::new(r, side, 48.0, 48.0),
                streak: Lattice::new(r, side, 20.0, 2.0),
            },
            Ceramic => Pattern::Ceramic { low: Lattice::new(r, side, 64.0, 64.0), specks: Lattice::new(r, side, 3.0, 3.0) },
            Steel => Pattern::Steel { streak: Lattice::new(r, side, 60.0, 1.5), broad: Lattice::new(r, side, 20.0, 4.0) },
            Marble => {
                let a = r.gen::<f64>() * core::f64::consts::PI;
                Pattern::Marble {
                    density: style.vein_density,
                    angle: (libm::cos(a), libm::sin(a)),
                    phase: r.gen::<f64>() * TAU,
                    turb: Lattice::new(r, side, 40.0, 40.0),
                    turb2: Lattice::new(r, side, 16.0, 16.0),
                    low: Lattice::new(r, side, 56.0, 56.0),
                }
            }
            Skin => Pattern::Skin { pores: Cells::new(r, side, 14.0), mid: Lattice::new(r, side, 10.0, 10.0) },
            Paper => Pattern::Paper { fiber: Lattice::new(r, side, 2.0, 2.0), low: Lattice::new(r, side, 30.0, 30.0) },
        }
    }

    /// Relative luminance modulation at pattern coordinates `(u, v)`.
    fn modulation(&self, u: f64, v: f64, side: f64, amp: f64) -> f64 {
        match self {
            Pattern::Plush { fine, coarse } => amp * fine.signed(u, v) + 0.3 * amp * coarse.signed(u, v),
            Pattern::Weave { period, phase, fine } => {
                let a = sin(TAU * (u + phase.0) / period);
                let b = sin(TAU * (v + phase.1) / period);
                amp * 0.5 * (a + b) + 0.05 * fine.signed(u, v)
            }
            Pattern::Leather { cells, mid } => {
                let (f1, f2, _) = cells.query(u, v);
                let gap = (f2 - f1) / 3.0;
                -2.2 * amp * exp(-gap * gap) + amp * mid.signed(u, v)
            }
            Pattern::Fiberboard { cells, fine } => {
                let (_, _, val) = cells.query(u, v);
                amp * (2.0 * val - 1.0) + 0.25 * amp * fine.signed(u, v)
            }
            Pattern::Wood { wavelength, phase, warp, streak } => {
                let w = 8.0 * warp.signed(u, v);
                let ridge = 1.0 - fabs(sin(TAU * (v + w) / wavelength + phase));
                amp * (2.0 * ridge - 1.0) + 0.05 * streak.signed(u, v)
            }
            Pattern::Ceramic { low, specks } => {
                let s = specks.at(u, v);
                let speck = if s > 0.93 { -6.0 * (s - 0.93) } else { 0.0 };
                amp * low.signed(u, v) + speck
            }
            Pattern::Steel { streak, broad } => amp * streak.signed(u, v) + 0.4 * amp * broad.signed(u, v),
            Pattern::Marble { density, angle, phase, turb, turb2, low } => {
                let t = 6.0 * turb.signed(u, v) + 2.0 * turb2.signed(u, v);
                let s = sin(TAU * density * (u * angle.0 + v * angle.1) / side + t + phase);
                let vein = libm::pow(1.0 - fabs(s), 8.0);
                -0.55 * vein + amp * low.signed(u, v)
            }
            Pattern::Skin { pores, mid } => {
                let (f1, _, _) = pores.query(u, v);
                amp * mid.signed(u, v) - 0.3 * exp(-(f1 / 1.5) * (f1 / 1.5))
            }
            Pattern::Paper { fiber, low } => amp * fiber.signed(u, v) + 0.5 * amp * low.signed(u, v),
        }
    }
}

/// Renders one RGB texture. Deterministic in `(style, params, side, seed)`.
pub fn render_texture(style: &MaterialStyle, params: &RenderParams, side: usize, seed: u64) -> Image {
    let mut r = rng::rng(seed);
    let pattern = Pattern::new(style, params, side, &mut r);
    let seam_at = r.gen_range(0.0..SEAM_SPACING);
    let s = side as f64;
    let color: [f64; 3] = core::array::from_fn(|c| {
        style.base_rgb[c] * (1.0 + params.rgb_jitter[c]) * params.tint * params.brightness
    });
    let noise_half = params.noise_sd * sqrt(3.0);
    let mut pixels = Vec::with_capacity(side * side * 3);
    for y in 0..side {
        for x in 0..side {
            let (xf, yf) = (x as f64, y as f64);
            let (u, v) = match params.quarter_turns % 4 {
                0 => (xf, yf),
                1 => (yf, s - xf),
                2 => (s - xf, s - yf),
                _ => (s - yf, xf),
            };
            let mut l = pattern.modulation(u, v, s, style.noise_amp);
            if params.seam && fabs(rem_euclid(v - seam_at, SEAM_SPACING) - SEAM_SPACING * 0.5) < 2.0 {
                l -= 0.45;
            }
            let light = params.gradient.0 * (xf / s - 0.5) + params.gradient.1 * (yf / s - 0.5);
            for c in color {
                let noise = if noise_half > 0.0 { r.gen_range(-noise_half..noise_half) } else { 0.0 };
                pixels.push((c * (1.0 + l) + light + noise).clamp(0.0, 1.0) as f32);
            }
        }
    }
    Image::new(side, side, 3, pixels).expect("finite pixels")
}

/// Generates the corpus described by `spec`.
///
/// Records are produced in rounds: each round emits one image per material,
/// materials rotate through their objects and persons, and timestamps advance
/// by `1 / frame_rate` per image. Standard materials must keep to the
/// standard mapping; other names are added to the label space.
pub fn synth_generate(spec: &SynthSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut taxonomy = LabelTaxonomy::standard();
    let standard_table = MappingTable::standard();
    let (std_objects, std_materials) = (taxonomy.object_count(), taxonomy.material_count());
    let mut table = MappingTable::standard();
    let mut classes = Vec::with_capacity(spec.materials.len());
    for m in &spec.materials {
        let mc = taxonomy.intern_material(&m.name);
        let mut objs = Vec::new();
        for o in &m.objects {
            let oc = taxonomy.intern_object(o);
            if oc.index() < std_objects && mc.index() < std_materials && !standard_table.contains(oc, mc) {
                return Err(Error::InvalidArgument(alloc::format!(
                    "synthetic pair ({o}, {}) is not in the mapping table",
                    m.name
                )));
            }
            table.allow(oc, mc);
            objs.push(oc);
        }
        classes.push((mc, objs));
    }
    let person_tint: Vec<[f64; 3]> = (1..=spec.persons)
        .map(|p| {
            let mut r = rng::sub_rng(spec.rng_seed, 0x9E00_0000 + p as u64);
            core::array::from_fn(|_| 0.04 * rng::normal(&mut r))
        })
        .collect();

    let mut records = Vec::with_capacity(spec.images_per_class * spec.materials.len());
    for round in 0..spec.images_per_class {
        for (mi, (m, (mc, objs))) in spec.materials.iter().zip(&classes).enumerate() {
            let variant = round % objs.len();
            let candidates: Vec<PersonId> = (1..=spec.persons).filter(|&p| !spec.is_absent(p, &m.name)).collect();
            let person = candidates[(round + mi) % candidates.len()];
            let index = records.len();
            let seed = rng::derive(spec.rng_seed, index as u64);
            let mut r = rng::sub_rng(seed, 1);
            let (lo, hi) = m.style.thread_count;
            let params = RenderParams {
                thread_count: if hi > lo { r.gen_range(lo..hi) } else { lo },
                quarter_turns: variant as u8,
                tint: 1.08 - 0.2 * variant as f64,
                seam: variant % 2 == 1,
                rgb_jitter: person_tint[person as usize - 1],
                brightness: 1.0 + r.gen_range(-0.08..0.08),
                gradient: (r.gen_range(-0.1..0.1), r.gen_range(-0.1..0.1)),
                noise_sd: 0.01,
            };
            let image = render_texture(&m.style, &params, spec.side, seed);
            records.push(SampleRecord {
                person,
                object: objs[variant],
                material: *mc,
                image: Arc::new(image),
                t: index as f64 / spec.frame_rate,
            });
        }
    }
    Corpus::new(taxonomy, table, records)
}

fn rem_euclid(x: f64, m: f64) -> f64 {
    let r = libm::fmod(x, m);
    if r < 0.0 {
        r + m
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::{MaterialClass, ObjectClass};
    use rustfft::{num_complex::Complex, FftPlanner};

    #[test]
    fn zero_images_gives_empty_corpus() {
        let c = synth_generate(&SynthSpec::standard(0, 1)).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn same_seed_same_corpus() {
        let spec = SynthSpec::standard(2, 42).with_side(32);
        let a = synth_generate(&spec).unwrap();
        let b = synth_generate(&spec).unwrap();
        assert_eq!(a, b);
        let c = synth_generate(&SynthSpec { rng_seed: 43, ..spec }).unwrap();
        assert_ne!(a.records()[0].image, c.records()[0].image);
    }

    #[test]
    fn records_respect_mapping_and_balance() {
        let c = synth_generate(&SynthSpec::standard(4, 7).with_side(16)).unwrap();
        assert_eq!(c.len(), 36);
        let table = MappingTable::standard();
        for r in c.records() {
            assert!(table.contains(r.object, r.material));
        }
        let wood: Vec<_> = c.records().iter().filter(|r| r.material == MaterialClass::WOOD).collect();
        assert_eq!(wood.iter().filter(|r| r.object == ObjectClass::DESK).count(), 2);
        assert_eq!(wood.iter().filter(|r| r.object == ObjectClass::CABINET).count(), 2);
        assert!(c.records().windows(2).all(|w| w[0].t < w[1].t));
    }

    #[test]
    fn absences_are_honored() {
        let spec = SynthSpec::standard(24, 3).with_side(8).with_absent(alloc::vec![(2, "marble".into()), (5, "wood".into())]);
        let c = synth_generate(&spec).unwrap();
        assert!(!c.records().iter().any(|r| r.person == 2 && r.material == MaterialClass::MARBLE));
        assert!(!c.records().iter().any(|r| r.person == 5 && r.material == MaterialClass::WOOD));
        assert_eq!(c.persons(), (1..=12).collect::<Vec<_>>());
    }

    #[test]
    fn novel_surfaces_extend_the_label_space() {
        let c = synth_generate(&SynthSpec::novel(2, 3).with_side(8)).unwrap();
        let tax = c.taxonomy();
        assert_eq!(tax.object_count(), 8);
        assert_eq!(tax.material_count(), 11);
        let skin = tax.material_by_name("skin").unwrap();
        assert_eq!(skin.index(), 9);
        assert!(c.table().contains(tax.object_by_name("skin").unwrap(), skin));
        assert_eq!(c.table().pairs().len(), 13);
    }

    #[test]
    fn invalid_standard_pair_is_rejected() {
        let mut spec = SynthSpec::standard(1, 3).with_side(8);
        spec.materials[0].objects = alloc::vec!["sink".into()];
        assert!(synth_generate(&spec).is_err());
    }

    /// Radial frequency (cycles per pixel) of the strongest non-DC peak.
    fn peak_frequency(img: &Image) -> f64 {
        let n = img.width();
        let lum = img.luminance();
        let mean = lum.iter().sum::<f64>() / lum.len() as f64;
        let mut data: Vec<Complex<f64>> = lum.iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
        let fft = FftPlanner::new().plan_fft_forward(n);
        for row in data.chunks_exact_mut(n) {
            fft.process(row);
        }
        let mut col = alloc::vec![Complex::new(0.0, 0.0); n];
        for x in 0..n {
            for y in 0..n {
                col[y] = data[y * n + x];
            }
            fft.process(&mut col);
            for y in 0..n {
                data[y * n + x] = col[y];
            }
        }
        let signed = |k: usize| if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        let (mut best, mut at) = (0.0, 0.0);
        for ky in 0..n {
            for kx in 0..n {
                let p = data[ky * n + kx].norm_sqr();
                let f = (signed(kx).powi(2) + signed(ky).powi(2)).sqrt() / n as f64;
                if f > 0.0 && p > best {
                    best = p;
                    at = f;
                }
            }
        }
        at
    }

    #[test]
    fn high_thread_count_weaves_have_higher_spatial_frequency() {
        let style = MaterialStyle::for_material("fabric_tc_high").unwrap();
        let mean_peak = |tc: f64| {
            (0..5)
                .map(|s| {
                    let p = RenderParams { thread_count: tc, noise_sd: 0.01, ..Default::default() };
                    peak_frequency(&render_texture(&style, &p, 224, s))
                })
                .sum::<f64>()
                / 5.0
        };
        let (hi, lo) = (mean_peak(150.0), mean_peak(60.0));
        assert!(hi > lo, "{hi} vs {lo}");
        assert!((hi - 1.0 / weave_period(150.0)).abs() < 0.01, "{hi}");
        assert!((lo - 1.0 / weave_period(60.0)).abs() < 0.01, "{lo}");
    }
}
