//! Object and material label sets.
//!
//! Class indices are 0-based internally (they are network output indices);
//! `number()` gives the 1-based numbering used in reports. Taxonomies can grow
//! past the built-in 6 objects / 9 materials when continual learning meets
//! labels that were never seen before.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::{Error, Result};

/// Thread count (threads per square inch) separating the two fabric classes.
pub const TC_THRESHOLD: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObjectClass(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MaterialClass(pub u16);

macro_rules! class_common {
    ($t:ident) => {
        impl $t {
            pub const fn index(self) -> usize {
                self.0 as usize
            }

            pub const fn number(self) -> usize {
                self.0 as usize + 1
            }

            pub fn from_index(i: usize) -> Self {
                $t(i as u16)
            }
        }

        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.number())
            }
        }
    };
}

class_common!(ObjectClass);
class_common!(MaterialClass);

impl ObjectClass {
    pub const BED: Self = Self(0);
    pub const DESK: Self = Self(1);
    pub const SOFA: Self = Self(2);
    pub const CABINET: Self = Self(3);
    pub const SINK: Self = Self(4);
    pub const COUNTER: Self = Self(5);
}

impl MaterialClass {
    pub const PLUSH: Self = Self(0);
    pub const FABRIC_TC_HIGH: Self = Self(1);
    pub const FABRIC_TC_LOW: Self = Self(2);
    pub const LEATHER: Self = Self(3);
    pub const FIBERBOARD: Self = Self(4);
    pub const WOOD: Self = Self(5);
    pub const CERAMIC: Self = Self(6);
    pub const STEEL: Self = Self(7);
    pub const MARBLE: Self = Self(8);
}

pub const OBJECT_COUNT: usize = 6;
pub const MATERIAL_COUNT: usize = 9;

/// Slug, display name, accepted aliases.
type Names = (&'static str, &'static str, &'static [&'static str]);

const OBJECT_NAMES: [Names; OBJECT_COUNT] = [
    ("bed", "Bed", &[]),
    ("desk", "Desk/Table", &["table", "desk_table", "desk/table"]),
    ("sofa", "Sofa", &["couch"]),
    ("cabinet", "Cabinet/Shelf/Closet", &["shelf", "closet", "cabinet_shelf_closet"]),
    ("sink", "Sink/Pool/Bath", &["pool", "bath", "sink_pool_bath"]),
    ("counter", "Counter", &["countertop"]),
];

const MATERIAL_NAMES: [Names; MATERIAL_COUNT] = [
    ("plush", "Plush", &[]),
    ("fabric_tc_high", "Fabric (TC>100)", &["fabric_tc>100", "fabric_high"]),
    ("fabric_tc_low", "Fabric (TC<100)", &["fabric_tc<100", "fabric_low"]),
    ("leather", "Leather", &[]),
    ("fiberboard", "Fiberboard/Particleboard", &["particleboard", "fiberboard_particleboard"]),
    ("wood", "Wood/Wood-like Grain", &["wood_grain", "wood_like_grain"]),
    ("ceramic", "Ceramic", &[]),
    ("stainless_steel", "Stainless Steel", &["steel"]),
    ("marble", "Marble/Quartz", &["quartz", "marble_quartz"]),
];

/// Ordered class names for both heads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTaxonomy {
    objects: Vec<String>,
    materials: Vec<String>,
    object_aliases: Vec<(String, usize)>,
    material_aliases: Vec<(String, usize)>,
}

impl Default for LabelTaxonomy {
    fn default() -> Self {
        Self::standard()
    }
}

fn build(names: &[Names]) -> (Vec<String>, Vec<(String, usize)>) {
    let slugs = names.iter().map(|n| n.0.to_string()).collect();
    let mut aliases = Vec::new();
    for (i, (slug, display, extra)) in names.iter().enumerate() {
        aliases.push((slug.to_string(), i));
        aliases.push((normalize(display), i));
        aliases.extend(extra.iter().map(|a| (normalize(a), i)));
    }
    (slugs, aliases)
}

fn normalize(s: &str) -> String {
    s.trim()
        .chars()
        .map(|c| match c {
            ' ' | '-' | '/' | '(' | ')' => '_',
            c => c.to_ascii_lowercase(),
        })
        .collect::<String>()
        .split('_')
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join("_")
}

impl LabelTaxonomy {
    /// The 6 objects and 9 materials.
    pub fn standard() -> Self {
        let (objects, object_aliases) = build(&OBJECT_NAMES);
        let (materials, material_aliases) = build(&MATERIAL_NAMES);
        Self { objects, materials, object_aliases, material_aliases }
    }

    pub fn object_count(&self) -> usize {
        self.objects.len()
    }

    pub fn material_count(&self) -> usize {
        self.materials.len()
    }

    pub fn object_name(&self, o: ObjectClass) -> Option<&str> {
        self.objects.get(o.index()).map(String::as_str)
    }

    pub fn material_name(&self, m: MaterialClass) -> Option<&str> {
        self.materials.get(m.index()).map(String::as_str)
    }

    /// Human-readable name of a built-in object.
    pub fn object_display(o: ObjectClass) -> Option<&'static str> {
        OBJECT_NAMES.get(o.index()).map(|n| n.1)
    }

    pub fn material_display(m: MaterialClass) -> Option<&'static str> {
        MATERIAL_NAMES.get(m.index()).map(|n| n.1)
    }

    pub fn objects(&self) -> &[String] {
        &self.objects
    }

    pub fn materials(&self) -> &[String] {
        &self.materials
    }

    pub fn object_by_name(&self, name: &str) -> Option<ObjectClass> {
        let key = normalize(name);
        self.object_aliases.iter().find(|(a, _)| *a == key).map(|(_, i)| ObjectClass::from_index(*i))
    }

    pub fn material_by_name(&self, name: &str) -> Option<MaterialClass> {
        let key = normalize(name);
        self.material_aliases.iter().find(|(a, _)| *a == key).map(|(_, i)| MaterialClass::from_index(*i))
    }

    /// Returns the class for `name`, appending it when unknown.
    pub fn intern_object(&mut self, name: &str) -> ObjectClass {
        if let Some(o) = self.object_by_name(name) {
            return o;
        }
        let key = normalize(name);
        self.objects.push(key.clone());
        self.object_aliases.push((key, self.objects.len() - 1));
        ObjectClass::from_index(self.objects.len() - 1)
    }

    pub fn intern_material(&mut self, name: &str) -> MaterialClass {
        if let Some(m) = self.material_by_name(name) {
            return m;
        }
        let key = normalize(name);
        self.materials.push(key.clone());
        self.material_aliases.push((key, self.materials.len() - 1));
        MaterialClass::from_index(self.materials.len() - 1)
    }

    pub fn check_object(&self, o: ObjectClass) -> Result<()> {
        if o.index() < self.objects.len() {
            Ok(())
        } else {
            Err(Error::LabelOutOfRange { what: "object", index: o.index(), len: self.objects.len() })
        }
    }

    pub fn check_material(&self, m: MaterialClass) -> Result<()> {
        if m.index() < self.materials.len() {
            Ok(())
        } else {
            Err(Error::LabelOutOfRange { what: "material", index: m.index(), len: self.materials.len() })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_sizes_and_unique_names() {
        let tax = LabelTaxonomy::standard();
        assert_eq!(tax.object_count(), 6);
        assert_eq!(tax.material_count(), 9);
        let mut all: Vec<_> = tax.objects().to_vec();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 6);
        let mut all: Vec<_> = tax.materials().to_vec();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 9);
    }

    #[test]
    fn name_lookup_accepts_display_names_and_aliases() {
        let tax = LabelTaxonomy::standard();
        assert_eq!(tax.object_by_name("sofa"), Some(ObjectClass::SOFA));
        assert_eq!(tax.object_by_name("Desk/Table"), Some(ObjectClass::DESK));
        assert_eq!(tax.object_by_name("closet"), Some(ObjectClass::CABINET));
        assert_eq!(tax.material_by_name("Fabric (TC>100)"), Some(MaterialClass::FABRIC_TC_HIGH));
        assert_eq!(tax.material_by_name("Marble/Quartz"), Some(MaterialClass::MARBLE));
        assert_eq!(tax.material_by_name("Leather"), Some(MaterialClass::LEATHER));
        assert_eq!(tax.material_by_name("glass"), None);
        // 1-based numbering in reports
        assert_eq!(ObjectClass::SOFA.number(), 3);
        assert_eq!(MaterialClass::LEATHER.number(), 4);
    }

    #[test]
    fn interning_grows_the_taxonomy() {
        let mut tax = LabelTaxonomy::standard();
        let skin = tax.intern_material("Skin");
        assert_eq!(skin.index(), 9);
        assert_eq!(tax.intern_material("skin"), skin);
        assert_eq!(tax.intern_object("bed"), ObjectClass::BED);
        assert!(tax.check_material(MaterialClass(10)).is_err());
    }
}
