//! Image-set combinatorics: viewpoint axes, series labels, image identifiers
//! and the manifest that fixes row order for every embedding file.
//!
//! Every object is rendered in 31 series (one per non-empty subset of the
//! five viewpoint axes), 11 views per series, optionally in two background
//! contrast variants. Views are numbered 1..=11 with the origin view at 6.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const VIEWS_PER_SERIES: usize = 11;
pub const SERIES_PER_OBJECT: usize = 31;
pub const VIEWS_PER_OBJECT: usize = VIEWS_PER_SERIES * SERIES_PER_OBJECT;
pub const ORIGIN_INDEX: u8 = 6;
pub const MAX_EXEMPLARS: u8 = 10;

/// Rotation step between neighbouring views of a rotation series, degrees.
/// Rendering metadata only.
pub const ROTATION_STEP_DEGREES: f64 = 9.0;
/// Translation step as a fraction of frame width. Rendering metadata only.
pub const TRANSLATION_STEP_FRACTION: f64 = 0.033;

pub const DEFAULT_CATEGORIES: [&str; 20] = [
    "airplane", "bathtub", "bench", "bookshelf", "bottle", "bowl", "bunkbed", "cabinet", "car",
    "chair", "faucet", "guitar", "lamp", "laptop", "mug", "plant", "rifle", "sofa", "table",
    "vase",
];

/// One of the five rigid viewpoint axes, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Axis {
    X,
    Y,
    Pitch,
    Roll,
    Yaw,
}

impl Axis {
    pub const ALL: [Axis; 5] = [Axis::X, Axis::Y, Axis::Pitch, Axis::Roll, Axis::Yaw];

    pub fn letter(self) -> char {
        match self {
            Axis::X => 'x',
            Axis::Y => 'y',
            Axis::Pitch => 'p',
            Axis::Roll => 'r',
            Axis::Yaw => 'w',
        }
    }

    pub fn from_letter(c: char) -> Option<Axis> {
        Axis::ALL.into_iter().find(|a| a.letter() == c)
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

/// A viewpoint transformation: a non-empty set of axes, stored as a bitmask.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Vt(u8);

static VT_ORDER: std::sync::LazyLock<[Vt; SERIES_PER_OBJECT]> = std::sync::LazyLock::new(|| {
    let mut all: Vec<Vt> = (1u8..32).map(Vt).collect();
    all.sort_by_key(|vt| {
        let ranks: Vec<Axis> = vt.axes().collect();
        (ranks.len(), ranks)
    });
    all.try_into().expect("31 subsets")
});

static VT_POSITION: std::sync::LazyLock<[u8; 32]> = std::sync::LazyLock::new(|| {
    let mut pos = [u8::MAX; 32];
    for (i, vt) in VT_ORDER.iter().enumerate() {
        pos[vt.0 as usize] = i as u8;
    }
    pos
});

impl Vt {
    pub fn from_axes(axes: impl IntoIterator<Item = Axis>) -> Option<Vt> {
        let mask = axes.into_iter().fold(0u8, |m, a| m | a.bit());
        (mask != 0).then_some(Vt(mask))
    }

    pub fn from_mask(mask: u8) -> Option<Vt> {
        (1..32).contains(&mask).then_some(Vt(mask))
    }

    pub fn mask(self) -> u8 {
        self.0
    }

    /// Axes in canonical order.
    pub fn axes(self) -> impl Iterator<Item = Axis> {
        Axis::ALL.into_iter().filter(move |a| self.0 & a.bit() != 0)
    }

    pub fn contains(self, axis: Axis) -> bool {
        self.0 & axis.bit() != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        false
    }

    /// True when every axis of `self` is also an axis of `other`.
    pub fn is_subset_of(self, other: Vt) -> bool {
        self.0 & other.0 == self.0
    }

    /// Position of this series in [`enumerate_vts`] order.
    pub fn position(self) -> usize {
        VT_POSITION[self.0 as usize] as usize
    }
}

impl fmt::Display for Vt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in self.axes() {
            write!(f, "{}", a.letter())?;
        }
        Ok(())
    }
}

impl fmt::Debug for Vt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Vt({self})")
    }
}

impl FromStr for Vt {
    type Err = String;

    /// Only canonical strings are accepted, so every VT has exactly one spelling.
    fn from_str(s: &str) -> Result<Self, String> {
        if s.is_empty() {
            return Err("empty series label".into());
        }
        let mut mask = 0u8;
        let mut last: Option<Axis> = None;
        for c in s.chars() {
            let axis = Axis::from_letter(c).ok_or_else(|| format!("unknown axis letter `{c}`"))?;
            if let Some(prev) = last {
                if axis == prev {
                    return Err(format!("duplicate axis `{c}`"));
                }
                if axis < prev {
                    return Err(format!("axes of `{s}` are not in canonical order x<y<p<r<w"));
                }
            }
            last = Some(axis);
            mask |= axis.bit();
        }
        Ok(Vt(mask))
    }
}

impl Serialize for Vt {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Vt {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// All 31 series labels, ordered by number of axes and then by canonical axis order.
pub fn enumerate_vts() -> &'static [Vt] {
    &VT_ORDER[..]
}

/// Every series whose axis set contains all axes of `vt`, in [`enumerate_vts`] order.
pub fn superset_series(vt: Vt) -> Vec<Vt> {
    VT_ORDER
        .iter()
        .copied()
        .filter(|s| vt.is_subset_of(*s))
        .collect()
}

/// Background contrast variant of a rendered view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Original,
    ContrastReversed,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::ContrastReversed => "contrast-reversed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ImageId {
    pub category: String,
    pub exemplar: u8,
    pub vt: Vt,
    pub index: u8,
    pub variant: Variant,
}

impl ImageId {
    pub fn object_name(&self) -> String {
        object_name(&self.category, self.exemplar)
    }

    /// The same view in the other contrast variant.
    pub fn with_variant(&self, variant: Variant) -> ImageId {
        ImageId {
            variant,
            ..self.clone()
        }
    }
}

pub fn object_name(category: &str, exemplar: u8) -> String {
    format!("{category}_{exemplar:02}")
}

fn validate_category_name(name: &str) -> Result<(), String> {
    if name.is_empty() {
        return Err("empty category name".into());
    }
    if !name
        .chars()
        .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
    {
        return Err(format!(
            "category `{name}` may only contain lowercase letters, digits and `_`"
        ));
    }
    Ok(())
}

fn parse_two_digits(s: &str, what: &str) -> Result<u8, String> {
    if s.len() != 2 || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("{what} `{s}` is not a two-digit number"));
    }
    Ok(s.parse().expect("two ascii digits"))
}

impl FromStr for ImageId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let fail = |reason: String| Error::ParseId {
            id: s.to_string(),
            reason,
        };
        let parts: Vec<&str> = s.split('-').collect();
        let variant = match parts.len() {
            3 => Variant::Original,
            4 if parts[3] == "cr" => Variant::ContrastReversed,
            4 => return Err(fail(format!("unknown variant suffix `{}`", parts[3]))),
            _ => return Err(fail("expected `<category>_<NN>-<vt>-<NN>[-cr]`".into())),
        };
        let (category, exemplar) = parts[0]
            .rsplit_once('_')
            .ok_or_else(|| fail("missing `_<exemplar>`".into()))?;
        validate_category_name(category).map_err(fail)?;
        let exemplar = parse_two_digits(exemplar, "exemplar").map_err(fail)?;
        if !(1..=MAX_EXEMPLARS).contains(&exemplar) {
            return Err(fail(format!("exemplar {exemplar} outside 1..={MAX_EXEMPLARS}")));
        }
        let vt: Vt = parts[1].parse().map_err(fail)?;
        let index = parse_two_digits(parts[2], "index").map_err(fail)?;
        if !(1..=VIEWS_PER_SERIES as u8).contains(&index) {
            return Err(fail(format!("index {index} outside 1..=11")));
        }
        Ok(ImageId {
            category: category.to_string(),
            exemplar,
            vt,
            index,
            variant,
        })
    }
}

impl fmt::Display for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}_{:02}-{}-{:02}",
            self.category, self.exemplar, self.vt, self.index
        )?;
        if self.variant == Variant::ContrastReversed {
            f.write_str("-cr")?;
        }
        Ok(())
    }
}

impl Serialize for ImageId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ImageId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn parse_image_id(s: &str) -> Result<ImageId> {
    s.parse()
}

pub fn format_image_id(id: &ImageId) -> String {
    id.to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum VariantSet {
    #[default]
    OriginalOnly,
    Both,
}

impl VariantSet {
    pub fn variants(self) -> &'static [Variant] {
        match self {
            VariantSet::OriginalOnly => &[Variant::Original],
            VariantSet::Both => &[Variant::Original, Variant::ContrastReversed],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub name: String,
    pub objects: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub categories: Vec<CategorySpec>,
    pub variants: VariantSet,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            categories: DEFAULT_CATEGORIES
                .iter()
                .map(|name| CategorySpec {
                    name: name.to_string(),
                    objects: MAX_EXEMPLARS,
                })
                .collect(),
            variants: VariantSet::OriginalOnly,
        }
    }
}

impl DatasetConfig {
    /// `categories` × `objects` with generated names (`cat00`, `cat01`, …),
    /// or the default names when they suffice.
    pub fn uniform(categories: usize, objects: u8, variants: VariantSet) -> Self {
        let names: Vec<String> = if categories <= DEFAULT_CATEGORIES.len() {
            DEFAULT_CATEGORIES[..categories]
                .iter()
                .map(|s| s.to_string())
                .collect()
        } else {
            (0..categories).map(|i| format!("cat{i:03}")).collect()
        };
        DatasetConfig {
            categories: names
                .into_iter()
                .map(|name| CategorySpec { name, objects })
                .collect(),
            variants,
        }
    }
}

/// Object position in the manifest, plus its category position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObjectInfo {
    pub category: usize,
    pub exemplar: u8,
}

/// The full enumeration of image ids in row order.
///
/// Rows are laid out variant-major, then object (category order, exemplar
/// order), then series in [`enumerate_vts`] order, then index 1..=11, so a
/// row number can be computed from an id without lookup tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    categories: Vec<String>,
    objects: Vec<ObjectInfo>,
    first_object: Vec<usize>,
    variants: Vec<Variant>,
    ids: Vec<ImageId>,
    category_lookup: HashMap<String, usize>,
}

pub fn build_manifest(config: &DatasetConfig) -> Result<Manifest> {
    if config.categories.is_empty() {
        return Err(Error::Config("at least one category is required".into()));
    }
    let mut category_lookup = HashMap::new();
    let mut categories = Vec::new();
    let mut objects = Vec::new();
    let mut first_object = Vec::new();
    for (ci, cat) in config.categories.iter().enumerate() {
        validate_category_name(&cat.name).map_err(Error::Config)?;
        if category_lookup.insert(cat.name.clone(), ci).is_some() {
            return Err(Error::Config(format!("duplicate category `{}`", cat.name)));
        }
        if cat.objects == 0 || cat.objects > MAX_EXEMPLARS {
            return Err(Error::Config(format!(
                "category `{}` has {} objects; expected 1..={MAX_EXEMPLARS}",
                cat.name, cat.objects
            )));
        }
        categories.push(cat.name.clone());
        first_object.push(objects.len());
        for e in 1..=cat.objects {
            objects.push(ObjectInfo {
                category: ci,
                exemplar: e,
            });
        }
    }
    let variants = config.variants.variants().to_vec();
    let mut ids = Vec::with_capacity(variants.len() * objects.len() * VIEWS_PER_OBJECT);
    for &variant in &variants {
        for obj in &objects {
            for &vt in enumerate_vts() {
                for index in 1..=VIEWS_PER_SERIES as u8 {
                    ids.push(ImageId {
                        category: categories[obj.category].clone(),
                        exemplar: obj.exemplar,
                        vt,
                        index,
                        variant,
                    });
                }
            }
        }
    }
    Ok(Manifest {
        categories,
        objects,
        first_object,
        variants,
        ids,
        category_lookup,
    })
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[ImageId] {
        &self.ids
    }

    pub fn id(&self, row: usize) -> &ImageId {
        &self.ids[row]
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn objects(&self) -> &[ObjectInfo] {
        &self.objects
    }

    pub fn n_objects(&self) -> usize {
        self.objects.len()
    }

    pub fn variants(&self) -> &[Variant] {
        &self.variants
    }

    pub fn has_variant(&self, variant: Variant) -> bool {
        self.variants.contains(&variant)
    }

    pub fn rows_per_variant(&self) -> usize {
        self.objects.len() * VIEWS_PER_OBJECT
    }

    pub fn object_name(&self, object: usize) -> String {
        let info = self.objects[object];
        object_name(&self.categories[info.category], info.exemplar)
    }

    pub fn category_of(&self, object: usize) -> usize {
        self.objects[object].category
    }

    /// Objects belonging to a category, as a contiguous range of object positions.
    pub fn objects_in_category(&self, category: usize) -> std::ops::Range<usize> {
        let start = self.first_object[category];
        let end = self
            .first_object
            .get(category + 1)
            .copied()
            .unwrap_or(self.objects.len());
        start..end
    }

    pub fn object_index(&self, id: &ImageId) -> Option<usize> {
        let ci = *self.category_lookup.get(&id.category)?;
        let range = self.objects_in_category(ci);
        let obj = range.start + id.exemplar as usize - 1;
        (obj < range.end).then_some(obj)
    }

    fn variant_position(&self, variant: Variant) -> Option<usize> {
        self.variants.iter().position(|v| *v == variant)
    }

    /// Row of a view, computed arithmetically.
    pub fn row(&self, variant: Variant, object: usize, vt: Vt, index: u8) -> Option<usize> {
        if object >= self.objects.len() || !(1..=VIEWS_PER_SERIES as u8).contains(&index) {
            return None;
        }
        Some(self.object_block(variant, object)? + vt.position() * VIEWS_PER_SERIES + index as usize - 1)
    }

    /// First row of an object's 341-view block in the given variant.
    pub fn object_block(&self, variant: Variant, object: usize) -> Option<usize> {
        let vp = self.variant_position(variant)?;
        Some(vp * self.rows_per_variant() + object * VIEWS_PER_OBJECT)
    }

    pub fn row_of(&self, id: &ImageId) -> Option<usize> {
        let obj = self.object_index(id)?;
        self.row(id.variant, obj, id.vt, id.index)
    }

    pub fn object_of_row(&self, row: usize) -> usize {
        (row % self.rows_per_variant()) / VIEWS_PER_OBJECT
    }

    pub fn variant_of_row(&self, row: usize) -> Variant {
        self.variants[row / self.rows_per_variant()]
    }

    /// Keep only the listed variants (in manifest order).
    pub fn restrict_variants(&self, keep: &[Variant]) -> Result<Manifest> {
        for v in keep {
            if !self.has_variant(*v) {
                return Err(Error::Mismatch(format!(
                    "manifest has no {} variant",
                    v.as_str()
                )));
            }
        }
        let variants: Vec<Variant> = self
            .variants
            .iter()
            .copied()
            .filter(|v| keep.contains(v))
            .collect();
        let per = self.rows_per_variant();
        let mut ids = Vec::with_capacity(variants.len() * per);
        for v in &variants {
            let vp = self.variant_position(*v).expect("checked");
            ids.extend_from_slice(&self.ids[vp * per..(vp + 1) * per]);
        }
        Ok(Manifest {
            variants,
            ids,
            ..self.clone()
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ManifestJson::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Manifest> {
        let raw: ManifestJson = serde_json::from_str(text)?;
        raw.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct CategoryJson {
    name: String,
    objects: Vec<String>,
}

/// On-disk manifest layout.
#[derive(Serialize, Deserialize)]
struct ManifestJson {
    categories: Vec<CategoryJson>,
    variants: Vec<Variant>,
    ids: Vec<String>,
}

impl From<&Manifest> for ManifestJson {
    fn from(m: &Manifest) -> Self {
        ManifestJson {
            categories: m
                .categories
                .iter()
                .enumerate()
                .map(|(ci, name)| CategoryJson {
                    name: name.clone(),
                    objects: m.objects_in_category(ci).map(|o| m.object_name(o)).collect(),
                })
                .collect(),
            variants: m.variants.clone(),
            ids: m.ids.iter().map(ToString::to_string).collect(),
        }
    }
}

impl TryFrom<ManifestJson> for Manifest {
    type Error = Error;

    fn try_from(raw: ManifestJson) -> Result<Manifest> {
        let variants = match raw.variants.as_slice() {
            [Variant::Original] => VariantSet::OriginalOnly,
            [Variant::Original, Variant::ContrastReversed] => VariantSet::Both,
            other => {
                return Err(Error::Config(format!(
                    "unsupported variant list {other:?}; expected [original] or [original, contrast-reversed]"
                )))
            }
        };
        let mut categories = Vec::new();
        for cat in &raw.categories {
            for (i, obj) in cat.objects.iter().enumerate() {
                let expected = object_name(&cat.name, i as u8 + 1);
                if *obj != expected {
                    return Err(Error::Config(format!(
                        "object `{obj}` in category `{}` should be `{expected}`",
                        cat.name
                    )));
                }
            }
            let objects = u8::try_from(cat.objects.len()).map_err(|_| {
                Error::Config(format!("category `{}` has too many objects", cat.name))
            })?;
            categories.push(CategorySpec {
                name: cat.name.clone(),
                objects,
            });
        }
        let manifest = build_manifest(&DatasetConfig {
            categories,
            variants,
        })?;
        if raw.ids.len() != manifest.len() {
            return Err(Error::Config(format!(
                "manifest lists {} ids but its structure implies {}",
                raw.ids.len(),
                manifest.len()
            )));
        }
        for (row, (listed, expected)) in raw.ids.iter().zip(&manifest.ids).enumerate() {
            let id: ImageId = listed.parse()?;
            if id != *expected {
                return Err(Error::Config(format!(
                    "row {row}: expected `{expected}`, found `{listed}`"
                )));
            }
        }
        Ok(manifest)
    }
}
