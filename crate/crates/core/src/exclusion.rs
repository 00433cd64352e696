//! Positive/negative candidate construction for one reference view.
//!
//! Positive candidates are views of the reference's object (or of every
//! object in its group, at category level) taken from series whose axes
//! include all axes of the VT under test, with indices outside the exclusion
//! zone. Negatives are every view of every object outside the group. Views
//! of the group that are not positives are suppressed: they are in neither set.

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;
use std::sync::Arc;

use fixedbitset::FixedBitSet;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dataset::{superset_series, ImageId, Manifest, Variant, Vt, VIEWS_PER_SERIES};
use crate::error::{Error, Result};

/// How far around the reference index positives are removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExclusionRadius {
    /// Nothing is excluded; only meaningful under contrast exclusion.
    Off,
    Within(u8),
}

impl fmt::Display for ExclusionRadius {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExclusionRadius::Off => f.write_str("none"),
            ExclusionRadius::Within(r) => write!(f, "{r}"),
        }
    }
}

impl FromStr for ExclusionRadius {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "none" {
            return Ok(ExclusionRadius::Off);
        }
        s.parse::<u8>()
            .map(ExclusionRadius::Within)
            .map_err(|_| format!("radius `{s}` is neither `none` nor a non-negative integer"))
    }
}

impl Serialize for ExclusionRadius {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ExclusionRadius::Off => s.serialize_str("none"),
            ExclusionRadius::Within(r) => s.serialize_u8(*r),
        }
    }
}

impl<'de> Deserialize<'de> for ExclusionRadius {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u8),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(r) => Ok(ExclusionRadius::Within(r)),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Object,
    Category,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Object => "object",
            Level::Category => "category",
        }
    }
}

impl FromStr for Level {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "object" => Ok(Level::Object),
            "category" => Ok(Level::Category),
            _ => Err(format!("unknown level `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContrastMode {
    None,
    Soft,
    Hard,
}

impl ContrastMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ContrastMode::None => "none",
            ContrastMode::Soft => "soft",
            ContrastMode::Hard => "hard",
        }
    }

    pub fn positive_variant(self) -> Variant {
        match self {
            ContrastMode::None => Variant::Original,
            ContrastMode::Soft | ContrastMode::Hard => Variant::ContrastReversed,
        }
    }

    pub fn negative_variant(self) -> Variant {
        match self {
            ContrastMode::None | ContrastMode::Hard => Variant::Original,
            ContrastMode::Soft => Variant::ContrastReversed,
        }
    }
}

impl FromStr for ContrastMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(ContrastMode::None),
            "soft" => Ok(ContrastMode::Soft),
            "hard" => Ok(ContrastMode::Hard),
            _ => Err(format!("unknown contrast mode `{s}`")),
        }
    }
}

/// Assignment of objects to groups used for category-level scoring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryMap {
    label: String,
    group_of: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl CategoryMap {
    pub fn new(label: impl Into<String>, group_of: Vec<usize>) -> Self {
        let n_groups = group_of.iter().map(|g| g + 1).max().unwrap_or(0);
        let mut members = vec![Vec::new(); n_groups];
        for (obj, &g) in group_of.iter().enumerate() {
            members[g].push(obj);
        }
        members.retain(|m| !m.is_empty());
        // Re-index so group ids are dense.
        let mut group_of = group_of;
        for (g, m) in members.iter().enumerate() {
            for &o in m {
                group_of[o] = g;
            }
        }
        CategoryMap {
            label: label.into(),
            group_of,
            members,
        }
    }

    /// The manifest's own categories.
    pub fn from_manifest(manifest: &Manifest) -> Self {
        let group_of = (0..manifest.n_objects())
            .map(|o| manifest.category_of(o))
            .collect();
        CategoryMap::new("manifest", group_of)
    }

    /// Every object in its own group.
    pub fn singleton(n_objects: usize) -> Self {
        CategoryMap::new("singleton", (0..n_objects).collect())
    }

    /// Seeded random groups of `group_size` objects, no two from the same
    /// manifest category.
    pub fn randomized(manifest: &Manifest, group_size: usize, seed: u64) -> Result<Self> {
        let n = manifest.n_objects();
        let n_categories = manifest.categories().len();
        if group_size == 0 || !n.is_multiple_of(group_size) {
            return Err(Error::Infeasible(format!(
                "{n} objects cannot be split into groups of {group_size}; choose a group size dividing {n}"
            )));
        }
        let n_groups = n / group_size;
        let largest = (0..n_categories)
            .map(|c| manifest.objects_in_category(c).len())
            .max()
            .unwrap_or(0);
        if largest > n_groups {
            return Err(Error::Infeasible(format!(
                "a category with {largest} objects cannot be spread over {n_groups} groups of {group_size}; \
                 use a group size of at most {}",
                n / largest
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pools: Vec<Vec<usize>> = (0..n_categories)
            .map(|c| {
                let mut objs: Vec<usize> = manifest.objects_in_category(c).collect();
                objs.shuffle(&mut rng);
                objs
            })
            .collect();
        let mut group_of = vec![usize::MAX; n];
        for g in 0..n_groups {
            let remaining_groups = n_groups - g;
            // Categories that must contribute to every remaining group.
            let mut chosen: Vec<usize> = (0..n_categories)
                .filter(|&c| pools[c].len() == remaining_groups)
                .collect();
            let mut optional: Vec<usize> = (0..n_categories)
                .filter(|&c| !pools[c].is_empty() && pools[c].len() < remaining_groups)
                .collect();
            optional.shuffle(&mut rng);
            let need = group_size - chosen.len();
            chosen.extend_from_slice(&optional[..need]);
            for c in chosen {
                let obj = pools[c].pop().expect("non-empty pool");
                group_of[obj] = g;
            }
        }
        Ok(CategoryMap::new(format!("randomized:{group_size}:{seed}"), group_of))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn n_objects(&self) -> usize {
        self.group_of.len()
    }

    pub fn n_groups(&self) -> usize {
        self.members.len()
    }

    pub fn group_of(&self, object: usize) -> usize {
        self.group_of[object]
    }

    pub fn members(&self, group: usize) -> &[usize] {
        &self.members[group]
    }
}

/// One matching-task configuration.
#[derive(Debug, Clone)]
pub struct ExclusionSpec {
    pub vt: Vt,
    pub radius: ExclusionRadius,
    pub level: Level,
    pub contrast: ContrastMode,
    pub categories: Arc<CategoryMap>,
}

impl ExclusionSpec {
    pub fn new(
        vt: Vt,
        radius: ExclusionRadius,
        level: Level,
        contrast: ContrastMode,
        categories: Arc<CategoryMap>,
    ) -> Result<Self> {
        if radius == ExclusionRadius::Off && contrast == ContrastMode::None {
            return Err(Error::Spec(
                "radius `none` requires contrast exclusion; without it every reference would match itself"
                    .into(),
            ));
        }
        Ok(ExclusionSpec {
            vt,
            radius,
            level,
            contrast,
            categories,
        })
    }

    /// Objects whose views can be positives for a reference of `object`.
    pub fn group_objects(&self, object: usize) -> Vec<usize> {
        match self.level {
            Level::Object => vec![object],
            Level::Category => self
                .categories
                .members(self.categories.group_of(object))
                .to_vec(),
        }
    }

    /// Whether `other` is in the reference object's positive group.
    pub fn in_group(&self, object: usize, other: usize) -> bool {
        match self.level {
            Level::Object => object == other,
            Level::Category => self.categories.group_of(object) == self.categories.group_of(other),
        }
    }

    fn check_manifest(&self, manifest: &Manifest) -> Result<()> {
        if self.categories.n_objects() != manifest.n_objects() {
            return Err(Error::Spec(format!(
                "category map covers {} objects but the manifest has {}",
                self.categories.n_objects(),
                manifest.n_objects()
            )));
        }
        for variant in [self.contrast.positive_variant(), self.contrast.negative_variant()] {
            if !manifest.has_variant(variant) {
                return Err(Error::Mismatch(format!(
                    "contrast mode `{}` needs the {} variant, which the embeddings lack",
                    self.contrast.as_str(),
                    variant.as_str()
                )));
            }
        }
        Ok(())
    }

    pub fn validate_for(&self, manifest: &Manifest) -> Result<()> {
        self.check_manifest(manifest)
    }
}

/// Indices within `radius` steps of `ref_index`, clipped to 1..=11.
pub fn exclusion_zone(ref_index: u8, radius: u8) -> RangeInclusive<u8> {
    let lo = ref_index.saturating_sub(radius).max(1);
    let hi = ref_index.saturating_add(radius).min(VIEWS_PER_SERIES as u8);
    lo..=hi
}

fn index_excluded(radius: ExclusionRadius, ref_index: u8, index: u8) -> bool {
    match radius {
        ExclusionRadius::Off => false,
        ExclusionRadius::Within(r) => exclusion_zone(ref_index, r).contains(&index),
    }
}

/// Resolve a reference id to its object, checking the spec's preconditions.
fn reference_object(manifest: &Manifest, reference: &ImageId, spec: &ExclusionSpec) -> Result<usize> {
    let obj = manifest
        .object_index(reference)
        .filter(|_| manifest.row_of(reference).is_some())
        .ok_or_else(|| Error::UnknownImage(reference.to_string()))?;
    if reference.vt != spec.vt {
        return Err(Error::Spec(format!(
            "reference {reference} is not in the `{}` series under test",
            spec.vt
        )));
    }
    if reference.variant != Variant::Original {
        return Err(Error::Spec(format!(
            "reference {reference} must be an original-variant view"
        )));
    }
    Ok(obj)
}

fn positive_rows(manifest: &Manifest, object: usize, ref_index: u8, spec: &ExclusionSpec) -> Vec<usize> {
    let variant = spec.contrast.positive_variant();
    let series = superset_series(spec.vt);
    let mut rows = Vec::new();
    for member in spec.group_objects(object) {
        for &vt in &series {
            for index in 1..=VIEWS_PER_SERIES as u8 {
                if !index_excluded(spec.radius, ref_index, index) {
                    rows.push(manifest.row(variant, member, vt, index).expect("valid row"));
                }
            }
        }
    }
    rows.sort_unstable();
    rows
}

/// Positive match candidates for `reference`, in row order.
pub fn positive_candidates(
    manifest: &Manifest,
    reference: &ImageId,
    spec: &ExclusionSpec,
) -> Result<Vec<ImageId>> {
    spec.check_manifest(manifest)?;
    let obj = reference_object(manifest, reference, spec)?;
    Ok(positive_rows(manifest, obj, reference.index, spec)
        .into_iter()
        .map(|r| manifest.id(r).clone())
        .collect())
}

/// Row sets for one reference; rows index the manifest the store is aligned to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateMask {
    pub reference: usize,
    pub positives: FixedBitSet,
    pub negatives: FixedBitSet,
}

impl CandidateMask {
    /// Union of positives and negatives.
    pub fn pool(&self) -> FixedBitSet {
        let mut all = self.positives.clone();
        all.union_with(&self.negatives);
        all
    }

    pub fn dump(&self, manifest: &Manifest) -> MaskDump {
        let names = |set: &FixedBitSet| set.ones().map(|r| manifest.id(r).to_string()).collect();
        MaskDump {
            reference: manifest.id(self.reference).to_string(),
            positives: names(&self.positives),
            negatives: names(&self.negatives),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MaskDump {
    pub reference: String,
    pub positives: Vec<String>,
    pub negatives: Vec<String>,
}

/// Build the candidate mask for the reference at `ref_row`.
pub fn candidate_pool(manifest: &Manifest, reference: &ImageId, spec: &ExclusionSpec) -> Result<CandidateMask> {
    spec.check_manifest(manifest)?;
    let obj = reference_object(manifest, reference, spec)?;
    let ref_row = manifest.row_of(reference).expect("checked");
    Ok(candidate_pool_unchecked(manifest, ref_row, obj, reference.index, spec))
}

/// Mask construction without id resolution; callers guarantee the row is a
/// valid original-variant reference in `spec.vt`.
pub(crate) fn candidate_pool_unchecked(
    manifest: &Manifest,
    ref_row: usize,
    object: usize,
    ref_index: u8,
    spec: &ExclusionSpec,
) -> CandidateMask {
    let n = manifest.len();
    let mut positives = FixedBitSet::with_capacity(n);
    for r in positive_rows(manifest, object, ref_index, spec) {
        positives.insert(r);
    }
    let mut negatives = FixedBitSet::with_capacity(n);
    let variant = spec.contrast.negative_variant();
    for other in 0..manifest.n_objects() {
        if !spec.in_group(object, other) {
            let start = manifest.object_block(variant, other).expect("variant checked");
            negatives.insert_range(start..start + crate::dataset::VIEWS_PER_OBJECT);
        }
    }
    CandidateMask {
        reference: ref_row,
        positives,
        negatives,
    }
}

/// Original-variant views in series `spec.vt`, in manifest order.
pub fn reference_set(spec: &ExclusionSpec, manifest: &Manifest) -> Vec<ImageId> {
    reference_rows(spec.vt, manifest)
        .into_iter()
        .map(|r| manifest.id(r).clone())
        .collect()
}

pub fn reference_rows(vt: Vt, manifest: &Manifest) -> Vec<usize> {
    (0..manifest.n_objects())
        .flat_map(|o| {
            (1..=VIEWS_PER_SERIES as u8)
                .map(move |i| manifest.row(Variant::Original, o, vt, i).expect("original variant"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_manifest, DatasetConfig, VariantSet};

    fn vt(s: &str) -> Vt {
        s.parse().unwrap()
    }

    fn spec(m: &Manifest, v: &str, r: ExclusionRadius, level: Level, c: ContrastMode) -> ExclusionSpec {
        ExclusionSpec::new(vt(v), r, level, c, Arc::new(CategoryMap::from_manifest(m))).unwrap()
    }

    fn id(s: &str) -> ImageId {
        s.parse().unwrap()
    }

    #[test]
    fn zone_examples() {
        assert_eq!(exclusion_zone(6, 2), 4..=8);
        assert_eq!(exclusion_zone(1, 2), 1..=3);
        assert_eq!(exclusion_zone(6, 10), 1..=11);
        assert_eq!(exclusion_zone(11, 0), 11..=11);
        assert_eq!(exclusion_zone(3, 255), 1..=11);
    }

    #[test]
    fn positive_counts() {
        let m = build_manifest(&DatasetConfig::uniform(2, 10, VariantSet::OriginalOnly)).unwrap();
        let r = id("airplane_01-pw-06");
        let s = spec(&m, "pw", ExclusionRadius::Within(2), Level::Object, ContrastMode::None);
        let pos = positive_candidates(&m, &r, &s).unwrap();
        assert_eq!(pos.len(), 48);
        assert!(pos.iter().all(|p| ![4, 5, 6, 7, 8].contains(&p.index)));

        let s = spec(&m, "xyprw", ExclusionRadius::Within(4), Level::Object, ContrastMode::None);
        let r = id("airplane_01-xyprw-06");
        let idx: Vec<u8> = positive_candidates(&m, &r, &s).unwrap().iter().map(|p| p.index).collect();
        assert_eq!(idx, vec![1, 11]);

        let s = spec(&m, "pw", ExclusionRadius::Within(2), Level::Category, ContrastMode::None);
        assert_eq!(positive_candidates(&m, &id("airplane_01-pw-06"), &s).unwrap().len(), 480);
    }

    #[test]
    fn pool_sizes_default_set() {
        let m = build_manifest(&DatasetConfig::default()).unwrap();
        let r = id("airplane_01-pw-06");
        let s = spec(&m, "pw", ExclusionRadius::Within(2), Level::Object, ContrastMode::None);
        let mask = candidate_pool(&m, &r, &s).unwrap();
        assert_eq!(mask.positives.count_ones(..), 48);
        assert_eq!(mask.negatives.count_ones(..), 199 * 341);
        let s = spec(&m, "pw", ExclusionRadius::Within(2), Level::Category, ContrastMode::None);
        let mask = candidate_pool(&m, &r, &s).unwrap();
        assert_eq!(mask.positives.count_ones(..), 480);
        assert_eq!(mask.negatives.count_ones(..), 190 * 341);
    }

    #[test]
    fn contrast_radius_off_includes_twin() {
        let m = build_manifest(&DatasetConfig::uniform(2, 2, VariantSet::Both)).unwrap();
        let r = id("airplane_02-pr-04");
        let s = spec(&m, "pr", ExclusionRadius::Off, Level::Object, ContrastMode::Hard);
        let mask = candidate_pool(&m, &r, &s).unwrap();
        let twin = m.row_of(&r.with_variant(Variant::ContrastReversed)).unwrap();
        assert!(mask.positives.contains(twin));
        assert!(!mask.positives.contains(mask.reference));
        assert!(!mask.negatives.contains(mask.reference));
        // Hard: negatives stay in the original variant.
        assert!(mask.negatives.ones().all(|row| m.variant_of_row(row) == Variant::Original));
        let s = spec(&m, "pr", ExclusionRadius::Off, Level::Object, ContrastMode::Soft);
        let mask = candidate_pool(&m, &r, &s).unwrap();
        assert!(mask
            .negatives
            .ones()
            .all(|row| m.variant_of_row(row) == Variant::ContrastReversed));
    }

    #[test]
    fn radius_off_without_contrast_is_rejected() {
        let m = build_manifest(&DatasetConfig::uniform(1, 1, VariantSet::OriginalOnly)).unwrap();
        let err = ExclusionSpec::new(
            vt("p"),
            ExclusionRadius::Off,
            Level::Object,
            ContrastMode::None,
            Arc::new(CategoryMap::from_manifest(&m)),
        );
        assert!(err.is_err());
    }

    #[test]
    fn missing_variant_and_unknown_reference() {
        let m = build_manifest(&DatasetConfig::uniform(2, 2, VariantSet::OriginalOnly)).unwrap();
        let s = spec(&m, "p", ExclusionRadius::Within(1), Level::Object, ContrastMode::Soft);
        assert!(matches!(
            candidate_pool(&m, &id("airplane_01-p-03"), &s),
            Err(Error::Mismatch(_))
        ));
        let s = spec(&m, "p", ExclusionRadius::Within(1), Level::Object, ContrastMode::None);
        assert!(matches!(
            candidate_pool(&m, &id("chair_01-p-03"), &s),
            Err(Error::UnknownImage(_))
        ));
        assert!(matches!(
            candidate_pool(&m, &id("airplane_03-p-03"), &s),
            Err(Error::UnknownImage(_))
        ));
    }

    #[test]
    fn reference_sets() {
        let m = build_manifest(&DatasetConfig::default()).unwrap();
        let s = spec(&m, "pw", ExclusionRadius::Within(2), Level::Object, ContrastMode::None);
        assert_eq!(reference_set(&s, &m).len(), 2200);
        let one = build_manifest(&DatasetConfig::uniform(1, 1, VariantSet::OriginalOnly)).unwrap();
        let s1 = spec(&one, "r", ExclusionRadius::Within(0), Level::Object, ContrastMode::None);
        assert_eq!(reference_set(&s1, &one).len(), 11);
        let random = ExclusionSpec {
            categories: Arc::new(CategoryMap::randomized(&m, 10, 3).unwrap()),
            ..s.clone()
        };
        assert_eq!(reference_set(&random, &m), reference_set(&s, &m));
    }

    #[test]
    fn randomized_map_constraints() {
        let m = build_manifest(&DatasetConfig::default()).unwrap();
        let map = CategoryMap::randomized(&m, 10, 11).unwrap();
        assert_eq!(map.n_groups(), 20);
        let mut seen = vec![0; 200];
        for g in 0..map.n_groups() {
            let members = map.members(g);
            assert_eq!(members.len(), 10);
            let mut cats: Vec<usize> = members.iter().map(|&o| m.category_of(o)).collect();
            cats.sort();
            cats.dedup();
            assert_eq!(cats.len(), 10);
            for &o in members {
                seen[o] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert_eq!(map, CategoryMap::randomized(&m, 10, 11).unwrap());
        assert_ne!(map, CategoryMap::randomized(&m, 10, 12).unwrap());

        let tiny = build_manifest(&DatasetConfig::uniform(4, 3, VariantSet::OriginalOnly)).unwrap();
        assert!(CategoryMap::randomized(&tiny, 5, 1).is_err());
        assert!(CategoryMap::randomized(&tiny, 6, 1).is_err());
        assert!(CategoryMap::randomized(&tiny, 4, 1).is_ok());
    }
}
