//! The matching protocol: per-reference outcomes, error curves and ranks.

use std::sync::Arc;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::dataset::{ImageId, Manifest, Variant, Vt, VIEWS_PER_OBJECT};
use crate::error::{Error, Result};
use crate::exclusion::{
    candidate_pool_unchecked, reference_rows, CategoryMap, ContrastMode, ExclusionRadius,
    ExclusionSpec, Level,
};
use crate::similarity::{rank_order, scan_references, ScanJob, ScoreSink, TileConfig, TopK};
use crate::store::EmbeddingStore;

/// Number of rank buckets: ranks 0..=9 and one bucket for 10 or more.
pub const RANK_BUCKETS: usize = 11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub id: ImageId,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpecKey {
    pub vt: Vt,
    pub level: Level,
    pub contrast: ContrastMode,
    pub radius: ExclusionRadius,
    pub grouping: String,
}

impl From<&ExclusionSpec> for SpecKey {
    fn from(s: &ExclusionSpec) -> Self {
        SpecKey {
            vt: s.vt,
            level: s.level,
            contrast: s.contrast,
            radius: s.radius,
            grouping: s.categories.label().to_string(),
        }
    }
}

/// Result of matching one reference under one spec.
///
/// `correct_object` compares the best positive against the best negative
/// from any other object; `correct_category` against the best negative from
/// outside the reference's group. At category level every negative is
/// outside the group, and an object-correct match additionally requires the
/// best positive to be a view of the reference's own object. A score tie
/// with the relevant negative counts as incorrect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub reference: ImageId,
    #[serde(flatten)]
    pub spec: SpecKey,
    pub top_positive: Match,
    pub top_negative: Option<Match>,
    pub tie: bool,
    pub correct_object: bool,
    pub correct_category: bool,
    pub object_rank: u32,
    pub category_rank: u32,
}

impl MatchOutcome {
    pub fn correct(&self) -> bool {
        match self.spec.level {
            Level::Object => self.correct_object,
            Level::Category => self.correct_category,
        }
    }

    /// Rank at the spec's own level: objects for object level, groups for category level.
    pub fn rank(&self) -> u32 {
        match self.spec.level {
            Level::Object => self.object_rank,
            Level::Category => self.category_rank,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecResult {
    pub spec: SpecKey,
    pub outcomes: Vec<MatchOutcome>,
    /// References with no positive candidates under this spec.
    pub skipped: Vec<ImageId>,
}

impl SpecResult {
    pub fn n_scored(&self) -> usize {
        self.outcomes.len()
    }

    pub fn n_incorrect(&self) -> usize {
        self.outcomes.iter().filter(|o| !o.correct()).count()
    }

    pub fn n_ties(&self) -> usize {
        self.outcomes.iter().filter(|o| o.tie).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub radius: ExclusionRadius,
    /// `None` when every reference was skipped.
    pub error_rate: Option<f64>,
    pub scored: usize,
    pub skipped: usize,
    pub ties: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    pub vt: Vt,
    pub level: Level,
    pub contrast: ContrastMode,
    pub grouping: String,
    pub points: Vec<CurvePoint>,
}

/// Number of negative objects (object level) or negative groups (category
/// level) whose best score strictly exceeds `top_positive`.
///
/// `object_maxima` holds the best negative score of each negative object;
/// for category level it must only contain objects outside the reference's group.
pub fn rank_of_top_positive(
    top_positive: f64,
    object_maxima: &[(usize, f64)],
    level: Level,
    categories: &CategoryMap,
) -> u32 {
    let above = object_maxima.iter().filter(|(_, s)| *s > top_positive);
    match level {
        Level::Object => above.count() as u32,
        Level::Category => {
            let mut groups: Vec<usize> = above.map(|(o, _)| categories.group_of(*o)).collect();
            groups.sort_unstable();
            groups.dedup();
            groups.len() as u32
        }
    }
}

/// Per-reference accumulator: best negative per (variant, object) and the
/// best positive per spec.
struct ReferenceSink {
    rows_per_variant: usize,
    ref_object: usize,
    /// Indexed by variant position; `None` when no spec needs that variant's negatives.
    object_best: Vec<Option<Vec<Option<(usize, f64)>>>>,
    any_positive: FixedBitSet,
    positives: Vec<(FixedBitSet, TopK)>,
}

impl ScoreSink for ReferenceSink {
    fn accept(&mut self, row: usize, score: f64) {
        let vp = row / self.rows_per_variant;
        let obj = (row % self.rows_per_variant) / VIEWS_PER_OBJECT;
        if obj != self.ref_object {
            if let Some(best) = &mut self.object_best[vp] {
                let slot = &mut best[obj];
                match slot {
                    Some(cur) if rank_order(*cur, (row, score)).is_le() => {}
                    _ => *slot = Some((row, score)),
                }
            }
        }
        if self.any_positive.contains(row) {
            for (mask, top) in &mut self.positives {
                if mask.contains(row) {
                    top.push(row, score);
                }
            }
        }
    }
}

fn check_inputs(store: &EmbeddingStore, manifest: &Manifest, specs: &[ExclusionSpec]) -> Result<()> {
    if store.len() != manifest.len() || store.ids() != manifest.ids() {
        return Err(Error::Mismatch(
            "store rows are not aligned to the manifest; validate and align first".into(),
        ));
    }
    if !store.is_normalized() {
        return Err(Error::Mismatch("store must be normalized before matching".into()));
    }
    for spec in specs {
        spec.validate_for(manifest)?;
    }
    Ok(())
}

/// Run the matching protocol for one spec.
pub fn run_matching(
    store: &EmbeddingStore,
    manifest: &Manifest,
    spec: &ExclusionSpec,
    tiles: &TileConfig,
) -> Result<SpecResult> {
    Ok(run_specs(store, manifest, std::slice::from_ref(spec), tiles)?
        .pop()
        .expect("one spec"))
}

/// Run many specs. Specs sharing a VT share one scan, so each reference is
/// scored against each candidate at most once. Results follow `specs` order.
pub fn run_specs(
    store: &EmbeddingStore,
    manifest: &Manifest,
    specs: &[ExclusionSpec],
    tiles: &TileConfig,
) -> Result<Vec<SpecResult>> {
    check_inputs(store, manifest, specs)?;
    let mut results: Vec<Option<SpecResult>> = vec![None; specs.len()];
    let mut vts: Vec<Vt> = specs.iter().map(|s| s.vt).collect();
    vts.sort_by_key(|v| v.position());
    vts.dedup();
    for vt in vts {
        let group: Vec<usize> = (0..specs.len()).filter(|&i| specs[i].vt == vt).collect();
        let group_specs: Vec<&ExclusionSpec> = group.iter().map(|&i| &specs[i]).collect();
        let per_spec = run_vt(store, manifest, vt, &group_specs, tiles)?;
        for (i, r) in group.into_iter().zip(per_spec) {
            results[i] = Some(r);
        }
    }
    Ok(results.into_iter().map(|r| r.expect("every spec ran")).collect())
}

fn run_vt(
    store: &EmbeddingStore,
    manifest: &Manifest,
    vt: Vt,
    specs: &[&ExclusionSpec],
    tiles: &TileConfig,
) -> Result<Vec<SpecResult>> {
    let refs = reference_rows(vt, manifest);
    let per_variant = manifest.rows_per_variant();
    let variant_pos = |v: Variant| manifest.variants().iter().position(|x| *x == v).expect("validated");
    let mut needs_negatives = vec![false; manifest.variants().len()];
    for s in specs {
        needs_negatives[variant_pos(s.contrast.negative_variant())] = true;
    }

    let per_ref: Vec<Vec<Option<MatchOutcome>>> = scan_references(
        store,
        refs.len(),
        tiles,
        |i| {
            let ref_row = refs[i];
            let id = manifest.id(ref_row);
            let object = manifest.object_of_row(ref_row);
            let mut interest = FixedBitSet::with_capacity(manifest.len());
            let mut positives = Vec::with_capacity(specs.len());
            for spec in specs {
                let mask = candidate_pool_unchecked(manifest, ref_row, object, id.index, spec);
                interest.union_with(&mask.positives);
                positives.push((mask.positives, TopK::new(1)));
            }
            let any_positive = interest.clone();
            let object_best = needs_negatives
                .iter()
                .enumerate()
                .map(|(vp, &needed)| {
                    needed.then(|| {
                        let base = vp * per_variant;
                        interest.insert_range(base..base + per_variant);
                        vec![None; manifest.n_objects()]
                    })
                })
                .collect();
            ScanJob {
                ref_row,
                interest,
                sink: ReferenceSink {
                    rows_per_variant: per_variant,
                    ref_object: object,
                    object_best,
                    any_positive,
                    positives,
                },
            }
        },
        |i, sink| {
            let ref_row = refs[i];
            let object = sink.ref_object;
            specs
                .iter()
                .zip(&sink.positives)
                .map(|(spec, (_, top))| {
                    let best = sink.object_best[variant_pos(spec.contrast.negative_variant())]
                        .as_ref()
                        .expect("negatives tracked");
                    Some(outcome(manifest, ref_row, object, spec, top.best()?, best))
                })
                .collect()
        },
    )?;

    let mut results: Vec<SpecResult> = specs
        .iter()
        .map(|s| SpecResult {
            spec: SpecKey::from(*s),
            outcomes: Vec::with_capacity(refs.len()),
            skipped: Vec::new(),
        })
        .collect();
    for (i, outs) in per_ref.into_iter().enumerate() {
        for (res, out) in results.iter_mut().zip(outs) {
            match out {
                Some(o) => res.outcomes.push(o),
                None => res.skipped.push(manifest.id(refs[i]).clone()),
            }
        }
    }
    Ok(results)
}

fn outcome(
    manifest: &Manifest,
    ref_row: usize,
    object: usize,
    spec: &ExclusionSpec,
    top_positive: (usize, f64),
    object_best: &[Option<(usize, f64)>],
) -> MatchOutcome {
    let categories = &spec.categories;
    let ref_group = categories.group_of(object);
    let negatives: Vec<(usize, (usize, f64))> = object_best
        .iter()
        .enumerate()
        .filter(|(o, _)| !spec.in_group(object, *o))
        .filter_map(|(o, b)| b.map(|b| (o, b)))
        .collect();
    let best_of = |it: &mut dyn Iterator<Item = (usize, f64)>| it.min_by(|a, b| rank_order(*a, *b));
    let top_negative = best_of(&mut negatives.iter().map(|(_, b)| *b));
    let top_out_group = best_of(
        &mut negatives
            .iter()
            .filter(|(o, _)| categories.group_of(*o) != ref_group)
            .map(|(_, b)| *b),
    );
    let pos = top_positive.1;
    let beats = |neg: Option<(usize, f64)>| neg.is_none_or(|n| pos > n.1);
    let maxima: Vec<(usize, f64)> = negatives.iter().map(|(o, b)| (*o, b.1)).collect();
    let out_group: Vec<(usize, f64)> = maxima
        .iter()
        .copied()
        .filter(|(o, _)| categories.group_of(*o) != ref_group)
        .collect();
    let object_rank = rank_of_top_positive(pos, &maxima, Level::Object, categories);
    let category_rank = rank_of_top_positive(pos, &out_group, Level::Category, categories);
    let correct_category = beats(top_out_group);
    let correct_object = match spec.level {
        Level::Object => beats(top_negative),
        Level::Category => correct_category && manifest.object_of_row(top_positive.0) == object,
    };
    let as_match = |(row, score): (usize, f64)| Match {
        id: manifest.id(row).clone(),
        score,
    };
    MatchOutcome {
        reference: manifest.id(ref_row).clone(),
        spec: SpecKey::from(spec),
        top_positive: as_match(top_positive),
        top_negative: top_negative.map(as_match),
        tie: top_negative.is_some_and(|n| n.1 == pos),
        correct_object,
        correct_category,
        object_rank,
        category_rank,
    }
}

/// One curve per (vt, level, contrast, grouping), points ordered by radius.
pub fn error_curves(results: &[SpecResult]) -> Vec<ErrorCurve> {
    let mut curves: Vec<ErrorCurve> = Vec::new();
    for r in results {
        let point = CurvePoint {
            radius: r.spec.radius,
            error_rate: (r.n_scored() > 0).then(|| r.n_incorrect() as f64 / r.n_scored() as f64),
            scored: r.n_scored(),
            skipped: r.skipped.len(),
            ties: r.n_ties(),
        };
        let key = (r.spec.vt, r.spec.level, r.spec.contrast, &r.spec.grouping);
        match curves
            .iter_mut()
            .find(|c| (c.vt, c.level, c.contrast, &c.grouping) == key)
        {
            Some(c) => c.points.push(point),
            None => curves.push(ErrorCurve {
                vt: r.spec.vt,
                level: r.spec.level,
                contrast: r.spec.contrast,
                grouping: r.spec.grouping.clone(),
                points: vec![point],
            }),
        }
    }
    for c in &mut curves {
        c.points.sort_by_key(|p| p.radius);
    }
    curves
}

/// Rank histogram over buckets 0..=9 and 10+.
pub fn rank_histogram(outcomes: &[MatchOutcome]) -> [u64; RANK_BUCKETS] {
    let mut h = [0u64; RANK_BUCKETS];
    for o in outcomes {
        h[(o.rank() as usize).min(RANK_BUCKETS - 1)] += 1;
    }
    h
}

/// Cartesian product of spec parameters for one VT.
pub fn spec_grid(
    vt: Vt,
    radii: &[ExclusionRadius],
    levels: &[Level],
    contrasts: &[ContrastMode],
    categories: &Arc<CategoryMap>,
) -> Result<Vec<ExclusionSpec>> {
    let mut specs = Vec::new();
    for &contrast in contrasts {
        for &level in levels {
            for &radius in radii {
                if radius == ExclusionRadius::Off && contrast == ContrastMode::None {
                    continue;
                }
                specs.push(ExclusionSpec::new(vt, radius, level, contrast, categories.clone())?);
            }
        }
    }
    Ok(specs)
}

/// Category-level curve under seeded random groups of `group_size` objects
/// drawn from distinct manifest categories.
pub fn randomized_category_control(
    store: &EmbeddingStore,
    manifest: &Manifest,
    vt: Vt,
    radii: &[ExclusionRadius],
    group_size: usize,
    seed: u64,
    tiles: &TileConfig,
) -> Result<ErrorCurve> {
    let map = Arc::new(CategoryMap::randomized(manifest, group_size, seed)?);
    let specs = spec_grid(vt, radii, &[Level::Category], &[ContrastMode::None], &map)?;
    let results = run_specs(store, manifest, &specs, tiles)?;
    Ok(error_curves(&results).pop().expect("one curve"))
}
