//! Exhaustive reference evaluator.
//!
//! Shares only the id and spec types with the engine. Candidate eligibility
//! is re-derived from image-id fields for every (reference, candidate) pair,
//! scores come from a plain sequential dot product, and there is no tiling
//! and no bitset. Meant for small instances.

use std::collections::HashMap;

use crate::dataset::{Axis, ImageId, Manifest, Variant};
use crate::error::{Error, Result};
use crate::exclusion::{ContrastMode, ExclusionRadius, ExclusionSpec, Level};
use crate::scoring::{CurvePoint, ErrorCurve, Match, MatchOutcome, SpecKey, SpecResult};
use crate::store::EmbeddingStore;

pub const MAX_ORACLE_ROWS: usize = 50_000;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub results: Vec<SpecResult>,
    pub curves: Vec<ErrorCurve>,
}

struct Row<'a> {
    id: &'a ImageId,
    object: usize,
    /// Axis set as bits, in `Axis::ALL` order.
    axes: u8,
    index: i32,
}

fn axis_bits(vt: crate::dataset::Vt) -> u8 {
    Axis::ALL
        .iter()
        .enumerate()
        .filter(|(_, a)| vt.contains(**a))
        .fold(0u8, |m, (i, _)| m | (1 << i))
}

fn plain_dot(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0f64;
    for i in 0..a.len() {
        s += a[i] as f64 * b[i] as f64;
    }
    s
}

fn better(a: (usize, f64), b: (usize, f64)) -> bool {
    a.1 > b.1 || (a.1 == b.1 && a.0 < b.0)
}

fn positive_variant(c: ContrastMode) -> Variant {
    if c == ContrastMode::None {
        Variant::Original
    } else {
        Variant::ContrastReversed
    }
}

fn negative_variant(c: ContrastMode) -> Variant {
    if c == ContrastMode::Soft {
        Variant::ContrastReversed
    } else {
        Variant::Original
    }
}

/// Evaluate every spec by full scans over the store.
pub fn brute_force_evaluate(
    store: &EmbeddingStore,
    manifest: &Manifest,
    specs: &[ExclusionSpec],
) -> Result<OracleResult> {
    if store.len() > MAX_ORACLE_ROWS {
        return Err(Error::Infeasible(format!(
            "brute-force oracle refuses {} rows (limit {MAX_ORACLE_ROWS}); use a smaller instance",
            store.len()
        )));
    }
    if store.ids() != manifest.ids() {
        return Err(Error::Mismatch("oracle needs a store aligned to the manifest".into()));
    }
    let mut object_of: HashMap<(&str, u8), usize> = HashMap::new();
    let rows: Vec<Row> = store
        .ids()
        .iter()
        .map(|id| {
            let next = object_of.len();
            let object = *object_of.entry((id.category.as_str(), id.exemplar)).or_insert(next);
            Row {
                id,
                object,
                axes: axis_bits(id.vt),
                index: i32::from(id.index),
            }
        })
        .collect();

    let mut score_cache: HashMap<usize, Vec<f64>> = HashMap::new();
    let mut results = Vec::with_capacity(specs.len());
    for spec in specs {
        let mut outcomes = Vec::new();
        let mut skipped = Vec::new();
        for (ref_row, reference) in rows.iter().enumerate() {
            if reference.id.vt != spec.vt || reference.id.variant != Variant::Original {
                continue;
            }
            let scores = score_cache.entry(ref_row).or_insert_with(|| {
                (0..store.len())
                    .map(|r| plain_dot(store.row(ref_row), store.row(r)))
                    .collect()
            });
            match evaluate_reference(&rows, object_of.len(), scores, ref_row, spec) {
                Some(o) => outcomes.push(o),
                None => skipped.push(reference.id.clone()),
            }
        }
        results.push(SpecResult {
            spec: SpecKey {
                vt: spec.vt,
                level: spec.level,
                contrast: spec.contrast,
                radius: spec.radius,
                grouping: spec.categories.label().to_string(),
            },
            outcomes,
            skipped,
        });
        if score_cache.len() > 512 {
            score_cache.clear();
        }
    }
    let curves = curves_of(&results);
    Ok(OracleResult { results, curves })
}

fn evaluate_reference(
    rows: &[Row],
    n_objects: usize,
    scores: &[f64],
    ref_row: usize,
    spec: &ExclusionSpec,
) -> Option<MatchOutcome> {
    let reference = &rows[ref_row];
    let map = &spec.categories;
    let ref_group = map.group_of(reference.object);
    let in_group: Vec<bool> = (0..n_objects)
        .map(|o| match spec.level {
            Level::Object => o == reference.object,
            Level::Category => map.group_of(o) == ref_group,
        })
        .collect();
    let pos_variant = positive_variant(spec.contrast);
    let neg_variant = negative_variant(spec.contrast);
    let wanted_axes = axis_bits(spec.vt);
    let min_distance = match spec.radius {
        ExclusionRadius::Off => 0,
        ExclusionRadius::Within(r) => i32::from(r) + 1,
    };

    let mut top_pos: Option<(usize, f64)> = None;
    let mut best_by_object: Vec<Option<(usize, f64)>> = vec![None; n_objects];
    for (r, cand) in rows.iter().enumerate() {
        let s = scores[r];
        if in_group[cand.object] {
            if cand.id.variant == pos_variant
                && cand.axes & wanted_axes == wanted_axes
                && (cand.index - reference.index).abs() >= min_distance
                && top_pos.is_none_or(|t| better((r, s), t))
            {
                top_pos = Some((r, s));
            }
        } else if cand.id.variant == neg_variant {
            let e = &mut best_by_object[cand.object];
            if e.is_none_or(|b| better((r, s), b)) {
                *e = Some((r, s));
            }
        }
    }
    let per_object: Vec<(usize, (usize, f64))> = best_by_object
        .into_iter()
        .enumerate()
        .filter_map(|(o, b)| b.map(|b| (o, b)))
        .collect();
    let top_pos = top_pos?;

    let mut top_neg: Option<(usize, f64)> = None;
    let mut top_out: Option<(usize, f64)> = None;
    let mut object_rank = 0u32;
    let mut groups_above: Vec<usize> = Vec::new();
    for &(o, b) in &per_object {
        if top_neg.is_none_or(|t| better(b, t)) {
            top_neg = Some(b);
        }
        let g = map.group_of(o);
        if g != ref_group && top_out.is_none_or(|t| better(b, t)) {
            top_out = Some(b);
        }
        if b.1 > top_pos.1 {
            object_rank += 1;
            if g != ref_group && !groups_above.contains(&g) {
                groups_above.push(g);
            }
        }
    }
    let correct_category = top_out.is_none_or(|n| top_pos.1 > n.1);
    let correct_object = match spec.level {
        Level::Object => top_neg.is_none_or(|n| top_pos.1 > n.1),
        Level::Category => correct_category && rows[top_pos.0].object == reference.object,
    };
    let as_match = |(r, s): (usize, f64)| Match {
        id: rows[r].id.clone(),
        score: s,
    };
    Some(MatchOutcome {
        reference: reference.id.clone(),
        spec: SpecKey {
            vt: spec.vt,
            level: spec.level,
            contrast: spec.contrast,
            radius: spec.radius,
            grouping: map.label().to_string(),
        },
        top_positive: as_match(top_pos),
        top_negative: top_neg.map(as_match),
        tie: top_neg.is_some_and(|n| n.1 == top_pos.1),
        correct_object,
        correct_category,
        object_rank,
        category_rank: groups_above.len() as u32,
    })
}

fn curves_of(results: &[SpecResult]) -> Vec<ErrorCurve> {
    let mut curves: Vec<ErrorCurve> = Vec::new();
    for r in results {
        let wrong = r.outcomes.iter().filter(|o| !o.correct()).count();
        let n = r.outcomes.len();
        let point = CurvePoint {
            radius: r.spec.radius,
            error_rate: if n == 0 { None } else { Some(wrong as f64 / n as f64) },
            scored: n,
            skipped: r.skipped.len(),
            ties: r.outcomes.iter().filter(|o| o.tie).count(),
        };
        let idx = curves.iter().position(|c| {
            c.vt == r.spec.vt
                && c.level == r.spec.level
                && c.contrast == r.spec.contrast
                && c.grouping == r.spec.grouping
        });
        match idx {
            Some(i) => curves[i].points.push(point),
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

/// Field-by-field differences between two result sets; scores compared within `tol`.
pub fn diff_results(engine: &[SpecResult], oracle: &[SpecResult], tol: f64) -> Vec<String> {
    let mut diffs = Vec::new();
    if engine.len() != oracle.len() {
        diffs.push(format!("{} engine specs vs {} oracle specs", engine.len(), oracle.len()));
        return diffs;
    }
    let close = |a: &Match, b: &Match| a.id == b.id && (a.score - b.score).abs() <= tol;
    for (e, o) in engine.iter().zip(oracle) {
        let tag = format!(
            "{}/{}/{}/r={}/{}",
            e.spec.vt,
            e.spec.level.as_str(),
            e.spec.contrast.as_str(),
            e.spec.radius,
            e.spec.grouping
        );
        if e.spec != o.spec {
            diffs.push(format!("{tag}: spec differs from oracle {:?}", o.spec));
            continue;
        }
        if e.skipped != o.skipped {
            diffs.push(format!("{tag}: skipped references differ"));
        }
        if e.outcomes.len() != o.outcomes.len() {
            diffs.push(format!(
                "{tag}: {} engine outcomes vs {} oracle outcomes",
                e.outcomes.len(),
                o.outcomes.len()
            ));
            continue;
        }
        for (a, b) in e.outcomes.iter().zip(&o.outcomes) {
            let same_neg = match (&a.top_negative, &b.top_negative) {
                (Some(x), Some(y)) => close(x, y),
                (None, None) => true,
                _ => false,
            };
            let same = a.reference == b.reference
                && a.spec == b.spec
                && close(&a.top_positive, &b.top_positive)
                && same_neg
                && a.tie == b.tie
                && a.correct_object == b.correct_object
                && a.correct_category == b.correct_category
                && a.object_rank == b.object_rank
                && a.category_rank == b.category_rank;
            if !same {
                diffs.push(format!("{tag}: {} engine {a:?} vs oracle {b:?}", a.reference));
            }
        }
    }
    diffs
}

/// Curve differences; rates must match exactly.
pub fn diff_curves(engine: &[ErrorCurve], oracle: &[ErrorCurve]) -> Vec<String> {
    if engine == oracle {
        return Vec::new();
    }
    let mut diffs = Vec::new();
    if engine.len() != oracle.len() {
        diffs.push(format!("{} engine curves vs {} oracle curves", engine.len(), oracle.len()));
    }
    for (e, o) in engine.iter().zip(oracle) {
        if e != o {
            diffs.push(format!(
                "curve {}/{}/{}/{} differs: {:?} vs {:?}",
                e.vt,
                e.level.as_str(),
                e.contrast.as_str(),
                e.grouping,
                e.points,
                o.points
            ));
        }
    }
    diffs
}
