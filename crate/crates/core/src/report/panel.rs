use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{ImageId, VIEWS_PER_SERIES};
use crate::error::{Error, Result};
use crate::exclusion::{candidate_pool, ExclusionRadius, ExclusionSpec};
use crate::scoring::{Match, MatchOutcome, SpecKey};
use crate::similarity::{dot, rank_order};
use crate::store::EmbeddingStore;
use crate::Manifest;

pub const DEFAULT_PANEL_GROUPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PanelSelection {
    ErrorsOnly,
    WorstRankFirst,
    All,
}

impl FromStr for PanelSelection {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "errors-only" => Ok(PanelSelection::ErrorsOnly),
            "worst-rank-first" => Ok(PanelSelection::WorstRankFirst),
            "all" => Ok(PanelSelection::All),
            _ => Err(format!("unknown panel selection `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelEntry {
    pub object: String,
    pub id: ImageId,
    pub score: f64,
    pub positive: bool,
}

/// One reference with its best candidate per object, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPanelRow {
    pub reference: ImageId,
    pub correct: bool,
    pub rank: u32,
    pub entries: Vec<PanelEntry>,
    pub best_positive: Match,
    /// View of the reference's own series just outside the exclusion zone.
    pub nearest_outside: Option<Match>,
}

/// Panel rows for the outcomes of one spec.
///
/// Each row lists the top `n_groups` objects by their best candidate score;
/// entries from the reference's positive set are flagged.
pub fn error_panel(
    outcomes: &[MatchOutcome],
    store: &EmbeddingStore,
    manifest: &Manifest,
    spec: &ExclusionSpec,
    n_rows: usize,
    n_groups: usize,
    selection: PanelSelection,
) -> Result<Vec<ErrorPanelRow>> {
    let key = SpecKey::from(spec);
    let mut chosen: Vec<&MatchOutcome> = outcomes.iter().filter(|o| o.spec == key).collect();
    match selection {
        PanelSelection::ErrorsOnly => chosen.retain(|o| !o.correct()),
        // Stable sort keeps manifest order among equal ranks.
        PanelSelection::WorstRankFirst => chosen.sort_by_key(|o| std::cmp::Reverse(o.rank())),
        PanelSelection::All => {}
    }
    chosen.truncate(n_rows);
    chosen
        .into_iter()
        .map(|o| panel_row(o, store, manifest, spec, n_groups))
        .collect()
}

fn panel_row(
    outcome: &MatchOutcome,
    store: &EmbeddingStore,
    manifest: &Manifest,
    spec: &ExclusionSpec,
    n_groups: usize,
) -> Result<ErrorPanelRow> {
    let reference = &outcome.reference;
    let ref_row = manifest
        .row_of(reference)
        .ok_or_else(|| Error::UnknownImage(reference.to_string()))?;
    let query = store.row(ref_row);
    let mask = candidate_pool(manifest, reference, spec)?;

    let mut best: Vec<Option<(usize, f64)>> = vec![None; manifest.n_objects()];
    for row in mask.pool().ones() {
        let s = dot(query, store.row(row));
        let slot = &mut best[manifest.object_of_row(row)];
        if slot.is_none_or(|b| rank_order((row, s), b).is_lt()) {
            *slot = Some((row, s));
        }
    }
    let mut ranked: Vec<(usize, f64)> = best.into_iter().flatten().collect();
    ranked.sort_by(|a, b| rank_order(*a, *b));
    let entries = ranked
        .into_iter()
        .take(n_groups)
        .map(|(row, score)| PanelEntry {
            object: manifest.object_name(manifest.object_of_row(row)),
            id: manifest.id(row).clone(),
            score,
            positive: mask.positives.contains(row),
        })
        .collect();

    let distance = match spec.radius {
        ExclusionRadius::Off => 0,
        ExclusionRadius::Within(r) => i16::from(r) + 1,
    };
    let object = manifest.object_of_row(ref_row);
    let variant = spec.contrast.positive_variant();
    let index = i16::from(reference.index);
    let nearest_outside = [index - distance, index + distance]
        .into_iter()
        .filter(|i| (1..=VIEWS_PER_SERIES as i16).contains(i))
        .find_map(|i| manifest.row(variant, object, reference.vt, i as u8))
        .map(|row| Match {
            id: manifest.id(row).clone(),
            score: dot(query, store.row(row)),
        });

    Ok(ErrorPanelRow {
        reference: reference.clone(),
        correct: outcome.correct(),
        rank: outcome.rank(),
        entries,
        best_positive: outcome.top_positive.clone(),
        nearest_outside,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub label: String,
    /// `None` when no image directory is configured or the file is missing.
    pub image: Option<String>,
}

/// Image-grid layout: one row per panel row; the reference, then the best
/// candidates, then the best positive and the nearest outside view.
pub fn panel_layout(rows: &[ErrorPanelRow], images_dir: Option<&Path>) -> Vec<Vec<GridCell>> {
    let cell = |label: String, id: &ImageId| {
        let image = images_dir
            .map(|d| d.join(format!("{id}.png")))
            .filter(|p| p.is_file())
            .map(|p| p.to_string_lossy().into_owned());
        GridCell { label, image }
    };
    rows.iter()
        .map(|r| {
            let mut cells = vec![cell(format!("reference {}", r.reference), &r.reference)];
            for e in &r.entries {
                let tag = if e.positive { "+" } else { "-" };
                cells.push(cell(format!("{tag} {} {:.4}", e.id, e.score), &e.id));
            }
            cells.push(cell(
                format!("best positive {} {:.4}", r.best_positive.id, r.best_positive.score),
                &r.best_positive.id,
            ));
            if let Some(n) = &r.nearest_outside {
                cells.push(cell(format!("nearest outside {} {:.4}", n.id, n.score), &n.id));
            }
            cells
        })
        .collect()
}
