use serde::{Deserialize, Serialize};

use crate::dataset::ImageId;
use crate::error::{Error, Result};
use crate::exclusion::{candidate_pool, ExclusionRadius, ExclusionSpec};
use crate::scoring::SpecKey;
use crate::similarity::dot;
use crate::store::EmbeddingStore;
use crate::Manifest;

pub const DEFAULT_BINS: usize = 100;

/// Fixed-width bins over [-1, 1]. Scores outside the range (rounding noise
/// on unit vectors) land in the edge bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub counts: Vec<u64>,
    pub total: u64,
    /// Largest score seen; `None` when empty.
    pub max: Option<f64>,
}

impl Histogram {
    pub fn new(bins: usize) -> Self {
        Histogram {
            counts: vec![0; bins],
            total: 0,
            max: None,
        }
    }

    pub fn bin_of(&self, score: f64) -> usize {
        let bins = self.counts.len();
        let b = ((score + 1.0) / 2.0 * bins as f64).floor();
        (b.max(0.0) as usize).min(bins - 1)
    }

    pub fn add(&mut self, score: f64) {
        let b = self.bin_of(score);
        self.counts[b] += 1;
        self.total += 1;
        self.max = Some(self.max.map_or(score, |m| m.max(score)));
    }

    /// Lower edge of bin `b`.
    pub fn edge(&self, b: usize) -> f64 {
        -1.0 + 2.0 * b as f64 / self.counts.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusHistogram {
    pub radius: ExclusionRadius,
    pub positives: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreHistograms {
    pub reference: ImageId,
    pub level: crate::Level,
    pub contrast: crate::ContrastMode,
    pub grouping: String,
    pub bins: usize,
    pub per_radius: Vec<RadiusHistogram>,
    /// Negatives do not depend on the radius, so there is one histogram.
    pub negatives: Histogram,
}

impl ScoreHistograms {
    pub fn top_positive(&self, radius: ExclusionRadius) -> Option<f64> {
        self.per_radius
            .iter()
            .find(|h| h.radius == radius)
            .and_then(|h| h.positives.max)
    }

    pub fn top_negative(&self) -> Option<f64> {
        self.negatives.max
    }

    pub fn key(&self, radius: ExclusionRadius) -> SpecKey {
        SpecKey {
            vt: self.reference.vt,
            level: self.level,
            contrast: self.contrast,
            radius,
            grouping: self.grouping.clone(),
        }
    }
}

/// Score distributions of every positive candidate (per radius) and every
/// negative candidate of one reference. `spec.radius` is ignored; `radii`
/// picks the pools.
pub fn score_histograms(
    store: &EmbeddingStore,
    manifest: &Manifest,
    reference: &ImageId,
    spec: &ExclusionSpec,
    radii: &[ExclusionRadius],
    bins: usize,
) -> Result<ScoreHistograms> {
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let ref_row = manifest
        .row_of(reference)
        .ok_or_else(|| Error::UnknownImage(reference.to_string()))?;
    let query = store.row(ref_row);
    let mut per_radius = Vec::with_capacity(radii.len());
    let mut negatives = None;
    for &radius in radii {
        let at = ExclusionSpec::new(spec.vt, radius, spec.level, spec.contrast, spec.categories.clone())?;
        let mask = candidate_pool(manifest, reference, &at)?;
        let mut positives = Histogram::new(bins);
        for row in mask.positives.ones() {
            positives.add(dot(query, store.row(row)));
        }
        per_radius.push(RadiusHistogram { radius, positives });
        if negatives.is_none() {
            let mut h = Histogram::new(bins);
            for row in mask.negatives.ones() {
                h.add(dot(query, store.row(row)));
            }
            negatives = Some(h);
        }
    }
    Ok(ScoreHistograms {
        reference: reference.clone(),
        level: spec.level,
        contrast: spec.contrast,
        grouping: spec.categories.label().to_string(),
        bins,
        per_radius,
        negatives: negatives.unwrap_or_else(|| Histogram::new(bins)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binning_edges() {
        let mut h = Histogram::new(100);
        assert_eq!(h.bin_of(-1.0), 0);
        assert_eq!(h.bin_of(1.0), 99);
        assert_eq!(h.bin_of(1.0 + 1e-7), 99);
        assert_eq!(h.bin_of(-1.5), 0);
        assert_eq!(h.bin_of(0.0), 50);
        assert_eq!(h.bin_of(-0.005), 49);
        h.add(0.25);
        h.add(-0.5);
        assert_eq!(h.total, 2);
        assert_eq!(h.max, Some(0.25));
        assert_eq!(h.edge(50), 0.0);
    }
}
