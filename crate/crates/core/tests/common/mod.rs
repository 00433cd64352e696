#![allow(dead_code)]

use std::sync::Arc;

use shapey::exclusion::{CategoryMap, ContrastMode, ExclusionRadius, ExclusionSpec, Level};
use shapey::scoring::spec_grid;
use shapey::synth::{generate, SyntheticConfig, SyntheticMode};
use shapey::{enumerate_vts, EmbeddingStore, Manifest, VariantSet};

pub fn radii(max: u8) -> Vec<ExclusionRadius> {
    (0..=max).map(ExclusionRadius::Within).collect()
}

pub fn synthetic(mode: SyntheticMode, categories: usize, objects: u8, dim: usize, seed: u64, variants: VariantSet) -> (Manifest, EmbeddingStore) {
    generate(&SyntheticConfig {
        categories,
        objects_per_category: objects,
        dim,
        seed,
        variants,
        mode,
    })
    .expect("synthetic instance")
}

/// Every VT × radius × level × contrast mode, plus the `none` radius under contrast exclusion.
pub fn full_grid(manifest: &Manifest, max_radius: u8, contrasts: &[ContrastMode]) -> Vec<ExclusionSpec> {
    let map = Arc::new(CategoryMap::from_manifest(manifest));
    let mut rs = vec![ExclusionRadius::Off];
    rs.extend(radii(max_radius));
    enumerate_vts()
        .iter()
        .flat_map(|&vt| spec_grid(vt, &rs, &[Level::Object, Level::Category], contrasts, &map).unwrap())
        .collect()
}
