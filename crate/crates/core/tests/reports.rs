mod common;

use std::sync::Arc;

use shapey::dataset::VIEWS_PER_OBJECT;
use shapey::exclusion::candidate_pool;
use shapey::report::{self, error_panel, score_histograms, svg, PanelSelection, DEFAULT_BINS};
use shapey::synth::SyntheticMode;
use shapey::{
    build_manifest, error_curves, run_matching, run_specs, CategoryMap, ContrastMode, DatasetConfig, ExclusionRadius,
    ExclusionSpec, ImageId, Level, Manifest, TileConfig, Variant, VariantSet, Vt,
};

fn vt(s: &str) -> Vt {
    s.parse().unwrap()
}

fn spec(m: &Manifest, v: &str, r: u8, level: Level) -> ExclusionSpec {
    let map = Arc::new(CategoryMap::from_manifest(m));
    ExclusionSpec::new(vt(v), ExclusionRadius::Within(r), level, ContrastMode::None, map).unwrap()
}

fn planted() -> (Manifest, shapey::EmbeddingStore, ImageId, ImageId) {
    let base = build_manifest(&DatasetConfig::uniform(3, 2, VariantSet::OriginalOnly)).unwrap();
    let reference = base.id(base.row(Variant::Original, 0, vt("pw"), 2).unwrap()).clone();
    let distractor = base.id(base.row(Variant::Original, 2, vt("x"), 6).unwrap()).clone();
    let mode = SyntheticMode::PlantedDistractor {
        reference: reference.clone(),
        distractor: distractor.clone(),
        distance: 3,
        lambda: 0.4,
    };
    let (m, s) = common::synthetic(mode, 3, 2, 96, 5, VariantSet::OriginalOnly);
    (m, s, reference, distractor)
}

#[test]
fn planted_panel_names_the_distractor_first() {
    let (m, s, reference, distractor) = planted();
    let sp = spec(&m, "pw", 3, Level::Object);
    let result = run_matching(&s, &m, &sp, &TileConfig::default()).unwrap();
    let rows = error_panel(&result.outcomes, &s, &m, &sp, 20, 10, PanelSelection::ErrorsOnly).unwrap();
    assert_eq!(rows.len(), 1);
    let row = &rows[0];
    assert_eq!(row.reference, reference);
    assert!(!row.correct);
    assert_eq!(row.entries[0].id, distractor);
    assert_eq!(row.entries[0].object, distractor.object_name());
    assert!(!row.entries[0].positive);
    let outside = row.nearest_outside.as_ref().unwrap();
    assert_eq!(outside.id.index, 6);
}

#[test]
fn panel_entries_are_sorted_and_flagged() {
    let (m, s) = common::synthetic(SyntheticMode::Random, 3, 2, 16, 11, VariantSet::OriginalOnly);
    for level in [Level::Object, Level::Category] {
        let sp = spec(&m, "y", 1, level);
        let result = run_matching(&s, &m, &sp, &TileConfig::default()).unwrap();
        let rows = error_panel(&result.outcomes, &s, &m, &sp, 100, 10, PanelSelection::All).unwrap();
        assert_eq!(rows.len(), result.outcomes.len());
        for row in &rows {
            assert_eq!(row.entries.len(), m.n_objects());
            assert!(row.entries.windows(2).all(|w| w[0].score >= w[1].score));
            let mask = candidate_pool(&m, &row.reference, &sp).unwrap();
            for e in &row.entries {
                assert_eq!(e.positive, mask.positives.contains(m.row_of(&e.id).unwrap()));
            }
            if level == Level::Object {
                assert_eq!(row.correct, row.entries[0].positive);
            }
        }
        let worst = error_panel(&result.outcomes, &s, &m, &sp, 100, 10, PanelSelection::WorstRankFirst).unwrap();
        assert!(worst.windows(2).all(|w| w[0].rank >= w[1].rank));
    }
}

#[test]
fn errors_only_panel_is_empty_for_ideal_store() {
    let (m, s) = common::synthetic(SyntheticMode::Ideal, 3, 2, 64, 3, VariantSet::OriginalOnly);
    let sp = spec(&m, "xy", 4, Level::Object);
    let result = run_matching(&s, &m, &sp, &TileConfig::default()).unwrap();
    let rows = error_panel(&result.outcomes, &s, &m, &sp, 20, 10, PanelSelection::ErrorsOnly).unwrap();
    assert!(rows.is_empty());
}

#[test]
fn central_reference_histogram_counts() {
    let (m, s) = common::synthetic(SyntheticMode::Random, 20, 10, 4, 9, VariantSet::OriginalOnly);
    let reference = m.id(m.row(Variant::Original, 0, vt("pw"), 6).unwrap()).clone();
    let sp = spec(&m, "pw", 0, Level::Object);
    let radii = common::radii(5);
    let h = score_histograms(&s, &m, &reference, &sp, &radii, DEFAULT_BINS).unwrap();
    let r2 = h.per_radius.iter().find(|p| p.radius == ExclusionRadius::Within(2)).unwrap();
    assert_eq!(r2.positives.total, 48);
    assert_eq!(r2.positives.counts.iter().sum::<u64>(), 48);
    assert_eq!(h.negatives.total as usize, 199 * VIEWS_PER_OBJECT);
    // Index 06 has no view more than five steps away.
    assert_eq!(h.top_positive(ExclusionRadius::Within(5)), None);
    let tops: Vec<f64> = radii[..5].iter().map(|&r| h.top_positive(r).unwrap()).collect();
    assert!(tops.windows(2).all(|w| w[0] >= w[1]), "{tops:?}");
}

#[test]
fn histogram_mass_matches_pool_sizes() {
    let (m, s) = common::synthetic(SyntheticMode::Random, 3, 3, 16, 4, VariantSet::Both);
    for &contrast in &[ContrastMode::None, ContrastMode::Soft, ContrastMode::Hard] {
        for level in [Level::Object, Level::Category] {
            let map = Arc::new(CategoryMap::from_manifest(&m));
            let sp = ExclusionSpec::new(vt("xr"), ExclusionRadius::Within(0), level, contrast, map).unwrap();
            let reference = m.id(m.row(Variant::Original, 4, vt("xr"), 3).unwrap()).clone();
            let radii = common::radii(4);
            let h = score_histograms(&s, &m, &reference, &sp, &radii, 37).unwrap();
            for p in &h.per_radius {
                let at = ExclusionSpec::new(sp.vt, p.radius, level, contrast, sp.categories.clone()).unwrap();
                let mask = candidate_pool(&m, &reference, &at).unwrap();
                assert_eq!(p.positives.total as usize, mask.positives.count_ones(..));
                assert_eq!(h.negatives.total as usize, mask.negatives.count_ones(..));
            }
        }
    }
}

#[test]
fn curve_plots_are_deterministic() {
    let (m, s) = common::synthetic(SyntheticMode::Random, 3, 2, 16, 21, VariantSet::OriginalOnly);
    let map = Arc::new(CategoryMap::from_manifest(&m));
    let specs = shapey::scoring::spec_grid(
        vt("p"),
        &common::radii(4),
        &[Level::Object, Level::Category],
        &[ContrastMode::None],
        &map,
    )
    .unwrap();
    let results = run_specs(&s, &m, &specs, &TileConfig::default()).unwrap();
    let curves = error_curves(&results);
    let refs: Vec<_> = curves.iter().collect();
    let a = svg::curves_svg(&refs, "p");
    assert_eq!(a, svg::curves_svg(&refs, "p"));
    assert_eq!(a.matches("<polyline").count(), 2);

    let dir = tempfile::tempdir().unwrap();
    let written = report::emit_curve_plots(dir.path(), &curves).unwrap();
    assert_eq!(written.len(), 1);
    assert!(written[0].ends_with("curves-p-none.svg"));
    assert_eq!(std::fs::read_to_string(&written[0]).unwrap(), svg::curves_svg(&refs, "p: error vs exclusion radius (contrast none)"));
}

#[test]
fn empty_results_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    assert!(report::emit_curve_plots(dir.path(), &[]).unwrap().is_empty());
    assert!(report::write_outcome_reports(dir.path(), &[]).unwrap().is_empty());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn results_round_trip_through_bundle_files() {
    let (m, s) = common::synthetic(SyntheticMode::Random, 2, 2, 8, 2, VariantSet::Both);
    let specs = common::full_grid(&m, 2, &[ContrastMode::None, ContrastMode::Hard]);
    let mut results = run_specs(&s, &m, &specs, &TileConfig::default()).unwrap();
    report::sort_results(&mut results);
    let dir = tempfile::tempdir().unwrap();
    report::write_results(dir.path(), &results).unwrap();
    let back = report::read_results(dir.path()).unwrap();
    assert_eq!(error_curves(&back), error_curves(&results));
}
