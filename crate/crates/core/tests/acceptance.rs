//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.
//!
//! The full-scale determinism check generates a 68,200 x 2048 store; set
//! `SHAPEY_ACCEPTANCE_SMALL=1` to run it at a reduced size while iterating.

mod common;

use std::collections::{BTreeSet, HashSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::{full_grid, radii, synthetic};
use shapey::exclusion::{candidate_pool, CategoryMap, ContrastMode, ExclusionRadius, ExclusionSpec, Level};
use shapey::oracle::{brute_force_evaluate, diff_curves, diff_results};
use shapey::report::{below_diagonal_rates, scatter_data, score_histograms};
use shapey::scoring::{randomized_category_control, spec_grid};
use shapey::similarity::tuning_curve;
use shapey::synth::SyntheticMode;
use shapey::{
    build_manifest, enumerate_vts, error_curves, run_specs, superset_series, DatasetConfig, ImageId,
    SpecResult, TileConfig, Variant, VariantSet, Vt,
};

type Check = Result<String, String>;

fn vt(s: &str) -> Vt {
    s.parse().unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn manifest_combinatorics() -> Check {
    let start = Instant::now();
    let m = build_manifest(&DatasetConfig::default()).map_err(|e| e.to_string())?;
    ensure(m.len() == 68_200, || format!("{} ids", m.len()))?;
    let unique: HashSet<&ImageId> = m.ids().iter().collect();
    ensure(unique.len() == 68_200, || "duplicate ids".into())?;
    let mut per_object = std::collections::BTreeMap::<(String, u8), usize>::new();
    for id in m.ids() {
        let round_trip: ImageId = id.to_string().parse().map_err(|e| format!("{e}"))?;
        ensure(&round_trip == id, || format!("{id} does not round-trip"))?;
        *per_object.entry((id.category.clone(), id.exemplar)).or_default() += 1;
    }
    ensure(per_object.len() == 200, || format!("{} objects", per_object.len()))?;
    ensure(per_object.values().all(|&n| n == 341), || "an object without 341 views".into())?;
    let categories: BTreeSet<&String> = per_object.keys().map(|(c, _)| c).collect();
    ensure(categories.len() == 20, || format!("{} categories", categories.len()))?;
    ensure(enumerate_vts().len() == 31, || format!("{} VTs", enumerate_vts().len()))?;
    let got: BTreeSet<String> = superset_series(vt("pw")).iter().map(|v| v.to_string()).collect();
    let want: BTreeSet<String> = ["pw", "xpw", "ypw", "prw", "xypw", "xprw", "yprw", "xyprw"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    ensure(got == want, || format!("superset series of pw: {got:?}"))?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("68,200 ids, 200 x 341, 31 VTs, 8 pw series in {:.2?}", start.elapsed()))
}

fn exclusion_semantics() -> Check {
    let start = Instant::now();
    let m = build_manifest(&DatasetConfig::default()).map_err(|e| e.to_string())?;
    let map = Arc::new(CategoryMap::from_manifest(&m));
    let spec = ExclusionSpec::new(vt("pw"), ExclusionRadius::Within(2), Level::Object, ContrastMode::None, map)
        .map_err(|e| e.to_string())?;
    let reference: ImageId = "airplane_01-pw-06".parse().map_err(|e| format!("{e}"))?;
    let mask = candidate_pool(&m, &reference, &spec).map_err(|e| e.to_string())?;
    let positives: HashSet<&ImageId> = mask.positives.ones().map(|r| m.id(r)).collect();
    ensure(positives.len() == 48, || format!("{} positives", positives.len()))?;

    // Independent enumeration: same object, original views, series letters
    // containing both p and w, index more than two steps from 6.
    let expected: HashSet<&ImageId> = m
        .ids()
        .iter()
        .filter(|id| {
            let letters = id.vt.to_string();
            id.category == "airplane"
                && id.exemplar == 1
                && id.variant == Variant::Original
                && letters.contains('p')
                && letters.contains('w')
                && (i32::from(id.index) - 6).abs() >= 3
        })
        .collect();
    ensure(positives == expected, || "positives differ from the enumeration predicate".into())?;
    let indices: BTreeSet<u8> = positives.iter().map(|id| id.index).collect();
    let excluded: BTreeSet<u8> = (1..=11).filter(|i| !indices.contains(i)).collect();
    ensure(excluded == BTreeSet::from([4, 5, 6, 7, 8]), || format!("excluded {excluded:?}"))?;
    // Each index step moves every axis of the series by one step, so the
    // pitch and yaw offsets from the reference equal the index offset.
    ensure(
        positives.iter().all(|id| (i32::from(id.index) - 6).abs() >= 3),
        || "a positive within two steps on p or w".into(),
    )?;
    let negatives = mask.negatives.count_ones(..);
    ensure(negatives == 199 * 341, || format!("{negatives} negatives"))?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("48 positives, excluded {{4..8}}, {negatives} negatives in {:.2?}", start.elapsed()))
}

fn oracle_equivalence() -> Check {
    let start = Instant::now();
    let contrasts = [ContrastMode::None, ContrastMode::Soft, ContrastMode::Hard];
    let tiles = TileConfig {
        ref_tile: 5,
        cand_tile: 37,
        workers: 2,
    };
    let mut specs_checked = 0;
    let mut outcomes = 0;
    for seed in 0..20 {
        let (m, s) = synthetic(SyntheticMode::Random, 4, 3, 16, 1000 + seed, VariantSet::Both);
        let specs = full_grid(&m, 5, &contrasts);
        let engine = run_specs(&s, &m, &specs, &tiles).map_err(|e| e.to_string())?;
        let brute = brute_force_evaluate(&s, &m, &specs).map_err(|e| e.to_string())?;
        let mut diffs = diff_results(&engine, &brute.results, 1e-9);
        diffs.extend(diff_curves(&error_curves(&engine), &brute.curves));
        if let Some(d) = diffs.first() {
            return Err(format!("seed {}: {} differences, first: {d}", 1000 + seed, diffs.len()));
        }
        specs_checked += specs.len();
        outcomes += engine.iter().map(|r| r.outcomes.len()).sum::<usize>();
    }
    within(start.elapsed(), Duration::from_secs(300))?;
    Ok(format!(
        "20 instances, {specs_checked} specs, {outcomes} outcomes identical in {:.2?}",
        start.elapsed()
    ))
}

fn analytic_constructions() -> Check {
    let start = Instant::now();
    let all = [ContrastMode::None, ContrastMode::Soft, ContrastMode::Hard];

    // Ideal: no errors at any radius that leaves positives.
    let (m, s) = synthetic(SyntheticMode::Ideal, 3, 3, 64, 11, VariantSet::Both);
    let specs = full_grid(&m, 10, &all);
    let results = run_specs(&s, &m, &specs, &TileConfig::default()).map_err(|e| e.to_string())?;
    let wrong: usize = results.iter().map(SpecResult::n_incorrect).sum();
    ensure(wrong == 0, || format!("ideal store: {wrong} errors"))?;
    let scored: usize = results.iter().map(SpecResult::n_scored).sum();

    // Planted distractor at index distance 3.
    let base = build_manifest(&DatasetConfig::uniform(3, 2, VariantSet::OriginalOnly)).map_err(|e| e.to_string())?;
    let reference = base.id(base.row(Variant::Original, 0, vt("pw"), 2).unwrap()).clone();
    let distractor = base.id(base.row(Variant::Original, 2, vt("x"), 6).unwrap()).clone();
    let (m, s) = synthetic(
        SyntheticMode::PlantedDistractor {
            reference: reference.clone(),
            distractor: distractor.clone(),
            distance: 3,
            lambda: 0.4,
        },
        3,
        2,
        96,
        5,
        VariantSet::OriginalOnly,
    );
    let specs = full_grid(&m, 9, &[ContrastMode::None]);
    let results = run_specs(&s, &m, &specs, &TileConfig::default()).map_err(|e| e.to_string())?;
    for r in &results {
        for o in &r.outcomes {
            let planted = o.reference == reference;
            let expect_error = planted && matches!(r.spec.radius, ExclusionRadius::Within(k) if k >= 3);
            if o.correct() == expect_error {
                return Err(format!(
                    "planted store: {} at {} level {} radius {} is {}",
                    o.reference,
                    r.spec.vt,
                    r.spec.level.as_str(),
                    r.spec.radius,
                    if o.correct() { "correct" } else { "wrong" }
                ));
            }
            if expect_error && o.top_negative.as_ref().map(|n| &n.id) != Some(&distractor) {
                return Err(format!("planted error at radius {} is not the distractor", r.spec.radius));
            }
        }
    }
    let planted_errors: usize = results.iter().map(SpecResult::n_incorrect).sum();

    // Tuned decay: every series reproduces exp(-lambda |i - j|).
    let lambda = 0.5;
    let (m, s) = synthetic(SyntheticMode::TunedDecay { lambda }, 2, 2, 64, 3, VariantSet::OriginalOnly);
    let mut worst: f64 = 0.0;
    for o in 0..m.n_objects() {
        for &v in enumerate_vts() {
            let t = tuning_curve(&s, &m, o, v, Variant::Original).map_err(|e| e.to_string())?;
            for (i, row) in t.iter().enumerate() {
                for (j, &x) in row.iter().enumerate() {
                    worst = worst.max((x - (-lambda * (i as f64 - j as f64).abs()).exp()).abs());
                }
            }
        }
    }
    ensure(worst <= 1e-5, || format!("tuned decay deviates by {worst:e}"))?;
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!(
        "ideal 0/{scored} wrong; planted errors only at r>=3 ({planted_errors}); decay max dev {worst:.1e}; {:.2?}",
        start.elapsed()
    ))
}

fn peak_memory_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

fn bits(results: &[SpecResult]) -> Vec<(String, u64, Option<u64>, bool, u32, u32)> {
    results
        .iter()
        .flat_map(|r| {
            r.outcomes.iter().map(|o| {
                (
                    format!("{}/{:?}/{}/{}", o.reference, o.spec.level, o.spec.radius, o.top_positive.id),
                    o.top_positive.score.to_bits(),
                    o.top_negative.as_ref().map(|n| n.score.to_bits()),
                    o.correct(),
                    o.object_rank,
                    o.category_rank,
                )
            })
        })
        .collect()
}

fn determinism_and_performance() -> Check {
    let start = Instant::now();
    let small = std::env::var_os("SHAPEY_ACCEPTANCE_SMALL").is_some();
    let (categories, objects, dim) = if small { (4, 5, 64) } else { (20, 10, 2048) };
    let (m, s) = synthetic(SyntheticMode::Random, categories, objects, dim, 2024, VariantSet::OriginalOnly);
    let generated = start.elapsed();
    let map = Arc::new(CategoryMap::from_manifest(&m));
    let specs = spec_grid(vt("pw"), &radii(5), &[Level::Object, Level::Category], &[ContrastMode::None], &map)
        .map_err(|e| e.to_string())?;
    let configs = [
        TileConfig { ref_tile: 32, cand_tile: 64, workers: 1 },
        TileConfig { ref_tile: 32, cand_tile: 64, workers: 4 },
        TileConfig { ref_tile: 32, cand_tile: 64, workers: 8 },
        TileConfig { ref_tile: 7, cand_tile: 1000, workers: 8 },
        TileConfig { ref_tile: 100, cand_tile: 13, workers: 4 },
    ];
    let mut baseline = None;
    let mut timings = Vec::new();
    for tiles in &configs {
        let t = Instant::now();
        let results = run_specs(&s, &m, &specs, tiles).map_err(|e| e.to_string())?;
        timings.push(t.elapsed());
        let fingerprint = bits(&results);
        match &baseline {
            None => baseline = Some((results, fingerprint)),
            Some((base, base_bits)) => {
                ensure(*base == results && *base_bits == fingerprint, || {
                    format!("results differ under {tiles:?}")
                })?;
            }
        }
    }
    let peak = peak_memory_bytes().unwrap_or(0);
    ensure(peak < 8 << 30, || format!("peak memory {peak} bytes"))?;
    // The time limit applies to one full evaluation on an 8-core machine;
    // here the slowest single pass must fit, whatever the core count.
    let slowest = timings.iter().max().copied().unwrap_or_default();
    within(generated + slowest, Duration::from_secs(30 * 60))?;
    let secs: Vec<String> = timings.iter().map(|t| format!("{:.1}s", t.as_secs_f64())).collect();
    Ok(format!(
        "{} x {dim}{}: identical across 5 tile/worker configs; passes [{}]; generation {:.1}s; peak {:.2} GB; {} cores",
        m.len(),
        if small { " (reduced)" } else { "" },
        secs.join(", "),
        generated.as_secs_f64(),
        peak as f64 / f64::from(1u32 << 30),
        std::thread::available_parallelism().map_or(1, |n| n.get())
    ))
}

fn randomized_category_control_check() -> Check {
    let start = Instant::now();
    let (m, s) = synthetic(SyntheticMode::Random, 4, 3, 16, 77, VariantSet::OriginalOnly);
    let tiles = TileConfig::default();
    let singleton = Arc::new(CategoryMap::singleton(m.n_objects()));
    let manifest_map = Arc::new(CategoryMap::from_manifest(&m));
    let mut compared = 0;
    for &v in enumerate_vts() {
        let control = run_specs(
            &s,
            &m,
            &spec_grid(v, &radii(5), &[Level::Category], &[ContrastMode::None], &singleton).unwrap(),
            &tiles,
        )
        .map_err(|e| e.to_string())?;
        let object = run_specs(
            &s,
            &m,
            &spec_grid(v, &radii(5), &[Level::Object], &[ContrastMode::None], &manifest_map).unwrap(),
            &tiles,
        )
        .map_err(|e| e.to_string())?;
        let (c, o) = (&error_curves(&control)[0], &error_curves(&object)[0]);
        ensure(c.points == o.points, || format!("{v}: singleton control {:?} vs object {:?}", c.points, o.points))?;
        compared += c.points.len();
    }

    let (m, s) = synthetic(SyntheticMode::Ideal, 10, 2, 64, 78, VariantSet::OriginalOnly);
    let mut grouped = 0;
    for v in [vt("x"), vt("pw"), vt("xyprw")] {
        let curve = randomized_category_control(&s, &m, v, &radii(5), 10, 9, &tiles).map_err(|e| e.to_string())?;
        ensure(
            curve.points.iter().all(|p| p.error_rate.is_none_or(|r| r == 0.0)),
            || format!("{v}: randomized control on ideal store {:?}", curve.points),
        )?;
        grouped += curve.points.len();
    }
    Ok(format!(
        "singleton control equals object level at {compared} points; groups of 10 on ideal store 0 error at {grouped} points; {:.2?}",
        start.elapsed()
    ))
}

fn report_consistency() -> Check {
    let start = Instant::now();
    let (m, s) = synthetic(SyntheticMode::Random, 4, 3, 16, 31, VariantSet::Both);
    let contrasts = [ContrastMode::None, ContrastMode::Soft, ContrastMode::Hard];
    let specs = full_grid(&m, 5, &contrasts);
    let results = run_specs(&s, &m, &specs, &TileConfig::default()).map_err(|e| e.to_string())?;
    let curves = error_curves(&results);
    let mut rates_checked = 0;
    for c in &curves {
        let outcomes: Vec<_> = results
            .iter()
            .filter(|r| r.spec.vt == c.vt && r.spec.level == c.level && r.spec.contrast == c.contrast)
            .flat_map(|r| r.outcomes.iter().cloned())
            .collect();
        let rates = below_diagonal_rates(&scatter_data(&outcomes));
        for p in &c.points {
            let from_scatter = rates.iter().find(|(k, _)| k.radius == p.radius).map(|(_, r)| *r);
            ensure(from_scatter == p.error_rate, || {
                format!("{}/{}/{} r={}: scatter {from_scatter:?} vs curve {:?}", c.vt, c.level.as_str(), c.contrast.as_str(), p.radius, p.error_rate)
            })?;
            rates_checked += 1;
        }
    }

    let map = Arc::new(CategoryMap::from_manifest(&m));
    let mut maxima_checked = 0;
    let mut worst: f64 = 0.0;
    for &v in &[vt("x"), vt("pw"), vt("yr")] {
        for &contrast in &contrasts {
            for level in [Level::Object, Level::Category] {
                let mut rs = radii(5);
                if contrast != ContrastMode::None {
                    rs.insert(0, ExclusionRadius::Off);
                }
                let spec = ExclusionSpec::new(v, rs[0], level, contrast, map.clone()).unwrap();
                for object in [0, 7] {
                    for index in [1, 6, 10] {
                        let reference = m.id(m.row(Variant::Original, object, v, index).unwrap()).clone();
                        let h = score_histograms(&s, &m, &reference, &spec, &rs, 100).map_err(|e| e.to_string())?;
                        for &r in &rs {
                            let key = h.key(r);
                            let result = results.iter().find(|x| x.spec == key).ok_or("missing spec")?;
                            match result.outcomes.iter().find(|o| o.reference == reference) {
                                Some(o) => {
                                    let pos = h.top_positive(r).ok_or("empty positive histogram")?;
                                    let neg = h.top_negative().ok_or("empty negative histogram")?;
                                    let d = (pos - o.top_positive.score)
                                        .abs()
                                        .max((neg - o.top_negative.as_ref().unwrap().score).abs());
                                    worst = worst.max(d);
                                    maxima_checked += 1;
                                }
                                None => ensure(h.top_positive(r).is_none(), || "skipped reference has positives".into())?,
                            }
                        }
                    }
                }
            }
        }
    }
    ensure(worst <= 1e-9, || format!("histogram maxima deviate by {worst:e}"))?;
    Ok(format!(
        "{rates_checked} scatter rates equal curves; {maxima_checked} histogram maxima within {worst:.1e}; {:.2?}",
        start.elapsed()
    ))
}

fn main() {
    let checks: [(&str, fn() -> Check); 7] = [
        ("manifest combinatorics", manifest_combinatorics),
        ("exclusion semantics", exclusion_semantics),
        ("oracle equivalence", oracle_equivalence),
        ("analytic constructions", analytic_constructions),
        ("determinism and performance", determinism_and_performance),
        ("randomized-category control", randomized_category_control_check),
        ("report consistency", report_consistency),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("PASS {name}: {detail}"),
            Ok(Err(reason)) => {
                failed += 1;
                println!("FAIL {name}: {reason}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL {name}: panicked");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
