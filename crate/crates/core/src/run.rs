//! A complete evaluation run: load, validate, match, write the bundle.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dataset::{build_manifest, enumerate_vts, DatasetConfig, ImageId, Manifest, Variant, Vt, ORIGIN_INDEX};
use crate::error::{Error, Result};
use crate::exclusion::{candidate_pool, CategoryMap, ContrastMode, ExclusionRadius, ExclusionSpec, Level};
use crate::report::{self, PanelFile, PanelSection, PanelSelection, ScoreHistograms};
use crate::scoring::{error_curves, run_specs, spec_grid, ErrorCurve, SpecResult};
use crate::similarity::{tuning_curve, TileConfig};
use crate::store::{read_embeddings, validate_against_manifest, EmbeddingStore};

/// `all`, or an explicit list of VTs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VtSelection {
    All,
    List(Vec<Vt>),
}

impl VtSelection {
    pub fn resolve(&self) -> Vec<Vt> {
        match self {
            VtSelection::All => enumerate_vts().to_vec(),
            VtSelection::List(v) => v.clone(),
        }
    }
}

impl fmt::Display for VtSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VtSelection::All => f.write_str("all"),
            VtSelection::List(v) => {
                let names: Vec<String> = v.iter().map(|vt| vt.to_string()).collect();
                f.write_str(&names.join(","))
            }
        }
    }
}

impl FromStr for VtSelection {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "all" {
            return Ok(VtSelection::All);
        }
        let vts = s
            .split(',')
            .map(|p| p.trim().parse::<Vt>().map_err(|e| format!("bad VT `{p}`: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(VtSelection::List(vts))
    }
}

impl Serialize for VtSelection {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for VtSelection {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub embeddings: PathBuf,
    pub index: PathBuf,
    /// Manifest JSON; the default dataset when absent.
    pub manifest: Option<PathBuf>,
    pub vts: VtSelection,
    pub radii: Vec<ExclusionRadius>,
    pub levels: Vec<Level>,
    pub contrasts: Vec<ContrastMode>,
    pub out_dir: PathBuf,
    pub workers: usize,
    pub seed: u64,
    /// Group size for the randomized-category control; no control when absent.
    pub control_group_size: Option<usize>,
    /// References for score histograms; the origin view of the first object
    /// per VT when empty.
    pub histogram_references: Vec<ImageId>,
    pub histogram_bins: usize,
    pub panel_rows: usize,
    pub panel_groups: usize,
    pub panel_selection: PanelSelection,
    pub images_dir: Option<PathBuf>,
    /// Objects (from the first) whose tuning curves are written per VT.
    pub tuning_objects: usize,
    /// Reference whose candidate masks are dumped for inspection.
    pub dump_mask: Option<ImageId>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let empty = |what: &str| Err(Error::Config(format!("no {what} requested")));
        if self.radii.is_empty() {
            return empty("radii");
        }
        if self.levels.is_empty() {
            return empty("levels");
        }
        if self.contrasts.is_empty() {
            return empty("contrast modes");
        }
        if let VtSelection::List(v) = &self.vts {
            if v.is_empty() {
                return empty("VTs");
            }
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.histogram_bins == 0 {
            return Err(Error::Config("histogram bins must be at least 1".into()));
        }
        if self.control_group_size == Some(0) {
            return Err(Error::Config("control group size must be at least 1".into()));
        }
        if self.radii.contains(&ExclusionRadius::Off) && self.contrasts.iter().all(|c| *c == ContrastMode::None) {
            return Err(Error::Config(
                "radius `none` needs a contrast mode other than `none`".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct Metadata {
    created_unix_seconds: u64,
    version: &'static str,
    rows: usize,
    dim: usize,
}

pub struct RunOutput {
    pub results: Vec<SpecResult>,
    pub curves: Vec<ErrorCurve>,
    pub files: Vec<PathBuf>,
}

pub fn load_manifest(path: Option<&Path>) -> Result<Manifest> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Manifest::from_json(&text)
        }
        None => build_manifest(&DatasetConfig::default()),
    }
}

/// Read, validate, normalize and align a store to `manifest`.
pub fn load_store(embeddings: &Path, index: &Path, manifest: &Manifest) -> Result<EmbeddingStore> {
    let store = read_embeddings(embeddings, index)?;
    let report = validate_against_manifest(&store, manifest);
    if !report.is_ok() {
        return Err(Error::Mismatch(report.summary()));
    }
    store.normalize()?.align(manifest)
}

pub fn execute(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let manifest = load_manifest(config.manifest.as_deref())?;
    let store = load_store(&config.embeddings, &config.index, &manifest)?;
    execute_with(config, &manifest, &store)
}

/// Run against an already loaded store, aligned and normalized.
pub fn execute_with(config: &RunConfig, manifest: &Manifest, store: &EmbeddingStore) -> Result<RunOutput> {
    config.validate()?;
    for id in config.histogram_references.iter().chain(&config.dump_mask) {
        if manifest.row_of(id).is_none() {
            return Err(Error::UnknownImage(id.to_string()));
        }
        if id.variant != Variant::Original {
            return Err(Error::Config(format!("reference `{id}` must be an original-variant view")));
        }
    }
    let tiles = TileConfig::with_workers(config.workers);
    let categories = Arc::new(CategoryMap::from_manifest(manifest));
    let control = config
        .control_group_size
        .map(|g| CategoryMap::randomized(manifest, g, config.seed).map(Arc::new))
        .transpose()?;
    let vts = config.vts.resolve();

    let mut specs = Vec::new();
    for &vt in &vts {
        specs.extend(spec_grid(vt, &config.radii, &config.levels, &config.contrasts, &categories)?);
        if let Some(map) = &control {
            specs.extend(spec_grid(vt, &config.radii, &[Level::Category], &[ContrastMode::None], map)?);
        }
    }
    let mut results = run_specs(store, manifest, &specs, &tiles)?;
    report::sort_results(&mut results);

    let out = &config.out_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut files = Vec::new();
    let path = out.join("config.json");
    report::write_json(&path, config)?;
    files.push(path);
    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let path = out.join("metadata.json");
    report::write_json(
        &path,
        &Metadata {
            created_unix_seconds: created,
            version: env!("CARGO_PKG_VERSION"),
            rows: store.len(),
            dim: store.dim(),
        },
    )?;
    files.push(path);
    report::write_results(out, &results)?;
    files.push(out.join(report::OUTCOMES_FILE));
    files.push(out.join(report::SKIPPED_FILE));
    files.extend(report::write_outcome_reports(out, &results)?);

    let mut histograms: Vec<ScoreHistograms> = Vec::new();
    for &vt in &vts {
        let refs: Vec<ImageId> = if config.histogram_references.is_empty() {
            let row = manifest
                .row(Variant::Original, 0, vt, ORIGIN_INDEX)
                .expect("original variant present");
            vec![manifest.id(row).clone()]
        } else {
            config.histogram_references.iter().filter(|r| r.vt == vt).cloned().collect()
        };
        for reference in &refs {
            for &contrast in &config.contrasts {
                let radii: Vec<ExclusionRadius> = config
                    .radii
                    .iter()
                    .copied()
                    .filter(|r| *r != ExclusionRadius::Off || contrast != ContrastMode::None)
                    .collect();
                for &level in &config.levels {
                    let spec = ExclusionSpec::new(vt, radii[0], level, contrast, categories.clone())?;
                    histograms.push(report::score_histograms(
                        store,
                        manifest,
                        reference,
                        &spec,
                        &radii,
                        config.histogram_bins,
                    )?);
                }
            }
        }

        for &radius in &config.radii {
            let mut sections = Vec::new();
            for &contrast in &config.contrasts {
                if radius == ExclusionRadius::Off && contrast == ContrastMode::None {
                    continue;
                }
                for &level in &config.levels {
                    let spec = ExclusionSpec::new(vt, radius, level, contrast, categories.clone())?;
                    let outcomes = results
                        .iter()
                        .find(|r| r.spec == (&spec).into())
                        .map(|r| r.outcomes.as_slice())
                        .unwrap_or_default();
                    let rows = report::error_panel(
                        outcomes,
                        store,
                        manifest,
                        &spec,
                        config.panel_rows,
                        config.panel_groups,
                        config.panel_selection,
                    )?;
                    sections.push(PanelSection {
                        level,
                        contrast,
                        grouping: categories.label().to_string(),
                        rows,
                    });
                }
            }
            let panel = PanelFile {
                vt,
                radius,
                selection: config.panel_selection,
                sections,
            };
            files.extend(report::write_panel(out, &panel, config.images_dir.as_deref())?);
        }

        if config.tuning_objects > 0 {
            let tuning: report::TuningCurves = (0..config.tuning_objects.min(manifest.n_objects()))
                .map(|o| Ok((manifest.object_name(o), tuning_curve(store, manifest, o, vt, Variant::Original)?)))
                .collect::<Result<_>>()?;
            files.extend(report::write_tuning(out, vt, &tuning)?);
        }
    }
    files.extend(report::write_histograms(out, &histograms)?);

    if let Some(reference) = &config.dump_mask {
        let mut dumps = Vec::new();
        for spec in specs.iter().filter(|s| s.vt == reference.vt) {
            dumps.push((crate::scoring::SpecKey::from(spec), candidate_pool(manifest, reference, spec)?.dump(manifest)));
        }
        let path = out.join("masks").join(format!("{reference}.json"));
        report::write_json(&path, &dumps)?;
        files.push(path);
    }

    let curves = error_curves(&results);
    Ok(RunOutput { results, curves, files })
}
