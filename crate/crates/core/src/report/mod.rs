//! Diagnostic artifacts derived from outcomes and scores, and the on-disk
//! report bundle.

pub mod histograms;
pub mod panel;
pub mod scatter;
pub mod svg;

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use histograms::{score_histograms, Histogram, ScoreHistograms, DEFAULT_BINS};
pub use panel::{error_panel, panel_layout, ErrorPanelRow, GridCell, PanelSelection, DEFAULT_PANEL_GROUPS};
pub use scatter::{below_diagonal_rates, scatter_data, ScatterPoint};

use crate::dataset::{ImageId, Vt, VIEWS_PER_SERIES};
use crate::error::{Error, Result};
use crate::scoring::{error_curves, rank_histogram, ErrorCurve, MatchOutcome, SpecKey, SpecResult, RANK_BUCKETS};

pub const OUTCOMES_FILE: &str = "outcomes.jsonl";
pub const SKIPPED_FILE: &str = "skipped.jsonl";
pub const CURVES_FILE: &str = "curves.csv";
pub const RANKS_FILE: &str = "ranks.csv";

/// Canonical ordering of results in a bundle.
pub fn sort_results(results: &mut [SpecResult]) {
    results.sort_by(|a, b| spec_order(&a.spec).cmp(&spec_order(&b.spec)));
}

fn spec_order(k: &SpecKey) -> impl Ord + '_ {
    (k.vt.position(), k.grouping.as_str(), k.contrast, k.level, k.radius)
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<fs::File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn rate(v: Option<f64>) -> String {
    v.map(|r| r.to_string()).unwrap_or_default()
}

#[derive(Serialize, Deserialize)]
struct SkippedLine {
    reference: ImageId,
    #[serde(flatten)]
    spec: SpecKey,
}

/// Outcomes one JSON object per line, and skipped references likewise.
pub fn write_results(dir: &Path, results: &[SpecResult]) -> Result<()> {
    for (name, skipped) in [(OUTCOMES_FILE, false), (SKIPPED_FILE, true)] {
        let path = dir.join(name);
        let mut w = create(&path)?;
        for r in results {
            if skipped {
                for reference in &r.skipped {
                    let line = SkippedLine {
                        reference: reference.clone(),
                        spec: r.spec.clone(),
                    };
                    writeln!(w, "{}", serde_json::to_string(&line)?).map_err(|e| Error::io(&path, e))?;
                }
            } else {
                for o in &r.outcomes {
                    writeln!(w, "{}", serde_json::to_string(o)?).map_err(|e| Error::io(&path, e))?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path, mut f: impl FnMut(T)) -> Result<()> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: format!("line {}: {e}", n + 1),
        })?;
        f(value);
    }
    Ok(())
}

/// Rebuild per-spec results from a bundle's outcome and skipped files.
pub fn read_results(dir: &Path) -> Result<Vec<SpecResult>> {
    let mut results: Vec<SpecResult> = Vec::new();
    let slot = |spec: &SpecKey, results: &mut Vec<SpecResult>| -> usize {
        match results.iter().rposition(|r| r.spec == *spec) {
            Some(i) => i,
            None => {
                results.push(SpecResult {
                    spec: spec.clone(),
                    outcomes: Vec::new(),
                    skipped: Vec::new(),
                });
                results.len() - 1
            }
        }
    };
    let mut outcomes: Vec<MatchOutcome> = Vec::new();
    read_lines(&dir.join(OUTCOMES_FILE), |o: MatchOutcome| outcomes.push(o))?;
    for o in outcomes {
        let i = slot(&o.spec, &mut results);
        results[i].outcomes.push(o);
    }
    let skipped_path = dir.join(SKIPPED_FILE);
    if skipped_path.exists() {
        let mut skipped: Vec<SkippedLine> = Vec::new();
        read_lines(&skipped_path, |s: SkippedLine| skipped.push(s))?;
        for s in skipped {
            let i = slot(&s.spec, &mut results);
            results[i].skipped.push(s.reference);
        }
    }
    sort_results(&mut results);
    Ok(results)
}

pub fn write_curves_csv(path: &Path, curves: &[ErrorCurve]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["vt", "level", "contrast", "grouping", "radius", "error", "scored", "skipped", "ties"])?;
    for c in curves {
        for p in &c.points {
            w.write_record([
                c.vt.to_string(),
                c.level.as_str().into(),
                c.contrast.as_str().into(),
                c.grouping.clone(),
                p.radius.to_string(),
                rate(p.error_rate),
                p.scored.to_string(),
                p.skipped.to_string(),
                p.ties.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Rank histograms, buckets 0..=9 and 10+.
pub fn write_ranks_csv(path: &Path, results: &[SpecResult]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = ["vt", "level", "contrast", "grouping", "radius"].map(String::from).to_vec();
    header.extend((0..RANK_BUCKETS - 1).map(|r| format!("rank{r}")));
    header.push(format!("rank{}plus", RANK_BUCKETS - 1));
    w.write_record(&header)?;
    for r in results {
        let mut row = vec![
            r.spec.vt.to_string(),
            r.spec.level.as_str().into(),
            r.spec.contrast.as_str().into(),
            r.spec.grouping.clone(),
            r.spec.radius.to_string(),
        ];
        row.extend(rank_histogram(&r.outcomes).iter().map(|c| c.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_scatter_csv(path: &Path, points: &[ScatterPoint]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "reference",
        "level",
        "contrast",
        "grouping",
        "radius",
        "top_negative",
        "top_positive",
        "below_diagonal",
    ])?;
    for p in points {
        w.write_record([
            p.reference.to_string(),
            p.spec.level.as_str().into(),
            p.spec.contrast.as_str().into(),
            p.spec.grouping.clone(),
            p.spec.radius.to_string(),
            rate(p.top_negative),
            p.top_positive.to_string(),
            p.below_diagonal().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub type TuningCurves = Vec<(String, [[f64; VIEWS_PER_SERIES]; VIEWS_PER_SERIES])>;

/// Files derived from outcomes alone: curves, ranks, scatter data and their
/// plots. Returns the files written. With no results nothing is written.
pub fn write_outcome_reports(dir: &Path, results: &[SpecResult]) -> Result<Vec<PathBuf>> {
    if results.is_empty() {
        return Ok(Vec::new());
    }
    let mut written = Vec::new();
    let curves = error_curves(results);
    let path = dir.join(CURVES_FILE);
    write_curves_csv(&path, &curves)?;
    written.push(path);
    let path = dir.join(RANKS_FILE);
    write_ranks_csv(&path, results)?;
    written.push(path);

    let mut vts: Vec<Vt> = results.iter().map(|r| r.spec.vt).collect();
    vts.dedup();
    for vt in vts {
        let outcomes: Vec<MatchOutcome> = results
            .iter()
            .filter(|r| r.spec.vt == vt)
            .flat_map(|r| r.outcomes.iter().cloned())
            .collect();
        let points = scatter_data(&outcomes);
        let path = dir.join(format!("scatter-{vt}.csv"));
        write_scatter_csv(&path, &points)?;
        written.push(path);
        let path = dir.join("plots").join(format!("scatter-{vt}.svg"));
        write_text(&path, &svg::scatter_svg(&points, &format!("{vt}: top positive vs top negative")))?;
        written.push(path);
    }
    written.extend(emit_curve_plots(&dir.join("plots"), &curves)?);
    Ok(written)
}

/// One plot per (vt, contrast), one polyline per level and grouping.
/// An empty curve set writes nothing.
pub fn emit_curve_plots(plots_dir: &Path, curves: &[ErrorCurve]) -> Result<Vec<PathBuf>> {
    let mut keys: Vec<(Vt, crate::ContrastMode)> = curves.iter().map(|c| (c.vt, c.contrast)).collect();
    keys.sort_by_key(|(vt, c)| (vt.position(), *c));
    keys.dedup();
    let mut written = Vec::new();
    for (vt, contrast) in keys {
        let group: Vec<&ErrorCurve> = curves.iter().filter(|c| c.vt == vt && c.contrast == contrast).collect();
        let path = plots_dir.join(format!("curves-{vt}-{}.svg", contrast.as_str()));
        let title = format!("{vt}: error vs exclusion radius (contrast {})", contrast.as_str());
        write_text(&path, &svg::curves_svg(&group, &title))?;
        written.push(path);
    }
    Ok(written)
}

pub fn write_histograms(dir: &Path, histograms: &[ScoreHistograms]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut refs: Vec<&ImageId> = histograms.iter().map(|h| &h.reference).collect();
    refs.dedup();
    for reference in refs {
        let mine: Vec<&ScoreHistograms> = histograms.iter().filter(|h| &h.reference == reference).collect();
        let path = dir.join("histograms").join(format!("{reference}.json"));
        write_json(&path, &mine)?;
        written.push(path);
        for h in mine {
            let path = dir.join("plots").join(format!(
                "histogram-{reference}-{}-{}.svg",
                h.level.as_str(),
                h.contrast.as_str()
            ));
            write_text(&path, &svg::histogram_svg(h))?;
            written.push(path);
        }
    }
    Ok(written)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanelSection {
    pub level: crate::Level,
    pub contrast: crate::ContrastMode,
    pub grouping: String,
    pub rows: Vec<ErrorPanelRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanelFile {
    pub vt: Vt,
    pub radius: crate::ExclusionRadius,
    pub selection: PanelSelection,
    pub sections: Vec<PanelSection>,
}

/// `panel-<vt>-r<k>.json`, plus `panel-<vt>-r<k>-grid.json` when an image
/// directory is configured.
pub fn write_panel(dir: &Path, panel: &PanelFile, images_dir: Option<&Path>) -> Result<Vec<PathBuf>> {
    let stem = format!("panel-{}-r{}", panel.vt, panel.radius);
    let path = dir.join(format!("{stem}.json"));
    write_json(&path, panel)?;
    let mut written = vec![path];
    if images_dir.is_some() {
        let grids: Vec<Vec<Vec<GridCell>>> = panel
            .sections
            .iter()
            .map(|s| panel_layout(&s.rows, images_dir))
            .collect();
        let path = dir.join(format!("{stem}-grid.json"));
        write_json(&path, &grids)?;
        written.push(path);
    }
    Ok(written)
}

pub fn write_tuning(dir: &Path, vt: Vt, curves: &TuningCurves) -> Result<Vec<PathBuf>> {
    #[derive(Serialize)]
    struct Entry<'a> {
        object: &'a str,
        matrix: &'a [[f64; VIEWS_PER_SERIES]; VIEWS_PER_SERIES],
    }
    let entries: Vec<Entry> = curves
        .iter()
        .map(|(object, matrix)| Entry { object, matrix })
        .collect();
    let path = dir.join(format!("tuning-{vt}.json"));
    write_json(&path, &entries)?;
    let plot = dir.join("plots").join(format!("tuning-{vt}.svg"));
    write_text(&plot, &svg::tuning_svg(curves, &format!("{vt}: tuning around the origin view")))?;
    Ok(vec![path, plot])
}
