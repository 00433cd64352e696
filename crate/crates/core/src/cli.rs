//! Command-line entry point. `main` returns the process exit code:
//! 0 on success, 1 when a check finds failures, 2 on usage or input errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dataset::{build_manifest, DatasetConfig, ImageId, Manifest, VariantSet, Vt};
use crate::error::{Error, Result};
use crate::exclusion::{candidate_pool, CategoryMap, ContrastMode, ExclusionRadius, Level};
use crate::oracle::{brute_force_evaluate, diff_curves, diff_results};
use crate::report::{self, PanelSelection, DEFAULT_BINS, DEFAULT_PANEL_GROUPS};
use crate::run::{self, load_manifest, load_store, RunConfig, VtSelection};
use crate::scoring::{error_curves, run_specs, spec_grid};
use crate::similarity::TileConfig;
use crate::store::{read_embeddings, validate_against_manifest, write_embeddings};
use crate::synth::{generate, SyntheticConfig, SyntheticMode};

#[derive(Parser)]
#[command(name = "shapey", version, about = "Shape-recognition evaluation of embedding models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a dataset manifest as JSON.
    Manifest(ManifestArgs),
    /// Check an embedding file against a manifest.
    Validate(StoreArgs),
    /// Generate a synthetic embedding store.
    Synth(SynthArgs),
    /// Run the matching protocol and write a report bundle.
    Run(RunArgs),
    /// Compare the engine against the brute-force evaluator.
    Oracle(OracleArgs),
    /// Regenerate outcome-derived reports in an existing bundle.
    Report(ReportArgs),
    /// Measure matching throughput.
    Bench(BenchArgs),
}

#[derive(Args)]
struct ManifestArgs {
    /// The standard 20-category, 10-object dataset (the default).
    #[arg(long, conflicts_with_all = ["categories", "objects"])]
    default: bool,
    #[arg(long, requires = "objects")]
    categories: Option<usize>,
    #[arg(long, requires = "categories")]
    objects: Option<u8>,
    /// Include contrast-reversed views.
    #[arg(long)]
    contrast: bool,
    /// Output file; standard output when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct StoreArgs {
    #[arg(long)]
    embeddings: PathBuf,
    /// Index file; `<embeddings>.idx` when absent.
    #[arg(long)]
    index: Option<PathBuf>,
    /// Manifest JSON; the default dataset when absent.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

impl StoreArgs {
    fn index(&self) -> PathBuf {
        self.index.clone().unwrap_or_else(|| self.embeddings.with_extension("idx"))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Ideal,
    TunedDecay,
    PlantedDistractor,
    Random,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    categories: usize,
    #[arg(long, default_value_t = 3)]
    objects: u8,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    /// Decay rate for tuned-decay and planted-distractor modes.
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    /// Planted reference view.
    #[arg(long)]
    reference: Option<ImageId>,
    /// Planted foreign view.
    #[arg(long)]
    distractor: Option<ImageId>,
    /// Index distance at which the distractor starts to win.
    #[arg(long, default_value_t = 3)]
    distance: u8,
    /// Include contrast-reversed views.
    #[arg(long)]
    contrast: bool,
    /// Embedding file; the index and manifest are written next to it.
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Comma-separated VTs (e.g. `pw,x`) or `all`.
    #[arg(long, default_value = "all")]
    vts: VtSelection,
    /// Comma-separated radii; `none` disables the viewpoint exclusion.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5")]
    radii: Vec<ExclusionRadius>,
    #[arg(long, value_delimiter = ',', default_value = "object,category")]
    levels: Vec<Level>,
    #[arg(long, value_delimiter = ',', default_value = "none")]
    contrast: Vec<ContrastMode>,
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, env = "SHAPEY_WORKERS")]
    workers: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also run the randomized-category control with groups of this size.
    #[arg(long)]
    control_group_size: Option<usize>,
    /// Histogram references, comma-separated.
    #[arg(long, value_delimiter = ',')]
    histogram_refs: Vec<ImageId>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    #[arg(long, default_value_t = 20)]
    panel_rows: usize,
    #[arg(long, default_value_t = DEFAULT_PANEL_GROUPS)]
    panel_groups: usize,
    #[arg(long, default_value = "errors-only")]
    panel_selection: PanelSelection,
    /// Directory holding `<image-id>.png` files for panel layouts.
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    tuning_objects: usize,
    /// Write the candidate masks of this reference under `masks/`.
    #[arg(long)]
    dump_mask: Option<ImageId>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Size {
    Tiny,
    Small,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, value_enum, default_value = "tiny")]
    size: Size,
    #[arg(long, env = "SHAPEY_WORKERS")]
    workers: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Bundle directory containing `outcomes.jsonl`.
    #[arg(long)]
    bundle: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Embedding file; a random synthetic store when absent.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    categories: usize,
    #[arg(long, default_value_t = 10)]
    objects: u8,
    #[arg(long, default_value_t = 512)]
    dim: usize,
    #[arg(long, default_value = "pw")]
    vt: Vt,
    #[arg(long, env = "SHAPEY_WORKERS")]
    workers: Option<usize>,
}

fn workers(w: Option<usize>) -> usize {
    w.unwrap_or_else(|| TileConfig::default().workers)
}

/// Parse `args` (including the program name) and run.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Manifest(a) => manifest(a),
        Command::Validate(a) => validate(a),
        Command::Synth(a) => synth(a),
        Command::Run(a) => run_cmd(a),
        Command::Oracle(a) => oracle(a),
        Command::Report(a) => report_cmd(a),
        Command::Bench(a) => bench(a),
    }
}

fn variants(contrast: bool) -> VariantSet {
    if contrast {
        VariantSet::Both
    } else {
        VariantSet::OriginalOnly
    }
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => report::write_text(p, text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn manifest(a: ManifestArgs) -> Result<i32> {
    let mut config = match (a.categories, a.objects) {
        (Some(c), Some(o)) => DatasetConfig::uniform(c, o, VariantSet::OriginalOnly),
        _ => DatasetConfig::default(),
    };
    config.variants = variants(a.contrast);
    let m = build_manifest(&config)?;
    write_or_print(a.output.as_deref(), &m.to_json()?)?;
    if a.output.is_some() {
        eprintln!("{} ids, {} objects", m.len(), m.n_objects());
    }
    Ok(0)
}

fn validate(a: StoreArgs) -> Result<i32> {
    let manifest = load_manifest(a.manifest.as_deref())?;
    let store = read_embeddings(&a.embeddings, &a.index())?;
    let report = validate_against_manifest(&store, &manifest);
    println!("{}", report.summary());
    Ok(if report.is_ok() { 0 } else { 1 })
}

fn synth(a: SynthArgs) -> Result<i32> {
    let mode = match a.mode {
        ModeArg::Ideal => SyntheticMode::Ideal,
        ModeArg::Random => SyntheticMode::Random,
        ModeArg::TunedDecay => SyntheticMode::TunedDecay { lambda: a.lambda },
        ModeArg::PlantedDistractor => {
            let need = |v: Option<ImageId>, flag: &str| {
                v.ok_or_else(|| Error::Config(format!("planted-distractor mode needs --{flag}")))
            };
            SyntheticMode::PlantedDistractor {
                reference: need(a.reference, "reference")?,
                distractor: need(a.distractor, "distractor")?,
                distance: a.distance,
                lambda: a.lambda,
            }
        }
    };
    let config = SyntheticConfig {
        categories: a.categories,
        objects_per_category: a.objects,
        dim: a.dim,
        seed: a.seed,
        variants: variants(a.contrast),
        mode,
    };
    let (m, store) = generate(&config)?;
    let index = a.output.with_extension("idx");
    let manifest_path = a.output.with_extension("manifest.json");
    write_embeddings(&store, &a.output, &index)?;
    report::write_text(&manifest_path, &m.to_json()?)?;
    eprintln!(
        "wrote {} rows of dim {} to {}, {}, {}",
        store.len(),
        store.dim(),
        a.output.display(),
        index.display(),
        manifest_path.display()
    );
    Ok(0)
}

fn run_cmd(a: RunArgs) -> Result<i32> {
    let index = a.index.unwrap_or_else(|| a.embeddings.with_extension("idx"));
    let config = RunConfig {
        embeddings: a.embeddings,
        index,
        manifest: a.manifest,
        vts: a.vts,
        radii: a.radii,
        levels: a.levels,
        contrasts: a.contrast,
        out_dir: a.out,
        workers: workers(a.workers),
        seed: a.seed,
        control_group_size: a.control_group_size,
        histogram_references: a.histogram_refs,
        histogram_bins: a.bins,
        panel_rows: a.panel_rows,
        panel_groups: a.panel_groups,
        panel_selection: a.panel_selection,
        images_dir: a.images,
        tuning_objects: a.tuning_objects,
        dump_mask: a.dump_mask,
    };
    let out = run::execute(&config)?;
    for c in &out.curves {
        let rates: Vec<String> = c
            .points
            .iter()
            .map(|p| match p.error_rate {
                Some(r) => format!("{}:{r:.4}", p.radius),
                None => format!("{}:-", p.radius),
            })
            .collect();
        println!(
            "{} {} {} {}: {}",
            c.vt,
            c.level.as_str(),
            c.contrast.as_str(),
            c.grouping,
            rates.join(" ")
        );
    }
    eprintln!("wrote {} files to {}", out.files.len(), config.out_dir.display());
    Ok(0)
}

fn oracle_instance(size: Size, seed: u64) -> SyntheticConfig {
    let (categories, objects, dim) = match size {
        Size::Tiny => (2, 2, 8),
        Size::Small => (4, 3, 16),
    };
    SyntheticConfig {
        categories,
        objects_per_category: objects,
        dim,
        seed,
        variants: VariantSet::Both,
        mode: SyntheticMode::Random,
    }
}

fn oracle(a: OracleArgs) -> Result<i32> {
    let (m, store) = generate(&oracle_instance(a.size, a.seed))?;
    let map = Arc::new(CategoryMap::from_manifest(&m));
    let mut radii = vec![ExclusionRadius::Off];
    radii.extend((0..=5).map(ExclusionRadius::Within));
    let mut specs = Vec::new();
    for &vt in crate::enumerate_vts() {
        specs.extend(spec_grid(
            vt,
            &radii,
            &[Level::Object, Level::Category],
            &[ContrastMode::None, ContrastMode::Soft, ContrastMode::Hard],
            &map,
        )?);
    }
    let engine = run_specs(&store, &m, &specs, &TileConfig::with_workers(workers(a.workers)))?;
    let brute = brute_force_evaluate(&store, &m, &specs)?;
    let mut diffs = diff_results(&engine, &brute.results, 1e-9);
    diffs.extend(diff_curves(&error_curves(&engine), &brute.curves));
    if diffs.is_empty() {
        println!("MATCH");
        Ok(0)
    } else {
        for d in diffs.iter().take(20) {
            println!("{d}");
        }
        println!("MISMATCH ({} differences)", diffs.len());
        Ok(1)
    }
}

fn report_cmd(a: ReportArgs) -> Result<i32> {
    let results = report::read_results(&a.bundle)?;
    let files = report::write_outcome_reports(&a.bundle, &results)?;
    if files.is_empty() {
        eprintln!("no outcomes in {}; nothing written", a.bundle.display());
    } else {
        eprintln!("wrote {} files to {}", files.len(), a.bundle.display());
    }
    Ok(0)
}

fn bench(a: BenchArgs) -> Result<i32> {
    let (m, store): (Manifest, _) = match &a.embeddings {
        Some(e) => {
            let m = load_manifest(a.manifest.as_deref())?;
            let index = a.index.clone().unwrap_or_else(|| e.with_extension("idx"));
            let s = load_store(e, &index, &m)?;
            (m, s)
        }
        None => generate(&SyntheticConfig {
            categories: a.categories,
            objects_per_category: a.objects,
            dim: a.dim,
            seed: 0,
            variants: VariantSet::OriginalOnly,
            mode: SyntheticMode::Random,
        })?,
    };
    let map = Arc::new(CategoryMap::from_manifest(&m));
    let radii: Vec<ExclusionRadius> = (0..=5).map(ExclusionRadius::Within).collect();
    let specs = spec_grid(a.vt, &radii, &[Level::Object, Level::Category], &[ContrastMode::None], &map)?;
    let refs = crate::exclusion::reference_set(&specs[0], &m);
    let mut pairs = 0u64;
    for r in &refs {
        let mut pool = fixedbitset::FixedBitSet::with_capacity(m.len());
        for s in &specs {
            pool.union_with(&candidate_pool(&m, r, s)?.pool());
        }
        pairs += pool.count_ones(..) as u64;
    }
    let tiles = TileConfig::with_workers(workers(a.workers));
    let start = Instant::now();
    run_specs(&store, &m, &specs, &tiles)?;
    let secs = start.elapsed().as_secs_f64();
    let flops = 2.0 * pairs as f64 * store.dim() as f64;
    println!(
        "{} references x {} specs, {} rows, dim {}, {} workers: {:.3} s, {:.1} references/s, {:.2} GFLOP/s",
        refs.len(),
        specs.len(),
        store.len(),
        store.dim(),
        tiles.workers,
        secs,
        refs.len() as f64 / secs,
        flops / secs / 1e9
    );
    Ok(0)
}
