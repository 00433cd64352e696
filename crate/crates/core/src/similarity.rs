//! Exact masked nearest-neighbor machinery over a normalized store.
//!
//! Scores are dot products of `f32` rows accumulated in `f64` with a fixed
//! lane order, so every (reference, candidate) score is a pure function of
//! the two rows. Tiles only change which scores are computed together,
//! never their values or the order in which a reference's sink sees them,
//! which makes results bit-identical across tile sizes and worker counts.

use std::cmp::Ordering;
use std::ops::Range;

use fixedbitset::FixedBitSet;
use rayon::prelude::*;

use crate::dataset::{Manifest, Variant, Vt, VIEWS_PER_SERIES};
use crate::error::{Error, Result};
use crate::store::EmbeddingStore;

const LANES: usize = 16;

#[inline(always)]
fn dot_lanes(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0f64; LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..LANES {
            acc[l] += f64::from(x[l]) * f64::from(y[l]);
        }
    }
    for (l, (x, y)) in ca.remainder().iter().zip(cb.remainder()).enumerate() {
        acc[l] += f64::from(*x) * f64::from(*y);
    }
    let mut width = LANES;
    while width > 1 {
        width /= 2;
        for l in 0..width {
            acc[l] += acc[l + width];
        }
    }
    acc[0]
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn dot_avx2(a: &[f32], b: &[f32]) -> f64 {
    dot_lanes(a, b)
}

/// Dot product with `f64` accumulation in a fixed summation order.
///
/// The AVX2 build runs the same operations in the same order (no fused
/// multiply-add), so both paths return identical bits.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2, checked just above.
            return unsafe { dot_avx2(a, b) };
        }
    }
    dot_lanes(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileConfig {
    pub ref_tile: usize,
    pub cand_tile: usize,
    pub workers: usize,
}

impl Default for TileConfig {
    fn default() -> Self {
        TileConfig {
            ref_tile: 32,
            cand_tile: 64,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

impl TileConfig {
    pub fn with_workers(workers: usize) -> Self {
        TileConfig {
            workers,
            ..TileConfig::default()
        }
    }

    fn check(&self) -> Result<()> {
        if self.ref_tile == 0 || self.cand_tile == 0 || self.workers == 0 {
            return Err(Error::Config(format!(
                "tile sizes and worker count must be at least 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Receives the scores of one reference against the rows it asked for,
/// in ascending row order.
pub trait ScoreSink {
    fn accept(&mut self, row: usize, score: f64);
}

/// Everything the kernel needs to score one reference.
pub struct ScanJob<S> {
    pub ref_row: usize,
    /// Rows to score; all others are skipped.
    pub interest: FixedBitSet,
    pub sink: S,
}

/// Run `build(i)` for each of `n_refs` references, score each against its
/// rows of interest, and map the finished sink through `finish`.
///
/// Work is split into reference tiles processed in parallel; within a tile,
/// candidate rows are visited tile by tile so the candidate block stays in
/// cache across the tile's references. Output order is reference order.
pub fn scan_references<S, R, B, F>(
    store: &EmbeddingStore,
    n_refs: usize,
    tiles: &TileConfig,
    build: B,
    finish: F,
) -> Result<Vec<R>>
where
    S: ScoreSink,
    R: Send,
    B: Fn(usize) -> ScanJob<S> + Sync,
    F: Fn(usize, S) -> R + Sync,
{
    tiles.check()?;
    let n_rows = store.len();
    let chunks: Vec<Range<usize>> = (0..n_refs)
        .step_by(tiles.ref_tile)
        .map(|s| s..(s + tiles.ref_tile).min(n_refs))
        .collect();
    let run_chunk = |range: Range<usize>| -> Vec<R> {
        let mut jobs: Vec<ScanJob<S>> = range.clone().map(&build).collect();
        let mut start = 0;
        while start < n_rows {
            let end = (start + tiles.cand_tile).min(n_rows);
            for job in jobs.iter_mut() {
                let query = store.row(job.ref_row);
                for row in start..end {
                    if job.interest.contains(row) {
                        job.sink.accept(row, dot(query, store.row(row)));
                    }
                }
            }
            start = end;
        }
        range.zip(jobs).map(|(i, job)| finish(i, job.sink)).collect()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(tiles.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let per_chunk: Vec<Vec<R>> = pool.install(|| chunks.into_par_iter().map(run_chunk).collect());
    Ok(per_chunk.into_iter().flatten().collect())
}

/// Descending score, then ascending row.
#[inline]
pub fn rank_order(a: (usize, f64), b: (usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Bounded top-k accumulator.
#[derive(Debug, Clone)]
pub struct TopK {
    k: usize,
    entries: Vec<(usize, f64)>,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        TopK {
            k,
            entries: Vec::with_capacity(k.min(1024)),
        }
    }

    pub fn push(&mut self, row: usize, score: f64) {
        if self.entries.len() == self.k {
            let worst = *self.entries.last().expect("k >= 1");
            if rank_order((row, score), worst) != Ordering::Less {
                return;
            }
            self.entries.pop();
        }
        let at = self
            .entries
            .partition_point(|&e| rank_order(e, (row, score)) == Ordering::Less);
        self.entries.insert(at, (row, score));
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.entries.first().copied()
    }

    pub fn into_entries(self) -> Vec<(usize, f64)> {
        self.entries
    }
}

impl ScoreSink for TopK {
    fn accept(&mut self, row: usize, score: f64) {
        self.push(row, score);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopKResult {
    pub reference: usize,
    /// `(row, score)` sorted by score descending, row ascending.
    pub entries: Vec<(usize, f64)>,
}

/// Exact top-`k` rows by dot product within each reference's mask.
pub fn masked_topk(
    store: &EmbeddingStore,
    refs: &[usize],
    masks: &[FixedBitSet],
    k: usize,
    tiles: &TileConfig,
) -> Result<Vec<TopKResult>> {
    if k < 1 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if refs.len() != masks.len() {
        return Err(Error::Config(format!(
            "{} references but {} masks",
            refs.len(),
            masks.len()
        )));
    }
    scan_references(
        store,
        refs.len(),
        tiles,
        |i| {
            let mut interest = masks[i].clone();
            interest.grow(store.len());
            ScanJob {
                ref_row: refs[i],
                interest,
                sink: TopK::new(k),
            }
        },
        |i, sink| TopKResult {
            reference: refs[i],
            entries: sink.into_entries(),
        },
    )
}

/// Dense block of scores between two row lists.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreBlock {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl ScoreBlock {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

pub fn pairwise_scores(store: &EmbeddingStore, rows_a: &[usize], rows_b: &[usize]) -> ScoreBlock {
    let mut data = Vec::with_capacity(rows_a.len() * rows_b.len());
    for &a in rows_a {
        let qa = store.row(a);
        data.extend(rows_b.iter().map(|&b| dot(qa, store.row(b))));
    }
    ScoreBlock {
        rows: rows_a.len(),
        cols: rows_b.len(),
        data,
    }
}

/// 11×11 similarities between the views of one object's series.
pub fn tuning_curve(
    store: &EmbeddingStore,
    manifest: &Manifest,
    object: usize,
    vt: Vt,
    variant: Variant,
) -> Result<[[f64; VIEWS_PER_SERIES]; VIEWS_PER_SERIES]> {
    let rows: Vec<usize> = (1..=VIEWS_PER_SERIES as u8)
        .map(|i| {
            manifest
                .row(variant, object, vt, i)
                .ok_or_else(|| Error::Mismatch(format!("object {object} has no {} rows", variant.as_str())))
        })
        .collect::<Result<_>>()?;
    let block = pairwise_scores(store, &rows, &rows);
    let mut out = [[0.0; VIEWS_PER_SERIES]; VIEWS_PER_SERIES];
    for (i, row) in out.iter_mut().enumerate() {
        row.copy_from_slice(block.row(i));
    }
    Ok(out)
}
