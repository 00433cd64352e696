//! C interface to the shapey engine.
//!
//! Manifests and stores are opaque handles created by `*_new`/`*_load`
//! functions and released with the matching `*_free`. Every fallible call
//! returns a `ShapeyStatus`; on failure the message is available from
//! `shapey_last_error` on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::Arc;

use shapey::run::{load_manifest, load_store};
use shapey::synth::{generate, SyntheticConfig, SyntheticMode};
use shapey::{
    build_manifest, error_curves, run_specs, CategoryMap, ContrastMode, DatasetConfig, EmbeddingStore,
    Error, ExclusionRadius, ExclusionSpec, Level, Manifest, TileConfig, VariantSet, Vt,
};

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeyStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8, or an unparsable argument.
    InvalidArgument = 1,
    Io = 2,
    /// Malformed embedding, index or manifest file.
    Format = 3,
    /// Embeddings do not cover the manifest, or lack a needed variant.
    Mismatch = 4,
    Spec = 5,
    UnknownImage = 6,
    Infeasible = 7,
    /// A bug: the engine panicked.
    Internal = 8,
}

/// Dataset manifest handle.
pub struct ShapeyManifest(Manifest);

/// Normalized embedding store aligned to a manifest.
pub struct ShapeyStore(EmbeddingStore);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> ShapeyStatus {
    match e {
        Error::ParseId { .. } | Error::Config(_) => ShapeyStatus::InvalidArgument,
        Error::Io { .. } => ShapeyStatus::Io,
        Error::Format { .. } | Error::BadRow { .. } | Error::Json(_) | Error::Csv(_) => ShapeyStatus::Format,
        Error::Mismatch(_) => ShapeyStatus::Mismatch,
        Error::Spec(_) => ShapeyStatus::Spec,
        Error::UnknownImage(_) => ShapeyStatus::UnknownImage,
        Error::Infeasible(_) => ShapeyStatus::Infeasible,
    }
}

struct Fail(ShapeyStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(ShapeyStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ShapeyStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            ShapeyStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal error: the engine panicked");
            ShapeyStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(invalid(format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{name} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| invalid(format!("{name} is null")))
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| invalid(format!("{name} is null")))
}

fn variants(contrast: bool) -> VariantSet {
    if contrast {
        VariantSet::Both
    } else {
        VariantSet::OriginalOnly
    }
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer is valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn shapey_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn shapey_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// The standard dataset: 20 categories of 10 objects, original views only.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn shapey_manifest_default(out_manifest: *mut *mut ShapeyManifest) -> ShapeyStatus {
    guard(|| {
        let slot = out(out_manifest, "out_manifest")?;
        let m = build_manifest(&DatasetConfig::default())?;
        *slot = Box::into_raw(Box::new(ShapeyManifest(m)));
        Ok(())
    })
}

/// `categories` × `objects` manifest, with contrast-reversed views when `contrast`.
///
/// # Safety
/// `out_manifest` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn shapey_manifest_new(
    categories: usize,
    objects: u8,
    contrast: bool,
    out_manifest: *mut *mut ShapeyManifest,
) -> ShapeyStatus {
    guard(|| {
        let slot = out(out_manifest, "out_manifest")?;
        let m = build_manifest(&DatasetConfig::uniform(categories, objects, variants(contrast)))?;
        *slot = Box::into_raw(Box::new(ShapeyManifest(m)));
        Ok(())
    })
}

/// Load a manifest JSON file.
///
/// # Safety
/// `path` must be a nul-terminated string; `out_manifest` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn shapey_manifest_load(
    path: *const c_char,
    out_manifest: *mut *mut ShapeyManifest,
) -> ShapeyStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        let slot = out(out_manifest, "out_manifest")?;
        let m = load_manifest(Some(&path))?;
        *slot = Box::into_raw(Box::new(ShapeyManifest(m)));
        Ok(())
    })
}

/// Number of image ids; 0 for a null handle.
///
/// # Safety
/// `manifest` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn shapey_manifest_len(manifest: *const ShapeyManifest) -> usize {
    manifest.as_ref().map_or(0, |m| m.0.len())
}

/// Copy the id of `row` into `buf` (nul-terminated). `out_len` receives the
/// id length without the terminator, even when `buf` is too small.
///
/// # Safety
/// `manifest` must be a live handle, `buf` valid for `buf_len` bytes (or
/// null with `buf_len` 0), `out_len` null or valid.
#[no_mangle]
pub unsafe extern "C" fn shapey_manifest_id(
    manifest: *const ShapeyManifest,
    row: usize,
    buf: *mut c_char,
    buf_len: usize,
    out_len: *mut usize,
) -> ShapeyStatus {
    guard(|| {
        let m = &handle(manifest, "manifest")?.0;
        if row >= m.len() {
            return Err(invalid(format!("row {row} out of range (manifest has {} ids)", m.len())));
        }
        let id = m.id(row).to_string();
        if let Some(n) = out_len.as_mut() {
            *n = id.len();
        }
        if buf_len <= id.len() {
            return Err(invalid(format!("buffer of {buf_len} bytes cannot hold `{id}`")));
        }
        if buf.is_null() {
            return Err(invalid("buf is null"));
        }
        ptr::copy_nonoverlapping(id.as_ptr().cast::<c_char>(), buf, id.len());
        *buf.add(id.len()) = 0;
        Ok(())
    })
}

/// # Safety
/// `manifest` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn shapey_manifest_free(manifest: *mut ShapeyManifest) {
    if !manifest.is_null() {
        drop(Box::from_raw(manifest));
    }
}

/// Load an embedding file and its index, check them against `manifest`,
/// normalize, and reorder rows to manifest order.
///
/// # Safety
/// Strings must be nul-terminated; `manifest` a live handle; `out_store` valid.
#[no_mangle]
pub unsafe extern "C" fn shapey_store_load(
    embeddings_path: *const c_char,
    index_path: *const c_char,
    manifest: *const ShapeyManifest,
    out_store: *mut *mut ShapeyStore,
) -> ShapeyStatus {
    guard(|| {
        let e = PathBuf::from(str_arg(embeddings_path, "embeddings_path")?);
        let i = PathBuf::from(str_arg(index_path, "index_path")?);
        let m = &handle(manifest, "manifest")?.0;
        let slot = out(out_store, "out_store")?;
        let s = load_store(&e, &i, m)?;
        *slot = Box::into_raw(Box::new(ShapeyStore(s)));
        Ok(())
    })
}

/// Seeded random synthetic store with its manifest.
///
/// # Safety
/// Output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn shapey_store_synthetic(
    categories: usize,
    objects: u8,
    dim: usize,
    seed: u64,
    contrast: bool,
    out_manifest: *mut *mut ShapeyManifest,
    out_store: *mut *mut ShapeyStore,
) -> ShapeyStatus {
    guard(|| {
        let m_slot = out(out_manifest, "out_manifest")?;
        let s_slot = out(out_store, "out_store")?;
        let (m, s) = generate(&SyntheticConfig {
            categories,
            objects_per_category: objects,
            dim,
            seed,
            variants: variants(contrast),
            mode: SyntheticMode::Random,
        })?;
        *m_slot = Box::into_raw(Box::new(ShapeyManifest(m)));
        *s_slot = Box::into_raw(Box::new(ShapeyStore(s)));
        Ok(())
    })
}

/// # Safety
/// `store` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn shapey_store_len(store: *const ShapeyStore) -> usize {
    store.as_ref().map_or(0, |s| s.0.len())
}

/// # Safety
/// `store` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn shapey_store_dim(store: *const ShapeyStore) -> usize {
    store.as_ref().map_or(0, |s| s.0.dim())
}

/// # Safety
/// `store` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn shapey_store_free(store: *mut ShapeyStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// Error rates of one curve. `radii[k] < 0` means no viewpoint exclusion
/// (contrast modes only). `out_rates[k]` receives the error rate at
/// `radii[k]`, or NaN when every reference was skipped. `level` is
/// `object` or `category`; `contrast` is `none`, `soft` or `hard`;
/// `workers` 0 uses all cores.
///
/// # Safety
/// Handles must be live; strings nul-terminated; `radii` and `out_rates`
/// valid for `n_radii` elements.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn shapey_error_curve(
    store: *const ShapeyStore,
    manifest: *const ShapeyManifest,
    vt: *const c_char,
    level: *const c_char,
    contrast: *const c_char,
    radii: *const i32,
    n_radii: usize,
    workers: usize,
    out_rates: *mut f64,
) -> ShapeyStatus {
    guard(|| {
        let s = &handle(store, "store")?.0;
        let m = &handle(manifest, "manifest")?.0;
        let vt: Vt = str_arg(vt, "vt")?.parse().map_err(invalid)?;
        let level: Level = str_arg(level, "level")?.parse().map_err(invalid)?;
        let contrast: ContrastMode = str_arg(contrast, "contrast")?.parse().map_err(invalid)?;
        if n_radii == 0 {
            return Ok(());
        }
        if radii.is_null() || out_rates.is_null() {
            return Err(invalid("radii and out_rates must not be null"));
        }
        let radii = std::slice::from_raw_parts(radii, n_radii);
        let rates = std::slice::from_raw_parts_mut(out_rates, n_radii);
        let map = Arc::new(CategoryMap::from_manifest(m));
        let specs = radii
            .iter()
            .map(|&r| {
                let radius = match r {
                    r if r < 0 => ExclusionRadius::Off,
                    r => ExclusionRadius::Within(u8::try_from(r).map_err(|_| invalid(format!("radius {r} too large")))?),
                };
                Ok(ExclusionSpec::new(vt, radius, level, contrast, map.clone())?)
            })
            .collect::<Result<Vec<_>, Fail>>()?;
        let tiles = if workers == 0 {
            TileConfig::default()
        } else {
            TileConfig::with_workers(workers)
        };
        let results = run_specs(s, m, &specs, &tiles)?;
        let curves = error_curves(&results);
        for (slot, spec) in rates.iter_mut().zip(&specs) {
            *slot = curves
                .iter()
                .flat_map(|c| &c.points)
                .find(|p| p.radius == spec.radius)
                .and_then(|p| p.error_rate)
                .unwrap_or(f64::NAN);
        }
        Ok(())
    })
}
