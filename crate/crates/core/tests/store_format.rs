//! Files written byte by byte, the way an external extractor produces them.

use std::fs;
use std::path::{Path, PathBuf};

use shapey::store::{read_embeddings, validate_against_manifest};
use shapey::{build_manifest, DatasetConfig, Error, Manifest, VariantSet};

fn manifest() -> Manifest {
    build_manifest(&DatasetConfig::uniform(1, 1, VariantSet::OriginalOnly)).unwrap()
}

fn raw(count: u64, dim: u32, values: &[f32]) -> Vec<u8> {
    let mut b = b"SHPY".to_vec();
    b.extend(1u32.to_le_bytes());
    b.extend(count.to_le_bytes());
    b.extend(dim.to_le_bytes());
    for v in values {
        b.extend(v.to_le_bytes());
    }
    b
}

fn write(dir: &Path, bytes: &[u8], ids: &[String]) -> (PathBuf, PathBuf) {
    let (e, i) = (dir.join("x.shpy"), dir.join("x.idx"));
    fs::write(&e, bytes).unwrap();
    fs::write(&i, ids.iter().map(|s| format!("{s}\n")).collect::<String>()).unwrap();
    (e, i)
}

/// Manifest ids in reverse order with row k holding (k, 1, 0).
fn reversed(m: &Manifest) -> (Vec<String>, Vec<f32>) {
    let ids: Vec<String> = m.ids().iter().rev().map(|id| id.to_string()).collect();
    let values = (0..ids.len()).flat_map(|k| [k as f32, 1.0, 0.0]).collect();
    (ids, values)
}

#[test]
fn reads_and_aligns_extractor_output() {
    let m = manifest();
    let (ids, values) = reversed(&m);
    let dir = tempfile::tempdir().unwrap();
    let (e, i) = write(dir.path(), &raw(ids.len() as u64, 3, &values), &ids);
    let store = read_embeddings(&e, &i).unwrap();
    assert_eq!(store.len(), 341);
    assert_eq!(store.dim(), 3);
    assert!(validate_against_manifest(&store, &m).is_ok());
    let aligned = store.normalize().unwrap().align(&m).unwrap();
    assert_eq!(aligned.ids(), m.ids());
    // Manifest row 0 was written last.
    let row = aligned.row(0);
    let n = (340f64 * 340.0 + 1.0).sqrt();
    assert!((f64::from(row[0]) - 340.0 / n).abs() < 1e-6);
    assert!((f64::from(row[1]) - 1.0 / n).abs() < 1e-6);
}

#[test]
fn rejects_malformed_files() {
    let m = manifest();
    let (ids, values) = reversed(&m);
    let n = ids.len() as u64;
    let dir = tempfile::tempdir().unwrap();

    let mut bad_magic = raw(n, 3, &values);
    bad_magic[0] = b'X';
    let (e, i) = write(dir.path(), &bad_magic, &ids);
    assert!(matches!(read_embeddings(&e, &i), Err(Error::Format { .. })));

    let mut bad_version = raw(n, 3, &values);
    bad_version[4] = 2;
    let (e, i) = write(dir.path(), &bad_version, &ids);
    assert!(matches!(read_embeddings(&e, &i), Err(Error::Format { .. })));

    let mut truncated = raw(n, 3, &values);
    truncated.truncate(truncated.len() - 4);
    let (e, i) = write(dir.path(), &truncated, &ids);
    assert!(matches!(read_embeddings(&e, &i), Err(Error::Format { .. })));

    let (e, i) = write(dir.path(), &raw(n, 3, &values), &ids[1..]);
    assert!(matches!(read_embeddings(&e, &i), Err(Error::Mismatch(_))));

    let mut nan = values.clone();
    nan[7] = f32::NAN;
    let (e, i) = write(dir.path(), &raw(n, 3, &nan), &ids);
    assert!(matches!(read_embeddings(&e, &i), Err(Error::BadRow { row: 2, .. })));

    let mut bad_ids = ids.clone();
    bad_ids[5] = "airplane_01-wx-06".into();
    let (e, i) = write(dir.path(), &raw(n, 3, &values), &bad_ids);
    assert!(matches!(read_embeddings(&e, &i), Err(Error::Format { .. })));
}

#[test]
fn validation_lists_missing_and_duplicate_ids() {
    let m = manifest();
    let (mut ids, values) = reversed(&m);
    ids[0] = ids[1].clone();
    let dir = tempfile::tempdir().unwrap();
    let (e, i) = write(dir.path(), &raw(ids.len() as u64, 3, &values), &ids);
    let store = read_embeddings(&e, &i).unwrap();
    let report = validate_against_manifest(&store, &m);
    assert_eq!(report.duplicates.len(), 1);
    assert_eq!(report.missing.len(), 1);
    assert_eq!(report.missing[0], m.ids()[340]);
    assert!(store.align(&m).is_err());
}

#[test]
fn zero_rows_cannot_be_normalized() {
    let m = manifest();
    let (ids, mut values) = reversed(&m);
    values[3..6].fill(0.0);
    let dir = tempfile::tempdir().unwrap();
    let (e, i) = write(dir.path(), &raw(ids.len() as u64, 3, &values), &ids);
    let store = read_embeddings(&e, &i).unwrap();
    assert!(matches!(store.normalize(), Err(Error::BadRow { row: 1, .. })));
}
