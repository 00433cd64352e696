//! Synthetic embedding stores with known geometry.
//!
//! * `Ideal`: every same-object pair scores strictly above every
//!   cross-object pair, so matching never fails.
//! * `TunedDecay`: views `i`, `j` of any series of an object score
//!   `exp(-lambda * |i - j|)`. All series of an object share the same 11
//!   vectors, obtained from the eigendecomposition of the target Gram matrix.
//! * `PlantedDistractor`: tuned decay with objects in mutually orthogonal
//!   subspaces, plus one foreign view that beats every positive of one
//!   reference farther than `distance` index steps and loses to the rest.
//!   No other reference is affected.
//! * `Random`: category, object and view noise mixed together; produces
//!   intermediate error rates for equivalence testing.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    build_manifest, DatasetConfig, ImageId, Manifest, Variant, VariantSet, VIEWS_PER_OBJECT,
    VIEWS_PER_SERIES,
};
use crate::error::{Error, Result};
use crate::store::EmbeddingStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum SyntheticMode {
    Ideal,
    TunedDecay {
        lambda: f64,
    },
    PlantedDistractor {
        reference: ImageId,
        distractor: ImageId,
        distance: u8,
        lambda: f64,
    },
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub categories: usize,
    pub objects_per_category: u8,
    pub dim: usize,
    pub seed: u64,
    pub variants: VariantSet,
    pub mode: SyntheticMode,
}

impl SyntheticConfig {
    pub fn dataset(&self) -> DatasetConfig {
        DatasetConfig::uniform(self.categories, self.objects_per_category, self.variants)
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

fn dot64(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Generate a manifest and a normalized store aligned to it.
pub fn generate(config: &SyntheticConfig) -> Result<(Manifest, EmbeddingStore)> {
    if config.dim < 2 {
        return Err(Error::Config("synthetic dimension must be at least 2".into()));
    }
    let manifest = build_manifest(&config.dataset())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let rows = match &config.mode {
        SyntheticMode::Ideal => ideal(&manifest, config.dim, &mut rng)?,
        SyntheticMode::TunedDecay { lambda } => tuned(&manifest, config.dim, *lambda, false, &mut rng)?,
        SyntheticMode::PlantedDistractor {
            reference,
            distractor,
            distance,
            lambda,
        } => planted(&manifest, config.dim, reference, distractor, *distance, *lambda, &mut rng)?,
        SyntheticMode::Random => random(&manifest, config.dim, &mut rng),
    };
    let data: Vec<f32> = rows.iter().flat_map(|r| r.iter().map(|&x| x as f32)).collect();
    let store = EmbeddingStore::from_rows(manifest.ids().to_vec(), config.dim, data)?.normalize()?;
    Ok((manifest, store))
}

fn ideal(manifest: &Manifest, dim: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let centers: Vec<Vec<f64>> = (0..manifest.n_objects())
        .map(|_| unit(gaussian(rng, dim)))
        .collect();
    let mut c_max: f64 = -1.0;
    for a in 0..centers.len() {
        for b in a + 1..centers.len() {
            c_max = c_max.max(dot64(&centers[a], &centers[b]));
        }
    }
    // Rows are center + eps * unit noise. Cosine bounds:
    // same object >= (1 - 2e - e^2) / (1 + e)^2, cross object <= (c + 2e + e^2) / (1 - e)^2.
    let eps = ((1.0 - c_max) / 16.0).min(0.05);
    let same_lb = (1.0 - 2.0 * eps - eps * eps) / (1.0 + eps).powi(2);
    let cross_ub = (c_max + 2.0 * eps + eps * eps) / (1.0 - eps).powi(2);
    if !(eps > 0.0 && same_lb > cross_ub + 1e-6) {
        return Err(Error::Infeasible(format!(
            "ideal construction needs better-separated objects: {} objects in dimension {dim} \
             leave a largest center cosine of {c_max:.6}; increase the dimension",
            manifest.n_objects()
        )));
    }
    Ok((0..manifest.len())
        .map(|row| {
            let noise = unit(gaussian(rng, dim));
            centers[manifest.object_of_row(row)]
                .iter()
                .zip(&noise)
                .map(|(c, n)| c + eps * n)
                .collect()
        })
        .collect())
}

/// 11 coordinate vectors with Gram matrix `exp(-lambda |i - j|)`.
pub fn decay_coordinates(lambda: f64) -> Result<DMatrix<f64>> {
    if !lambda.is_finite() {
        return Err(Error::Infeasible(format!("decay rate {lambda} is not finite")));
    }
    let n = VIEWS_PER_SERIES;
    let target = DMatrix::from_fn(n, n, |i, j| (-lambda * (i as f64 - j as f64).abs()).exp());
    let eig = SymmetricEigen::new(target);
    let min = eig.eigenvalues.min();
    if min < -1e-12 {
        return Err(Error::Infeasible(format!(
            "decay rate {lambda} gives a target similarity matrix that is not positive semidefinite \
             (smallest eigenvalue {min:e})"
        )));
    }
    let scale = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * scale)
}

fn random_orthonormal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_vec(rows, cols, gaussian(rng, rows * cols));
    g.qr().q()
}

/// Per-object 11-vector bases: mutually orthogonal blocks when `dim` allows
/// (or `require_orthogonal`), otherwise independent random frames.
fn tuned(
    manifest: &Manifest,
    dim: usize,
    lambda: f64,
    require_orthogonal: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>> {
    let coords = decay_coordinates(lambda)?;
    let n_obj = manifest.n_objects();
    let block = VIEWS_PER_SERIES;
    let spare = if require_orthogonal { 2 } else { 0 };
    if dim < block {
        return Err(Error::Infeasible(format!(
            "tuned decay needs dimension >= {block}, got {dim}"
        )));
    }
    let orthogonal = dim >= block * n_obj + spare;
    if require_orthogonal && !orthogonal {
        return Err(Error::Infeasible(format!(
            "planted construction needs dimension >= {} for {n_obj} objects, got {dim}",
            block * n_obj + spare
        )));
    }
    let frames: Vec<DMatrix<f64>> = if orthogonal {
        let q = random_orthonormal(dim, dim, rng);
        (0..n_obj).map(|o| q.columns(o * block, block).into_owned()).collect()
    } else {
        (0..n_obj).map(|_| random_orthonormal(dim, block, rng)).collect()
    };
    let views: Vec<Vec<Vec<f64>>> = frames
        .iter()
        .map(|f| {
            (0..block)
                .map(|i| (f * coords.row(i).transpose()).iter().copied().collect())
                .collect()
        })
        .collect();
    Ok((0..manifest.len())
        .map(|row| {
            let id = manifest.id(row);
            views[manifest.object_of_row(row)][id.index as usize - 1].clone()
        })
        .collect())
}

fn planted(
    manifest: &Manifest,
    dim: usize,
    reference: &ImageId,
    distractor: &ImageId,
    distance: u8,
    lambda: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>> {
    if !(lambda > 0.0) {
        return Err(Error::Infeasible("planted construction needs a positive decay rate".into()));
    }
    let ref_row = manifest
        .row_of(reference)
        .ok_or_else(|| Error::UnknownImage(reference.to_string()))?;
    let dist_row = manifest
        .row_of(distractor)
        .ok_or_else(|| Error::UnknownImage(distractor.to_string()))?;
    if reference.variant != Variant::Original || distractor.variant != Variant::Original {
        return Err(Error::Config("planted views must be original-variant".into()));
    }
    if reference.category == distractor.category {
        return Err(Error::Config(
            "the distractor must come from a different category than the reference".into(),
        ));
    }
    let mut rows = tuned(manifest, dim, lambda, true, rng)?;
    // Two spare directions orthogonal to every object block and each other.
    let n_obj = manifest.n_objects();
    let spare: Vec<Vec<f64>> = {
        let q = random_orthonormal(dim, dim, rng);
        let blocks = DMatrix::from_fn(dim, VIEWS_PER_SERIES * n_obj, |r, c| {
            rows[(c / VIEWS_PER_SERIES) * VIEWS_PER_OBJECT + c % VIEWS_PER_SERIES][r]
        });
        let span = blocks.qr().q();
        let mut basis: Vec<Vec<f64>> = span.column_iter().map(|c| c.iter().copied().collect()).collect();
        let mut out = Vec::new();
        for k in 0..2 {
            let mut v: Vec<f64> = q.column(k).iter().copied().collect();
            for b in &basis {
                let p = dot64(&v, b);
                v.iter_mut().zip(b).for_each(|(x, c)| *x -= p * c);
            }
            let v = unit(v);
            basis.push(v.clone());
            out.push(v);
        }
        out
    };
    // ref . distractor = a * g; ref . positive(k) = sqrt(1 - g^2) * exp(-lambda k).
    // Their ratio is exp(-lambda (distance + 0.5 - k)), above 1 exactly when k > distance.
    // Every view of the distractor's object also leans on a second spare
    // direction with weight b, so as a reference the distractor keeps its
    // own positives (scores >= b^2) above the planted reference (a * g).
    let (a, b) = (0.6f64, 0.7f64);
    let t = (-lambda * (f64::from(distance) + 0.5)).exp();
    let g = t / (a * a + t * t).sqrt();
    if b * b <= a * g {
        return Err(Error::Infeasible(format!(
            "planted construction needs a faster decay: rate {lambda} at distance {distance} is too flat"
        )));
    }
    let mix = |base: &[f64], parts: &[(f64, &[f64])]| -> Vec<f64> {
        let rest = (1.0 - parts.iter().map(|(w, _)| w * w).sum::<f64>()).sqrt();
        let mut v: Vec<f64> = base.iter().map(|x| rest * x).collect();
        for (w, dir) in parts {
            v.iter_mut().zip(*dir).for_each(|(x, d)| *x += w * d);
        }
        v
    };
    rows[ref_row] = mix(&rows[ref_row], &[(g, &spare[0])]);
    let dist_object = manifest.object_of_row(dist_row);
    for variant in manifest.variants() {
        let start = manifest.object_block(*variant, dist_object).expect("variant present");
        for row in start..start + VIEWS_PER_OBJECT {
            let parts: &[(f64, &[f64])] = if row == dist_row {
                &[(a, &spare[0]), (b, &spare[1])]
            } else {
                &[(b, &spare[1])]
            };
            rows[row] = mix(&rows[row], parts);
        }
    }
    Ok(rows)
}

fn random(manifest: &Manifest, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let cats: Vec<Vec<f64>> = manifest
        .categories()
        .iter()
        .map(|_| gaussian(rng, dim))
        .collect();
    let objs: Vec<Vec<f64>> = (0..manifest.n_objects()).map(|_| gaussian(rng, dim)).collect();
    let contrast = gaussian(rng, dim);
    let per_variant = manifest.rows_per_variant();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(manifest.len());
    for row in 0..manifest.len() {
        let obj = manifest.object_of_row(row);
        let cat = &cats[manifest.category_of(obj)];
        let noise = gaussian(rng, dim);
        if manifest.variant_of_row(row) == Variant::Original {
            rows.push(
                (0..dim)
                    .map(|d| 0.6 * cat[d] + objs[obj][d] + 0.9 * noise[d])
                    .collect(),
            );
        } else {
            let base = &rows[row - per_variant];
            rows.push(
                (0..dim)
                    .map(|d| base[d] + 0.7 * contrast[d] + 0.5 * noise[d])
                    .collect(),
            );
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::dot;

    fn cfg(mode: SyntheticMode, dim: usize) -> SyntheticConfig {
        SyntheticConfig {
            categories: 2,
            objects_per_category: 2,
            dim,
            seed: 5,
            variants: VariantSet::OriginalOnly,
            mode,
        }
    }

    #[test]
    fn ideal_separates_objects() {
        let (m, s) = generate(&cfg(SyntheticMode::Ideal, 16)).unwrap();
        let mut min_same = f64::INFINITY;
        let mut max_cross = f64::NEG_INFINITY;
        for a in 0..m.len() {
            for b in a + 1..m.len() {
                let sc = dot(s.row(a), s.row(b));
                if m.object_of_row(a) == m.object_of_row(b) {
                    min_same = min_same.min(sc);
                } else {
                    max_cross = max_cross.max(sc);
                }
            }
        }
        assert!(min_same > max_cross, "{min_same} <= {max_cross}");
    }

    #[test]
    fn ideal_rejects_crowded_low_dimension() {
        let c = SyntheticConfig {
            categories: 20,
            objects_per_category: 10,
            ..cfg(SyntheticMode::Ideal, 2)
        };
        assert!(matches!(generate(&c), Err(Error::Infeasible(_))));
    }

    #[test]
    fn tuned_decay_closed_form() {
        let (m, s) = generate(&cfg(SyntheticMode::TunedDecay { lambda: 0.5 }, 16)).unwrap();
        let vt = "pr".parse().unwrap();
        let r6 = m.row(Variant::Original, 1, vt, 6).unwrap();
        let r8 = m.row(Variant::Original, 1, vt, 8).unwrap();
        assert!((dot(s.row(r6), s.row(r8)) - (-1.0f64).exp()).abs() < 1e-5);
    }

    #[test]
    fn decay_rejects_non_psd() {
        assert!(decay_coordinates(0.3).is_ok());
        assert!(decay_coordinates(-0.3).is_err());
        assert!(decay_coordinates(f64::NAN).is_err());
        assert!(generate(&cfg(SyntheticMode::TunedDecay { lambda: 0.5 }, 8)).is_err());
    }

    #[test]
    fn same_seed_same_bytes() {
        let c = SyntheticConfig {
            variants: VariantSet::Both,
            ..cfg(SyntheticMode::Random, 12)
        };
        assert_eq!(generate(&c).unwrap().1, generate(&c).unwrap().1);
        let other = SyntheticConfig { seed: 6, ..c.clone() };
        assert_ne!(generate(&c).unwrap().1, generate(&other).unwrap().1);
    }
}
