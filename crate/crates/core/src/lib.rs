//! Shape-recognition scoring for embedding models.
//!
//! Given embeddings for every view of a structured 3D-view image set, the
//! engine matches each reference view against all other views under
//! viewpoint and contrast exclusions and reports how often the nearest
//! eligible same-object (or same-category) view loses to another object.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod exclusion;
pub mod oracle;
pub mod report;
pub mod run;
pub mod scoring;
pub mod similarity;
pub mod store;
pub mod synth;

pub use dataset::{build_manifest, enumerate_vts, superset_series, DatasetConfig, ImageId, Manifest, Variant, VariantSet, Vt};
pub use error::{Error, Result};
pub use exclusion::{CategoryMap, ContrastMode, ExclusionRadius, ExclusionSpec, Level};
pub use scoring::{error_curves, run_matching, run_specs, ErrorCurve, MatchOutcome, SpecResult};
pub use similarity::TileConfig;
pub use store::EmbeddingStore;
