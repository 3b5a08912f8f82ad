//! Tabular data: schemas, CSV ingestion, stratified splitting, Gower
//! distance, design matrices and synthetic tables with known ground truth.

mod dataset;
mod gower;
mod matrix;
mod presets;
mod schema;
mod synth;

pub use dataset::{stratified_split_indices, Column, Dataset, Provenance, RawColumn};
pub use gower::{gower_distance, nearest_neighbor, FeatureValue, GowerSpace};
pub use matrix::{EncodedFeature, Encoder, ModelMatrix, SensitiveTerm};
pub use schema::{ColumnSpec, FeatureKind, Schema};
pub use synth::{synth_generate, FeatureGen, GeneratorSpec, NumericDist, OutcomeSpec, PremiumSpec, SynthLink};

/// Sampling cap for exact nearest-neighbour searches over large tables.
pub const DEFAULT_NEIGHBOR_CAP: usize = 20_000;
