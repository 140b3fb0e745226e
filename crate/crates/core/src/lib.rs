//! Exposed-coal mapping from Landsat-style surface reflectance.
//!
//! The crate covers the whole desk-scale workflow:
//!
//! - [`raster`]: scene ingestion with DN scaling, band semantics for TM/ETM+/OLI,
//!   and the three-state [`raster::BinaryMask`].
//! - [`indices`]: MNDWI, the piecewise coal mapping index (ACMI), the bare coal
//!   index (BCI) and thresholding.
//! - [`postprocess`]: 3×3 median filtering and QA-band masking.
//! - [`assessment`]: stratified sampling against reference polygons, confusion
//!   matrices and UA/PA/OA/F1.
//! - [`spectral_stats`]: class percentiles and Jeffries–Matusita separability.
//! - [`synth`]: synthetic scenes with known ground truth.
//! - [`pipeline`]: the ingest → QA → index → threshold → filter chain.

pub mod assessment;
pub mod error;
pub mod geotiff;
pub mod indices;
pub mod pipeline;
pub mod postprocess;
pub mod raster;
pub mod spectral_stats;
pub mod synth;
pub mod tiling;

pub use error::{Error, Result};
