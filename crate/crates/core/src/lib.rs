//! Sunlight-hours assessment for residential layouts made of cuboid
//! buildings.
//!
//! Two engines produce the same quantities:
//!
//! * [`oracle`] steps the sun through the assessment period and decides
//!   shade per sampling point with analytical shadow polygons (or ray
//!   casting on terrain).
//! * [`surrogate`] predicts one shading interval per (building, point) pair
//!   with a small MLP; [`site`] unions those intervals into a heatmap.
//!
//! [`datagen`] trains the MLP from oracle labels, [`optimizer`] searches
//! building placements, and [`validation`] compares the engines.

pub mod datagen;
pub mod error;
pub mod formats;
pub mod heatmap;
pub mod mlp;
pub mod optimizer;
pub mod oracle;
pub mod par;
pub mod scene;
pub mod scenes;
pub mod site;
pub mod solar;
pub mod surrogate;
pub mod validation;

pub use error::{Error, Result};
pub use heatmap::Heatmap;
pub use oracle::ShadingInterval;
pub use scene::{Building, Point3, SamplingGrid, Scene, TerrainMesh};
