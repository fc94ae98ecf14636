//! 360-degree context conditioning pipeline.
//!
//! Turns panoramic saliency into model-facing control signals: viewpoint
//! selection from saliency maps, signed-distance maps describing a target
//! field of view on the equirectangular grid, a stacked conditioning tensor
//! with a reference map-encoder/FiLM forward pass, evaluation metrics, and
//! dataset preparation tooling. All outputs are deterministic so downstream
//! training artifacts can be reproduced bit for bit.

pub mod basd;
pub mod conditioning;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod saliency;

pub use error::{Error, Result};
