//! Core algorithms for deciding whether an inspected scene contains an oil
//! leak.
//!
//! The crate is `no_std` (it needs `alloc`) and does no IO. It covers:
//!
//! - [`scene`]: detections, polygon rasterization and pair geometry,
//! - [`enhance`]: bi-histogram equalization with an optimized split point,
//! - [`relnet`]: the pairwise spatial-relation classifier and its trainer,
//! - [`scenegen`]: deterministic synthetic scenes and labeled pairs,
//! - [`logic`]: the rule language, fuzzy operators, grounding and weight learning,
//! - [`eval`]: F1 / AP metrics,
//! - [`pipeline`]: end-to-end inference and ablation evaluation.
//!
//! File formats, the CLI and image codecs live in the `oilsense` crate.
#![no_std]
#![warn(rust_2018_idioms, unused_qualifications)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod enhance;
pub mod eval;
pub mod logic;
pub(crate) mod math;
pub mod pipeline;
pub mod relnet;
pub mod scene;
pub mod scenegen;

pub use scene::{BBox, ClassLabel, DetectedObject, MaskRaster, ObjectId, Point, PolygonMask, Scene};
