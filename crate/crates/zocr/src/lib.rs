//! Offline handwritten character recognition.
//!
//! The pipeline turns a grayscale page into classified characters:
//! binarization and edge-based cleanup, connected-component segmentation
//! into fixed-size glyphs, zonal feature extraction along diagonal,
//! horizontal or vertical scan lines, and a small two-hidden-layer
//! sigmoid network trained with momentum and an adaptive learning rate.

pub mod error;
pub mod features;
pub mod mlp;
pub mod pgm;
pub mod pipeline;
pub mod raster;
pub mod segment;
pub mod synth;

pub use error::{Error, Result};
pub use features::{AveragingMode, FeatureVector, Normalizer, Orientation};
pub use mlp::{Model, NetworkConfig, NetworkParams, StopReason, TrainConfig};
pub use raster::{BinaryRaster, GrayRaster};
pub use segment::{Component, GlyphBox, GLYPH_HEIGHT, GLYPH_WIDTH};
