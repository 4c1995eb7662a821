//! Automated seed-mask generation for seeded segmentation.
//!
//! An image is optionally smoothed, turned into FG seeds by intensity or
//! saliency thresholding, weighted, eroded, combined with a border of BG
//! seeds, and handed to GrowCut or Random Walker.

// `!(x > 0.0)` guards are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod grid;
pub mod io;
pub mod pipeline;
pub mod preprocess;
pub mod refine;
pub mod rng;
pub mod seeding;
pub mod segment;
pub mod session;

pub use error::{Error, Result};
pub use grid::{BinaryMask, ImageGrid, Label, LabelMap, SeedMask, Shape, StrengthMap};
pub use pipeline::{
    parse_config, segment as run_pipeline, ConfigOverrides, PipelineConfig, PipelineOutput, Stage, StageError,
};
