//! Bin-picking pose estimation toolkit.
//!
//! The crate covers the whole chain on synthetic data:
//!
//! 1. [`scenegen`] builds cluttered bin scenes with exact ground truth.
//! 2. [`codebook`] discretizes the rotation group and embeds a rendered view
//!    per rotation; rotations are recovered by cosine k-NN.
//! 3. [`pipeline`] turns detections into poses (codebook rotation plus a
//!    translation from the depth image or from the box scale).
//! 4. [`select_refine`] scores estimates by depth agreement, ranks them and
//!    optionally refines them with point-to-point ICP.
//! 5. [`bopeval`] computes VSD / MSSD / MSPD errors, average recall and
//!    detection AP/AR.
//!
//! [`stages`] ties everything into reproducible on-disk stages used by the CLI.

pub mod bopeval;
pub mod codebook;
pub mod error;
pub mod formats;
pub mod geometry;
pub mod pipeline;
pub mod render;
pub mod report;
pub mod scenegen;
pub mod seed;
pub mod select_refine;
pub mod stages;

pub use error::{Error, Result};
