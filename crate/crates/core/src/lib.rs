//! Fast feature detection and rigid image stitching with multiscale local
//! peaks.
//!
//! Instead of building Gaussian and difference-of-Gaussian pyramids, every
//! image is tiled into `L x L` interrogation windows at several scales and the
//! maximum and minimum of each window become feature points. Those points get
//! SIFT-style 128-element orientation-histogram descriptors, are paired by
//! thresholded Euclidean distance, and a rigid transform is fitted with
//! RANSAC. A greedy planner extends this to unordered image sets.
//!
//! Stages, in pipeline order:
//!
//! - [`imaging`]: loading, grayscale conversion, linear-ramp preprocessing
//! - [`detector`]: multiscale window extrema
//! - [`descriptor`]: scale-adaptive orientation histograms
//! - [`matcher`]: threshold / mutual-nearest matching
//! - [`registration`]: rigid transforms and RANSAC
//! - [`compositor`]: canvas warping and feather blending
//! - [`mosaic`]: pairwise table and round-based planning
//!
//! [`pipeline`] chains them for two images, [`bench`] drives synthetic
//! timing runs.

pub mod bench;
pub mod compositor;
pub mod config;
pub mod descriptor;
pub mod detector;
pub mod error;
pub mod imaging;
pub mod matcher;
pub mod mosaic;
pub mod pipeline;
pub mod registration;
pub mod report;
pub mod synth;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use imaging::{IntensityImage, RampedImage};
pub use registration::RigidTransform;
