//! Appearance-model estimation from image co-occurrence moments, with
//! graph-cut segmentation driven by the estimated models.
//!
//! The pipeline is:
//!
//! 1. [`moments`]: histogram, pair co-occurrences and third-order slices at an
//!    L1 distance `r`;
//! 2. [`team`]: tensor factorization of those moments into `K` color
//!    distributions and region proportions;
//! 3. [`graphcut`]: MRF energy minimization with the estimated models.
//!
//! [`synth`], [`metrics`] and [`bench`] generate controlled test images and
//! score estimates against ground truth; [`quantize`] reduces RGB inputs to a
//! small palette first.

pub mod bench;
pub mod error;
pub mod graphcut;
pub mod imgio;
pub mod metrics;
pub mod moments;
pub mod quantize;
pub mod synth;
pub mod team;

pub use error::{Error, Result};
pub use imgio::{DiscreteImage, RgbImage, Segmentation};
pub use moments::{BetaMode, MomentEstimates};
pub use team::ModelSet;
