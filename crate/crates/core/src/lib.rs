//! Dense stereo matching for road-surface inspection.
//!
//! The pipeline has three stages:
//!
//! 1. [`perspective`]: fit an affine per-row shift to sparse matches and
//!    warp the target image so the road plane looks alike in both views.
//! 2. [`matcher`]: normalized-correlation costs, bilateral cost aggregation,
//!    winner-take-all, left-right consistency and parabolic subpixel
//!    refinement, then the per-row shift is added back.
//! 3. [`dispxform`]: fit the v-disparity road model, estimate the roll
//!    angle by gradient descent and flatten the road so that damage shows
//!    up as outliers.
//!
//! [`synthcam`] renders synthetic road scenes with exact ground truth and
//! [`evalkit`] holds the accuracy and throughput metrics.
//!
//! Fitting, optimisation and metrics are generic over the [`Scalar`] type;
//! the aliases at the crate root pin the common `f64` instantiations.

pub mod dispxform;
pub mod error;
pub mod evalkit;
pub mod imgcore;
pub mod lsq;
pub mod matcher;
pub mod perspective;
pub mod pipeline;
pub mod scalar;
pub mod synthcam;

pub use error::{Error, Result};
pub use imgcore::{DisparityMap, GrayImage, PixelCoord, RoadMask};
pub use scalar::Scalar;

/// Disparity map with `f64` values, the type the pipeline produces.
pub type DisparityMap64 = DisparityMap<f64>;
/// Disparity map with `f32` values (the precision of PFM files).
pub type DisparityMap32 = DisparityMap<f32>;
pub type FitSample64 = dispxform::FitSample<f64>;
pub type RoadModelFit64 = dispxform::RoadModelFit<f64>;
pub type RollOptions64 = dispxform::RollOptions<f64>;
pub type RollEstimate64 = dispxform::RollEstimate<f64>;
pub type ShiftModel64 = perspective::GroundPlaneShiftModel<f64>;
pub type EvalReport64 = evalkit::EvalReport<f64>;
