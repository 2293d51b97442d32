//! End-to-end driver: perspective correction, dense matching and the
//! optional disparity transformation.

use std::time::{Duration, Instant};

use crate::dispxform::{self, RollEstimate, RollOptions};
use crate::error::Result;
use crate::imgcore::{ensure_same_dims, DisparityMap, GrayImage, RoadMask};
use crate::matcher::{self, MatcherParams};
use crate::perspective::{self, CorrespondenceParams, GroundPlaneShiftModel};
use crate::scalar::Scalar;

/// Wall-clock time per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub perspective: Duration,
    pub matching: Duration,
    pub total: Duration,
}

#[derive(Debug, Clone)]
pub struct MatchResult<T> {
    /// Full disparities in original target coordinates.
    pub disparity: DisparityMap<T>,
    pub shift_model: GroundPlaneShiftModel<T>,
    pub correspondences: usize,
    pub timings: StageTimings,
}

/// How the target row shift is obtained.
#[derive(Debug, Clone)]
pub enum ShiftSource<T> {
    /// Estimate from sparse correspondences.
    Estimate(CorrespondenceParams),
    /// Use a known model and skip the sparse search.
    Fixed(GroundPlaneShiftModel<T>),
}

pub fn run_matching<T: Scalar>(
    reference: &GrayImage,
    target: &GrayImage,
    params: &MatcherParams,
    shift: &ShiftSource<T>,
) -> Result<MatchResult<T>> {
    ensure_same_dims(reference.dims(), target.dims())?;
    params.validate()?;
    let start = Instant::now();
    let (shift_model, correspondences) = match shift {
        ShiftSource::Estimate(cp) => {
            let matches = perspective::find_sparse_correspondences(reference, target, cp)?;
            let model = perspective::fit_row_shift_model::<T>(&matches, reference.height())?;
            (model, matches.len())
        }
        ShiftSource::Fixed(model) => (*model, 0),
    };
    let warped = perspective::warp_target(target, &shift_model);
    let coverage = perspective::warp_coverage(target.width(), target.height(), &shift_model);
    let t_persp = start.elapsed();

    let out = matcher::match_pair::<T>(reference, &warped, Some(&coverage), params)?;
    let disparity = matcher::undo_perspective_shift(&out.disparity, &shift_model);
    let total = start.elapsed();
    Ok(MatchResult {
        disparity,
        shift_model,
        correspondences,
        timings: StageTimings {
            perspective: t_persp,
            matching: total - t_persp,
            total,
        },
    })
}

#[derive(Debug, Clone)]
pub struct TransformResult<T> {
    pub transformed: DisparityMap<T>,
    pub estimate: RollEstimate<T>,
}

/// Fits the road model on the masked pixels and transforms every valid
/// pixel. `trim` enables one 3σ outlier pass before the final fit.
pub fn run_transform<T: Scalar>(
    disparity: &DisparityMap<T>,
    mask: Option<&RoadMask>,
    opts: &RollOptions<T>,
    delta_t: T,
    trim: bool,
) -> Result<TransformResult<T>> {
    opts.validate()?;
    let samples = dispxform::collect_samples(disparity, mask)?;
    let estimate = dispxform::estimate_road_model(&samples, opts, trim)?;
    let transformed = dispxform::transform_disparities(disparity, &estimate.fit, delta_t);
    Ok(TransformResult { transformed, estimate })
}
