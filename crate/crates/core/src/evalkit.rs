//! Accuracy and throughput metrics.

use crate::error::{Error, Result};
use crate::imgcore::{ensure_same_dims, DisparityMap, RoadMask};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport<T> {
    /// Percentage of pixels whose error exceeds `epsilon_d`.
    pub e_p: T,
    /// Root mean squared error in pixels.
    pub e_r: T,
    /// Number of evaluated pixels.
    pub m: usize,
    pub epsilon_d: T,
    /// Standard deviation of transformed disparities, when available.
    pub sigma_d: Option<T>,
    /// Millions of disparity evaluations per second, when timed.
    pub mde_per_s: Option<T>,
}

/// Signed errors `est − gt` over pixels valid in both maps and in the mask.
fn joint_errors<T: Scalar>(est: &DisparityMap<T>, gt: &DisparityMap<T>, mask: Option<&RoadMask>) -> Result<Vec<T>> {
    ensure_same_dims(est.dims(), gt.dims())?;
    if let Some(mask) = mask {
        ensure_same_dims(est.dims(), mask.dims())?;
    }
    let errors: Vec<T> = est
        .iter_valid()
        .filter(|&(u, v, _)| mask.map_or(true, |m| m.get(u, v)))
        .filter_map(|(u, v, e)| gt.get(u, v).map(|g| e - g))
        .collect();
    if errors.is_empty() {
        return Err(Error::NoValidPixels);
    }
    Ok(errors)
}

/// Share of jointly valid pixels with `|est − gt| > epsilon_d`, in percent.
/// An error exactly equal to the tolerance counts as correct.
pub fn error_percentage<T: Scalar>(
    est: &DisparityMap<T>,
    gt: &DisparityMap<T>,
    mask: Option<&RoadMask>,
    epsilon_d: T,
) -> Result<T> {
    let errors = joint_errors(est, gt, mask)?;
    let bad = errors.iter().filter(|e| e.abs() > epsilon_d).count();
    Ok(T::lit(100.0) * T::of_usize(bad) / T::of_usize(errors.len()))
}

pub fn rmse<T: Scalar>(est: &DisparityMap<T>, gt: &DisparityMap<T>, mask: Option<&RoadMask>) -> Result<T> {
    let errors = joint_errors(est, gt, mask)?;
    let sum: T = errors.iter().map(|&e| e * e).sum();
    Ok((sum / T::of_usize(errors.len())).sqrt())
}

/// `width · height · d_max · 10⁻⁶ / seconds`.
pub fn mde_per_second<T: Scalar>(width: usize, height: usize, d_max: usize, seconds: T) -> Result<T> {
    if !(seconds > T::zero() && seconds.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "processing time must be positive, got {seconds}"
        )));
    }
    let work = T::of_usize(width) * T::of_usize(height) * T::of_usize(d_max);
    Ok(work * T::lit(1e-6) / seconds)
}

/// Population standard deviation of the valid (and masked) values.
pub fn transformed_stddev<T: Scalar>(disp_t: &DisparityMap<T>, mask: Option<&RoadMask>) -> Result<T> {
    if let Some(mask) = mask {
        ensure_same_dims(disp_t.dims(), mask.dims())?;
    }
    let values: Vec<T> = disp_t
        .iter_valid()
        .filter(|&(u, v, _)| mask.map_or(true, |m| m.get(u, v)))
        .map(|(_, _, d)| d)
        .collect();
    if values.is_empty() {
        return Err(Error::NoValidPixels);
    }
    let m = T::of_usize(values.len());
    let mean = values.iter().copied().sum::<T>() / m;
    let ss: T = values.iter().map(|&x| (x - mean) * (x - mean)).sum();
    Ok((ss / m).sqrt())
}

/// Bad-pixel rate and RMSE in one report.
pub fn evaluate<T: Scalar>(
    est: &DisparityMap<T>,
    gt: &DisparityMap<T>,
    mask: Option<&RoadMask>,
    epsilon_d: T,
) -> Result<EvalReport<T>> {
    let m = joint_errors(est, gt, mask)?.len();
    Ok(EvalReport {
        e_p: error_percentage(est, gt, mask, epsilon_d)?,
        e_r: rmse(est, gt, mask)?,
        m,
        epsilon_d,
        sigma_d: None,
        mde_per_s: None,
    })
}
