//! Closed-form least squares for a straight line `d ≈ intercept + slope·x`.
//!
//! The 2×2 normal equations are solved from centred sums, which is the
//! same solution as `(VᵀV)⁻¹Vᵀd` without forming `V`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit<T> {
    pub intercept: T,
    pub slope: T,
    /// Residual energy `‖d − Vα‖²`.
    pub energy: T,
    pub count: usize,
}

/// Centred second moments of a point set.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Moments<T> {
    pub count: usize,
    pub mean_x: T,
    pub mean_d: T,
    pub sxx: T,
    pub sxd: T,
}

/// True when the spread of `x` is indistinguishable from rounding noise.
pub(crate) fn is_degenerate<T: Scalar>(sxx: T, count: usize, max_abs_x: T) -> bool {
    let noise = T::epsilon() * T::lit(64.0) * max_abs_x.max(T::one());
    !(sxx > T::of_usize(count) * noise * noise)
}

pub(crate) fn moments<T, I>(points: I) -> Result<Moments<T>>
where
    T: Scalar,
    I: Iterator<Item = (T, T)> + Clone,
{
    let mut count = 0usize;
    let (mut sum_x, mut sum_d) = (T::zero(), T::zero());
    let mut max_abs_x = T::zero();
    for (x, d) in points.clone() {
        count += 1;
        sum_x += x;
        sum_d += d;
        max_abs_x = max_abs_x.max(x.abs());
    }
    if count == 0 {
        return Err(Error::NoSamples);
    }
    let n = T::of_usize(count);
    let (mean_x, mean_d) = (sum_x / n, sum_d / n);
    let (mut sxx, mut sxd) = (T::zero(), T::zero());
    for (x, d) in points {
        let dx = x - mean_x;
        sxx += dx * dx;
        sxd += dx * (d - mean_d);
    }
    if count < 2 || is_degenerate(sxx, count, max_abs_x) {
        return Err(Error::RankDeficient);
    }
    Ok(Moments {
        count,
        mean_x,
        mean_d,
        sxx,
        sxd,
    })
}

/// Fits a line through `(x, d)` pairs. Needs at least two distinct `x`.
pub fn fit_line<T, I>(points: I) -> Result<LineFit<T>>
where
    T: Scalar,
    I: IntoIterator<Item = (T, T)>,
    I::IntoIter: Clone,
{
    let points = points.into_iter();
    let m = moments(points.clone())?;
    let slope = m.sxd / m.sxx;
    let intercept = m.mean_d - slope * m.mean_x;
    let energy = residual_energy(points, intercept, slope);
    Ok(LineFit {
        intercept,
        slope,
        energy,
        count: m.count,
    })
}

pub(crate) fn residual_energy<T: Scalar>(
    points: impl Iterator<Item = (T, T)>,
    intercept: T,
    slope: T,
) -> T {
    points
        .map(|(x, d)| {
            let r = d - intercept - slope * x;
            r * r
        })
        .fold(T::zero(), |acc, r| acc + r)
}
