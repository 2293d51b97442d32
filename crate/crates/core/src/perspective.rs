//! Perspective transformation of the target image.
//!
//! For a planar road seen by a rectified rig the horizontal offset between
//! matching points is affine in the image row: `Δu(v) = κ₀ + κ₁·v`. The
//! target image is shifted right by `round(Δu(v) − δ_p)` on every row, after
//! which the road has nearly the same disparity `≈ δ_p` everywhere and the
//! matcher only has to search a small residual range.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imgcore::{ensure_same_dims, GrayImage, PixelCoord, RoadMask};
use crate::matcher::{block_stats, ncc_cost_from_sums};
use crate::scalar::Scalar;

/// Matches further than this from the first fit are dropped before refitting.
pub const TRIM_RESIDUAL: f64 = 3.0;

/// A pair of matching pixels on the same row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Correspondence {
    pub reference: PixelCoord,
    pub target: PixelCoord,
}

impl Correspondence {
    /// Panics unless both points are on the same row.
    pub fn new(reference: PixelCoord, target: PixelCoord) -> Self {
        assert_eq!(reference.v, target.v, "correspondence must be row-aligned");
        Self { reference, target }
    }

    /// `u_ref − u_tar`.
    pub fn shift(&self) -> i64 {
        self.reference.u as i64 - self.target.u as i64
    }

    pub fn row(&self) -> usize {
        self.reference.v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceParams {
    /// Side of the square correlation window, odd.
    pub window: usize,
    /// Shifts in `[-max_shift, max_shift]` are searched.
    pub max_shift: usize,
    /// Minimum block intensity variance for a pixel to be probed.
    pub response_threshold: f64,
    /// Grid spacing of probed pixels.
    pub stride: usize,
    pub min_correlation: f64,
}

impl Default for CorrespondenceParams {
    fn default() -> Self {
        Self {
            window: 7,
            max_shift: 64,
            response_threshold: 25.0,
            stride: 4,
            min_correlation: 0.9,
        }
    }
}

/// Exhaustive row-wise normalized-correlation search at textured pixels.
///
/// Every probed reference pixel whose block variance exceeds the response
/// threshold is compared with all target blocks on the same row within
/// `max_shift`; the best one is kept when its correlation reaches
/// `min_correlation`. Ties go to the first (most negative) shift.
pub fn find_sparse_correspondences(
    reference: &GrayImage,
    target: &GrayImage,
    params: &CorrespondenceParams,
) -> Result<Vec<Correspondence>> {
    ensure_same_dims(reference.dims(), target.dims())?;
    if params.window % 2 == 0 || params.window < 3 {
        return Err(Error::InvalidParameter(format!(
            "correspondence window must be odd and at least 3, got {}",
            params.window
        )));
    }
    if params.stride == 0 {
        return Err(Error::InvalidParameter("stride must be positive".into()));
    }
    let r = params.window / 2;
    let stats_ref = block_stats(reference, r)?;
    let stats_tar = block_stats(target, r)?;
    let (w, h) = reference.dims();
    let n = (params.window * params.window) as u64;
    let max_shift = params.max_shift as i64;

    let rows: Vec<usize> = (r..h - r).step_by(params.stride).collect();
    let per_row: Vec<Vec<Correspondence>> = rows
        .par_iter()
        .map(|&v| {
            let mut found = Vec::new();
            for u in (r..w - r).step_by(params.stride) {
                let Some(var) = stats_ref.sigma(u, v).map(|s| s * s) else {
                    continue;
                };
                if var <= params.response_threshold {
                    continue;
                }
                let (sr, srr) = stats_ref.sums(u, v).expect("interior pixel");
                let mut best: Option<(f64, usize)> = None;
                for shift in -max_shift..=max_shift {
                    let tu = u as i64 - shift;
                    if tu < r as i64 || tu >= (w - r) as i64 {
                        continue;
                    }
                    let tu = tu as usize;
                    let (st, stt) = stats_tar.sums(tu, v).expect("interior pixel");
                    let x = cross_sum(reference, target, u, tu, v, r);
                    let Some(cost) = ncc_cost_from_sums(n, sr, srr, st, stt, x) else {
                        continue;
                    };
                    let ncc = 1.0 - cost;
                    if best.map_or(true, |(b, _)| ncc > b) {
                        best = Some((ncc, tu));
                    }
                }
                if let Some((ncc, tu)) = best {
                    if ncc >= params.min_correlation {
                        found.push(Correspondence::new(
                            PixelCoord::new(u, v),
                            PixelCoord::new(tu, v),
                        ));
                    }
                }
            }
            found
        })
        .collect();
    let matches: Vec<Correspondence> = per_row.into_iter().flatten().collect();
    if matches.len() < 2 {
        return Err(Error::InsufficientMatches {
            found: matches.len(),
        });
    }
    Ok(matches)
}

fn cross_sum(a: &GrayImage, b: &GrayImage, ua: usize, ub: usize, v: usize, r: usize) -> u64 {
    let mut acc = 0u64;
    for row in v - r..=v + r {
        let ra = &a.row(row)[ua - r..=ua + r];
        let rb = &b.row(row)[ub - r..=ub + r];
        acc += ra
            .iter()
            .zip(rb)
            .map(|(&x, &y)| x as u64 * y as u64)
            .sum::<u64>();
    }
    acc
}

/// Affine row shift `Δu(v) = κ₀ + κ₁·v` and the integer offset `δ_p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundPlaneShiftModel<T> {
    pub kappa0: T,
    pub kappa1: T,
    pub delta_p: i64,
}

impl<T: Scalar> GroundPlaneShiftModel<T> {
    pub fn new(kappa0: T, kappa1: T, delta_p: i64) -> Self {
        Self {
            kappa0,
            kappa1,
            delta_p,
        }
    }

    /// The identity model: no shift on any row.
    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), 0)
    }

    /// Picks `δ_p = floor(min Δu(v))` over the rows of an image of `height`.
    pub fn with_offset_for_height(kappa0: T, kappa1: T, height: usize) -> Self {
        let mut model = Self::new(kappa0, kappa1, 0);
        let last = height.saturating_sub(1);
        let lo = model.delta_u(0).min(model.delta_u(last));
        model.delta_p = lo.floor().to_i64().unwrap_or(0);
        model
    }

    pub fn delta_u(&self, v: usize) -> T {
        self.kappa0 + self.kappa1 * T::of_usize(v)
    }

    /// Integer shift applied to row `v`: `round(Δu(v) − δ_p)`. The warp and
    /// the disparity restoration both use this value.
    pub fn row_shift(&self, v: usize) -> i64 {
        (self.delta_u(v) - T::from(self.delta_p).unwrap())
            .round()
            .to_i64()
            .unwrap_or(0)
    }

    /// The model that undoes this one's warp.
    pub fn inverse(&self) -> Self {
        Self::new(-self.kappa0, -self.kappa1, -self.delta_p)
    }
}

/// Exact least squares of integer shifts against integer rows.
fn fit_affine_shift<T: Scalar>(matches: &[Correspondence]) -> Result<(T, T)> {
    let m = matches.len() as i128;
    let (mut sv, mut svv, mut sd, mut svd) = (0i128, 0i128, 0i128, 0i128);
    for c in matches {
        let (v, d) = (c.row() as i128, c.shift() as i128);
        sv += v;
        svv += v * v;
        sd += d;
        svd += v * d;
    }
    let den = m * svv - sv * sv;
    if m < 2 || den == 0 {
        return Err(Error::RankDeficient);
    }
    let num = m * svd - sv * sd;
    let to_t = |x: i128| T::lit(x as f64);
    let slope = to_t(num) / to_t(den);
    let intercept = (to_t(sd) - slope * to_t(sv)) / to_t(m);
    Ok((intercept, slope))
}

/// Least-squares fit of the row shift with one trimming pass.
///
/// The sums are exact integers, so the result does not depend on the
/// order of `matches`.
pub fn fit_row_shift_model<T: Scalar>(
    matches: &[Correspondence],
    image_height: usize,
) -> Result<GroundPlaneShiftModel<T>> {
    let (k0, k1) = fit_affine_shift::<T>(matches)?;
    let limit = T::lit(TRIM_RESIDUAL);
    let kept: Vec<Correspondence> = matches
        .iter()
        .copied()
        .filter(|c| {
            let predicted = k0 + k1 * T::of_usize(c.row());
            (T::lit(c.shift() as f64) - predicted).abs() <= limit
        })
        .collect();
    let (k0, k1) = if kept.len() < matches.len() {
        fit_affine_shift::<T>(&kept).unwrap_or((k0, k1))
    } else {
        (k0, k1)
    };
    Ok(GroundPlaneShiftModel::with_offset_for_height(
        k0,
        k1,
        image_height,
    ))
}

/// Shifts row `v` of the target image `row_shift(v)` pixels to the right,
/// filling uncovered pixels with 0.
pub fn warp_target<T: Scalar>(target: &GrayImage, model: &GroundPlaneShiftModel<T>) -> GrayImage {
    let w = target.width() as i64;
    GrayImage::from_fn(target.width(), target.height(), |u, v| {
        let src = u as i64 - model.row_shift(v);
        if (0..w).contains(&src) {
            target.get(src as usize, v)
        } else {
            0
        }
    })
}

/// Pixels of the warped target that hold a target pixel rather than fill.
pub fn warp_coverage<T: Scalar>(width: usize, height: usize, model: &GroundPlaneShiftModel<T>) -> RoadMask {
    let w = width as i64;
    RoadMask::from_fn(width, height, |u, v| (0..w).contains(&(u as i64 - model.row_shift(v))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corr(v: usize, shift: i64) -> Correspondence {
        let ur = 100usize;
        Correspondence::new(
            PixelCoord::new(ur, v),
            PixelCoord::new((ur as i64 - shift) as usize, v),
        )
    }

    fn texture(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |u, v| {
            let x = (u * 7919 + v * 104729) as u64;
            let x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (x >> 56) as u8
        })
    }

    #[test]
    fn exact_affine_shift() {
        let matches: Vec<_> = (0..6).map(|i| corr(i * 10, 3 + i as i64)).collect();
        let model: GroundPlaneShiftModel<f64> = fit_row_shift_model(&matches, 100).unwrap();
        assert!((model.kappa0 - 3.0).abs() < 1e-12);
        assert!((model.kappa1 - 0.1).abs() < 1e-12);
        assert_eq!(model.delta_p, 3);
    }

    #[test]
    fn three_point_fit_by_hand() {
        let matches = [corr(0, 2), corr(10, 4), corr(20, 6)];
        let model: GroundPlaneShiftModel<f64> = fit_row_shift_model(&matches, 21).unwrap();
        assert!((model.kappa0 - 2.0).abs() < 1e-12);
        assert!((model.kappa1 - 0.2).abs() < 1e-12);
    }

    #[test]
    fn single_row_is_rank_deficient() {
        let matches = [corr(5, 2), corr(5, 4)];
        assert!(matches!(
            fit_row_shift_model::<f64>(&matches, 10),
            Err(Error::RankDeficient)
        ));
    }

    #[test]
    fn outlier_is_trimmed() {
        let mut matches: Vec<_> = (0..20).map(|i| corr(i * 5, 10)).collect();
        matches.push(corr(50, 40));
        let model: GroundPlaneShiftModel<f64> = fit_row_shift_model(&matches, 100).unwrap();
        assert!((model.kappa0 - 10.0).abs() < 1e-12);
        assert!(model.kappa1.abs() < 1e-12);
    }

    #[test]
    fn delta_p_is_floor_of_minimum() {
        let model = GroundPlaneShiftModel::with_offset_for_height(10.5f64, -0.02, 100);
        // Δu(99) = 8.52
        assert_eq!(model.delta_p, 8);
        assert_eq!(model.row_shift(99), 1);
        assert_eq!(model.row_shift(0), 3);
    }

    #[test]
    fn identity_warp() {
        let img = texture(12, 5);
        assert_eq!(warp_target(&img, &GroundPlaneShiftModel::<f64>::zero()), img);
    }

    #[test]
    fn uniform_integer_warp() {
        let img = texture(10, 3);
        let out = warp_target(&img, &GroundPlaneShiftModel::new(4.0f64, 0.0, 0));
        for v in 0..3 {
            for u in 0..10 {
                let expected = if u >= 4 { img.get(u - 4, v) } else { 0 };
                assert_eq!(out.get(u, v), expected);
            }
        }
    }

    #[test]
    fn uniform_shift_correspondences() {
        let base = texture(80, 40);
        // target is the reference moved 5 px to the right
        let tar = GrayImage::from_fn(80, 40, |u, v| if u >= 5 { base.get(u - 5, v) } else { 0 });
        let params = CorrespondenceParams {
            max_shift: 10,
            ..Default::default()
        };
        let matches = find_sparse_correspondences(&base, &tar, &params).unwrap();
        assert!(matches.len() > 20);
        assert!(matches.iter().all(|c| c.shift() == -5));
    }

    #[test]
    fn textureless_images_have_no_matches() {
        let flat = GrayImage::from_fn(40, 40, |_, _| 77);
        assert!(matches!(
            find_sparse_correspondences(&flat, &flat, &CorrespondenceParams::default()),
            Err(Error::InsufficientMatches { found: 0 })
        ));
    }

    #[test]
    fn even_window_is_rejected() {
        let img = texture(20, 20);
        let params = CorrespondenceParams {
            window: 6,
            ..Default::default()
        };
        assert!(find_sparse_correspondences(&img, &img, &params).is_err());
    }

    #[test]
    fn coverage_follows_row_shift() {
        let model = GroundPlaneShiftModel::new(2.0f64, 1.0, 0);
        let cov = warp_coverage(8, 3, &model);
        for v in 0..3 {
            for u in 0..8 {
                assert_eq!(cov.get(u, v), u >= 2 + v, "({u},{v})");
            }
        }
        let back = warp_coverage(8, 1, &GroundPlaneShiftModel::new(-3.0f64, 0.0, 0));
        assert_eq!(back.count(), 5);
        assert!(!back.get(5, 0) && back.get(4, 0));
    }

    proptest! {
        #[test]
        fn fit_is_permutation_invariant(
            shifts in proptest::collection::vec((0usize..200, -20i64..60), 3..40),
            seed in any::<u64>(),
        ) {
            let matches: Vec<_> = shifts.iter().map(|&(v, s)| corr(v, s)).collect();
            let mut shuffled = matches.clone();
            let mut state = seed;
            for i in (1..shuffled.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (state >> 33) as usize % (i + 1));
            }
            let a = fit_row_shift_model::<f64>(&matches, 200);
            let b = fit_row_shift_model::<f64>(&shuffled, 200);
            match (a, b) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "fit outcome depends on order"),
            }
        }

        #[test]
        fn inverse_warp_restores_pixels(k0 in -6.0f64..6.0, k1 in -0.2f64..0.2, dp in -3i64..3) {
            let img = texture(24, 16);
            let model = GroundPlaneShiftModel::new(k0, k1, dp);
            let back = warp_target(&warp_target(&img, &model), &model.inverse());
            for v in 0..16 {
                let s = model.row_shift(v);
                for u in 0..24i64 {
                    // both the forward source u - s and the restored position stay in range
                    if (0..24).contains(&(u - s)) && (0..24).contains(&(u + s)) {
                        prop_assert_eq!(back.get(u as usize, v), img.get(u as usize, v));
                    }
                }
            }
        }
    }
}
