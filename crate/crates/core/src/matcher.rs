//! Dense subpixel disparity estimation.
//!
//! Costs are `1 − NCC` between square blocks, aggregated with bilateral
//! weights guided by the image the volume lives on, then reduced by
//! winner-take-all. A left-right check removes occlusions and a parabola
//! through three neighbouring costs gives the subpixel offset.
//!
//! Block sums are exact integers, so every cost depends only on the pixel
//! values and not on how the sums were produced. Costs are stored as `f32`;
//! each aggregated cost is reduced in a fixed neighbour order in `f64`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imgcore::{ensure_same_dims, DisparityMap, GrayImage, PixelCoord, RoadMask};
use crate::perspective::GroundPlaneShiftModel;
use crate::scalar::Scalar;

/// Minimum parabola curvature for the subpixel step.
pub const SUBPIXEL_MIN_DENOMINATOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MatcherParams {
    /// Matching block is `(2r+1)×(2r+1)`.
    pub window_radius: usize,
    /// Aggregation neighbourhood is `(2R+1)×(2R+1)`; 5 gives the
    /// 120-connected neighbourhood.
    pub aggregation_radius: usize,
    /// Largest residual disparity searched, inclusive.
    pub d_max: usize,
    /// Spatial bandwidth in pixels.
    pub sigma0: f64,
    /// Range bandwidth in intensity units.
    pub sigma1: f64,
    /// Left-right threshold on the squared disparity difference.
    pub delta_r: f64,
}

impl Default for MatcherParams {
    fn default() -> Self {
        Self {
            window_radius: 3,
            aggregation_radius: 5,
            d_max: 30,
            sigma0: 1.5,
            sigma1: 5.5,
            delta_r: 1.0,
        }
    }
}

impl MatcherParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if self.window_radius < 1 {
            return bad("matcher.window_radius must be at least 1");
        }
        if self.d_max < 1 {
            return bad("matcher.d_max must be at least 1");
        }
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return bad("matcher.sigma0 must be positive");
        }
        if !(self.sigma1 > 0.0 && self.sigma1.is_finite()) {
            return bad("matcher.sigma1 must be positive");
        }
        if !(self.delta_r > 0.0 && self.delta_r.is_finite()) {
            return bad("matcher.delta_r must be positive");
        }
        Ok(())
    }
}

/// Summed-area table with a zero first row and column.
struct Integral {
    stride: usize,
    data: Vec<u64>,
}

impl Integral {
    fn build(width: usize, height: usize, f: impl Fn(usize, usize) -> u64) -> Self {
        let stride = width + 1;
        let mut data = vec![0u64; stride * (height + 1)];
        for v in 0..height {
            let mut row = 0u64;
            for u in 0..width {
                row += f(u, v);
                data[(v + 1) * stride + u + 1] = data[v * stride + u + 1] + row;
            }
        }
        Self { stride, data }
    }

    /// Sum over the block of radius `r` centred at `(u, v)`; caller checks bounds.
    #[inline]
    fn block(&self, u: usize, v: usize, r: usize) -> u64 {
        let (u0, v0, u1, v1) = (u - r, v - r, u + r + 1, v + r + 1);
        let s = self.stride;
        self.data[v1 * s + u1] + self.data[v0 * s + u0] - self.data[v0 * s + u1] - self.data[v1 * s + u0]
    }
}

/// Per-pixel block sums, means and standard deviations.
#[derive(Debug, Clone)]
pub struct BlockStats {
    width: usize,
    height: usize,
    radius: usize,
    sum: Vec<u64>,
    sum_sq: Vec<u64>,
}

impl BlockStats {
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn block_len(&self) -> u64 {
        let side = (2 * self.radius + 1) as u64;
        side * side
    }

    /// Whether the block centred at `(u, v)` lies inside the image.
    #[inline]
    pub fn is_inside(&self, u: usize, v: usize) -> bool {
        let r = self.radius;
        u >= r && v >= r && u + r < self.width && v + r < self.height
    }

    /// `(Σi, Σi²)` over the block, or `None` when it leaves the image.
    #[inline]
    pub fn sums(&self, u: usize, v: usize) -> Option<(u64, u64)> {
        self.is_inside(u, v).then(|| {
            let i = v * self.width + u;
            (self.sum[i], self.sum_sq[i])
        })
    }

    pub fn mu(&self, u: usize, v: usize) -> Option<f64> {
        self.sums(u, v).map(|(s, _)| s as f64 / self.block_len() as f64)
    }

    /// Population standard deviation of the block.
    pub fn sigma(&self, u: usize, v: usize) -> Option<f64> {
        self.sums(u, v).map(|(s, ss)| {
            let n = self.block_len() as i128;
            let var_n2 = n * ss as i128 - (s as i128) * (s as i128);
            (var_n2 as f64).sqrt() / n as f64
        })
    }
}

/// Block mean and standard deviation for every pixel whose block fits.
pub fn block_stats(img: &GrayImage, window_radius: usize) -> Result<BlockStats> {
    let (w, h) = img.dims();
    let side = 2 * window_radius + 1;
    if side > w || side > h {
        return Err(Error::WindowTooLarge {
            radius: window_radius,
            width: w,
            height: h,
        });
    }
    let ii = Integral::build(w, h, |u, v| img.get(u, v) as u64);
    let ii2 = Integral::build(w, h, |u, v| {
        let x = img.get(u, v) as u64;
        x * x
    });
    let mut sum = vec![0u64; w * h];
    let mut sum_sq = vec![0u64; w * h];
    let r = window_radius;
    for v in r..h - r {
        for u in r..w - r {
            sum[v * w + u] = ii.block(u, v, r);
            sum_sq[v * w + u] = ii2.block(u, v, r);
        }
    }
    Ok(BlockStats {
        width: w,
        height: h,
        radius: r,
        sum,
        sum_sq,
    })
}

/// `1 − NCC` from exact block sums: `n` pixels, `Σa`, `Σa²`, `Σb`, `Σb²`
/// and `Σab`. Returns `None` when either block has zero variance.
///
/// This is `(σaσb + μaμb)/(σaσb) − Σab/(nσaσb)` rewritten over integer
/// sums: `1 − (nΣab − ΣaΣb) / √((nΣa² − (Σa)²)(nΣb² − (Σb)²))`.
#[inline]
pub fn ncc_cost_from_sums(n: u64, sa: u64, saa: u64, sb: u64, sbb: u64, sab: u64) -> Option<f64> {
    let n = n as i128;
    let (sa, sb) = (sa as i128, sb as i128);
    let var_a = n * saa as i128 - sa * sa;
    let var_b = n * sbb as i128 - sb * sb;
    if var_a <= 0 || var_b <= 0 {
        return None;
    }
    let num = n * sab as i128 - sa * sb;
    Some(1.0 - num as f64 / ((var_a * var_b) as f64).sqrt())
}

/// Cost of matching the reference block at `p` with the target block at
/// `p − [d, 0]`.
pub fn matching_cost(
    reference: &GrayImage,
    target: &GrayImage,
    stats_ref: &BlockStats,
    stats_tar: &BlockStats,
    p: PixelCoord,
    d: usize,
) -> Result<f64> {
    ensure_same_dims(reference.dims(), target.dims())?;
    if p.u < d {
        return Err(Error::OutOfBounds);
    }
    let tu = p.u - d;
    let (sr, srr) = stats_ref.sums(p.u, p.v).ok_or(Error::OutOfBounds)?;
    let (st, stt) = stats_tar.sums(tu, p.v).ok_or(Error::OutOfBounds)?;
    let r = stats_ref.radius();
    let mut x = 0u64;
    for v in p.v - r..=p.v + r {
        for k in 0..=2 * r {
            x += reference.get(p.u - r + k, v) as u64 * target.get(tu - r + k, v) as u64;
        }
    }
    ncc_cost_from_sums(stats_ref.block_len(), sr, srr, st, stt, x).ok_or(Error::DegenerateBlock)
}

/// Matching costs indexed by pixel and disparity `0..=d_max`. Entries whose
/// blocks leave the image or have zero variance are invalid.
#[derive(Debug, Clone)]
pub struct CostVolume {
    width: usize,
    height: usize,
    d_max: usize,
    // NaN marks an invalid entry; layout is (v, u, d) with d fastest
    data: Vec<f32>,
}

impl CostVolume {
    pub fn invalid(width: usize, height: usize, d_max: usize) -> Self {
        Self {
            width,
            height,
            d_max,
            data: vec![f32::NAN; width * height * (d_max + 1)],
        }
    }

    /// Builds a volume from a per-entry function; `None` is invalid.
    pub fn from_fn(
        width: usize,
        height: usize,
        d_max: usize,
        mut f: impl FnMut(usize, usize, usize) -> Option<f32>,
    ) -> Self {
        let mut vol = Self::invalid(width, height, d_max);
        for v in 0..height {
            for u in 0..width {
                for d in 0..=d_max {
                    vol.set(u, v, d, f(u, v, d));
                }
            }
        }
        vol
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn d_max(&self) -> usize {
        self.d_max
    }

    #[inline]
    fn index(&self, u: usize, v: usize, d: usize) -> usize {
        (v * self.width + u) * (self.d_max + 1) + d
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize, d: usize) -> Option<f32> {
        let c = self.data[self.index(u, v, d)];
        (!c.is_nan()).then_some(c)
    }

    pub fn set(&mut self, u: usize, v: usize, d: usize, cost: Option<f32>) {
        let i = self.index(u, v, d);
        self.data[i] = cost.unwrap_or(f32::NAN);
    }

    /// Costs of one pixel for `d = 0..=d_max`, NaN where invalid.
    #[inline]
    pub fn pixel(&self, u: usize, v: usize) -> &[f32] {
        let i = self.index(u, v, 0);
        &self.data[i..i + self.d_max + 1]
    }

    pub fn iter_valid(&self) -> impl Iterator<Item = f32> + '_ {
        self.data.iter().copied().filter(|c| !c.is_nan())
    }

    /// Bitwise equality, treating every invalid entry as equal.
    pub fn bit_identical(&self, other: &CostVolume) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.d_max == other.d_max
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| (a.is_nan() && b.is_nan()) || a.to_bits() == b.to_bits())
    }
}

/// Raw cost volumes before aggregation.
///
/// The reference volume compares the reference block at `p` with the target
/// block at `p − [d, 0]`; the target volume compares the target block at `p`
/// with the reference block at `p + [d, 0]`. When `coverage` is given, a
/// target block containing an uncovered pixel counts as out of bounds.
pub fn raw_cost_volumes(
    reference: &GrayImage,
    target: &GrayImage,
    coverage: Option<&RoadMask>,
    params: &MatcherParams,
) -> Result<(CostVolume, CostVolume)> {
    params.validate()?;
    ensure_same_dims(reference.dims(), target.dims())?;
    if let Some(c) = coverage {
        ensure_same_dims(target.dims(), c.dims())?;
    }
    let (w, h) = reference.dims();
    let r = params.window_radius;
    let stats_ref = block_stats(reference, r)?;
    let stats_tar = block_stats(target, r)?;
    let n = stats_ref.block_len();
    let dn = params.d_max + 1;
    let holes = coverage.map(|c| Integral::build(w, h, |u, v| u64::from(!c.get(u, v))));

    // One plane of reference-frame costs per disparity. The target volume
    // holds the same block pairs, indexed from the target pixel.
    let planes: Vec<Vec<f32>> = (0..dn)
        .into_par_iter()
        .map(|d| {
            let mut plane = vec![f32::NAN; w * h];
            if r + d >= w - r {
                return plane;
            }
            let products = Integral::build(w, h, |u, v| {
                if u >= d {
                    reference.get(u, v) as u64 * target.get(u - d, v) as u64
                } else {
                    0
                }
            });
            for v in r..h - r {
                for u in r + d..w - r {
                    if holes.as_ref().is_some_and(|hl| hl.block(u - d, v, r) > 0) {
                        continue;
                    }
                    let (sr, srr) = stats_ref.sums(u, v).unwrap();
                    let (st, stt) = stats_tar.sums(u - d, v).unwrap();
                    let x = products.block(u, v, r);
                    if let Some(c) = ncc_cost_from_sums(n, sr, srr, st, stt, x) {
                        plane[v * w + u] = c as f32;
                    }
                }
            }
            plane
        })
        .collect();

    let mut ref_vol = CostVolume::invalid(w, h, params.d_max);
    let mut tar_vol = CostVolume::invalid(w, h, params.d_max);
    ref_vol
        .data
        .par_chunks_mut(w * dn)
        .zip(tar_vol.data.par_chunks_mut(w * dn))
        .enumerate()
        .for_each(|(v, (ref_row, tar_row))| {
            for u in 0..w {
                for (d, plane) in planes.iter().enumerate() {
                    ref_row[u * dn + d] = plane[v * w + u];
                    if u + d < w {
                        tar_row[u * dn + d] = plane[v * w + u + d];
                    }
                }
            }
        });
    Ok((ref_vol, tar_vol))
}

/// Precomputed factors of the bilateral weight: a spatial table over the
/// offsets of the aggregation window and a range table over `|Δi| ∈ 0..=255`.
#[derive(Debug, Clone)]
pub struct BilateralWeights {
    radius: usize,
    spatial: Vec<f64>,
    range: [f64; 256],
}

#[inline]
fn spatial_factor(dist_sq: usize, sigma0: f64) -> f64 {
    (-(dist_sq as f64) / (sigma0 * sigma0)).exp()
}

#[inline]
fn range_factor(diff: usize, sigma1: f64) -> f64 {
    (-((diff * diff) as f64) / (sigma1 * sigma1)).exp()
}

impl BilateralWeights {
    pub fn new(params: &MatcherParams) -> Self {
        let r = params.aggregation_radius as i64;
        let side = 2 * r + 1;
        let mut spatial = Vec::with_capacity((side * side) as usize);
        for dy in -r..=r {
            for dx in -r..=r {
                spatial.push(spatial_factor((dx * dx + dy * dy) as usize, params.sigma0));
            }
        }
        let mut range = [0.0; 256];
        for (diff, slot) in range.iter_mut().enumerate() {
            *slot = range_factor(diff, params.sigma1);
        }
        Self {
            radius: params.aggregation_radius,
            spatial,
            range,
        }
    }

    /// Weight for offset `(dx, dy)` inside the window and intensity gap `diff`.
    #[inline]
    pub fn weight(&self, dx: i64, dy: i64, diff: u8) -> f64 {
        let side = 2 * self.radius as i64 + 1;
        let r = self.radius as i64;
        self.spatial[((dy + r) * side + dx + r) as usize] * self.range[diff as usize]
    }
}

/// `exp(−‖p−q‖²/σ₀²) · exp(−(i(p)−i(q))²/σ₁²)` evaluated directly.
pub fn bilateral_weight(guide: &GrayImage, p: PixelCoord, q: PixelCoord, params: &MatcherParams) -> f64 {
    let du = p.u.abs_diff(q.u);
    let dv = p.v.abs_diff(q.v);
    let diff = guide.get(p.u, p.v).abs_diff(guide.get(q.u, q.v)) as usize;
    spatial_factor(du * du + dv * dv, params.sigma0) * range_factor(diff, params.sigma1)
}

/// Bilateral aggregation: every entry becomes the weighted mean of the valid
/// raw costs in the aggregation window around it (the centre included).
/// Invalid raw costs are left out of both sums; an entry with no valid
/// neighbour, or whose valid neighbours all have weight zero, is invalid.
pub fn aggregate_costs(raw: &CostVolume, guide: &GrayImage, params: &MatcherParams) -> Result<CostVolume> {
    params.validate()?;
    ensure_same_dims((raw.width, raw.height), guide.dims())?;
    let weights = BilateralWeights::new(params);
    let (w, h) = guide.dims();
    let dn = raw.d_max + 1;
    let r = params.aggregation_radius as i64;
    let mut out = CostVolume::invalid(w, h, raw.d_max);

    out.data
        .par_chunks_mut(w * dn)
        .enumerate()
        .for_each(|(v, row)| {
            let mut num = vec![0.0f64; dn];
            let mut den = vec![0.0f64; dn];
            let mut any = vec![false; dn];
            for u in 0..w {
                num.fill(0.0);
                den.fill(0.0);
                any.fill(false);
                let centre = guide.get(u, v);
                for dy in -r..=r {
                    let qv = v as i64 + dy;
                    if qv < 0 || qv >= h as i64 {
                        continue;
                    }
                    for dx in -r..=r {
                        let qu = u as i64 + dx;
                        if qu < 0 || qu >= w as i64 {
                            continue;
                        }
                        let (qu, qv) = (qu as usize, qv as usize);
                        let wq = weights.weight(dx, dy, centre.abs_diff(guide.get(qu, qv)));
                        for (d, &c) in raw.pixel(qu, qv).iter().enumerate() {
                            if !c.is_nan() {
                                num[d] += wq * c as f64;
                                den[d] += wq;
                                any[d] = true;
                            }
                        }
                    }
                }
                for d in 0..dn {
                    row[u * dn + d] = if any[d] && den[d] > 0.0 {
                        (num[d] / den[d]) as f32
                    } else {
                        f32::NAN
                    };
                }
            }
        });
    Ok(out)
}

/// Aggregated reference and target volumes. The reference volume is guided
/// by the reference image and the target volume by the (warped) target.
pub fn compute_cost_volumes(
    reference: &GrayImage,
    target_warped: &GrayImage,
    coverage: Option<&RoadMask>,
    params: &MatcherParams,
) -> Result<(CostVolume, CostVolume)> {
    let (raw_ref, raw_tar) = raw_cost_volumes(reference, target_warped, coverage, params)?;
    let agg_ref = aggregate_costs(&raw_ref, reference, params)?;
    let agg_tar = aggregate_costs(&raw_tar, target_warped, params)?;
    Ok((agg_ref, agg_tar))
}

/// Winner-take-all: the smallest `d` attaining the minimum valid cost.
pub fn wta_disparity<T: Scalar>(vol: &CostVolume) -> DisparityMap<T> {
    let (w, h) = (vol.width, vol.height);
    let best: Vec<Option<T>> = (0..h)
        .into_par_iter()
        .flat_map_iter(|v| {
            (0..w).map(move |u| {
                let mut best: Option<(usize, f32)> = None;
                for (d, &c) in vol.pixel(u, v).iter().enumerate() {
                    if !c.is_nan() && best.map_or(true, |(_, b)| c < b) {
                        best = Some((d, c));
                    }
                }
                best.map(|(d, _)| T::of_usize(d))
            })
        })
        .collect();
    DisparityMap::new(w, h, best).expect("WTA disparities are non-negative")
}

/// Left-right consistency: keep `p` only if
/// `(ℓ_ref(p) − ℓ_tar(p − [ℓ_ref(p), 0]))² ≤ δ_r`. Lookups that leave the
/// image or land on an invalid target pixel remove `p`.
pub fn lr_consistency<T: Scalar>(
    disp_ref: &DisparityMap<T>,
    disp_tar: &DisparityMap<T>,
    delta_r: f64,
) -> Result<DisparityMap<T>> {
    ensure_same_dims(disp_ref.dims(), disp_tar.dims())?;
    let delta_r = T::lit(delta_r);
    Ok(disp_ref.map_valid(|u, v, d| {
        let shift = d.round().to_i64()?;
        let tu = u as i64 - shift;
        if tu < 0 || tu >= disp_tar.width() as i64 {
            return None;
        }
        let dt = disp_tar.get(tu as usize, v)?;
        let diff = d - dt;
        (diff * diff <= delta_r).then_some(d)
    }))
}

/// Parabola vertex through `c(d−1)`, `c(d)`, `c(d+1)`:
/// `d + (c₋ − c₊) / (2c₋ + 2c₊ − 4c₀)`. Falls back to `d` at the ends of the
/// range, next to invalid costs, or unless the parabola is strictly convex.
pub fn subpixel_refine<T: Scalar>(disp: &DisparityMap<T>, vol: &CostVolume) -> Result<DisparityMap<T>> {
    ensure_same_dims(disp.dims(), (vol.width, vol.height))?;
    Ok(disp.map_valid(|u, v, d| {
        let di = d.round().to_usize()?;
        if di == 0 || di >= vol.d_max {
            return Some(d);
        }
        let (Some(cm), Some(c0), Some(cp)) = (vol.get(u, v, di - 1), vol.get(u, v, di), vol.get(u, v, di + 1)) else {
            return Some(d);
        };
        let (cm, c0, cp) = (cm as f64, c0 as f64, cp as f64);
        let den = 2.0 * cm + 2.0 * cp - 4.0 * c0;
        if den > SUBPIXEL_MIN_DENOMINATOR {
            Some(T::lit(di as f64 + (cm - cp) / den))
        } else {
            Some(d)
        }
    }))
}

/// Adds back the integer per-row shift applied by the target warp.
pub fn undo_perspective_shift<T: Scalar, M: Scalar>(
    disp: &DisparityMap<T>,
    model: &GroundPlaneShiftModel<M>,
) -> DisparityMap<T> {
    disp.map_valid(|_, v, d| Some(d + T::lit(model.row_shift(v) as f64)))
}

/// Drops pixels whose winning disparity sits next to a disparity the
/// pixel's own block cannot be matched at (the block pair leaves the image
/// or the covered area). Such a minimum may only be the edge of the search
/// range that is visible, not the true one. The pixel's own raw cost at the
/// winner must be valid as well.
pub fn reject_boundary_minima<T: Scalar>(disp: &DisparityMap<T>, raw: &CostVolume) -> Result<DisparityMap<T>> {
    ensure_same_dims(disp.dims(), (raw.width, raw.height))?;
    Ok(disp.map_valid(|u, v, d| {
        let di = d.round().to_usize()?;
        let own = raw.get(u, v, di).is_some();
        let below = di == 0 || raw.get(u, v, di - 1).is_some();
        let above = di >= raw.d_max || raw.get(u, v, di + 1).is_some();
        (own && below && above).then_some(d)
    }))
}

/// Everything the dense matcher produces for one pair.
#[derive(Debug, Clone)]
pub struct MatchOutput<T> {
    /// LR-checked, subpixel-refined residual disparities.
    pub disparity: DisparityMap<T>,
    pub wta_ref: DisparityMap<T>,
    pub wta_tar: DisparityMap<T>,
    pub lr_checked: DisparityMap<T>,
    pub volume_ref: CostVolume,
    pub volume_tar: CostVolume,
}

/// Cost volumes, WTA on both, left-right check, boundary-minimum rejection
/// and subpixel refinement. `coverage` marks the warped target pixels that
/// hold image content.
pub fn match_pair<T: Scalar>(
    reference: &GrayImage,
    target_warped: &GrayImage,
    coverage: Option<&RoadMask>,
    params: &MatcherParams,
) -> Result<MatchOutput<T>> {
    let (raw_ref, raw_tar) = raw_cost_volumes(reference, target_warped, coverage, params)?;
    let volume_ref = aggregate_costs(&raw_ref, reference, params)?;
    let volume_tar = aggregate_costs(&raw_tar, target_warped, params)?;
    let wta_ref = wta_disparity(&volume_ref);
    let wta_tar = wta_disparity(&volume_tar);
    let lr_checked = lr_consistency(&wta_ref, &wta_tar, params.delta_r)?;
    let confirmed = reject_boundary_minima(&lr_checked, &raw_ref)?;
    let disparity = subpixel_refine(&confirmed, &volume_ref)?;
    Ok(MatchOutput {
        disparity,
        wta_ref,
        wta_tar,
        lr_checked,
        volume_ref,
        volume_tar,
    })
}
