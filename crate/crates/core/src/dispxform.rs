//! Disparity transformation.
//!
//! Road disparities follow a line in the rotated row coordinate
//! `y(ψ) = v·cosψ − u·sinψ`: `d ≈ α₀ + α₁·y(ψ)`. For a fixed roll `ψ` the
//! best `α` is a closed-form least-squares fit with residual energy
//! `E(ψ)`. The roll is found by gradient descent on `E(ψ)` with a secant
//! step-size rule, and the fitted plane is then subtracted from the map so
//! the road becomes flat around `δ_t` and damage stands out.
//!
//! Every quantity reduces to centred scalar sums over the samples. With
//! `y' = dy/dψ = −v·sinψ − u·cosψ`,
//!
//! ```text
//! E(ψ)  = S_dd − S_yd² / S_yy
//! E'(ψ) = −2·S_yd·S_y'd / S_yy + 2·S_yd²·S_yy' / S_yy²
//! ```
//!
//! where `S_ab = Σ(a − ā)(b − b̄)`. This equals `−2dᵀ(I − YJ)∇Y·J d`
//! with `∇Y = [0 | y']` and `J = (YᵀY)⁻¹Yᵀ`.

use crate::error::{Error, Result};
use crate::imgcore::{ensure_same_dims, DisparityMap, RoadMask};
use crate::lsq::{self, is_degenerate, residual_energy};
use crate::scalar::Scalar;

/// Secant denominators below this are treated as convergence.
pub const SECANT_GUARD: f64 = 1e-15;

/// One valid pixel used for fitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSample<T> {
    pub u: T,
    pub v: T,
    pub d: T,
}

impl<T: Scalar> FitSample<T> {
    pub fn new(u: T, v: T, d: T) -> Self {
        Self { u, v, d }
    }

    /// Row coordinate after rotating the image by `ψ` (given as `sin ψ`, `cos ψ`).
    #[inline]
    fn rotated_row(&self, sin: T, cos: T) -> T {
        self.v * cos - self.u * sin
    }

    #[inline]
    fn rotated_row_derivative(&self, sin: T, cos: T) -> T {
        -self.v * sin - self.u * cos
    }
}

/// Fitted disparity projection model and roll angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadModelFit<T> {
    pub alpha0: T,
    pub alpha1: T,
    /// Roll angle in `(−π/2, π/2]`.
    pub psi: T,
    /// Residual energy in squared pixels.
    pub e_min: T,
    /// Number of samples the fit used.
    pub samples: usize,
}

impl<T: Scalar> RoadModelFit<T> {
    /// Root-mean-square residual `√(E/m)`, which is also the standard
    /// deviation of the transformed fit samples.
    pub fn residual_rms(&self) -> T {
        (self.e_min / T::of_usize(self.samples.max(1))).sqrt()
    }

    /// Model disparity at `(u, v)`.
    pub fn predict(&self, u: T, v: T) -> T {
        let (sin, cos) = self.psi.sin_cos();
        self.alpha0 + self.alpha1 * (v * cos - u * sin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RollOptions<T> {
    /// Initial learning rate.
    pub lambda0: T,
    /// Stop once an accepted step moves `ψ` by less than this (radians).
    pub delta_psi: T,
    pub max_iters: usize,
    /// Starting roll; pass the previous frame's estimate for a warm start.
    pub psi_init: T,
}

impl<T: Scalar> Default for RollOptions<T> {
    fn default() -> Self {
        Self {
            lambda0: T::lit(10.0),
            delta_psi: T::PI() / T::lit(1.8e6),
            max_iters: 100,
            psi_init: T::zero(),
        }
    }
}

impl<T: Scalar> RollOptions<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda0 > T::zero() && self.lambda0.is_finite()) {
            return Err(Error::InvalidParameter("roll.lambda0 must be positive".into()));
        }
        if !(self.delta_psi > T::zero() && self.delta_psi.is_finite()) {
            return Err(Error::InvalidParameter("roll.delta_psi must be positive".into()));
        }
        if self.max_iters < 1 {
            return Err(Error::InvalidParameter("roll.max_iters must be at least 1".into()));
        }
        if !self.psi_init.is_finite() {
            return Err(Error::InvalidParameter("roll.psi_init must be finite".into()));
        }
        Ok(())
    }
}

/// Result of the roll search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RollEstimate<T> {
    pub fit: RoadModelFit<T>,
    pub iterations: usize,
    /// False when `max_iters` ran out; `fit` is then the best iterate.
    pub converged: bool,
}

/// Wraps an angle into `(−π/2, π/2]`.
pub fn wrap_roll<T: Scalar>(psi: T) -> T {
    let pi = T::PI();
    let k = ((psi - T::FRAC_PI_2()) / pi).ceil();
    psi - k * pi
}

/// All valid pixels, restricted to the mask when one is given.
pub fn collect_samples<T: Scalar>(disp: &DisparityMap<T>, mask: Option<&RoadMask>) -> Result<Vec<FitSample<T>>> {
    if let Some(mask) = mask {
        ensure_same_dims(disp.dims(), mask.dims())?;
    }
    let samples: Vec<FitSample<T>> = disp
        .iter_valid()
        .filter(|&(u, v, _)| mask.map_or(true, |m| m.get(u, v)))
        .map(|(u, v, d)| FitSample::new(T::of_usize(u), T::of_usize(v), d))
        .collect();
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    Ok(samples)
}

/// v-disparity fit `d ≈ α₀ + α₁·v`, returning `([α₀, α₁], E_min)`.
pub fn fit_linear_model<T: Scalar>(samples: &[FitSample<T>]) -> Result<([T; 2], T)> {
    let fit = lsq::fit_line(samples.iter().map(|s| (s.v, s.d)))?;
    Ok(([fit.intercept, fit.slope], fit.energy))
}

/// Fit in the row coordinate rotated by `ψ`, returning `([α₀, α₁], E_min(ψ))`.
/// Only coordinates are rotated; no raster is resampled.
pub fn rotated_energy<T: Scalar>(samples: &[FitSample<T>], psi: T) -> Result<([T; 2], T)> {
    let (sin, cos) = psi.sin_cos();
    let fit = lsq::fit_line(samples.iter().map(|s| (s.rotated_row(sin, cos), s.d)))?;
    Ok(([fit.intercept, fit.slope], fit.energy))
}

/// Analytic `dE_min/dψ`.
pub fn energy_gradient<T: Scalar>(samples: &[FitSample<T>], psi: T) -> Result<T> {
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    let (sin, cos) = psi.sin_cos();
    let n = T::of_usize(samples.len());
    let (mut sy, mut syp, mut sd) = (T::zero(), T::zero(), T::zero());
    let mut max_abs_y = T::zero();
    for s in samples {
        let y = s.rotated_row(sin, cos);
        sy += y;
        syp += s.rotated_row_derivative(sin, cos);
        sd += s.d;
        max_abs_y = max_abs_y.max(y.abs());
    }
    let (my, myp, md) = (sy / n, syp / n, sd / n);
    let (mut s_yy, mut s_yd, mut s_pd, mut s_yp) = (T::zero(), T::zero(), T::zero(), T::zero());
    for s in samples {
        let dy = s.rotated_row(sin, cos) - my;
        let dp = s.rotated_row_derivative(sin, cos) - myp;
        let dd = s.d - md;
        s_yy += dy * dy;
        s_yd += dy * dd;
        s_pd += dp * dd;
        s_yp += dy * dp;
    }
    if samples.len() < 2 || is_degenerate(s_yy, samples.len(), max_abs_y) {
        return Err(Error::RankDeficient);
    }
    let two = T::lit(2.0);
    Ok(-two * s_yd * s_pd / s_yy + two * s_yd * s_yd * s_yp / (s_yy * s_yy))
}

/// Gradient descent on `E_min(ψ)`.
///
/// Steps are `ψ ← ψ − λ·∇E(ψ)` with the secant update
/// `λ ← λ·∇E(ψₖ) / (∇E(ψₖ) − ∇E(ψₖ₊₁))`. The descent runs on `E / dᵀd`,
/// which has the same minimiser but no dependence on the number of samples
/// or the disparity scale, so `λ₀` means the same thing on every map. A step
/// that would raise the energy is halved until it does not. Iteration stops
/// once an accepted step is shorter than `δ_ψ` or the gradient difference
/// vanishes.
pub fn estimate_roll<T: Scalar>(samples: &[FitSample<T>], opts: &RollOptions<T>) -> Result<RollEstimate<T>> {
    opts.validate()?;
    let norm = {
        let dd: T = samples.iter().map(|s| s.d * s.d).sum();
        if dd > T::zero() { dd } else { T::one() }
    };
    let energy = |psi: T| rotated_energy(samples, psi).map(|(_, e)| e / norm);
    let gradient = |psi: T| energy_gradient(samples, psi).map(|g| g / norm);

    let mut psi = wrap_roll(opts.psi_init);
    let mut e = energy(psi)?;
    let mut g = gradient(psi)?;
    let mut lambda = opts.lambda0;
    let mut converged = false;
    let mut iterations = 0;
    let guard = T::lit(SECANT_GUARD);

    while iterations < opts.max_iters {
        iterations += 1;
        if g == T::zero() {
            converged = true;
            break;
        }
        let mut step_lambda = lambda;
        let accepted = loop {
            let candidate = psi - step_lambda * g;
            match energy(candidate) {
                Ok(ec) if ec <= e => break Some((candidate, ec)),
                _ => {}
            }
            step_lambda = step_lambda / T::lit(2.0);
            if (step_lambda * g).abs() < opts.delta_psi {
                break None;
            }
        };
        let Some((candidate, ec)) = accepted else {
            // no descent step longer than δ_ψ exists
            converged = true;
            break;
        };
        let gc = gradient(candidate)?;
        let step = (candidate - psi).abs();
        let denom = g - gc;
        psi = wrap_roll(candidate);
        e = ec;
        if step < opts.delta_psi || denom.abs() < guard {
            converged = true;
            break;
        }
        let next = step_lambda * g / denom;
        lambda = if next.is_finite() && next > T::zero() { next } else { opts.lambda0 };
        g = gc;
    }

    let (alpha, e_min) = rotated_energy(samples, psi)?;
    Ok(RollEstimate {
        fit: RoadModelFit {
            alpha0: alpha[0],
            alpha1: alpha[1],
            psi,
            e_min,
            samples: samples.len(),
        },
        iterations,
        converged,
    })
}

/// Model fit at a fixed roll angle.
pub fn fit_at_roll<T: Scalar>(samples: &[FitSample<T>], psi: T) -> Result<RoadModelFit<T>> {
    let psi = wrap_roll(psi);
    let (alpha, e_min) = rotated_energy(samples, psi)?;
    Ok(RoadModelFit {
        alpha0: alpha[0],
        alpha1: alpha[1],
        psi,
        e_min,
        samples: samples.len(),
    })
}

/// Drops samples whose residual exceeds `k` times the RMS residual.
pub fn trim_outliers<T: Scalar>(samples: &[FitSample<T>], fit: &RoadModelFit<T>, k: T) -> Vec<FitSample<T>> {
    let limit = k * fit.residual_rms();
    samples
        .iter()
        .copied()
        .filter(|s| (s.d - fit.predict(s.u, s.v)).abs() <= limit)
        .collect()
}

/// Roll search followed by an optional single 3σ trimming pass, warm
/// started from the first estimate.
pub fn estimate_road_model<T: Scalar>(
    samples: &[FitSample<T>],
    opts: &RollOptions<T>,
    trim: bool,
) -> Result<RollEstimate<T>> {
    let first = estimate_roll(samples, opts)?;
    if !trim {
        return Ok(first);
    }
    let kept = trim_outliers(samples, &first.fit, T::lit(3.0));
    if kept.len() == samples.len() || kept.len() < 2 {
        return Ok(first);
    }
    let warm = RollOptions {
        psi_init: first.fit.psi,
        ..*opts
    };
    estimate_roll(&kept, &warm).or(Ok(first))
}

/// `ℓ′ = ℓ − α₀ + α₁(u·sinψ − v·cosψ) + δ_t` on every valid pixel. Results
/// below zero (δ_t too small for that pixel) become invalid.
pub fn transform_disparities<T: Scalar>(disp: &DisparityMap<T>, fit: &RoadModelFit<T>, delta_t: T) -> DisparityMap<T> {
    let (sin, cos) = fit.psi.sin_cos();
    disp.map_valid(|u, v, d| {
        let (u, v) = (T::of_usize(u), T::of_usize(v));
        Some(d - fit.alpha0 + fit.alpha1 * (u * sin - v * cos) + delta_t)
    })
}

/// Energy of the fit samples about a given model, for diagnostics.
pub fn model_energy<T: Scalar>(samples: &[FitSample<T>], fit: &RoadModelFit<T>) -> T {
    let (sin, cos) = fit.psi.sin_cos();
    residual_energy(
        samples.iter().map(|s| (s.rotated_row(sin, cos), s.d)),
        fit.alpha0,
        fit.alpha1,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plane_samples(alpha0: f64, alpha1: f64, psi: f64, w: usize, h: usize, step: usize) -> Vec<FitSample<f64>> {
        let (sin, cos) = psi.sin_cos();
        let mut out = Vec::new();
        for v in (0..h).step_by(step) {
            for u in (0..w).step_by(step) {
                let (uf, vf) = (u as f64, v as f64);
                out.push(FitSample::new(uf, vf, alpha0 + alpha1 * (vf * cos - uf * sin)));
            }
        }
        out
    }

    fn lcg(state: &mut u64) -> f64 {
        *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*state >> 11) as f64 / (1u64 << 53) as f64
    }

    fn random_samples(seed: u64, count: usize) -> Vec<FitSample<f64>> {
        let mut s = seed;
        (0..count)
            .map(|_| FitSample::new(lcg(&mut s) * 320.0, lcg(&mut s) * 240.0, 5.0 + lcg(&mut s) * 40.0))
            .collect()
    }

    /// Least squares through the raw normal equations `VᵀV α = Vᵀd`.
    fn normal_equations(samples: &[FitSample<f64>], psi: f64) -> ([f64; 2], f64) {
        let (sin, cos) = psi.sin_cos();
        let ys: Vec<f64> = samples.iter().map(|s| s.v * cos - s.u * sin).collect();
        let n = samples.len() as f64;
        let sy: f64 = ys.iter().sum();
        let syy: f64 = ys.iter().map(|y| y * y).sum();
        let sd: f64 = samples.iter().map(|s| s.d).sum();
        let syd: f64 = ys.iter().zip(samples).map(|(y, s)| y * s.d).sum();
        let det = n * syy - sy * sy;
        let a0 = (syy * sd - sy * syd) / det;
        let a1 = (n * syd - sy * sd) / det;
        let e = ys.iter().zip(samples).map(|(y, s)| (s.d - a0 - a1 * y).powi(2)).sum();
        ([a0, a1], e)
    }

    #[test]
    fn collect_examples() {
        let disp = DisparityMap::new(2, 2, vec![Some(1.0f64), Some(2.0), Some(3.0), Some(4.0)]).unwrap();
        assert_eq!(collect_samples(&disp, None).unwrap().len(), 4);
        let mask = RoadMask::from_fn(2, 2, |_, v| v == 1);
        let s = collect_samples(&disp, Some(&mask)).unwrap();
        assert_eq!(s, vec![FitSample::new(0.0, 1.0, 3.0), FitSample::new(1.0, 1.0, 4.0)]);
        let empty = DisparityMap::<f64>::invalid(3, 3);
        assert!(matches!(collect_samples(&empty, None), Err(Error::NoSamples)));
    }

    #[test]
    fn linear_model_examples() {
        let exact: Vec<_> = (0..40).map(|v| FitSample::new(3.0, v as f64, 40.0 - 0.1 * v as f64)).collect();
        let (alpha, e) = fit_linear_model(&exact).unwrap();
        assert!((alpha[0] - 40.0).abs() < 1e-12 && (alpha[1] + 0.1).abs() < 1e-13);
        assert!(e < 1e-20);

        let three = [
            FitSample::new(0.0f64, 0.0, 1.0),
            FitSample::new(0.0, 1.0, 2.0),
            FitSample::new(0.0, 2.0, 2.0),
        ];
        let (alpha, e) = fit_linear_model(&three).unwrap();
        assert!((alpha[0] - 7.0 / 6.0).abs() < 1e-14);
        assert!((alpha[1] - 0.5).abs() < 1e-14);
        assert!((e - 1.0 / 6.0).abs() < 1e-14);

        let one_row = [FitSample::new(0.0, 4.0, 1.0), FitSample::new(5.0, 4.0, 2.0)];
        assert!(matches!(fit_linear_model(&one_row), Err(Error::RankDeficient)));
    }

    #[test]
    fn rotated_energy_at_zero_matches_linear_model() {
        let s = random_samples(11, 30);
        assert_eq!(rotated_energy(&s, 0.0).unwrap(), fit_linear_model(&s).unwrap());
    }

    #[test]
    fn rotated_plane_has_zero_residual_at_its_roll() {
        let s = plane_samples(35.0, 0.12, 0.05, 60, 40, 3);
        let (alpha, e) = rotated_energy(&s, 0.05).unwrap();
        assert!((alpha[0] - 35.0).abs() < 1e-10 && (alpha[1] - 0.12).abs() < 1e-12);
        assert!(e < 1e-18);
        assert!(rotated_energy(&s, 0.0).unwrap().1 > 1e-3);
    }

    #[test]
    fn rotated_energy_matches_normal_equations() {
        for seed in 0..5 {
            let s = random_samples(seed, 20);
            for psi in [-0.3, 0.0, 0.07, 0.4] {
                let (a, e) = rotated_energy(&s, psi).unwrap();
                let (a_ref, e_ref) = normal_equations(&s, psi);
                assert!((a[0] - a_ref[0]).abs() <= 1e-9 * a_ref[0].abs().max(1.0));
                assert!((a[1] - a_ref[1]).abs() <= 1e-9 * a_ref[1].abs().max(1.0));
                assert!((e - e_ref).abs() <= 1e-9 * e_ref);
            }
        }
    }

    #[test]
    fn gradient_vanishes_at_exact_fit() {
        let s = plane_samples(30.0, 0.1, 0.0, 50, 50, 2);
        let g = energy_gradient(&s, 0.0).unwrap();
        assert!(g.abs() < 1e-9, "{g}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let s = random_samples(99, 20);
        let h = 1e-6;
        let fd = (rotated_energy(&s, 0.1 + h).unwrap().1 - rotated_energy(&s, 0.1 - h).unwrap().1) / (2.0 * h);
        let g = energy_gradient(&s, 0.1).unwrap();
        assert!(((g - fd) / fd).abs() < 1e-5, "{g} vs {fd}");
    }

    #[test]
    fn gradient_of_a_single_rotated_row_is_rank_deficient() {
        // all samples on the line y(ψ) = const for ψ = atan(1/2)
        let psi = 0.5f64.atan();
        let (sin, cos) = psi.sin_cos();
        let s: Vec<_> = (0..10)
            .map(|k| {
                let t = k as f64;
                FitSample::new(t * cos, 10.0 + t * sin, 5.0 + t)
            })
            .collect();
        assert!(matches!(energy_gradient(&s, psi), Err(Error::RankDeficient)));
        assert!(matches!(rotated_energy(&s, psi), Err(Error::RankDeficient)));
    }

    #[test]
    fn zero_roll_plane_converges_immediately() {
        let s = plane_samples(40.0, 0.12, 0.0, 320, 240, 4);
        let est = estimate_roll(&s, &RollOptions::default()).unwrap();
        assert!(est.converged);
        assert!(est.iterations <= 2, "{} iterations", est.iterations);
        assert!(est.fit.psi.abs() <= RollOptions::<f64>::default().delta_psi);
    }

    #[test]
    fn rolled_plane_is_recovered() {
        for psi_true in [-0.1, -0.03, 0.01, 0.05, 0.1] {
            let s = plane_samples(40.0, 0.12, psi_true, 320, 240, 4);
            let est = estimate_roll(&s, &RollOptions::default()).unwrap();
            assert!(est.converged);
            assert!((est.fit.psi - psi_true).abs() < 1e-4, "{psi_true}: {}", est.fit.psi);
            assert!((est.fit.alpha0 - 40.0).abs() < 1e-3);
        }
    }

    #[test]
    fn warm_start_converges_quickly() {
        let s = plane_samples(40.0, 0.12, 0.04, 320, 240, 4);
        let cold = estimate_roll(&s, &RollOptions::default()).unwrap();
        let warm = estimate_roll(
            &s,
            &RollOptions {
                psi_init: cold.fit.psi,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(warm.iterations <= cold.iterations);
        assert!((warm.fit.psi - 0.04).abs() < 1e-4);
    }

    #[test]
    fn max_iters_reports_non_convergence() {
        let s = plane_samples(40.0, 0.12, 0.08, 320, 240, 8);
        let opts = RollOptions {
            max_iters: 1,
            delta_psi: 1e-15,
            ..Default::default()
        };
        let est = estimate_roll(&s, &opts).unwrap();
        assert_eq!(est.iterations, 1);
        assert!(!est.converged);
        assert!(est.fit.e_min <= rotated_energy(&s, 0.0).unwrap().1);
    }

    #[test]
    fn roll_options_are_validated() {
        let s = plane_samples(40.0, 0.12, 0.0, 40, 40, 4);
        let bad = RollOptions {
            lambda0: 0.0,
            ..Default::default()
        };
        assert!(estimate_roll(&s, &bad).is_err());
    }

    #[test]
    fn wrap_into_half_open_interval() {
        use std::f64::consts::{FRAC_PI_2, PI};
        assert_eq!(wrap_roll(FRAC_PI_2), FRAC_PI_2);
        assert!((wrap_roll(-FRAC_PI_2) - FRAC_PI_2).abs() < 1e-15);
        assert!((wrap_roll(PI + 0.1) - 0.1).abs() < 1e-12);
        assert!((wrap_roll(-PI - 0.1) + 0.1).abs() < 1e-12);
        assert_eq!(wrap_roll(0.3), 0.3);
    }

    #[test]
    fn transform_examples() {
        let fit = RoadModelFit {
            alpha0: 40.0,
            alpha1: -0.1,
            psi: 0.0,
            e_min: 0.0,
            samples: 1,
        };
        let disp = DisparityMap::new(1, 101, (0..101).map(|v| (v == 100).then_some(31.0f64)).collect()).unwrap();
        let out = transform_disparities(&disp, &fit, 30.0);
        assert!((out.get(0, 100).unwrap() - 31.0).abs() < 1e-12);
        assert_eq!(out.valid_count(), 1);
    }

    #[test]
    fn transformed_plane_is_flat() {
        let (w, h) = (64, 48);
        let (sin, cos) = 0.03f64.sin_cos();
        let mut disp = DisparityMap::from_fn(w, h, |u, v| Some(30.0 + 0.15 * (v as f64 * cos - u as f64 * sin)));
        let samples = collect_samples(&disp, None).unwrap();
        let est = estimate_roll(&samples, &RollOptions::default()).unwrap();
        // pothole pixel 2 px off the plane
        let d = disp.get(10, 40).unwrap();
        disp.set(10, 40, Some(d + 2.0));
        let out = transform_disparities(&disp, &est.fit, 30.0);
        for (u, v, x) in out.iter_valid() {
            let expected = if (u, v) == (10, 40) { 32.0 } else { 30.0 };
            assert!((x - expected).abs() < 1e-6, "({u},{v}) {x}");
        }
    }

    #[test]
    fn trimming_removes_gross_outliers() {
        let mut s = plane_samples(40.0, 0.12, 0.02, 160, 120, 4);
        for k in 0..10 {
            s[k * 50].d -= 15.0;
        }
        let est = estimate_road_model(&s, &RollOptions::default(), true).unwrap();
        assert!((est.fit.psi - 0.02).abs() < 1e-4);
        assert!(est.fit.samples == s.len() - 10);
    }

    #[test]
    fn works_in_single_precision() {
        let s: Vec<FitSample<f32>> = plane_samples(40.0, 0.12, 0.03, 320, 240, 8)
            .into_iter()
            .map(|s| FitSample::new(s.u as f32, s.v as f32, s.d as f32))
            .collect();
        let est = estimate_roll(&s, &RollOptions::default()).unwrap();
        assert!((est.fit.psi - 0.03).abs() < 2e-3, "{}", est.fit.psi);
    }

    proptest! {
        #[test]
        fn energy_is_the_residual_norm(seed in any::<u64>(), psi in -1.2f64..1.2) {
            let s = random_samples(seed, 25);
            let (alpha, e) = rotated_energy(&s, psi).unwrap();
            let (sin, cos) = psi.sin_cos();
            let direct: f64 = s.iter().map(|x| (x.d - alpha[0] - alpha[1] * (x.v * cos - x.u * sin)).powi(2)).sum();
            prop_assert!(e >= 0.0);
            prop_assert!((e - direct).abs() <= 1e-9 * direct.max(1e-300));
        }

        #[test]
        fn roll_never_increases_energy(seed in any::<u64>()) {
            let s = random_samples(seed, 40);
            let est = estimate_roll(&s, &RollOptions::default()).unwrap();
            let e0 = rotated_energy(&s, 0.0).unwrap().1;
            prop_assert!(est.fit.e_min <= e0 + 1e-9);
            prop_assert!(est.fit.psi > -std::f64::consts::FRAC_PI_2 && est.fit.psi <= std::f64::consts::FRAC_PI_2);
        }

        #[test]
        fn constructed_minimum_is_found(psi_true in -0.12f64..0.12, a0 in 10.0f64..60.0, a1 in 0.05f64..0.3) {
            let s = plane_samples(a0, a1, psi_true, 200, 150, 7);
            let est = estimate_roll(&s, &RollOptions::default()).unwrap();
            let e_true = rotated_energy(&s, psi_true).unwrap().1;
            prop_assert!(est.fit.e_min <= e_true + 1e-9, "{} > {}", est.fit.e_min, e_true);
        }
    }
}
