//! Synthetic road scenes with exact ground truth.
//!
//! A textured ground plane is seen by a rectified rig with focal length
//! `f`, principal point `(u_o, v_o)`, baseline `t_c`, plane offset `β`,
//! pitch `θ`, roll `ψ` and plane-normal component `n_x`. Its disparity is
//!
//! ```text
//! d(u, v) = α₀ + α₁·(v·cosψ − u·sinψ)
//! α₀ = (t_c·n_x/β)(f·sinθ − v_o·cosθ),   α₁ = (t_c·n_x/β)·cosθ
//! ```
//!
//! Defects are disks whose disparity is offset by a constant.
//!
//! The texture is three octaves of value noise. Lattice values come from a
//! 64-bit linear congruential generator (Knuth's MMIX constants
//! `a = 6364136223846793005`, `c = 1442695040888963407`) keyed on the seed,
//! octave and lattice coordinates, so any pixel can be evaluated on its own
//! and the output never depends on evaluation order.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imgcore::{DisparityMap, GrayImage, PixelCoord, RoadMask};

const LCG_MUL: u64 = 6364136223846793005;
const LCG_ADD: u64 = 1442695040888963407;

/// Lattice spacing and amplitude of each texture octave.
const OCTAVES: [(f64, f64); 3] = [(5.0, 0.5), (2.5, 0.3), (1.25, 0.2)];
const CONTRAST: f64 = 1.2;
/// Fixed-point iterations used to invert the horizontal warp.
const WARP_ITERATIONS: usize = 8;

#[inline]
fn lcg(x: u64) -> u64 {
    x.wrapping_mul(LCG_MUL).wrapping_add(LCG_ADD)
}

/// Uniform value in `[0, 1)` keyed on `(seed, stream, i, j)`.
fn hash_unit(seed: u64, stream: u64, i: i64, j: i64) -> f64 {
    let mut x = lcg(seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    x = lcg(x ^ i as u64);
    x = lcg(x ^ (j as u64).rotate_left(32));
    x = lcg(lcg(x));
    (x >> 11) as f64 / (1u64 << 53) as f64
}

/// A disk of constant disparity offset; negative offsets are potholes.
#[derive(Debug, Clone, PartialEq)]
pub struct Defect {
    pub center: PixelCoord,
    pub radius: f64,
    pub depth_offset: f64,
}

impl Defect {
    pub fn contains(&self, u: f64, v: f64) -> bool {
        let du = u - self.center.u as f64;
        let dv = v - self.center.v as f64;
        du * du + dv * dv <= self.radius * self.radius
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Focal length in pixels.
    pub f: f64,
    pub u_o: f64,
    pub v_o: f64,
    /// Baseline in metres.
    pub t_c: f64,
    /// Plane offset (camera height) in metres.
    pub beta: f64,
    /// Pitch in radians, inside `(0, π)`.
    pub theta: f64,
    /// Roll in radians.
    pub psi: f64,
    /// Plane-normal component entering the disparity, `|n_x| ≤ 1`.
    pub n_x: f64,
    pub texture_seed: u64,
    pub defects: Vec<Defect>,
    /// Standard deviation of additive Gaussian intensity noise; 0 disables it.
    pub noise_sigma: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self::road_scene(320, 240, 12.0, 40.0, 0.0, 1)
    }
}

impl SceneSpec {
    /// A defect-free scene whose disparity at zero roll runs from `d_top` on
    /// the first row to `d_bottom` on the last. Pitch and baseline are solved
    /// for; `f = width`, the principal point is the image centre, `β = 1.5 m`
    /// and `n_x = 1`.
    pub fn road_scene(width: usize, height: usize, d_top: f64, d_bottom: f64, psi: f64, seed: u64) -> Self {
        let f = width as f64;
        let v_o = height as f64 / 2.0;
        let above = v_o;
        let below = (height as f64 - 1.0) - v_o;
        let ratio = d_bottom / d_top;
        let theta = ((below + ratio * above) / ((ratio - 1.0) * f)).atan();
        let k = d_top / (f * theta.sin() - v_o * theta.cos());
        let beta = 1.5;
        Self {
            width,
            height,
            f,
            u_o: width as f64 / 2.0,
            v_o,
            t_c: k * beta,
            beta,
            theta,
            psi,
            n_x: 1.0,
            texture_seed: seed,
            defects: Vec::new(),
            noise_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::BadScene(msg));
        if self.width == 0 || self.height == 0 {
            return bad(format!("empty image {}x{}", self.width, self.height));
        }
        if !(self.f > 0.0 && self.f.is_finite()) {
            return bad(format!("focal length {} must be positive", self.f));
        }
        if !(self.t_c > 0.0 && self.t_c.is_finite()) {
            return bad(format!("baseline {} must be positive", self.t_c));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("plane offset {} must be positive", self.beta));
        }
        if !(self.theta > 0.0 && self.theta < std::f64::consts::PI) {
            return bad(format!("pitch {} outside (0, pi)", self.theta));
        }
        if !(self.n_x.abs() <= 1.0) {
            return bad(format!("n_x {} outside [-1, 1]", self.n_x));
        }
        if ![self.u_o, self.v_o, self.psi].iter().all(|x| x.is_finite()) {
            return bad("non-finite principal point or roll".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise sigma {} must be non-negative", self.noise_sigma));
        }
        if let Some(d) = self.defects.iter().find(|d| !(d.radius >= 1.0) || !d.depth_offset.is_finite()) {
            return bad(format!("defect {d:?} needs radius >= 1 and a finite offset"));
        }
        Ok(())
    }

    /// `(α₀, α₁)` of the plane.
    pub fn plane_coefficients(&self) -> (f64, f64) {
        let k = self.t_c * self.n_x / self.beta;
        let (sin, cos) = self.theta.sin_cos();
        (k * (self.f * sin - self.v_o * cos), k * cos)
    }

    /// Plane disparity at a continuous position.
    pub fn plane_disparity(&self, u: f64, v: f64) -> f64 {
        let (a0, a1) = self.plane_coefficients();
        let (sin, cos) = self.psi.sin_cos();
        a0 + a1 * (v * cos - u * sin)
    }

    /// Disparity including defects at a continuous position.
    pub fn disparity_at(&self, u: f64, v: f64) -> f64 {
        let offset: f64 = self
            .defects
            .iter()
            .filter(|d| d.contains(u, v))
            .map(|d| d.depth_offset)
            .sum();
        self.plane_disparity(u, v) + offset
    }

    /// True where no defect covers the pixel.
    pub fn defect_free_mask(&self) -> RoadMask {
        RoadMask::from_fn(self.width, self.height, |u, v| {
            !self.defects.iter().any(|d| d.contains(u as f64, v as f64))
        })
    }

    /// Pixels of the reference image whose match lies inside the target
    /// image.
    pub fn visible_mask(&self) -> RoadMask {
        RoadMask::from_fn(self.width, self.height, |u, v| {
            u as f64 - self.disparity_at(u as f64, v as f64) >= 0.0
        })
    }

    /// Texture intensity (unquantised, in `[0, 255]`) at a continuous position.
    pub fn texture(&self, x: f64, y: f64) -> f64 {
        let mut n = 0.0;
        for (octave, &(cell, amp)) in OCTAVES.iter().enumerate() {
            n += amp * value_noise(self.texture_seed, octave as u64, x / cell, y / cell);
        }
        (127.5 + CONTRAST * 255.0 * (n - 0.5)).clamp(0.0, 255.0)
    }

    fn noise_at(&self, stream: u64, u: usize, v: usize) -> f64 {
        if self.noise_sigma == 0.0 {
            return 0.0;
        }
        // Box-Muller on two keyed uniforms
        let a = hash_unit(self.texture_seed, stream, u as i64, v as i64);
        let b = hash_unit(self.texture_seed, stream + 1, u as i64, v as i64);
        let radius = (-2.0 * (1.0 - a).ln()).sqrt();
        self.noise_sigma * radius * (2.0 * std::f64::consts::PI * b).cos()
    }
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn value_noise(seed: u64, octave: u64, x: f64, y: f64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (tx, ty) = (smoothstep(x - x0), smoothstep(y - y0));
    let (i, j) = (x0 as i64, y0 as i64);
    let stream = 16 + octave;
    let c00 = hash_unit(seed, stream, i, j);
    let c10 = hash_unit(seed, stream, i + 1, j);
    let c01 = hash_unit(seed, stream, i, j + 1);
    let c11 = hash_unit(seed, stream, i + 1, j + 1);
    let top = c00 + (c10 - c00) * tx;
    let bottom = c01 + (c11 - c01) * tx;
    top + (bottom - top) * ty
}

fn quantize(x: f64) -> u8 {
    x.round().clamp(0.0, 255.0) as u8
}

/// Analytic disparity of the scene at every pixel.
pub fn ground_truth_disparity(spec: &SceneSpec) -> Result<DisparityMap<f64>> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut data = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let (uf, vf) = (u as f64, v as f64);
            let plane = spec.plane_disparity(uf, vf);
            if !(plane >= 0.0) {
                return Err(Error::BadScene(format!(
                    "plane disparity {plane:.4} at ({u}, {v}): the horizon is inside the image"
                )));
            }
            let d = spec.disparity_at(uf, vf);
            if !(d >= 0.0) {
                return Err(Error::BadScene(format!("negative disparity {d:.4} at ({u}, {v})")));
            }
            data.push(Some(d));
        }
    }
    DisparityMap::new(w, h, data)
}

/// Renders the reference and target images.
///
/// The target pixel `(u, v)` shows the texture at the reference position
/// `u_r` with `u_r − d(u_r, v) = u`, found by fixed-point iteration and
/// sampled from the continuous texture. Positions that fall outside the
/// reference image are black.
pub fn render_stereo_pair(spec: &SceneSpec) -> Result<(GrayImage, GrayImage)> {
    ground_truth_disparity(spec)?;
    let (w, h) = (spec.width, spec.height);
    let rows: Vec<(Vec<u8>, Vec<u8>)> = (0..h)
        .into_par_iter()
        .map(|v| {
            let vf = v as f64;
            let mut reference = Vec::with_capacity(w);
            let mut target = Vec::with_capacity(w);
            for u in 0..w {
                let uf = u as f64;
                reference.push(quantize(spec.texture(uf, vf) + spec.noise_at(2, u, v)));
                let mut ur = uf + spec.disparity_at(uf, vf);
                for _ in 0..WARP_ITERATIONS {
                    ur = uf + spec.disparity_at(ur, vf);
                }
                let value = if (0.0..=(w - 1) as f64).contains(&ur) {
                    quantize(spec.texture(ur, vf) + spec.noise_at(4, u, v))
                } else {
                    0
                };
                target.push(value);
            }
            (reference, target)
        })
        .collect();
    let (mut ref_data, mut tar_data) = (Vec::with_capacity(w * h), Vec::with_capacity(w * h));
    for (r, t) in rows {
        ref_data.extend(r);
        tar_data.extend(t);
    }
    Ok((GrayImage::new(w, h, ref_data)?, GrayImage::new(w, h, tar_data)?))
}
