//! Raster types shared by every stage, plus their file formats in [`io`].

pub mod io;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use io::{
    load_disparity, load_disparity_png16, load_gray_image, load_road_mask, save_disparity,
    save_gray_image, save_road_mask, DisparityFormat,
};

/// Integer pixel position, `u` along a row and `v` down the columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PixelCoord {
    pub u: usize,
    pub v: usize,
}

impl PixelCoord {
    pub fn new(u: usize, v: usize) -> Self {
        Self { u, v }
    }
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions(width, height));
    }
    if width.checked_mul(height) != Some(len) {
        return Err(Error::Malformed(format!(
            "{len} values for a {width}x{height} raster"
        )));
    }
    Ok(())
}

/// Row-major 8-bit intensity raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> u8 {
        self.data[v * self.width + u]
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn row(&self, v: usize) -> &[u8] {
        &self.data[v * self.width..(v + 1) * self.width]
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }
}

/// Row-major raster of optional disparities. `None` marks an invalid pixel,
/// so a genuine disparity of zero stays distinguishable from a hole.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap<T> {
    width: usize,
    height: usize,
    data: Vec<Option<T>>,
}

impl<T: Scalar> DisparityMap<T> {
    /// Every valid value must be finite and non-negative.
    pub fn new(width: usize, height: usize, data: Vec<Option<T>>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        if let Some(i) = data
            .iter()
            .position(|d| matches!(d, Some(x) if !x.is_finite() || *x < T::zero()))
        {
            return Err(Error::Malformed(format!(
                "disparity {} at ({}, {}) is negative or not finite",
                data[i].unwrap(),
                i % width,
                i / width
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn invalid(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "empty disparity map");
        Self {
            width,
            height,
            data: vec![None; width * height],
        }
    }

    /// Builds a map from a per-pixel function. Negative or non-finite
    /// results are stored as invalid.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Option<T>) -> Self {
        assert!(width > 0 && height > 0, "empty disparity map");
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v).filter(|x| x.is_finite() && *x >= T::zero()));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Option<T> {
        self.data[v * self.width + u]
    }

    /// Stores `value`; negative or non-finite values are stored as invalid.
    pub fn set(&mut self, u: usize, v: usize, value: Option<T>) {
        self.data[v * self.width + u] = value.filter(|x| x.is_finite() && *x >= T::zero());
    }

    pub fn data(&self) -> &[Option<T>] {
        &self.data
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|d| d.is_some()).count()
    }

    /// Iterates `(u, v, disparity)` over valid pixels in row-major order.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .filter_map(move |(i, d)| d.map(|d| (i % w, i / w, d)))
    }

    /// Applies `f` to every valid pixel, keeping invalid ones invalid.
    pub fn map_valid<S: Scalar>(&self, mut f: impl FnMut(usize, usize, T) -> Option<S>) -> DisparityMap<S> {
        let w = self.width;
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, d)| {
                d.and_then(|d| f(i % w, i / w, d))
                    .filter(|x| x.is_finite() && *x >= S::zero())
            })
            .collect();
        DisparityMap {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn cast<S: Scalar>(&self) -> DisparityMap<S> {
        self.map_valid(|_, _, d| S::from(d))
    }
}

/// Boolean raster selecting road pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoadMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl RoadMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn full(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "empty mask");
        Self {
            width,
            height,
            data: vec![true; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        assert!(width > 0 && height > 0, "empty mask");
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Non-zero pixels are road.
    pub fn from_gray(img: &GrayImage) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            data: img.data().iter().map(|&x| x != 0).collect(),
        }
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> bool {
        self.data[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, road: bool) {
        self.data[v * self.width + u] = road;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Fails with [`Error::DimensionMismatch`] unless both sizes agree.
pub fn ensure_same_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(a.0, a.1, b.0, b.1));
    }
    Ok(())
}
