//! Matching costs and cost-volume assembly.
//!
//! All costs compare a left pixel `(x, y)` against the right-image pixel
//! `(x - d, y)` for a non-negative integer disparity `d`; a positive
//! disparity shifts a scene point leftwards in the right image. Cells whose
//! matched column falls off-frame carry the invalid marker (NaN) and are
//! skipped by every aggregation and selection step downstream.
//!
//! Summation order inside a window is row-major (rows outer, columns inner)
//! and is part of the contract: volumes are bit-reproducible for a given
//! input regardless of evaluation order or thread count, because each cell
//! depends only on its own pixels.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::Real;

/// Grayscale image with every value finite and in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct GrayImage<T = f64> {
    grid: Grid<T>,
}

impl<T: Real> GrayImage<T> {
    /// Panics if `data.len() != width * height`; rejects values outside
    /// `[0, 1]`.
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        for (i, v) in data.iter().enumerate() {
            if !(v.is_finite() && *v >= T::zero() && *v <= T::one()) {
                return Err(Error::BadParameter(format!(
                    "intensity {v} at pixel ({}, {}) outside [0, 1]",
                    i % width,
                    i / width
                )));
            }
        }
        Ok(GrayImage { grid: Grid::from_vec(width, height, data) })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::from_vec(width, height, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.grid.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.grid.height()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.grid.get(x, y)
    }

    pub fn data(&self) -> &[T] {
        self.grid.data()
    }

    pub fn hflip(&self) -> Self {
        GrayImage { grid: self.grid.hflip() }
    }
}

/// Odd-sized rectangular window, e.g. 5x5 or 7x3.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    width: usize,
    height: usize,
}

impl WindowSpec {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || width % 2 == 0 || height % 2 == 0 {
            return Err(Error::BadWindow(width, height));
        }
        Ok(WindowSpec { width, height })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn half_width(&self) -> i64 {
        (self.width / 2) as i64
    }

    #[inline]
    pub fn half_height(&self) -> i64 {
        (self.height / 2) as i64
    }

    #[inline]
    pub fn area(&self) -> usize {
        self.width * self.height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostKind {
    /// Absolute intensity difference.
    Ad,
    /// Squared intensity difference.
    Sd,
    /// `1 - NCC` over a window.
    Ncc,
}

/// Absolute difference at a single cell; `None` when the matched column is
/// off-frame.
#[inline]
pub fn cost_ad<T: Real>(left: &GrayImage<T>, right: &GrayImage<T>, x: usize, y: usize, d: u32) -> Option<T> {
    let xm = x as i64 - d as i64;
    if xm < 0 {
        return None;
    }
    Some((left.get(x, y) - right.get(xm as usize, y)).abs())
}

/// Squared difference; exactly the square of the absolute difference.
#[inline]
pub fn cost_sd<T: Real>(left: &GrayImage<T>, right: &GrayImage<T>, x: usize, y: usize, d: u32) -> Option<T> {
    let ad = cost_ad(left, right, x, y, d)?;
    Some(ad * ad)
}

/// Normalized cross-correlation of the two windows centred on `(x, y)` and
/// `(x - d, y)`. Returns the score in `[-1, 1]`; `None` when either window
/// does not fit its frame. A zero-variance patch on either side yields 0.
pub fn cost_ncc<T: Real>(
    left: &GrayImage<T>,
    right: &GrayImage<T>,
    x: usize,
    y: usize,
    d: u32,
    window: WindowSpec,
) -> Option<T> {
    let (hw, hh) = (window.half_width(), window.half_height());
    let (xi, yi) = (x as i64, y as i64);
    let xm = xi - d as i64;
    let fits = |cx: i64| cx - hw >= 0 && cx + hw < left.width() as i64;
    if !fits(xi) || !fits(xm) || yi - hh < 0 || yi + hh >= left.height() as i64 {
        return None;
    }

    let mut sum_l = T::zero();
    let mut sum_r = T::zero();
    for dy in -hh..=hh {
        for dx in -hw..=hw {
            sum_l += left.get((xi + dx) as usize, (yi + dy) as usize);
            sum_r += right.get((xm + dx) as usize, (yi + dy) as usize);
        }
    }
    let n = T::of(window.area() as f64);
    let mu_l = sum_l / n;
    let mu_r = sum_r / n;

    let mut num = T::zero();
    let mut var_l = T::zero();
    let mut var_r = T::zero();
    for dy in -hh..=hh {
        for dx in -hw..=hw {
            let a = left.get((xi + dx) as usize, (yi + dy) as usize) - mu_l;
            let b = right.get((xm + dx) as usize, (yi + dy) as usize) - mu_r;
            num += a * b;
            var_l += a * a;
            var_r += b * b;
        }
    }
    let denom = (var_l * var_r).sqrt();
    if denom == T::zero() {
        return Some(T::zero());
    }
    Some((num / denom).min(T::one()).max(-T::one()))
}

/// Dense cost volume over an inclusive disparity range, laid out
/// `(y, x, d)` row-major with disparity contiguous per pixel. Invalid cells
/// hold NaN.
#[derive(Debug, Clone)]
pub struct CostVolume<T = f64> {
    width: usize,
    height: usize,
    d_min: u32,
    d_max: u32,
    data: Vec<T>,
}

impl<T: Real> CostVolume<T> {
    pub fn new_invalid(width: usize, height: usize, d_min: u32, d_max: u32) -> Result<Self> {
        if d_max < d_min {
            return Err(Error::EmptyDisparityRange { d_min, d_max });
        }
        let n = (d_max - d_min + 1) as usize;
        Ok(CostVolume { width, height, d_min, d_max, data: vec![T::nan(); width * height * n] })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn d_min(&self) -> u32 {
        self.d_min
    }

    #[inline]
    pub fn d_max(&self) -> u32 {
        self.d_max
    }

    /// Number of disparity hypotheses per pixel.
    #[inline]
    pub fn n_disp(&self) -> usize {
        (self.d_max - self.d_min + 1) as usize
    }

    /// Absolute disparity for a hypothesis index.
    #[inline]
    pub fn disparity(&self, di: usize) -> u32 {
        self.d_min + di as u32
    }

    #[inline]
    fn idx(&self, x: usize, y: usize, di: usize) -> usize {
        debug_assert!(x < self.width && y < self.height && di < self.n_disp());
        (y * self.width + x) * self.n_disp() + di
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, di: usize) -> T {
        self.data[self.idx(x, y, di)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, di: usize, v: T) {
        let i = self.idx(x, y, di);
        self.data[i] = v;
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize, di: usize) -> bool {
        self.get(x, y, di).is_finite()
    }

    /// Costs of every hypothesis at one pixel.
    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[T] {
        let n = self.n_disp();
        let base = (y * self.width + x) * n;
        &self.data[base..base + n]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn max_finite_cost(&self) -> Option<T> {
        self.data
            .iter()
            .filter(|v| v.is_finite())
            .fold(None, |acc, &v| Some(acc.map_or(v, |m: T| m.max(v))))
    }
}

/// Builds the full cost volume. `window` is used by the NCC kind only; the
/// pointwise kinds ignore it. Rows are computed in parallel; the result does
/// not depend on the schedule.
pub fn build_cost_volume<T: Real>(
    left: &GrayImage<T>,
    right: &GrayImage<T>,
    d_min: u32,
    d_max: u32,
    kind: CostKind,
    window: WindowSpec,
) -> Result<CostVolume<T>> {
    if left.width() != right.width() || left.height() != right.height() {
        return Err(Error::SizeMismatch(left.width(), left.height(), right.width(), right.height()));
    }
    let mut vol = CostVolume::new_invalid(left.width(), left.height(), d_min, d_max)?;
    let (w, n) = (vol.width, vol.n_disp());
    vol.data.par_chunks_mut(w * n).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            for di in 0..n {
                let d = d_min + di as u32;
                let c = match kind {
                    CostKind::Ad => cost_ad(left, right, x, y, d),
                    CostKind::Sd => cost_sd(left, right, x, y, d),
                    CostKind::Ncc => cost_ncc(left, right, x, y, d, window).map(|s| T::one() - s),
                };
                row[x * n + di] = c.unwrap_or_else(T::nan);
            }
        }
    });
    Ok(vol)
}
