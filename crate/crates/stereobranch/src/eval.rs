//! Accuracy metrics for disparity and depth maps.
//!
//! The pairwise metrics compare two fields over the cells where both are
//! valid; pixels either map misses say nothing about agreement and are
//! excluded rather than penalized.

use crate::error::{Error, Result};
use crate::geometry::DepthMap;
use crate::grid::FloatField;
use crate::scalar::Real;

fn joint_diffs<T: Real>(a: &FloatField<T>, b: &FloatField<T>) -> Result<Vec<T>> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::SizeMismatch(a.width(), a.height(), b.width(), b.height()));
    }
    let mut diffs = Vec::new();
    for y in 0..a.height() {
        for x in 0..a.width() {
            if let (Some(p), Some(q)) = (a.get(x, y), b.get(x, y)) {
                diffs.push(p - q);
            }
        }
    }
    if diffs.is_empty() {
        return Err(Error::NoOverlap);
    }
    Ok(diffs)
}

/// Root-mean-square difference over jointly valid cells.
pub fn rmse<T: Real>(a: &FloatField<T>, b: &FloatField<T>) -> Result<T> {
    let diffs = joint_diffs(a, b)?;
    let mut sum = T::zero();
    for d in &diffs {
        sum += *d * *d;
    }
    Ok((sum / T::of(diffs.len() as f64)).sqrt())
}

/// Fraction of jointly valid cells whose absolute difference exceeds
/// `threshold`.
pub fn bad_pixel_rate<T: Real>(a: &FloatField<T>, b: &FloatField<T>, threshold: f64) -> Result<T> {
    if !(threshold.is_finite() && threshold >= 0.0) {
        return Err(Error::BadParameter(format!("threshold must be finite and >= 0, got {threshold}")));
    }
    let diffs = joint_diffs(a, b)?;
    let t = T::of(threshold);
    let bad = diffs.iter().filter(|d| d.abs() > t).count();
    Ok(T::of(bad as f64) / T::of(diffs.len() as f64))
}

/// Distribution summary of the valid depths in a pixel region.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthHistogram {
    /// `bins + 1` ascending bin edges spanning the requested range.
    pub edges: Vec<f64>,
    /// Per-bin counts; the top edge is inclusive.
    pub counts: Vec<usize>,
    /// Samples that landed in some bin (within range).
    pub contributing: usize,
    /// All valid samples in the region, in or out of range.
    pub total_valid: usize,
    /// Interquartile range of all valid samples.
    pub iqr: f64,
    /// Median of all valid samples.
    pub median: f64,
}

/// Linearly interpolated quantile of ascending `sorted`, `p` in `[0, 1]`.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < sorted.len() {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

/// Histogram the valid depths at `region` cells over `bins` equal-width bins
/// spanning `range`, along with order statistics over all valid samples.
///
/// Samples outside the range still count towards `total_valid`, the median,
/// and the IQR; they just land in no bin. Region cells must lie inside the
/// frame.
pub fn depth_histogram<T: Real>(
    depth: &DepthMap<T>,
    region: &[(usize, usize)],
    bins: usize,
    range: (f64, f64),
) -> Result<DepthHistogram> {
    if bins == 0 {
        return Err(Error::BadHistogram("need at least one bin".into()));
    }
    let (lo, hi) = range;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::BadHistogram(format!("bad range [{lo}, {hi}]")));
    }
    let mut samples = Vec::with_capacity(region.len());
    for &(x, y) in region {
        if x >= depth.width() || y >= depth.height() {
            return Err(Error::BadParameter(format!(
                "region cell ({x}, {y}) outside {}x{} frame",
                depth.width(),
                depth.height()
            )));
        }
        if let Some(z) = depth.get(x, y) {
            samples.push(z.widen());
        }
    }
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let edges: Vec<f64> =
        (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect();
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    let mut contributing = 0usize;
    for &v in &samples {
        if v < lo || v > hi {
            continue;
        }
        let idx = (((v - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
        contributing += 1;
    }
    Ok(DepthHistogram {
        edges,
        counts,
        contributing,
        total_valid: samples.len(),
        iqr: quantile(&samples, 0.75) - quantile(&samples, 0.25),
        median: quantile(&samples, 0.5),
    })
}
