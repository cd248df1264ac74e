//! Robust branch distance estimation from a depth map and an annotated
//! branch polygon.
//!
//! The centroid variant condenses the annotated boundary points into
//! triangle centroids (which sit inside thin elongated shapes even when the
//! boundary points straddle them), expands each centroid into a small pixel
//! neighbourhood, reads depths there, and takes the mean of the samples that
//! survive a median-absolute-deviation gate. The polygon variant samples
//! every pixel whose centre lies inside the polygon instead.
//!
//! Coordinates are continuous image coordinates: pixel cell `(i, j)` covers
//! `[i, i+1) x [j, j+1)` and has its centre at `(i + 0.5, j + 0.5)`.

use crate::error::{Error, Result};
use crate::geometry::DepthMap;
use crate::scalar::Real;

/// Closed branch outline as annotated boundary points, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchPolygon {
    points: Vec<[f64; 2]>,
}

impl BranchPolygon {
    /// At least three finite points are required.
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::TooFewPoints { needed: 3, got: points.len() });
        }
        if let Some(p) = points.iter().find(|p| !(p[0].is_finite() && p[1].is_finite())) {
            return Err(Error::BadParameter(format!("non-finite polygon point ({}, {})", p[0], p[1])));
        }
        Ok(BranchPolygon { points })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }
}

/// Triangle centroids produced by [`group_triangles`], with the point
/// indices each centroid came from.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidSet {
    pub centroids: Vec<[f64; 2]>,
    pub source_triangles: Vec<[usize; 3]>,
}

/// Greedily partition points into `floor(n / 3)` triangles and return the
/// vertex centroids.
///
/// Each round anchors on the lowest-index unused point and joins it with its
/// two nearest unused neighbours (Euclidean distance, ties towards the lower
/// index). Leftover points are discarded. Fails for fewer than three points.
pub fn group_triangles(points: &[[f64; 2]]) -> Result<CentroidSet> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: points.len() });
    }
    let n = points.len();
    let rounds = n / 3;
    let mut used = vec![false; n];
    let mut centroids = Vec::with_capacity(rounds);
    let mut source_triangles = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let anchor = (0..n).find(|&i| !used[i]).expect("rounds never exceed unused points / 3");
        used[anchor] = true;
        let mut candidates: Vec<(f64, usize)> = (0..n)
            .filter(|&i| !used[i])
            .map(|i| {
                let dx = points[i][0] - points[anchor][0];
                let dy = points[i][1] - points[anchor][1];
                (dx * dx + dy * dy, i)
            })
            .collect();
        candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (b, c) = (candidates[0].1, candidates[1].1);
        used[b] = true;
        used[c] = true;
        let tri = [anchor, b, c];
        let cx = (points[anchor][0] + points[b][0] + points[c][0]) / 3.0;
        let cy = (points[anchor][1] + points[b][1] + points[c][1]) / 3.0;
        centroids.push([cx, cy]);
        source_triangles.push(tri);
    }
    Ok(CentroidSet { centroids, source_triangles })
}

/// Sample locations for depth reading, with bookkeeping about clipping.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePool {
    pub width: usize,
    pub height: usize,
    /// Sample points in image coordinates: neighbourhood cell centres for
    /// every centroid (centroid order, ring order within), then the
    /// centroids themselves.
    pub points: Vec<[f64; 2]>,
    pub dropped_off_frame: usize,
}

/// Square-ring offsets around a cell: ring 1 is the 8 surrounding cells,
/// ring 2 the 16 cells of the 5x5 shell, and so on, each ring in row-major
/// order.
fn ring_offsets(count: usize) -> Vec<(i64, i64)> {
    let mut out = Vec::with_capacity(count);
    let mut k = 1i64;
    while out.len() < count {
        for dy in -k..=k {
            for dx in -k..=k {
                if dx.abs().max(dy.abs()) == k {
                    out.push((dx, dy));
                    if out.len() == count {
                        return out;
                    }
                }
            }
        }
        k += 1;
    }
    out
}

/// Expand each centroid into the first `m` cells of the square rings around
/// its containing pixel, then append the centroids themselves.
///
/// Off-frame cells (and off-frame centroids) are dropped and counted rather
/// than clamped, so a centroid in a corner contributes fewer samples.
pub fn expand_neighbourhood(
    centroids: &[[f64; 2]],
    m: usize,
    width: usize,
    height: usize,
) -> SamplePool {
    let offsets = ring_offsets(m);
    let mut points = Vec::new();
    let mut dropped = 0usize;
    for c in centroids {
        let (ax, ay) = (c[0].floor() as i64, c[1].floor() as i64);
        for (dx, dy) in &offsets {
            let (x, y) = (ax + dx, ay + dy);
            if x >= 0 && y >= 0 && x < width as i64 && y < height as i64 {
                points.push([x as f64 + 0.5, y as f64 + 0.5]);
            } else {
                dropped += 1;
            }
        }
    }
    for c in centroids {
        let (ax, ay) = (c[0].floor() as i64, c[1].floor() as i64);
        if ax >= 0 && ay >= 0 && ax < width as i64 && ay < height as i64 {
            points.push(*c);
        } else {
            dropped += 1;
        }
    }
    SamplePool { width, height, points, dropped_off_frame: dropped }
}

/// How a continuous sample point reads the discrete depth map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthReadMode {
    /// Value of the cell containing the point.
    Nearest,
    /// Bilinear interpolation on the pixel-centre lattice, clamped at the
    /// borders. The read is invalid if any cell with nonzero weight is.
    Bilinear,
}

/// Depth samples that survived reading; invalid reads are only counted.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledDepths<T> {
    pub values: Vec<T>,
    pub invalid_depth: usize,
}

pub fn read_depths<T: Real>(
    pool: &SamplePool,
    depth: &DepthMap<T>,
    mode: DepthReadMode,
) -> Result<SampledDepths<T>> {
    if depth.width() != pool.width || depth.height() != pool.height {
        return Err(Error::SizeMismatch(pool.width, pool.height, depth.width(), depth.height()));
    }
    let mut values = Vec::with_capacity(pool.points.len());
    let mut invalid = 0usize;
    for p in &pool.points {
        match sample_depth(depth, p[0], p[1], mode) {
            Some(v) => values.push(v),
            None => invalid += 1,
        }
    }
    if values.is_empty() {
        return Err(Error::NoValidDepth);
    }
    Ok(SampledDepths { values, invalid_depth: invalid })
}

fn sample_depth<T: Real>(depth: &DepthMap<T>, x: f64, y: f64, mode: DepthReadMode) -> Option<T> {
    let (w, h) = (depth.width(), depth.height());
    match mode {
        DepthReadMode::Nearest => {
            let (cx, cy) = (x.floor(), y.floor());
            if cx < 0.0 || cy < 0.0 || cx >= w as f64 || cy >= h as f64 {
                return None;
            }
            depth.get(cx as usize, cy as usize)
        }
        DepthReadMode::Bilinear => {
            let (u, v) = (x - 0.5, y - 0.5);
            let (x0, y0) = (u.floor(), v.floor());
            let (fx, fy) = (u - x0, v - y0);
            let clamp = |c: f64, len: usize| (c.max(0.0) as usize).min(len - 1);
            let (x0c, x1c) = (clamp(x0, w), clamp(x0 + 1.0, w));
            let (y0c, y1c) = (clamp(y0, h), clamp(y0 + 1.0, h));
            let corners = [
                (x0c, y0c, (1.0 - fx) * (1.0 - fy)),
                (x1c, y0c, fx * (1.0 - fy)),
                (x0c, y1c, (1.0 - fx) * fy),
                (x1c, y1c, fx * fy),
            ];
            let mut acc = T::zero();
            for (cx, cy, wgt) in corners {
                if wgt == 0.0 {
                    continue;
                }
                acc += T::of(wgt) * depth.get(cx, cy)?;
            }
            Some(acc)
        }
    }
}

/// Outcome of the median-absolute-deviation gate.
#[derive(Debug, Clone, PartialEq)]
pub struct MadFilterResult<T> {
    /// Surviving values in ascending order.
    pub retained: Vec<T>,
    pub median: T,
    pub mad: T,
    pub rejected: usize,
}

fn sorted_median<T: Real>(sorted: &[T]) -> T {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / T::of(2.0)
    }
}

/// Keep values within `k` median-absolute-deviations of the median, band
/// ends inclusive.
///
/// The input is sorted internally, so the result does not depend on the
/// order the samples arrived in. With `mad = 0` the band degenerates to the
/// median itself, which still retains at least half of the values; an
/// infinite `k` retains everything (the band is not evaluated, so a zero
/// deviation cannot poison it).
pub fn mad_filter<T: Real>(values: &[T], k: f64) -> Result<MadFilterResult<T>> {
    if values.is_empty() {
        return Err(Error::EmptySamples);
    }
    if k.is_nan() || k < 0.0 {
        return Err(Error::BadParameter(format!("k must be >= 0, got {k}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted_median(&sorted);
    let mut devs: Vec<T> = sorted.iter().map(|v| (*v - median).abs()).collect();
    devs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mad = sorted_median(&devs);
    if k.is_infinite() {
        return Ok(MadFilterResult { retained: sorted, median, mad, rejected: 0 });
    }
    let half = T::of(k) * mad;
    let (lo, hi) = (median - half, median + half);
    let retained: Vec<T> = sorted.iter().copied().filter(|v| *v >= lo && *v <= hi).collect();
    let rejected = sorted.len() - retained.len();
    Ok(MadFilterResult { retained, median, mad, rejected })
}

/// A branch distance with the bookkeeping needed to audit it.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceEstimate<T> {
    /// Mean of the retained depth samples, metres.
    pub distance_m: T,
    pub median_m: T,
    pub mad_m: T,
    pub retained: usize,
    pub rejected: usize,
    /// Samples attempted (in-frame pool points).
    pub pool_size: usize,
    pub dropped_off_frame: usize,
    pub invalid_depth: usize,
    pub k_used: f64,
    /// Neighbourhood size; zero for the polygon variant, which has none.
    pub m_used: usize,
}

fn finish_estimate<T: Real>(
    samples: SampledDepths<T>,
    pool_size: usize,
    dropped: usize,
    k: f64,
    m: usize,
) -> Result<DistanceEstimate<T>> {
    let gate = mad_filter(&samples.values, k)?;
    let mut sum = T::zero();
    for v in &gate.retained {
        sum += *v;
    }
    let distance = sum / T::of(gate.retained.len() as f64);
    Ok(DistanceEstimate {
        distance_m: distance,
        median_m: gate.median,
        mad_m: gate.mad,
        retained: gate.retained.len(),
        rejected: gate.rejected,
        pool_size,
        dropped_off_frame: dropped,
        invalid_depth: samples.invalid_depth,
        k_used: k,
        m_used: m,
    })
}

/// Centroid-based branch distance: triangle centroids, `m`-cell
/// neighbourhoods, depth reads, MAD gate, mean.
pub fn estimate_distance_centroid<T: Real>(
    poly: &BranchPolygon,
    depth: &DepthMap<T>,
    k: f64,
    m: usize,
    mode: DepthReadMode,
) -> Result<DistanceEstimate<T>> {
    let centroids = group_triangles(poly.points())?;
    let pool = expand_neighbourhood(&centroids.centroids, m, depth.width(), depth.height());
    let samples = read_depths(&pool, depth, mode)?;
    finish_estimate(samples, pool.points.len(), pool.dropped_off_frame, k, m)
}

/// Polygon-interior branch distance: sample every pixel whose centre lies
/// inside the polygon, then apply the same MAD gate and mean.
pub fn estimate_distance_polygon<T: Real>(
    poly: &BranchPolygon,
    depth: &DepthMap<T>,
    k: f64,
    mode: DepthReadMode,
) -> Result<DistanceEstimate<T>> {
    let (cells, dropped) = rasterize_clipped(poly.points(), depth.width(), depth.height())?;
    let pool = SamplePool {
        width: depth.width(),
        height: depth.height(),
        points: cells.iter().map(|&(i, j)| [i as f64 + 0.5, j as f64 + 0.5]).collect(),
        dropped_off_frame: dropped,
    };
    let samples = read_depths(&pool, depth, mode)?;
    finish_estimate(samples, pool.points.len(), dropped, k, 0)
}

/// Pixels whose centres lie inside the polygon (even-odd rule), row-major.
///
/// Fails on self-intersecting outlines (any pair of non-adjacent edges that
/// properly cross) and on zero-area outlines.
pub fn rasterize_polygon(points: &[[f64; 2]], width: usize, height: usize) -> Result<Vec<(usize, usize)>> {
    rasterize_clipped(points, width, height).map(|(cells, _)| cells)
}

fn rasterize_clipped(
    points: &[[f64; 2]],
    width: usize,
    height: usize,
) -> Result<(Vec<(usize, usize)>, usize)> {
    let n = points.len();
    if n < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: n });
    }
    // orientation of r relative to the directed segment p -> q
    let orient =
        |p: [f64; 2], q: [f64; 2], r: [f64; 2]| (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
    for i in 0..n {
        for j in i + 1..n {
            // adjacent edges share a vertex and may not "cross"
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (a, b) = (points[i], points[(i + 1) % n]);
            let (c, d) = (points[j], points[(j + 1) % n]);
            let (o1, o2) = (orient(a, b, c), orient(a, b, d));
            let (o3, o4) = (orient(c, d, a), orient(c, d, b));
            if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
                return Err(Error::SelfIntersectingPolygon);
            }
        }
    }
    let mut area2 = 0.0;
    for i in 0..n {
        let (p, q) = (points[i], points[(i + 1) % n]);
        area2 += p[0] * q[1] - q[0] * p[1];
    }
    if area2 == 0.0 {
        return Err(Error::DegeneratePolygon("outline encloses zero area".into()));
    }

    let mut cells = Vec::new();
    let mut dropped = 0usize;
    let mut crossings: Vec<f64> = Vec::new();
    for j in 0..height {
        let yc = j as f64 + 0.5;
        crossings.clear();
        for i in 0..n {
            let (p, q) = (points[i], points[(i + 1) % n]);
            // half-open span [min(y), max(y)) skips horizontal edges and
            // counts shared vertices exactly once
            if (p[1] <= yc) != (q[1] <= yc) {
                crossings.push(p[0] + (yc - p[1]) * (q[0] - p[0]) / (q[1] - p[1]));
            }
        }
        crossings.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for pair in crossings.chunks_exact(2) {
            // pixel centres i + 0.5 in [xa, xb): left-inclusive, right-exclusive
            let first = (pair[0] - 0.5).ceil() as i64;
            let last = (pair[1] - 0.5).ceil() as i64 - 1;
            for i in first..=last {
                if i >= 0 && i < width as i64 {
                    cells.push((i as usize, j));
                } else {
                    dropped += 1;
                }
            }
        }
    }
    Ok((cells, dropped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FloatField;

    fn depth_from_fn(w: usize, h: usize, f: impl FnMut(usize, usize) -> Option<f64>) -> DepthMap<f64> {
        DepthMap::from_field(FloatField::from_fn(w, h, f))
    }

    #[test]
    fn grouping_pairs_each_anchor_with_its_nearest_cluster() {
        let pts = vec![
            [0.0, 0.0],
            [10.0, 0.0],
            [0.1, 0.0],
            [10.1, 0.0],
            [0.0, 0.1],
            [10.0, 0.1],
        ];
        let set = group_triangles(&pts).unwrap();
        assert_eq!(set.source_triangles, vec![[0, 2, 4], [1, 3, 5]]);
        let c = set.centroids[0];
        assert!((c[0] - 0.1 / 3.0).abs() < 1e-12 && (c[1] - 0.1 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn grouping_breaks_distance_ties_towards_lower_index() {
        // three candidates all at distance 1 from the anchor
        let pts = vec![[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]];
        let set = group_triangles(&pts).unwrap();
        assert_eq!(set.source_triangles, vec![[0, 1, 2]]);
        assert_eq!(set.centroids.len(), 1, "leftover point is discarded");
    }

    #[test]
    fn grouping_discards_leftovers_and_rejects_tiny_inputs() {
        let pts: Vec<[f64; 2]> = (0..8).map(|i| [i as f64, (i * i) as f64 * 0.1]).collect();
        let set = group_triangles(&pts).unwrap();
        assert_eq!(set.centroids.len(), 2);
        assert!(matches!(
            group_triangles(&pts[..2]),
            Err(Error::TooFewPoints { needed: 3, got: 2 })
        ));
        assert!(BranchPolygon::new(vec![[0.0, 0.0], [1.0, 1.0]]).is_err());
        assert!(BranchPolygon::new(vec![[0.0, 0.0], [1.0, 1.0], [f64::NAN, 0.0]]).is_err());
    }

    #[test]
    fn neighbourhood_of_interior_centroid_is_full_ring_plus_centroid() {
        let pool = expand_neighbourhood(&[[10.2, 10.7]], 8, 32, 32);
        assert_eq!(pool.points.len(), 9);
        assert_eq!(pool.dropped_off_frame, 0);
        // ring cells are the 3x3 block around cell (10, 10) minus its centre
        assert_eq!(pool.points[0], [9.5, 9.5]);
        assert_eq!(pool.points[7], [11.5, 11.5]);
        assert_eq!(pool.points[8], [10.2, 10.7]);
    }

    #[test]
    fn neighbourhood_spills_into_second_ring_row_major() {
        let pool = expand_neighbourhood(&[[10.5, 10.5]], 12, 32, 32);
        assert_eq!(pool.points.len(), 13);
        // cells 8..12 are the first four of the 5x5 shell: (8,8), (9,8), (10,8), (11,8)
        assert_eq!(&pool.points[8..12], &[[8.5, 8.5], [9.5, 8.5], [10.5, 8.5], [11.5, 8.5]]);
    }

    #[test]
    fn neighbourhood_clips_at_the_corner() {
        let pool = expand_neighbourhood(&[[0.3, 0.6]], 8, 32, 32);
        // of the 8 ring cells around (0,0) only (1,0), (0,1), (1,1) are in
        // frame; the centroid itself makes four points
        assert_eq!(pool.points.len(), 4);
        assert_eq!(pool.dropped_off_frame, 5);
        assert_eq!(pool.points[3], [0.3, 0.6]);
    }

    #[test]
    fn nearest_reads_containing_cell_and_flags_invalid() {
        let depth = depth_from_fn(4, 4, |x, y| if (x, y) == (2, 1) { None } else { Some(x as f64) });
        let pool = SamplePool {
            width: 4,
            height: 4,
            points: vec![[1.9, 1.2], [2.2, 1.7], [0.0, 0.0]],
            dropped_off_frame: 0,
        };
        let got = read_depths(&pool, &depth, DepthReadMode::Nearest).unwrap();
        assert_eq!(got.values, vec![1.0, 0.0]);
        assert_eq!(got.invalid_depth, 1);
    }

    #[test]
    fn bilinear_interpolates_on_the_centre_lattice() {
        let depth = depth_from_fn(2, 1, |x, _| Some(if x == 0 { 2.0 } else { 4.0 }));
        let pool = SamplePool {
            width: 2,
            height: 1,
            points: vec![[1.0, 0.5], [0.5, 0.5], [0.2, 0.5]],
            dropped_off_frame: 0,
        };
        let got = read_depths(&pool, &depth, DepthReadMode::Bilinear).unwrap();
        assert_eq!(got.values[0], 3.0, "midway between the two cell centres");
        assert_eq!(got.values[1], 2.0, "exactly on a cell centre");
        assert_eq!(got.values[2], 2.0, "clamped at the border");
    }

    #[test]
    fn bilinear_poisons_on_any_invalid_contributor() {
        let depth = depth_from_fn(2, 2, |x, y| if (x, y) == (1, 1) { None } else { Some(1.0) });
        let pool = SamplePool {
            width: 2,
            height: 2,
            points: vec![[1.2, 1.2], [0.5, 0.5]],
            dropped_off_frame: 0,
        };
        let got = read_depths(&pool, &depth, DepthReadMode::Bilinear).unwrap();
        assert_eq!(got.values, vec![1.0], "only the point clear of the hole survives");
        assert_eq!(got.invalid_depth, 1);

        let all_bad = depth_from_fn(2, 2, |_, _| None);
        assert!(matches!(
            read_depths(&pool, &all_bad, DepthReadMode::Nearest),
            Err(Error::NoValidDepth)
        ));
    }

    #[test]
    fn mad_battery_rejects_the_far_outlier() {
        let vals = [10.0, 10.0, 12.0, 14.0, 100.0];
        let got = mad_filter(&vals, 3.0).unwrap();
        assert_eq!(got.median, 12.0);
        assert_eq!(got.mad, 2.0);
        assert_eq!(got.retained, vec![10.0, 10.0, 12.0, 14.0]);
        assert_eq!(got.rejected, 1);
        let mean: f64 = got.retained.iter().sum::<f64>() / got.retained.len() as f64;
        assert_eq!(mean, 11.5);
    }

    #[test]
    fn mad_filter_is_permutation_invariant_bit_for_bit() {
        let a = [3.7, 1.2, 9.9, 1.2, 5.5, 2.8];
        let b = [9.9, 1.2, 5.5, 3.7, 2.8, 1.2];
        let (ra, rb) = (mad_filter(&a, 2.0).unwrap(), mad_filter(&b, 2.0).unwrap());
        assert_eq!(ra, rb);
    }

    #[test]
    fn mad_edge_cases() {
        // zero MAD keeps the values equal to the median, never empties
        let got = mad_filter(&[5.0, 5.0, 5.0, 9.0], 0.0).unwrap();
        assert_eq!(got.mad, 0.0);
        assert_eq!(got.retained, vec![5.0, 5.0, 5.0]);
        // infinite k keeps everything even when MAD is zero
        let got = mad_filter(&[5.0, 5.0, 5.0, 9.0], f64::INFINITY).unwrap();
        assert_eq!(got.retained.len(), 4);
        assert_eq!(got.rejected, 0);
        assert!(mad_filter(&[] as &[f64], 3.0).is_err());
        assert!(mad_filter(&[1.0], -0.5).is_err());
        assert!(mad_filter(&[1.0], f64::NAN).is_err());
        // single sample: median is the sample, MAD zero, sample retained
        let got = mad_filter(&[2.5], 3.0).unwrap();
        assert_eq!(got.retained, vec![2.5]);
    }

    #[test]
    fn retained_count_grows_with_k() {
        let vals = [1.0, 2.0, 2.5, 3.0, 3.1, 8.0, 20.0];
        let mut prev = 0usize;
        for k in [0.0, 0.5, 1.0, 2.0, 4.0, 16.0, f64::INFINITY] {
            let got = mad_filter(&vals, k).unwrap();
            assert!(got.retained.len() >= prev, "k = {k}");
            prev = got.retained.len();
        }
        assert_eq!(prev, vals.len());
    }

    #[test]
    fn centroid_estimate_on_constant_depth_is_exact() {
        let depth = depth_from_fn(32, 32, |_, _| Some(2.5));
        let poly =
            BranchPolygon::new(vec![[12.0, 12.0], [18.0, 12.0], [15.0, 16.0]]).unwrap();
        let est = estimate_distance_centroid(&poly, &depth, 3.0, 8, DepthReadMode::Nearest).unwrap();
        assert_eq!(est.distance_m, 2.5);
        assert_eq!(est.retained, 9, "full ring plus the centroid");
        assert_eq!(est.rejected, 0);
        assert_eq!(est.dropped_off_frame, 0);
        assert_eq!(est.m_used, 8);
    }

    #[test]
    fn centroid_estimate_is_translation_equivariant() {
        let pattern = |x: i64, y: i64| 2.0 + 0.001 * (((x * 31 + y * 17) % 13) as f64);
        let depth_a = depth_from_fn(40, 40, |x, y| Some(pattern(x as i64, y as i64)));
        let depth_b = depth_from_fn(40, 40, |x, y| Some(pattern(x as i64 - 7, y as i64 - 5)));
        // dyadic coordinates so the +7/+5 translation is exact in binary
        let pts_a = vec![[10.25, 11.75], [16.5, 12.25], [12.5, 15.75], [11.0, 13.25], [15.5, 14.5], [13.25, 12.5]];
        let pts_b: Vec<[f64; 2]> = pts_a.iter().map(|p| [p[0] + 7.0, p[1] + 5.0]).collect();
        let ea = estimate_distance_centroid(
            &BranchPolygon::new(pts_a).unwrap(),
            &depth_a,
            3.0,
            8,
            DepthReadMode::Bilinear,
        )
        .unwrap();
        let eb = estimate_distance_centroid(
            &BranchPolygon::new(pts_b).unwrap(),
            &depth_b,
            3.0,
            8,
            DepthReadMode::Bilinear,
        )
        .unwrap();
        assert_eq!(ea.distance_m.to_bits(), eb.distance_m.to_bits());
        assert_eq!(ea.retained, eb.retained);
    }

    #[test]
    fn minority_background_leak_is_gated_out() {
        // thin bar of depth 1.0 on a 5.0 background; boundary points sit on
        // the bar so centroids do too, but rings leak background cells
        let depth = depth_from_fn(64, 32, |x, _| Some(if (28..36).contains(&x) { 1.0 } else { 5.0 }));
        let pts = vec![
            [30.0, 4.0],
            [33.0, 7.0],
            [30.5, 11.0],
            [33.5, 15.0],
            [30.0, 19.0],
            [33.0, 23.0],
        ];
        let est = estimate_distance_centroid(
            &BranchPolygon::new(pts).unwrap(),
            &depth,
            3.0,
            8,
            DepthReadMode::Nearest,
        )
        .unwrap();
        assert_eq!(est.distance_m, 1.0, "background leaks must be rejected, not averaged");
        assert!(est.rejected == 0, "rings of width-8 bar interior points stay on the bar");

        // push the points to the bar edge so rings do leak; the gate must
        // still land on the bar depth
        let edge_pts = vec![
            [28.2, 4.0],
            [28.3, 7.0],
            [28.1, 10.0],
            [28.2, 16.0],
            [28.3, 19.0],
            [28.1, 22.0],
        ];
        let est = estimate_distance_centroid(
            &BranchPolygon::new(edge_pts).unwrap(),
            &depth,
            3.0,
            8,
            DepthReadMode::Nearest,
        )
        .unwrap();
        assert_eq!(est.distance_m, 1.0);
        assert!(est.rejected > 0, "edge rings must have leaked something");
    }

    #[test]
    fn rasterization_counts_exact_cells_for_an_aligned_rectangle() {
        let pts = vec![[0.0, 0.0], [10.0, 0.0], [10.0, 4.0], [0.0, 4.0]];
        let cells = rasterize_polygon(&pts, 64, 32).unwrap();
        assert_eq!(cells.len(), 40);
        assert!(cells.contains(&(0, 0)) && cells.contains(&(9, 3)));
        assert!(!cells.contains(&(10, 0)) && !cells.contains(&(0, 4)));
    }

    #[test]
    fn rasterization_rejects_bowties_and_slivers() {
        let bowtie = vec![[0.0, 0.0], [4.0, 4.0], [4.0, 0.0], [0.0, 4.0]];
        assert!(matches!(rasterize_polygon(&bowtie, 8, 8), Err(Error::SelfIntersectingPolygon)));
        let sliver = vec![[0.0, 0.0], [4.0, 0.0], [8.0, 0.0]];
        assert!(matches!(rasterize_polygon(&sliver, 16, 16), Err(Error::DegeneratePolygon(_))));
    }

    #[test]
    fn rasterization_handles_triangles_against_brute_force_containment() {
        let pts = vec![[3.2, 1.1], [12.7, 4.9], [5.1, 9.8]];
        let cells = rasterize_polygon(&pts, 16, 12).unwrap();
        // brute force: even-odd ray cast at every pixel centre
        let inside = |px: f64, py: f64| {
            let mut c = false;
            for i in 0..3 {
                let (p, q) = (pts[i], pts[(i + 1) % 3]);
                if (p[1] <= py) != (q[1] <= py) {
                    let x = p[0] + (py - p[1]) * (q[0] - p[0]) / (q[1] - p[1]);
                    if px < x {
                        c = !c;
                    }
                }
            }
            c
        };
        let mut expect = Vec::new();
        for j in 0..12 {
            for i in 0..16 {
                if inside(i as f64 + 0.5, j as f64 + 0.5) {
                    expect.push((i, j));
                }
            }
        }
        assert_eq!(cells, expect);
        assert!(!cells.is_empty());
    }

    #[test]
    fn polygon_estimate_gates_minority_outliers() {
        let depth = depth_from_fn(32, 16, |x, y| {
            Some(if (x, y) == (6, 6) || (x, y) == (7, 8) { 9.0 } else { 2.0 })
        });
        let pts = vec![[4.0, 4.0], [14.0, 4.0], [14.0, 12.0], [4.0, 12.0]];
        let poly = BranchPolygon::new(pts).unwrap();
        let est = estimate_distance_polygon(&poly, &depth, 3.0, DepthReadMode::Nearest).unwrap();
        assert_eq!(est.pool_size, 80);
        assert_eq!(est.rejected, 2);
        assert_eq!(est.distance_m, 2.0);
        assert_eq!(est.m_used, 0);
    }
}
