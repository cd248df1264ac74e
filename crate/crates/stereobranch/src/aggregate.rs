//! Cost aggregation and disparity selection.
//!
//! Three window-style aggregators (fixed, multi-window, iterative diffusion)
//! plus winner-take-all selection and a semi-global scanline optimizer.
//!
//! Shared conventions:
//!
//! * Window cells that fall outside the frame are clamped to the nearest
//!   edge cell (border replication).
//! * Invalid cells (NaN) never contribute to a sum or a minimum. A cell is
//!   invalid in the output iff it is invalid in the input; aggregation never
//!   manufactures or destroys validity.
//! * Summation order is fixed (windows row-major, offsets and directions in
//!   declaration order), so results are bit-reproducible and independent of
//!   thread count.

use rayon::prelude::*;

use crate::cost::{CostVolume, WindowSpec};
use crate::error::{Error, Result};
use crate::grid::FloatField;
use crate::scalar::Real;

/// Dense disparity map in pixels; NaN marks pixels with no estimate.
#[derive(Debug, Clone)]
pub struct DisparityMap<T = f64> {
    field: FloatField<T>,
}

impl<T: Real> DisparityMap<T> {
    pub fn from_field(field: FloatField<T>) -> Self {
        DisparityMap { field }
    }

    pub fn new_invalid(width: usize, height: usize) -> Self {
        DisparityMap { field: FloatField::new_invalid(width, height) }
    }

    pub fn field(&self) -> &FloatField<T> {
        &self.field
    }

    pub fn field_mut(&mut self) -> &mut FloatField<T> {
        &mut self.field
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.field.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.field.height()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<T> {
        self.field.get(x, y)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.field.set(x, y, v);
    }

    #[inline]
    pub fn invalidate(&mut self, x: usize, y: usize) {
        self.field.invalidate(x, y);
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.field.is_valid(x, y)
    }

    pub fn valid_count(&self) -> usize {
        self.field.valid_count()
    }

    /// Mirror left-to-right; disparity magnitudes are unchanged.
    pub fn hflip(&self) -> Self {
        DisparityMap { field: self.field.hflip() }
    }
}

/// Aggregation scheme selector.
#[derive(Debug, Clone, PartialEq)]
pub enum AggregationSpec {
    /// Sum of costs over one window centred on the pixel.
    Fixed { window: WindowSpec },
    /// Sum of several window sums, each window centred on the pixel plus an
    /// offset. Offsets are `(dx, dy)` in pixels and may repeat.
    Multi { window: WindowSpec, offsets: Vec<(i64, i64)> },
    /// Iterative cross-stencil diffusion; iteration `n` replaces each cell by
    /// `weights[n]` times the mean of the cell and its four neighbours.
    Diffusion { iterations: usize, weights: Vec<f64> },
}

pub fn aggregate<T: Real>(vol: &CostVolume<T>, spec: &AggregationSpec) -> Result<CostVolume<T>> {
    match spec {
        AggregationSpec::Fixed { window } => Ok(aggregate_fixed(vol, *window)),
        AggregationSpec::Multi { window, offsets } => aggregate_multi(vol, *window, offsets),
        AggregationSpec::Diffusion { iterations, weights } => aggregate_diffusion(vol, *iterations, weights),
    }
}

#[inline]
fn clamp_coord(v: i64, len: usize) -> usize {
    v.clamp(0, len as i64 - 1) as usize
}

/// Window sum with border replication. Invalid cells are skipped; the output
/// cell is invalid iff the centre cell is.
pub fn aggregate_fixed<T: Real>(vol: &CostVolume<T>, window: WindowSpec) -> CostVolume<T> {
    let (w, h, n) = (vol.width(), vol.height(), vol.n_disp());
    let (hw, hh) = (window.half_width(), window.half_height());
    let mut out = vol.clone();
    let src = vol.data();
    out.data_rows_mut().enumerate().for_each(|(y, row)| {
        for x in 0..w {
            for di in 0..n {
                if !vol.is_valid(x, y, di) {
                    continue; // stays NaN
                }
                let mut sum = T::zero();
                for dy in -hh..=hh {
                    let yy = clamp_coord(y as i64 + dy, h);
                    for dx in -hw..=hw {
                        let xx = clamp_coord(x as i64 + dx, w);
                        let c = src[(yy * w + xx) * n + di];
                        if c.is_finite() {
                            sum += c;
                        }
                    }
                }
                row[x * n + di] = sum;
            }
        }
    });
    out
}

/// Sum of shifted window sums. With a single zero offset this is exactly
/// [`aggregate_fixed`]; the offset list must be non-empty.
pub fn aggregate_multi<T: Real>(
    vol: &CostVolume<T>,
    window: WindowSpec,
    offsets: &[(i64, i64)],
) -> Result<CostVolume<T>> {
    if offsets.is_empty() {
        return Err(Error::BadParameter("multi-window aggregation needs at least one offset".into()));
    }
    let (w, h, n) = (vol.width(), vol.height(), vol.n_disp());
    let (hw, hh) = (window.half_width(), window.half_height());
    let mut out = vol.clone();
    let src = vol.data();
    out.data_rows_mut().enumerate().for_each(|(y, row)| {
        for x in 0..w {
            for di in 0..n {
                if !vol.is_valid(x, y, di) {
                    continue;
                }
                // one subtotal per window, added window by window, so a
                // repeated offset contributes exactly twice its window sum
                let mut sum = T::zero();
                for (ox, oy) in offsets {
                    let mut wsum = T::zero();
                    for dy in -hh..=hh {
                        let yy = clamp_coord(y as i64 + oy + dy, h);
                        for dx in -hw..=hw {
                            let xx = clamp_coord(x as i64 + ox + dx, w);
                            let c = src[(yy * w + xx) * n + di];
                            if c.is_finite() {
                                wsum += c;
                            }
                        }
                    }
                    sum += wsum;
                }
                row[x * n + di] = sum;
            }
        }
    });
    Ok(out)
}

/// Iterative diffusion. One iteration maps each valid cell to
/// `w_n * mean(cross)` where the cross is the cell plus its four neighbours
/// (border-replicated, row-major order: up, left, centre, right, down) and
/// the mean runs over the valid contributors only. Zero iterations return
/// the input unchanged.
pub fn aggregate_diffusion<T: Real>(
    vol: &CostVolume<T>,
    iterations: usize,
    weights: &[f64],
) -> Result<CostVolume<T>> {
    if weights.len() != iterations {
        return Err(Error::BadParameter(format!(
            "diffusion needs one weight per iteration: {} weights for {} iterations",
            weights.len(),
            iterations
        )));
    }
    if let Some(bad) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::BadParameter(format!("diffusion weight {bad} must be finite and >= 0")));
    }
    let (w, h, n) = (vol.width(), vol.height(), vol.n_disp());
    let mut cur = vol.clone();
    for &wn in weights {
        let wn = T::of(wn);
        let mut next = cur.clone();
        let src = cur.data();
        next.data_rows_mut().enumerate().for_each(|(y, row)| {
            let stencil = [(0i64, -1i64), (-1, 0), (0, 0), (1, 0), (0, 1)];
            for x in 0..w {
                for di in 0..n {
                    if !src[(y * w + x) * n + di].is_finite() {
                        continue;
                    }
                    let mut sum = T::zero();
                    let mut cnt = 0usize;
                    for (dx, dy) in stencil {
                        let xx = clamp_coord(x as i64 + dx, w);
                        let yy = clamp_coord(y as i64 + dy, h);
                        let c = src[(yy * w + xx) * n + di];
                        if c.is_finite() {
                            sum += c;
                            cnt += 1;
                        }
                    }
                    row[x * n + di] = wn * (sum / T::of(cnt as f64));
                }
            }
        });
        cur = next;
    }
    Ok(cur)
}

/// Winner-take-all: per pixel, the disparity with the smallest finite cost,
/// ties resolved towards the smaller disparity. Pixels with no finite cost
/// are invalid.
pub fn select_wta<T: Real>(vol: &CostVolume<T>) -> DisparityMap<T> {
    let (w, h, n) = (vol.width(), vol.height(), vol.n_disp());
    let field = FloatField::from_fn(w, h, |x, y| {
        let costs = vol.pixel(x, y);
        let mut best: Option<(usize, T)> = None;
        for di in 0..n {
            let c = costs[di];
            if !c.is_finite() {
                continue;
            }
            if best.map_or(true, |(_, bc)| c < bc) {
                best = Some((di, c));
            }
        }
        best.map(|(di, _)| T::of(vol.disparity(di) as f64))
    });
    DisparityMap::from_field(field)
}

/// Semi-global optimizer parameters. `p1` punishes one-level disparity
/// steps between neighbours, `p2` larger jumps; both are scaled by `lambda`
/// inside the optimizer, so `lambda = 0` reduces to winner-take-all.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgmSpec {
    pub p1: f64,
    pub p2: f64,
    pub lambda: f64,
    /// Scanline direction count, 4 (axis-aligned) or 8 (plus diagonals).
    pub directions: u8,
}

impl Default for SgmSpec {
    fn default() -> Self {
        SgmSpec { p1: 0.8, p2: 3.2, lambda: 1.0, directions: 8 }
    }
}

impl SgmSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.p1.is_finite() && self.p2.is_finite() && self.p1 >= 0.0 && self.p2 >= self.p1) {
            return Err(Error::BadParameter(format!(
                "penalties must satisfy 0 <= p1 <= p2, got p1 = {}, p2 = {}",
                self.p1, self.p2
            )));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::BadParameter(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if self.directions != 4 && self.directions != 8 {
            return Err(Error::BadParameter(format!("directions must be 4 or 8, got {}", self.directions)));
        }
        Ok(())
    }
}

const DIRECTION_TABLE: [(i64, i64); 8] =
    [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (1, -1), (-1, 1)];

/// Scanline-aggregated cost volume.
///
/// Per direction `r` the usual recurrence runs along each scanline:
///
/// ```text
/// L_r(p, d) = C(p, d)
///           + min(L_r(p-r, d), L_r(p-r, d±1) + q1, min_k L_r(p-r, k) + q2)
///           - min_k L_r(p-r, k)
/// ```
///
/// with `q1 = lambda * p1`, `q2 = lambda * p2`. Invalid data cells are
/// substituted with the largest finite cost in the volume while paths run
/// through them, and stay invalid in the output. The directional sums are
/// combined as `S = sum_r L_r - (R-1) * C` so the data term at each pixel is
/// counted exactly once, which keeps `S` commensurate with [`energy`] and
/// makes the optimizer exact on single-scanline problems.
pub fn sgm_aggregate<T: Real>(vol: &CostVolume<T>, spec: &SgmSpec) -> Result<CostVolume<T>> {
    spec.validate()?;
    let (w, h, n) = (vol.width(), vol.height(), vol.n_disp());
    let cap = match vol.max_finite_cost() {
        Some(c) => c,
        None => return Ok(vol.clone()), // nothing to optimize, everything invalid
    };
    let q1 = T::of(spec.lambda * spec.p1);
    let q2 = T::of(spec.lambda * spec.p2);
    let r = spec.directions as usize;

    // With min-normalization every L value is bounded by cap + q2; the sum
    // over directions by r * (cap + q2) plus the subtracted data term.
    let bound = 2.0 * r as f64 * (cap.widen() + spec.lambda * spec.p2);
    if !T::of(bound).is_finite() {
        return Err(Error::CostOverflow { bound });
    }

    let csub: Vec<T> = vol.data().iter().map(|c| if c.is_finite() { *c } else { cap }).collect();

    let dirs = &DIRECTION_TABLE[..r];
    let passes: Vec<Vec<T>> =
        dirs.par_iter().map(|&(dx, dy)| direction_pass(&csub, w, h, n, dx, dy, q1, q2)).collect();

    let mut out = vol.clone();
    let rm1 = T::of((r - 1) as f64);
    let src = vol.data();
    let dst = out.data_mut();
    for i in 0..dst.len() {
        if src[i].is_finite() {
            let mut s = T::zero();
            for pass in &passes {
                s += pass[i];
            }
            dst[i] = s - rm1 * csub[i];
        } else {
            dst[i] = T::nan();
        }
    }
    Ok(out)
}

fn direction_pass<T: Real>(
    c: &[T],
    w: usize,
    h: usize,
    n: usize,
    dx: i64,
    dy: i64,
    q1: T,
    q2: T,
) -> Vec<T> {
    let mut l = vec![T::zero(); c.len()];
    let mut starts: Vec<(i64, i64)> = Vec::new();
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let (px, py) = (x - dx, y - dy);
            if px < 0 || py < 0 || px >= w as i64 || py >= h as i64 {
                starts.push((x, y));
            }
        }
    }
    for (sx, sy) in starts {
        let (mut x, mut y) = (sx, sy);
        let mut first = true;
        while x >= 0 && y >= 0 && x < w as i64 && y < h as i64 {
            let base = (y as usize * w + x as usize) * n;
            if first {
                l[base..base + n].copy_from_slice(&c[base..base + n]);
                first = false;
            } else {
                let pbase = ((y - dy) as usize * w + (x - dx) as usize) * n;
                let mut m = l[pbase];
                for k in 1..n {
                    m = m.min(l[pbase + k]);
                }
                for di in 0..n {
                    let mut best = l[pbase + di];
                    if di > 0 {
                        best = best.min(l[pbase + di - 1] + q1);
                    }
                    if di + 1 < n {
                        best = best.min(l[pbase + di + 1] + q1);
                    }
                    best = best.min(m + q2);
                    l[base + di] = c[base + di] + best - m;
                }
            }
            x += dx;
            y += dy;
        }
    }
    l
}

/// Scanline optimization followed by winner-take-all on the aggregated
/// volume. With `lambda = 0` the result is bit-identical to
/// `select_wta(vol)`.
pub fn sgm_optimize<T: Real>(vol: &CostVolume<T>, spec: &SgmSpec) -> Result<DisparityMap<T>> {
    Ok(select_wta(&sgm_aggregate(vol, spec)?))
}

/// Energy of a labeling: data cost plus `lambda`-scaled smoothness over
/// horizontal and vertical neighbour pairs, where a one-level disparity step
/// costs `p1` and a larger jump `p2`. Disparities are rounded to the nearest
/// integer level; pixels (or pairs) with missing data are skipped.
pub fn energy<T: Real>(disp: &DisparityMap<T>, vol: &CostVolume<T>, spec: &SgmSpec) -> T {
    let (w, h) = (disp.width(), disp.height());
    let level = |x: usize, y: usize| -> Option<i64> { disp.get(x, y).map(|d| d.widen().round() as i64) };
    let mut data = T::zero();
    for y in 0..h {
        for x in 0..w {
            if let Some(d) = level(x, y) {
                let di = d - vol.d_min() as i64;
                if di >= 0 && (di as usize) < vol.n_disp() {
                    let c = vol.get(x, y, di as usize);
                    if c.is_finite() {
                        data += c;
                    }
                }
            }
        }
    }
    let (p1, p2) = (T::of(spec.p1), T::of(spec.p2));
    let mut smooth = T::zero();
    for y in 0..h {
        for x in 0..w {
            let Some(d0) = level(x, y) else { continue };
            if x + 1 < w {
                if let Some(d1) = level(x + 1, y) {
                    let delta = (d0 - d1).abs();
                    if delta == 1 {
                        smooth += p1;
                    } else if delta > 1 {
                        smooth += p2;
                    }
                }
            }
            if y + 1 < h {
                if let Some(d1) = level(x, y + 1) {
                    let delta = (d0 - d1).abs();
                    if delta == 1 {
                        smooth += p1;
                    } else if delta > 1 {
                        smooth += p2;
                    }
                }
            }
        }
    }
    data + T::of(spec.lambda) * smooth
}

impl<T: Real> CostVolume<T> {
    /// Mutable row chunks `(one image row, all disparities)` for parallel
    /// fills. Placed here rather than in `cost` because only aggregation
    /// needs it.
    fn data_rows_mut(&mut self) -> rayon::slice::ChunksMut<'_, T> {
        let row = self.width() * self.n_disp();
        self.data_mut().par_chunks_mut(row)
    }
}
