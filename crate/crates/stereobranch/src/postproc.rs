//! Disparity post-processing: consistency checking, subpixel refinement,
//! median filtering, and edge-aware weighted-least-squares smoothing.
//!
//! The first three stages preserve or shrink the validity mask and never
//! invent estimates; the WLS stage is the one deliberate exception, since
//! its solution is defined on every pixel and therefore fills holes.

use crate::aggregate::DisparityMap;
use crate::cost::{CostVolume, GrayImage, WindowSpec};
use crate::error::{Error, Result};
use crate::grid::FloatField;
use crate::scalar::Real;

/// Invalidate left-map pixels whose match in the right map disagrees.
///
/// A left pixel at `x` with disparity `d` maps to right column
/// `round(x - d)`; the pixel survives iff that column is inside the frame,
/// the right map is valid there, and the two disparities differ by at most
/// `max_diff` pixels. Surviving values are copied bit-for-bit, so the check
/// can only shrink the valid set.
pub fn lr_check<T: Real>(
    left: &DisparityMap<T>,
    right: &DisparityMap<T>,
    max_diff: f64,
) -> Result<DisparityMap<T>> {
    if !(max_diff.is_finite() && max_diff >= 0.0) {
        return Err(Error::BadParameter(format!("max_diff must be finite and >= 0, got {max_diff}")));
    }
    if left.width() != right.width() || left.height() != right.height() {
        return Err(Error::SizeMismatch(left.width(), left.height(), right.width(), right.height()));
    }
    let (w, h) = (left.width(), left.height());
    let mut out = left.clone();
    for y in 0..h {
        for x in 0..w {
            let Some(d) = left.get(x, y) else { continue };
            let xr = (x as f64 - d.widen()).round();
            if xr < 0.0 || xr >= w as f64 {
                out.invalidate(x, y);
                continue;
            }
            match right.get(xr as usize, y) {
                Some(dr) if (d.widen() - dr.widen()).abs() <= max_diff => {}
                _ => out.invalidate(x, y),
            }
        }
    }
    Ok(out)
}

/// Parabola-fit subpixel refinement on the volume the disparities were
/// selected from.
///
/// With `c0` the cost at the selected level and `cm`, `cp` at the adjacent
/// levels, the correction is `-(cp - cm) / (2 (cp + cm - 2 c0))`, clamped to
/// `[-0.5, 0.5]`. Pixels keep their integer estimate when a neighbour level
/// is missing (range boundary or invalid cost) or the parabola does not
/// curve upwards (denominator <= 0). The validity mask is unchanged.
pub fn subpixel_refine<T: Real>(disp: &DisparityMap<T>, vol: &CostVolume<T>) -> DisparityMap<T> {
    let (w, h) = (disp.width(), disp.height());
    let mut out = disp.clone();
    let half = T::of(0.5);
    for y in 0..h.min(vol.height()) {
        for x in 0..w.min(vol.width()) {
            let Some(d) = disp.get(x, y) else { continue };
            let level = d.widen().round() as i64 - vol.d_min() as i64;
            if level < 1 || level as usize + 1 >= vol.n_disp() {
                continue;
            }
            let di = level as usize;
            let cm = vol.get(x, y, di - 1);
            let c0 = vol.get(x, y, di);
            let cp = vol.get(x, y, di + 1);
            if !(cm.is_finite() && c0.is_finite() && cp.is_finite()) {
                continue;
            }
            let denom = cp + cm - (c0 + c0);
            if denom <= T::zero() {
                continue;
            }
            let delta = (-(cp - cm) / (denom + denom)).min(half).max(-half);
            out.set(x, y, d + delta);
        }
    }
    out
}

/// Windowed median. The window is intersected with the frame (truncated at
/// borders, not replicated) and only valid values enter the sort; for an
/// even count the lower middle is taken. Valid pixels stay valid, invalid
/// pixels stay invalid.
pub fn median_filter<T: Real>(disp: &DisparityMap<T>, window: WindowSpec) -> DisparityMap<T> {
    let (w, h) = (disp.width(), disp.height());
    let (hw, hh) = (window.half_width(), window.half_height());
    let mut out = disp.clone();
    let mut vals: Vec<T> = Vec::with_capacity(window.area());
    for y in 0..h {
        for x in 0..w {
            if !disp.is_valid(x, y) {
                continue;
            }
            vals.clear();
            for dy in -hh..=hh {
                let yy = y as i64 + dy;
                if yy < 0 || yy >= h as i64 {
                    continue;
                }
                for dx in -hw..=hw {
                    let xx = x as i64 + dx;
                    if xx < 0 || xx >= w as i64 {
                        continue;
                    }
                    if let Some(v) = disp.get(xx as usize, yy as usize) {
                        vals.push(v);
                    }
                }
            }
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            out.set(x, y, vals[(vals.len() - 1) / 2]);
        }
    }
    out
}

/// Weighted-least-squares smoother parameters.
///
/// The filter minimizes
/// `sum_p w_p (x_p - d_p)^2 + lambda * sum_pq w_pq (x_p - x_q)^2`
/// over horizontal and vertical neighbour pairs, with
/// `w_pq = exp(-(g_p - g_q)^2 / (2 sigma^2))` from the guide image and
/// `w_p = data_weight` on valid pixels, `0` on invalid ones.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WlsSpec {
    pub lambda: f64,
    /// Guide-contrast scale for the pair weights.
    pub sigma: f64,
    /// Relative-residual convergence threshold for the solver.
    pub tol: f64,
    /// Iteration budget as a multiple of sqrt(pixel count).
    pub max_iter_factor: f64,
    pub data_weight: f64,
}

impl Default for WlsSpec {
    fn default() -> Self {
        WlsSpec { lambda: 0.5, sigma: 0.05, tol: 1e-6, max_iter_factor: 10.0, data_weight: 1.0 }
    }
}

impl WlsSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::BadParameter(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::BadParameter(format!("sigma must be finite and > 0, got {}", self.sigma)));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::BadParameter(format!("tol must be finite and > 0, got {}", self.tol)));
        }
        if !(self.max_iter_factor.is_finite() && self.max_iter_factor > 0.0) {
            return Err(Error::BadParameter(format!(
                "max_iter_factor must be finite and > 0, got {}",
                self.max_iter_factor
            )));
        }
        if !(self.data_weight.is_finite() && self.data_weight > 0.0) {
            return Err(Error::BadParameter(format!(
                "data_weight must be finite and > 0, got {}",
                self.data_weight
            )));
        }
        Ok(())
    }
}

/// Pair weights towards the right and lower neighbour, in double precision.
fn pair_weights<T: Real>(guide: &GrayImage<T>, sigma: f64) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (guide.width(), guide.height());
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut wh = vec![0.0; w * h];
    let mut wv = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let g = guide.get(x, y).widen();
            if x + 1 < w {
                let dg = g - guide.get(x + 1, y).widen();
                wh[y * w + x] = (-dg * dg * inv).exp();
            }
            if y + 1 < h {
                let dg = g - guide.get(x, y + 1).widen();
                wv[y * w + x] = (-dg * dg * inv).exp();
            }
        }
    }
    (wh, wv)
}

/// `y = (W_p + lambda * L) x` for the smoothness graph Laplacian `L`.
fn wls_matvec(
    x: &[f64],
    wp: &[f64],
    wh: &[f64],
    wv: &[f64],
    lambda: f64,
    w: usize,
    h: usize,
    out: &mut [f64],
) {
    for y in 0..h {
        for xx in 0..w {
            let i = y * w + xx;
            let mut lap = 0.0;
            if xx + 1 < w {
                lap += wh[i] * (x[i] - x[i + 1]);
            }
            if xx > 0 {
                lap += wh[i - 1] * (x[i] - x[i - 1]);
            }
            if y + 1 < h {
                lap += wv[i] * (x[i] - x[i + w]);
            }
            if y > 0 {
                lap += wv[i - w] * (x[i] - x[i - w]);
            }
            out[i] = wp[i] * x[i] + lambda * lap;
        }
    }
}

/// Edge-aware smoothing; see [`WlsSpec`] for the objective.
///
/// The normal equations are solved by conjugate gradients in double
/// precision, started from the input map (holes seeded with the mean of the
/// valid values), and stopped when the residual falls below `tol` relative
/// to the right-hand side. The solution is defined on every pixel, so the
/// output is fully valid: holes are filled by propagation from their
/// surroundings. `lambda = 0` leaves nothing to smooth and returns the
/// input unchanged, mask included. Fails with `NoConvergence` if the
/// iteration budget runs out, and with `NoValidPixels` if no pixel carries
/// data.
pub fn wls_filter<T: Real>(
    disp: &DisparityMap<T>,
    guide: &GrayImage<T>,
    spec: &WlsSpec,
) -> Result<DisparityMap<T>> {
    spec.validate()?;
    let (w, h) = (disp.width(), disp.height());
    if guide.width() != w || guide.height() != h {
        return Err(Error::SizeMismatch(w, h, guide.width(), guide.height()));
    }
    let n = w * h;
    let mut sum = 0.0;
    let mut cnt = 0usize;
    for y in 0..h {
        for x in 0..w {
            if let Some(d) = disp.get(x, y) {
                sum += d.widen();
                cnt += 1;
            }
        }
    }
    if cnt == 0 {
        return Err(Error::NoValidPixels);
    }
    if spec.lambda == 0.0 {
        return Ok(disp.clone());
    }
    let mean = sum / cnt as f64;

    let (wh, wv) = pair_weights(guide, spec.sigma);
    let mut wp = vec![0.0; n];
    let mut b = vec![0.0; n];
    let mut x0 = vec![mean; n];
    for y in 0..h {
        for xx in 0..w {
            if let Some(d) = disp.get(xx, y) {
                let i = y * w + xx;
                wp[i] = spec.data_weight;
                b[i] = spec.data_weight * d.widen();
                x0[i] = d.widen();
            }
        }
    }

    let max_iter = (spec.max_iter_factor * (n as f64).sqrt()).ceil() as usize;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let bnorm = dot(&b, &b).sqrt().max(f64::MIN_POSITIVE);

    let mut x = x0;
    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    wls_matvec(&x, &wp, &wh, &wv, spec.lambda, w, h, &mut ap);
    for i in 0..n {
        r[i] = b[i] - ap[i];
    }
    let mut p = r.clone();
    let mut rs = dot(&r, &r);
    let mut iterations = 0usize;
    while rs.sqrt() / bnorm > spec.tol {
        if iterations >= max_iter {
            return Err(Error::NoConvergence { residual: rs.sqrt() / bnorm, iterations });
        }
        wls_matvec(&p, &wp, &wh, &wv, spec.lambda, w, h, &mut ap);
        let alpha = rs / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = dot(&r, &r);
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
        iterations += 1;
    }

    let field = FloatField::from_fn(w, h, |xx, y| Some(T::of(x[y * w + xx])));
    Ok(DisparityMap::from_field(field))
}

/// The objective [`wls_filter`] minimizes, evaluated in double precision for
/// a candidate map `x`. Terms whose candidate value is missing are skipped,
/// as are data terms on pixels where `data` is invalid (their weight is
/// zero by definition).
pub fn wls_objective<T: Real>(
    x: &DisparityMap<T>,
    data: &DisparityMap<T>,
    guide: &GrayImage<T>,
    spec: &WlsSpec,
) -> f64 {
    let (w, h) = (x.width(), x.height());
    let (wh, wv) = pair_weights(guide, spec.sigma);
    let mut obj = 0.0;
    for y in 0..h {
        for xx in 0..w {
            let Some(xv) = x.get(xx, y) else { continue };
            let xv = xv.widen();
            if let Some(d) = data.get(xx, y) {
                let e = xv - d.widen();
                obj += spec.data_weight * e * e;
            }
            if xx + 1 < w {
                if let Some(q) = x.get(xx + 1, y) {
                    let e = xv - q.widen();
                    obj += spec.lambda * wh[y * w + xx] * e * e;
                }
            }
            if y + 1 < h {
                if let Some(q) = x.get(xx, y + 1) {
                    let e = xv - q.widen();
                    obj += spec.lambda * wv[y * w + xx] * e * e;
                }
            }
        }
    }
    obj
}
