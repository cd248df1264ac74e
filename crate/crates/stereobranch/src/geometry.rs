//! Rectified two-camera geometry.
//!
//! The rig model is a pair of identical pinhole cameras separated by a
//! horizontal baseline, with row-aligned (rectified) images. A scene point
//! `(x, y, z)` in the left camera frame projects to
//!
//! ```text
//! ul = fx * x / z + ox          vl = fy * y / z + oy
//! ur = fx * (x - b) / z + ox    vr = vl
//! ```
//!
//! so the disparity `d = ul - ur` carries all depth information:
//! `z = b * fx / d`. The product `W = b * fx` shows up everywhere and is kept
//! as a single precomputed value.
//!
//! Pixel coordinates are continuous; integer pixel indices convert through
//! the pixel-centre convention (index `i` covers `[i, i+1)` with centre
//! `i + 0.5`).

use serde::{Deserialize, Serialize};

use crate::aggregate::DisparityMap;
use crate::error::{Error, Result};
use crate::grid::FloatField;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics<T = f64> {
    pub fx: T,
    pub fy: T,
    pub ox: T,
    pub oy: T,
}

/// Calibrated rectified stereo rig. Invariants (`fx, fy > 0`,
/// `baseline_m > 0`, everything finite) are enforced on construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoRig<T = f64> {
    intrinsics: CameraIntrinsics<T>,
    baseline_m: T,
}

impl<T: Real> StereoRig<T> {
    pub fn new(intrinsics: CameraIntrinsics<T>, baseline_m: T) -> Result<Self> {
        let CameraIntrinsics { fx, fy, ox, oy } = intrinsics;
        if !(fx.is_finite() && fx > T::zero()) {
            return Err(Error::BadRig(format!("fx must be positive and finite, got {fx}")));
        }
        if !(fy.is_finite() && fy > T::zero()) {
            return Err(Error::BadRig(format!("fy must be positive and finite, got {fy}")));
        }
        if !(ox.is_finite() && oy.is_finite()) {
            return Err(Error::BadRig(format!("principal point must be finite, got ({ox}, {oy})")));
        }
        if !(baseline_m.is_finite() && baseline_m > T::zero()) {
            return Err(Error::BadRig(format!("baseline must be positive and finite, got {baseline_m}")));
        }
        Ok(StereoRig { intrinsics, baseline_m })
    }

    #[inline]
    pub fn intrinsics(&self) -> &CameraIntrinsics<T> {
        &self.intrinsics
    }

    #[inline]
    pub fn baseline_m(&self) -> T {
        self.baseline_m
    }

    /// `W = baseline * fx`, the disparity-to-depth constant.
    #[inline]
    pub fn w_product(&self) -> T {
        self.baseline_m * self.intrinsics.fx
    }

    pub fn params(&self) -> RigParams {
        RigParams {
            fx: self.intrinsics.fx.widen(),
            fy: self.intrinsics.fy.widen(),
            ox: self.intrinsics.ox.widen(),
            oy: self.intrinsics.oy.widen(),
            baseline_m: self.baseline_m.widen(),
        }
    }
}

/// Plain serializable rig description, as found in calibration files and
/// scene specs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigParams {
    pub fx: f64,
    pub fy: f64,
    pub ox: f64,
    pub oy: f64,
    pub baseline_m: f64,
}

impl RigParams {
    pub fn to_rig<T: Real>(&self) -> Result<StereoRig<T>> {
        StereoRig::new(
            CameraIntrinsics {
                fx: T::of(self.fx),
                fy: T::of(self.fy),
                ox: T::of(self.ox),
                oy: T::of(self.oy),
            },
            T::of(self.baseline_m),
        )
    }
}

/// Point in the left camera frame, metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenePoint<T = f64> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> ScenePoint<T> {
    /// Euclidean distance from the left camera centre. The pipeline reports
    /// z-depth by default; this accessor is for callers that want line-of-
    /// sight range instead.
    pub fn euclidean_range(&self) -> T {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

/// Matched pixel pair in continuous coordinates. For a rectified rig
/// `vr == vl`; both are kept so that calibration residuals can be carried
/// through if they ever appear.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelPair<T = f64> {
    pub ul: T,
    pub vl: T,
    pub ur: T,
    pub vr: T,
}

impl<T: Real> PixelPair<T> {
    #[inline]
    pub fn disparity(&self) -> T {
        self.ul - self.ur
    }
}

/// Projects a scene point into both cameras. The depth must be positive and
/// finite; points at or behind the image plane have no projection.
pub fn project<T: Real>(rig: &StereoRig<T>, p: &ScenePoint<T>) -> Result<PixelPair<T>> {
    if !(p.z.is_finite() && p.z > T::zero()) {
        return Err(Error::NonPositiveDepth(p.z.widen()));
    }
    let CameraIntrinsics { fx, fy, ox, oy } = *rig.intrinsics();
    let ul = fx * p.x / p.z + ox;
    let vl = fy * p.y / p.z + oy;
    let ur = fx * (p.x - rig.baseline_m()) / p.z + ox;
    Ok(PixelPair { ul, vl, ur, vr: vl })
}

/// Recovers the scene point from a matched pair:
///
/// ```text
/// x = b (ul - ox) / d    y = b fx (vl - oy) / (fy d)    z = b fx / d
/// ```
///
/// with `d = ul - ur`. Zero disparity is a point at infinity; negative
/// disparity would place the point behind the cameras.
pub fn triangulate<T: Real>(rig: &StereoRig<T>, pix: &PixelPair<T>) -> Result<ScenePoint<T>> {
    let d = pix.disparity();
    if !d.is_finite() {
        return Err(Error::BadParameter(format!("non-finite disparity {d}")));
    }
    if d == T::zero() {
        return Err(Error::PointAtInfinity);
    }
    if d < T::zero() {
        return Err(Error::NegativeDisparity(d.widen()));
    }
    let CameraIntrinsics { fx, fy, ox, oy } = *rig.intrinsics();
    let b = rig.baseline_m();
    let x = b * (pix.ul - ox) / d;
    let y = b * fx * (pix.vl - oy) / (fy * d);
    let z = b * fx / d;
    Ok(ScenePoint { x, y, z })
}

/// `z = W / d` for a positive disparity.
pub fn disparity_to_depth<T: Real>(rig: &StereoRig<T>, d: T) -> Result<T> {
    if !d.is_finite() {
        return Err(Error::BadParameter(format!("non-finite disparity {d}")));
    }
    if d == T::zero() {
        return Err(Error::PointAtInfinity);
    }
    if d < T::zero() {
        return Err(Error::NegativeDisparity(d.widen()));
    }
    Ok(rig.w_product() / d)
}

/// `d = W / z` for a positive depth.
pub fn depth_to_disparity<T: Real>(rig: &StereoRig<T>, z: T) -> Result<T> {
    if !(z.is_finite() && z > T::zero()) {
        return Err(Error::NonPositiveDepth(z.widen()));
    }
    Ok(rig.w_product() / z)
}

/// Dense per-pixel depth in metres; NaN marks pixels without depth.
#[derive(Debug, Clone)]
pub struct DepthMap<T = f64> {
    field: FloatField<T>,
}

impl<T: Real> DepthMap<T> {
    pub fn from_field(field: FloatField<T>) -> Self {
        DepthMap { field }
    }

    pub fn new_invalid(width: usize, height: usize) -> Self {
        DepthMap { field: FloatField::new_invalid(width, height) }
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
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.field.is_valid(x, y)
    }
}

/// Per-pixel `z = W / d`. Invalid and non-positive disparities become
/// invalid depth pixels rather than errors; a disparity map routinely
/// contains holes.
pub fn depth_map_from_disparity<T: Real>(rig: &StereoRig<T>, disp: &DisparityMap<T>) -> DepthMap<T> {
    let w_prod = rig.w_product();
    let field = FloatField::from_fn(disp.width(), disp.height(), |x, y| match disp.get(x, y) {
        Some(d) if d > T::zero() => Some(w_prod / d),
        _ => None,
    });
    DepthMap::from_field(field)
}
