//! Synthetic stereo scene rendering with exact ground truth.
//!
//! A scene is a fronto-parallel textured background plane plus vertical
//! textured bars floating in front of it. Both views are rendered from the
//! same continuous per-element textures, so the right image is the left one
//! warped by each element's true disparity, with occlusion resolved by
//! depth. That makes the ground-truth disparity map exact by construction
//! rather than estimated.
//!
//! Everything is a pure function of the scene description: textures come
//! from an integer lattice hash, and the optional pixel noise from a
//! counter-based generator seeded by the scene seed. Rendering twice gives
//! bit-identical images.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::aggregate::DisparityMap;
use crate::cost::GrayImage;
use crate::error::{Error, Result};
use crate::fusion::{rasterize_polygon, BranchPolygon};
use crate::geometry::{DepthMap, RigParams};
use crate::scalar::Real;

/// Multi-octave value-noise texture parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextureSpec {
    /// Octave count; each octave doubles the frequency and halves the weight.
    pub octaves: u32,
    /// Lattice cell size of the first octave, in pixels.
    pub base_scale: f64,
    /// Gain around mid-grey; 1 keeps the raw noise range.
    pub contrast: f64,
}

impl Default for TextureSpec {
    fn default() -> Self {
        TextureSpec { octaves: 4, base_scale: 12.0, contrast: 1.0 }
    }
}

/// One scene element. Depths are metres from the left camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SceneElement {
    /// Full-frame background; exactly one per scene.
    Plane { depth_m: f64 },
    /// Vertical bar spanning the full image height in the left view.
    Bar { depth_m: f64, width_px: f64, center_x: f64 },
}

/// Complete synthetic scene description. Serializes to and from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Standard deviation of additive Gaussian pixel noise; 0 disables it.
    pub noise_sigma: f64,
    pub rig: RigParams,
    #[serde(default)]
    pub texture: TextureSpec,
    #[serde(rename = "element")]
    pub elements: Vec<SceneElement>,
}

/// Exact scene truth in the left view.
#[derive(Debug, Clone)]
pub struct GroundTruth<T = f64> {
    /// True disparity; invalid where the left pixel has no visible match
    /// in the right view (occluded or off-frame).
    pub disparity: DisparityMap<T>,
    /// True depth, masked identically to `disparity`.
    pub depth: DepthMap<T>,
    pub background_depth_m: f64,
    /// One outline per bar, in element order.
    pub polygons: Vec<BranchPolygon>,
    /// True bar depths, aligned with `polygons`.
    pub true_distances_m: Vec<f64>,
}

/// A rendered stereo pair with its truth.
#[derive(Debug, Clone)]
pub struct RenderedScene<T = f64> {
    pub left: GrayImage<T>,
    pub right: GrayImage<T>,
    pub truth: GroundTruth<T>,
}

fn splitmix(mut h: u64) -> u64 {
    h ^= h >> 30;
    h = h.wrapping_mul(0xBF58476D1CE4E5B9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94D049BB133111EB);
    h ^ (h >> 31)
}

fn lattice_hash(ix: i64, iy: i64, salt: u64) -> f64 {
    let h = splitmix(
        salt ^ (ix as u64).wrapping_mul(0x9E3779B97F4A7C15)
            ^ (iy as u64).wrapping_mul(0xC2B2AE3D27D4EB4F),
    );
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(u: f64, v: f64, salt: u64) -> f64 {
    let (x0, y0) = (u.floor(), v.floor());
    let (fx, fy) = (u - x0, v - y0);
    let (ix, iy) = (x0 as i64, y0 as i64);
    let c00 = lattice_hash(ix, iy, salt);
    let c10 = lattice_hash(ix + 1, iy, salt);
    let c01 = lattice_hash(ix, iy + 1, salt);
    let c11 = lattice_hash(ix + 1, iy + 1, salt);
    let top = c00 + fx * (c10 - c00);
    let bot = c01 + fx * (c11 - c01);
    top + fy * (bot - top)
}

/// Continuous texture value in `[0, 1]` at image coordinate `(u, v)`.
pub fn texture_value(u: f64, v: f64, spec: &TextureSpec, salt: u64) -> f64 {
    let mut amp = 1.0;
    let mut freq = 1.0 / spec.base_scale;
    let mut acc = 0.0;
    let mut norm = 0.0;
    for octave in 0..spec.octaves {
        let osalt = salt ^ splitmix(octave as u64 ^ 0xD6E8FEB86659FD93);
        acc += amp * value_noise(u * freq, v * freq, osalt);
        norm += amp;
        amp *= 0.5;
        freq *= 2.0;
    }
    (0.5 + spec.contrast * (acc / norm - 0.5)).clamp(0.0, 1.0)
}

struct Layer {
    disparity: f64,
    depth_m: f64,
    salt: u64,
    /// Left-view column span `[lo, hi)` in continuous coordinates; the
    /// background covers everything.
    span: Option<(f64, f64)>,
}

impl Layer {
    fn covers_left(&self, u: f64) -> bool {
        match self.span {
            None => true,
            Some((lo, hi)) => u >= lo && u < hi,
        }
    }

    /// The right view sees this layer at columns shifted by its disparity.
    fn covers_right(&self, u: f64) -> bool {
        self.covers_left(u + self.disparity)
    }
}

fn validate_spec(spec: &SceneSpec) -> Result<f64> {
    if spec.width == 0 || spec.height == 0 {
        return Err(Error::BadScene(format!("empty frame {}x{}", spec.width, spec.height)));
    }
    if !(spec.noise_sigma.is_finite() && spec.noise_sigma >= 0.0) {
        return Err(Error::BadScene(format!("noise_sigma must be finite and >= 0, got {}", spec.noise_sigma)));
    }
    if spec.texture.octaves == 0 {
        return Err(Error::BadScene("texture needs at least one octave".into()));
    }
    if !(spec.texture.base_scale.is_finite() && spec.texture.base_scale > 0.0) {
        return Err(Error::BadScene(format!("base_scale must be positive, got {}", spec.texture.base_scale)));
    }
    if !(spec.texture.contrast.is_finite() && spec.texture.contrast >= 0.0) {
        return Err(Error::BadScene(format!("contrast must be >= 0, got {}", spec.texture.contrast)));
    }
    let mut background = None;
    for (i, e) in spec.elements.iter().enumerate() {
        let depth = match e {
            SceneElement::Plane { depth_m } => {
                if background.is_some() {
                    return Err(Error::BadScene("more than one background plane".into()));
                }
                background = Some(*depth_m);
                *depth_m
            }
            SceneElement::Bar { depth_m, width_px, center_x } => {
                if !(width_px.is_finite() && *width_px > 0.0) {
                    return Err(Error::BadScene(format!("element {i}: bar width must be positive, got {width_px}")));
                }
                if !center_x.is_finite() {
                    return Err(Error::BadScene(format!("element {i}: bar center must be finite")));
                }
                *depth_m
            }
        };
        if !(depth.is_finite() && depth > 0.0) {
            return Err(Error::BadScene(format!("element {i}: depth must be positive, got {depth}")));
        }
    }
    let Some(bg) = background else {
        return Err(Error::BadScene("scene needs exactly one background plane".into()));
    };
    for e in &spec.elements {
        if let SceneElement::Bar { depth_m, .. } = e {
            if *depth_m >= bg {
                return Err(Error::BadScene(format!(
                    "bar at {depth_m} m is not in front of the {bg} m background"
                )));
            }
        }
    }
    Ok(bg)
}

/// Boundary points for a bar, as an annotator would place them: down the
/// left edge, back up the right edge, half a pixel inside the bar. The
/// vertical spacing is at least the bar width so that triangle grouping
/// pairs points across the bar and the centroids land inside it.
fn bar_outline(center_x: f64, width_px: f64, width: usize, height: usize) -> Vec<[f64; 2]> {
    let spacing = width_px.max(8.0);
    let xl = (center_x - width_px / 2.0 + 0.5).clamp(0.5, width as f64 - 0.5);
    let xr = (center_x + width_px / 2.0 - 0.5).clamp(0.5, width as f64 - 0.5);
    let mut ys = Vec::new();
    let mut y = spacing / 2.0;
    while y <= height as f64 - spacing / 2.0 {
        ys.push(y);
        y += spacing;
    }
    if ys.len() < 2 {
        ys = vec![0.5, height as f64 - 0.5];
    }
    let mut pts = Vec::with_capacity(ys.len() * 2);
    for y in &ys {
        pts.push([xl, *y]);
    }
    for y in ys.iter().rev() {
        pts.push([xr, *y]);
    }
    pts
}

/// Render the scene into a stereo pair and its exact ground truth.
///
/// The frontmost layer at each column owns the pixel (nearer disparity
/// wins; ties go to the earlier element). A left pixel's truth is invalid
/// when its match in the right view is off-frame or owned by a nearer layer.
/// With integer disparities and zero noise, `right(x - d, y)` reproduces
/// `left(x, y)` bit for bit wherever the truth is valid.
pub fn render<T: Real>(spec: &SceneSpec) -> Result<RenderedScene<T>> {
    let bg = validate_spec(spec)?;
    let rig = spec.rig.to_rig::<f64>()?;
    let w_product = rig.w_product();
    let (w, h) = (spec.width, spec.height);

    let mut layers = Vec::with_capacity(spec.elements.len());
    let mut polygons = Vec::new();
    let mut true_distances = Vec::new();
    for (i, e) in spec.elements.iter().enumerate() {
        let salt = splitmix(spec.seed ^ (i as u64 + 1).wrapping_mul(0xA24BAED4963EE407));
        let layer = match e {
            SceneElement::Plane { depth_m } => {
                Layer { disparity: w_product / depth_m, depth_m: *depth_m, salt, span: None }
            }
            SceneElement::Bar { depth_m, width_px, center_x } => {
                polygons.push(BranchPolygon::new(bar_outline(*center_x, *width_px, w, h))?);
                true_distances.push(*depth_m);
                Layer {
                    disparity: w_product / depth_m,
                    depth_m: *depth_m,
                    salt,
                    span: Some((center_x - width_px / 2.0, center_x + width_px / 2.0)),
                }
            }
        };
        if layer.disparity >= w as f64 {
            return Err(Error::BadScene(format!(
                "element {i}: disparity {} exceeds the {w} px frame",
                layer.disparity
            )));
        }
        layers.push(layer);
    }

    let front_left = |u: f64| -> usize {
        let mut best: Option<usize> = None;
        for (i, l) in layers.iter().enumerate() {
            if l.covers_left(u) && best.map_or(true, |b: usize| l.disparity > layers[b].disparity) {
                best = Some(i);
            }
        }
        best.expect("background covers every column")
    };
    let front_right = |u: f64| -> usize {
        let mut best: Option<usize> = None;
        for (i, l) in layers.iter().enumerate() {
            if l.covers_right(u) && best.map_or(true, |b| l.disparity > layers[b].disparity) {
                best = Some(i);
            }
        }
        best.expect("background covers every right column")
    };

    let mut left_v = vec![0.0f64; w * h];
    let mut right_v = vec![0.0f64; w * h];
    let mut gt_disp = DisparityMap::<T>::new_invalid(w, h);
    let mut gt_depth = DepthMap::<T>::new_invalid(w, h);
    for y in 0..h {
        let vc = y as f64 + 0.5;
        for x in 0..w {
            let uc = x as f64 + 0.5;
            let li = front_left(uc);
            left_v[y * w + x] = texture_value(uc, vc, &spec.texture, layers[li].salt);
            let ri = front_right(uc);
            right_v[y * w + x] =
                texture_value(uc + layers[ri].disparity, vc, &spec.texture, layers[ri].salt);

            let ur = uc - layers[li].disparity;
            if ur >= 0.0 && front_right(ur) == li {
                gt_disp.set(x, y, T::of(layers[li].disparity));
                gt_depth.set(x, y, T::of(layers[li].depth_m));
            }
        }
    }

    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma)
            .map_err(|e| Error::BadScene(format!("noise distribution: {e}")))?;
        for (img, tag) in [(&mut left_v, 0x6C62272E07BB0142u64), (&mut right_v, 0x27D4EB2F165667C5)] {
            let mut rng = ChaCha12Rng::seed_from_u64(splitmix(spec.seed ^ tag));
            for v in img.iter_mut() {
                *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
            }
        }
    }

    let left = GrayImage::from_vec(w, h, left_v.into_iter().map(T::of).collect())?;
    let right = GrayImage::from_vec(w, h, right_v.into_iter().map(T::of).collect())?;
    Ok(RenderedScene {
        left,
        right,
        truth: GroundTruth {
            disparity: gt_disp,
            depth: gt_depth,
            background_depth_m: bg,
            polygons,
            true_distances_m: true_distances,
        },
    })
}

/// Replace a deterministic random fraction of the depth samples inside the
/// branch outlines with the background depth, simulating matcher blunders.
///
/// `fraction` applies to the union of the rasterized outlines and must stay
/// below the 0.5 breakdown point of the downstream median gate; the sample
/// count is rounded to the nearest integer. A zero fraction returns the
/// input bit for bit.
pub fn corrupt<T: Real>(
    depth: &DepthMap<T>,
    polygons: &[BranchPolygon],
    background_depth_m: f64,
    fraction: f64,
    seed: u64,
) -> Result<DepthMap<T>> {
    if !(fraction.is_finite() && (0.0..0.5).contains(&fraction)) {
        return Err(Error::BadFraction(fraction));
    }
    let mut cells = Vec::new();
    for p in polygons {
        cells.extend(rasterize_polygon(p.points(), depth.width(), depth.height())?);
    }
    cells.sort_unstable();
    cells.dedup();
    let mut out = depth.clone();
    let k = (fraction * cells.len() as f64).round() as usize;
    if k == 0 {
        return Ok(out);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    for idx in rand::seq::index::sample(&mut rng, cells.len(), k) {
        let (x, y) = cells[idx];
        out.set(x, y, T::of(background_depth_m));
    }
    Ok(out)
}
