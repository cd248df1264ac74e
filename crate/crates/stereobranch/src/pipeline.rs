//! End-to-end disparity pipeline: preprocessing, matching-cost volume,
//! aggregation, winner selection, and refinement, in a fixed order:
//!
//! preprocess -> cost volume -> aggregate -> WTA -> [left-right check]
//! -> [subpixel] -> [median] -> [WLS]
//!
//! The `sgm` mode aggregates with the block window first and runs the
//! scanline optimisation on the block sums. Subpixel refinement always
//! reads the volume the winner was selected from.

use crate::aggregate::{
    aggregate_diffusion, aggregate_fixed, aggregate_multi, select_wta, sgm_aggregate,
    DisparityMap, SgmSpec,
};
use crate::cost::{build_cost_volume, CostKind, CostVolume, GrayImage, WindowSpec};
use crate::error::{Error, Result};
use crate::fusion::DepthReadMode;
use crate::postproc::{lr_check, median_filter, subpixel_refine, wls_filter, WlsSpec};
use crate::scalar::Real;

/// Image smoothing applied to both views before matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preprocess {
    None,
    /// 3x3 box mean with border replication.
    Box3,
}

/// Aggregation strategy for the pipeline. The window for `Fixed`, `Multi`,
/// and the block step of `Sgm` comes from [`PipelineConfig::window`].
#[derive(Debug, Clone, PartialEq)]
pub enum AggMode {
    Fixed,
    Multi { offsets: Vec<(i64, i64)> },
    Diffusion { iterations: usize, weights: Vec<f64> },
    Sgm(SgmSpec),
}

/// How depth samples inside a branch outline are combined into one
/// distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionVariant {
    /// Triangle centroids plus an m-pixel neighbourhood around each.
    Centroid,
    /// Every cell the outline covers.
    Polygon,
}

/// Penalties scaled the classic way: 8 and 32 times the window area on a
/// 0..255 intensity scale, mapped to the unit intensity range used here.
pub fn sgm_defaults_for_window(window: WindowSpec) -> SgmSpec {
    let area = window.area() as f64;
    SgmSpec { p1: 8.0 * area / 255.0, p2: 32.0 * area / 255.0, ..SgmSpec::default() }
}

/// Full run configuration. Post-processing stages are optional; `None`
/// skips the stage. The fusion fields do not affect [`run_disparity`];
/// they travel with the config so one struct describes a whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub cost: CostKind,
    pub window: WindowSpec,
    pub d_min: u32,
    pub d_max: u32,
    pub preprocess: Preprocess,
    pub agg: AggMode,
    /// Left-right consistency tolerance in pixels; `None` skips the check.
    pub lr_max_diff: Option<f64>,
    pub subpixel: bool,
    pub median: Option<WindowSpec>,
    pub wls: Option<WlsSpec>,
    /// Outlier-band half-width in MAD units.
    pub k: f64,
    /// Neighbourhood size per centroid.
    pub m: usize,
    pub variant: FusionVariant,
    pub read_mode: DepthReadMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let window = WindowSpec::new(5, 5).expect("5x5 is odd");
        PipelineConfig {
            cost: CostKind::Ad,
            window,
            d_min: 0,
            d_max: 64,
            preprocess: Preprocess::None,
            agg: AggMode::Sgm(sgm_defaults_for_window(window)),
            lr_max_diff: None,
            subpixel: true,
            median: Some(WindowSpec::new(3, 3).expect("3x3 is odd")),
            wls: Some(WlsSpec::default()),
            k: 3.0,
            m: 8,
            variant: FusionVariant::Centroid,
            read_mode: DepthReadMode::Nearest,
        }
    }
}

/// Intermediate maps kept for inspection, named after their position in
/// the chain.
#[derive(Debug, Clone)]
pub struct Stages<T = f64> {
    /// Left view after preprocessing.
    pub pre_left: GrayImage<T>,
    /// Right view after preprocessing.
    pub pre_right: GrayImage<T>,
    /// Disparity after selection and the classic refinements
    /// (left-right check, subpixel, median).
    pub classic: DisparityMap<T>,
    /// Disparity after WLS smoothing; present iff the stage ran.
    pub smoothed: Option<DisparityMap<T>>,
}

#[derive(Debug, Clone)]
pub struct DisparityResult<T = f64> {
    /// The last map in the chain.
    pub disparity: DisparityMap<T>,
    pub stages: Stages<T>,
}

fn box3<T: Real>(img: &GrayImage<T>) -> Result<GrayImage<T>> {
    let (w, h) = (img.width(), img.height());
    let nine = T::of(9.0);
    GrayImage::from_fn(w, h, |x, y| {
        let mut sum = T::zero();
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                sum += img.get(sx, sy);
            }
        }
        (sum / nine).min(T::one()).max(T::zero())
    })
}

fn preprocess<T: Real>(img: &GrayImage<T>, mode: Preprocess) -> Result<GrayImage<T>> {
    match mode {
        Preprocess::None => Ok(img.clone()),
        Preprocess::Box3 => box3(img),
    }
}

/// Build, aggregate, and select for one matching direction. Returns the
/// volume the winner was chosen from so subpixel refinement can reuse it.
fn solve_one_side<T: Real>(
    left: &GrayImage<T>,
    right: &GrayImage<T>,
    cfg: &PipelineConfig,
    mirrored: bool,
) -> Result<(CostVolume<T>, DisparityMap<T>)> {
    let raw = build_cost_volume(left, right, cfg.d_min, cfg.d_max, cfg.cost, cfg.window)?;
    let vol = match &cfg.agg {
        AggMode::Fixed => aggregate_fixed(&raw, cfg.window),
        AggMode::Multi { offsets } => {
            // In the mirrored pass the image x axis is reversed, so the
            // window offsets must flip with it to cover the same pixels.
            if mirrored {
                let flipped: Vec<(i64, i64)> = offsets.iter().map(|&(dx, dy)| (-dx, dy)).collect();
                aggregate_multi(&raw, cfg.window, &flipped)?
            } else {
                aggregate_multi(&raw, cfg.window, offsets)?
            }
        }
        AggMode::Diffusion { iterations, weights } => aggregate_diffusion(&raw, *iterations, weights)?,
        AggMode::Sgm(spec) => sgm_aggregate(&aggregate_fixed(&raw, cfg.window), spec)?,
    };
    let disp = select_wta(&vol);
    Ok((vol, disp))
}

/// Run the disparity pipeline on a rectified pair.
pub fn run_disparity<T: Real>(
    left: &GrayImage<T>,
    right: &GrayImage<T>,
    cfg: &PipelineConfig,
) -> Result<DisparityResult<T>> {
    if left.width() != right.width() || left.height() != right.height() {
        return Err(Error::SizeMismatch(left.width(), left.height(), right.width(), right.height()));
    }
    let pre_left = preprocess(left, cfg.preprocess)?;
    let pre_right = preprocess(right, cfg.preprocess)?;

    let (vol, mut disp) = solve_one_side(&pre_left, &pre_right, cfg, false)?;

    if let Some(max_diff) = cfg.lr_max_diff {
        // Right-view disparities via mirroring: flipping both images and
        // swapping their roles turns right-to-left matching into the
        // standard left-to-right form with the same disparity sign.
        let (_, flipped) = solve_one_side(&pre_right.hflip(), &pre_left.hflip(), cfg, true)?;
        let right_disp = flipped.hflip();
        disp = lr_check(&disp, &right_disp, max_diff)?;
    }
    if cfg.subpixel {
        disp = subpixel_refine(&disp, &vol);
    }
    if let Some(win) = cfg.median {
        disp = median_filter(&disp, win);
    }
    let classic = disp;
    let smoothed = match &cfg.wls {
        Some(spec) => Some(wls_filter(&classic, &pre_left, spec)?),
        None => None,
    };
    let disparity = smoothed.clone().unwrap_or_else(|| classic.clone());
    Ok(DisparityResult { disparity, stages: Stages { pre_left, pre_right, classic, smoothed } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{render, RenderedScene, SceneElement, SceneSpec, TextureSpec};
    use crate::geometry::RigParams;

    fn plane_scene(seed: u64, noise_sigma: f64) -> RenderedScene<f64> {
        let spec = SceneSpec {
            width: 96,
            height: 64,
            seed,
            noise_sigma,
            rig: RigParams { fx: 800.0, fy: 800.0, ox: 48.0, oy: 32.0, baseline_m: 0.125 },
            texture: TextureSpec { octaves: 4, base_scale: 9.0, contrast: 1.4 },
            // W = 0.125 * 800 = 100, so depth 2.5 m sits at disparity 40.
            elements: vec![SceneElement::Plane { depth_m: 2.5 }],
        };
        render(&spec).unwrap()
    }

    fn base_config() -> PipelineConfig {
        PipelineConfig { d_max: 48, wls: None, ..PipelineConfig::default() }
    }

    #[test]
    fn identical_images_give_zero_disparity() {
        let scene = plane_scene(11, 0.0);
        let cfg = PipelineConfig { d_max: 16, ..PipelineConfig::default() };
        let out = run_disparity(&scene.left, &scene.left, &cfg).unwrap();
        let disp = &out.disparity;
        assert_eq!(disp.valid_count(), disp.width() * disp.height());
        for y in 0..disp.height() {
            for x in 0..disp.width() {
                assert_eq!(disp.get(x, y), Some(0.0), "pixel ({x}, {y})");
            }
        }
    }

    #[test]
    fn plane_is_recovered_within_a_pixel() {
        let scene = plane_scene(3, 0.0);
        let out = run_disparity(&scene.left, &scene.right, &base_config()).unwrap();
        let disp = &out.disparity;
        let mut checked = 0usize;
        let mut close = 0usize;
        // Skip a border two windows wide and the occluded/off-frame band
        // x < 40 where no correct match exists.
        for y in 5..disp.height() - 5 {
            for x in 45..disp.width() - 5 {
                checked += 1;
                if let Some(d) = disp.get(x, y) {
                    if (d - 40.0).abs() <= 1.0 {
                        close += 1;
                    }
                }
            }
        }
        assert!(checked > 1500);
        assert!(
            close as f64 >= 0.99 * checked as f64,
            "only {close}/{checked} pixels within 1 px of the true disparity"
        );
    }

    #[test]
    fn wls_stage_fills_holes_and_is_recorded() {
        let scene = plane_scene(4, 0.0);
        let cfg = PipelineConfig { wls: Some(WlsSpec::default()), ..base_config() };
        let out = run_disparity(&scene.left, &scene.right, &cfg).unwrap();
        let smoothed = out.stages.smoothed.as_ref().expect("stage ran");
        assert_eq!(smoothed.valid_count(), smoothed.width() * smoothed.height());
        assert!(out.disparity.field().same_values(smoothed.field()));
        // The classic map keeps its holes where matching failed.
        assert!(out.stages.classic.valid_count() <= smoothed.valid_count());
    }

    #[test]
    fn left_right_check_shrinks_but_keeps_the_plane() {
        let scene = plane_scene(5, 0.0);
        let open = run_disparity(&scene.left, &scene.right, &base_config()).unwrap();
        let cfg = PipelineConfig { lr_max_diff: Some(1.0), ..base_config() };
        let checked = run_disparity(&scene.left, &scene.right, &cfg).unwrap();
        assert!(checked.disparity.valid_count() <= open.disparity.valid_count());
        let mut close = 0usize;
        let mut total = 0usize;
        for y in 5..59 {
            for x in 45..91 {
                if let Some(d) = checked.disparity.get(x, y) {
                    total += 1;
                    if (d - 40.0).abs() <= 1.0 {
                        close += 1;
                    }
                }
            }
        }
        assert!(total > 1000, "check removed almost everything");
        assert!(close as f64 >= 0.99 * total as f64);
    }

    #[test]
    fn zero_smoothness_sgm_equals_the_fixed_window_path() {
        let scene = plane_scene(6, 0.01);
        let sgm_cfg = PipelineConfig {
            agg: AggMode::Sgm(SgmSpec { lambda: 0.0, ..SgmSpec::default() }),
            subpixel: false,
            median: None,
            ..base_config()
        };
        let wta_cfg = PipelineConfig { agg: AggMode::Fixed, ..sgm_cfg.clone() };
        let a = run_disparity(&scene.left, &scene.right, &sgm_cfg).unwrap();
        let b = run_disparity(&scene.left, &scene.right, &wta_cfg).unwrap();
        assert!(a.disparity.field().same_values(b.disparity.field()));
    }

    #[test]
    fn runs_are_deterministic() {
        let scene = plane_scene(7, 0.02);
        let cfg = PipelineConfig {
            lr_max_diff: Some(1.0),
            wls: Some(WlsSpec::default()),
            ..base_config()
        };
        let a = run_disparity(&scene.left, &scene.right, &cfg).unwrap();
        let b = run_disparity(&scene.left, &scene.right, &cfg).unwrap();
        assert!(a.disparity.field().same_values(b.disparity.field()));
        assert!(a.stages.classic.field().same_values(b.stages.classic.field()));
    }

    #[test]
    fn mismatched_pair_sizes_are_rejected() {
        let scene = plane_scene(8, 0.0);
        let small = GrayImage::<f64>::from_fn(10, 10, |_, _| 0.5).unwrap();
        assert!(matches!(
            run_disparity(&scene.left, &small, &base_config()),
            Err(Error::SizeMismatch(..))
        ));
    }

    #[test]
    fn box_preprocessing_stays_in_range_and_is_dumped() {
        let scene = plane_scene(9, 0.05);
        let cfg = PipelineConfig { preprocess: Preprocess::Box3, ..base_config() };
        let out = run_disparity(&scene.left, &scene.right, &cfg).unwrap();
        assert!(out.stages.pre_left.data().iter().all(|v| (0.0..=1.0).contains(v)));
        // Smoothing must actually change the noisy image.
        assert!(out
            .stages
            .pre_left
            .data()
            .iter()
            .zip(scene.left.data())
            .any(|(a, b)| a != b));
    }
}
