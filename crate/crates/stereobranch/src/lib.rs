//! Binocular stereo disparity estimation and robust distance measurement for
//! thin structures.
//!
//! The crate implements a classic rectified-stereo pipeline end to end:
//!
//! * [`geometry`] — pinhole projection, triangulation and the depth/disparity
//!   conversions for a rectified two-camera rig.
//! * [`cost`] — per-pixel matching costs (absolute difference, squared
//!   difference, normalized cross-correlation) assembled into a dense cost
//!   volume.
//! * [`aggregate`] — window aggregation schemes, winner-take-all selection and
//!   a semi-global scanline optimizer.
//! * [`postproc`] — left/right consistency checking, parabolic subpixel
//!   refinement, median filtering and an edge-aware weighted-least-squares
//!   smoother.
//! * [`fusion`] — turns an annotated branch polygon plus a depth map into a
//!   single robust distance: centroid sampling, neighbourhood expansion and
//!   MAD outlier rejection.
//! * [`synth`] — deterministic synthetic stereo scenes with exact ground
//!   truth, used by the test-suite and the `synth` CLI command.
//! * [`eval`] — RMSE, bad-pixel rates and depth histograms.
//! * [`io`] — portable pixmap images, float-map files, annotation documents
//!   and rig calibration files.
//! * [`pipeline`] — staged composition of the above, mirroring the CLI.
//!
//! All numeric kernels are generic over the scalar type through the
//! [`scalar::Real`] trait; `f64` is the default everywhere and `f32` aliases
//! are exported at the crate root for memory-constrained runs.
//!
//! # Quick start
//!
//! ```
//! use stereobranch::geometry::{RigParams, ScenePoint};
//!
//! let rig = RigParams { fx: 700.0, fy: 700.0, ox: 320.0, oy: 240.0, baseline_m: 0.1 }
//!     .to_rig::<f64>()
//!     .unwrap();
//! let p = ScenePoint { x: 0.2, y: -0.1, z: 1.5 };
//! let pix = stereobranch::geometry::project(&rig, &p).unwrap();
//! let back = stereobranch::geometry::triangulate(&rig, &pix).unwrap();
//! assert!((back.z - p.z).abs() < 1e-12);
//! ```

pub mod aggregate;
pub mod cost;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod pipeline;
pub mod postproc;
pub mod scalar;
pub mod synth;

pub use aggregate::{AggregationSpec, DisparityMap, SgmSpec};
pub use cost::{CostKind, CostVolume, GrayImage, WindowSpec};
pub use error::{Error, Result};
pub use fusion::{BranchPolygon, DepthReadMode, DistanceEstimate};
pub use geometry::{CameraIntrinsics, DepthMap, PixelPair, RigParams, ScenePoint, StereoRig};
pub use grid::FloatField;
pub use pipeline::{run_disparity, AggMode, DisparityResult, FusionVariant, PipelineConfig, Preprocess};
pub use scalar::Real;

/// Single-precision aliases for memory-constrained pipelines. The default
/// type parameter on every core type is `f64`.
pub type GrayImageF32 = cost::GrayImage<f32>;
pub type CostVolumeF32 = cost::CostVolume<f32>;
pub type DisparityMapF32 = aggregate::DisparityMap<f32>;
pub type DepthMapF32 = geometry::DepthMap<f32>;
pub type FloatFieldF32 = grid::FloatField<f32>;
pub type StereoRigF32 = geometry::StereoRig<f32>;
