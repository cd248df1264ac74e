//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // geometry
    #[error("depth must be positive and finite, got {0}")]
    NonPositiveDepth(f64),
    #[error("zero disparity corresponds to a point at infinity")]
    PointAtInfinity,
    #[error("negative disparity {0} places the point behind the cameras")]
    NegativeDisparity(f64),
    #[error("invalid rig parameters: {0}")]
    BadRig(String),

    // cost / aggregation
    #[error("image sizes differ: {0}x{1} vs {2}x{3}")]
    SizeMismatch(usize, usize, usize, usize),
    #[error("empty disparity range: d_min {d_min} > d_max {d_max}")]
    EmptyDisparityRange { d_min: u32, d_max: u32 },
    #[error("window dimensions must be odd and >= 1, got {0}x{1}")]
    BadWindow(usize, usize),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("accumulated costs would overflow the scalar type (bound {bound:.3e})")]
    CostOverflow { bound: f64 },

    // solvers
    #[error("solver did not converge: relative residual {residual:.3e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },

    // fusion
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("no valid depth under any sample")]
    NoValidDepth,
    #[error("empty sample set")]
    EmptySamples,
    #[error("input map has no valid pixels")]
    NoValidPixels,
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),
    #[error("polygon is self-intersecting")]
    SelfIntersectingPolygon,

    // synth
    #[error("invalid scene: {0}")]
    BadScene(String),
    #[error("corruption fraction {0} outside [0, 0.5)")]
    BadFraction(f64),

    // eval
    #[error("no jointly valid pixels to compare")]
    NoOverlap,
    #[error("invalid histogram configuration: {0}")]
    BadHistogram(String),

    // io
    #[error("{path}: parse error at byte {offset}: {msg}")]
    Parse { path: String, offset: usize, msg: String },
    #[error("{path}: {msg}")]
    Malformed { path: String, msg: String },
    #[error("{path}: annotation entry {index}: {msg}")]
    BadAnnotation { path: String, index: usize, msg: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl Error {
    /// True for failures of the numeric machinery rather than of the inputs.
    /// The CLI maps these to a distinct exit code.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NoConvergence { .. } | Error::CostOverflow { .. })
    }
}
