//! Command-line front end: disparity computation, branch distance
//! estimation, synthetic scene generation, and map evaluation.
//!
//! Every run resolves its full configuration, prints it to stderr, and
//! writes it to `config.log` in the output directory, so any output can be
//! reproduced from the log alone. Exit codes: 0 success, 1 input error,
//! 2 numerical error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use stereobranch::aggregate::SgmSpec;
use stereobranch::cost::{CostKind, GrayImage, WindowSpec};
use stereobranch::error::{Error, Result};
use stereobranch::eval::{bad_pixel_rate, depth_histogram, rmse, DepthHistogram};
use stereobranch::fusion::{estimate_distance_centroid, estimate_distance_polygon, DistanceEstimate};
use stereobranch::geometry::{depth_map_from_disparity, DepthMap, StereoRig};
use stereobranch::io::{
    read_annotations, read_float_map, read_image, read_rig, read_scene_spec, write_annotations,
    write_float_map, write_image, write_rig, AnnotationDoc, BitDepth, BranchAnnotation,
};
use stereobranch::pipeline::{
    run_disparity, sgm_defaults_for_window, AggMode, PipelineConfig, Preprocess,
};
use stereobranch::synth::render;
use stereobranch::{DepthReadMode, FloatField};

#[derive(Parser)]
#[command(
    name = "stereobranch",
    version,
    about = "Stereo disparity maps and branch-to-camera distances"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute a disparity map from a rectified stereo pair
    Disparity(DisparityArgs),
    /// Estimate branch distances from annotated outlines and a depth source
    Distance(DistanceArgs),
    /// Render a synthetic stereo scene with exact ground truth
    Synth(SynthArgs),
    /// Compare predicted float maps against references
    Eval(EvalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum CostArg {
    Ad,
    Sd,
    Ncc,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggArg {
    Fixed,
    Multi,
    Diffusion,
    Sgm,
}

#[derive(Clone, Copy, ValueEnum)]
enum PreArg {
    None,
    Box3,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

impl OnOff {
    fn on(self) -> bool {
        matches!(self, OnOff::On)
    }
    fn name(self) -> &'static str {
        match self {
            OnOff::On => "on",
            OnOff::Off => "off",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Centroid,
    Polygon,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReadArg {
    Nearest,
    Bilinear,
}

#[derive(Clone)]
struct OffsetList(Vec<(i64, i64)>);

#[derive(Clone)]
struct WeightList(Vec<f64>);

#[derive(Clone, Copy)]
struct MedianArg(Option<WindowSpec>);

fn parse_window(s: &str) -> std::result::Result<WindowSpec, String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let w: usize = w.trim().parse().map_err(|_| format!("bad window width {w:?}"))?;
    let h: usize = h.trim().parse().map_err(|_| format!("bad window height {h:?}"))?;
    WindowSpec::new(w, h).map_err(|e| e.to_string())
}

fn parse_median(s: &str) -> std::result::Result<MedianArg, String> {
    if s.eq_ignore_ascii_case("off") {
        return Ok(MedianArg(None));
    }
    parse_window(s).map(|w| MedianArg(Some(w)))
}

fn parse_offsets(s: &str) -> std::result::Result<OffsetList, String> {
    let mut out = Vec::new();
    for part in s.split(';') {
        let (dx, dy) = part
            .split_once(',')
            .ok_or_else(|| format!("expected dx,dy pairs separated by ';', got {part:?}"))?;
        let dx: i64 = dx.trim().parse().map_err(|_| format!("bad offset {dx:?}"))?;
        let dy: i64 = dy.trim().parse().map_err(|_| format!("bad offset {dy:?}"))?;
        out.push((dx, dy));
    }
    Ok(OffsetList(out))
}

fn parse_weights(s: &str) -> std::result::Result<WeightList, String> {
    let mut out = Vec::new();
    for part in s.split(';') {
        let w: f64 = part.trim().parse().map_err(|_| format!("bad weight {part:?}"))?;
        out.push(w);
    }
    Ok(WeightList(out))
}

fn parse_k(s: &str) -> std::result::Result<f64, String> {
    if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
        return Ok(f64::INFINITY);
    }
    s.parse().map_err(|_| format!("bad k {s:?} (number or \"inf\")"))
}

/// Disparity-pipeline flags shared by `disparity` and `distance`.
#[derive(Args, Clone)]
struct PipelineFlags {
    /// Matching cost
    #[arg(long, value_enum, default_value_t = CostArg::Ad)]
    cost: CostArg,
    /// Matching window, WxH with odd sides
    #[arg(long, value_parser = parse_window, default_value = "5x5")]
    window: WindowSpec,
    /// Aggregation strategy
    #[arg(long, value_enum, default_value_t = AggArg::Sgm)]
    agg: AggArg,
    /// Window offsets for --agg multi: "dx,dy;dx,dy;..."
    #[arg(long, value_parser = parse_offsets, default_value = "0,0")]
    offsets: OffsetList,
    /// Per-iteration weights for --agg diffusion: "w;w;..."
    #[arg(long, value_parser = parse_weights, default_value = "1;1;1")]
    diffusion_weights: WeightList,
    /// Smoothness weight for --agg sgm
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// One-level step penalty; defaults to 8*window-area/255
    #[arg(long)]
    p1: Option<f64>,
    /// Larger-step penalty; defaults to 32*window-area/255
    #[arg(long)]
    p2: Option<f64>,
    /// Scanline direction count, 4 or 8
    #[arg(long, default_value_t = 8)]
    dirs: u8,
    /// Smallest disparity searched
    #[arg(long, default_value_t = 0)]
    d_min: u32,
    /// Largest disparity searched
    #[arg(long, default_value_t = 64)]
    d_max: u32,
    /// Image smoothing before matching
    #[arg(long, value_enum, default_value_t = PreArg::None)]
    preprocess: PreArg,
    /// Left-right consistency tolerance in pixels; omit to skip the check
    #[arg(long)]
    lr_maxdiff: Option<f64>,
    /// Parabolic subpixel refinement
    #[arg(long, value_enum, default_value_t = OnOff::On)]
    subpixel: OnOff,
    /// Median window, WxH, or "off"
    #[arg(long, value_parser = parse_median, default_value = "3x3")]
    median: MedianArg,
    /// Weighted-least-squares smoothing
    #[arg(long, value_enum, default_value_t = OnOff::On)]
    wls: OnOff,
    /// WLS smoothness weight
    #[arg(long, default_value_t = 0.5)]
    wls_lambda: f64,
    /// WLS guide-contrast scale
    #[arg(long, default_value_t = 0.05)]
    wls_sigma: f64,
}

impl PipelineFlags {
    fn resolved_sgm(&self) -> SgmSpec {
        let defaults = sgm_defaults_for_window(self.window);
        SgmSpec {
            p1: self.p1.unwrap_or(defaults.p1),
            p2: self.p2.unwrap_or(defaults.p2),
            lambda: self.lambda,
            directions: self.dirs,
        }
    }

    fn to_config(&self) -> PipelineConfig {
        let agg = match self.agg {
            AggArg::Fixed => AggMode::Fixed,
            AggArg::Multi => AggMode::Multi { offsets: self.offsets.0.clone() },
            AggArg::Diffusion => AggMode::Diffusion {
                iterations: self.diffusion_weights.0.len(),
                weights: self.diffusion_weights.0.clone(),
            },
            AggArg::Sgm => AggMode::Sgm(self.resolved_sgm()),
        };
        let mut wls = None;
        if self.wls.on() {
            wls = Some(stereobranch::postproc::WlsSpec {
                lambda: self.wls_lambda,
                sigma: self.wls_sigma,
                ..Default::default()
            });
        }
        PipelineConfig {
            cost: match self.cost {
                CostArg::Ad => CostKind::Ad,
                CostArg::Sd => CostKind::Sd,
                CostArg::Ncc => CostKind::Ncc,
            },
            window: self.window,
            d_min: self.d_min,
            d_max: self.d_max,
            preprocess: match self.preprocess {
                PreArg::None => Preprocess::None,
                PreArg::Box3 => Preprocess::Box3,
            },
            agg,
            lr_max_diff: self.lr_maxdiff,
            subpixel: self.subpixel.on(),
            median: self.median.0,
            wls,
            ..PipelineConfig::default()
        }
    }

    fn log_into(&self, log: &mut ConfigLog) {
        let cost = match self.cost {
            CostArg::Ad => "ad",
            CostArg::Sd => "sd",
            CostArg::Ncc => "ncc",
        };
        log.put("cost", cost);
        log.put("window", format!("{}x{}", self.window.width(), self.window.height()));
        let agg = match self.agg {
            AggArg::Fixed => "fixed",
            AggArg::Multi => "multi",
            AggArg::Diffusion => "diffusion",
            AggArg::Sgm => "sgm",
        };
        log.put("agg", agg);
        match self.agg {
            AggArg::Multi => {
                let s: Vec<String> = self.offsets.0.iter().map(|(x, y)| format!("{x},{y}")).collect();
                log.put("offsets", s.join(";"));
            }
            AggArg::Diffusion => {
                let s: Vec<String> = self.diffusion_weights.0.iter().map(|w| w.to_string()).collect();
                log.put("diffusion_weights", s.join(";"));
            }
            AggArg::Sgm => {
                let sgm = self.resolved_sgm();
                log.put("lambda", sgm.lambda);
                log.put("p1", sgm.p1);
                log.put("p2", sgm.p2);
                log.put("dirs", sgm.directions);
            }
            AggArg::Fixed => {}
        }
        log.put("d_min", self.d_min);
        log.put("d_max", self.d_max);
        log.put(
            "preprocess",
            match self.preprocess {
                PreArg::None => "none",
                PreArg::Box3 => "box3",
            },
        );
        match self.lr_maxdiff {
            Some(v) => log.put("lr_maxdiff", v),
            None => log.put("lr_maxdiff", "off"),
        }
        log.put("subpixel", self.subpixel.name());
        match self.median.0 {
            Some(w) => log.put("median", format!("{}x{}", w.width(), w.height())),
            None => log.put("median", "off"),
        }
        log.put("wls", self.wls.name());
        if self.wls.on() {
            log.put("wls_lambda", self.wls_lambda);
            log.put("wls_sigma", self.wls_sigma);
        }
    }
}

/// Fusion flags shared by branch-distance estimation.
#[derive(Args, Clone)]
struct FusionFlags {
    /// Retention band half-width in MAD units; accepts "inf"
    #[arg(long, value_parser = parse_k, default_value = "3")]
    k: f64,
    /// Neighbourhood cells added around each centroid
    #[arg(long, default_value_t = 8)]
    m: usize,
    /// Sampling strategy inside the outline
    #[arg(long, value_enum, default_value_t = VariantArg::Centroid)]
    variant: VariantArg,
    /// Depth interpolation at sample points
    #[arg(long, value_enum, default_value_t = ReadArg::Nearest)]
    read: ReadArg,
}

impl FusionFlags {
    fn read_mode(&self) -> DepthReadMode {
        match self.read {
            ReadArg::Nearest => DepthReadMode::Nearest,
            ReadArg::Bilinear => DepthReadMode::Bilinear,
        }
    }

    fn log_into(&self, log: &mut ConfigLog) {
        log.put("k", self.k);
        log.put("m", self.m);
        log.put(
            "variant",
            match self.variant {
                VariantArg::Centroid => "centroid",
                VariantArg::Polygon => "polygon",
            },
        );
        log.put(
            "read",
            match self.read {
                ReadArg::Nearest => "nearest",
                ReadArg::Bilinear => "bilinear",
            },
        );
    }
}

#[derive(Args)]
struct DisparityArgs {
    /// Left image (PGM/PPM)
    #[arg(long)]
    left: PathBuf,
    /// Right image (PGM/PPM)
    #[arg(long)]
    right: PathBuf,
    /// Rig calibration file; when given, a metric depth map is written too
    #[arg(long)]
    rig: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Write the intermediate maps (stage_c/d/e/f)
    #[arg(long)]
    dump_stages: bool,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

#[derive(Args)]
struct DistanceArgs {
    /// Precomputed metric depth map (float map); replaces --left/--right/--rig
    #[arg(long)]
    depth: Option<PathBuf>,
    /// Left image, for the pipeline path
    #[arg(long)]
    left: Option<PathBuf>,
    /// Right image, for the pipeline path
    #[arg(long)]
    right: Option<PathBuf>,
    /// Rig calibration file, for the pipeline path
    #[arg(long)]
    rig: Option<PathBuf>,
    /// Branch outlines (JSON)
    #[arg(long)]
    annotations: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    pipeline: PipelineFlags,
    #[command(flatten)]
    fusion: FusionFlags,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene description (TOML)
    #[arg(long)]
    spec: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Override the seed in the scene description
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted float maps, one per scene (repeatable)
    #[arg(long, required = true, num_args = 1)]
    pred: Vec<PathBuf>,
    /// Reference float maps, aligned with --pred (repeatable)
    #[arg(long, required = true, num_args = 1)]
    truth: Vec<PathBuf>,
    /// Bad-pixel threshold in map units
    #[arg(long, default_value_t = 1.0)]
    threshold: f64,
    /// Histogram bin count
    #[arg(long, default_value_t = 16)]
    hist_bins: usize,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

/// Ordered key/value lines mirrored to stderr and `config.log`.
struct ConfigLog {
    lines: Vec<String>,
}

impl ConfigLog {
    fn new(command: &str) -> Self {
        let mut log = ConfigLog { lines: Vec::new() };
        log.put("command", command);
        log
    }

    fn put(&mut self, key: &str, value: impl std::fmt::Display) {
        self.lines.push(format!("{key} = {value}"));
    }

    fn put_path(&mut self, key: &str, value: &Path) {
        self.put(key, value.display());
    }

    fn write(&self, out_dir: &Path) -> Result<()> {
        let mut text = String::new();
        for line in &self.lines {
            eprintln!("{line}");
            let _ = writeln!(text, "{line}");
        }
        write_text(&out_dir.join("config.log"), &text)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io { path: path.display().to_string(), source: e })
}

fn ensure_out_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io { path: path.display().to_string(), source: e })
}

fn load_rig(path: &Path) -> Result<StereoRig<f64>> {
    read_rig(path)?.to_rig()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn cmd_disparity(args: &DisparityArgs) -> Result<()> {
    ensure_out_dir(&args.out)?;
    let mut log = ConfigLog::new("disparity");
    log.put_path("left", &args.left);
    log.put_path("right", &args.right);
    if let Some(rig) = &args.rig {
        log.put_path("rig", rig);
    }
    log.put_path("out", &args.out);
    args.pipeline.log_into(&mut log);
    log.put("dump_stages", args.dump_stages);
    log.write(&args.out)?;

    let left: GrayImage<f64> = read_image(&args.left)?;
    let right: GrayImage<f64> = read_image(&args.right)?;
    let cfg = args.pipeline.to_config();
    let result = run_disparity(&left, &right, &cfg)?;

    write_float_map(args.out.join("disparity.pfm"), result.disparity.field())?;
    if let Some(rig_path) = &args.rig {
        let rig = load_rig(rig_path)?;
        let depth = depth_map_from_disparity(&rig, &result.disparity);
        write_float_map(args.out.join("depth.pfm"), depth.field())?;
    }
    if args.dump_stages {
        write_image(args.out.join("stage_c.pgm"), &result.stages.pre_left, BitDepth::Sixteen)?;
        write_image(args.out.join("stage_d.pgm"), &result.stages.pre_right, BitDepth::Sixteen)?;
        write_float_map(args.out.join("stage_e.pfm"), result.stages.classic.field())?;
        if let Some(smoothed) = &result.stages.smoothed {
            write_float_map(args.out.join("stage_f.pfm"), smoothed.field())?;
        }
    }
    Ok(())
}

fn estimate_for(
    variant: VariantArg,
    poly: &stereobranch::BranchPolygon,
    depth: &DepthMap<f64>,
    fusion: &FusionFlags,
) -> Result<DistanceEstimate<f64>> {
    match variant {
        VariantArg::Centroid => {
            estimate_distance_centroid(poly, depth, fusion.k, fusion.m, fusion.read_mode())
        }
        VariantArg::Polygon => estimate_distance_polygon(poly, depth, fusion.k, fusion.read_mode()),
    }
}

fn cmd_distance(args: &DistanceArgs) -> Result<()> {
    ensure_out_dir(&args.out)?;
    let mut log = ConfigLog::new("distance");
    match (&args.depth, &args.left, &args.right, &args.rig) {
        (Some(depth), None, None, None) => log.put_path("depth", depth),
        (None, Some(l), Some(r), Some(rig)) => {
            log.put_path("left", l);
            log.put_path("right", r);
            log.put_path("rig", rig);
        }
        _ => {
            return Err(Error::BadParameter(
                "pass either --depth, or all of --left/--right/--rig".into(),
            ))
        }
    }
    log.put_path("annotations", &args.annotations);
    log.put_path("out", &args.out);
    if args.depth.is_none() {
        args.pipeline.log_into(&mut log);
    }
    args.fusion.log_into(&mut log);
    log.write(&args.out)?;

    let depth: DepthMap<f64> = if let Some(path) = &args.depth {
        DepthMap::from_field(read_float_map(path)?)
    } else {
        let left: GrayImage<f64> = read_image(args.left.as_ref().unwrap())?;
        let right: GrayImage<f64> = read_image(args.right.as_ref().unwrap())?;
        let rig = load_rig(args.rig.as_ref().unwrap())?;
        let cfg = args.pipeline.to_config();
        let result = run_disparity(&left, &right, &cfg)?;
        depth_map_from_disparity(&rig, &result.disparity)
    };

    let doc = read_annotations(&args.annotations)?;
    if doc.width != depth.width() || doc.height != depth.height() {
        return Err(Error::SizeMismatch(doc.width, doc.height, depth.width(), depth.height()));
    }

    let mut csv = String::from(
        "label,distance_m,median_m,mad_m,retained,rejected,pool_size,dropped_off_frame,invalid_depth,true_distance_m,error_m\n",
    );
    let mut txt = String::new();
    for (i, branch) in doc.branches.iter().enumerate() {
        let poly = branch.to_polygon()?;
        let est = estimate_for(args.fusion.variant, &poly, &depth, &args.fusion).map_err(|e| {
            eprintln!("branch {i} ({}): estimation failed", branch.label);
            e
        })?;
        let (truth_col, err_col, err_txt) = match branch.true_distance_m {
            Some(t) => {
                let err = est.distance_m - t;
                (t.to_string(), err.to_string(), format!(", true {t} m, error {err:+.4} m"))
            }
            None => (String::new(), String::new(), String::new()),
        };
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&branch.label),
            est.distance_m,
            est.median_m,
            est.mad_m,
            est.retained,
            est.rejected,
            est.pool_size,
            est.dropped_off_frame,
            est.invalid_depth,
            truth_col,
            err_col,
        );
        let _ = writeln!(
            txt,
            "{}: {:.4} m (median {:.4} m, MAD {:.4} m, kept {}/{} samples{})",
            branch.label,
            est.distance_m,
            est.median_m,
            est.mad_m,
            est.retained,
            est.retained + est.rejected,
            err_txt,
        );
    }
    write_text(&args.out.join("distances.csv"), &csv)?;
    write_text(&args.out.join("distances.txt"), &txt)?;
    print!("{txt}");
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    ensure_out_dir(&args.out)?;
    let mut spec = read_scene_spec(&args.spec)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let mut log = ConfigLog::new("synth");
    log.put_path("spec", &args.spec);
    log.put_path("out", &args.out);
    log.put("seed", spec.seed);
    log.put("width", spec.width);
    log.put("height", spec.height);
    log.put("noise_sigma", spec.noise_sigma);
    log.put("elements", spec.elements.len());
    log.write(&args.out)?;

    let scene = render::<f64>(&spec)?;
    write_image(args.out.join("left.pgm"), &scene.left, BitDepth::Sixteen)?;
    write_image(args.out.join("right.pgm"), &scene.right, BitDepth::Sixteen)?;
    write_float_map(args.out.join("true_disparity.pfm"), scene.truth.disparity.field())?;
    write_float_map(args.out.join("true_depth.pfm"), scene.truth.depth.field())?;
    write_rig(args.out.join("rig.txt"), &spec.rig)?;

    let resolved = toml::to_string(&spec)
        .map_err(|e| Error::Malformed { path: args.spec.display().to_string(), msg: e.to_string() })?;
    write_text(&args.out.join("scene.toml"), &resolved)?;

    let branches: Vec<BranchAnnotation> = scene
        .truth
        .polygons
        .iter()
        .zip(&scene.truth.true_distances_m)
        .enumerate()
        .map(|(i, (poly, dist))| BranchAnnotation {
            label: format!("bar-{i}"),
            true_distance_m: Some(*dist),
            points: poly.points().to_vec(),
        })
        .collect();
    let doc = AnnotationDoc {
        image: "left.pgm".into(),
        width: spec.width,
        height: spec.height,
        branches,
    };
    write_annotations(args.out.join("annotations.json"), &doc)?;
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn full_region(w: usize, h: usize) -> Vec<(usize, usize)> {
    let mut cells = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            cells.push((x, y));
        }
    }
    cells
}

/// Histogram over every valid cell of a map, ranged to its own value span.
fn map_histogram(field: &FloatField<f64>, bins: usize) -> Result<Option<DepthHistogram>> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, _, v) in field.iter_valid() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return Ok(None); // no valid cells
    }
    if lo == hi {
        // degenerate span; widen symmetrically so the single value lands
        // inside the top bin
        lo -= 0.5;
        hi += 0.5;
    }
    let wrapped = DepthMap::from_field(field.clone());
    let region = full_region(field.width(), field.height());
    depth_histogram(&wrapped, &region, bins, (lo, hi)).map(Some)
}

fn write_histogram(path: &Path, hist: &DepthHistogram) -> Result<()> {
    let mut text = String::from("lo,hi,count\n");
    for (i, count) in hist.counts.iter().enumerate() {
        let _ = writeln!(text, "{},{},{}", hist.edges[i], hist.edges[i + 1], count);
    }
    write_text(path, &text)
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    ensure_out_dir(&args.out)?;
    let mut log = ConfigLog::new("eval");
    for p in &args.pred {
        log.put_path("pred", p);
    }
    for t in &args.truth {
        log.put_path("truth", t);
    }
    log.put("threshold", args.threshold);
    log.put("hist_bins", args.hist_bins);
    log.put_path("out", &args.out);
    log.write(&args.out)?;

    if args.pred.len() != args.truth.len() {
        return Err(Error::BadParameter(format!(
            "{} predictions against {} references",
            args.pred.len(),
            args.truth.len()
        )));
    }

    let mut csv = String::from("pred,truth,status,rmse,bad_rate,pred_valid,truth_valid\n");
    let mut all_ok = true;
    for (p, t) in args.pred.iter().zip(&args.truth) {
        let pred: FloatField<f64> = read_float_map(p)?;
        let truth: FloatField<f64> = read_float_map(t)?;
        let (status, rmse_col, bad_col) = if pred.width() != truth.width() || pred.height() != truth.height()
        {
            ("size_mismatch".to_string(), String::new(), String::new())
        } else {
            match (rmse(&pred, &truth), bad_pixel_rate(&pred, &truth, args.threshold)) {
                (Ok(r), Ok(b)) => ("ok".to_string(), r.to_string(), b.to_string()),
                _ => ("no_overlap".to_string(), String::new(), String::new()),
            }
        };
        if status != "ok" {
            all_ok = false;
        }
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            csv_field(&stem(p)),
            csv_field(&stem(t)),
            status,
            rmse_col,
            bad_col,
            pred.valid_count(),
            truth.valid_count(),
        );
        if let Some(hist) = map_histogram(&pred, args.hist_bins)? {
            write_histogram(&args.out.join(format!("hist_{}_pred.csv", stem(p))), &hist)?;
        }
        if let Some(hist) = map_histogram(&truth, args.hist_bins)? {
            write_histogram(&args.out.join(format!("hist_{}_ref.csv", stem(t))), &hist)?;
        }
    }
    write_text(&args.out.join("report.csv"), &csv)?;
    print!("{csv}");
    if !all_ok {
        return Err(Error::BadParameter("one or more rows did not evaluate cleanly".into()));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Disparity(args) => cmd_disparity(args),
        Cmd::Distance(args) => cmd_distance(args),
        Cmd::Synth(args) => cmd_synth(args),
        Cmd::Eval(args) => cmd_eval(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
