//! File formats: PGM/PPM images, raw float maps, branch annotations, rig
//! parameters, and scene descriptions.
//!
//! Image samples are normalized to `[0, 1]` on read (`k / maxval`). Float
//! maps use a PFM-style layout: a magic line (`Pf` for 32-bit, `Pd` for
//! 64-bit), a `width height` line, a scale line whose sign encodes byte
//! order (negative = little-endian), then rows bottom-up. Files written
//! here use a scale of -1.0 and skip the scale multiplication on read, so a
//! write/read cycle is bit-exact, NaN holes included.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cost::GrayImage;
use crate::error::{Error, Result};
use crate::fusion::BranchPolygon;
use crate::geometry::RigParams;
use crate::grid::FloatField;
use crate::scalar::{FloatWidth, Real};
use crate::synth::SceneSpec;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

fn malformed(path: &Path, msg: impl Into<String>) -> Error {
    Error::Malformed { path: path.display().to_string(), msg: msg.into() }
}

/// Whitespace/comment-aware tokenizer over PNM-style headers.
struct Scanner<'a> {
    data: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Scanner<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse { path: self.path.display().to_string(), offset: self.pos, msg: msg.into() }
    }

    fn skip_separators(&mut self) {
        loop {
            while self.pos < self.data.len() && self.data[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.data.len() && self.data[self.pos] == b'#' {
                while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                return;
            }
        }
    }

    fn token(&mut self) -> Result<&'a str> {
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.data.len() && !self.data[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("unexpected end of file"));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .map_err(|_| Error::Parse {
                path: self.path.display().to_string(),
                offset: start,
                msg: "token is not ASCII".into(),
            })
    }

    fn number<N: FromStr>(&mut self, what: &str) -> Result<N> {
        let start_of_token = {
            self.skip_separators();
            self.pos
        };
        let tok = self.token()?;
        tok.parse().map_err(|_| Error::Parse {
            path: self.path.display().to_string(),
            offset: start_of_token,
            msg: format!("expected {what}, got {tok:?}"),
        })
    }

    /// Binary rasters start after exactly one whitespace byte.
    fn expect_single_whitespace(&mut self) -> Result<()> {
        if self.pos < self.data.len() && self.data[self.pos].is_ascii_whitespace() {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err("expected a single whitespace byte before the raster"))
        }
    }

    fn rest(&self) -> &'a [u8] {
        &self.data[self.pos.min(self.data.len())..]
    }
}

/// Read a PGM or PPM image (P2/P3 ASCII, P5/P6 binary, maxval up to 65535)
/// and normalize to `[0, 1]` grey. Colour images collapse through the
/// usual luma weights 0.299, 0.587, 0.114.
pub fn read_image<T: Real>(path: impl AsRef<Path>) -> Result<GrayImage<T>> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| io_err(path, e))?;
    let mut sc = Scanner { data: &data, pos: 0, path };
    let magic = sc.token()?;
    let (ascii, channels) = match magic {
        "P2" => (true, 1usize),
        "P3" => (true, 3),
        "P5" => (false, 1),
        "P6" => (false, 3),
        other => return Err(sc.err(format!("unsupported magic {other:?}"))),
    };
    let w: usize = sc.number("width")?;
    let h: usize = sc.number("height")?;
    if w == 0 || h == 0 {
        return Err(sc.err(format!("degenerate dimensions {w}x{h}")));
    }
    let maxval: u64 = sc.number("maxval")?;
    if !(1..=65535).contains(&maxval) {
        return Err(sc.err(format!("maxval {maxval} outside 1..=65535")));
    }
    let count = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| sc.err("image size overflows"))?;

    let mut samples: Vec<u64> = Vec::with_capacity(count);
    if ascii {
        for _ in 0..count {
            let at = {
                sc.skip_separators();
                sc.pos
            };
            let v: u64 = sc.number("sample")?;
            if v > maxval {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    offset: at,
                    msg: format!("sample {v} exceeds maxval {maxval}"),
                });
            }
            samples.push(v);
        }
    } else {
        sc.expect_single_whitespace()?;
        let bps = if maxval > 255 { 2 } else { 1 };
        let raster = sc.rest();
        if raster.len() < count * bps {
            return Err(sc.err(format!(
                "raster truncated: need {} bytes, have {}",
                count * bps,
                raster.len()
            )));
        }
        for i in 0..count {
            let v = if bps == 1 {
                raster[i] as u64
            } else {
                u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as u64
            };
            if v > maxval {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    offset: sc.pos + i * bps,
                    msg: format!("sample {v} exceeds maxval {maxval}"),
                });
            }
            samples.push(v);
        }
    }

    let inv = maxval as f64;
    let values: Vec<T> = if channels == 1 {
        samples.iter().map(|&k| T::of(k as f64 / inv)).collect()
    } else {
        samples
            .chunks_exact(3)
            .map(|rgb| {
                let lum = 0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64;
                T::of((lum / inv).clamp(0.0, 1.0))
            })
            .collect()
    };
    GrayImage::from_vec(w, h, values)
}

/// Quantization depth for [`write_image`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

/// Write a binary PGM (P5). Values are quantized to `round(v * maxval)`;
/// 16-bit samples are big-endian per the format.
pub fn write_image<T: Real>(path: impl AsRef<Path>, img: &GrayImage<T>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let maxval: u32 = match depth {
        BitDepth::Eight => 255,
        BitDepth::Sixteen => 65535,
    };
    let mut out = format!("P5\n{} {}\n{}\n", img.width(), img.height(), maxval).into_bytes();
    for v in img.data() {
        let k = (v.widen() * maxval as f64).round().clamp(0.0, maxval as f64) as u32;
        match depth {
            BitDepth::Eight => out.push(k as u8),
            BitDepth::Sixteen => out.extend_from_slice(&(k as u16).to_be_bytes()),
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

fn float_magic(width: FloatWidth) -> &'static str {
    match width {
        FloatWidth::Four => "Pf",
        FloatWidth::Eight => "Pd",
    }
}

/// Write a float map; see the module docs for the layout. Invalid cells
/// are stored as canonical NaN.
pub fn write_float_map<T: Real>(path: impl AsRef<Path>, field: &FloatField<T>) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = (field.width(), field.height());
    let mut out = format!("{}\n{} {}\n-1.0\n", float_magic(T::width()), w, h).into_bytes();
    for y in (0..h).rev() {
        for x in 0..w {
            let v = field.raw(x, y);
            match T::width() {
                FloatWidth::Four => {
                    let f = if v.is_finite() { v.widen() as f32 } else { f32::NAN };
                    out.extend_from_slice(&f.to_le_bytes());
                }
                FloatWidth::Eight => {
                    let f = if v.is_finite() { v.widen() } else { f64::NAN };
                    out.extend_from_slice(&f.to_le_bytes());
                }
            }
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Read a float map written by [`write_float_map`] or by anything else
/// honouring the layout; both byte orders are accepted. The magic must
/// match the requested precision (`Pf` for f32, `Pd` for f64). The scale
/// factor is applied unless its magnitude is exactly 1, which keeps reads
/// of our own files bit-exact.
pub fn read_float_map<T: Real>(path: impl AsRef<Path>) -> Result<FloatField<T>> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| io_err(path, e))?;
    let mut sc = Scanner { data: &data, pos: 0, path };
    let magic = sc.token()?;
    let expect = float_magic(T::width());
    if magic != expect {
        return Err(sc.err(format!(
            "magic {magic:?} does not match the requested precision (want {expect:?})"
        )));
    }
    let w: usize = sc.number("width")?;
    let h: usize = sc.number("height")?;
    if w == 0 || h == 0 {
        return Err(sc.err(format!("degenerate dimensions {w}x{h}")));
    }
    let scale: f64 = sc.number("scale")?;
    if !(scale.is_finite() && scale != 0.0) {
        return Err(sc.err(format!("scale {scale} must be finite and nonzero")));
    }
    let little = scale < 0.0;
    let factor = scale.abs();
    sc.expect_single_whitespace()?;
    let bps = T::width().bytes();
    let raster = sc.rest();
    let count = w.checked_mul(h).ok_or_else(|| sc.err("map size overflows"))?;
    if raster.len() < count * bps {
        return Err(sc.err(format!(
            "raster truncated: need {} bytes, have {}",
            count * bps,
            raster.len()
        )));
    }
    let mut values = vec![T::zero(); count];
    let mut off = 0usize;
    for y in (0..h).rev() {
        for x in 0..w {
            let raw: f64 = match T::width() {
                FloatWidth::Four => {
                    let b = [raster[off], raster[off + 1], raster[off + 2], raster[off + 3]];
                    let bits = if little { u32::from_le_bytes(b) } else { u32::from_be_bytes(b) };
                    f32::from_bits(bits) as f64
                }
                FloatWidth::Eight => {
                    let mut b = [0u8; 8];
                    b.copy_from_slice(&raster[off..off + 8]);
                    let bits = if little { u64::from_le_bytes(b) } else { u64::from_be_bytes(b) };
                    f64::from_bits(bits)
                }
            };
            off += bps;
            let v = if factor == 1.0 { raw } else { raw * factor };
            values[y * w + x] = T::of(v);
        }
    }
    Ok(FloatField::from_vec(w, h, values))
}

/// A labelled branch outline in an annotation document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchAnnotation {
    pub label: String,
    /// Tape-measured distance in metres, when available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_distance_m: Option<f64>,
    /// Outline vertices in image coordinates.
    pub points: Vec<[f64; 2]>,
}

impl BranchAnnotation {
    pub fn to_polygon(&self) -> Result<BranchPolygon> {
        BranchPolygon::new(self.points.clone())
    }
}

/// Branch annotations for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationDoc {
    /// Image file the annotations refer to.
    pub image: String,
    pub width: usize,
    pub height: usize,
    pub branches: Vec<BranchAnnotation>,
}

fn validate_annotations(path: &Path, doc: &AnnotationDoc) -> Result<()> {
    let bad = |index: usize, msg: String| Error::BadAnnotation {
        path: path.display().to_string(),
        index,
        msg,
    };
    if doc.width == 0 || doc.height == 0 {
        return Err(malformed(path, format!("degenerate frame {}x{}", doc.width, doc.height)));
    }
    for (i, b) in doc.branches.iter().enumerate() {
        if b.points.len() < 3 {
            return Err(bad(i, format!("outline has {} points, need at least 3", b.points.len())));
        }
        for p in &b.points {
            let ok = p[0].is_finite()
                && p[1].is_finite()
                && (0.0..=doc.width as f64).contains(&p[0])
                && (0.0..=doc.height as f64).contains(&p[1]);
            if !ok {
                return Err(bad(i, format!("point ({}, {}) outside the {}x{} frame", p[0], p[1], doc.width, doc.height)));
            }
        }
        if let Some(d) = b.true_distance_m {
            if !(d.is_finite() && d > 0.0) {
                return Err(bad(i, format!("true distance {d} must be positive")));
            }
        }
    }
    Ok(())
}

/// Read and validate a JSON annotation document.
pub fn read_annotations(path: impl AsRef<Path>) -> Result<AnnotationDoc> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let doc: AnnotationDoc = serde_json::from_str(&text).map_err(|e| malformed(path, e.to_string()))?;
    validate_annotations(path, &doc)?;
    Ok(doc)
}

/// Validate and write a JSON annotation document.
pub fn write_annotations(path: impl AsRef<Path>, doc: &AnnotationDoc) -> Result<()> {
    let path = path.as_ref();
    validate_annotations(path, doc)?;
    let text = serde_json::to_string_pretty(doc).map_err(|e| malformed(path, e.to_string()))?;
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Read rig parameters from a plain key/value file.
///
/// One `key value` or `key = value` pair per line, keys `fx`, `fy`, `ox`,
/// `oy`, `baseline_m`, each exactly once; `#` starts a comment.
pub fn read_rig(path: impl AsRef<Path>) -> Result<RigParams> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut fx = None;
    let mut fy = None;
    let mut ox = None;
    let mut oy = None;
    let mut baseline = None;
    for (lineno, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = match body.split_once('=') {
            Some((k, v)) => (k.trim(), v.trim()),
            None => body
                .split_once(char::is_whitespace)
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| malformed(path, format!("line {}: expected `key value`", lineno + 1)))?,
        };
        let num: f64 = value.parse().map_err(|_| {
            malformed(path, format!("line {}: bad number {value:?} for {key}", lineno + 1))
        })?;
        if !num.is_finite() {
            return Err(malformed(path, format!("line {}: {key} must be finite", lineno + 1)));
        }
        let slot = match key {
            "fx" => &mut fx,
            "fy" => &mut fy,
            "ox" => &mut ox,
            "oy" => &mut oy,
            "baseline_m" => &mut baseline,
            other => return Err(malformed(path, format!("line {}: unknown key {other:?}", lineno + 1))),
        };
        if slot.replace(num).is_some() {
            return Err(malformed(path, format!("line {}: duplicate key {key:?}", lineno + 1)));
        }
    }
    let need = |v: Option<f64>, name: &str| v.ok_or_else(|| malformed(path, format!("missing key {name:?}")));
    Ok(RigParams {
        fx: need(fx, "fx")?,
        fy: need(fy, "fy")?,
        ox: need(ox, "ox")?,
        oy: need(oy, "oy")?,
        baseline_m: need(baseline, "baseline_m")?,
    })
}

/// Write rig parameters in the format [`read_rig`] accepts.
pub fn write_rig(path: impl AsRef<Path>, rig: &RigParams) -> Result<()> {
    let path = path.as_ref();
    let text = format!(
        "fx {}\nfy {}\nox {}\noy {}\nbaseline_m {}\n",
        rig.fx, rig.fy, rig.ox, rig.oy, rig.baseline_m
    );
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Read a TOML scene description.
pub fn read_scene_spec(path: impl AsRef<Path>) -> Result<SceneSpec> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    toml::from_str(&text).map_err(|e| malformed(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn ascii_pgm_parses_with_comments() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        fs::write(&p, "P2 # comment\n# another\n3 2\n255\n0 128 255\n64 # inline\n32 16\n").unwrap();
        let img: GrayImage<f64> = read_image(&p).unwrap();
        assert_eq!(img.width(), 3);
        assert_eq!(img.height(), 2);
        let want: [f64; 6] = [0.0, 128.0 / 255.0, 1.0, 64.0 / 255.0, 32.0 / 255.0, 16.0 / 255.0];
        for (got, want) in img.data().iter().zip(want) {
            assert_eq!(got.to_bits(), want.to_bits());
        }
    }

    #[test]
    fn binary_pgm_eight_and_sixteen_bit() {
        let dir = tempdir().unwrap();
        let p8 = dir.path().join("b8.pgm");
        fs::write(&p8, [b"P5\n2 1\n255\n".as_slice(), &[10u8, 200]].concat()).unwrap();
        let img: GrayImage<f64> = read_image(&p8).unwrap();
        assert_eq!(img.get(0, 0), 10.0 / 255.0);
        assert_eq!(img.get(1, 0), 200.0 / 255.0);

        let p16 = dir.path().join("b16.pgm");
        let mut bytes = b"P5\n2 1\n65535\n".to_vec();
        bytes.extend_from_slice(&1000u16.to_be_bytes());
        bytes.extend_from_slice(&64000u16.to_be_bytes());
        fs::write(&p16, bytes).unwrap();
        let img: GrayImage<f64> = read_image(&p16).unwrap();
        assert_eq!(img.get(0, 0), 1000.0 / 65535.0);
        assert_eq!(img.get(1, 0), 64000.0 / 65535.0);
    }

    #[test]
    fn colour_images_collapse_through_luma_weights() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("c.ppm");
        fs::write(&p, "P3\n2 1\n255\n255 0 0  0 255 0\n").unwrap();
        let img: GrayImage<f64> = read_image(&p).unwrap();
        assert_eq!(img.get(0, 0).to_bits(), ((0.299f64 * 255.0) / 255.0).to_bits());
        assert_eq!(img.get(1, 0).to_bits(), ((0.587f64 * 255.0) / 255.0).to_bits());

        let p6 = dir.path().join("c.ppm6");
        fs::write(&p6, [b"P6\n1 1\n255\n".as_slice(), &[10u8, 20, 30]].concat()).unwrap();
        let img: GrayImage<f64> = read_image(&p6).unwrap();
        let want: f64 = (0.299 * 10.0 + 0.587 * 20.0 + 0.114 * 30.0) / 255.0;
        assert_eq!(img.get(0, 0).to_bits(), want.to_bits());
    }

    #[test]
    fn image_parse_errors_carry_byte_offsets() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("bad.pgm");

        fs::write(&p, "P2\n2 1\n100\n50 200\n").unwrap();
        match read_image::<f64>(&p) {
            Err(Error::Parse { offset, msg, .. }) => {
                assert_eq!(offset, 14, "offset of the offending sample");
                assert!(msg.contains("200"), "{msg}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }

        fs::write(&p, "P7\n2 1\n255\n").unwrap();
        assert!(matches!(read_image::<f64>(&p), Err(Error::Parse { .. })));
        fs::write(&p, "P2\n2 1\n0\n").unwrap();
        assert!(matches!(read_image::<f64>(&p), Err(Error::Parse { .. })));
        fs::write(&p, "P2\n2 1\n70000\n1 2\n").unwrap();
        assert!(matches!(read_image::<f64>(&p), Err(Error::Parse { .. })));
        fs::write(&p, [b"P5\n4 1\n255\n".as_slice(), &[1u8, 2]].concat()).unwrap();
        assert!(matches!(read_image::<f64>(&p), Err(Error::Parse { .. })));
        fs::write(&p, "P2\n2 1\n255\n7\n").unwrap();
        assert!(matches!(read_image::<f64>(&p), Err(Error::Parse { .. })));
        assert!(matches!(
            read_image::<f64>(dir.path().join("absent.pgm")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn image_write_read_round_trips_on_the_quantization_grid() {
        let dir = tempdir().unwrap();
        for (depth, maxval) in [(BitDepth::Eight, 255u32), (BitDepth::Sixteen, 65535)] {
            let img = GrayImage::<f64>::from_fn(5, 3, |x, y| {
                ((x * 7 + y * 11) % (maxval as usize + 1)) as f64 / maxval as f64
            })
            .unwrap();
            let p = dir.path().join(format!("rt{maxval}.pgm"));
            write_image(&p, &img, depth).unwrap();
            let back: GrayImage<f64> = read_image(&p).unwrap();
            for (a, b) in img.data().iter().zip(back.data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn float_map_round_trips_bit_exactly_with_nans() {
        let dir = tempdir().unwrap();
        let field = FloatField::<f64>::from_fn(3, 2, |x, y| {
            if (x, y) == (1, 0) {
                None
            } else {
                Some((x as f64 - 1.5) * 1e-3 + y as f64 * 7.25)
            }
        });
        let p = dir.path().join("m.pfm");
        write_float_map(&p, &field).unwrap();
        let back: FloatField<f64> = read_float_map(&p).unwrap();
        assert!(back.same_values(&field));

        let f32_field = FloatField::<f32>::from_fn(2, 2, |x, y| {
            if (x, y) == (0, 1) {
                None
            } else {
                Some(x as f32 * 0.1 + y as f32)
            }
        });
        let p32 = dir.path().join("m32.pfm");
        write_float_map(&p32, &f32_field).unwrap();
        let back32: FloatField<f32> = read_float_map(&p32).unwrap();
        assert!(back32.same_values(&f32_field));
    }

    #[test]
    fn float_map_reads_both_byte_orders() {
        let dir = tempdir().unwrap();
        // 2x2 map, values row-major: (0,0)=1.5, (1,0)=NaN, (0,1)=-0.25, (1,1)=6.0
        // stored bottom-up: row 1 first
        let (a, b, c, d) = (1.5f64, f64::NAN, -0.25f64, 6.0f64);

        let mut le = b"Pd\n2 2\n-1.0\n".to_vec();
        for v in [c, d, a, b] {
            le.extend_from_slice(&v.to_le_bytes());
        }
        let p_le = dir.path().join("le.pfm");
        fs::write(&p_le, le).unwrap();
        let m_le: FloatField<f64> = read_float_map(&p_le).unwrap();

        let mut be = b"Pd\n2 2\n1.0\n".to_vec();
        for v in [c, d, a, b] {
            be.extend_from_slice(&v.to_be_bytes());
        }
        let p_be = dir.path().join("be.pfm");
        fs::write(&p_be, be).unwrap();
        let m_be: FloatField<f64> = read_float_map(&p_be).unwrap();

        for m in [&m_le, &m_be] {
            assert_eq!(m.get(0, 0), Some(1.5));
            assert_eq!(m.get(0, 1), Some(-0.25));
            assert_eq!(m.get(1, 1), Some(6.0));
            assert!(!m.is_valid(1, 0));
        }
        assert!(m_le.same_values(&m_be));
    }

    #[test]
    fn float_map_applies_scale_and_checks_magic() {
        let dir = tempdir().unwrap();
        let mut scaled = b"Pd\n1 1\n-2.0\n".to_vec();
        scaled.extend_from_slice(&3.0f64.to_le_bytes());
        let p = dir.path().join("s.pfm");
        fs::write(&p, scaled).unwrap();
        let m: FloatField<f64> = read_float_map(&p).unwrap();
        assert_eq!(m.get(0, 0), Some(6.0));

        // f32 magic with an f64 read request
        let mut wrong = b"Pf\n1 1\n-1.0\n".to_vec();
        wrong.extend_from_slice(&1.0f32.to_le_bytes());
        let pw = dir.path().join("w.pfm");
        fs::write(&pw, wrong).unwrap();
        assert!(matches!(read_float_map::<f64>(&pw), Err(Error::Parse { .. })));

        let mut zero = b"Pd\n1 1\n0.0\n".to_vec();
        zero.extend_from_slice(&1.0f64.to_le_bytes());
        let pz = dir.path().join("z.pfm");
        fs::write(&pz, zero).unwrap();
        assert!(matches!(read_float_map::<f64>(&pz), Err(Error::Parse { .. })));

        let pt = dir.path().join("t.pfm");
        fs::write(&pt, b"Pd\n2 2\n-1.0\n\x00\x01").unwrap();
        assert!(matches!(read_float_map::<f64>(&pt), Err(Error::Parse { .. })));
    }

    fn sample_doc() -> AnnotationDoc {
        AnnotationDoc {
            image: "left.pgm".into(),
            width: 224,
            height: 160,
            branches: vec![
                BranchAnnotation {
                    label: "branch-a".into(),
                    true_distance_m: Some(1.5),
                    points: vec![[10.0, 12.0], [40.0, 14.0], [25.0, 30.0], [12.0, 28.0]],
                },
                BranchAnnotation {
                    label: "branch-b".into(),
                    true_distance_m: None,
                    points: vec![[100.0, 100.0], [120.0, 100.0], [110.0, 140.0]],
                },
            ],
        }
    }

    #[test]
    fn annotations_round_trip_and_convert_to_polygons() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("ann.json");
        let doc = sample_doc();
        write_annotations(&p, &doc).unwrap();
        let back = read_annotations(&p).unwrap();
        assert_eq!(doc, back);
        let poly = back.branches[0].to_polygon().unwrap();
        assert_eq!(poly.points().len(), 4);
    }

    #[test]
    fn annotation_validation_points_at_the_offending_entry() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("ann.json");

        let mut doc = sample_doc();
        doc.branches[1].points.truncate(2);
        match write_annotations(&p, &doc) {
            Err(Error::BadAnnotation { index, msg, .. }) => {
                assert_eq!(index, 1);
                assert!(msg.contains("2 points"), "{msg}");
            }
            other => panic!("expected BadAnnotation, got {other:?}"),
        }

        let mut doc = sample_doc();
        doc.branches[0].points[2] = [500.0, 30.0];
        assert!(matches!(
            write_annotations(&p, &doc),
            Err(Error::BadAnnotation { index: 0, .. })
        ));

        let mut doc = sample_doc();
        doc.branches[0].true_distance_m = Some(-2.0);
        assert!(matches!(write_annotations(&p, &doc), Err(Error::BadAnnotation { index: 0, .. })));

        fs::write(&p, "{ not json").unwrap();
        assert!(matches!(read_annotations(&p), Err(Error::Malformed { .. })));
    }

    #[test]
    fn rig_files_accept_both_separators_and_reject_abuse() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("rig.txt");
        fs::write(
            &p,
            "# stereo head\nfx 800.0\nfy = 802.5\nox 112 # principal point\noy=80\nbaseline_m 0.125\n",
        )
        .unwrap();
        let rig = read_rig(&p).unwrap();
        assert_eq!(rig.fx, 800.0);
        assert_eq!(rig.fy, 802.5);
        assert_eq!(rig.ox, 112.0);
        assert_eq!(rig.oy, 80.0);
        assert_eq!(rig.baseline_m, 0.125);

        fs::write(&p, "fx 800\nfx 801\nfy 800\nox 0\noy 0\nbaseline_m 0.1\n").unwrap();
        assert!(matches!(read_rig(&p), Err(Error::Malformed { .. })));
        fs::write(&p, "fx 800\nfy 800\nox 0\noy 0\n").unwrap();
        assert!(matches!(read_rig(&p), Err(Error::Malformed { .. })));
        fs::write(&p, "fx 800\nfy 800\nox 0\noy 0\nbaseline_m 0.1\nskew 3\n").unwrap();
        assert!(matches!(read_rig(&p), Err(Error::Malformed { .. })));
        fs::write(&p, "fx abc\nfy 800\nox 0\noy 0\nbaseline_m 0.1\n").unwrap();
        assert!(matches!(read_rig(&p), Err(Error::Malformed { .. })));
    }

    #[test]
    fn rig_write_read_round_trips() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("rig.txt");
        let rig = RigParams { fx: 812.25, fy: 790.5, ox: 111.5, oy: 79.25, baseline_m: 0.125 };
        write_rig(&p, &rig).unwrap();
        assert_eq!(read_rig(&p).unwrap(), rig);
    }

    #[test]
    fn scene_specs_load_from_toml() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("scene.toml");
        fs::write(
            &p,
            r#"
width = 96
height = 64
seed = 5
noise_sigma = 0.01

[rig]
fx = 800.0
fy = 800.0
ox = 48.0
oy = 32.0
baseline_m = 0.125

[texture]
octaves = 3
base_scale = 10.0
contrast = 1.2

[[element]]
kind = "plane"
depth_m = 2.5

[[element]]
kind = "bar"
depth_m = 1.25
width_px = 8.0
center_x = 70.0
"#,
        )
        .unwrap();
        let spec = read_scene_spec(&p).unwrap();
        assert_eq!(spec.width, 96);
        assert_eq!(spec.elements.len(), 2);
        assert!(matches!(spec.elements[1], crate::synth::SceneElement::Bar { .. }));
        assert_eq!(spec.texture.octaves, 3);

        fs::write(&p, "width = \"oops\"").unwrap();
        assert!(matches!(read_scene_spec(&p), Err(Error::Malformed { .. })));
    }
}
