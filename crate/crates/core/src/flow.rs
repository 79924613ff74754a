//! Flow-field data model and utilities: normalization, end-point error,
//! pyramids, backward warping, `.flo` and PPM I/O, color-wheel rendering.

use crate::error::{Error, Result};

/// A dense field of per-pixel `(u, v)` displacements in pixels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[f64; 2]>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField { width, height, data: vec![[0.0, 0.0]; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 2]) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        FlowField { width, height, data }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<[f64; 2]>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::shape(format!("{width}x{height} flow"), format!("{} entries", data.len())));
        }
        if let Some(i) = data.iter().position(|v| !v[0].is_finite() || !v[1].is_finite()) {
            return Err(Error::NonFinite { index: i, value: if data[i][0].is_finite() { data[i][1] } else { data[i][0] } });
        }
        Ok(FlowField { width, height, data })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 2] {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: [f64; 2]) {
        self.data[y * self.width + x] = v;
    }

    /// Largest vector magnitude in the field.
    pub fn max_magnitude(&self) -> f64 {
        self.data.iter().map(|v| (v[0] * v[0] + v[1] * v[1]).sqrt()).fold(0.0, f64::max)
    }

    fn same_dims(&self, other: &FlowField) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::shape(
                format!("{}x{}", self.width, self.height),
                format!("{}x{}", other.width, other.height),
            ));
        }
        Ok(())
    }
}

/// A flow divided by its time gap: pixels per unit time, anchored at one of
/// the two encoded times. `divisor` is the signed gap used, so denormalizing
/// is an exact multiplication.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedFlowField {
    pub flow: FlowField,
    pub t0: f64,
    pub t1: f64,
    pub divisor: f64,
}

impl NormalizedFlowField {
    /// Inverse of the normalization: multiplies vectors back by the stored
    /// signed gap.
    pub fn denormalize(&self) -> FlowField {
        scale_flow(&self.flow, self.divisor)
    }
}

/// Multiplies every vector by `s`.
pub fn scale_flow(f: &FlowField, s: f64) -> FlowField {
    FlowField {
        width: f.width,
        height: f.height,
        data: f.data.iter().map(|v| [v[0] * s, v[1] * s]).collect(),
    }
}

/// Normalizes a bidirectional pair into per-unit-time fields with a consistent
/// direction: `F(.,t0) = fwd/(t1-t0)` and `F(.,t1) = bwd/(t0-t1)`.
pub fn normalize_pair(
    fwd: &FlowField,
    bwd: &FlowField,
    t0: f64,
    t1: f64,
) -> Result<(NormalizedFlowField, NormalizedFlowField)> {
    if t0 == t1 {
        return Err(Error::DegenerateInterval { t: t0 });
    }
    fwd.same_dims(bwd)?;
    let at0 = NormalizedFlowField { flow: scale_flow(fwd, 1.0 / (t1 - t0)), t0, t1, divisor: t1 - t0 };
    let at1 = NormalizedFlowField { flow: scale_flow(bwd, 1.0 / (t0 - t1)), t0, t1, divisor: t0 - t1 };
    Ok((at0, at1))
}

/// Mean Euclidean distance between corresponding vectors.
pub fn epe(a: &FlowField, b: &FlowField) -> Result<f64> {
    a.same_dims(b)?;
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| {
            let du = x[0] - y[0];
            let dv = x[1] - y[1];
            (du * du + dv * dv).sqrt()
        })
        .sum();
    Ok(sum / a.data.len() as f64)
}

/// Bilinear sample of a flow field at fractional coordinates, border-clamped.
fn sample_flow(f: &FlowField, x: f64, y: f64) -> [f64; 2] {
    let (x0, fx) = split_coord(x, f.width);
    let (y0, fy) = split_coord(y, f.height);
    let x1 = (x0 + 1).min(f.width - 1);
    let y1 = (y0 + 1).min(f.height - 1);
    let mut out = [0.0; 2];
    for c in 0..2 {
        let v00 = f.data[y0 * f.width + x0][c];
        let v01 = f.data[y0 * f.width + x1][c];
        let v10 = f.data[y1 * f.width + x0][c];
        let v11 = f.data[y1 * f.width + x1][c];
        out[c] = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) + fy * ((1.0 - fx) * v10 + fx * v11);
    }
    out
}

/// Clamps a fractional coordinate to the grid and splits it into base index
/// and fraction. Outside the grid the fraction saturates so samples clamp to
/// the border pixel.
#[inline]
fn split_coord(x: f64, len: usize) -> (usize, f64) {
    if x <= 0.0 {
        return (0, 0.0);
    }
    let max = (len - 1) as f64;
    if x >= max {
        return (len - 1, 0.0);
    }
    let x0 = x.floor();
    (x0 as usize, x - x0)
}

/// Bilinear downsample to `ceil(dim/factor)` with vectors divided by the
/// factor, sampling at aligned pixel centers.
pub fn downsample_flow(f: &FlowField, factor: usize) -> Result<FlowField> {
    if factor < 2 {
        return Err(Error::InvalidConfig(format!("downsample factor must be >= 2, got {factor}")));
    }
    let ow = f.width.div_ceil(factor);
    let oh = f.height.div_ceil(factor);
    let s = factor as f64;
    let inv = 1.0 / s;
    let mut out = FlowField::zeros(ow, oh);
    for y in 0..oh {
        for x in 0..ow {
            let sx = (x as f64 + 0.5) * s - 0.5;
            let sy = (y as f64 + 0.5) * s - 0.5;
            let v = sample_flow(f, sx, sy);
            out.set(x, y, [v[0] * inv, v[1] * inv]);
        }
    }
    Ok(out)
}

/// Level 0 is the input; level k is the input downsampled by `2^k`.
pub fn build_pyramid(f: &FlowField, levels: usize) -> Result<Vec<FlowField>> {
    if levels < 1 {
        return Err(Error::InvalidConfig("levels must be >= 1".into()));
    }
    let min_dim = f.width.min(f.height);
    if levels > 1 && (1usize << (levels - 1)) > min_dim {
        return Err(Error::InvalidConfig(format!(
            "{levels} levels need factor {} beyond min dimension {min_dim}",
            1usize << (levels - 1)
        )));
    }
    let mut out = vec![f.clone()];
    for k in 1..levels {
        out.push(downsample_flow(f, 1usize << k)?);
    }
    Ok(out)
}

/// An image with values in `[0, 1]`, row-major, 1 or 3 channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || !matches!(channels, 1 | 3) || data.len() != width * height * channels {
            return Err(Error::shape(
                format!("{width}x{height}x{channels} image"),
                format!("{} values", data.len()),
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i, value: data[i] });
        }
        let data = data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(Image { width, height, channels, data })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Image { width, height, channels, data: vec![0.0; width * height * channels] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }
}

/// Backward warp: `output(p) = bilinear sample of src at p - f(p)`, with
/// out-of-bounds samples clamped to the border pixel. Zero flow reproduces
/// the source bit-exactly.
pub fn backward_warp(src: &Image, f: &FlowField) -> Result<Image> {
    if src.width != f.width || src.height != f.height {
        return Err(Error::shape(
            format!("{}x{} flow", src.width, src.height),
            format!("{}x{}", f.width, f.height),
        ));
    }
    let mut out = Image::zeros(src.width, src.height, src.channels);
    for y in 0..src.height {
        for x in 0..src.width {
            let v = f.get(x, y);
            let sx = x as f64 - v[0];
            let sy = y as f64 - v[1];
            let (x0, fx) = split_coord(sx, src.width);
            let (y0, fy) = split_coord(sy, src.height);
            let x1 = (x0 + 1).min(src.width - 1);
            let y1 = (y0 + 1).min(src.height - 1);
            for c in 0..src.channels {
                let v00 = src.get(x0, y0, c);
                let v01 = src.get(x1, y0, c);
                let v10 = src.get(x0, y1, c);
                let v11 = src.get(x1, y1, c);
                let val = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) + fy * ((1.0 - fx) * v10 + fx * v11);
                out.set(x, y, c, val);
            }
        }
    }
    Ok(out)
}

/// Middlebury `.flo` magic: the float 202021.25, bytes "PIEH" little-endian.
const FLO_MAGIC: f32 = 202021.25;

/// Serializes as Middlebury `.flo`: magic, i32 width and height, row-major
/// interleaved `(u, v)` little-endian float32.
pub fn write_flo(f: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * f.data.len());
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(f.width as i32).to_le_bytes());
    out.extend_from_slice(&(f.height as i32).to_le_bytes());
    for v in &f.data {
        out.extend_from_slice(&(v[0] as f32).to_le_bytes());
        out.extend_from_slice(&(v[1] as f32).to_le_bytes());
    }
    out
}

/// Parses Middlebury `.flo` bytes.
pub fn read_flo(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < 12 {
        return Err(Error::Truncated { need: 12, have: bytes.len() });
    }
    let magic = f32::from_le_bytes(bytes[0..4].try_into().unwrap());
    if magic.to_bits() != FLO_MAGIC.to_bits() {
        return Err(Error::BadMagic { expected: format!("{FLO_MAGIC}"), got: format!("{magic}") });
    }
    let w = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let h = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if w <= 0 || h <= 0 {
        return Err(Error::InvalidField { field: "dimensions".into(), reason: format!("{w}x{h}") });
    }
    let (w, h) = (w as usize, h as usize);
    let need = 12 + 8 * w * h;
    if bytes.len() < need {
        return Err(Error::Truncated { need, have: bytes.len() });
    }
    let mut data = Vec::with_capacity(w * h);
    for i in 0..w * h {
        let off = 12 + 8 * i;
        let u = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        let v = f32::from_le_bytes(bytes[off + 4..off + 8].try_into().unwrap());
        data.push([u as f64, v as f64]);
    }
    Ok(FlowField { width: w, height: h, data })
}

/// Segment lengths of the Middlebury color wheel, 55 colors total.
const WHEEL_SEGMENTS: [(usize, [f64; 3], [f64; 3]); 6] = [
    (15, [1.0, 0.0, 0.0], [1.0, 1.0, 0.0]), // red -> yellow
    (6, [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]),  // yellow -> green
    (4, [0.0, 1.0, 0.0], [0.0, 1.0, 1.0]),  // green -> cyan
    (11, [0.0, 1.0, 1.0], [0.0, 0.0, 1.0]), // cyan -> blue
    (13, [0.0, 0.0, 1.0], [1.0, 0.0, 1.0]), // blue -> magenta
    (6, [1.0, 0.0, 1.0], [1.0, 0.0, 0.0]),  // magenta -> red
];

fn color_wheel() -> Vec<[f64; 3]> {
    let mut wheel = Vec::with_capacity(55);
    for (len, from, to) in WHEEL_SEGMENTS {
        for i in 0..len {
            let f = i as f64 / len as f64;
            wheel.push([
                from[0] + f * (to[0] - from[0]),
                from[1] + f * (to[1] - from[1]),
                from[2] + f * (to[2] - from[2]),
            ]);
        }
    }
    wheel
}

/// Standard Middlebury color-wheel rendering: hue encodes direction,
/// saturation encodes magnitude relative to `max_magnitude` (field max when
/// omitted); zero flow renders white, over-range magnitudes are dimmed.
pub fn flow_to_color(f: &FlowField, max_magnitude: Option<f64>) -> Image {
    let wheel = color_wheel();
    let ncols = wheel.len();
    let maxrad = match max_magnitude {
        Some(m) if m > 0.0 => m,
        _ => {
            let m = f.max_magnitude();
            if m > 0.0 {
                m
            } else {
                1.0
            }
        }
    };
    let mut img = Image::zeros(f.width, f.height, 3);
    for y in 0..f.height {
        for x in 0..f.width {
            let v = f.get(x, y);
            let u = v[0] / maxrad;
            let w = v[1] / maxrad;
            let rad = (u * u + w * w).sqrt();
            let a = (-w).atan2(-u) / std::f64::consts::PI;
            let fk = (a + 1.0) / 2.0 * (ncols as f64 - 1.0);
            let k0 = (fk.floor() as usize).min(ncols - 1);
            let k1 = (k0 + 1) % ncols;
            let frac = fk - k0 as f64;
            for c in 0..3 {
                let col = (1.0 - frac) * wheel[k0][c] + frac * wheel[k1][c];
                let col = if rad <= 1.0 { 1.0 - rad * (1.0 - col) } else { col * 0.75 };
                img.set(x, y, c, col);
            }
        }
    }
    img
}

/// Binary PPM (P6), 8-bit, rounded from `[0, 1]`; single-channel images are
/// replicated to gray RGB.
pub fn write_image(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.reserve(img.width * img.height * 3);
    for y in 0..img.height {
        for x in 0..img.width {
            for c in 0..3 {
                let v = img.get(x, y, if img.channels == 3 { c } else { 0 });
                out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    out
}

/// Parses binary PPM (P6) with an 8-bit maxval into a 3-channel image with
/// values `v / 255`. Header comments and arbitrary whitespace are accepted;
/// exactly one whitespace byte separates the header from the pixel data.
pub fn read_image(bytes: &[u8]) -> Result<Image> {
    fn token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(Error::Truncated { need: start + 1, have: bytes.len() });
        }
        Ok(&bytes[start..*pos])
    }
    fn parse(field: &str, tok: &[u8]) -> Result<usize> {
        std::str::from_utf8(tok).ok().and_then(|s| s.parse().ok()).ok_or_else(|| {
            Error::InvalidField {
                field: field.into(),
                reason: format!("not a decimal integer: {:?}", String::from_utf8_lossy(tok)),
            }
        })
    }

    let mut pos = 0usize;
    let magic = token(bytes, &mut pos)?;
    if magic != b"P6" {
        return Err(Error::BadMagic {
            expected: "P6".into(),
            got: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let width = parse("width", token(bytes, &mut pos)?)?;
    let height = parse("height", token(bytes, &mut pos)?)?;
    let maxval = parse("maxval", token(bytes, &mut pos)?)?;
    if maxval != 255 {
        return Err(Error::InvalidField {
            field: "maxval".into(),
            reason: format!("only 255 supported, got {maxval}"),
        });
    }
    // A single whitespace byte ends the header; pixel bytes follow raw.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::InvalidField {
            field: "header".into(),
            reason: "missing whitespace before pixel data".into(),
        });
    }
    pos += 1;
    let need = width.checked_mul(height).and_then(|n| n.checked_mul(3)).ok_or_else(|| {
        Error::InvalidField {
            field: "dimensions".into(),
            reason: format!("{width}x{height} overflows"),
        }
    })?;
    let raster = &bytes[pos..];
    if raster.len() < need {
        return Err(Error::Truncated { need: pos + need, have: bytes.len() });
    }
    if raster.len() > need {
        return Err(Error::InvalidField {
            field: "raster".into(),
            reason: format!("{} trailing bytes after {need} pixel bytes", raster.len() - need),
        });
    }
    let data = raster.iter().map(|&b| f64::from(b) / 255.0).collect();
    Image::new(width, height, 3, data)
}
