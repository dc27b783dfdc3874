//! Grayscale rasters, intensity histograms and the acquisition-condition
//! augmentations (linear motion blur, brightness gain).
//!
//! Every pixel-producing operation rounds half away from zero and then
//! clamps to `[0, 255]`, so outputs are bit-reproducible across platforms.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Number of grey levels for 8-bit images (`N = 2^k`, `k = 8`).
pub const GREY_LEVELS: usize = 256;

/// 8-bit single-channel raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Format(format!(
                "zero-area image ({width}x{height})"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Format(format!(
                "pixel buffer holds {} values, expected {}x{}={}",
                pixels.len(),
                width,
                height,
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Image with every pixel set to `value`.
    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    /// Mean intensity.
    pub fn mean(&self) -> f64 {
        let sum: u64 = self.pixels.iter().map(|&p| p as u64).sum();
        sum as f64 / self.pixels.len() as f64
    }
}

/// Round half away from zero, then clamp into the 8-bit range.
pub fn quantize(value: f64) -> u8 {
    value.round().clamp(0.0, 255.0) as u8
}

/// Decode a binary portable graymap (`P5`, maxval 255).
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0usize;
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        let magic = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(Error::Format(format!("bad magic {magic:?}, expected \"P5\"")));
    }
    pos += 2;

    let mut fields = [0usize; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        skip_whitespace_and_comments(bytes, &mut pos);
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format(format!("missing header field {i}")));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| Error::Format(format!("header field {text:?} overflows")))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::Format(format!("maxval {maxval}, expected 255")));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::Format("missing whitespace after maxval".into())),
    }
    let needed = width
        .checked_mul(height)
        .ok_or_else(|| Error::Format("image dimensions overflow".into()))?;
    let raster = &bytes[pos..];
    if raster.len() < needed {
        return Err(Error::Format(format!(
            "truncated pixel data: {} of {needed} bytes",
            raster.len()
        )));
    }
    GrayImage::new(width, height, raster[..needed].to_vec())
}

fn skip_whitespace_and_comments(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() {
        match bytes[*pos] {
            b if b.is_ascii_whitespace() => *pos += 1,
            b'#' => {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            }
            _ => break,
        }
    }
}

/// Encode as `P5\n<w> <h>\n255\n` followed by the raw pixel bytes.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + img.pixels.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&img.pixels);
    out
}

pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

pub fn save_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&encode_pgm(img))
        .map_err(|e| Error::io(path, e))
}

/// Pixel counts per grey level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    bins: [u64; GREY_LEVELS],
    total: u64,
}

impl Histogram {
    pub fn from_bins(bins: [u64; GREY_LEVELS]) -> Self {
        let total = bins.iter().sum();
        Self { bins, total }
    }

    pub fn bins(&self) -> &[u64; GREY_LEVELS] {
        &self.bins
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Divide every bin by the largest one.
    pub fn normalize(&self) -> Result<NormalizedHistogram> {
        if self.total == 0 {
            return Err(Error::EmptyHistogram);
        }
        let max = *self.bins.iter().max().expect("256 bins") as f64;
        let mut values = [0.0; GREY_LEVELS];
        for (v, &b) in values.iter_mut().zip(self.bins.iter()) {
            *v = b as f64 / max;
        }
        Ok(NormalizedHistogram { values })
    }
}

pub fn histogram(img: &GrayImage) -> Histogram {
    let mut bins = [0u64; GREY_LEVELS];
    for &p in &img.pixels {
        bins[p as usize] += 1;
    }
    Histogram {
        bins,
        total: img.pixels.len() as u64,
    }
}

pub fn normalize(h: &Histogram) -> Result<NormalizedHistogram> {
    h.normalize()
}

/// Histogram scaled so that its largest bin is exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedHistogram {
    values: [f64; GREY_LEVELS],
}

impl NormalizedHistogram {
    /// Wrap already-normalized values. Values must be finite; no rescaling
    /// is performed.
    pub fn from_values(values: [f64; GREY_LEVELS]) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64; GREY_LEVELS] {
        &self.values
    }

    /// Element-wise mean of several normalized histograms.
    pub fn mean_of<'a>(items: impl IntoIterator<Item = &'a NormalizedHistogram>) -> Option<Self> {
        let mut acc = [0.0; GREY_LEVELS];
        let mut n = 0usize;
        for h in items {
            for (a, v) in acc.iter_mut().zip(h.values.iter()) {
                *a += v;
            }
            n += 1;
        }
        if n == 0 {
            return None;
        }
        for a in &mut acc {
            *a /= n as f64;
        }
        Some(Self { values: acc })
    }
}

/// Keep every `stride`-th value starting at index 0.
pub fn sample_stride(values: &[f64], stride: usize) -> Result<Vec<f64>> {
    if stride == 0 || !values.len().is_multiple_of(stride) {
        return Err(Error::BadStride {
            stride,
            len: values.len(),
        });
    }
    Ok(values.iter().step_by(stride).copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BlurAxis {
    #[default]
    Horizontal,
    Vertical,
}

/// Linear motion blur: box mean of `extent` consecutive pixels along `axis`,
/// centered on each pixel, with clamped border replication.
///
/// For even extents the window covers one more pixel after the center than
/// before it.
pub fn motion_blur(img: &GrayImage, extent: usize, axis: BlurAxis) -> Result<GrayImage> {
    let axis_len = match axis {
        BlurAxis::Horizontal => img.width,
        BlurAxis::Vertical => img.height,
    };
    if extent == 0 || extent > axis_len {
        return Err(Error::BadExtent {
            extent,
            max: axis_len,
        });
    }
    if extent == 1 {
        return Ok(img.clone());
    }

    let (w, h) = (img.width, img.height);
    let before = (extent - 1) / 2;
    let mut out = vec![0u8; w * h];
    // (lines, line length, step between neighbours along the axis, step between lines)
    let (lines, len, along, across) = match axis {
        BlurAxis::Horizontal => (h, w, 1, w),
        BlurAxis::Vertical => (w, h, w, 1),
    };
    let denom = extent as u64;
    for line in 0..lines {
        let base = line * across;
        let at = |i: isize| -> u64 {
            let i = i.clamp(0, len as isize - 1) as usize;
            img.pixels[base + i * along] as u64
        };
        let mut sum: u64 = (0..extent as isize)
            .map(|k| at(k - before as isize))
            .sum();
        for i in 0..len {
            // rounded integer mean; all terms are non-negative so half-up == half-away
            out[base + i * along] = ((2 * sum + denom) / (2 * denom)) as u8;
            let leaving = i as isize - before as isize;
            sum = sum + at(leaving + extent as isize) - at(leaving);
        }
    }
    GrayImage::new(w, h, out)
}

/// Multiplicative gain by `1 + factor`.
pub fn brightness_shift(img: &GrayImage, factor: f64) -> Result<GrayImage> {
    if !(-1.0..=1.0).contains(&factor) {
        return Err(Error::BadFactor(factor));
    }
    let gain = 1.0 + factor;
    let pixels = img
        .pixels
        .iter()
        .map(|&p| quantize(p as f64 * gain))
        .collect();
    GrayImage::new(img.width, img.height, pixels)
}
