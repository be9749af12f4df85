//! Error Level Analysis: JPEG recompression differencing and the resampling
//! that turns its output into network input.
//!
//! The codec is pinned so that the same source bytes always produce the same
//! training tensor:
//!
//! * encoder: `jpeg-encoder`, baseline, YCbCr with 4:2:0 chroma subsampling,
//!   the standard Annex K luminance/chrominance tables scaled by quality with
//!   the usual IJG rule (`5000 / q` below 50, `200 - 2q` from 50 up);
//! * decoder: `jpeg-decoder` built in its platform-independent mode.
//!
//! Every conversion back to 8 bits rounds half away from zero.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageReader};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::tensor::Tensor;

/// Smallest target extent that survives two valid 5×5 convolutions and a 2×2 pool.
pub const MIN_TARGET_EXTENT: u32 = 8;

/// An 8-bit interleaved RGB raster, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl std::fmt::Debug for RgbImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RgbImage({}x{})", self.width, self.height)
    }
}

impl RgbImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        ensure!(width >= 1 && height >= 1, "image dimensions must be positive, got {width}x{height}");
        ensure!(
            data.len() == width as usize * height as usize * 3,
            "RGB buffer of {} bytes does not match {width}x{height}",
            data.len()
        );
        Ok(Self { width, height, data })
    }

    /// An image with every channel of every pixel set to `value`.
    pub fn filled(width: u32, height: u32, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width as usize * height as usize * 3])
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Converts any decoded image to RGB: gray is replicated, alpha is
    /// composited over white.
    pub fn from_dynamic(img: &DynamicImage) -> Result<Self> {
        let (width, height) = (img.width(), img.height());
        if img.color().has_alpha() {
            let rgba = img.to_rgba8();
            let mut data = Vec::with_capacity(width as usize * height as usize * 3);
            for px in rgba.pixels() {
                let alpha = u32::from(px.0[3]);
                for &c in &px.0[..3] {
                    data.push(composite_over_white(u32::from(c), alpha));
                }
            }
            Self::new(width, height, data)
        } else {
            Self::new(width, height, img.to_rgb8().into_raw())
        }
    }

    /// Decodes an image file (PNG, JPEG, TIFF or BMP, sniffed from content).
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::decode(path, e))?;
        Self::decode(&bytes).map_err(|e| match e {
            Error::Codec(reason) => Error::decode(path, reason),
            other => other,
        })
    }

    /// Decodes an in-memory image file.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let reader = ImageReader::new(Cursor::new(bytes))
            .with_guessed_format()
            .map_err(|e| Error::Codec(e.to_string()))?;
        let img = reader.decode().map_err(|e| Error::Codec(e.to_string()))?;
        Self::from_dynamic(&img)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let buf = image::RgbImage::from_raw(self.width, self.height, self.data.clone())
            .expect("buffer length is an invariant of RgbImage");
        buf.save_with_format(path, image::ImageFormat::Png).map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Codec(other.to_string()),
        })
    }
}

/// `round((c·a + 255·(255 − a)) / 255)` with ties away from zero.
fn composite_over_white(c: u32, alpha: u32) -> u8 {
    let num = c * alpha + 255 * (255 - alpha);
    ((2 * num + 255) / 510) as u8
}

/// Rounds half away from zero and saturates into `0..=255`.
pub(crate) fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Parameters of the ELA transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ElaConfig {
    pub jpeg_quality: u8,
    pub target_width: u32,
    pub target_height: u32,
}

impl Default for ElaConfig {
    fn default() -> Self {
        Self { jpeg_quality: 90, target_width: 128, target_height: 128 }
    }
}

impl ElaConfig {
    pub fn new(jpeg_quality: u8, target_width: u32, target_height: u32) -> Result<Self> {
        let cfg = Self { jpeg_quality, target_width, target_height };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!((1..=100).contains(&self.jpeg_quality), "JPEG quality {} is outside 1..=100", self.jpeg_quality);
        ensure!(
            self.target_width >= MIN_TARGET_EXTENT && self.target_height >= MIN_TARGET_EXTENT,
            "target size {}x{} is below the minimum of {MIN_TARGET_EXTENT}",
            self.target_width,
            self.target_height
        );
        Ok(())
    }
}

/// Encodes `img` as a baseline 4:2:0 JPEG at `quality` and decodes it again.
pub fn recompress_jpeg(img: &RgbImage, quality: u8) -> Result<RgbImage> {
    ensure!((1..=100).contains(&quality), "JPEG quality {quality} is outside 1..=100");
    let bytes = encode_jpeg(img, quality)?;
    let mut decoder = jpeg_decoder::Decoder::new(Cursor::new(bytes));
    let pixels = decoder.decode().map_err(|e| Error::Codec(e.to_string()))?;
    let info = decoder.info().ok_or_else(|| Error::Codec("decoder returned no frame info".into()))?;
    if info.pixel_format != jpeg_decoder::PixelFormat::RGB24 {
        return Err(Error::Codec(format!("unexpected decoded pixel format {:?}", info.pixel_format)));
    }
    if (u32::from(info.width), u32::from(info.height)) != (img.width, img.height) {
        return Err(Error::Codec("decoded dimensions differ from the source".into()));
    }
    RgbImage::new(img.width, img.height, pixels)
}

/// The JPEG byte stream `recompress_jpeg` round-trips through.
pub fn encode_jpeg(img: &RgbImage, quality: u8) -> Result<Vec<u8>> {
    let (w, h) = match (u16::try_from(img.width), u16::try_from(img.height)) {
        (Ok(w), Ok(h)) => (w, h),
        _ => return Err(Error::Codec(format!("{}x{} exceeds the JPEG size limit", img.width, img.height))),
    };
    let mut out = Vec::new();
    let mut encoder = jpeg_encoder::Encoder::new(&mut out, quality);
    encoder.set_sampling_factor(jpeg_encoder::SamplingFactor::R_4_2_0);
    encoder
        .encode(&img.data, w, h, jpeg_encoder::ColorType::Rgb)
        .map_err(|e| Error::Codec(e.to_string()))?;
    Ok(out)
}

/// Absolute per-channel difference, stretched so the largest difference maps to 255.
///
/// The stretch factor is `255 / max(d)` (1 when the images are identical) and
/// each product is rounded half away from zero. The arithmetic is done on
/// exact integers.
pub fn ela_difference(original: &RgbImage, recompressed: &RgbImage) -> Result<RgbImage> {
    ensure!(
        (original.width, original.height) == (recompressed.width, recompressed.height),
        "cannot difference a {}x{} image against a {}x{} one",
        original.width,
        original.height,
        recompressed.width,
        recompressed.height
    );
    let diff: Vec<u8> = original.data.iter().zip(&recompressed.data).map(|(&a, &b)| a.abs_diff(b)).collect();
    let max = u32::from(diff.iter().copied().max().unwrap_or(0));
    let data = if max == 0 {
        diff
    } else {
        // round(d·255/max) = floor((2·d·255 + max) / (2·max)) for non-negative d
        diff.into_iter()
            .map(|d| ((2 * u32::from(d) * 255 + max) / (2 * max)).min(255) as u8)
            .collect()
    };
    RgbImage::new(original.width, original.height, data)
}

/// Bilinear resampling with half-pixel-centred sample positions.
///
/// Output pixel `(x, y)` samples the source at `((x + ½)·W/w − ½, (y + ½)·H/h − ½)`,
/// clamped to the source grid. There is no prefiltering when shrinking.
pub fn resize_bilinear(img: &RgbImage, width: u32, height: u32) -> Result<RgbImage> {
    ensure!(width >= 1 && height >= 1, "resize target {width}x{height} must be positive");
    if (width, height) == (img.width, img.height) {
        return Ok(img.clone());
    }
    let xs = sample_positions(img.width, width);
    let ys = sample_positions(img.height, height);
    let stride = img.width as usize * 3;
    let mut data = Vec::with_capacity(width as usize * height as usize * 3);
    for &(y0, y1, fy) in &ys {
        let (row0, row1) = (&img.data[y0 * stride..], &img.data[y1 * stride..]);
        for &(x0, x1, fx) in &xs {
            for c in 0..3 {
                let p00 = f64::from(row0[x0 * 3 + c]);
                let p01 = f64::from(row0[x1 * 3 + c]);
                let p10 = f64::from(row1[x0 * 3 + c]);
                let p11 = f64::from(row1[x1 * 3 + c]);
                let top = (1.0 - fx) * p00 + fx * p01;
                let bottom = (1.0 - fx) * p10 + fx * p11;
                data.push(to_u8((1.0 - fy) * top + fy * bottom));
            }
        }
    }
    RgbImage::new(width, height, data)
}

fn sample_positions(src: u32, dst: u32) -> Vec<(usize, usize, f64)> {
    let scale = f64::from(src) / f64::from(dst);
    let last = f64::from(src - 1);
    (0..dst)
        .map(|i| {
            let pos = ((f64::from(i) + 0.5) * scale - 0.5).clamp(0.0, last);
            let lo = pos.floor();
            let i0 = lo as usize;
            let i1 = (i0 + 1).min(src as usize - 1);
            (i0, i1, pos - lo)
        })
        .collect()
}

/// Native-resolution ELA image: recompress, then difference and stretch.
pub fn ela_image(img: &RgbImage, quality: u8) -> Result<RgbImage> {
    let recompressed = recompress_jpeg(img, quality)?;
    ela_difference(img, &recompressed)
}

/// `(height, width, 3)` network input with values in `[0, 1]`.
pub fn ela_transform(img: &RgbImage, cfg: &ElaConfig) -> Result<Tensor> {
    cfg.validate()?;
    let ela = ela_image(img, cfg.jpeg_quality)?;
    let resized = resize_bilinear(&ela, cfg.target_width, cfg.target_height)?;
    image_to_tensor(&resized)
}

/// Maps bytes to `[0, 1]` by dividing by 255.
pub fn image_to_tensor(img: &RgbImage) -> Result<Tensor> {
    let data = img.data.iter().map(|&v| f32::from(v) / 255.0).collect();
    Tensor::new(&[img.height as usize, img.width as usize, 3], data)
}
