//! Raster file formats.
//!
//! The raw tensor format is `b"CMT1"`, then `H`, `W`, `C` as little-endian `u32`,
//! then `H*W*C` little-endian `f32` samples, row-major and channel-interleaved.
//! PNG files are read and written at 8 or 16 bits, grayscale or RGB.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};
use crate::image::{Image, Shape};
use crate::scalar::Scalar;

pub const RAW_MAGIC: &[u8; 4] = b"CMT1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

pub fn encode_raw<T: Scalar>(image: &Image<T>) -> Vec<u8> {
    let shape = image.shape();
    let mut out = Vec::with_capacity(16 + 4 * shape.len());
    out.extend_from_slice(RAW_MAGIC);
    for dim in [shape.height, shape.width, shape.channels] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for v in image.data() {
        out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    out
}

pub fn decode_raw<T: Scalar>(bytes: &[u8]) -> Result<Image<T>> {
    if bytes.len() < 16 {
        return Err(Error::Truncated(format!(
            "raw tensor header needs 16 bytes, got {}",
            bytes.len()
        )));
    }
    if &bytes[..4] != RAW_MAGIC {
        return Err(Error::UnsupportedFormat("missing CMT1 magic".into()));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let shape = Shape::new(dim(0), dim(1), dim(2));
    let body = &bytes[16..];
    let expected = shape
        .len()
        .checked_mul(4)
        .ok_or_else(|| Error::UnsupportedFormat(format!("tensor {shape} is too large")))?;
    if body.len() < expected {
        return Err(Error::Truncated(format!(
            "tensor {shape} needs {expected} payload bytes, got {}",
            body.len()
        )));
    }
    if body.len() > expected {
        return Err(Error::UnsupportedFormat(format!(
            "{} trailing bytes after tensor payload",
            body.len() - expected
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| T::of(f32::from_le_bytes(c.try_into().unwrap()) as f64))
        .collect();
    Image::new(shape, data)
}

pub fn read_raw<T: Scalar>(path: impl AsRef<Path>) -> Result<Image<T>> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode_raw(&bytes)
}

pub fn write_raw<T: Scalar>(image: &Image<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode_raw(image))?;
    w.flush()?;
    Ok(())
}

/// Loads a PNG as samples in `[0, 1]`. Gray and RGB keep their channel count;
/// alpha is dropped.
pub fn load_png<T: Scalar>(path: impl AsRef<Path>) -> Result<Image<T>> {
    let decoded = image::ImageReader::open(path)?.with_guessed_format()?.decode()?;
    from_dynamic(decoded)
}

fn from_dynamic<T: Scalar>(decoded: DynamicImage) -> Result<Image<T>> {
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let gray = !decoded.color().has_color();
    let sixteen = decoded.color().bits_per_pixel() / decoded.color().channel_count() as u16 > 8;
    let (channels, samples): (usize, Vec<f64>) = match (gray, sixteen) {
        (true, false) => (
            1,
            decoded
                .to_luma8()
                .into_raw()
                .into_iter()
                .map(|v| v as f64 / 255.0)
                .collect(),
        ),
        (true, true) => (
            1,
            decoded
                .to_luma16()
                .into_raw()
                .into_iter()
                .map(|v| v as f64 / 65535.0)
                .collect(),
        ),
        (false, false) => (
            3,
            decoded
                .to_rgb8()
                .into_raw()
                .into_iter()
                .map(|v| v as f64 / 255.0)
                .collect(),
        ),
        (false, true) => (
            3,
            decoded
                .to_rgb16()
                .into_raw()
                .into_iter()
                .map(|v| v as f64 / 65535.0)
                .collect(),
        ),
    };
    Image::new(Shape::new(h, w, channels), samples.into_iter().map(T::of).collect())
}

/// Writes a 1- or 3-channel image as PNG, clipping samples to `[0, 1]` first.
pub fn save_png<T: Scalar>(image: &Image<T>, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let shape = image.shape();
    let (w, h) = (shape.width as u32, shape.height as u32);
    let q = |scale: f64| -> Vec<f64> {
        image
            .data()
            .iter()
            .map(|v| (v.as_f64().clamp(0.0, 1.0) * scale).round())
            .collect()
    };
    let dynamic = match (shape.channels, depth) {
        (1, BitDepth::Eight) => DynamicImage::ImageLuma8(
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, q(255.0).into_iter().map(|v| v as u8).collect()).unwrap(),
        ),
        (1, BitDepth::Sixteen) => DynamicImage::ImageLuma16(
            ImageBuffer::<Luma<u16>, _>::from_raw(w, h, q(65535.0).into_iter().map(|v| v as u16).collect()).unwrap(),
        ),
        (3, BitDepth::Eight) => DynamicImage::ImageRgb8(
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, q(255.0).into_iter().map(|v| v as u8).collect()).unwrap(),
        ),
        (3, BitDepth::Sixteen) => DynamicImage::ImageRgb16(
            ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, q(65535.0).into_iter().map(|v| v as u16).collect()).unwrap(),
        ),
        (c, _) => {
            return Err(Error::UnsupportedFormat(format!(
                "PNG output needs 1 or 3 channels, got {c}"
            )));
        }
    };
    dynamic.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Dispatches on extension: `.png` or the raw tensor format (`.cmt`, anything else).
pub fn load_image<T: Scalar>(path: impl AsRef<Path>) -> Result<Image<T>> {
    let path = path.as_ref();
    if is_png(path) {
        load_png(path)
    } else {
        read_raw(path)
    }
}

pub fn save_image<T: Scalar>(image: &Image<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if is_png(path) {
        save_png(image, path, BitDepth::Eight)
    } else {
        write_raw(image, path)
    }
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}
