use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::raster::Raster;
use crate::{Error, Result};

/// Reads an 8-bit, 16-bit or float image as RGB in `[0, 1]`. Integer
/// samples are divided by their maximum quantization value; grayscale is
/// replicated to three channels.
pub fn read_image(path: &Path) -> Result<Raster> {
    let img = image::open(path)?;
    let rgb = img.to_rgb32f();
    let (w, h) = rgb.dimensions();
    Ok(Raster::from_vec(
        w as usize,
        h as usize,
        3,
        rgb.into_raw().into_iter().map(f64::from).collect(),
    ))
}

/// Reads a single-band mask; nonzero pixels are set.
pub fn read_mask(path: &Path) -> Result<(usize, usize, Vec<bool>)> {
    let img = image::open(path)?.to_luma16();
    let (w, h) = img.dimensions();
    Ok((w as usize, h as usize, img.into_raw().into_iter().map(|v| v > 0).collect()))
}

fn quantize16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

fn quantize8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a 1- or 3-channel raster, clamped to `[0, 1]`, as a 16-bit PNG.
pub fn write_png16(path: &Path, raster: &Raster) -> Result<()> {
    let (w, h) = (raster.width() as u32, raster.height() as u32);
    let data: Vec<u16> = raster.data().iter().map(|&v| quantize16(v)).collect();
    let img = match raster.channels() {
        1 => DynamicImage::ImageLuma16(ImageBuffer::<Luma<u16>, _>::from_raw(w, h, data).expect("buffer size")),
        3 => DynamicImage::ImageRgb16(ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, data).expect("buffer size")),
        c => return Err(Error::Data(format!("PNG export supports 1 or 3 channels, got {c}"))),
    };
    img.save(path)?;
    Ok(())
}

/// Writes a 1- or 3-channel raster, clamped to `[0, 1]`, as an 8-bit PNG.
pub fn write_png8(path: &Path, raster: &Raster) -> Result<()> {
    let (w, h) = (raster.width() as u32, raster.height() as u32);
    let data: Vec<u8> = raster.data().iter().map(|&v| quantize8(v)).collect();
    let img = match raster.channels() {
        1 => DynamicImage::ImageLuma8(ImageBuffer::<Luma<u8>, _>::from_raw(w, h, data).expect("buffer size")),
        3 => DynamicImage::ImageRgb8(ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, data).expect("buffer size")),
        c => return Err(Error::Data(format!("PNG export supports 1 or 3 channels, got {c}"))),
    };
    img.save(path)?;
    Ok(())
}

/// Writes a boolean mask as an 8-bit PNG (0 or 255).
pub fn write_mask(path: &Path, width: usize, height: usize, mask: &[bool]) -> Result<()> {
    let r = Raster::from_vec(width, height, 1, mask.iter().map(|&m| m as u8 as f64).collect());
    write_png8(path, &r)
}

/// Rounds every sample to the nearest 16-bit level, exactly as a write and
/// read through [`write_png16`] and [`read_image`] would.
pub fn quantize_to_16bit(raster: &Raster) -> Raster {
    raster.map(|v| (quantize16(v) as f32 / 65535.0) as f64)
}

/// Min-max stretch of a single-band raster to `[0, 1]`; NaN maps to 0.
pub fn normalize_for_display(r: &Raster) -> Raster {
    let (lo, hi) = r
        .data()
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    r.map(|v| if v.is_finite() { (v - lo) / span } else { 0.0 })
}
