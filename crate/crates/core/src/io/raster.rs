//! Depth maps, grayscale images and masks on disk.
//!
//! Depth is stored as PFM (single channel `Pf`, scale `-1.0` meaning
//! little-endian, rows bottom to top) or as 16-bit PNG in millimeters with
//! 0 marking invalid pixels.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma};

use crate::error::{Error, Result};
use crate::grid::Grid;

pub fn encode_pfm(depth: &Grid<f32>) -> Vec<u8> {
    let (w, h) = depth.dims();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for y in (0..h).rev() {
        for v in depth.row(y) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8]) -> Result<Grid<f32>> {
    let mut r = BufReader::new(bytes);
    let mut token = |what: &str| -> Result<String> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        let t = line.trim().to_string();
        if t.is_empty() {
            return Err(Error::Format(format!("PFM: missing {what}")));
        }
        Ok(t)
    };
    let magic = token("magic")?;
    if magic != "Pf" {
        return Err(Error::Format(format!(
            "PFM: expected single-channel 'Pf', got {magic:?}"
        )));
    }
    let dims = token("dimensions")?;
    let mut it = dims.split_whitespace().map(str::parse::<usize>);
    let (w, h) = match (it.next(), it.next(), it.next()) {
        (Some(Ok(w)), Some(Ok(h)), None) => (w, h),
        _ => return Err(Error::Format(format!("PFM: bad dimensions {dims:?}"))),
    };
    let scale: f64 = token("scale")?
        .parse()
        .map_err(|_| Error::Format("PFM: bad scale".into()))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Format("PFM: scale must be non-zero".into()));
    }
    let little = scale < 0.0;
    let mut raw = Vec::new();
    r.read_to_end(&mut raw)?;
    if raw.len() != w * h * 4 {
        return Err(Error::Format(format!("PFM: {} data bytes for {w}x{h}", raw.len())));
    }
    let mut data = vec![0.0f32; w * h];
    for (i, c) in raw.chunks_exact(4).enumerate() {
        let b = [c[0], c[1], c[2], c[3]];
        let v = if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let (x, y) = (i % w, h - 1 - i / w);
        data[y * w + x] = v;
    }
    Grid::from_vec(w, h, data)
}

pub fn write_pfm(path: &Path, depth: &Grid<f32>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&encode_pfm(depth))?;
    f.flush()?;
    Ok(())
}

pub fn read_pfm(path: &Path) -> Result<Grid<f32>> {
    decode_pfm(&std::fs::read(path)?)
}

/// Writes metric depth as PFM, narrowing to `f32`.
pub fn write_depth_pfm(path: &Path, depth: &Grid<f64>) -> Result<()> {
    write_pfm(path, &depth.map(|&z| z as f32))
}

pub fn read_depth_pfm(path: &Path) -> Result<Grid<f64>> {
    Ok(read_pfm(path)?.map(|&z| f64::from(z)))
}

/// Largest depth representable in millimeter PNG.
pub const PNG_MM_MAX_M: f64 = 65.535;

/// Millimeter encoding: rounds to the nearest millimeter. Non-positive,
/// non-finite and out-of-range depths become 0 (invalid).
pub fn depth_to_mm(depth: &Grid<f64>) -> Grid<u16> {
    depth.map(|&z| {
        if z.is_finite() && z > 0.0 && z <= PNG_MM_MAX_M + 0.0005 {
            (z * 1000.0).round().min(65535.0) as u16
        } else {
            0
        }
    })
}

pub fn mm_to_depth(mm: &Grid<u16>) -> Grid<f64> {
    mm.map(|&v| f64::from(v) / 1000.0)
}

pub fn write_depth_png_mm(path: &Path, depth: &Grid<f64>) -> Result<()> {
    let mm = depth_to_mm(depth);
    let (w, h) = mm.dims();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(w as u32, h as u32, mm.into_vec())
        .ok_or_else(|| Error::SizeMismatch("depth buffer".into()))?;
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn read_depth_png_mm(path: &Path) -> Result<Grid<f64>> {
    let img = image::open(path)?.into_luma16();
    let (w, h) = img.dimensions();
    Ok(mm_to_depth(&Grid::from_vec(w as usize, h as usize, img.into_raw())?))
}

/// 8-bit grayscale PNG; intensities are rounded and clamped to `[0, 255]`.
pub fn write_gray_png(path: &Path, image: &Grid<f32>) -> Result<()> {
    let (w, h) = image.dims();
    let raw: Vec<u8> = image.data().iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    let img = GrayImage::from_raw(w as u32, h as u32, raw).ok_or_else(|| Error::SizeMismatch("image buffer".into()))?;
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Reads any image format the `image` crate knows, converted to 8-bit luma.
pub fn read_gray_png(path: &Path) -> Result<Grid<f32>> {
    let img = image::open(path)?.into_luma8();
    let (w, h) = img.dimensions();
    Ok(Grid::from_vec(w as usize, h as usize, img.into_raw())?.map(|&v| f32::from(v)))
}

/// Masks are stored as 0 / 255.
pub fn write_mask_png(path: &Path, mask: &Grid<bool>) -> Result<()> {
    write_gray_png(path, &mask.map(|&b| if b { 255.0 } else { 0.0 }))
}

pub fn read_mask_png(path: &Path) -> Result<Grid<bool>> {
    Ok(read_gray_png(path)?.map(|&v| v >= 128.0))
}
