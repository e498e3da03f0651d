//! Image formats: PFM (f32 depth, invalid = -1), binary PPM (8-bit color),
//! and 16-bit PGM (labels, big-endian samples per the netpbm spec).

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::SemvoxError;
use crate::image::{ColorImage, LabelImage, ScalarImage};
use crate::Result;

fn fmt_err(format: &'static str, detail: impl Into<String>) -> SemvoxError {
    SemvoxError::Format { format, detail: detail.into() }
}

/// Grayscale PFM, little-endian (negative scale), rows bottom-to-top per
/// the format spec. Non-finite pixels are stored as -1.
pub fn write_pfm(path: &Path, img: &ScalarImage) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write!(w, "Pf\n{} {}\n-1.0\n", img.width, img.height)?;
    for j in (0..img.height).rev() {
        for i in 0..img.width {
            let v = img.get(i, j);
            let f = if v.is_finite() { v as f32 } else { -1.0f32 };
            w.write_all(&f.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a grayscale PFM; negative pixels become NaN (invalid).
pub fn read_pfm(path: &Path) -> Result<ScalarImage> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut header = Vec::new();
    // Three whitespace-terminated tokens: magic, "w h", scale.
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        let mut b = [0u8; 1];
        r.read_exact(&mut b)?;
        if b[0].is_ascii_whitespace() {
            if !header.is_empty() {
                tokens.push(String::from_utf8_lossy(&header).to_string());
                header.clear();
            }
        } else {
            header.push(b[0]);
        }
    }
    if tokens[0] != "Pf" {
        return Err(fmt_err("PFM", "expected grayscale magic Pf"));
    }
    let width: usize = tokens[1].parse().map_err(|_| fmt_err("PFM", "bad width"))?;
    let height: usize = tokens[2].parse().map_err(|_| fmt_err("PFM", "bad height"))?;
    let scale: f64 = tokens[3].parse().map_err(|_| fmt_err("PFM", "bad scale"))?;
    if scale >= 0.0 {
        return Err(fmt_err("PFM", "big-endian PFM is not supported"));
    }
    let mut img = ScalarImage::invalid(width, height);
    for j in (0..height).rev() {
        for i in 0..width {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            let v = f32::from_le_bytes(b) as f64;
            img.set(i, j, if v < 0.0 { f64::NAN } else { v });
        }
    }
    Ok(img)
}

/// Binary PPM (P6, maxval 255); values clamp from [0,1] to 8 bits.
pub fn write_ppm(path: &Path, img: &ColorImage) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write!(w, "P6\n{} {}\n255\n", img.width, img.height)?;
    for px in &img.data {
        for c in 0..3 {
            w.write_all(&[(px[c].clamp(0.0, 1.0) * 255.0).round() as u8])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_ppm(path: &Path) -> Result<ColorImage> {
    let (width, height, maxval, data) = read_pnm_binary(path, "P6", "PPM")?;
    if maxval != 255 {
        return Err(fmt_err("PPM", "only maxval 255 is supported"));
    }
    if data.len() != width * height * 3 {
        return Err(fmt_err("PPM", "truncated pixel data"));
    }
    let mut img = ColorImage::new(width, height, [0.0; 3]);
    for (k, px) in img.data.iter_mut().enumerate() {
        for c in 0..3 {
            px[c] = data[k * 3 + c] as f64 / 255.0;
        }
    }
    Ok(img)
}

/// 16-bit binary PGM (P5, maxval 65535, big-endian samples).
pub fn write_pgm16(path: &Path, img: &LabelImage) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write!(w, "P5\n{} {}\n65535\n", img.width, img.height)?;
    for &v in &img.data {
        w.write_all(&v.to_be_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pgm16(path: &Path) -> Result<LabelImage> {
    let (width, height, maxval, data) = read_pnm_binary(path, "P5", "PGM")?;
    if maxval != 65535 {
        return Err(fmt_err("PGM", "only 16-bit PGM is supported"));
    }
    if data.len() != width * height * 2 {
        return Err(fmt_err("PGM", "truncated pixel data"));
    }
    let mut img = LabelImage::new(width, height, 0);
    for (k, v) in img.data.iter_mut().enumerate() {
        *v = u16::from_be_bytes([data[k * 2], data[k * 2 + 1]]);
    }
    Ok(img)
}

fn read_pnm_binary(
    path: &Path,
    magic: &str,
    format: &'static str,
) -> Result<(usize, usize, usize, Vec<u8>)> {
    let bytes = std::fs::read(path)?;
    let mut pos = 0usize;
    let mut tokens: Vec<String> = Vec::new();
    while tokens.len() < 4 && pos < bytes.len() {
        // Skip whitespace and comments.
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).to_string());
    }
    if tokens.len() < 4 || tokens[0] != magic {
        return Err(fmt_err(format, format!("expected {magic} header")));
    }
    pos += 1; // single whitespace after maxval
    let width: usize = tokens[1].parse().map_err(|_| fmt_err(format, "bad width"))?;
    let height: usize = tokens[2].parse().map_err(|_| fmt_err(format, "bad height"))?;
    let maxval: usize = tokens[3].parse().map_err(|_| fmt_err(format, "bad maxval"))?;
    Ok((width, height, maxval, bytes[pos.min(bytes.len())..].to_vec()))
}
