//! 8-bit image files (PNG, binary PPM) and line-oriented JSON.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ExtendedColorType, ImageEncoder};
use serde::de::DeserializeOwned;
use serde::Serialize;
use stacklight_core::{ColorSpace, Image};

use crate::config::ImageFormat;

fn to_bytes(img: &Image) -> Result<Vec<u8>> {
    if img.colorspace() != ColorSpace::Rgb {
        bail!("only RGB images can be written");
    }
    Ok(img.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect())
}

fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Image> {
    Ok(Image::new(width, height, ColorSpace::Rgb, bytes.iter().map(|&b| b as f64 / 255.0).collect())?)
}

pub fn write_image(path: &Path, img: &Image, format: ImageFormat) -> Result<()> {
    let bytes = to_bytes(img)?;
    let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    match format {
        ImageFormat::Png => {
            PngEncoder::new_with_quality(&mut out, CompressionType::Fast, FilterType::Sub)
                .write_image(&bytes, img.width() as u32, img.height() as u32, ExtendedColorType::Rgb8)
                .with_context(|| format!("encoding {}", path.display()))?;
        }
        ImageFormat::Ppm => {
            write!(out, "P6\n{} {}\n255\n", img.width(), img.height())?;
            out.write_all(&bytes)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads a PNG (any colour type, converted to RGB) or a binary PPM.
pub fn read_image(path: &Path) -> Result<Image> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("ppm") => read_ppm(path),
        _ => {
            let rgb = image::open(path).with_context(|| format!("reading {}", path.display()))?.to_rgb8();
            from_bytes(rgb.width() as usize, rgb.height() as usize, rgb.as_raw())
        }
    }
}

fn read_ppm(path: &Path) -> Result<Image> {
    let mut data = Vec::new();
    File::open(path).with_context(|| format!("reading {}", path.display()))?.read_to_end(&mut data)?;
    // header: magic, width, height, maxval, separated by whitespace and comments
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        while i < data.len() && (data[i].is_ascii_whitespace() || data[i] == b'#') {
            if data[i] == b'#' {
                while i < data.len() && data[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        let start = i;
        while i < data.len() && !data[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            bail!("{}: truncated PPM header", path.display());
        }
        fields.push(std::str::from_utf8(&data[start..i])?.to_string());
    }
    i += 1;
    if fields[0] != "P6" || fields[3] != "255" {
        bail!("{}: only 8-bit binary PPM (P6) is supported", path.display());
    }
    let (w, h): (usize, usize) = (fields[1].parse()?, fields[2].parse()?);
    let body = data.get(i..i + w * h * 3).with_context(|| format!("{}: truncated PPM data", path.display()))?;
    from_bytes(w, h, body)
}

/// PNG and PPM files in `dir`, sorted by file name.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let p = entry?.path();
        let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png") | Some("ppm")) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{} line {}", path.display(), n + 1))?);
    }
    Ok(out)
}
