//! Image file I/O: binary PPM always, PNG with the `png` feature.

use std::fs;
use std::path::Path;

use super::image_buf::{ImageBuf, CHANNELS};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Encodes as binary PPM (P6, maxval 255). Samples are rounded to the
/// nearest 8-bit level.
pub fn encode_ppm<T: Scalar>(img: &ImageBuf<T>) -> Vec<u8> {
    let header = format!("P6\n{} {}\n255\n", img.width(), img.height());
    let mut out = Vec::with_capacity(header.len() + img.data().len());
    out.extend_from_slice(header.as_bytes());
    out.extend(img.data().iter().map(|&v| to_u8(v)));
    out
}

fn to_u8<T: Scalar>(v: T) -> u8 {
    (v.to_f64_lossy() * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn decode_ppm<T: Scalar>(bytes: &[u8]) -> Result<ImageBuf<T>> {
    let mut pos = 0usize;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // Skip whitespace and comments.
        while pos < bytes.len() {
            match bytes[pos] {
                b'#' => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PPM header".into()));
        }
        fields.push(
            std::str::from_utf8(&bytes[start..pos])
                .unwrap_or("")
                .to_string(),
        );
    }
    if fields[0] != "P6" {
        return Err(Error::Format(format!(
            "unsupported magic {:?}, expected P6",
            fields[0]
        )));
    }
    let parse = |s: &str, what: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::Format(format!("bad PPM {what} {s:?}")))
    };
    let width = parse(&fields[1], "width")?;
    let height = parse(&fields[2], "height")?;
    let maxval = parse(&fields[3], "maxval")?;
    if maxval != 255 {
        return Err(Error::Format(format!(
            "unsupported maxval {maxval}, expected 255"
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::Format("zero image dimension".into()));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let need = width * height * CHANNELS;
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| Error::Format(format!("PPM raster truncated: need {need} bytes")))?;
    let data = raster
        .iter()
        .map(|&b| T::of(f64::from(b) / 255.0))
        .collect();
    ImageBuf::from_vec(height, width, data)
}

#[cfg(feature = "png")]
fn decode_png<T: Scalar>(bytes: &[u8]) -> Result<ImageBuf<T>> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::Format(e.to_string()))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let data = img
        .into_raw()
        .into_iter()
        .map(|b| T::of(f64::from(b) / 255.0))
        .collect();
    ImageBuf::from_vec(h as usize, w as usize, data)
}

#[cfg(feature = "png")]
fn encode_png<T: Scalar>(img: &ImageBuf<T>) -> Result<Vec<u8>> {
    let raw: Vec<u8> = img.data().iter().map(|&v| to_u8(v)).collect();
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, raw)
        .ok_or_else(|| Error::Format("raster size mismatch".into()))?;
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok(out.into_inner())
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

/// Reads a `.ppm` (or `.png` with the feature enabled) file.
pub fn read_image<T: Scalar>(path: impl AsRef<Path>) -> Result<ImageBuf<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let wrap = |e: Error| Error::Format(format!("{}: {e}", path.display()));
    match extension(path).as_str() {
        "ppm" | "pnm" => decode_ppm(&bytes).map_err(wrap),
        #[cfg(feature = "png")]
        "png" => decode_png(&bytes).map_err(wrap),
        other => Err(Error::Format(format!(
            "{}: unsupported image format {other:?}",
            path.display()
        ))),
    }
}

pub fn write_image<T: Scalar>(path: impl AsRef<Path>, img: &ImageBuf<T>) -> Result<()> {
    let path = path.as_ref();
    let bytes = match extension(path).as_str() {
        "ppm" | "pnm" => encode_ppm(img),
        #[cfg(feature = "png")]
        "png" => encode_png(img)?,
        other => {
            return Err(Error::Format(format!(
                "{}: unsupported image format {other:?}",
                path.display()
            )))
        }
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
