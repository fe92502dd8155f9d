//! Lossy JPEG round trip without entropy coding.
//!
//! Everything that loses information in baseline JPEG happens here: colour
//! conversion, chroma subsampling and coefficient quantization. Huffman coding
//! is lossless and is skipped.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::dct::{forward_block, inverse_block, BLOCK};
use super::image_buf::{clamp01, ImageBuf, CHANNELS};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Annex K luminance table, natural (row-major) order.
pub const BASE_LUMA: [[u16; 8]; 8] = [
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
];

/// Annex K chrominance table, natural (row-major) order.
pub const BASE_CHROMA: [[u16; 8]; 8] = [
    [17, 18, 24, 47, 99, 99, 99, 99],
    [18, 21, 26, 66, 99, 99, 99, 99],
    [24, 26, 56, 99, 99, 99, 99, 99],
    [47, 66, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
];

/// JPEG quality setting. `Original` means the image is left untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum QualityLevel {
    Original,
    Quality(u8),
}

impl QualityLevel {
    pub fn new(q: i64) -> Result<Self> {
        if (1..=100).contains(&q) {
            Ok(QualityLevel::Quality(q as u8))
        } else {
            Err(Error::QualityOutOfRange(q))
        }
    }

    pub fn is_original(self) -> bool {
        matches!(self, QualityLevel::Original)
    }

    /// Column label used in tables: `Original` or `Quality 75`.
    pub fn label(self) -> String {
        match self {
            QualityLevel::Original => "Original".into(),
            QualityLevel::Quality(q) => format!("Quality {q}"),
        }
    }

    /// The paper-standard sweep: original, 75, 50, 25.
    pub fn default_sweep() -> Vec<QualityLevel> {
        vec![
            QualityLevel::Original,
            QualityLevel::Quality(75),
            QualityLevel::Quality(50),
            QualityLevel::Quality(25),
        ]
    }
}

impl fmt::Display for QualityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QualityLevel::Original => f.write_str("original"),
            QualityLevel::Quality(q) => write!(f, "{q}"),
        }
    }
}

impl FromStr for QualityLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("original") || t.eq_ignore_ascii_case("orig") {
            return Ok(QualityLevel::Original);
        }
        let t = t
            .strip_prefix("Quality ")
            .or_else(|| t.strip_prefix("q"))
            .unwrap_or(t);
        let q: i64 = t
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad quality {s:?}")))?;
        QualityLevel::new(q)
    }
}

impl TryFrom<String> for QualityLevel {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<QualityLevel> for String {
    fn from(q: QualityLevel) -> String {
        q.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantTable {
    pub luma: [[u16; 8]; 8],
    pub chroma: [[u16; 8]; 8],
}

/// IJG quality scaling of the Annex K base tables.
pub fn quant_table(quality: i64) -> Result<QuantTable> {
    if !(1..=100).contains(&quality) {
        return Err(Error::QualityOutOfRange(quality));
    }
    let scale = if quality < 50 {
        5000 / quality
    } else {
        200 - 2 * quality
    };
    let scaled = |base: &[[u16; 8]; 8]| {
        let mut out = [[0u16; 8]; 8];
        for (orow, brow) in out.iter_mut().zip(base) {
            for (o, &b) in orow.iter_mut().zip(brow) {
                *o = ((i64::from(b) * scale + 50) / 100).clamp(1, 255) as u16;
            }
        }
        out
    };
    Ok(QuantTable {
        luma: scaled(&BASE_LUMA),
        chroma: scaled(&BASE_CHROMA),
    })
}

/// Knobs of the degradation pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JpegConfig {
    /// Qualities strictly below this use 4:2:0 chroma; others keep 4:4:4.
    pub subsample_below: u8,
}

impl Default for JpegConfig {
    fn default() -> Self {
        Self {
            subsample_below: 95,
        }
    }
}

pub fn degrade_jpeg<T: Scalar>(img: &ImageBuf<T>, q: QualityLevel) -> Result<ImageBuf<T>> {
    degrade_jpeg_with(img, q, &JpegConfig::default())
}

pub fn degrade_jpeg_with<T: Scalar>(
    img: &ImageBuf<T>,
    q: QualityLevel,
    cfg: &JpegConfig,
) -> Result<ImageBuf<T>> {
    let quality = match q {
        QualityLevel::Original => return Ok(img.clone()),
        QualityLevel::Quality(q) => q,
    };
    let tables = quant_table(i64::from(quality))?;
    let subsample = quality < cfg.subsample_below;
    let (h, w) = (img.height(), img.width());
    let unit = if subsample { 2 * BLOCK } else { BLOCK };
    let (ph, pw) = (h.div_ceil(unit) * unit, w.div_ceil(unit) * unit);

    // Colour conversion on the edge-replicated padded canvas.
    let mut planes = [
        vec![0.0f64; ph * pw],
        vec![0.0; ph * pw],
        vec![0.0; ph * pw],
    ];
    for y in 0..ph {
        let sy = y.min(h - 1);
        for x in 0..pw {
            let sx = x.min(w - 1);
            let r = img.get(sy, sx, 0).to_f64_lossy() * 255.0;
            let g = img.get(sy, sx, 1).to_f64_lossy() * 255.0;
            let b = img.get(sy, sx, 2).to_f64_lossy() * 255.0;
            let i = y * pw + x;
            planes[0][i] = 0.299 * r + 0.587 * g + 0.114 * b;
            planes[1][i] = -0.168_736 * r - 0.331_264 * g + 0.5 * b + 128.0;
            planes[2][i] = 0.5 * r - 0.418_688 * g - 0.081_312 * b + 128.0;
        }
    }

    let [luma, cb, cr] = planes;
    let luma = quantize_plane(&luma, ph, pw, &tables.luma);
    let (cb, cr) = if subsample {
        let (sh, sw) = (ph / 2, pw / 2);
        let cb = quantize_plane(&box_down(&cb, ph, pw), sh, sw, &tables.chroma);
        let cr = quantize_plane(&box_down(&cr, ph, pw), sh, sw, &tables.chroma);
        (nearest_up(&cb, sh, sw), nearest_up(&cr, sh, sw))
    } else {
        (
            quantize_plane(&cb, ph, pw, &tables.chroma),
            quantize_plane(&cr, ph, pw, &tables.chroma),
        )
    };

    let mut out = Vec::with_capacity(h * w * CHANNELS);
    for y in 0..h {
        for x in 0..w {
            let i = y * pw + x;
            let (yy, cbv, crv) = (luma[i], cb[i] - 128.0, cr[i] - 128.0);
            let rgb = [
                yy + 1.402 * crv,
                yy - 0.344_136 * cbv - 0.714_136 * crv,
                yy + 1.772 * cbv,
            ];
            out.extend(rgb.iter().map(|&v| clamp01(T::of(v / 255.0))));
        }
    }
    ImageBuf::from_tensor(Tensor::from_vec(&[h, w, CHANNELS], out)?)
}

/// Level shift, DCT, quantize/dequantize and inverse DCT for every 8×8 block.
fn quantize_plane(plane: &[f64], h: usize, w: usize, table: &[[u16; 8]; 8]) -> Vec<f64> {
    debug_assert!(h.is_multiple_of(BLOCK) && w.is_multiple_of(BLOCK));
    let mut out = vec![0.0; h * w];
    for by in (0..h).step_by(BLOCK) {
        for bx in (0..w).step_by(BLOCK) {
            let mut block = [0.0f64; 64];
            for y in 0..BLOCK {
                for x in 0..BLOCK {
                    block[y * BLOCK + x] = plane[(by + y) * w + bx + x] - 128.0;
                }
            }
            let mut coeffs = forward_block(&block);
            for (k, c) in coeffs.iter_mut().enumerate() {
                let step = f64::from(table[k / BLOCK][k % BLOCK]);
                // f64::round rounds half away from zero.
                *c = (*c / step).round() * step;
            }
            let rec = inverse_block(&coeffs);
            for y in 0..BLOCK {
                for x in 0..BLOCK {
                    out[(by + y) * w + bx + x] = rec[y * BLOCK + x] + 128.0;
                }
            }
        }
    }
    out
}

fn box_down(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    let (sh, sw) = (h / 2, w / 2);
    let mut out = vec![0.0; sh * sw];
    for y in 0..sh {
        for x in 0..sw {
            let a = plane[2 * y * w + 2 * x];
            let b = plane[2 * y * w + 2 * x + 1];
            let c = plane[(2 * y + 1) * w + 2 * x];
            let d = plane[(2 * y + 1) * w + 2 * x + 1];
            out[y * sw + x] = (a + b + c + d) / 4.0;
        }
    }
    out
}

fn nearest_up(plane: &[f64], sh: usize, sw: usize) -> Vec<f64> {
    let (h, w) = (sh * 2, sw * 2);
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = plane[(y / 2) * sw + x / 2];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::psnr;
    use crate::codec::test_image::pinned_test_image;

    #[test]
    fn q50_is_base() {
        let t = quant_table(50).unwrap();
        assert_eq!(t.luma, BASE_LUMA);
        assert_eq!(t.chroma, BASE_CHROMA);
    }

    #[test]
    fn q100_all_ones() {
        let t = quant_table(100).unwrap();
        assert!(t.luma.iter().flatten().all(|&v| v == 1));
        assert!(t.chroma.iter().flatten().all(|&v| v == 1));
    }

    // Dumped from Pillow 12.2 (libjpeg) for quality=25, natural order.
    const PIL_Q25_LUMA: [u16; 64] = [
        32, 22, 20, 32, 48, 80, 102, 122, 24, 24, 28, 38, 52, 116, 120, 110, 28, 26, 32, 48, 80,
        114, 138, 112, 28, 34, 44, 58, 102, 174, 160, 124, 36, 44, 74, 112, 136, 218, 206, 154, 48,
        70, 110, 128, 162, 208, 226, 184, 98, 128, 156, 174, 206, 242, 240, 202, 144, 184, 190,
        196, 224, 200, 206, 198,
    ];
    const PIL_Q25_CHROMA: [u16; 64] = [
        34, 36, 48, 94, 198, 198, 198, 198, 36, 42, 52, 132, 198, 198, 198, 198, 48, 52, 112, 198,
        198, 198, 198, 198, 94, 132, 198, 198, 198, 198, 198, 198, 198, 198, 198, 198, 198, 198,
        198, 198, 198, 198, 198, 198, 198, 198, 198, 198, 198, 198, 198, 198, 198, 198, 198, 198,
        198, 198, 198, 198, 198, 198, 198, 198,
    ];

    #[test]
    fn q25_matches_reference_encoder() {
        let t = quant_table(25).unwrap();
        let luma: Vec<u16> = t.luma.iter().flatten().copied().collect();
        let chroma: Vec<u16> = t.chroma.iter().flatten().copied().collect();
        assert_eq!(luma, PIL_Q25_LUMA);
        assert_eq!(chroma, PIL_Q25_CHROMA);
    }

    #[test]
    fn out_of_range_quality() {
        assert!(quant_table(0).is_err());
        assert!(quant_table(101).is_err());
        assert!(QualityLevel::new(0).is_err());
    }

    #[test]
    fn quality_parsing() {
        assert_eq!(
            "original".parse::<QualityLevel>().unwrap(),
            QualityLevel::Original
        );
        assert_eq!(
            "75".parse::<QualityLevel>().unwrap(),
            QualityLevel::Quality(75)
        );
        assert_eq!(
            "Quality 25".parse::<QualityLevel>().unwrap(),
            QualityLevel::Quality(25)
        );
        assert!("0".parse::<QualityLevel>().is_err());
        assert_eq!(QualityLevel::Quality(50).label(), "Quality 50");
    }

    #[test]
    fn original_is_identity() {
        let img = pinned_test_image();
        assert_eq!(degrade_jpeg(&img, QualityLevel::Original).unwrap(), img);
    }

    #[test]
    fn constant_image_stays_constant() {
        let img: ImageBuf = ImageBuf::filled(13, 21, [0.2, 0.6, 0.9]).unwrap();
        for q in [10, 25, 50, 75, 100] {
            let out: ImageBuf = degrade_jpeg(&img, QualityLevel::Quality(q)).unwrap();
            // One DC step of the coarsest table entry, expressed in [0,1] units,
            // bounds the deviation per channel (colour conversion mixes planes).
            let dc_step = f64::from(quant_table(q as i64).unwrap().chroma[0][0]) / 8.0 / 255.0;
            for px in out.data().chunks(3) {
                for (c, (&v, &orig)) in px.iter().zip(&[0.2f64, 0.6, 0.9]).enumerate() {
                    assert!(
                        (v - orig).abs() <= 2.0 * dc_step,
                        "q{q} c{c}: {v} vs {orig}"
                    );
                }
                assert!((px[0] - out.data()[0]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn psnr_monotone_in_quality() {
        let img = pinned_test_image();
        let mut last = f64::INFINITY;
        for q in [100, 95, 75, 50, 25, 10] {
            let p = psnr(&img, &degrade_jpeg(&img, QualityLevel::Quality(q)).unwrap()).unwrap();
            assert!(p <= last, "q{q}: {p} > {last}");
            if q == 100 {
                assert!(p >= 45.0, "q100 psnr {p}");
            }
            last = p;
        }
    }

    #[test]
    fn non_multiple_of_block_dims() {
        let img = crate::codec::test_image::noise_image(5, 19, 3);
        let out = degrade_jpeg(&img, QualityLevel::Quality(50)).unwrap();
        assert_eq!(out.dims(), [5, 19, 3]);
    }
}
