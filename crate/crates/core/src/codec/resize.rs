//! Separable cubic-convolution resampling.

use super::image_buf::{clamp01, ImageBuf, CHANNELS};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Keys' kernel parameter used by OpenCV and PyTorch bicubic resizers.
pub const DEFAULT_A: f64 = -0.75;

/// Cubic convolution kernel with free parameter `a`.
pub fn cubic_kernel(t: f64, a: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a
    } else {
        0.0
    }
}

/// Four tap weights for a sample at fractional offset `frac` in [0, 1)
/// past the integer tap `floor(src)`. Taps sit at offsets -1, 0, 1, 2.
pub fn tap_weights(frac: f64, a: f64) -> [f64; 4] {
    [
        cubic_kernel(frac + 1.0, a),
        cubic_kernel(frac, a),
        cubic_kernel(1.0 - frac, a),
        cubic_kernel(2.0 - frac, a),
    ]
}

struct AxisTaps {
    index: Vec<[usize; 4]>,
    weight: Vec<[f64; 4]>,
}

fn axis_taps(src_len: usize, dst_len: usize, a: f64) -> AxisTaps {
    let scale = src_len as f64 / dst_len as f64;
    let last = src_len as isize - 1;
    let mut index = Vec::with_capacity(dst_len);
    let mut weight = Vec::with_capacity(dst_len);
    for i in 0..dst_len {
        let src = (i as f64 + 0.5) * scale - 0.5;
        let base = src.floor();
        let frac = src - base;
        let base = base as isize;
        let mut idx = [0usize; 4];
        for (k, slot) in idx.iter_mut().enumerate() {
            *slot = (base - 1 + k as isize).clamp(0, last) as usize;
        }
        index.push(idx);
        weight.push(tap_weights(frac, a));
    }
    AxisTaps { index, weight }
}

pub fn resize_bicubic<T: Scalar>(
    img: &ImageBuf<T>,
    out_h: usize,
    out_w: usize,
) -> Result<ImageBuf<T>> {
    resize_bicubic_with(img, out_h, out_w, DEFAULT_A)
}

/// Rows first, then columns; output clamped to [0, 1].
///
/// Taps are accumulated as offsets from the nearest-left sample. The weights
/// sum to one, so this equals the plain weighted sum but keeps constant
/// regions bit-exact.
pub fn resize_bicubic_with<T: Scalar>(
    img: &ImageBuf<T>,
    out_h: usize,
    out_w: usize,
    a: f64,
) -> Result<ImageBuf<T>> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidShape(vec![out_h, out_w, CHANNELS]));
    }
    let (h, w) = (img.height(), img.width());
    let src = img.data();
    let xs = axis_taps(w, out_w, a);
    let ys = axis_taps(h, out_h, a);

    // Horizontal pass: h × out_w.
    let mut tmp = vec![0.0f64; h * out_w * CHANNELS];
    for y in 0..h {
        for (ox, (idx, wt)) in xs.index.iter().zip(&xs.weight).enumerate() {
            for c in 0..CHANNELS {
                let at = |k: usize| src[(y * w + idx[k]) * CHANNELS + c].to_f64_lossy();
                let centre = at(1);
                let mut acc = centre;
                for (k, &wk) in wt.iter().enumerate() {
                    acc += wk * (at(k) - centre);
                }
                tmp[(y * out_w + ox) * CHANNELS + c] = acc;
            }
        }
    }
    let mut out = Vec::with_capacity(out_h * out_w * CHANNELS);
    for (idx, wt) in ys.index.iter().zip(&ys.weight) {
        for ox in 0..out_w {
            for c in 0..CHANNELS {
                let at = |k: usize| tmp[(idx[k] * out_w + ox) * CHANNELS + c];
                let centre = at(1);
                let mut acc = centre;
                for (k, &wk) in wt.iter().enumerate() {
                    acc += wk * (at(k) - centre);
                }
                out.push(clamp01(T::of(acc)));
            }
        }
    }
    ImageBuf::from_tensor(Tensor::from_vec(&[out_h, out_w, CHANNELS], out)?)
}
