//! Central-difference verification of the analytic input gradient.

use rayon::prelude::*;
use serde::Serialize;

use crate::codec::ImageBuf;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::loss::loss_ce;
use super::scorer::ScorerModel;

/// Floor of the relative-error denominator.
pub const REL_ERR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheck {
    /// Largest relative error over pixels whose stencil stays off ReLU kinks.
    pub max_rel_err: f64,
    /// Flat index of the pixel attaining `max_rel_err`.
    pub argmax_err_index: usize,
    /// Pixels whose ±h stencil changes some ReLU on/off state. Excluded above.
    pub kink_pixels: Vec<usize>,
    pub checked: usize,
}

pub fn gradient_check<T: Scalar>(
    model: &ScorerModel<T>,
    image: &ImageBuf<T>,
    k: usize,
    h: f64,
) -> Result<GradCheck> {
    if h.is_nan() || h <= 0.0 {
        return Err(Error::InvalidArgument(format!("step must be > 0, got {h}")));
    }
    let analytic = model.backward(image, k)?.grad.into_data();
    let x = image.data();
    let pattern = model.activation_pattern(x);
    let step = T::of(h);

    let per_pixel: Vec<(usize, f64, bool)> = (0..x.len())
        .into_par_iter()
        .map(|i| {
            let mut plus = x.to_vec();
            let mut minus = x.to_vec();
            plus[i] = plus[i] + step;
            minus[i] = minus[i] - step;
            let kink = model.activation_pattern(&plus) != pattern
                || model.activation_pattern(&minus) != pattern;
            let lp = loss_ce(&model.trace(&plus).logits, k)?.to_f64_lossy();
            let lm = loss_ce(&model.trace(&minus).logits, k)?.to_f64_lossy();
            // Divide by the realized step, which differs from 2h after rounding.
            let span = (plus[i] - minus[i]).to_f64_lossy();
            let numeric = (lp - lm) / span;
            let a = analytic[i].to_f64_lossy();
            let denom = a.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
            Ok((i, (a - numeric).abs() / denom, kink))
        })
        .collect::<Result<_>>()?;

    let mut report = GradCheck {
        max_rel_err: 0.0,
        argmax_err_index: 0,
        kink_pixels: Vec::new(),
        checked: 0,
    };
    for (i, err, kink) in per_pixel {
        if kink {
            report.kink_pixels.push(i);
            continue;
        }
        report.checked += 1;
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.argmax_err_index = i;
        }
    }
    Ok(report)
}
