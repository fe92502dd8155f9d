use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codec::ImageBuf;
use crate::error::{Error, Result};
use crate::ig::PolarityMaps;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    /// Red: the path toward the target raises the loss there.
    Negative,
    /// Green.
    Positive,
    Both,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Negative, Polarity::Positive, Polarity::Both];

    fn shows_negative(self) -> bool {
        matches!(self, Polarity::Negative | Polarity::Both)
    }

    fn shows_positive(self) -> bool {
        matches!(self, Polarity::Positive | Polarity::Both)
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Negative => "negative",
            Polarity::Positive => "positive",
            Polarity::Both => "both",
        })
    }
}

impl FromStr for Polarity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "negative" | "neg" => Ok(Polarity::Negative),
            "positive" | "pos" => Ok(Polarity::Positive),
            "both" => Ok(Polarity::Both),
            other => Err(Error::InvalidArgument(format!(
                "unknown polarity {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlaySpec {
    pub image_weight: f64,
    pub ig_weight: f64,
    pub polarity: Polarity,
}

impl Default for OverlaySpec {
    fn default() -> Self {
        Self {
            image_weight: 0.7,
            ig_weight: 1.5,
            polarity: Polarity::Both,
        }
    }
}

/// Per-pixel magnitude of a map: single-channel maps are used directly,
/// multi-channel ones are summed and clipped back into [0, 1].
fn pixel_magnitudes<T: Scalar>(map: &Tensor<T>, h: usize, w: usize) -> Result<Vec<T>> {
    let shape = map.shape();
    if shape.len() != 3 || shape[0] != h || shape[1] != w {
        return Err(Error::DimensionMismatch {
            op: "overlay",
            left: shape.to_vec(),
            right: vec![h, w],
        });
    }
    Ok(map
        .data()
        .chunks(shape[2])
        .map(|px| px.iter().fold(T::zero(), |a, &v| a + v.abs()).min(T::one()))
        .collect())
}

/// `clamp(image_weight·img + ig_weight·colour)` with red = |negative| and
/// green = positive, each shown only if the polarity mode asks for it.
pub fn render_overlay<T: Scalar>(
    img: &ImageBuf<T>,
    pol: &PolarityMaps<T>,
    spec: &OverlaySpec,
) -> Result<ImageBuf<T>> {
    if !(spec.image_weight.is_finite() && spec.ig_weight.is_finite()) {
        return Err(Error::NonFinite("overlay weights"));
    }
    let (h, w) = (img.height(), img.width());
    let red = pixel_magnitudes(&pol.negative, h, w)?;
    let green = pixel_magnitudes(&pol.positive, h, w)?;
    let (iw, gw) = (T::of(spec.image_weight), T::of(spec.ig_weight));
    let zero = T::zero();
    let mut data = Vec::with_capacity(img.data().len());
    for (p, px) in img.data().chunks(3).enumerate() {
        let r = if spec.polarity.shows_negative() {
            red[p]
        } else {
            zero
        };
        let g = if spec.polarity.shows_positive() {
            green[p]
        } else {
            zero
        };
        for (c, &v) in px.iter().enumerate() {
            let colour = match c {
                0 => r,
                1 => g,
                _ => zero,
            };
            data.push((iw * v + gw * colour).max(zero).min(T::one()));
        }
    }
    ImageBuf::from_vec(h, w, data)
}
