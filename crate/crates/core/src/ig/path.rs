use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codec::ImageBuf;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Quadrature rule along the straight-line path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Nodes `s/N` for `s = 1..=N`, equal weights.
    RiemannRight,
    /// Nodes `s/N` for `s = 0..=N`, half weights at both ends.
    #[default]
    Trapezoid,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::RiemannRight => "riemann_right",
            Scheme::Trapezoid => "trapezoid",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "riemann_right" | "riemann" => Ok(Scheme::RiemannRight),
            "trapezoid" | "trapezoidal" => Ok(Scheme::Trapezoid),
            other => Err(Error::InvalidArgument(format!("unknown scheme {other:?}"))),
        }
    }
}

pub const DEFAULT_STEPS: usize = 50;

/// Straight-line path from `baseline` to `target` discretized into `steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSpec<T = f64> {
    baseline: ImageBuf<T>,
    target: ImageBuf<T>,
    steps: usize,
    scheme: Scheme,
}

impl<T: Scalar> PathSpec<T> {
    pub fn new(
        baseline: ImageBuf<T>,
        target: ImageBuf<T>,
        steps: usize,
        scheme: Scheme,
    ) -> Result<Self> {
        baseline.same_dims(&target)?;
        if steps == 0 {
            return Err(Error::InvalidArgument(
                "path needs at least one step".into(),
            ));
        }
        Ok(Self {
            baseline,
            target,
            steps,
            scheme,
        })
    }

    pub fn baseline(&self) -> &ImageBuf<T> {
        &self.baseline
    }

    pub fn target(&self) -> &ImageBuf<T> {
        &self.target
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Step indices `s` of the quadrature nodes `s/N`.
    pub fn node_indices(&self) -> std::ops::RangeInclusive<usize> {
        match self.scheme {
            Scheme::RiemannRight => 1..=self.steps,
            Scheme::Trapezoid => 0..=self.steps,
        }
    }

    /// Quadrature weight of node `s`; weights sum to one.
    pub fn weight(&self, s: usize) -> f64 {
        let n = self.steps as f64;
        match self.scheme {
            Scheme::Trapezoid if s == 0 || s == self.steps => 0.5 / n,
            _ => 1.0 / n,
        }
    }

    /// The point at `s/N`.
    ///
    /// The first half is measured from the baseline and the second half
    /// from the target, with the exact midpoint `(x0 + x1)/2`. Reversing the
    /// path therefore reproduces the same points bit for bit.
    pub fn point(&self, s: usize) -> Result<ImageBuf<T>> {
        let n = self.steps;
        if s == 0 {
            return Ok(self.baseline.clone());
        }
        if s == n {
            return Ok(self.target.clone());
        }
        let x0 = self.baseline.data();
        let x1 = self.target.data();
        let half = T::of(0.5);
        let data: Vec<T> = if 2 * s == n {
            x0.iter().zip(x1).map(|(&a, &b)| (a + b) * half).collect()
        } else if 2 * s < n {
            let t = T::of(s as f64 / n as f64);
            x0.iter().zip(x1).map(|(&a, &b)| a + t * (b - a)).collect()
        } else {
            let t = T::of((n - s) as f64 / n as f64);
            x0.iter().zip(x1).map(|(&a, &b)| b - t * (b - a)).collect()
        };
        ImageBuf::from_tensor_clamped(Tensor::from_vec(&self.baseline.dims(), data)?)
    }
}

/// Every quadrature node of `spec`, in increasing `s`.
pub fn interpolate_path<T: Scalar>(spec: &PathSpec<T>) -> Result<Vec<ImageBuf<T>>> {
    spec.node_indices().map(|s| spec.point(s)).collect()
}
