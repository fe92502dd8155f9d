//! Orthonormal 8×8 DCT-II and its inverse.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const BLOCK: usize = 8;

/// `basis[u][x] = α(u)·cos((2x+1)uπ/16)`, the rows of the orthonormal DCT-II matrix.
fn basis() -> &'static [[f64; BLOCK]; BLOCK] {
    static BASIS: OnceLock<[[f64; BLOCK]; BLOCK]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [[0.0; BLOCK]; BLOCK];
        for (u, row) in b.iter_mut().enumerate() {
            let alpha = if u == 0 {
                (1.0 / BLOCK as f64).sqrt()
            } else {
                (2.0 / BLOCK as f64).sqrt()
            };
            for (x, v) in row.iter_mut().enumerate() {
                *v = alpha * libm::cos((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI / 16.0);
            }
        }
        b
    })
}

/// Forward transform on a raw row-major 8×8 block.
pub fn forward_block<T: Scalar>(block: &[T; 64]) -> [T; 64] {
    transform(block, false)
}

/// Inverse transform on a raw row-major 8×8 block.
pub fn inverse_block<T: Scalar>(coeffs: &[T; 64]) -> [T; 64] {
    transform(coeffs, true)
}

// Separable: rows then columns. For the inverse the basis is transposed.
fn transform<T: Scalar>(input: &[T; 64], inverse: bool) -> [T; 64] {
    let b = basis();
    let coef = |u: usize, x: usize| -> T {
        if inverse {
            T::of(b[x][u])
        } else {
            T::of(b[u][x])
        }
    };
    let mut tmp = [T::zero(); 64];
    for r in 0..BLOCK {
        for u in 0..BLOCK {
            let mut acc = T::zero();
            for x in 0..BLOCK {
                acc = acc + coef(u, x) * input[r * BLOCK + x];
            }
            tmp[r * BLOCK + u] = acc;
        }
    }
    let mut out = [T::zero(); 64];
    for c in 0..BLOCK {
        for v in 0..BLOCK {
            let mut acc = T::zero();
            for y in 0..BLOCK {
                acc = acc + coef(v, y) * tmp[y * BLOCK + c];
            }
            out[v * BLOCK + c] = acc;
        }
    }
    out
}

fn as_block<T: Scalar>(t: &Tensor<T>) -> Result<[T; 64]> {
    if t.shape() != [BLOCK, BLOCK] {
        return Err(Error::DimensionMismatch {
            op: "dct8x8",
            left: t.shape().to_vec(),
            right: vec![BLOCK, BLOCK],
        });
    }
    let mut b = [T::zero(); 64];
    b.copy_from_slice(t.data());
    Ok(b)
}

pub fn dct8x8<T: Scalar>(block: &Tensor<T>) -> Result<Tensor<T>> {
    let out = forward_block(&as_block(block)?);
    Ok(Tensor::from_parts_unchecked(
        vec![BLOCK, BLOCK],
        out.to_vec(),
    ))
}

pub fn idct8x8<T: Scalar>(coeffs: &Tensor<T>) -> Result<Tensor<T>> {
    let out = inverse_block(&as_block(coeffs)?);
    Ok(Tensor::from_parts_unchecked(
        vec![BLOCK, BLOCK],
        out.to_vec(),
    ))
}
