use super::image_buf::ImageBuf;
use crate::error::Result;
use crate::scalar::Scalar;

/// Peak signal-to-noise ratio in dB for peak value 1. Identical images give
/// `f64::INFINITY`.
pub fn psnr<T: Scalar>(a: &ImageBuf<T>, b: &ImageBuf<T>) -> Result<f64> {
    a.same_dims(b)?;
    let n = a.data().len() as f64;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x.to_f64_lossy() - y.to_f64_lossy();
            d * d
        })
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_infinite() {
        let a = ImageBuf::filled(2, 2, [0.3, 0.3, 0.3]).unwrap();
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    }

    #[test]
    fn black_vs_white_is_zero_db() {
        let a = ImageBuf::filled(2, 3, [0.0; 3]).unwrap();
        let b = ImageBuf::filled(2, 3, [1.0; 3]).unwrap();
        assert_eq!(psnr(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn mse_hundredth_is_twenty_db() {
        let a = ImageBuf::filled(4, 4, [0.5; 3]).unwrap();
        let b = ImageBuf::filled(4, 4, [0.6; 3]).unwrap();
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch() {
        let a = ImageBuf::filled(2, 2, [0.0; 3]).unwrap();
        let b = ImageBuf::filled(2, 3, [0.0; 3]).unwrap();
        assert!(psnr(&a, &b).is_err());
    }
}
