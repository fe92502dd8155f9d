//! Lossy degradation and resampling of RGB images.

mod dct;
mod image_buf;
mod io;
mod jpeg;
mod metrics;
mod resize;
pub mod test_image;

pub use dct::{dct8x8, idct8x8};
pub use image_buf::{ImageBuf, CHANNELS};
pub use io::{decode_ppm, encode_ppm, read_image, write_image};
pub use jpeg::{
    degrade_jpeg, degrade_jpeg_with, quant_table, JpegConfig, QualityLevel, QuantTable,
    BASE_CHROMA, BASE_LUMA,
};
pub use metrics::psnr;
pub use resize::{cubic_kernel, resize_bicubic, resize_bicubic_with, tap_weights, DEFAULT_A};
