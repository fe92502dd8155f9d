//! Deterministic test images shared by tests, `verify` and benchmarks.

use super::image_buf::ImageBuf;

/// 64-bit LCG (Knuth MMIX constants); trivially reproducible in any language.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next_unit(&mut self) -> f64 {
        self.0 = self
            .0
            .wrapping_mul(6_364_136_223_846_793_005)
            .wrapping_add(1_442_695_040_888_963_407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Uniform noise in [0, 1), filled row-major, channel-interleaved.
pub fn noise_image(height: usize, width: usize, seed: u64) -> ImageBuf {
    let mut lcg = Lcg(seed);
    let data = (0..height * width * 3).map(|_| lcg.next_unit()).collect();
    ImageBuf::from_vec(height, width, data).expect("noise in [0,1)")
}

/// 64×64 natural-looking image: smooth colour ramps, a hard-edged disk,
/// a fine checker texture and mild noise.
pub fn pinned_test_image() -> ImageBuf {
    let (h, w) = (64usize, 64usize);
    let mut lcg = Lcg(20_240_601);
    let mut data = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            let (fy, fx) = (y as f64 / h as f64, x as f64 / w as f64);
            let inside = (fx - 0.6).powi(2) + (fy - 0.4).powi(2) < 0.05;
            let checker = if (x / 2 + y / 2) % 2 == 0 {
                0.08
            } else {
                -0.08
            };
            let texture = if fx < 0.35 { checker } else { 0.0 };
            let base = [
                0.2 + 0.6 * fx,
                0.3 + 0.4 * fy,
                0.5 + 0.3 * libm::sin(6.0 * fx) * fy,
            ];
            for (c, b) in base.iter().enumerate() {
                let disk = if inside { [0.35, -0.2, -0.25][c] } else { 0.0 };
                let noise = 0.03 * (lcg.next_unit() - 0.5);
                data.push((b + disk + texture + noise).clamp(0.0, 1.0));
            }
        }
    }
    ImageBuf::from_vec(h, w, data).expect("clamped")
}
