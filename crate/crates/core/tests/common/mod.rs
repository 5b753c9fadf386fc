//! Independent reference implementations and fixtures shared by the
//! integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specrecon::data::{default_wavelengths, synthesize_rgb, HyperCube, RgbImage, SpectralResponse};
use specrecon::infer::Predictor;
use specrecon::{ConvFilter, Result, Tensor4};

/// Straight quadruple loop in f64: out[n,o,y,x] = b[o] + Σ w[o,c,i,j]·in[n,c,y+i,x+j].
pub fn naive_conv(input: &Tensor4<f32>, filter: &ConvFilter<f32>) -> Vec<f64> {
    naive_conv_with_magnitude(input, filter).0
}

/// Same loop, also returning |b| + Σ|w·x| per output, the scale that bounds
/// the rounding error of any summation order.
pub fn naive_conv_with_magnitude(input: &Tensor4<f32>, filter: &ConvFilter<f32>) -> (Vec<f64>, Vec<f64>) {
    let [n, c, h, w] = input.dims();
    let [co, _, kh, kw] = filter.dims();
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut out = vec![0.0f64; n * co * oh * ow];
    let mut mag = vec![0.0f64; n * co * oh * ow];
    for s in 0..n {
        for o in 0..co {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = filter.bias[o] as f64;
                    let mut m = acc.abs();
                    for ci in 0..c {
                        for i in 0..kh {
                            for j in 0..kw {
                                let wv = filter.weight[((o * c + ci) * kh + i) * kw + j] as f64;
                                let t = wv * input.get(s, ci, y + i, x + j) as f64;
                                acc += t;
                                m += t.abs();
                            }
                        }
                    }
                    out[((s * co + o) * oh + y) * ow + x] = acc;
                    mag[((s * co + o) * oh + y) * ow + x] = m;
                }
            }
        }
    }
    (out, mag)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, dims: [usize; 4], lo: f32, hi: f32) -> Tensor4<f32> {
    Tensor4::from_fn(dims, |_| rng.gen_range(lo..hi))
}

pub fn random_rgb(rng: &mut ChaCha8Rng, h: usize, w: usize) -> RgbImage {
    RgbImage::new(h, w, (0..3 * h * w).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
}

/// Mock predictor: band `b` of the output is RGB channel `b % 3` at the
/// same pixel. Commutes with every rotation and flip.
pub struct ChannelReplicator {
    pub bands: usize,
}

impl Predictor for ChannelReplicator {
    fn out_channels(&self) -> usize {
        self.bands
    }
    fn shrinkage(&self) -> usize {
        0
    }
    fn forward(&self, rgb: &Tensor4<f32>) -> Result<Tensor4<f32>> {
        Ok(Tensor4::from_fn([rgb.n(), self.bands, rgb.h(), rgb.w()], |[n, b, y, x]| rgb.get(n, b % 3, y, x)))
    }
}

/// Smooth positive 31-band cube with spatial and spectral structure.
pub fn smooth_cube(h: usize, w: usize, phase: f32) -> HyperCube {
    let data = (0..31 * h * w)
        .map(|i| {
            let (b, y, x) = (i / (h * w), (i / w) % h, i % w);
            let (b, y, x) = (b as f32 / 30.0, y as f32 / h as f32, x as f32 / w as f32);
            0.2 + 0.3 * (6.0 * x + 2.0 * b + phase).sin().abs() * y + 0.4 * (b - x * y).powi(2)
        })
        .collect();
    HyperCube::new(h, w, default_wavelengths(31), data).unwrap()
}

pub fn cie_rgb(cube: &HyperCube) -> RgbImage {
    synthesize_rgb(cube, &SpectralResponse::cie1964_10deg()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
