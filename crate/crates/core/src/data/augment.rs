//! Dihedral transforms, rescaling, the 32-member augmentation set, and
//! patch extraction.

use crate::data::cube::{HyperCube, Planar, RgbImage};
use crate::tensor::Tensor4;

/// Horizontal flip (optional) followed by `rot` quarter turns
/// counter-clockwise. The eight values form the dihedral group of the square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dihedral {
    pub rot: u8,
    pub flip: bool,
}

impl Dihedral {
    pub const IDENTITY: Dihedral = Dihedral { rot: 0, flip: false };

    pub fn all() -> [Dihedral; 8] {
        let mut out = [Self::IDENTITY; 8];
        for (i, d) in out.iter_mut().enumerate() {
            *d = Dihedral {
                rot: (i % 4) as u8,
                flip: i >= 4,
            };
        }
        out
    }

    pub fn inverse(self) -> Dihedral {
        if self.flip {
            // F∘R⁻ᵏ = Rᵏ∘F, so flipped elements are involutions
            self
        } else {
            Dihedral {
                rot: (4 - self.rot % 4) % 4,
                flip: false,
            }
        }
    }

    /// Output `(h, w)` for an input of size `(h, w)`.
    pub fn out_dims(self, h: usize, w: usize) -> (usize, usize) {
        if self.rot % 2 == 1 {
            (w, h)
        } else {
            (h, w)
        }
    }

    /// Where input pixel `(y, x)` lands.
    pub fn map_point(self, y: usize, x: usize, h: usize, w: usize) -> (usize, usize) {
        let (mut y, mut x, mut h, mut w) = (y, if self.flip { w - 1 - x } else { x }, h, w);
        for _ in 0..self.rot % 4 {
            // quarter turn CCW: (y, x) in h×w → (w−1−x, y) in w×h
            let ny = w - 1 - x;
            x = y;
            y = ny;
            std::mem::swap(&mut h, &mut w);
        }
        (y, x)
    }

    fn apply_plane(self, src: &[f32], h: usize, w: usize, dst: &mut [f32]) {
        let (_, ow) = self.out_dims(h, w);
        for y in 0..h {
            for x in 0..w {
                let (ny, nx) = self.map_point(y, x, h, w);
                dst[ny * ow + nx] = src[y * w + x];
            }
        }
    }

    pub fn apply<P: Planar>(self, img: &P) -> P {
        let (h, w) = (img.height(), img.width());
        let (oh, ow) = self.out_dims(h, w);
        let hw = h * w;
        let mut data = vec![0.0; img.planes().len()];
        for c in 0..img.channels() {
            self.apply_plane(img.plane(c), h, w, &mut data[c * hw..(c + 1) * hw]);
        }
        img.with_planes(oh, ow, data)
    }

    /// Transform of every sample and channel of an NCHW tensor.
    pub fn apply_tensor(self, t: &Tensor4<f32>) -> Tensor4<f32> {
        let [n, c, h, w] = t.dims();
        let (oh, ow) = self.out_dims(h, w);
        let mut out = Tensor4::zeros(n, c, oh, ow);
        for s in 0..n {
            for ch in 0..c {
                self.apply_plane(t.plane(s, ch), h, w, out.plane_mut(s, ch));
            }
        }
        out
    }
}

/// Bilinear resampling to `round(h·scale) × round(w·scale)` with pixel
/// centres aligned (`src = (dst + ½)/scale − ½`, clamped at the border).
pub fn rescale<P: Planar>(img: &P, scale: f64) -> P {
    let (h, w) = (img.height(), img.width());
    if scale == 1.0 {
        return img.with_planes(h, w, img.planes().to_vec());
    }
    let oh = ((h as f64 * scale).round() as usize).max(1);
    let ow = ((w as f64 * scale).round() as usize).max(1);
    let taps = |out: usize, inp: usize| -> Vec<(usize, usize, f32)> {
        let ratio = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * ratio - 0.5).clamp(0.0, (inp - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(inp - 1);
                (i0, i1, (s - i0 as f64) as f32)
            })
            .collect()
    };
    let ty = taps(oh, h);
    let tx = taps(ow, w);
    let mut data = Vec::with_capacity(img.channels() * oh * ow);
    for c in 0..img.channels() {
        let p = img.plane(c);
        for &(y0, y1, fy) in &ty {
            for &(x0, x1, fx) in &tx {
                let top = p[y0 * w + x0] * (1.0 - fx) + p[y0 * w + x1] * fx;
                let bot = p[y1 * w + x0] * (1.0 - fx) + p[y1 * w + x1] * fx;
                data.push(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    img.with_planes(oh, ow, data)
}

pub const AUGMENT_SCALES: [f64; 4] = [1.0, 0.9, 0.8, 0.7];

/// One member of the augmentation set.
#[derive(Clone, Debug)]
pub struct AugmentedPair {
    pub transform: Dihedral,
    pub scale: f64,
    pub rgb: RgbImage,
    pub cube: HyperCube,
}

/// All 4 rotations × {no flip, flip} × scales {1, 0.9, 0.8, 0.7}: 32
/// registered `(rgb, cube)` pairs. The first member is the input itself.
pub fn augment(rgb: &RgbImage, cube: &HyperCube) -> Vec<AugmentedPair> {
    let mut out = Vec::with_capacity(32);
    for &scale in &AUGMENT_SCALES {
        let (rs, cs) = (rescale(rgb, scale), rescale(cube, scale));
        for flip in [false, true] {
            for rot in 0..4 {
                let t = Dihedral { rot, flip };
                out.push(AugmentedPair {
                    transform: t,
                    scale,
                    rgb: t.apply(&rs),
                    cube: t.apply(&cs),
                });
            }
        }
    }
    out
}

/// An input window and its spatially centred label window.
#[derive(Clone, Debug)]
pub struct PatchPair {
    /// `(1, 3, patch_in, patch_in)`
    pub rgb: Tensor4<f32>,
    /// `(1, C, patch_out, patch_out)`
    pub label: Tensor4<f32>,
    /// Top-left corner of the input window.
    pub origin: (usize, usize),
}

/// Patches on a regular `stride` grid. Labels are the centred
/// `patch_out × patch_out` window of the cube inside each input window.
pub fn extract_patches(
    rgb: &RgbImage,
    cube: &HyperCube,
    patch_in: usize,
    patch_out: usize,
    stride: usize,
) -> Vec<PatchPair> {
    assert!(patch_out <= patch_in && (patch_in - patch_out) % 2 == 0, "patch geometry");
    assert!(stride > 0, "stride must be positive");
    let (h, w) = (rgb.h.min(cube.h), rgb.w.min(cube.w));
    if h < patch_in || w < patch_in {
        log::warn!("image {h}x{w} is smaller than the {patch_in}x{patch_in} patch; no patches extracted");
        return Vec::new();
    }
    let off = (patch_in - patch_out) / 2;
    let mut out = Vec::new();
    for y in (0..=h - patch_in).step_by(stride) {
        for x in (0..=w - patch_in).step_by(stride) {
            out.push(PatchPair {
                rgb: rgb.window(y, x, patch_in),
                label: cube.window(y + off, x + off, patch_out),
                origin: (y, x),
            });
        }
    }
    out
}
