//! Whole-image prediction: reflect padding, tiling, and the 8-transform
//! enhanced prediction.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::data::augment::Dihedral;
use crate::data::cube::{default_wavelengths, HyperCube, Planar, RgbImage};
use crate::error::{Error, Result};
use crate::model::{forward, ModelParams};
use crate::tensor::Tensor4;

/// Anything mapping an `(n, 3, h, w)` batch to `(n, C, h − s, w − s)`.
pub trait Predictor {
    fn out_channels(&self) -> usize;
    /// Pixels lost per spatial axis (`s` above). Must be even.
    fn shrinkage(&self) -> usize;
    fn forward(&self, rgb: &Tensor4<f32>) -> Result<Tensor4<f32>>;
}

impl Predictor for ModelParams<f32> {
    fn out_channels(&self) -> usize {
        self.config.out_channels
    }
    fn shrinkage(&self) -> usize {
        self.config.shrinkage()
    }
    fn forward(&self, rgb: &Tensor4<f32>) -> Result<Tensor4<f32>> {
        forward(self, rgb)
    }
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn out_channels(&self) -> usize {
        (**self).out_channels()
    }
    fn shrinkage(&self) -> usize {
        (**self).shrinkage()
    }
    fn forward(&self, rgb: &Tensor4<f32>) -> Result<Tensor4<f32>> {
        (**self).forward(rgb)
    }
}

/// Wraps a predictor and counts forward passes.
pub struct CountingPredictor<P> {
    pub inner: P,
    passes: AtomicUsize,
}

impl<P: Predictor> CountingPredictor<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            passes: AtomicUsize::new(0),
        }
    }

    pub fn passes(&self) -> usize {
        self.passes.load(Ordering::Relaxed)
    }
}

impl<P: Predictor> Predictor for CountingPredictor<P> {
    fn out_channels(&self) -> usize {
        self.inner.out_channels()
    }
    fn shrinkage(&self) -> usize {
        self.inner.shrinkage()
    }
    fn forward(&self, rgb: &Tensor4<f32>) -> Result<Tensor4<f32>> {
        self.passes.fetch_add(1, Ordering::Relaxed);
        self.inner.forward(rgb)
    }
}

fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let j = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    j as usize
}

/// Mirror padding without repeating the edge pixel (`abc|ba` style).
/// Requires `pad < h` and `pad < w`.
pub fn reflect_pad(img: &RgbImage, pad: usize) -> RgbImage {
    let (h, w) = (img.h, img.w);
    let (oh, ow) = (h + 2 * pad, w + 2 * pad);
    let mut data = Vec::with_capacity(3 * oh * ow);
    let cols: Vec<usize> = (0..ow).map(|x| reflect_index(x as isize - pad as isize, w)).collect();
    for c in 0..3 {
        let p = img.plane(c);
        for y in 0..oh {
            let row = &p[reflect_index(y as isize - pad as isize, h) * w..][..w];
            data.extend(cols.iter().map(|&x| row[x]));
        }
    }
    RgbImage { h: oh, w: ow, data }
}

fn check_size<P: Predictor>(p: &P, rgb: &RgbImage) -> Result<usize> {
    let s = p.shrinkage();
    let min = s + 1;
    if rgb.h < min || rgb.w < min {
        return Err(Error::invalid(
            "predict_image",
            format!("image {}x{} is smaller than the {min}x{min} receptive field", rgb.h, rgb.w),
        ));
    }
    Ok(s / 2)
}

/// Full-resolution prediction. The input is reflect-padded by half the
/// shrinkage so the output has the input's size. Output wavelengths are the
/// default grid; callers with a known grid can overwrite them.
pub fn predict_image<P: Predictor>(p: &P, rgb: &RgbImage) -> Result<HyperCube> {
    let pad = check_size(p, rgb)?;
    let out = p.forward(&reflect_pad(rgb, pad).to_tensor())?;
    HyperCube::from_tensor(&out, 0, default_wavelengths(out.c()))
}

/// Same result as [`predict_image`], computed over `tile × tile` input
/// windows that overlap by the shrinkage. The last row and column of tiles
/// are shifted inwards to end at the border.
pub fn predict_tiled<P: Predictor>(p: &P, rgb: &RgbImage, tile: usize) -> Result<HyperCube> {
    let pad = check_size(p, rgb)?;
    let s = p.shrinkage();
    if tile <= s {
        return Err(Error::invalid("predict_tiled", format!("tile {tile} must exceed the shrinkage {s}")));
    }
    let padded = reflect_pad(rgb, pad);
    let (h, w) = (rgb.h, rgb.w);
    let c = p.out_channels();
    let mut out = HyperCube::zeros(h, w, default_wavelengths(c));
    let starts = |len: usize, t: usize| -> Vec<usize> {
        let mut v: Vec<usize> = (0..len - t).step_by(t).collect();
        v.push(len - t);
        v
    };
    // output-space tile size, clipped to the image
    let (ty, tx) = ((tile - s).min(h), (tile - s).min(w));
    for y0 in starts(h, ty) {
        for x0 in starts(w, tx) {
            let win = crop(&padded, y0, x0, ty + s, tx + s);
            let pred = p.forward(&win.to_tensor())?;
            for b in 0..c {
                let src = pred.plane(0, b);
                let dst = out.plane_mut(b);
                for r in 0..ty {
                    dst[(y0 + r) * w + x0..][..tx].copy_from_slice(&src[r * tx..(r + 1) * tx]);
                }
            }
        }
    }
    Ok(out)
}

fn crop(img: &RgbImage, y: usize, x: usize, h: usize, w: usize) -> RgbImage {
    let mut data = Vec::with_capacity(3 * h * w);
    for c in 0..3 {
        let p = img.plane(c);
        for r in y..y + h {
            data.extend_from_slice(&p[r * img.w + x..][..w]);
        }
    }
    RgbImage { h, w, data }
}

/// The eight round-trips `t⁻¹(predict(t(rgb)))`, in `Dihedral::all` order.
pub fn enhanced_members<P: Predictor>(p: &P, rgb: &RgbImage) -> Result<Vec<HyperCube>> {
    check_size(p, rgb)?;
    Dihedral::all()
        .into_iter()
        .map(|t| Ok(t.inverse().apply(&predict_image(p, &t.apply(rgb))?)))
        .collect()
}

/// Mean of the eight members, summed pairwise so that identical members
/// average back to themselves exactly.
pub fn average_members(members: &[HyperCube]) -> HyperCube {
    assert_eq!(members.len(), 8, "enhanced prediction averages eight members");
    let mut out = members[0].clone();
    for (i, v) in out.data.iter_mut().enumerate() {
        let m = |k: usize| members[k].data[i];
        let sum = ((m(0) + m(1)) + (m(2) + m(3))) + ((m(4) + m(5)) + (m(6) + m(7)));
        *v = sum / 8.0;
    }
    out
}

pub fn enhanced_predict<P: Predictor>(p: &P, rgb: &RgbImage) -> Result<HyperCube> {
    Ok(average_members(&enhanced_members(p, rgb)?))
}
