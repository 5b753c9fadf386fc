//! Dense NCHW tensors and the parameter containers built on them.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

/// Floating-point element type. Training and inference run in `f32`;
/// gradient checks run the same code in `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Send
    + Sync
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).unwrap_or_else(Self::nan)
    }

    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Row-major `(n, c, h, w)` tensor.
#[derive(Clone, PartialEq)]
pub struct Tensor4<T = f32> {
    dims: [usize; 4],
    data: Vec<T>,
}

impl<T: Debug> Debug for Tensor4<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor4")
            .field("dims", &self.dims)
            .field("len", &self.data.len())
            .finish()
    }
}

impl<T: Scalar> Tensor4<T> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            dims: [n, c, h, w],
            data: vec![T::zero(); n * c * h * w],
        }
    }

    pub fn filled(dims: [usize; 4], value: T) -> Self {
        Self {
            dims,
            data: vec![value; dims.iter().product()],
        }
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<T>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if data.len() != expected {
            return Err(Error::shape("Tensor4::from_vec", "data length", expected, data.len()));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: [usize; 4], mut f: impl FnMut([usize; 4]) -> T) -> Self {
        let [n, c, h, w] = dims;
        let mut data = Vec::with_capacity(n * c * h * w);
        for in_ in 0..n {
            for ic in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f([in_, ic, y, x]));
                    }
                }
            }
        }
        Self { dims, data }
    }

    #[inline]
    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }
    #[inline]
    pub fn n(&self) -> usize {
        self.dims[0]
    }
    #[inline]
    pub fn c(&self) -> usize {
        self.dims[1]
    }
    #[inline]
    pub fn h(&self) -> usize {
        self.dims[2]
    }
    #[inline]
    pub fn w(&self) -> usize {
        self.dims[3]
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }
    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    fn offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.dims[1] + c) * self.dims[2] + y) * self.dims[3] + x
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.offset(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: T) {
        let o = self.offset(n, c, y, x);
        self.data[o] = v;
    }

    /// Elements of sample `i` (all channels).
    pub fn sample(&self, i: usize) -> &[T] {
        let len = self.dims[1] * self.dims[2] * self.dims[3];
        &self.data[i * len..(i + 1) * len]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [T] {
        let len = self.dims[1] * self.dims[2] * self.dims[3];
        &mut self.data[i * len..(i + 1) * len]
    }

    /// One `h×w` plane.
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let len = self.dims[2] * self.dims[3];
        let o = (n * self.dims[1] + c) * len;
        &self.data[o..o + len]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [T] {
        let len = self.dims[2] * self.dims[3];
        let o = (n * self.dims[1] + c) * len;
        &mut self.data[o..o + len]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 {
            dims: self.dims,
            data: self
                .data
                .iter()
                .map(|&v| U::from_f64_lossy(v.to_f64_lossy()))
                .collect(),
        }
    }

    /// Stacks single-sample tensors of identical `(c, h, w)` along the batch axis.
    pub fn stack(samples: &[Tensor4<T>]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::invalid("Tensor4::stack", "no samples"))?;
        let [_, c, h, w] = first.dims;
        let mut data = Vec::with_capacity(samples.len() * c * h * w);
        for s in samples {
            for (axis, (&a, &b)) in ["c", "h", "w"]
                .iter()
                .zip(first.dims[1..].iter().zip(&s.dims[1..]))
            {
                if a != b {
                    return Err(Error::shape("Tensor4::stack", axis, a, b));
                }
            }
            data.extend_from_slice(&s.data);
        }
        Ok(Self {
            dims: [data.len() / (c * h * w).max(1), c, h, w],
            data,
        })
    }
}

/// Convolution weights `(c_out, c_in, kh, kw)` plus one bias per output channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvFilter<T = f32> {
    dims: [usize; 4],
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvFilter<T> {
    pub fn zeros(c_out: usize, c_in: usize, kh: usize, kw: usize) -> Result<Self> {
        Self::new(
            [c_out, c_in, kh, kw],
            vec![T::zero(); c_out * c_in * kh * kw],
            vec![T::zero(); c_out],
        )
    }

    pub fn new(dims: [usize; 4], weight: Vec<T>, bias: Vec<T>) -> Result<Self> {
        let [c_out, c_in, kh, kw] = dims;
        if kh == 0 || kh % 2 == 0 {
            return Err(Error::invalid("ConvFilter", format!("kernel height {kh} must be odd")));
        }
        if kw == 0 || kw % 2 == 0 {
            return Err(Error::invalid("ConvFilter", format!("kernel width {kw} must be odd")));
        }
        let expected = c_out * c_in * kh * kw;
        if weight.len() != expected {
            return Err(Error::shape("ConvFilter", "weight length", expected, weight.len()));
        }
        if bias.len() != c_out {
            return Err(Error::shape("ConvFilter", "bias length", c_out, bias.len()));
        }
        Ok(Self { dims, weight, bias })
    }

    #[inline]
    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }
    #[inline]
    pub fn c_out(&self) -> usize {
        self.dims[0]
    }
    #[inline]
    pub fn c_in(&self) -> usize {
        self.dims[1]
    }
    #[inline]
    pub fn kh(&self) -> usize {
        self.dims[2]
    }
    #[inline]
    pub fn kw(&self) -> usize {
        self.dims[3]
    }

    pub fn cast<U: Scalar>(&self) -> ConvFilter<U> {
        ConvFilter {
            dims: self.dims,
            weight: self.weight.iter().map(|&v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
            bias: self.bias.iter().map(|&v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
        }
    }
}

/// Per-channel PReLU slopes.
#[derive(Clone, Debug, PartialEq)]
pub struct PReluSlopes<T = f32> {
    pub a: Vec<T>,
}

impl<T: Scalar> PReluSlopes<T> {
    pub fn new(a: Vec<T>) -> Self {
        Self { a }
    }

    pub fn constant(channels: usize, value: T) -> Self {
        Self {
            a: vec![value; channels],
        }
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn cast<U: Scalar>(&self) -> PReluSlopes<U> {
        PReluSlopes {
            a: self.a.iter().map(|&v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor4::<f32>::from_vec([1, 2, 2, 2], vec![0.0; 8]).is_ok());
        let err = Tensor4::<f32>::from_vec([1, 2, 2, 2], vec![0.0; 7]).unwrap_err();
        assert!(matches!(err, Error::Shape { expected: 8, got: 7, .. }));
    }

    #[test]
    fn filter_rejects_even_kernels() {
        assert!(ConvFilter::<f32>::zeros(1, 1, 2, 3).is_err());
        assert!(ConvFilter::<f32>::zeros(1, 1, 3, 0).is_err());
        assert!(ConvFilter::<f32>::zeros(4, 3, 7, 7).is_ok());
    }

    #[test]
    fn indexing_is_row_major() {
        let t = Tensor4::<f32>::from_fn([2, 3, 4, 5], |[n, c, y, x]| {
            (n * 1000 + c * 100 + y * 10 + x) as f32
        });
        assert_eq!(t.get(1, 2, 3, 4), 1234.0);
        assert_eq!(t.data()[((1 * 3 + 2) * 4 + 3) * 5 + 4], 1234.0);
        assert_eq!(t.plane(1, 2)[3 * 5 + 4], 1234.0);
        assert_eq!(t.sample(1)[0], 1000.0);
    }

    #[test]
    fn stack_rejects_mismatched_samples() {
        let a = Tensor4::<f32>::zeros(1, 3, 4, 4);
        let b = Tensor4::<f32>::zeros(1, 3, 4, 5);
        assert!(matches!(
            Tensor4::stack(&[a.clone(), b]),
            Err(Error::Shape { axis: "w", .. })
        ));
        assert_eq!(Tensor4::stack(&[a.clone(), a]).unwrap().dims(), [2, 3, 4, 4]);
    }
}
