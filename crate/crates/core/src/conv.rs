//! Valid (unpadded, stride-1) 2-D cross-correlation.
//!
//! Two forward routes exist: a direct seven-deep loop that serves as the
//! reference, and an im2col + GEMM route used everywhere else. The backward
//! pass is built on the same column buffers.

use crate::error::{Error, Result};
use crate::gemm::{gemm_nn, gemm_nt, gemm_tn};
use crate::tensor::{ConvFilter, Scalar, Tensor4};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvAlgo {
    Direct,
    Im2colGemm,
}

/// Gradients of a scalar loss with respect to every conv operand.
#[derive(Clone, Debug)]
pub struct ConvGrads<T = f32> {
    pub input: Tensor4<T>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

fn output_dims<T: Scalar>(op: &'static str, input: &Tensor4<T>, filter: &ConvFilter<T>) -> Result<[usize; 4]> {
    let [n, c, h, w] = input.dims();
    let [c_out, c_in, kh, kw] = filter.dims();
    if c != c_in {
        return Err(Error::shape(op, "channels", c_in, c));
    }
    if h < kh {
        return Err(Error::invalid(op, format!("height {h} smaller than kernel height {kh}")));
    }
    if w < kw {
        return Err(Error::invalid(op, format!("width {w} smaller than kernel width {kw}")));
    }
    Ok([n, c_out, h - kh + 1, w - kw + 1])
}

/// Forward pass through the im2col route.
pub fn conv2d_valid_forward<T: Scalar>(input: &Tensor4<T>, filter: &ConvFilter<T>) -> Result<Tensor4<T>> {
    conv2d_forward_with(ConvAlgo::Im2colGemm, input, filter)
}

pub fn conv2d_forward_with<T: Scalar>(
    algo: ConvAlgo,
    input: &Tensor4<T>,
    filter: &ConvFilter<T>,
) -> Result<Tensor4<T>> {
    let out_dims = output_dims("conv2d_valid_forward", input, filter)?;
    Ok(match algo {
        ConvAlgo::Direct => direct_forward(input, filter, out_dims),
        ConvAlgo::Im2colGemm => im2col_forward(input, filter, out_dims),
    })
}

fn direct_forward<T: Scalar>(input: &Tensor4<T>, filter: &ConvFilter<T>, out_dims: [usize; 4]) -> Tensor4<T> {
    let [n, c_out, oh, ow] = out_dims;
    let [_, c_in, kh, kw] = filter.dims();
    let mut out = Tensor4::zeros(n, c_out, oh, ow);
    for s in 0..n {
        for co in 0..c_out {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = filter.bias[co];
                    for ci in 0..c_in {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let wi = ((co * c_in + ci) * kh + ky) * kw + kx;
                                acc += filter.weight[wi] * input.get(s, ci, y + ky, x + kx);
                            }
                        }
                    }
                    out.set(s, co, y, x, acc);
                }
            }
        }
    }
    out
}

/// Unrolls one sample `(c, h, w)` into a `(c·kh·kw) × (oh·ow)` column matrix.
fn im2col<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, kh: usize, kw: usize, cols: &mut [T]) {
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let p = oh * ow;
    let mut row = 0;
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let dst = &mut cols[row * p..(row + 1) * p];
                for y in 0..oh {
                    let src = &plane[(y + ky) * w + kx..(y + ky) * w + kx + ow];
                    dst[y * ow..(y + 1) * ow].copy_from_slice(src);
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the sample.
fn col2im<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, kh: usize, kw: usize, x: &mut [T]) {
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let p = oh * ow;
    let mut row = 0;
    for ci in 0..c {
        let plane = &mut x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let src = &cols[row * p..(row + 1) * p];
                for y in 0..oh {
                    let dst = &mut plane[(y + ky) * w + kx..(y + ky) * w + kx + ow];
                    for (d, &s) in dst.iter_mut().zip(&src[y * ow..(y + 1) * ow]) {
                        *d += s;
                    }
                }
                row += 1;
            }
        }
    }
}

fn im2col_forward<T: Scalar>(input: &Tensor4<T>, filter: &ConvFilter<T>, out_dims: [usize; 4]) -> Tensor4<T> {
    let [n, c_out, oh, ow] = out_dims;
    let [_, c_in, kh, kw] = filter.dims();
    let (h, w) = (input.h(), input.w());
    let k = c_in * kh * kw;
    let p = oh * ow;
    let pointwise = kh == 1 && kw == 1;
    let mut cols = if pointwise { Vec::new() } else { vec![T::zero(); k * p] };
    let mut out = Tensor4::zeros(n, c_out, oh, ow);
    for s in 0..n {
        let x = input.sample(s);
        let colref: &[T] = if pointwise {
            x
        } else {
            im2col(x, c_in, h, w, kh, kw, &mut cols);
            &cols
        };
        let y = out.sample_mut(s);
        for (row, &b) in y.chunks_exact_mut(p).zip(&filter.bias) {
            row.fill(b);
        }
        gemm_nn(c_out, p, k, &filter.weight, colref, y);
    }
    out
}

/// Reverse pass of [`conv2d_valid_forward`].
pub fn conv2d_valid_backward<T: Scalar>(
    input: &Tensor4<T>,
    filter: &ConvFilter<T>,
    grad_out: &Tensor4<T>,
) -> Result<ConvGrads<T>> {
    let out_dims = output_dims("conv2d_valid_backward", input, filter)?;
    let got = grad_out.dims();
    for (i, axis) in ["batch", "channels", "height", "width"].into_iter().enumerate() {
        if got[i] != out_dims[i] {
            return Err(Error::shape("conv2d_valid_backward", axis, out_dims[i], got[i]));
        }
    }
    let [n, c_out, oh, ow] = out_dims;
    let [_, c_in, kh, kw] = filter.dims();
    let (h, w) = (input.h(), input.w());
    let k = c_in * kh * kw;
    let p = oh * ow;
    let pointwise = kh == 1 && kw == 1;

    let mut grad_input = Tensor4::zeros(n, c_in, h, w);
    let mut grad_weight = vec![T::zero(); c_out * k];
    let mut grad_bias = vec![T::zero(); c_out];
    let mut cols = if pointwise { Vec::new() } else { vec![T::zero(); k * p] };
    let mut grad_cols = if pointwise { Vec::new() } else { vec![T::zero(); k * p] };

    for s in 0..n {
        let g = grad_out.sample(s);
        for (gb, row) in grad_bias.iter_mut().zip(g.chunks_exact(p)) {
            *gb += row.iter().copied().sum::<T>();
        }
        let x = input.sample(s);
        let colref: &[T] = if pointwise {
            x
        } else {
            im2col(x, c_in, h, w, kh, kw, &mut cols);
            &cols
        };
        gemm_nt(c_out, k, p, g, colref, &mut grad_weight);

        if pointwise {
            gemm_tn(k, p, c_out, &filter.weight, g, grad_input.sample_mut(s));
        } else {
            grad_cols.fill(T::zero());
            gemm_tn(k, p, c_out, &filter.weight, g, &mut grad_cols);
            col2im(&grad_cols, c_in, h, w, kh, kw, grad_input.sample_mut(s));
        }
    }

    Ok(ConvGrads {
        input: grad_input,
        weight: grad_weight,
        bias: grad_bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(dims: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor4<f64> {
        Tensor4::from_fn(dims, |_| rng.gen_range(-1.0..1.0))
    }

    fn random_filter(dims: [usize; 4], rng: &mut ChaCha8Rng) -> ConvFilter<f64> {
        let len = dims.iter().product();
        ConvFilter::new(
            dims,
            (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            (0..dims[0]).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn default_network_layer_shapes() {
        let x = Tensor4::<f32>::zeros(1, 3, 36, 36);
        let feat = ConvFilter::<f32>::zeros(128, 3, 5, 5).unwrap();
        assert_eq!(conv2d_valid_forward(&x, &feat).unwrap().dims(), [1, 128, 32, 32]);
        let skip = ConvFilter::<f32>::zeros(31, 3, 7, 7).unwrap();
        assert_eq!(conv2d_valid_forward(&x, &skip).unwrap().dims(), [1, 31, 30, 30]);
    }

    #[test]
    fn all_ones_sums_window() {
        let x = Tensor4::<f32>::filled([1, 1, 3, 3], 1.0);
        let f = ConvFilter::new([1, 1, 3, 3], vec![1.0; 9], vec![0.0]).unwrap();
        for algo in [ConvAlgo::Direct, ConvAlgo::Im2colGemm] {
            let y = conv2d_forward_with(algo, &x, &f).unwrap();
            assert_eq!(y.dims(), [1, 1, 1, 1]);
            assert_eq!(y.data(), &[9.0]);
        }
    }

    #[test]
    fn mismatches_name_the_axis() {
        let x = Tensor4::<f32>::zeros(1, 4, 8, 8);
        let f = ConvFilter::<f32>::zeros(2, 3, 3, 3).unwrap();
        assert!(matches!(
            conv2d_valid_forward(&x, &f),
            Err(Error::Shape { axis: "channels", expected: 3, got: 4, .. })
        ));
        let x = Tensor4::<f32>::zeros(1, 3, 2, 8);
        assert!(conv2d_valid_forward(&x, &f).is_err());

        let x = Tensor4::<f32>::zeros(1, 3, 8, 8);
        let g = Tensor4::<f32>::zeros(1, 2, 6, 5);
        assert!(matches!(
            conv2d_valid_backward(&x, &f, &g),
            Err(Error::Shape { axis: "width", expected: 6, got: 5, .. })
        ));
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_tensor([2, 3, 6, 6], &mut rng);
        let f = random_filter([4, 3, 3, 3], &mut rng);
        let g = Tensor4::zeros(2, 4, 4, 4);
        let grads = conv2d_valid_backward(&x, &f, &g).unwrap();
        assert!(grads.input.data().iter().all(|&v| v == 0.0));
        assert!(grads.weight.iter().all(|&v| v == 0.0));
        assert!(grads.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pointwise_backward_scales_grad() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_tensor([1, 1, 5, 4], &mut rng);
        let f = ConvFilter::new([1, 1, 1, 1], vec![0.75], vec![0.0]).unwrap();
        let g = random_tensor([1, 1, 5, 4], &mut rng);
        let grads = conv2d_valid_backward(&x, &f, &g).unwrap();
        for (gi, go) in grads.input.data().iter().zip(g.data()) {
            assert_eq!(*gi, 0.75 * go);
        }
    }

    #[test]
    fn im2col_col2im_are_adjoint() {
        // <im2col(x), c> == <x, col2im(c)>
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (c, h, w, kh, kw) = (2, 6, 7, 3, 5);
        let k = c * kh * kw;
        let p = (h - kh + 1) * (w - kw + 1);
        let x: Vec<f64> = (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cc: Vec<f64> = (0..k * p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut cols = vec![0.0; k * p];
        im2col(&x, c, h, w, kh, kw, &mut cols);
        let mut back = vec![0.0; c * h * w];
        col2im(&cc, c, h, w, kh, kw, &mut back);
        let lhs: f64 = cols.iter().zip(&cc).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
