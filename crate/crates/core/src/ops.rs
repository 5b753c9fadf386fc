//! Elementwise and spatial primitives: PReLU, center crop, add.

use crate::error::{Error, Result};
use crate::tensor::{PReluSlopes, Scalar, Tensor4};

/// `y = x` for `x > 0`, `y = a_c · x` otherwise.
pub fn prelu_forward<T: Scalar>(x: &Tensor4<T>, slopes: &PReluSlopes<T>) -> Result<Tensor4<T>> {
    if slopes.len() != x.c() {
        return Err(Error::shape("prelu_forward", "slopes", x.c(), slopes.len()));
    }
    let mut y = x.clone();
    let hw = x.h() * x.w();
    if hw == 0 {
        return Ok(y);
    }
    for (idx, plane) in y.data_mut().chunks_exact_mut(hw).enumerate() {
        let a = slopes.a[idx % slopes.len()];
        for v in plane {
            if *v <= T::zero() {
                *v = a * *v;
            }
        }
    }
    Ok(y)
}

#[derive(Clone, Debug)]
pub struct PReluGrads<T = f32> {
    pub x: Tensor4<T>,
    pub slopes: Vec<T>,
}

/// Gradient of [`prelu_forward`]. At `x == 0` the slope branch is taken.
pub fn prelu_backward<T: Scalar>(
    x: &Tensor4<T>,
    slopes: &PReluSlopes<T>,
    grad_out: &Tensor4<T>,
) -> Result<PReluGrads<T>> {
    if slopes.len() != x.c() {
        return Err(Error::shape("prelu_backward", "slopes", x.c(), slopes.len()));
    }
    check_same_dims("prelu_backward", x, grad_out)?;
    let mut gx = grad_out.clone();
    let mut ga = vec![T::zero(); slopes.len()];
    let hw = x.h() * x.w();
    if hw == 0 {
        return Ok(PReluGrads { x: gx, slopes: ga });
    }
    for (idx, (gplane, xplane)) in gx
        .data_mut()
        .chunks_exact_mut(hw)
        .zip(x.data().chunks_exact(hw))
        .enumerate()
    {
        let c = idx % slopes.len();
        let a = slopes.a[c];
        let mut acc = T::zero();
        for (g, &xv) in gplane.iter_mut().zip(xplane) {
            if xv <= T::zero() {
                acc += xv * *g;
                *g = a * *g;
            }
        }
        ga[c] += acc;
    }
    Ok(PReluGrads { x: gx, slopes: ga })
}

fn crop_offsets(op: &'static str, dims: [usize; 4], th: usize, tw: usize) -> Result<(usize, usize)> {
    let [_, _, h, w] = dims;
    if th > h {
        return Err(Error::invalid(op, format!("target height {th} exceeds source height {h}")));
    }
    if tw > w {
        return Err(Error::invalid(op, format!("target width {tw} exceeds source width {w}")));
    }
    if (h - th) % 2 != 0 {
        return Err(Error::invalid(op, format!("height difference {h}-{th} is odd")));
    }
    if (w - tw) % 2 != 0 {
        return Err(Error::invalid(op, format!("width difference {w}-{tw} is odd")));
    }
    Ok(((h - th) / 2, (w - tw) / 2))
}

/// Centered spatial window of size `th × tw`.
pub fn center_crop<T: Scalar>(x: &Tensor4<T>, th: usize, tw: usize) -> Result<Tensor4<T>> {
    let (oy, ox) = crop_offsets("center_crop", x.dims(), th, tw)?;
    let [n, c, _, w] = x.dims();
    let mut out = Tensor4::zeros(n, c, th, tw);
    for s in 0..n {
        for ch in 0..c {
            let src = x.plane(s, ch);
            let dst = out.plane_mut(s, ch);
            for y in 0..th {
                let row = (y + oy) * w + ox;
                dst[y * tw..(y + 1) * tw].copy_from_slice(&src[row..row + tw]);
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`center_crop`]: places `grad` in the interior window of a zero
/// tensor of spatial size `h × w`.
pub fn center_crop_backward<T: Scalar>(grad: &Tensor4<T>, h: usize, w: usize) -> Result<Tensor4<T>> {
    let [n, c, th, tw] = grad.dims();
    let (oy, ox) = crop_offsets("center_crop_backward", [n, c, h, w], th, tw)?;
    let mut out = Tensor4::zeros(n, c, h, w);
    for s in 0..n {
        for ch in 0..c {
            let src = grad.plane(s, ch);
            let dst = out.plane_mut(s, ch);
            for y in 0..th {
                let row = (y + oy) * w + ox;
                dst[row..row + tw].copy_from_slice(&src[y * tw..(y + 1) * tw]);
            }
        }
    }
    Ok(out)
}

fn check_same_dims<T: Scalar>(op: &'static str, x: &Tensor4<T>, y: &Tensor4<T>) -> Result<()> {
    for (i, axis) in ["batch", "channels", "height", "width"].into_iter().enumerate() {
        if x.dims()[i] != y.dims()[i] {
            return Err(Error::shape(op, axis, x.dims()[i], y.dims()[i]));
        }
    }
    Ok(())
}

pub fn add<T: Scalar>(x: &Tensor4<T>, y: &Tensor4<T>) -> Result<Tensor4<T>> {
    let mut out = x.clone();
    add_assign(&mut out, y)?;
    Ok(out)
}

pub fn add_assign<T: Scalar>(x: &mut Tensor4<T>, y: &Tensor4<T>) -> Result<()> {
    check_same_dims("add", x, y)?;
    for (a, &b) in x.data_mut().iter_mut().zip(y.data()) {
        *a += b;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t1(vals: &[f32]) -> Tensor4<f32> {
        Tensor4::from_vec([1, 1, 1, vals.len()], vals.to_vec()).unwrap()
    }

    #[test]
    fn prelu_branches() {
        let s = PReluSlopes::new(vec![0.25f32]);
        assert_eq!(prelu_forward(&t1(&[2.0]), &s).unwrap().data(), &[2.0]);
        assert_eq!(prelu_forward(&t1(&[-1.0]), &s).unwrap().data(), &[-0.25]);
        let s = PReluSlopes::new(vec![0.9f32]);
        assert_eq!(prelu_forward(&t1(&[0.0]), &s).unwrap().data(), &[0.0]);
    }

    #[test]
    fn prelu_slope_count_checked() {
        let x = Tensor4::<f32>::zeros(1, 3, 2, 2);
        assert!(prelu_forward(&x, &PReluSlopes::constant(2, 0.25)).is_err());
        assert!(prelu_backward(&x, &PReluSlopes::constant(2, 0.25), &x).is_err());
    }

    #[test]
    fn prelu_backward_by_hand() {
        let s = PReluSlopes::new(vec![0.5f32]);
        let g = prelu_backward(&t1(&[-2.0]), &s, &t1(&[1.0])).unwrap();
        assert_eq!(g.x.data(), &[0.5]);
        assert_eq!(g.slopes, vec![-2.0]);

        let x = t1(&[1.0, 3.0, 0.5]);
        let go = t1(&[0.1, -0.2, 0.3]);
        let g = prelu_backward(&x, &s, &go).unwrap();
        assert_eq!(g.x.data(), go.data());
        assert_eq!(g.slopes, vec![0.0]);
    }

    #[test]
    fn prelu_zero_takes_slope_branch() {
        let s = PReluSlopes::new(vec![0.3f64]);
        let x = Tensor4::from_vec([1, 1, 1, 1], vec![0.0]).unwrap();
        let g = Tensor4::from_vec([1, 1, 1, 1], vec![2.0]).unwrap();
        let grads = prelu_backward(&x, &s, &g).unwrap();
        assert_eq!(grads.x.data(), &[0.6]);
    }

    #[test]
    fn crop_hand_indexed() {
        let x = Tensor4::from_vec([1, 1, 4, 4], (1..=16).map(|v| v as f32).collect()).unwrap();
        let y = center_crop(&x, 2, 2).unwrap();
        assert_eq!(y.data(), &[6.0, 7.0, 10.0, 11.0]);
        assert_eq!(center_crop(&x, 4, 4).unwrap(), x);
    }

    #[test]
    fn crop_skip_branch_shape() {
        let x = Tensor4::<f32>::zeros(1, 31, 30, 30);
        assert_eq!(center_crop(&x, 20, 20).unwrap().dims(), [1, 31, 20, 20]);
    }

    #[test]
    fn crop_errors() {
        let x = Tensor4::<f32>::zeros(1, 1, 5, 5);
        assert!(center_crop(&x, 2, 1).is_err());
        assert!(center_crop(&x, 7, 5).is_err());
        assert!(center_crop(&x, 3, 3).is_ok());
    }

    #[test]
    fn crop_backward_is_adjoint() {
        let x = Tensor4::<f64>::from_fn([2, 2, 7, 9], |[n, c, y, x]| (n + 2 * c + 3 * y + 5 * x) as f64 * 0.1);
        let g = Tensor4::<f64>::from_fn([2, 2, 3, 5], |[n, c, y, x]| (n as f64) - (c * y) as f64 + x as f64);
        let lhs: f64 = center_crop(&x, 3, 5).unwrap().data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let back = center_crop_backward(&g, 7, 9).unwrap();
        let rhs: f64 = x.data().iter().zip(back.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn add_small() {
        assert_eq!(add(&t1(&[1.0, 2.0]), &t1(&[3.0, 4.0])).unwrap().data(), &[4.0, 6.0]);
        let x = t1(&[1.5, -2.0]);
        assert_eq!(add(&x, &t1(&[0.0, 0.0])).unwrap(), x);
        assert!(add(&x, &t1(&[1.0])).is_err());
    }

    fn small_tensor() -> impl Strategy<Value = Tensor4<f32>> {
        (1usize..3, 1usize..4, 1usize..7, 1usize..7).prop_flat_map(|(n, c, h, w)| {
            proptest::collection::vec(-10.0f32..10.0, n * c * h * w)
                .prop_map(move |d| Tensor4::from_vec([n, c, h, w], d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn add_commutes(x in small_tensor(), seed in 0u64..1000) {
            let y = x.map(|v| v * 0.37 + (seed as f32) * 1e-3);
            prop_assert_eq!(add(&x, &y).unwrap(), add(&y, &x).unwrap());
        }

        #[test]
        fn prelu_identity_on_positive(x in small_tensor(), a in -2.0f32..2.0) {
            let pos = x.map(|v| v.abs() + 1e-3);
            let s = PReluSlopes::constant(pos.c(), a);
            prop_assert_eq!(prelu_forward(&pos, &s).unwrap(), pos);
        }

        #[test]
        fn prelu_positively_homogeneous(x in small_tensor(), a in -2.0f32..2.0, k in 1u32..8) {
            // powers of two keep the scaling exact in binary floating point
            let lambda = (1u32 << k) as f32 / 4.0;
            let s = PReluSlopes::constant(x.c(), a);
            let lhs = prelu_forward(&x.map(|v| v * lambda), &s).unwrap();
            let rhs = prelu_forward(&x, &s).unwrap().map(|v| v * lambda);
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn crop_composes(h in 5usize..14, w in 5usize..14, d1 in 0usize..3, d2 in 0usize..3) {
            let x = Tensor4::<f32>::from_fn([1, 2, h, w], |[_, c, y, x]| (c * 1000 + y * 31 + x) as f32);
            let (h1, w1) = (h - 2 * d1, w - 2 * d1);
            let (h2, w2) = (h1 - 2 * d2.min(h1 / 2), w1 - 2 * d2.min(w1 / 2));
            let two_step = center_crop(&center_crop(&x, h1, w1).unwrap(), h2, w2).unwrap();
            prop_assert_eq!(two_step, center_crop(&x, h2, w2).unwrap());
        }
    }
}
