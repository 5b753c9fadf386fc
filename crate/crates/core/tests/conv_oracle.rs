mod common;

use common::{naive_conv_with_magnitude, random_tensor, rng};
use rand::Rng;
use specrecon::conv::{conv2d_forward_with, conv2d_valid_forward, ConvAlgo};
use specrecon::ConvFilter;

fn max_rel_err(got: &[f32], want: &[f64], mag: &[f64]) -> f64 {
    got.iter()
        .zip(want.iter().zip(mag))
        .map(|(&g, (&w, &m))| (g as f64 - w).abs() / m.max(1e-12))
        .fold(0.0, f64::max)
}

#[test]
fn im2col_matches_quadruple_loop_on_random_shapes() {
    let mut r = rng(2024);
    for case in 0..100 {
        let n = r.gen_range(1..=2);
        let c = r.gen_range(1..=4);
        let co = r.gen_range(1..=4);
        let k = [1, 3, 5, 7][r.gen_range(0..4)];
        let h = r.gen_range(k..=10.max(k));
        let w = r.gen_range(k..=10.max(k));
        let input = random_tensor(&mut r, [n, c, h, w], -1.0, 1.0);
        let filter = ConvFilter::new(
            [co, c, k, k],
            (0..co * c * k * k).map(|_| r.gen_range(-1.0..1.0)).collect(),
            (0..co).map(|_| r.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let (want, mag) = naive_conv_with_magnitude(&input, &filter);
        for algo in [ConvAlgo::Im2colGemm, ConvAlgo::Direct] {
            let got = conv2d_forward_with(algo, &input, &filter).unwrap();
            assert_eq!(got.dims(), [n, co, h - k + 1, w - k + 1]);
            let e = max_rel_err(got.data(), &want, &mag);
            assert!(e < 1e-5, "case {case} {algo:?} ({n},{c},{h},{w}) k{k}: rel err {e}");
        }
        assert_eq!(conv2d_valid_forward(&input, &filter).unwrap().data().len(), want.len());
    }
}

#[test]
fn conv_is_linear_in_the_input() {
    let mut r = rng(5);
    let a = random_tensor(&mut r, [2, 3, 9, 8], -1.0, 1.0);
    let b = random_tensor(&mut r, [2, 3, 9, 8], -1.0, 1.0);
    let mut filter = ConvFilter::new([4, 3, 3, 3], (0..108).map(|_| r.gen_range(-1.0..1.0)).collect(), vec![0.0; 4]).unwrap();
    let sum = specrecon::ops::add(&a, &b).unwrap();
    let fa = conv2d_valid_forward(&a, &filter).unwrap();
    let fb = conv2d_valid_forward(&b, &filter).unwrap();
    let fs = conv2d_valid_forward(&sum, &filter).unwrap();
    for ((s, x), y) in fs.data().iter().zip(fa.data()).zip(fb.data()) {
        assert!((s - (x + y)).abs() < 1e-5);
    }
    // bias shifts every output of its channel
    filter.bias = vec![0.5; 4];
    let shifted = conv2d_valid_forward(&a, &filter).unwrap();
    for (p, q) in shifted.data().iter().zip(fa.data()) {
        assert!((p - q - 0.5).abs() < 1e-6);
    }
}
