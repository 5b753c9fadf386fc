mod common;

use common::{random_tensor, rng};
use specrecon::model::{backward, forward};
use specrecon::{ModelConfig, ModelParams, Tensor4};

#[test]
fn default_model_maps_36_to_20() {
    let cfg = ModelConfig::default();
    assert_eq!((cfg.receptive_field(), cfg.shrinkage()), (17, 16));
    let params = ModelParams::init(cfg, 0).unwrap();
    let x = random_tensor(&mut rng(1), [1, 3, 36, 36], 0.0, 1.0);
    assert_eq!(forward(&params, &x).unwrap().dims(), [1, 31, 20, 20]);
    let x = random_tensor(&mut rng(1), [2, 3, 41, 37], 0.0, 1.0);
    assert_eq!(forward(&params, &x).unwrap().dims(), [2, 31, 25, 21]);
}

#[test]
fn too_small_input_is_rejected() {
    let params = ModelParams::<f32>::init(ModelConfig::default(), 0).unwrap();
    assert!(forward(&params, &Tensor4::<f32>::zeros(1, 3, 16, 30)).is_err());
    assert_eq!(forward(&params, &Tensor4::<f32>::zeros(1, 3, 17, 17)).unwrap().dims(), [1, 31, 1, 1]);
}

/// Bounding box of the nonzero input gradient for a one-hot output gradient.
fn gradient_support(params: &ModelParams<f32>, x: &Tensor4<f32>, b: usize, y: usize, xx: usize) -> (usize, usize, usize, usize) {
    let out = forward(params, x).unwrap();
    let mut g = Tensor4::filled(out.dims(), 0.0);
    g.set(0, b, y, xx, 1.0);
    let grads = backward(params, x, &g).unwrap();
    let (mut y0, mut y1, mut x0, mut x1) = (usize::MAX, 0, usize::MAX, 0);
    for c in 0..3 {
        for r in 0..x.h() {
            for q in 0..x.w() {
                if grads.input.get(0, c, r, q) != 0.0 {
                    (y0, y1, x0, x1) = (y0.min(r), y1.max(r), x0.min(q), x1.max(q));
                }
            }
        }
    }
    (y0, y1, x0, x1)
}

#[test]
fn output_gradient_support_is_the_17x17_window() {
    let params = ModelParams::init(ModelConfig::default(), 3).unwrap();
    let x = random_tensor(&mut rng(4), [1, 3, 40, 40], 0.0, 1.0);
    for (b, y, xx) in [(0, 0, 0), (30, 23, 23), (7, 10, 3)] {
        let (y0, y1, x0, x1) = gradient_support(&params, &x, b, y, xx);
        assert_eq!((y0, y1, x0, x1), (y, y + 16, xx, xx + 16), "output ({b},{y},{xx})");
    }
}

#[test]
fn output_pixel_ignores_inputs_outside_its_window() {
    let params = ModelParams::init(ModelConfig::default(), 5).unwrap();
    let mut r = rng(6);
    let a = random_tensor(&mut r, [1, 3, 40, 40], 0.0, 1.0);
    let mut b = a.clone();
    // perturb everything outside the window of output (12, 12): rows/cols 12..=28
    for c in 0..3 {
        for y in 0..40 {
            for x in 0..40 {
                if !(12..=28).contains(&y) || !(12..=28).contains(&x) {
                    b.set(0, c, y, x, a.get(0, c, y, x) + 0.5);
                }
            }
        }
    }
    let (fa, fb) = (forward(&params, &a).unwrap(), forward(&params, &b).unwrap());
    for ch in 0..31 {
        assert_eq!(fa.get(0, ch, 12, 12), fb.get(0, ch, 12, 12));
    }
    assert_ne!(fa.get(0, 0, 11, 12), fb.get(0, 0, 11, 12));
}

#[test]
fn prediction_is_translation_consistent() {
    let params = ModelParams::init(ModelConfig::default(), 8).unwrap();
    let x = random_tensor(&mut rng(9), [1, 3, 30, 30], 0.0, 1.0);
    let full = forward(&params, &x).unwrap();
    let shifted = Tensor4::from_fn([1, 3, 25, 27], |[n, c, y, xx]| x.get(n, c, y + 5, xx + 3));
    let part = forward(&params, &shifted).unwrap();
    for c in 0..31 {
        for y in 0..part.h() {
            for xx in 0..part.w() {
                let (p, q) = (part.get(0, c, y, xx), full.get(0, c, y + 5, xx + 3));
                assert!((p - q).abs() <= 1e-5 * q.abs().max(1.0), "({c},{y},{xx}) {p} vs {q}");
            }
        }
    }
}

#[test]
fn init_is_seeded_and_depth_configurable() {
    let cfg = ModelConfig::default();
    let a = ModelParams::<f32>::init(cfg, 11).unwrap();
    assert_eq!(a, ModelParams::init(cfg, 11).unwrap());
    assert_ne!(a, ModelParams::init(cfg, 12).unwrap());
    let deeper = ModelConfig { n_res_blocks: 3, n_features: 64, ..cfg };
    assert_eq!(deeper.receptive_field(), 21);
    let p = ModelParams::init(deeper, 0).unwrap();
    let x = random_tensor(&mut rng(0), [1, 3, 30, 30], 0.0, 1.0);
    assert_eq!(forward(&p, &x).unwrap().dims(), [1, 31, 10, 10]);
    // PReLU slopes start at 0.25
    assert!(a.views().iter().filter(|v| v.name.ends_with("prelu")).all(|v| v.data.iter().all(|&s| s == 0.25)));
}
