//! Times forward and forward+backward passes of the default network.

use std::time::Instant;

use specrecon::model::{backward_cached, forward_cached, l2_loss};
use specrecon::{ModelConfig, ModelParams, Tensor4};

fn main() {
    let batch: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let size: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(36);
    let params = ModelParams::<f32>::init(ModelConfig::default(), 0).unwrap();
    let x = Tensor4::from_fn([batch, 3, size, size], |[n, c, y, x]| ((n + c * 7 + y * 3 + x) % 13) as f32 / 13.0);
    let reps = 5;
    let t = Instant::now();
    for _ in 0..reps {
        let cache = forward_cached(&params, &x).unwrap();
        let (_, g) = l2_loss(&cache.output, &Tensor4::zeros(batch, 31, size - 16, size - 16)).unwrap();
        backward_cached(&params, &cache, &g).unwrap();
    }
    let step = t.elapsed().as_secs_f64() / reps as f64;
    let t = Instant::now();
    for _ in 0..reps {
        forward_cached(&params, &x).unwrap();
    }
    let fwd = t.elapsed().as_secs_f64() / reps as f64;
    println!("batch {batch} size {size}: forward {:.1} ms, train step {:.1} ms", fwd * 1e3, step * 1e3);
}
