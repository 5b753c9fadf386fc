//! Central finite-difference checks of every reverse pass, in `f64`.
//!
//! Each check contracts the op output with a fixed random tensor `R`, so the
//! scalar objective is `L = Σ out · R` and its analytic gradient is the
//! backward pass fed with `R`.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conv::{conv2d_valid_backward, conv2d_valid_forward};
use crate::error::Result;
use crate::model::{backward, forward, l2_loss, ModelConfig, ModelParams};
use crate::ops::{add, center_crop, center_crop_backward, prelu_backward, prelu_forward};
use crate::tensor::{ConvFilter, PReluSlopes, Tensor4};

/// Deliberate bugs for checking that the harness notices them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Scales the analytic convolution gradients by 1.05.
    ConvBackward,
}

#[derive(Clone, Debug)]
pub struct GradcheckOptions {
    pub seed: u64,
    pub tolerance: f64,
    /// Denominator floor for the relative error.
    pub abs_floor: f64,
    pub step: f64,
    /// Coordinates checked per model tensor (small op tensors are checked
    /// exhaustively).
    pub samples_per_tensor: usize,
    pub fault: Option<Fault>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            tolerance: 1e-4,
            abs_floor: 1e-7,
            step: 1e-4,
            samples_per_tensor: 16,
            fault: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpResult {
    pub op: String,
    pub checked: usize,
    /// Coordinates left out because every step straddled a kink.
    pub skipped: usize,
    pub max_rel_err: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub seed: u64,
    pub tolerance: f64,
    pub results: Vec<OpResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn worst(&self) -> Option<&OpResult> {
        self.results.iter().max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }

    pub fn failures(&self) -> Vec<&OpResult> {
        self.results.iter().filter(|r| !r.passed).collect()
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            let _ = writeln!(
                out,
                "{:<6} {:<44} checked {:>4} skipped {:>2}  max rel err {:.3e}",
                if r.passed { "ok" } else { "FAIL" },
                r.op,
                r.checked,
                r.skipped,
                r.max_rel_err
            );
        }
        let worst = self.worst().map(|r| r.max_rel_err).unwrap_or(0.0);
        let _ = writeln!(
            out,
            "gradcheck seed {}: {} ({} ops, worst {:.3e}, tolerance {:.0e})",
            self.seed,
            if self.passed() { "PASS" } else { "FAIL" },
            self.results.len(),
            worst,
            self.tolerance
        );
        out
    }
}

pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

const KINK_RETRIES: i32 = 3;

struct Checker<'a> {
    opts: &'a GradcheckOptions,
    rng: ChaCha8Rng,
    results: Vec<OpResult>,
}

impl Checker<'_> {
    fn uniform(&mut self, dims: [usize; 4], lo: f64, hi: f64) -> Tensor4<f64> {
        Tensor4::from_fn(dims, |_| self.rng.gen_range(lo..hi))
    }

    /// Values in ±[0.1, 1]: keeps finite differences off the PReLU kink.
    fn away_from_zero(&mut self, dims: [usize; 4]) -> Tensor4<f64> {
        Tensor4::from_fn(dims, |_| {
            let m = self.rng.gen_range(0.1..1.0);
            if self.rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
    }

    fn coords(&mut self, len: usize, limit: Option<usize>) -> Vec<usize> {
        match limit {
            Some(k) if k < len => {
                let mut v = sample(&mut self.rng, len, k).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..len).collect(),
        }
    }

    /// Compares `analytic[i]` with `(L(+h) − L(−h)) / 2h` on `coords`, where
    /// `loss(i, d)` evaluates the objective with coordinate `i` moved by `d`.
    ///
    /// With `piecewise_linear`, a coordinate whose one-sided slopes disagree
    /// has a kink inside `[−h, h]`; the step shrinks tenfold and the
    /// coordinate is skipped if every step straddles a kink.
    fn compare(
        &mut self,
        op: impl Into<String>,
        analytic: &[f64],
        coords: &[usize],
        piecewise_linear: bool,
        mut loss: impl FnMut(usize, f64) -> Result<f64>,
    ) -> Result<()> {
        let (tol, floor) = (self.opts.tolerance, self.opts.abs_floor);
        let mut worst: f64 = 0.0;
        let mut skipped = 0;
        for &i in coords {
            let base = if piecewise_linear { loss(i, 0.0)? } else { 0.0 };
            let mut err = None;
            for k in 0..KINK_RETRIES {
                let h = self.opts.step / 10f64.powi(k);
                let (lp, lm) = (loss(i, h)?, loss(i, -h)?);
                if piecewise_linear && rel_err((lp - base) / h, (base - lm) / h, floor) > tol {
                    continue;
                }
                err = Some(rel_err(analytic[i], (lp - lm) / (2.0 * h), floor));
                break;
            }
            match err {
                Some(e) => worst = worst.max(e),
                None => skipped += 1,
            }
        }
        let checked = coords.len() - skipped;
        self.results.push(OpResult {
            op: op.into(),
            checked,
            skipped,
            max_rel_err: worst,
            passed: worst < tol && checked > 0,
        });
        Ok(())
    }
}

fn dot(a: &Tensor4<f64>, b: &Tensor4<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn nudged(t: &Tensor4<f64>, i: usize, d: f64) -> Tensor4<f64> {
    let mut t = t.clone();
    t.data_mut()[i] += d;
    t
}

fn check_conv(ck: &mut Checker<'_>, case: usize) -> Result<()> {
    let k = [1, 3, 5][ck.rng.gen_range(0..3)];
    let (n, ci, co) = (ck.rng.gen_range(1..3), ck.rng.gen_range(1..4), ck.rng.gen_range(1..4));
    let (h, w) = (k + ck.rng.gen_range(0..4), k + ck.rng.gen_range(0..4));
    let x = ck.uniform([n, ci, h, w], -1.0, 1.0);
    let wt = ck.uniform([co, ci, k, k], -1.0, 1.0);
    let filter = ConvFilter::new([co, ci, k, k], wt.data().to_vec(), ck.uniform([1, 1, 1, co], -1.0, 1.0).into_vec())?;
    let r = ck.uniform([n, co, h - k + 1, w - k + 1], -1.0, 1.0);
    let mut g = conv2d_valid_backward(&x, &filter, &r)?;
    if ck.opts.fault == Some(Fault::ConvBackward) {
        g.input.data_mut().iter_mut().for_each(|v| *v *= 1.05);
        g.weight.iter_mut().for_each(|v| *v *= 1.05);
        g.bias.iter_mut().for_each(|v| *v *= 1.05);
    }
    let tag = format!("conv2d[{n}x{ci}x{h}x{w},k{k},out{co}]#{case}");
    let coords = ck.coords(x.data().len(), None);
    ck.compare(format!("{tag}/input"), g.input.data(), &coords, true, |i, d| {
        Ok(dot(&conv2d_valid_forward(&nudged(&x, i, d), &filter)?, &r))
    })?;
    let coords = ck.coords(filter.weight.len(), None);
    ck.compare(format!("{tag}/weight"), &g.weight, &coords, true, |i, d| {
        let mut f = filter.clone();
        f.weight[i] += d;
        Ok(dot(&conv2d_valid_forward(&x, &f)?, &r))
    })?;
    let coords = ck.coords(co, None);
    ck.compare(format!("{tag}/bias"), &g.bias, &coords, true, |i, d| {
        let mut f = filter.clone();
        f.bias[i] += d;
        Ok(dot(&conv2d_valid_forward(&x, &f)?, &r))
    })
}

fn check_prelu(ck: &mut Checker<'_>) -> Result<()> {
    let dims = [2, 3, 4, 5];
    let x = ck.away_from_zero(dims);
    let slopes = PReluSlopes::new((0..3).map(|_| ck.rng.gen_range(0.05..0.5)).collect());
    let r = ck.uniform(dims, -1.0, 1.0);
    let g = prelu_backward(&x, &slopes, &r)?;
    let coords = ck.coords(x.data().len(), None);
    ck.compare("prelu/x", g.x.data(), &coords, true, |i, d| Ok(dot(&prelu_forward(&nudged(&x, i, d), &slopes)?, &r)))?;
    ck.compare("prelu/slopes", &g.slopes, &[0, 1, 2], true, |i, d| {
        let mut s = slopes.clone();
        s.a[i] += d;
        Ok(dot(&prelu_forward(&x, &s)?, &r))
    })
}

fn check_crop_add_loss(ck: &mut Checker<'_>) -> Result<()> {
    let x = ck.uniform([2, 2, 9, 7], -1.0, 1.0);
    let r = ck.uniform([2, 2, 5, 3], -1.0, 1.0);
    let g = center_crop_backward(&r, 9, 7)?;
    let coords = ck.coords(x.data().len(), None);
    ck.compare("center_crop/x", g.data(), &coords, true, |i, d| Ok(dot(&center_crop(&nudged(&x, i, d), 5, 3)?, &r)))?;

    let y = ck.uniform([2, 2, 9, 7], -1.0, 1.0);
    let r = ck.uniform([2, 2, 9, 7], -1.0, 1.0);
    // d(Σ (x + y)·r)/dx = r
    ck.compare("add/x", r.data(), &coords, true, |i, d| Ok(dot(&add(&nudged(&x, i, d), &y)?, &r)))?;

    let label = ck.uniform([2, 2, 9, 7], -1.0, 1.0);
    let (_, g) = l2_loss(&x, &label)?;
    ck.compare("l2_loss/pred", g.data(), &coords, false, |i, d| Ok(l2_loss(&nudged(&x, i, d), &label)?.0))
}

fn check_model(ck: &mut Checker<'_>) -> Result<()> {
    let config = ModelConfig {
        n_res_blocks: 2,
        n_features: 6,
        n_bottleneck: 4,
        out_channels: 5,
    };
    let mut params = ModelParams::<f64>::init(config, ck.opts.seed)?;
    // PReLU slopes and biases away from their initial constants
    for v in params.views_mut() {
        if !v.name.ends_with(".weight") {
            for x in v.data.iter_mut() {
                *x = ck.rng.gen_range(0.05..0.5);
            }
        }
    }
    let rf = config.receptive_field();
    let side = rf + 2;
    let x = ck.uniform([2, 3, side, side], 0.0, 1.0);
    let s = config.shrinkage();
    let r = ck.uniform([2, config.out_channels, side - s, side - s], -1.0, 1.0);
    let g = backward(&params, &x, &r)?;
    let limit = Some(ck.opts.samples_per_tensor);

    let analytic: Vec<(String, Vec<f64>)> =
        g.params.views().into_iter().map(|v| (v.name, v.data.to_vec())).collect();
    for (t, (name, grad)) in analytic.iter().enumerate() {
        let coords = ck.coords(grad.len(), limit);
        ck.compare(format!("model/{name}"), grad, &coords, true, |i, d| {
            let mut p = params.clone();
            p.views_mut()[t].data[i] += d;
            Ok(dot(&forward(&p, &x)?, &r))
        })?;
    }
    let coords = ck.coords(x.data().len(), limit.map(|k| 4 * k));
    ck.compare("model/input", g.input.data(), &coords, true, |i, d| Ok(dot(&forward(&params, &nudged(&x, i, d))?, &r)))?;
    Ok(())
}

/// Runs every check. Deterministic for a fixed `opts`.
pub fn run_gradcheck(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let mut ck = Checker {
        opts,
        rng: ChaCha8Rng::seed_from_u64(opts.seed),
        results: Vec::new(),
    };
    for case in 0..3 {
        check_conv(&mut ck, case)?;
    }
    check_prelu(&mut ck)?;
    check_crop_add_loss(&mut ck)?;
    check_model(&mut ck)?;
    Ok(GradcheckReport {
        seed: opts.seed,
        tolerance: opts.tolerance,
        results: ck.results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rel_err_floor() {
        assert_eq!(rel_err(1.0, 1.0, 1e-7), 0.0);
        assert_eq!(rel_err(2.0, 1.0, 1e-7), 0.5);
        assert!((rel_err(1e-9, 0.0, 1e-7) - 1e-2).abs() < 1e-15);
    }

    #[test]
    fn fault_is_caught_and_named() {
        let report = run_gradcheck(&GradcheckOptions {
            fault: Some(Fault::ConvBackward),
            samples_per_tensor: 2,
            ..Default::default()
        })
        .unwrap();
        assert!(!report.passed());
        assert!(report.failures().iter().all(|r| r.op.starts_with("conv2d")));
        assert!(report.summary().contains("FAIL"));
    }
}
