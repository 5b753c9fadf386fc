//! Reconstruction error metrics and dataset evaluation.
//!
//! Per image, with `e` the estimate, `g` the ground truth and means taken
//! over every pixel of every band:
//!
//! * `rmse          = sqrt(mean((e − g)²))`
//! * `rrmse         = sqrt(mean(((e − g) / g)²))`, skipping entries with `g == 0`
//! * `rmse_g        = rmse` after scaling both cubes by `255 / max(g)`
//! * `rrmse_g       = rmse / mean(g)`
//! * `rmse_g_uint8  = rmse` after scaling by `255 / max(g)`, rounding half
//!   away from zero and clamping to `[0, 255]` (both cubes)
//! * `rrmse_g_uint8 = rmse_g_uint8 / mean(quantized g)`
//!
//! Dataset values come in two flavours: the arithmetic mean of per-image
//! values (primary) and a pooled value computed from sums over all pixels of
//! all images.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::cube::{HyperCube, RgbImage};
use crate::data::folds::{Assignment, FoldSplit};
use crate::error::{Error, Result};
use crate::infer::{enhanced_predict, predict_image, Predictor};

pub const METRIC_NAMES: [&str; 6] = ["rmse", "rrmse", "rmse_g", "rrmse_g", "rmse_g_uint8", "rrmse_g_uint8"];

/// Header lines written in front of every metric CSV.
pub const METRIC_DEFINITIONS: &str = "\
# rmse = sqrt(mean((est-gt)^2))
# rrmse = sqrt(mean(((est-gt)/gt)^2)) over entries with gt != 0
# rmse_g = rmse after scaling est and gt by 255/max(gt)
# rrmse_g = rmse / mean(gt)
# rmse_g_uint8 = rmse after scaling by 255/max(gt), rounding half away from zero, clamping to [0,255]
# rrmse_g_uint8 = rmse_g_uint8 / mean(quantized gt)
# image=@mean rows average per-image values (primary); image=@pooled rows pool all pixels of all images
";

/// Sufficient statistics of one image comparison.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorSums {
    pub count: u64,
    pub sq: f64,
    pub rel_sq: f64,
    pub rel_count: u64,
    pub sq_g: f64,
    pub gt_sum: f64,
    pub sq_u8: f64,
    pub gt_u8_sum: f64,
}

impl ErrorSums {
    fn merge(&mut self, o: &ErrorSums) {
        self.count += o.count;
        self.sq += o.sq;
        self.rel_sq += o.rel_sq;
        self.rel_count += o.rel_count;
        self.sq_g += o.sq_g;
        self.gt_sum += o.gt_sum;
        self.sq_u8 += o.sq_u8;
        self.gt_u8_sum += o.gt_u8_sum;
    }

    pub fn metrics(&self) -> Metrics {
        let n = self.count as f64;
        let rmse = (self.sq / n).sqrt();
        let rmse_u8 = (self.sq_u8 / n).sqrt();
        let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
        Metrics {
            rmse,
            rrmse: if self.rel_count > 0 {
                (self.rel_sq / self.rel_count as f64).sqrt()
            } else {
                0.0
            },
            rmse_g: (self.sq_g / n).sqrt(),
            rrmse_g: ratio(rmse, self.gt_sum / n),
            rmse_g_uint8: rmse_u8,
            rrmse_g_uint8: ratio(rmse_u8, self.gt_u8_sum / n),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Metrics {
    pub rmse: f64,
    pub rrmse: f64,
    pub rmse_g: f64,
    pub rrmse_g: f64,
    pub rmse_g_uint8: f64,
    pub rrmse_g_uint8: f64,
}

impl Metrics {
    pub fn values(&self) -> [f64; 6] {
        [self.rmse, self.rrmse, self.rmse_g, self.rrmse_g, self.rmse_g_uint8, self.rrmse_g_uint8]
    }

    fn from_values(v: [f64; 6]) -> Self {
        Self {
            rmse: v[0],
            rrmse: v[1],
            rmse_g: v[2],
            rrmse_g: v[3],
            rmse_g_uint8: v[4],
            rrmse_g_uint8: v[5],
        }
    }
}

/// `v · scale` rounded half away from zero and clamped to `0..=255`.
pub fn quantize_u8(v: f64, scale: f64) -> f64 {
    (v * scale).round().clamp(0.0, 255.0)
}

fn check_dims(est: &HyperCube, gt: &HyperCube) -> Result<()> {
    for (axis, e, g) in [("height", est.h, gt.h), ("width", est.w, gt.w), ("bands", est.bands(), gt.bands())] {
        if e != g {
            return Err(Error::shape("compute_metrics", axis, g, e));
        }
    }
    if gt.data.is_empty() {
        return Err(Error::invalid("compute_metrics", "empty cube"));
    }
    Ok(())
}

pub fn error_sums(est: &HyperCube, gt: &HyperCube) -> Result<ErrorSums> {
    check_dims(est, gt)?;
    let gmax = gt.data.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b)) as f64;
    if !(gmax > 0.0) || !gmax.is_finite() {
        return Err(Error::invalid("compute_metrics", format!("ground truth maximum {gmax} is not positive")));
    }
    let scale = 255.0 / gmax;
    let mut s = ErrorSums {
        count: gt.data.len() as u64,
        ..Default::default()
    };
    for (&e, &g) in est.data.iter().zip(&gt.data) {
        let (e, g) = (e as f64, g as f64);
        let d = e - g;
        s.sq += d * d;
        if g != 0.0 {
            s.rel_sq += (d / g) * (d / g);
            s.rel_count += 1;
        }
        let dg = (e - g) * scale;
        s.sq_g += dg * dg;
        s.gt_sum += g;
        let (eq, gq) = (quantize_u8(e, scale), quantize_u8(g, scale));
        s.sq_u8 += (eq - gq) * (eq - gq);
        s.gt_u8_sum += gq;
    }
    let skipped = s.count - s.rel_count;
    if skipped > 0 {
        log::warn!("{skipped} zero ground-truth entries excluded from rrmse");
    }
    Ok(s)
}

/// All six metrics for one image pair.
pub fn compute_metrics(est: &HyperCube, gt: &HyperCube) -> Result<Metrics> {
    Ok(error_sums(est, gt)?.metrics())
}

/// Root-mean-square error per band.
pub fn per_band_rmse(est: &HyperCube, gt: &HyperCube) -> Result<Vec<f64>> {
    check_dims(est, gt)?;
    let hw = gt.h * gt.w;
    Ok((0..gt.bands())
        .map(|b| {
            let sq: f64 = est.data[b * hw..(b + 1) * hw]
                .iter()
                .zip(&gt.data[b * hw..(b + 1) * hw])
                .map(|(&e, &g)| (e as f64 - g as f64).powi(2))
                .sum();
            (sq / hw as f64).sqrt()
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageRow {
    pub name: String,
    pub sums: ErrorSums,
    pub metrics: Metrics,
    /// Entries excluded from `rrmse` because the ground truth was zero.
    pub zero_gt: u64,
    pub wavelengths: Vec<f32>,
    pub band_rmse: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub bands: usize,
    pub rows: Vec<ImageRow>,
}

impl MetricReport {
    pub fn new(bands: usize) -> Self {
        Self {
            bands,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, est: &HyperCube, gt: &HyperCube) -> Result<&ImageRow> {
        let sums = error_sums(est, gt)?;
        self.rows.push(ImageRow {
            name: name.into(),
            metrics: sums.metrics(),
            zero_gt: sums.count - sums.rel_count,
            sums,
            wavelengths: gt.wavelengths.clone(),
            band_rmse: per_band_rmse(est, gt)?,
        });
        Ok(self.rows.last().expect("just pushed"))
    }

    pub fn image_count(&self) -> usize {
        self.rows.len()
    }

    /// Arithmetic mean of the per-image values.
    pub fn mean(&self) -> Metrics {
        let mut acc = [0.0; 6];
        for r in &self.rows {
            for (a, v) in acc.iter_mut().zip(r.metrics.values()) {
                *a += v;
            }
        }
        let n = self.rows.len().max(1) as f64;
        Metrics::from_values(acc.map(|a| a / n))
    }

    /// Metrics over all pixels of all images at once.
    pub fn pooled(&self) -> Metrics {
        let mut s = ErrorSums::default();
        for r in &self.rows {
            s.merge(&r.sums);
        }
        if s.count == 0 {
            return Metrics::default();
        }
        s.metrics()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(METRIC_DEFINITIONS);
        out.push_str("image,metric,value\n");
        let mut emit = |name: &str, m: &Metrics| {
            for (k, v) in METRIC_NAMES.iter().zip(m.values()) {
                let _ = writeln!(out, "{name},{k},{v}");
            }
        };
        for r in &self.rows {
            emit(&r.name, &r.metrics);
        }
        emit("@mean", &self.mean());
        emit("@pooled", &self.pooled());
        out
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// `image,wavelength_nm,rmse` rows.
    pub fn per_band_csv(&self) -> String {
        let mut out = String::from("image,wavelength_nm,rmse\n");
        for r in &self.rows {
            for (w, v) in r.wavelengths.iter().zip(&r.band_rmse) {
                let _ = writeln!(out, "{},{w},{v}", r.name);
            }
        }
        out
    }

    /// Fixed-width table for terminals.
    pub fn to_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.name.len()).chain([24]).max().unwrap_or(24);
        let mut out = format!("{:<width$}", "image");
        for k in METRIC_NAMES {
            let _ = write!(out, " {k:>13}");
        }
        out.push('\n');
        let mut line = |name: &str, m: &Metrics| {
            let _ = write!(out, "{name:<width$}");
            for v in m.values() {
                let _ = write!(out, " {v:>13.6}");
            }
            out.push('\n');
        };
        for r in &self.rows {
            line(&r.name, &r.metrics);
        }
        line("mean of images (primary)", &self.mean());
        line("pooled over pixels", &self.pooled());
        let _ = writeln!(out, "{} images, {} bands", self.image_count(), self.bands);
        out
    }
}

/// One evaluation image.
pub struct EvalItem<'a> {
    pub name: &'a str,
    pub rgb: &'a RgbImage,
    pub gt: &'a HyperCube,
}

/// Scores every image with the model that held it out. `models[k]` is the
/// model of fold `k`. Images marked train-only are skipped.
pub fn evaluate_dataset<P: Predictor>(
    models: &[Option<P>],
    folds: &FoldSplit,
    items: &[EvalItem<'_>],
    enhanced: bool,
) -> Result<MetricReport> {
    let bands = items.first().map(|i| i.gt.bands()).unwrap_or(0);
    let mut report = MetricReport::new(bands);
    for item in items {
        let k = match folds.assignment(item.name) {
            Some(Assignment::Held(k)) => k,
            Some(Assignment::TrainOnly) => continue,
            None => return Err(Error::invalid("evaluate_dataset", format!("image `{}` is not in the split", item.name))),
        };
        let model = models.get(k).and_then(|m| m.as_ref()).ok_or(Error::MissingModel(k))?;
        let mut est = if enhanced {
            enhanced_predict(model, item.rgb)?
        } else {
            predict_image(model, item.rgb)?
        };
        est.wavelengths = item.gt.wavelengths.clone();
        report.push(item.name, &est, item.gt)?;
    }
    Ok(report)
}
