//! C ABI for `specrecon`.
//!
//! Objects cross the boundary as opaque handles (`SrModel`, `SrCube`) owned
//! by the caller and released with the matching `*_free`. Every fallible
//! call returns an `SrStatus`; on failure `sr_last_error_message` describes
//! the error for the calling thread. Images are planar (`channel, row,
//! column`) `float` buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use specrecon::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use specrecon::data::{load_cube, save_cube, synthesize_rgb, HyperCube, RgbImage, SpectralResponse};
use specrecon::infer::{enhanced_predict, predict_image};
use specrecon::metrics::compute_metrics;
use specrecon::optim::{lr_at, TrainConfig};
use specrecon::{Error, ModelConfig, ModelParams};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Format = 4,
    Io = 5,
    Numerical = 6,
    Panic = 7,
}

impl From<&Error> for SrStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Shape { .. } => SrStatus::Shape,
            Error::Format { .. } | Error::Parse { .. } => SrStatus::Format,
            Error::Io { .. } | Error::Image(_) => SrStatus::Io,
            Error::NonFinite { .. } => SrStatus::Numerical,
            _ => SrStatus::InvalidArgument,
        }
    }
}

/// Trained or freshly initialised network parameters.
pub struct SrModel {
    params: ModelParams<f32>,
}

/// Hyperspectral cube: `bands` planes of `height × width` floats.
pub struct SrCube {
    cube: HyperCube,
}

/// The six per-image error metrics.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SrMetrics {
    pub rmse: f64,
    pub rrmse: f64,
    pub rmse_g: f64,
    pub rrmse_g: f64,
    pub rmse_g_uint8: f64,
    pub rrmse_g_uint8: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Failure(SrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(SrStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SrStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording failures and panics in the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            SrStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            SrStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SrStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next `sr_*` call on the same thread.
#[no_mangle]
pub extern "C" fn sr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn sr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Learning rate at `iter` for a step schedule decaying by `decay_factor`
/// every `decay_every` iterations.
#[no_mangle]
pub extern "C" fn sr_lr_at(lr0: f64, decay_factor: f64, decay_every: u64, iter: u64) -> f64 {
    let cfg = TrainConfig {
        lr0,
        decay_factor,
        decay_every,
        ..TrainConfig::default()
    };
    lr_at(&cfg, iter)
}

/// Xavier-initialised model.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn sr_model_init(
    n_res_blocks: usize,
    n_features: usize,
    n_bottleneck: usize,
    out_channels: usize,
    seed: u64,
    out: *mut *mut SrModel,
) -> SrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = ModelConfig {
            n_res_blocks,
            n_features,
            n_bottleneck,
            out_channels,
        };
        put(
            out,
            SrModel {
                params: ModelParams::init(cfg, seed)?,
            },
        );
        Ok(())
    })
}

/// Loads the parameters of a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` as in `sr_model_init`.
#[no_mangle]
pub unsafe extern "C" fn sr_model_load(path: *const c_char, out: *mut *mut SrModel) -> SrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ck = load_checkpoint(path_arg(path)?)?;
        put(out, SrModel { params: ck.params });
        Ok(())
    })
}

/// Writes the parameters (iteration 0, no optimizer state).
///
/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sr_model_save(model: *const SrModel, path: *const c_char) -> SrStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        save_checkpoint(&Checkpoint::new(m.params.clone()), path_arg(path)?)?;
        Ok(())
    })
}

/// Number of predicted bands, 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sr_model_out_channels(model: *const SrModel) -> usize {
    model.as_ref().map_or(0, |m| m.params.config.out_channels)
}

/// Side of the receptive field (minimum input size), 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sr_model_receptive_field(model: *const SrModel) -> usize {
    model.as_ref().map_or(0, |m| m.params.config.receptive_field())
}

/// # Safety
/// `model` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn sr_model_free(model: *mut SrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Full-resolution prediction from a planar `3 × height × width` RGB
/// buffer. With `enhanced != 0` the eight rotated/flipped predictions are
/// averaged.
///
/// # Safety
/// `rgb` must point to `3 * height * width` floats; `out` as in
/// `sr_model_init`.
#[no_mangle]
pub unsafe extern "C" fn sr_predict(
    model: *const SrModel,
    rgb: *const f32,
    height: usize,
    width: usize,
    enhanced: i32,
    out: *mut *mut SrCube,
) -> SrStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if rgb.is_null() {
            return Err(null("rgb"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let len = 3usize
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .ok_or_else(|| Failure(SrStatus::InvalidArgument, "image size overflows".into()))?;
        let img = RgbImage::new(height, width, std::slice::from_raw_parts(rgb, len).to_vec())?;
        let cube = if enhanced != 0 {
            enhanced_predict(&m.params, &img)?
        } else {
            predict_image(&m.params, &img)?
        };
        put(out, SrCube { cube });
        Ok(())
    })
}

/// Cube from caller buffers. `wavelengths` may be null for the default
/// 400 nm + 10 nm grid.
///
/// # Safety
/// `wavelengths` must be null or point to `bands` floats, `data` to
/// `bands * height * width` floats.
#[no_mangle]
pub unsafe extern "C" fn sr_cube_new(
    height: usize,
    width: usize,
    bands: usize,
    wavelengths: *const f32,
    data: *const f32,
    out: *mut *mut SrCube,
) -> SrStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let wl = if wavelengths.is_null() {
            specrecon::data::default_wavelengths(bands)
        } else {
            std::slice::from_raw_parts(wavelengths, bands).to_vec()
        };
        let len = bands
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .ok_or_else(|| Failure(SrStatus::InvalidArgument, "cube size overflows".into()))?;
        let cube = HyperCube::new(height, width, wl, std::slice::from_raw_parts(data, len).to_vec())?;
        put(out, SrCube { cube });
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` as in `sr_model_init`.
#[no_mangle]
pub unsafe extern "C" fn sr_cube_load(path: *const c_char, out: *mut *mut SrCube) -> SrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        put(
            out,
            SrCube {
                cube: load_cube(path_arg(path)?)?,
            },
        );
        Ok(())
    })
}

/// # Safety
/// `cube` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sr_cube_save(cube: *const SrCube, path: *const c_char) -> SrStatus {
    guard(|| {
        let c = cube.as_ref().ok_or_else(|| null("cube"))?;
        save_cube(&c.cube, path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `cube` must be a live handle; each output pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn sr_cube_dims(
    cube: *const SrCube,
    height: *mut usize,
    width: *mut usize,
    bands: *mut usize,
) -> SrStatus {
    guard(|| {
        let c = cube.as_ref().ok_or_else(|| null("cube"))?;
        for (p, v) in [(height, c.cube.h), (width, c.cube.w), (bands, c.cube.bands())] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Borrowed pointer to the planar data (`bands * height * width` floats),
/// valid while the handle lives. Null for a null handle.
///
/// # Safety
/// `cube` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sr_cube_data(cube: *const SrCube) -> *const f32 {
    cube.as_ref().map_or(ptr::null(), |c| c.cube.data.as_ptr())
}

/// Borrowed pointer to the `bands` wavelengths in nm.
///
/// # Safety
/// `cube` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sr_cube_wavelengths(cube: *const SrCube) -> *const f32 {
    cube.as_ref().map_or(ptr::null(), |c| c.cube.wavelengths.as_ptr())
}

/// # Safety
/// `cube` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn sr_cube_free(cube: *mut SrCube) {
    if !cube.is_null() {
        drop(Box::from_raw(cube));
    }
}

/// RGB rendering under the CIE 1964 10° observer, max-normalised, written
/// planar into `rgb_out` (`3 * height * width` floats).
///
/// # Safety
/// `cube` must be a live handle; `rgb_out` must hold `len` floats.
#[no_mangle]
pub unsafe extern "C" fn sr_synthesize_rgb(cube: *const SrCube, rgb_out: *mut f32, len: usize) -> SrStatus {
    guard(|| {
        let c = cube.as_ref().ok_or_else(|| null("cube"))?;
        if rgb_out.is_null() {
            return Err(null("rgb_out"));
        }
        let rgb = synthesize_rgb(&c.cube, &SpectralResponse::cie1964_10deg())?;
        if len != rgb.data.len() {
            return Err(Failure(
                SrStatus::Shape,
                format!("rgb_out holds {len} floats, need {}", rgb.data.len()),
            ));
        }
        std::slice::from_raw_parts_mut(rgb_out, len).copy_from_slice(&rgb.data);
        Ok(())
    })
}

/// All six metrics of `est` against `gt`.
///
/// # Safety
/// `est` and `gt` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sr_compute_metrics(est: *const SrCube, gt: *const SrCube, out: *mut SrMetrics) -> SrStatus {
    guard(|| {
        let e = est.as_ref().ok_or_else(|| null("est"))?;
        let g = gt.as_ref().ok_or_else(|| null("gt"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let m = compute_metrics(&e.cube, &g.cube)?;
        *out = SrMetrics {
            rmse: m.rmse,
            rrmse: m.rrmse,
            rmse_g: m.rmse_g,
            rrmse_g: m.rrmse_g,
            rmse_g_uint8: m.rmse_g_uint8,
            rrmse_g_uint8: m.rrmse_g_uint8,
        };
        Ok(())
    })
}
