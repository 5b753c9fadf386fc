//! File-level plumbing shared by the command-line tool: data directories,
//! patch pools, run directories and checkpoint discovery.
//!
//! A data directory holds one `<name>.hscb` cube per image. RGB renderings
//! sit next to it as `<name>.rgb.hscb` (float) and `<name>.png` (8-bit).
//!
//! A run directory looks like
//!
//! ```text
//! manifest.json     resolved configuration and source revision
//! split.csv         image → fold assignment used by the run
//! loss.csv          iter,lr,loss
//! checkpoints/      ckpt_<iteration>.srck
//! reports/          metric CSVs and tables
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::checkpoint::{checkpoint_file_name, save_checkpoint, Checkpoint};
use crate::data::augment::{augment, extract_patches};
use crate::data::cube::{load_cube, save_cube, save_rgb_png, HyperCube, RgbImage};
use crate::data::response::{synthesize_rgb, SpectralResponse};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::optim::{loss_csv_line, AdamState, LossRecord, PatchPool, TrainObserver, LOSS_CSV_HEADER};

pub const CUBE_EXT: &str = "hscb";
pub const RGB_SUFFIX: &str = ".rgb.hscb";

/// Revision of the source tree the binary was built from.
pub const SOURCE_REVISION: &str = env!("SPECRECON_SOURCE_REV");

#[derive(Clone, Debug, PartialEq)]
pub struct ImageEntry {
    pub name: String,
    pub cube_path: PathBuf,
}

impl ImageEntry {
    pub fn rgb_path(&self) -> PathBuf {
        self.cube_path.with_file_name(format!("{}{RGB_SUFFIX}", self.name))
    }

    pub fn png_path(&self) -> PathBuf {
        self.cube_path.with_file_name(format!("{}.png", self.name))
    }
}

/// Cubes in `dir`, sorted by name. RGB companions are not listed.
pub fn list_cubes(dir: impl AsRef<Path>) -> Result<Vec<ImageEntry>> {
    let dir = dir.as_ref();
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some(file) = path.file_name().and_then(|f| f.to_str()) else {
            continue;
        };
        if file.ends_with(RGB_SUFFIX) || path.extension().and_then(|e| e.to_str()) != Some(CUBE_EXT) {
            continue;
        }
        let name = file[..file.len() - CUBE_EXT.len() - 1].to_string();
        out.push(ImageEntry { name, cube_path: path });
    }
    out.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(out)
}

/// Writes the float and 8-bit RGB renderings of every cube; returns the
/// written paths.
pub fn synth_rgb_dir(entries: &[ImageEntry], response: &SpectralResponse) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for e in entries {
        let cube = load_cube(&e.cube_path)?;
        let rgb = synthesize_rgb(&cube, response).map_err(|err| Error::Parse {
            path: e.cube_path.clone(),
            msg: err.to_string(),
        })?;
        save_cube(&rgb.to_cube(), e.rgb_path())?;
        save_rgb_png(&rgb, e.png_path())?;
        written.push(e.rgb_path());
        written.push(e.png_path());
    }
    Ok(written)
}

/// Cube plus its RGB rendering: the stored float RGB when present,
/// otherwise synthesized with `response`.
pub fn load_pair(entry: &ImageEntry, response: &SpectralResponse) -> Result<(RgbImage, HyperCube)> {
    let cube = load_cube(&entry.cube_path)?;
    let rgb_path = entry.rgb_path();
    let rgb = if rgb_path.exists() {
        RgbImage::from_cube(&load_cube(&rgb_path)?)?
    } else {
        log::info!("{}: no stored RGB, synthesizing with {}", entry.name, response.name);
        synthesize_rgb(&cube, response)?
    };
    if (rgb.h, rgb.w) != (cube.h, cube.w) {
        return Err(Error::shape("load_pair", "spatial size", cube.h * cube.w, rgb.h * rgb.w));
    }
    Ok((rgb, cube))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatchOptions {
    pub patch_in: usize,
    pub patch_out: usize,
    pub stride: usize,
    pub augment: bool,
}

/// Patch pairs of every image (and of its 31 augmented variants when
/// `augment` is set), each variant patched on the full stride grid.
pub fn build_pool(pairs: &[(RgbImage, HyperCube)], opts: &PatchOptions) -> PatchPool {
    let mut pool = PatchPool::new();
    let mut add = |rgb: &RgbImage, cube: &HyperCube| {
        for p in extract_patches(rgb, cube, opts.patch_in, opts.patch_out, opts.stride) {
            pool.push(p.rgb, p.label);
        }
    };
    for (rgb, cube) in pairs {
        if opts.augment {
            for a in augment(rgb, cube) {
                add(&a.rgb, &a.cube);
            }
        } else {
            add(rgb, cube);
        }
    }
    pool
}

pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for d in [root.clone(), root.join("checkpoints"), root.join("reports")] {
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        Ok(Self { root })
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
    pub fn split_path(&self) -> PathBuf {
        self.root.join("split.csv")
    }
    pub fn loss_path(&self) -> PathBuf {
        self.root.join("loss.csv")
    }
    pub fn checkpoint_dir(&self) -> PathBuf {
        self.root.join("checkpoints")
    }
    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn write_manifest(&self, manifest: &serde_json::Value) -> Result<()> {
        let path = self.manifest_path();
        let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

/// Newest `ckpt_*.srck` in `dir` (highest iteration).
pub fn latest_checkpoint(dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let mut best: Option<PathBuf> = None;
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_ckpt = path
            .file_name()
            .and_then(|f| f.to_str())
            .is_some_and(|f| f.starts_with("ckpt_") && f.ends_with(".srck"));
        if is_ckpt && best.as_ref().is_none_or(|b| path > *b) {
            best = Some(path);
        }
    }
    best.ok_or_else(|| Error::Parse {
        path: dir.to_path_buf(),
        msg: "no checkpoints found".into(),
    })
}

/// A checkpoint file, or a run directory whose newest checkpoint is used.
pub fn resolve_checkpoint(path: impl AsRef<Path>) -> Result<PathBuf> {
    let path = path.as_ref();
    if path.is_dir() {
        let ck = path.join("checkpoints");
        latest_checkpoint(if ck.is_dir() { ck } else { path.to_path_buf() })
    } else if path.exists() {
        Ok(path.to_path_buf())
    } else {
        Err(Error::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)))
    }
}

/// Streams the loss history to `loss.csv` and writes checkpoints.
pub struct RunObserver {
    loss: BufWriter<File>,
    loss_path: PathBuf,
    checkpoint_dir: PathBuf,
}

impl RunObserver {
    /// Appends to an existing `loss.csv` when `resume` is set.
    pub fn new(run: &RunDir, resume: bool) -> Result<Self> {
        let loss_path = run.loss_path();
        let fresh = !resume || !loss_path.exists();
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .append(!fresh)
            .truncate(fresh)
            .open(&loss_path)
            .map_err(|e| Error::io(&loss_path, e))?;
        let mut loss = BufWriter::new(file);
        if fresh {
            writeln!(loss, "{LOSS_CSV_HEADER}").map_err(|e| Error::io(&loss_path, e))?;
        }
        Ok(Self {
            loss,
            loss_path,
            checkpoint_dir: run.checkpoint_dir(),
        })
    }
}

impl TrainObserver for RunObserver {
    fn on_log(&mut self, record: &LossRecord) -> Result<()> {
        log::info!("iter {} lr {:.4e} loss {:.6e}", record.iter, record.lr, record.loss);
        writeln!(self.loss, "{}", loss_csv_line(record)).map_err(|e| Error::io(&self.loss_path, e))?;
        self.loss.flush().map_err(|e| Error::io(&self.loss_path, e))
    }

    fn on_checkpoint(&mut self, iter: u64, params: &ModelParams<f32>, state: &AdamState<f32>) -> Result<()> {
        let path = self.checkpoint_dir.join(checkpoint_file_name(iter));
        log::info!("checkpoint {}", path.display());
        save_checkpoint(
            &Checkpoint {
                params: params.clone(),
                iteration: iter,
                optimizer: Some(state.clone()),
            },
            path,
        )
    }
}
