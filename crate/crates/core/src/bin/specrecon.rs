//! Command-line frontend: RGB synthesis, training, prediction, evaluation
//! and the gradient self-check.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 runtime or
//! numerical failure.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use specrecon::checkpoint::{checkpoint_file_name, load_checkpoint, save_checkpoint, Checkpoint};
use specrecon::data::{load_cube, load_rgb_png, make_two_fold, save_cube, FoldSplit, HyperCube, RgbImage, SpectralResponse};
use specrecon::gradcheck::{run_gradcheck, Fault, GradcheckOptions};
use specrecon::infer::{enhanced_predict, predict_image, CountingPredictor};
use specrecon::metrics::{evaluate_dataset, EvalItem};
use specrecon::optim::{train, AdamState, BatchSource, TrainConfig, TrainStart};
use specrecon::workflow::{
    build_pool, list_cubes, load_pair, resolve_checkpoint, synth_rgb_dir, ImageEntry, PatchOptions, RunDir,
    RunObserver, SOURCE_REVISION,
};
use specrecon::{Error, ModelConfig, ModelParams, Result};

#[derive(Parser, Debug)]
#[command(name = "specrecon", version, about = "RGB to hyperspectral reconstruction with a shallow residual CNN")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render every cube in a data directory to float and 8-bit RGB.
    SynthRgb {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        response: ResponseArgs,
    },
    /// Train the model of one fold.
    Train(TrainArgs),
    /// Predict a cube from one RGB image.
    Predict {
        /// Checkpoint file or run directory.
        #[arg(long)]
        model: PathBuf,
        /// `.png` or 3-band `.hscb` image.
        #[arg(long)]
        rgb: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Average the eight rotated/flipped predictions.
        #[arg(long)]
        enhanced: bool,
    },
    /// Score held-out images with their fold's model.
    Eval(EvalArgs),
    /// Finite-difference check of every backward pass.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        samples_per_tensor: usize,
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<FaultArg>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FaultArg {
    ConvBackward,
}

#[derive(Args, Debug)]
struct ResponseArgs {
    /// `cie1964` (built-in 10° observer) or a CSV file `wavelength_nm,c1,c2,c3`.
    #[arg(long, default_value = "cie1964")]
    response: String,
}

impl ResponseArgs {
    fn load(&self) -> Result<SpectralResponse> {
        match self.response.as_str() {
            "cie1964" => Ok(SpectralResponse::cie1964_10deg()),
            path => SpectralResponse::from_csv(path),
        }
    }
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long, alias = "res-blocks", default_value_t = ModelConfig::default().n_res_blocks)]
    n_res_blocks: usize,
    #[arg(long, alias = "features", default_value_t = ModelConfig::default().n_features)]
    n_features: usize,
    #[arg(long, alias = "bottleneck", default_value_t = ModelConfig::default().n_bottleneck)]
    n_bottleneck: usize,
    #[arg(long, default_value_t = ModelConfig::default().out_channels)]
    out_channels: usize,
}

impl ModelArgs {
    fn config(&self) -> ModelConfig {
        ModelConfig {
            n_res_blocks: self.n_res_blocks,
            n_features: self.n_features,
            n_bottleneck: self.n_bottleneck,
            out_channels: self.out_channels,
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    run_dir: PathBuf,
    /// Split file; default is a seeded two-fold split (reused from the run
    /// directory when resuming).
    #[arg(long)]
    split: Option<PathBuf>,
    /// Which fold's model to train: it never sees the images of its fold.
    #[arg(long, default_value_t = 0)]
    fold: usize,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = TrainConfig::default().lr0)]
    lr0: f64,
    #[arg(long, default_value_t = TrainConfig::default().decay_factor)]
    decay_factor: f64,
    #[arg(long, default_value_t = TrainConfig::default().decay_every)]
    decay_every: u64,
    #[arg(long, default_value_t = TrainConfig::default().total_iters)]
    total_iters: u64,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch_size: usize,
    /// Input patch side; defaults to `patch_out` plus the model shrinkage.
    #[arg(long)]
    patch_in: Option<usize>,
    /// Label patch side; defaults to `patch_in` minus the model shrinkage.
    #[arg(long)]
    patch_out: Option<usize>,
    #[arg(long, default_value_t = 20)]
    stride: usize,
    #[arg(long, default_value_t = TrainConfig::default().seed)]
    seed: u64,
    #[arg(long, default_value_t = TrainConfig::default().log_every)]
    log_every: u64,
    #[arg(long, default_value_t = TrainConfig::default().checkpoint_every)]
    checkpoint_every: u64,
    /// Skip the rotation/flip/downscale augmentation.
    #[arg(long)]
    no_augment: bool,
    /// Continue from a checkpoint (file or run directory); its model
    /// configuration and iteration count take precedence.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[command(flatten)]
    response: ResponseArgs,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    split: PathBuf,
    /// Checkpoint file or run directory, once per fold in fold order.
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
    #[arg(long)]
    run_dir: PathBuf,
    /// Average the eight rotated/flipped predictions per image.
    #[arg(long)]
    enhanced: bool,
    #[command(flatten)]
    response: ResponseArgs,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::SynthRgb { data, response } => cmd_synth_rgb(&data, &response),
        Command::Train(args) => cmd_train(&args),
        Command::Predict {
            model,
            rgb,
            out,
            enhanced,
        } => cmd_predict(&model, &rgb, &out, enhanced),
        Command::Eval(args) => cmd_eval(&args),
        Command::Gradcheck {
            seed,
            samples_per_tensor,
            inject_fault,
        } => cmd_gradcheck(seed, samples_per_tensor, inject_fault),
    }
}

fn cmd_synth_rgb(data: &Path, response: &ResponseArgs) -> Result<ExitCode> {
    let resp = response.load()?;
    let entries = list_cubes(data)?;
    let written = synth_rgb_dir(&entries, &resp)?;
    let manifest = json!({
        "command": "synth-rgb",
        "version": env!("CARGO_PKG_VERSION"),
        "source_revision": SOURCE_REVISION,
        "data": data,
        "response": response.response,
        "images": entries.iter().map(|e| &e.name).collect::<Vec<_>>(),
    });
    let path = data.join("synth_rgb.manifest.json");
    write_json(&path, &manifest)?;
    println!("rendered {} images ({} files)", entries.len(), written.len());
    Ok(ExitCode::SUCCESS)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("json serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Entries named by `names`, in that order; every name must have a cube.
fn select<'a>(entries: &'a [ImageEntry], names: &[&str]) -> Result<Vec<&'a ImageEntry>> {
    let by_name: HashMap<&str, &ImageEntry> = entries.iter().map(|e| (e.name.as_str(), e)).collect();
    names
        .iter()
        .map(|n| {
            by_name
                .get(n)
                .copied()
                .ok_or_else(|| Error::Config(format!("split lists `{n}` but the data directory has no `{n}.hscb`")))
        })
        .collect()
}

fn resolve_patches(args: &TrainArgs, model: &ModelConfig) -> Result<(usize, usize)> {
    let s = model.shrinkage();
    match (args.patch_in, args.patch_out) {
        (Some(i), Some(o)) => Ok((i, o)),
        (Some(i), None) if i > s => Ok((i, i - s)),
        (Some(i), None) => Err(Error::Config(format!("patch_in {i} must exceed the model shrinkage {s}"))),
        (None, Some(o)) => Ok((o + s, o)),
        (None, None) => {
            let d = TrainConfig::default();
            Ok((d.patch_out + s, d.patch_out))
        }
    }
}

fn cmd_train(args: &TrainArgs) -> Result<ExitCode> {
    let run = RunDir::create(&args.run_dir)?;
    let resumed = match &args.resume {
        Some(p) => Some(load_checkpoint(resolve_checkpoint(p)?)?),
        None => None,
    };
    let model_cfg = match &resumed {
        Some(ck) => {
            if ck.params.config != args.model.config() {
                log::warn!("using the checkpoint's model configuration {:?}", ck.params.config);
            }
            ck.params.config
        }
        None => args.model.config(),
    };
    model_cfg.validate()?;
    let (patch_in, patch_out) = resolve_patches(args, &model_cfg)?;
    let config = TrainConfig {
        lr0: args.lr0,
        decay_factor: args.decay_factor,
        decay_every: args.decay_every,
        total_iters: args.total_iters,
        batch_size: args.batch_size,
        patch_in,
        patch_out,
        seed: args.seed,
        log_every: args.log_every,
        checkpoint_every: args.checkpoint_every,
    };
    config.validate(&model_cfg)?;

    let entries = list_cubes(&args.data)?;
    let split = match &args.split {
        Some(p) => FoldSplit::load(p)?,
        None if args.resume.is_some() && run.split_path().exists() => FoldSplit::load(run.split_path())?,
        None => {
            let names: Vec<String> = entries.iter().map(|e| e.name.clone()).collect();
            make_two_fold(&names, args.seed)?
        }
    };
    split.save(run.split_path())?;
    if args.fold >= split.n_models().max(1) {
        return Err(Error::Config(format!("fold {} does not exist; the split has {} folds", args.fold, split.n_models())));
    }
    let train_names = split.train_set(args.fold);
    let response = args.response.load()?;
    let mut pairs = Vec::new();
    for e in select(&entries, &train_names)? {
        let (rgb, cube) = load_pair(e, &response)?;
        if cube.bands() != model_cfg.out_channels {
            return Err(Error::Config(format!(
                "{} has {} bands but the model predicts {}",
                e.name,
                cube.bands(),
                model_cfg.out_channels
            )));
        }
        pairs.push((rgb, cube));
    }
    let opts = PatchOptions {
        patch_in,
        patch_out,
        stride: args.stride,
        augment: !args.no_augment,
    };
    let mut pool = build_pool(&pairs, &opts);
    drop(pairs);

    let start = match resumed {
        Some(ck) => {
            let state = ck.optimizer.unwrap_or_else(|| AdamState::new(&ck.params));
            TrainStart {
                params: ck.params,
                state,
                iter: ck.iteration,
            }
        }
        None => TrainStart::fresh(ModelParams::init(model_cfg, args.seed)?),
    };
    let first = start.iter;
    run.write_manifest(&json!({
        "command": "train",
        "version": env!("CARGO_PKG_VERSION"),
        "source_revision": SOURCE_REVISION,
        "data": args.data,
        "fold": args.fold,
        "split_mode": format!("{:?}", split.mode),
        "train_images": train_names,
        "model": model_cfg,
        "train": config,
        "stride": args.stride,
        "augment": !args.no_augment,
        "response": args.response.response,
        "resume_from": args.resume,
        "start_iteration": first,
        "patch_pairs": pool.len(),
    }))?;
    log::info!(
        "training fold {} on {} images, {} patch pairs, iterations {}..{}",
        args.fold,
        train_names.len(),
        pool.len(),
        first,
        config.total_iters
    );
    let mut observer = RunObserver::new(&run, args.resume.is_some())?;
    let outcome = train(start, &config, &mut pool, &mut observer)?;
    let done = config.total_iters.max(first);
    let final_path = run.checkpoint_dir().join(checkpoint_file_name(done));
    if !final_path.exists() {
        save_checkpoint(
            &Checkpoint {
                params: outcome.params,
                iteration: done,
                optimizer: Some(outcome.state),
            },
            &final_path,
        )?;
    }
    if let Some(last) = outcome.history.last() {
        println!("iteration {} loss {:.6e}", last.iter, last.loss);
    }
    println!("checkpoint {}", final_path.display());
    Ok(ExitCode::SUCCESS)
}

fn load_rgb(path: &Path) -> Result<RgbImage> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => load_rgb_png(path),
        _ => RgbImage::from_cube(&load_cube(path)?),
    }
}

fn cmd_predict(model: &Path, rgb: &Path, out: &Path, enhanced: bool) -> Result<ExitCode> {
    let params = load_checkpoint(resolve_checkpoint(model)?)?.params;
    let rgb = load_rgb(rgb)?;
    let cube: HyperCube = if enhanced {
        enhanced_predict(&params, &rgb)?
    } else {
        predict_image(&params, &rgb)?
    };
    save_cube(&cube, out)?;
    println!("wrote {} ({}x{}x{})", out.display(), cube.h, cube.w, cube.bands());
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(args: &EvalArgs) -> Result<ExitCode> {
    let run = RunDir::create(&args.run_dir)?;
    let split = FoldSplit::load(&args.split)?;
    let mut checkpoints = Vec::new();
    let mut models = Vec::new();
    for m in &args.models {
        let path = resolve_checkpoint(m)?;
        let params = load_checkpoint(&path)?.params;
        checkpoints.push(path);
        models.push(Some(CountingPredictor::new(params)));
    }
    let entries = list_cubes(&args.data)?;
    let response = args.response.load()?;
    let test_names: Vec<&str> = (0..split.n_models()).flat_map(|k| split.test_set(k)).collect();
    let mut pairs = Vec::new();
    for e in select(&entries, &test_names)? {
        pairs.push((e.name.clone(), load_pair(e, &response)?));
    }
    let items: Vec<EvalItem<'_>> = pairs
        .iter()
        .map(|(name, (rgb, gt))| EvalItem { name, rgb, gt })
        .collect();
    let report = evaluate_dataset(&models, &split, &items, args.enhanced)?;
    let passes: usize = models.iter().flatten().map(|m| m.passes()).sum();

    let tag = if args.enhanced { "eval_enhanced" } else { "eval" };
    let reports = run.reports_dir();
    report.save_csv(reports.join(format!("{tag}_metrics.csv")))?;
    let band_path = reports.join(format!("{tag}_per_band.csv"));
    fs::write(&band_path, report.per_band_csv()).map_err(|e| Error::io(&band_path, e))?;
    let mut table = report.to_table();
    table.push_str(&format!("forward passes: {passes}\n"));
    let table_path = reports.join(format!("{tag}_table.txt"));
    fs::write(&table_path, &table).map_err(|e| Error::io(&table_path, e))?;
    write_json(
        &reports.join(format!("{tag}.manifest.json")),
        &json!({
            "command": "eval",
            "version": env!("CARGO_PKG_VERSION"),
            "source_revision": SOURCE_REVISION,
            "data": args.data,
            "split": args.split,
            "checkpoints": checkpoints,
            "enhanced": args.enhanced,
            "response": args.response.response,
            "images": report.image_count(),
            "forward_passes": passes,
            "models": models.iter().flatten().map(|m| m.inner.config).collect::<Vec<_>>(),
        }),
    )?;
    print!("{table}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_gradcheck(seed: u64, samples_per_tensor: usize, fault: Option<FaultArg>) -> Result<ExitCode> {
    let report = run_gradcheck(&GradcheckOptions {
        seed,
        samples_per_tensor,
        fault: fault.map(|f| match f {
            FaultArg::ConvBackward => Fault::ConvBackward,
        }),
        ..Default::default()
    })?;
    print!("{}", report.summary());
    if report.passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        for r in report.failures() {
            eprintln!("gradient mismatch in {}: max rel err {:.3e}", r.op, r.max_rel_err);
        }
        Ok(ExitCode::from(2))
    }
}
