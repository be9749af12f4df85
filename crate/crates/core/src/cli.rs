//! The `elacnn` command line.
//!
//! Exit codes: 0 success, 2 unreadable input or usage error, 3 dataset
//! ingestion or split failure, 4 training failure, 5 model archive failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::dataset::{scan_directory_with, split_stratified, ClassDirs, DatasetManifest, ManifestSubset, TensorCache};
use crate::ela::{ela_image, ElaConfig, RgbImage};
use crate::error::{Error, Result};
use crate::nn::PAPER_INPUT;
use crate::plot::render_history;
use crate::training::{
    evaluate, export_history, load_model, predict, save_model, train, FitControl, MetricsHistory, TrainConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INGESTION: i32 = 3;
pub const EXIT_TRAINING: i32 = 4;
pub const EXIT_ARCHIVE: i32 = 5;

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Decode { .. } | Error::Codec(_) => EXIT_INPUT,
        Error::Ingestion(_) | Error::Split(_) => EXIT_INGESTION,
        Error::Archive(_) => EXIT_ARCHIVE,
        Error::Contract(_) | Error::State(_) | Error::Training(_) | Error::Io { .. } => EXIT_TRAINING,
    }
}

#[derive(Parser, Debug)]
#[command(name = "elacnn", version, about = "Error Level Analysis + CNN image tampering detector")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the native-resolution ELA image of a file as PNG.
    Ela(ElaArgs),
    /// Train the classifier on an Au/ + Tp/ tree.
    Train(TrainArgs),
    /// Report loss and accuracy of a saved model on one side of the split.
    Eval(EvalArgs),
    /// Classify one image.
    Predict(PredictArgs),
    /// Print the layer table of a saved model.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
struct ElaArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// JPEG quality of the recompression.
    #[arg(long, default_value_t = 90, value_parser = clap::value_parser!(u8).range(1..=100))]
    quality: u8,
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Directory holding the class subdirectories.
    #[arg(long)]
    data_root: Option<PathBuf>,
    /// Subdirectory of authentic images [default: Au]
    #[arg(long)]
    authentic_dir: Option<String>,
    /// Subdirectory of tampered images [default: Tp]
    #[arg(long)]
    tampered_dir: Option<String>,
    /// Cache directory for ELA tensors [default: $ELACNN_CACHE_DIR, else <tmp>/elacnn-cache]
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Recompute every ELA tensor instead of using the cache.
    #[arg(long)]
    no_cache: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Preset {
    #[value(name = "50")]
    Fifty,
    #[value(name = "100")]
    Hundred,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// JSON file with any of the training fields plus data_root, out, history, plot; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Starting configuration: 50 epochs with seed 42, or 100 epochs with seed 43 [default: 50]
    #[arg(long)]
    preset: Option<Preset>,
    #[command(flatten)]
    data: DataArgs,
    /// Number of epochs [default: 50]
    #[arg(long)]
    epochs: Option<usize>,
    /// Seed for initialisation, dropout, split and shuffling [default: 42]
    #[arg(long)]
    seed: Option<u64>,
    /// Mini-batch size [default: 32]
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam learning rate [default: 0.001]
    #[arg(long)]
    lr: Option<f64>,
    /// Fraction of each class used for training [default: 0.8]
    #[arg(long)]
    split: Option<f64>,
    /// JPEG quality of the ELA recompression [default: 90]
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=100))]
    quality: Option<u8>,
    /// Final model archive [default: model.elacnn]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-epoch metrics CSV [default: history.csv]
    #[arg(long)]
    history: Option<PathBuf>,
    /// Directory for accuracy.png and loss.png charts.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Side {
    Train,
    Val,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Which side of the split to score.
    #[arg(long, value_enum, default_value_t = Side::Val)]
    split_side: Side,
    /// Training fraction used when the model was trained.
    #[arg(long, default_value_t = 0.8)]
    split: f64,
    /// JPEG quality of the ELA recompression.
    #[arg(long, default_value_t = 90, value_parser = clap::value_parser!(u8).range(1..=100))]
    quality: u8,
    /// Evaluation batch size.
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Print {"authentic":p,"tampered":q,"label":...}.
    #[arg(long)]
    json: bool,
    /// JPEG quality of the ELA recompression.
    #[arg(long, default_value_t = 90, value_parser = clap::value_parser!(u8).range(1..=100))]
    quality: u8,
}

#[derive(Args, Debug)]
struct InspectArgs {
    #[arg(long)]
    model: PathBuf,
}

/// Contents of a `--config` file. Unknown keys are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub data_root: Option<PathBuf>,
    pub authentic_dir: Option<String>,
    pub tampered_dir: Option<String>,
    pub out: Option<PathBuf>,
    pub history: Option<PathBuf>,
    pub plot: Option<PathBuf>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    pub split_ratio: Option<f64>,
    pub ela: Option<ElaConfig>,
}

/// The resolved settings of a training run, printed before it starts.
#[derive(Clone, Debug, PartialEq, Serialize)]
struct EffectiveTrain {
    data_root: PathBuf,
    class_dirs: ClassDirs,
    out: PathBuf,
    history: PathBuf,
    plot: Option<PathBuf>,
    train: TrainConfig,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match cli.command {
        Command::Ela(a) => cmd_ela(&a, out),
        Command::Train(a) => cmd_train(a, out, err),
        Command::Eval(a) => cmd_eval(&a, out, err),
        Command::Predict(a) => cmd_predict(&a, out),
        Command::Inspect(a) => cmd_inspect(&a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

/// Runs with the process arguments and standard streams.
pub fn run() -> i32 {
    let (stdout, stderr) = (std::io::stdout(), std::io::stderr());
    run_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn cmd_ela(a: &ElaArgs, out: &mut dyn Write) -> Result<()> {
    let img = RgbImage::open(&a.input)?;
    let ela = ela_image(&img, a.quality)?;
    ela.save_png(&a.output)?;
    writeln!(out, "wrote {} ({}x{}, quality {})", a.output.display(), ela.width(), ela.height(), a.quality)
        .map_err(io_err(&a.output))
}

fn cache_for(data: &DataArgs) -> TensorCache {
    match (&data.cache_dir, data.no_cache) {
        (_, true) => TensorCache::disabled(),
        (Some(dir), false) => TensorCache::new(dir),
        (None, false) => TensorCache::from_env(),
    }
}

fn resolve_train(a: &TrainArgs) -> Result<EffectiveTrain> {
    let file: FileConfig = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::decode(path, e))?;
            serde_json::from_str(&text).map_err(|e| Error::decode(path, e))?
        }
        None => FileConfig::default(),
    };
    let mut cfg = match a.preset {
        Some(Preset::Hundred) => TrainConfig::paper_100(),
        Some(Preset::Fifty) | None => TrainConfig::paper_50(),
    };
    macro_rules! layer {
        ($field:ident, $($source:expr),+) => {
            $( if let Some(v) = $source { cfg.$field = v; } )+
        };
    }
    layer!(epochs, file.epochs, a.epochs);
    layer!(batch_size, file.batch_size, a.batch_size);
    layer!(lr, file.lr, a.lr);
    layer!(beta1, file.beta1);
    layer!(beta2, file.beta2);
    layer!(epsilon, file.epsilon);
    layer!(seed, file.seed, a.seed);
    layer!(split_ratio, file.split_ratio, a.split);
    layer!(ela, file.ela);
    if let Some(q) = a.quality {
        cfg.ela.jpeg_quality = q;
    }
    let data_root = a
        .data
        .data_root
        .clone()
        .or(file.data_root)
        .ok_or_else(|| Error::Ingestion("no dataset root given (--data-root or data_root in --config)".into()))?;
    let defaults = ClassDirs::default();
    let class_dirs = ClassDirs {
        authentic: a.data.authentic_dir.clone().or(file.authentic_dir).unwrap_or(defaults.authentic),
        tampered: a.data.tampered_dir.clone().or(file.tampered_dir).unwrap_or(defaults.tampered),
    };
    Ok(EffectiveTrain {
        data_root,
        class_dirs,
        out: a.out.clone().or(file.out).unwrap_or_else(|| "model.elacnn".into()),
        history: a.history.clone().or(file.history).unwrap_or_else(|| "history.csv".into()),
        plot: a.plot.clone().or(file.plot),
        train: cfg,
    })
}

/// `model.elacnn` → `model.best.elacnn`.
pub fn best_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    let name = match out.extension() {
        Some(ext) => format!("{stem}.best.{}", ext.to_string_lossy()),
        None => format!("{stem}.best"),
    };
    out.with_file_name(name)
}

fn scan(root: &Path, dirs: &ClassDirs, err: &mut dyn Write) -> Result<DatasetManifest> {
    let manifest = scan_directory_with(root, dirs)?;
    for s in manifest.skipped() {
        let _ = writeln!(err, "skipped {}: {}", s.path.display(), s.reason);
    }
    Ok(manifest)
}

/// An image inside the dataset that fails to decode is an ingestion failure.
fn dataset_error(e: Error) -> Error {
    Error::Ingestion(e.to_string())
}

fn cmd_train(a: TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let eff = resolve_train(&a)?;
    eff.train.validate()?;
    let json = serde_json::to_string(&eff).expect("configuration serialises");
    let _ = writeln!(err, "effective config: {json}");
    let _ = writeln!(err, "config digest: {}", eff.train.digest());

    let manifest = scan(&eff.data_root, &eff.class_dirs, err)?;
    split_stratified(&manifest, eff.train.split_ratio, eff.train.seed)?;
    let cache = cache_for(&a.data);
    let _ = writeln!(
        err,
        "dataset: {} authentic, {} tampered",
        manifest.count(crate::loss::Label::Authentic),
        manifest.count(crate::loss::Label::Tampered)
    );

    let mut history = MetricsHistory::new();
    let epochs = eff.train.epochs;
    let progress = std::cell::RefCell::new(&mut *err);
    let mut control = FitControl {
        keep_best: true,
        on_epoch: Some(Box::new(|r: &crate::training::EpochMetrics| {
            let _ = writeln!(
                progress.borrow_mut(),
                "epoch {}/{epochs}: train_loss={:.6} train_acc={:.4} val_loss={:.6} val_acc={:.4}",
                r.epoch,
                r.train_loss,
                r.train_acc,
                r.val_loss,
                r.val_acc
            );
        })),
        ..FitControl::default()
    };
    let outcome = train(&manifest, &eff.train, &cache, &mut history, &mut control);
    drop(control);
    let err = progress.into_inner();
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            if !history.is_empty() {
                export_history(&history, &eff.history)?;
                let _ = writeln!(err, "partial history ({} epochs) written to {}", history.len(), eff.history.display());
            }
            return Err(match e {
                Error::Ingestion(_) | Error::Split(_) | Error::Archive(_) => e,
                Error::Decode { .. } => dataset_error(e),
                other => Error::Training(other.to_string()),
            });
        }
    };

    save_model(&outcome.model, &eff.out)?;
    if let Some(best) = &outcome.best {
        let mut best_model = outcome.model.clone();
        best_model.load_parameters(best.parameters.clone())?;
        save_model(&best_model, best_path(&eff.out))?;
        let _ = writeln!(err, "best validation accuracy {:.4} at epoch {}", best.val_acc, best.epoch);
    }
    export_history(&history, &eff.history)?;
    if let Some(dir) = &eff.plot {
        render_history(&history, dir)?;
    }
    let last = history.last().expect("at least one epoch ran");
    writeln!(
        out,
        "final train_loss={:.6} train_acc={:.4} val_loss={:.6} val_acc={:.4}",
        last.train_loss, last.train_acc, last.val_loss, last.val_acc
    )
    .map_err(io_err(&eff.out))
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let model = load_model(&a.model)?;
    let root = a
        .data
        .data_root
        .clone()
        .ok_or_else(|| Error::Ingestion("no dataset root given (--data-root)".into()))?;
    let defaults = ClassDirs::default();
    let dirs = ClassDirs {
        authentic: a.data.authentic_dir.clone().unwrap_or(defaults.authentic),
        tampered: a.data.tampered_dir.clone().unwrap_or(defaults.tampered),
    };
    let manifest = scan(&root, &dirs, err)?;
    let split = split_stratified(&manifest, a.split, model.seed())?;
    let ela = ElaConfig { jpeg_quality: a.quality, ..ElaConfig::default() };
    let cache = cache_for(&a.data);
    let indices = match a.split_side {
        Side::Train => split.train,
        Side::Val => split.val,
    };
    let subset = ManifestSubset { manifest: &manifest, indices, ela, cache: &cache };
    let result = evaluate(&model, &subset, a.batch_size).map_err(|e| match e {
        Error::Decode { .. } => dataset_error(e),
        other => other,
    })?;
    let side = match a.split_side {
        Side::Train => "train",
        Side::Val => "val",
    };
    writeln!(out, "{side} loss={:.6} accuracy={:.4}", result.loss, result.accuracy).map_err(io_err(&a.model))
}

fn cmd_predict(a: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    let model = load_model(&a.model)?;
    let ela = ElaConfig { jpeg_quality: a.quality, ..ElaConfig::default() };
    let p = predict(&model, &a.input, &ela)?;
    let text = if a.json {
        serde_json::to_string(&p).expect("prediction serialises")
    } else {
        format!("{} authentic={:.6} tampered={:.6}", p.label, p.authentic, p.tampered)
    };
    writeln!(out, "{text}").map_err(io_err(&a.input))
}

/// `1234567` → `1,234,567`.
pub fn group_thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn cmd_inspect(a: &InspectArgs, out: &mut dyn Write) -> Result<()> {
    let model = load_model(&a.model)?;
    let rows = model.summary(&PAPER_INPUT)?;
    let mut text = String::new();
    let shape = |dims: &[usize]| dims.iter().map(usize::to_string).collect::<Vec<_>>().join("x");
    text.push_str(&format!("input {}  seed {}\n", shape(&PAPER_INPUT), model.seed()));
    text.push_str(&format!("{:<3} {:<10} {:<12} {:>12}\n", "#", "layer", "output", "params"));
    for (i, row) in rows.iter().enumerate() {
        text.push_str(&format!("{:<3} {:<10} {:<12} {:>12}\n", i + 1, row.kind, shape(&row.output_dims), row.param_count));
    }
    text.push_str(&format!("{:<3} {:<10} {:<12} {:>12}\n", "", "total", "", group_thousands(model.total_params())));
    out.write_all(text.as_bytes()).map_err(io_err(&a.model))
}
