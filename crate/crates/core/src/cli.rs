//! Command-line front end.
//!
//! Every command writes into an output directory holding exactly one
//! `run.manifest` with the resolved configuration. Geometry flags are in
//! wavelengths. Exit codes: 0 success, 2 usage or incompatible inputs,
//! 3 missing or malformed data, 4 numeric failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use crate::dataset::{self, Dataset, Normalization, Split};
use crate::em::{self, ArrayLayout, GridSpec};
use crate::error::{Error, Result};
use crate::hyperopt::{self, Axis, BudgetConfig, SearchSpace};
use crate::nn::checkpoint::{read_checkpoint, read_checkpoint_header, write_checkpoint};
use crate::nn::{Activation, LinearSchedule, Model, ModelConfig, Pool, Precision, Real, ScheduleUnit, Tensor};
use crate::train::{self, Metrics, TrainConfig, Trainer};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

const DATASET_STEM: &str = "dataset";
const RUN_MANIFEST: &str = "run.manifest";

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::Shape { .. } => EXIT_USAGE,
        Error::Io { .. } | Error::Format { .. } => EXIT_DATA,
        Error::NonFinite { .. } | Error::Singularity { .. } => EXIT_NUMERIC,
    }
}

#[derive(Parser, Debug)]
#[command(name = "fieldnet", version, about = "Near-field reconstruction from far-field samples of a phased array")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate paired far-field / near-field samples.
    Generate(GenerateArgs),
    /// Train a model on a dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint.
    Eval(EvalArgs),
    /// k-fold cross-validation.
    Cv(CvArgs),
    /// Hyperparameter grid search.
    Search(SearchArgs),
    /// Timed inference on dataset samples.
    Predict(PredictArgs),
    /// Write |E| maps of a sample (and optionally its prediction) as CSV and PGM.
    DumpField(DumpArgs),
}

#[derive(Args, Debug, Clone)]
pub struct GeometryArgs {
    #[arg(long, default_value_t = em::PAPER_FREQUENCY_HZ)]
    pub frequency: f64,
    #[arg(long, default_value_t = 4)]
    pub rows: usize,
    #[arg(long, default_value_t = 4)]
    pub cols: usize,
    /// Element pitch in wavelengths.
    #[arg(long, default_value_t = 0.5)]
    pub pitch: f64,
    /// Near-field plane height in wavelengths.
    #[arg(long, default_value_t = 4.5)]
    pub nf_z: f64,
    /// Far-field plane height in wavelengths.
    #[arg(long, default_value_t = 25.0)]
    pub ff_z: f64,
    /// Near-field plane side length in wavelengths.
    #[arg(long, default_value_t = 20.0)]
    pub nf_extent: f64,
    /// Far-field plane side length in wavelengths.
    #[arg(long, default_value_t = 50.0)]
    pub ff_extent: f64,
    /// Sample spacing on both planes in wavelengths.
    #[arg(long, default_value_t = 0.5)]
    pub spacing: f64,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub samples: usize,
    #[arg(long)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    /// `none` or `max-abs`.
    #[arg(long, default_value = "none", value_parser = parse_normalization)]
    pub normalize: Normalization,
}

#[derive(Args, Debug, Clone)]
pub struct ArchArgs {
    #[arg(long, default_value_t = 10)]
    pub out_channels: usize,
    #[arg(long, default_value_t = 5)]
    pub kernel: usize,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long, default_value = "relu", value_parser = parse_activation)]
    pub activation: Activation,
    #[arg(long, default_value = "avg", value_parser = parse_pool)]
    pub pool: Pool,
    #[arg(long, default_value_t = 2)]
    pub pool_kernel: usize,
    #[arg(long, default_value_t = 1)]
    pub fc_layers: usize,
}

impl ArchArgs {
    fn model_config(&self, ds: &Dataset) -> ModelConfig {
        let [c, side, _] = ds.manifest.ff_shape();
        ModelConfig {
            in_channels: c,
            input_side: side,
            out_channels: self.out_channels,
            kernel: self.kernel,
            stride: self.stride,
            activation: self.activation,
            pool: self.pool,
            pool_kernel: self.pool_kernel,
            fc_layers: self.fc_layers,
            output_shape: ds.manifest.nf_shape(),
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 700)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 5e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sched_start: f64,
    #[arg(long, default_value_t = 0.005)]
    pub sched_end: f64,
    #[arg(long, default_value_t = 300)]
    pub sched_iters: u64,
    /// `epoch` or `batch`.
    #[arg(long, default_value = "epoch", value_parser = parse_unit)]
    pub sched_unit: ScheduleUnit,
    /// `f32` or `f64`.
    #[arg(long, default_value = "f32", value_parser = parse_precision)]
    pub precision: Precision,
}

impl OptimArgs {
    fn schedule(&self) -> LinearSchedule {
        LinearSchedule {
            start_factor: self.sched_start,
            end_factor: self.sched_end,
            total_iters: self.sched_iters,
            unit: self.sched_unit,
        }
    }

    fn train_config(&self, seed: u64, eval_every: Option<usize>) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            base_lr: self.lr,
            schedule: self.schedule(),
            seed,
            precision: self.precision,
            eval_every,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct SplitArgs {
    /// Training samples; defaults to 90% of the dataset.
    #[arg(long)]
    pub train: Option<usize>,
    /// Test samples; defaults to the remainder.
    #[arg(long)]
    pub test: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
}

impl SplitArgs {
    fn resolve(&self, count: usize) -> Result<Split> {
        let train_n = self.train.unwrap_or(count * 9 / 10);
        let test_n = self.test.unwrap_or(count.saturating_sub(train_n));
        dataset::split(count, train_n, test_n, self.split_seed)
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory (or `<stem>` of a `.manifest`/`.bin` pair).
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Seeds model initialization and per-epoch shuffling.
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub arch: ArchArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Record test MSE every this many epochs.
    #[arg(long)]
    pub eval_every: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Split file written by `train`; without it every sample is scored.
    #[arg(long)]
    pub split_file: Option<PathBuf>,
    /// `all`, `train` or `test`.
    #[arg(long, default_value = "all")]
    pub subset: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CvArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Seeds fold assignment, initialization and shuffling.
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub arch: ArchArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
}

#[derive(Args, Debug)]
pub struct SearchArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Comma-separated axes to sweep; empty runs only the published point.
    #[arg(long, default_value = "", value_delimiter = ',')]
    pub axes: Vec<String>,
    /// Replace an axis's values, e.g. `--values lr=1e-3,1e-4`. Repeatable.
    #[arg(long = "values")]
    pub values: Vec<String>,
    /// Epochs per trial.
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    /// Train each trial for the full 700 epochs.
    #[arg(long)]
    pub full_budget: bool,
    #[arg(long)]
    pub max_params: Option<usize>,
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long, default_value = "f32", value_parser = parse_precision)]
    pub precision: Precision,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Number of consecutive samples in the batch.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DumpArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub index: usize,
    /// Checkpoint whose prediction is dumped beside the ground truth.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_activation(s: &str) -> std::result::Result<Activation, String> {
    Activation::parse(s).map_err(|e| e.to_string())
}

fn parse_pool(s: &str) -> std::result::Result<Pool, String> {
    Pool::parse(s).map_err(|e| e.to_string())
}

fn parse_unit(s: &str) -> std::result::Result<ScheduleUnit, String> {
    ScheduleUnit::parse(s).map_err(|e| e.to_string())
}

fn parse_precision(s: &str) -> std::result::Result<Precision, String> {
    Precision::parse(s).ok_or_else(|| format!("unknown precision {s:?}; expected f32 or f64"))
}

fn parse_normalization(s: &str) -> std::result::Result<Normalization, String> {
    Normalization::parse(s).map_err(|e| e.to_string())
}

/// Parse `args` (program name first) and run. Returns the exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let argv_text: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match dispatch(&cli.command, &argv_text.join(" ")) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Entry point for the binary.
pub fn main() -> i32 {
    run(std::env::args_os())
}

fn dispatch(cmd: &Command, argv: &str) -> Result<()> {
    match cmd {
        Command::Generate(a) => cmd_generate(a, argv),
        Command::Train(a) => match a.optim.precision {
            Precision::F32 => cmd_train::<f32>(a, argv),
            Precision::F64 => cmd_train::<f64>(a, argv),
        },
        Command::Eval(a) => match read_checkpoint_header(&a.checkpoint)?.precision {
            Precision::F32 => cmd_eval::<f32>(a, argv),
            Precision::F64 => cmd_eval::<f64>(a, argv),
        },
        Command::Cv(a) => match a.optim.precision {
            Precision::F32 => cmd_cv::<f32>(a, argv),
            Precision::F64 => cmd_cv::<f64>(a, argv),
        },
        Command::Search(a) => match a.precision {
            Precision::F32 => cmd_search::<f32>(a, argv),
            Precision::F64 => cmd_search::<f64>(a, argv),
        },
        Command::Predict(a) => match read_checkpoint_header(&a.checkpoint)?.precision {
            Precision::F32 => cmd_predict::<f32>(a, argv),
            Precision::F64 => cmd_predict::<f64>(a, argv),
        },
        Command::DumpField(a) => {
            let precision = match &a.pred {
                Some(p) => read_checkpoint_header(p)?.precision,
                None => Precision::F32,
            };
            match precision {
                Precision::F32 => cmd_dump::<f32>(a, argv),
                Precision::F64 => cmd_dump::<f64>(a, argv),
            }
        }
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Records one command invocation.
pub struct RunManifest {
    command: &'static str,
    argv: String,
    seed: Option<u64>,
    config: String,
    started: u64,
}

impl RunManifest {
    fn new(command: &'static str, argv: &str, seed: Option<u64>, config: &impl std::fmt::Debug) -> Self {
        Self {
            command,
            argv: argv.to_string(),
            seed,
            config: format!("{config:#?}"),
            started: unix_now(),
        }
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let mut out = String::from("# fieldnet run manifest\n");
        let _ = writeln!(out, "command = {}", self.command);
        let _ = writeln!(out, "tool_version = {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(out, "argv = {}", self.argv);
        match self.seed {
            Some(s) => {
                let _ = writeln!(out, "seed = {s}");
            }
            None => out.push_str("seed = none\n"),
        }
        let _ = writeln!(out, "started_unix = {}", self.started);
        let _ = writeln!(out, "finished_unix = {}", unix_now());
        out.push_str("[config]\n");
        out.push_str(&self.config);
        out.push('\n');
        let path = dir.join(RUN_MANIFEST);
        std::fs::write(&path, out).map_err(|e| Error::io(&path, e))
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// A directory resolves to `<dir>/dataset`; anything else is a stem.
pub fn dataset_stem(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(DATASET_STEM)
    } else {
        path.to_path_buf()
    }
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    dataset::read_dataset(&dataset_stem(path))
}

fn cmd_generate(a: &GenerateArgs, argv: &str) -> Result<()> {
    let g = &a.geometry;
    let layout = ArrayLayout::lattice(g.frequency, g.rows, g.cols, g.pitch * em::SPEED_OF_LIGHT / g.frequency)?;
    let l = layout.wavelength();
    let nf = GridSpec::from_wavelengths(g.nf_z, g.nf_extent, g.spacing, l)?;
    let ff = GridSpec::from_wavelengths(g.ff_z, g.ff_extent, g.spacing, l)?;
    let ds = dataset::generate(&layout, &nf, &ff, a.samples, a.seed, a.normalize)?;
    ensure_dir(&a.out)?;
    dataset::write_dataset(&ds, &a.out.join(DATASET_STEM))?;
    let m = &ds.manifest;
    println!(
        "generated {} samples: far field {:?}, near field {:?}, near-field range [{:?}, {:?}]",
        m.sample_count,
        m.ff_shape(),
        m.nf_shape(),
        m.value_min,
        m.value_max
    );
    RunManifest::new("generate", argv, Some(a.seed), a).write(&a.out)
}

fn split_text(s: &Split) -> String {
    let join = |v: &[usize]| v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
    format!("train = {}\ntest = {}\n", join(&s.train), join(&s.test))
}

fn read_split(path: &Path) -> Result<Split> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut train = None;
    let mut test = None;
    let mut offset = 0u64;
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            let parsed: std::result::Result<Vec<usize>, _> = v.split_whitespace().map(str::parse).collect();
            let idx = parsed.map_err(|_| Error::format(offset, format!("bad index list for {}", k.trim())))?;
            match k.trim() {
                "train" => train = Some(idx),
                "test" => test = Some(idx),
                _ => {}
            }
        }
        offset += line.len() as u64 + 1;
    }
    match (train, test) {
        (Some(train), Some(test)) => Ok(Split { train, test }),
        _ => Err(Error::format(0, "split file needs train and test lines")),
    }
}

fn metrics_block(label: &str, m: &Metrics, n: usize) -> String {
    format!("[{label}]\n{}", m.report(n))
}

fn cmd_train<T: Real>(a: &TrainArgs, argv: &str) -> Result<()> {
    let ds = load_dataset(&a.dataset)?;
    let split = a.split.resolve(ds.len())?;
    let cfg = a.arch.model_config(&ds);
    let tc = a.optim.train_config(a.seed, a.eval_every);
    ensure_dir(&a.out)?;
    let manifest = RunManifest::new("train", argv, Some(a.seed), &(a, &cfg, &tc));
    write_text(&a.out.join("split.txt"), &split_text(&split))?;

    let mut model = Model::<T>::init(cfg, a.seed)?;
    let mut trainer = Trainer::new(tc, &model)?;
    let outcome = trainer.run(&mut model, &ds, &split.train, &split.test);
    // The model holds its last finite parameters even when training failed.
    trainer.history.write(&a.out.join("history.txt"))?;
    write_checkpoint(&model, Some(&trainer.adam), &a.out.join("model.ckpt"))?;
    manifest.write(&a.out)?;
    outcome?;

    let range = ds.manifest.value_range();
    let mut report = String::new();
    let train_m = train::evaluate(&model, &ds, &split.train, range)?;
    report.push_str(&metrics_block("train", &train_m, split.train.len()));
    if !split.test.is_empty() {
        let test_m = train::evaluate(&model, &ds, &split.test, range)?;
        report.push_str(&metrics_block("test", &test_m, split.test.len()));
    }
    print!("{report}");
    write_text(&a.out.join("metrics.txt"), &report)
}

fn cmd_eval<T: Real>(a: &EvalArgs, argv: &str) -> Result<()> {
    let ds = load_dataset(&a.dataset)?;
    let (model, _) = read_checkpoint::<T>(&a.checkpoint)?;
    let indices: Vec<usize> = match (a.subset.as_str(), &a.split_file) {
        ("all", _) => (0..ds.len()).collect(),
        ("train", Some(p)) => read_split(p)?.train,
        ("test", Some(p)) => read_split(p)?.test,
        ("train" | "test", None) => return Err(Error::Config(format!("--subset {} needs --split-file", a.subset))),
        (other, _) => return Err(Error::Config(format!("unknown subset {other:?}"))),
    };
    let m = train::evaluate(&model, &ds, &indices, ds.manifest.value_range())?;
    let report = metrics_block(&a.subset, &m, indices.len());
    print!("{report}");
    if let Some(out) = &a.out {
        ensure_dir(out)?;
        write_text(&out.join("metrics.txt"), &report)?;
        RunManifest::new("eval", argv, None, a).write(out)?;
    }
    Ok(())
}

fn cmd_cv<T: Real>(a: &CvArgs, argv: &str) -> Result<()> {
    let ds = load_dataset(&a.dataset)?;
    let cfg = a.arch.model_config(&ds);
    let tc = a.optim.train_config(a.seed, None);
    ensure_dir(&a.out)?;
    let r = train::kfold_cv::<T>(&ds, a.k, &cfg, &tc, a.seed, a.seed)?;
    let report = r.report();
    print!("{report}");
    write_text(&a.out.join("cv.txt"), &report)?;
    RunManifest::new("cv", argv, Some(a.seed), &(a, &cfg, &tc)).write(&a.out)
}

fn apply_values(space: &mut SearchSpace, spec: &str) -> Result<()> {
    let (axis, list) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("--values expects axis=v1,v2, got {spec:?}")))?;
    let axis = Axis::parse(axis.trim())?;
    let items: Vec<&str> = list.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    let bad = |v: &str| Error::Config(format!("bad value {v:?} for axis {}", axis.as_str()));
    let ints = || -> Result<Vec<usize>> { items.iter().map(|v| v.parse().map_err(|_| bad(v))).collect() };
    match axis {
        Axis::OutChannels => space.out_channels = ints()?,
        Axis::Kernel => space.kernel = ints()?,
        Axis::Stride => space.stride = ints()?,
        Axis::PoolKernel => space.pool_kernel = ints()?,
        Axis::FcLayers => space.fc_layers = ints()?,
        Axis::Batch => space.batch = ints()?,
        Axis::Activation => space.activation = items.iter().map(|v| Activation::parse(v)).collect::<Result<_>>()?,
        Axis::Pool => space.pool = items.iter().map(|v| Pool::parse(v)).collect::<Result<_>>()?,
        Axis::Lr => space.lr = items.iter().map(|v| v.parse().map_err(|_| bad(v))).collect::<Result<_>>()?,
    }
    Ok(())
}

fn cmd_search<T: Real>(a: &SearchArgs, argv: &str) -> Result<()> {
    let ds = load_dataset(&a.dataset)?;
    let split = a.split.resolve(ds.len())?;
    let mut space = SearchSpace::default();
    for v in &a.values {
        apply_values(&mut space, v)?;
    }
    let axes: Vec<Axis> = a
        .axes
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(Axis::parse)
        .collect::<Result<_>>()?;
    let budget = BudgetConfig {
        epochs: if a.full_budget { TrainConfig::default().epochs } else { a.epochs },
        seed: a.seed,
        max_params: a.max_params,
        ..BudgetConfig::default()
    };
    ensure_dir(&a.out)?;
    let manifest = RunManifest::new("search", argv, Some(a.seed), &(a, &space, &budget));
    let report = hyperopt::run_search::<T>(&space, &axes, &ds, &split.train, &split.test, &budget, Some(&a.out.join("search.log")))?;
    let text = report.to_text();
    print!("{text}");
    write_text(&a.out.join("ranking.txt"), &text)?;
    manifest.write(&a.out)
}

fn sample_batch<T: Real>(ds: &Dataset, index: usize, count: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let end = index.checked_add(count).filter(|&e| e <= ds.len()).ok_or_else(|| {
        Error::Config(format!("samples {index}..{} out of range ({} samples)", index.saturating_add(count), ds.len()))
    })?;
    train::gather::<T>(ds, &(index..end).collect::<Vec<_>>())
}

fn cmd_predict<T: Real>(a: &PredictArgs, argv: &str) -> Result<()> {
    let ds = load_dataset(&a.dataset)?;
    let (model, _) = read_checkpoint::<T>(&a.checkpoint)?;
    let (x, _) = sample_batch::<T>(&ds, a.index, a.count)?;
    let p = train::predict(&model, &x)?;
    ensure_dir(&a.out)?;
    let mut bytes = Vec::with_capacity(p.output.len() * 4);
    for v in p.output.data() {
        bytes.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
    }
    let path = a.out.join("prediction.bin");
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    let report = format!(
        "# prediction\nsamples = {}\nshape = {:?}\nlatency_seconds = {:?}\n",
        a.count,
        p.output.shape(),
        p.elapsed.as_secs_f64()
    );
    print!("{report}");
    write_text(&a.out.join("prediction.txt"), &report)?;
    RunManifest::new("predict", argv, None, a).write(&a.out)
}

/// Comma-separated rows, one per grid row.
pub fn grid_csv(values: &[f64], side: usize) -> String {
    let mut out = String::with_capacity(values.len() * 16);
    for row in values.chunks(side) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Binary 8-bit graymap scaled so `lo` maps to 0 and `hi` to 255.
pub fn grid_pgm(values: &[f64], side: usize, lo: f64, hi: f64) -> Vec<u8> {
    let mut out = format!("P5\n{side} {side}\n255\n").into_bytes();
    let span = hi - lo;
    out.extend(values.iter().map(|&v| {
        if span > 0.0 {
            ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }));
    out
}

fn cmd_dump<T: Real>(a: &DumpArgs, argv: &str) -> Result<()> {
    let ds = load_dataset(&a.dataset)?;
    if a.index >= ds.len() {
        return Err(Error::Config(format!("index {} out of range ({} samples)", a.index, ds.len())));
    }
    let side = ds.manifest.nf_spec.points_per_side();
    let points = side * side;
    let truth = dataset::packed_magnitude(&ds.samples[a.index].nf, points)?;
    let pred = match &a.pred {
        Some(path) => {
            let (model, _) = read_checkpoint::<T>(path)?;
            let (x, _) = sample_batch::<T>(&ds, a.index, 1)?;
            let y = model.forward(&x)?;
            let packed: Vec<f32> = y.data().iter().map(|v| v.to_f64_lossy() as f32).collect();
            Some(dataset::packed_magnitude(&packed, points)?)
        }
        None => None,
    };
    let all = truth.iter().chain(pred.iter().flatten());
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    ensure_dir(&a.out)?;
    let mut maps = vec![("truth", &truth)];
    if let Some(p) = &pred {
        maps.push(("pred", p));
    }
    for (name, values) in maps {
        write_text(&a.out.join(format!("{name}.csv")), &grid_csv(values, side))?;
        let path = a.out.join(format!("{name}.pgm"));
        std::fs::write(&path, grid_pgm(values, side, lo, hi)).map_err(|e| Error::io(&path, e))?;
    }
    println!("sample {}: {side}x{side} |E| in [{lo:?}, {hi:?}] written to {}", a.index, a.out.display());
    RunManifest::new("dump-field", argv, None, a).write(&a.out)
}
