//! Grid search over architecture and optimizer hyperparameters.
//!
//! Points are enumerated as a Cartesian product over chosen axes, with the
//! others pinned at the published configuration. Every point is shape
//! checked before any training starts. Trials run one after another and are
//! appended to a line-delimited log, so an interrupted sweep resumes where
//! it stopped.

use std::collections::{BTreeMap, HashMap};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nn::{Activation, LinearSchedule, Model, ModelConfig, Pool, Real};
use crate::train::{self, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    OutChannels,
    Kernel,
    Stride,
    Activation,
    Pool,
    PoolKernel,
    FcLayers,
    Lr,
    Batch,
}

impl Axis {
    pub const ALL: [Axis; 9] = [
        Axis::OutChannels,
        Axis::Kernel,
        Axis::Stride,
        Axis::Activation,
        Axis::Pool,
        Axis::PoolKernel,
        Axis::FcLayers,
        Axis::Lr,
        Axis::Batch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Axis::OutChannels => "out_channels",
            Axis::Kernel => "kernel",
            Axis::Stride => "stride",
            Axis::Activation => "activation",
            Axis::Pool => "pool",
            Axis::PoolKernel => "pool_kernel",
            Axis::FcLayers => "fc_layers",
            Axis::Lr => "lr",
            Axis::Batch => "batch",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Axis::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown search axis {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub out_channels: Vec<usize>,
    pub kernel: Vec<usize>,
    pub stride: Vec<usize>,
    pub activation: Vec<Activation>,
    pub pool: Vec<Pool>,
    pub pool_kernel: Vec<usize>,
    pub fc_layers: Vec<usize>,
    pub lr: Vec<f64>,
    pub batch: Vec<usize>,
}

impl Default for SearchSpace {
    /// The full sweep. The learning-rate axis carries 5e-4 alongside the
    /// decades so the published point lies on the grid.
    fn default() -> Self {
        Self {
            out_channels: (6..=24).collect(),
            kernel: vec![3, 5],
            stride: vec![1, 2],
            activation: Activation::ALL.to_vec(),
            pool: vec![Pool::Avg, Pool::Max],
            pool_kernel: vec![2, 3],
            fc_layers: vec![1, 2, 3],
            lr: vec![1e-3, 5e-4, 1e-4, 1e-5, 1e-6],
            batch: vec![8, 16, 32, 64],
        }
    }
}

impl SearchSpace {
    pub fn axis_len(&self, axis: Axis) -> usize {
        match axis {
            Axis::OutChannels => self.out_channels.len(),
            Axis::Kernel => self.kernel.len(),
            Axis::Stride => self.stride.len(),
            Axis::Activation => self.activation.len(),
            Axis::Pool => self.pool.len(),
            Axis::PoolKernel => self.pool_kernel.len(),
            Axis::FcLayers => self.fc_layers.len(),
            Axis::Lr => self.lr.len(),
            Axis::Batch => self.batch.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for axis in Axis::ALL {
            if self.axis_len(axis) == 0 {
                return Err(Error::Config(format!("search axis {} is empty", axis.as_str())));
            }
        }
        Ok(())
    }

    /// Whether `point` can be produced by enumerating every axis.
    pub fn contains(&self, p: &SearchPoint) -> bool {
        self.out_channels.contains(&p.out_channels)
            && self.kernel.contains(&p.kernel)
            && self.stride.contains(&p.stride)
            && self.activation.contains(&p.activation)
            && self.pool.contains(&p.pool)
            && self.pool_kernel.contains(&p.pool_kernel)
            && self.fc_layers.contains(&p.fc_layers)
            && self.lr.contains(&p.lr)
            && self.batch.contains(&p.batch)
    }
}

/// One assignment of every axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchPoint {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub activation: Activation,
    pub pool: Pool,
    pub pool_kernel: usize,
    pub fc_layers: usize,
    pub lr: f64,
    pub batch: usize,
}

impl SearchPoint {
    pub fn published() -> Self {
        let m = ModelConfig::published();
        Self {
            out_channels: m.out_channels,
            kernel: m.kernel,
            stride: m.stride,
            activation: m.activation,
            pool: m.pool,
            pool_kernel: m.pool_kernel,
            fc_layers: m.fc_layers,
            lr: TrainConfig::default().base_lr,
            batch: TrainConfig::default().batch_size,
        }
    }

    fn set(&mut self, space: &SearchSpace, axis: Axis, i: usize) {
        match axis {
            Axis::OutChannels => self.out_channels = space.out_channels[i],
            Axis::Kernel => self.kernel = space.kernel[i],
            Axis::Stride => self.stride = space.stride[i],
            Axis::Activation => self.activation = space.activation[i],
            Axis::Pool => self.pool = space.pool[i],
            Axis::PoolKernel => self.pool_kernel = space.pool_kernel[i],
            Axis::FcLayers => self.fc_layers = space.fc_layers[i],
            Axis::Lr => self.lr = space.lr[i],
            Axis::Batch => self.batch = space.batch[i],
        }
    }

    /// Model for the given input side and output shape.
    pub fn model_config(&self, input_channels: usize, input_side: usize, output_shape: [usize; 3]) -> ModelConfig {
        ModelConfig {
            in_channels: input_channels,
            input_side,
            out_channels: self.out_channels,
            kernel: self.kernel,
            stride: self.stride,
            activation: self.activation,
            pool: self.pool,
            pool_kernel: self.pool_kernel,
            fc_layers: self.fc_layers,
            output_shape,
        }
    }

    /// Space-separated `axis=value` pairs; identifies the point in the log.
    pub fn key(&self) -> String {
        format!(
            "out_channels={} kernel={} stride={} activation={} pool={} pool_kernel={} fc_layers={} lr={:?} batch={}",
            self.out_channels,
            self.kernel,
            self.stride,
            self.activation.as_str(),
            self.pool.as_str(),
            self.pool_kernel,
            self.fc_layers,
            self.lr,
            self.batch
        )
    }

    fn from_fields(f: &HashMap<&str, &str>) -> Result<Self> {
        let get = |k: &str| f.get(k).copied().ok_or_else(|| Error::Config(format!("search log record lacks {k}")));
        let int = |k: &str| -> Result<usize> {
            get(k)?.parse().map_err(|_| Error::Config(format!("search log: bad {k}")))
        };
        Ok(Self {
            out_channels: int("out_channels")?,
            kernel: int("kernel")?,
            stride: int("stride")?,
            activation: Activation::parse(get("activation")?)?,
            pool: Pool::parse(get("pool")?)?,
            pool_kernel: int("pool_kernel")?,
            fc_layers: int("fc_layers")?,
            lr: get("lr")?.parse().map_err(|_| Error::Config("search log: bad lr".into()))?,
            batch: int("batch")?,
        })
    }
}

/// Cartesian product over `axes` (duplicates ignored) in the order given,
/// last axis varying fastest. Unselected axes keep their published values.
pub fn enumerate(space: &SearchSpace, axes: &[Axis]) -> Result<Vec<SearchPoint>> {
    space.validate()?;
    let mut chosen: Vec<Axis> = Vec::new();
    for &a in axes {
        if !chosen.contains(&a) {
            chosen.push(a);
        }
    }
    let lens: Vec<usize> = chosen.iter().map(|&a| space.axis_len(a)).collect();
    let total: usize = lens.iter().product();
    let mut points = Vec::with_capacity(total);
    let mut idx = vec![0usize; chosen.len()];
    for _ in 0..total {
        let mut p = SearchPoint::published();
        for (&a, &i) in chosen.iter().zip(&idx) {
            p.set(space, a, i);
        }
        points.push(p);
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            if idx[d] < lens[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BudgetConfig {
    /// Epochs per trial.
    pub epochs: usize,
    pub schedule: LinearSchedule,
    /// Seeds both model initialization and shuffling.
    pub seed: u64,
    /// Points whose parameter count exceeds this are skipped.
    pub max_params: Option<usize>,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            schedule: LinearSchedule::default(),
            seed: 0,
            max_params: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub point: SearchPoint,
    /// Position in the enumeration.
    pub index: usize,
    pub train_mse: f64,
    pub test_mse: f64,
    /// Seconds.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Skipped {
    pub point: SearchPoint,
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchReport {
    /// Completed trials by ascending test MSE, ties in enumeration order.
    pub ranked: Vec<TrialResult>,
    pub skipped: Vec<Skipped>,
    /// Trials taken from an existing log rather than run.
    pub resumed: usize,
}

impl SearchReport {
    pub fn to_text(&self) -> String {
        let mut out = String::from("# search ranking (ascending test_mse)\n");
        for (rank, t) in self.ranked.iter().enumerate() {
            out.push_str(&format!(
                "rank={} {} train_mse={:?} test_mse={:?} wall_time={:.3}\n",
                rank + 1,
                t.point.key(),
                t.train_mse,
                t.test_mse,
                t.wall_time
            ));
        }
        for s in &self.skipped {
            out.push_str(&format!("skipped {} reason={}\n", s.point.key(), s.reason));
        }
        out
    }
}

enum Logged {
    Done { train_mse: f64, test_mse: f64, wall_time: f64 },
    Failed(String),
}

fn read_log(path: &Path) -> Result<HashMap<String, Logged>> {
    let mut out = HashMap::new();
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(Error::io(path, e)),
    };
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        // `reason=` always comes last and may contain spaces.
        let (fields_part, reason) = match line.find(" reason=") {
            Some(i) => (&line[..i], Some(line[i + 8..].to_string())),
            None => (line, None),
        };
        let fields: HashMap<&str, &str> = fields_part.split_whitespace().filter_map(|kv| kv.split_once('=')).collect();
        let point = match SearchPoint::from_fields(&fields) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let num = |k: &str| fields.get(k).and_then(|v| v.parse::<f64>().ok());
        let entry = match fields.get("status").copied() {
            Some("ok") => match (num("train_mse"), num("test_mse"), num("wall_time")) {
                (Some(train_mse), Some(test_mse), Some(wall_time)) => Logged::Done { train_mse, test_mse, wall_time },
                _ => continue,
            },
            Some("failed") => Logged::Failed(reason.unwrap_or_default()),
            _ => continue,
        };
        out.insert(point.key(), entry);
    }
    Ok(out)
}

struct Log<'a> {
    path: Option<&'a Path>,
}

impl Log<'_> {
    fn append(&self, line: &str) -> Result<()> {
        let Some(path) = self.path else { return Ok(()) };
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))
    }
}

/// Enumerate `axes` of `space` and run every point.
pub fn run_search<T: Real>(
    space: &SearchSpace,
    axes: &[Axis],
    dataset: &Dataset,
    train_idx: &[usize],
    test_idx: &[usize],
    budget: &BudgetConfig,
    log_path: Option<&Path>,
) -> Result<SearchReport> {
    let points = enumerate(space, axes)?;
    run_points::<T>(&points, dataset, train_idx, test_idx, budget, log_path)
}

/// Train each point under `budget` and rank by test MSE. Unconstructible,
/// oversized and diverging points are skipped with a logged reason.
pub fn run_points<T: Real>(
    points: &[SearchPoint],
    dataset: &Dataset,
    train_idx: &[usize],
    test_idx: &[usize],
    budget: &BudgetConfig,
    log_path: Option<&Path>,
) -> Result<SearchReport> {
    if dataset.is_empty() || train_idx.is_empty() || test_idx.is_empty() {
        return Err(Error::Config("search needs non-empty train and test sets".into()));
    }
    if budget.epochs == 0 {
        return Err(Error::Config("search budget must be >= 1 epoch".into()));
    }
    let [in_c, in_side, _] = dataset.manifest.ff_shape();
    let out_shape = dataset.manifest.nf_shape();
    let range = dataset.manifest.value_range();

    // Shape pass over every point before anything trains.
    let mut plan: BTreeMap<usize, std::result::Result<ModelConfig, String>> = BTreeMap::new();
    for (i, p) in points.iter().enumerate() {
        let cfg = p.model_config(in_c, in_side, out_shape);
        let verdict = match cfg.param_count() {
            Err(e) => Err(format!("unconstructible: {e}")),
            Ok(n) if budget.max_params.is_some_and(|m| n > m) => {
                Err(format!("{n} parameters exceed the limit of {}", budget.max_params.unwrap()))
            }
            Ok(_) if !(p.lr >= 0.0 && p.lr.is_finite()) => Err(format!("invalid learning rate {}", p.lr)),
            Ok(_) if p.batch == 0 => Err("batch size 0".to_string()),
            Ok(_) => Ok(cfg),
        };
        plan.insert(i, verdict);
    }

    let previous = match log_path {
        Some(p) => read_log(p)?,
        None => HashMap::new(),
    };
    let log = Log { path: log_path };
    if log_path.is_some_and(|p| !p.exists()) {
        log.append(&format!(
            "# search log: epochs={} seed={} scheduler_end={:?} scheduler_iters={}",
            budget.epochs, budget.seed, budget.schedule.end_factor, budget.schedule.total_iters
        ))?;
    }

    let mut ranked = Vec::new();
    let mut skipped = Vec::new();
    let mut resumed = 0;
    for (i, verdict) in plan {
        let point = &points[i];
        let key = point.key();
        let cfg = match verdict {
            Ok(cfg) => cfg,
            Err(reason) => {
                if !previous.contains_key(&key) {
                    log.append(&format!("status=failed {key} reason={reason}"))?;
                }
                skipped.push(Skipped { point: point.clone(), index: i, reason });
                continue;
            }
        };
        match previous.get(&key) {
            Some(&Logged::Done { train_mse, test_mse, wall_time }) => {
                resumed += 1;
                ranked.push(TrialResult { point: point.clone(), index: i, train_mse, test_mse, wall_time });
                continue;
            }
            Some(Logged::Failed(reason)) => {
                resumed += 1;
                skipped.push(Skipped { point: point.clone(), index: i, reason: reason.clone() });
                continue;
            }
            None => {}
        }
        let start = Instant::now();
        match run_trial::<T>(&cfg, point, dataset, train_idx, test_idx, budget, range) {
            Ok((train_mse, test_mse)) => {
                let wall_time = start.elapsed().as_secs_f64();
                log.append(&format!(
                    "status=ok {key} train_mse={train_mse:?} test_mse={test_mse:?} wall_time={wall_time:?}"
                ))?;
                ranked.push(TrialResult { point: point.clone(), index: i, train_mse, test_mse, wall_time });
            }
            Err(e @ (Error::NonFinite { .. } | Error::Shape { .. } | Error::Config(_))) => {
                let reason = format!("training failed: {e}");
                log.append(&format!("status=failed {key} reason={reason}"))?;
                skipped.push(Skipped { point: point.clone(), index: i, reason });
            }
            Err(e) => return Err(e),
        }
    }
    ranked.sort_by(|a, b| a.test_mse.total_cmp(&b.test_mse).then(a.index.cmp(&b.index)));
    Ok(SearchReport { ranked, skipped, resumed })
}

fn run_trial<T: Real>(
    cfg: &ModelConfig,
    point: &SearchPoint,
    dataset: &Dataset,
    train_idx: &[usize],
    test_idx: &[usize],
    budget: &BudgetConfig,
    range: (f64, f64),
) -> Result<(f64, f64)> {
    let mut model = Model::<T>::init(cfg.clone(), budget.seed)?;
    // A zero learning rate leaves every parameter untouched, so the trial
    // reduces to scoring the initialization.
    if point.lr == 0.0 {
        let train_mse = train::evaluate(&model, dataset, train_idx, range)?.mse;
        let test_mse = train::evaluate(&model, dataset, test_idx, range)?.mse;
        return Ok((train_mse, test_mse));
    }
    let tc = TrainConfig {
        epochs: budget.epochs,
        batch_size: point.batch,
        base_lr: point.lr,
        schedule: budget.schedule,
        seed: budget.seed,
        precision: T::PRECISION,
        eval_every: None,
    };
    train::train(&mut model, dataset, train_idx, &[], &tc)?;
    let train_mse = train::evaluate(&model, dataset, train_idx, range)?.mse;
    let test_mse = train::evaluate(&model, dataset, test_idx, range)?.mse;
    Ok((train_mse, test_mse))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_sizes() {
        let s = SearchSpace::default();
        assert_eq!(enumerate(&s, &[Axis::Kernel, Axis::Stride]).unwrap().len(), 4);
        assert_eq!(enumerate(&s, &[]).unwrap(), vec![SearchPoint::published()]);
        assert_eq!(enumerate(&s, &[Axis::OutChannels]).unwrap().len(), 19);
        assert_eq!(enumerate(&s, &[Axis::Kernel, Axis::Kernel]).unwrap().len(), 2);
    }

    #[test]
    fn order_is_last_axis_fastest() {
        let pts = enumerate(&SearchSpace::default(), &[Axis::Kernel, Axis::Stride]).unwrap();
        let ks: Vec<(usize, usize)> = pts.iter().map(|p| (p.kernel, p.stride)).collect();
        assert_eq!(ks, vec![(3, 1), (3, 2), (5, 1), (5, 2)]);
    }

    #[test]
    fn empty_axis_is_rejected() {
        let s = SearchSpace { pool: vec![], ..SearchSpace::default() };
        assert!(matches!(enumerate(&s, &[Axis::Kernel]), Err(Error::Config(_))));
    }

    #[test]
    fn published_point_is_on_the_grid() {
        assert!(SearchSpace::default().contains(&SearchPoint::published()));
    }

    #[test]
    fn axis_names_roundtrip() {
        for a in Axis::ALL {
            assert_eq!(Axis::parse(a.as_str()).unwrap(), a);
        }
        assert!(Axis::parse("dropout").is_err());
    }

    #[test]
    fn key_parses_back() {
        let p = SearchPoint { lr: 1e-6, activation: Activation::LeakyRelu, ..SearchPoint::published() };
        let key = p.key();
        let fields: HashMap<&str, &str> = key.split_whitespace().filter_map(|kv| kv.split_once('=')).collect();
        assert_eq!(SearchPoint::from_fields(&fields).unwrap(), p);
    }
}
