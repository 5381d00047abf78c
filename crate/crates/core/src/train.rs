//! Training protocol, evaluation metrics and k-fold cross-validation.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nn::{AdamState, LinearSchedule, Model, ModelConfig, Precision, Real, ScheduleUnit, Tensor};

/// Batch size used for forward-only passes.
pub const EVAL_BATCH: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub schedule: LinearSchedule,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
    pub precision: Precision,
    /// Evaluate the test split every this many epochs (and after the last).
    pub eval_every: Option<usize>,
}

impl Default for TrainConfig {
    /// 700 epochs, batch 32, Adam at 5e-4 with the 1.0 → 0.005 ramp over 300
    /// epochs.
    fn default() -> Self {
        Self {
            epochs: 700,
            batch_size: 32,
            base_lr: 5e-4,
            schedule: LinearSchedule::default(),
            seed: 0,
            precision: Precision::F32,
            eval_every: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", self.base_lr)));
        }
        if self.eval_every == Some(0) {
            return Err(Error::Config("eval_every must be >= 1".into()));
        }
        Ok(())
    }

    pub fn echo(&self) -> String {
        format!(
            "epochs={} batch_size={} base_lr={:?} scheduler_start={:?} scheduler_end={:?} scheduler_iters={} scheduler_unit={} seed={} precision={}",
            self.epochs,
            self.batch_size,
            self.base_lr,
            self.schedule.start_factor,
            self.schedule.end_factor,
            self.schedule.total_iters,
            self.schedule.unit.as_str(),
            self.seed,
            self.precision.as_str(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    /// Mean loss over the epoch's mini-batches, weighted by batch size.
    pub train_mse: f64,
    pub test_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub config: TrainConfig,
    pub records: Vec<EpochRecord>,
}

impl History {
    /// Line-delimited text: `#` header lines, then one record per epoch.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# training history\n");
        let _ = writeln!(out, "# {}", self.config.echo());
        for r in &self.records {
            let _ = write!(out, "epoch={} lr={:?} train_mse={:?}", r.epoch, r.lr, r.train_mse);
            if let Some(t) = r.test_mse {
                let _ = write!(out, " test_mse={t:?}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Stack far-field inputs and near-field targets for the given samples.
pub fn gather<T: Real>(dataset: &Dataset, indices: &[usize]) -> Result<(Tensor<T>, Tensor<T>)> {
    let m = &dataset.manifest;
    let [fc, fh, fw] = m.ff_shape();
    let [nc, nh, nw] = m.nf_shape();
    let mut ff = Vec::with_capacity(indices.len() * fc * fh * fw);
    let mut nf = Vec::with_capacity(indices.len() * nc * nh * nw);
    for &i in indices {
        let s = dataset
            .samples
            .get(i)
            .ok_or_else(|| Error::Config(format!("sample index {i} out of range ({})", dataset.len())))?;
        ff.extend(s.ff.iter().map(|&v| T::from_f32(v).expect("f32 fits")));
        nf.extend(s.nf.iter().map(|&v| T::from_f32(v).expect("f32 fits")));
    }
    Ok((
        Tensor::new(vec![indices.len(), fc, fh, fw], ff)?,
        Tensor::new(vec![indices.len(), nc, nh, nw], nf)?,
    ))
}

fn check_model_matches(model_cfg: &ModelConfig, dataset: &Dataset) -> Result<()> {
    let m = &dataset.manifest;
    let [fc, fh, _] = m.ff_shape();
    if model_cfg.in_channels != fc || model_cfg.input_side != fh {
        return Err(Error::shape("model input", [fc, fh, fh], [model_cfg.in_channels, model_cfg.input_side, model_cfg.input_side]));
    }
    if model_cfg.output_shape != m.nf_shape() {
        return Err(Error::shape("model output", m.nf_shape(), model_cfg.output_shape));
    }
    Ok(())
}

/// Mini-batch Adam training. Keeps optimizer state and the history so far,
/// so a failed run can still be inspected and checkpointed.
pub struct Trainer<T> {
    pub config: TrainConfig,
    pub adam: AdamState<T>,
    pub history: History,
}

impl<T: Real> Trainer<T> {
    pub fn new(config: TrainConfig, model: &Model<T>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            adam: AdamState::new(model.params()),
            history: History {
                config: config.clone(),
                records: Vec::new(),
            },
            config,
        })
    }

    fn lr_at(&self, epoch: usize, batch: u64) -> f64 {
        let step = match self.config.schedule.unit {
            ScheduleUnit::Epoch => epoch as u64,
            ScheduleUnit::Batch => batch,
        };
        self.config.base_lr * self.config.schedule.factor(step)
    }

    /// Run every epoch. On a non-finite loss the model is left at its last
    /// finite parameters and the error names the epoch and batch.
    pub fn run(&mut self, model: &mut Model<T>, dataset: &Dataset, train_idx: &[usize], test_idx: &[usize]) -> Result<()> {
        check_model_matches(model.config(), dataset)?;
        if train_idx.is_empty() {
            return Err(Error::Config("training set is empty".into()));
        }
        let range = dataset.manifest.value_range();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let mut order = train_idx.to_vec();
        let mut batch_counter = 0u64;
        for epoch in 0..self.config.epochs {
            order.shuffle(&mut rng);
            let epoch_lr = self.lr_at(epoch, batch_counter);
            let mut weighted = 0f64;
            for (b, chunk) in order.chunks(self.config.batch_size).enumerate() {
                let lr = self.lr_at(epoch, batch_counter);
                let (x, y) = gather::<T>(dataset, chunk)?;
                let loss = model.train_step(&x, &y, &mut self.adam, lr).map_err(|e| match e {
                    Error::NonFinite { context } => Error::NonFinite {
                        context: format!("{context} at epoch {} batch {b}", epoch + 1),
                    },
                    other => other,
                })?;
                weighted += loss.to_f64_lossy() * chunk.len() as f64;
                batch_counter += 1;
            }
            let last = epoch + 1 == self.config.epochs;
            let test_mse = match self.config.eval_every {
                Some(every) if !test_idx.is_empty() && ((epoch + 1) % every == 0 || last) => {
                    Some(evaluate(model, dataset, test_idx, range)?.mse)
                }
                _ => None,
            };
            self.history.records.push(EpochRecord {
                epoch: epoch + 1,
                lr: epoch_lr,
                train_mse: weighted / order.len() as f64,
                test_mse,
            });
        }
        Ok(())
    }
}

/// Convenience wrapper around [`Trainer`].
pub fn train<T: Real>(
    model: &mut Model<T>,
    dataset: &Dataset,
    train_idx: &[usize],
    test_idx: &[usize],
    config: &TrainConfig,
) -> Result<(History, AdamState<T>)> {
    let mut trainer = Trainer::new(config.clone(), model)?;
    trainer.run(model, dataset, train_idx, test_idx)?;
    Ok((trainer.history, trainer.adam))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mse: f64,
    /// `sqrt(mse) / (max - min)`; NaN when the range is degenerate.
    pub nrmse: f64,
    pub value_range: (f64, f64),
}

impl Metrics {
    pub fn from_mse(mse: f64, value_range: (f64, f64)) -> Self {
        let span = value_range.1 - value_range.0;
        let nrmse = if span > 0.0 { mse.sqrt() / span } else { f64::NAN };
        Self { mse, nrmse, value_range }
    }

    pub fn rmse(&self) -> f64 {
        self.mse.sqrt()
    }

    /// Human-readable header plus a `key = value` block.
    pub fn report(&self, samples: usize) -> String {
        format!(
            "# evaluation metrics\nsamples = {samples}\nmse = {:?}\nrmse = {:?}\nnrmse = {:?}\nvalue_min = {:?}\nvalue_max = {:?}\n",
            self.mse,
            self.rmse(),
            self.nrmse,
            self.value_range.0,
            self.value_range.1
        )
    }
}

/// Squared-error sum and element count of predictions against targets.
fn squared_error<T: Real>(model: &Model<T>, dataset: &Dataset, indices: &[usize]) -> Result<(f64, usize)> {
    check_model_matches(model.config(), dataset)?;
    let mut sum = 0f64;
    let mut count = 0usize;
    for chunk in indices.chunks(EVAL_BATCH) {
        let (x, y) = gather::<T>(dataset, chunk)?;
        let pred = model.forward(&x)?;
        for (p, t) in pred.data().iter().zip(y.data()) {
            let d = p.to_f64_lossy() - t.to_f64_lossy();
            sum += d * d;
        }
        count += y.len();
    }
    Ok((sum, count))
}

/// MSE over every element of the selected samples and NRMSE against `range`.
pub fn evaluate<T: Real>(model: &Model<T>, dataset: &Dataset, indices: &[usize], range: (f64, f64)) -> Result<Metrics> {
    if indices.is_empty() {
        return Err(Error::Config("cannot evaluate an empty sample set".into()));
    }
    let (sum, count) = squared_error(model, dataset, indices)?;
    Ok(Metrics::from_mse(sum / count as f64, range))
}

pub struct Prediction<T> {
    pub output: Tensor<T>,
    pub elapsed: Duration,
}

/// Single timed forward pass.
pub fn predict<T: Real>(model: &Model<T>, ff: &Tensor<T>) -> Result<Prediction<T>> {
    let start = Instant::now();
    let output = model.forward(ff)?;
    Ok(Prediction {
        output,
        elapsed: start.elapsed(),
    })
}

/// Seeded partition of `0..count` into `k` folds whose sizes differ by at
/// most one.
pub fn kfold_partition(count: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    if k > count {
        return Err(Error::Config(format!("k = {k} exceeds {count} samples")));
    }
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((0..k).map(|f| order[f * count / k..(f + 1) * count / k].to_vec()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub fold_mses: Vec<f64>,
    pub fold_sizes: Vec<usize>,
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
}

impl CvResult {
    pub fn from_folds(fold_mses: Vec<f64>, fold_sizes: Vec<usize>) -> Self {
        let (mean, std) = mean_and_population_std(&fold_mses);
        Self {
            fold_mses,
            fold_sizes,
            mean,
            std,
        }
    }

    pub fn report(&self) -> String {
        let mut out = String::from("# cross-validation (std is the population standard deviation over folds)\n");
        let _ = writeln!(out, "k = {}", self.fold_mses.len());
        for (i, (m, n)) in self.fold_mses.iter().zip(&self.fold_sizes).enumerate() {
            let _ = writeln!(out, "fold.{i}.size = {n}");
            let _ = writeln!(out, "fold.{i}.mse = {m:?}");
        }
        let _ = writeln!(out, "mean_mse = {:?}", self.mean);
        let _ = writeln!(out, "std_mse = {:?}", self.std);
        out
    }
}

pub fn mean_and_population_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Train a fresh model on `k - 1` folds and test on the held-out one, for
/// each fold in turn. `partition_seed` fixes the folds; every fold's model
/// starts from `model_seed`.
pub fn kfold_cv<T: Real>(
    dataset: &Dataset,
    k: usize,
    model_config: &ModelConfig,
    config: &TrainConfig,
    partition_seed: u64,
    model_seed: u64,
) -> Result<CvResult> {
    let folds = kfold_partition(dataset.len(), k, partition_seed)?;
    let range = dataset.manifest.value_range();
    let mut mses = Vec::with_capacity(k);
    for (f, test) in folds.iter().enumerate() {
        let train_idx: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, idx)| idx.iter().copied())
            .collect();
        let mut model = Model::<T>::init(model_config.clone(), model_seed)?;
        train(&mut model, dataset, &train_idx, &[], config)?;
        mses.push(evaluate(&model, dataset, test, range)?.mse);
    }
    Ok(CvResult::from_folds(mses, folds.iter().map(Vec::len).collect()))
}
