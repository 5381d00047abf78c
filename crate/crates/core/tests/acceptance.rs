//! Acceptance criteria 1 to 10. Prints one PASS/FAIL line per criterion and
//! fails if any criterion fails.

mod common;

use std::time::Instant;

use common::*;
use fieldnet::dataset::{self, Dataset, Normalization};
use fieldnet::em::{self, ArrayLayout, GridSpec, PhaseConfig};
use fieldnet::nn::checkpoint::write_checkpoint_to;
use fieldnet::nn::layers::{self, Activation, Pool};
use fieldnet::nn::{lr_factor, LinearSchedule, Model, ModelConfig, Tensor};
use fieldnet::train::{self, Metrics, TrainConfig};
use rand::Rng;
use sha2::{Digest, Sha256};

const DESK_SAMPLES: usize = 550;
const DESK_TRAIN: usize = 500;
const DESK_TEST: usize = 50;
const DESK_EPOCHS: usize = 60;
const DATA_SEED: u64 = 2024;
const SPLIT_SEED: u64 = 1;
const INIT_SEED: u64 = 7;
const SHUFFLE_SEED: u64 = 11;
const CV_EPOCHS: usize = 2;

struct Verdict {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(id: u32, name: &'static str, pass: bool, detail: String) -> Verdict {
    let v = Verdict { id, name, pass, detail };
    println!(
        "criterion {:2} [PRIMARY] {}: {} ({})",
        v.id,
        if v.pass { "PASS" } else { "FAIL" },
        v.name,
        v.detail
    );
    v
}

fn gradients() -> Verdict {
    let start = Instant::now();
    let mut worst: Vec<(&str, f64)> = Vec::new();
    let mut redrawn = 0;
    let mut track = |name: &'static str, e: f64| match worst.iter_mut().find(|(n, _)| *n == name) {
        Some(w) => w.1 = w.1.max(e),
        None => worst.push((name, e)),
    };
    for seed in 0..20u64 {
        let mut g = rng(1000 + seed);
        let k = g.gen_range(1..4);
        let case = ConvCase {
            n: g.gen_range(1..3),
            c: g.gen_range(1..4),
            side: k + g.gen_range(0..5),
            o: g.gen_range(1..4),
            k,
            stride: g.gen_range(1..3),
        };
        track("conv", check_conv(&case, seed));
        for a in Activation::ALL {
            track(a.as_str(), check_activation(a, g.gen_range(1..64), seed));
        }
        let shape = [g.gen_range(1..3), g.gen_range(1..3), g.gen_range(3..9), g.gen_range(3..9)];
        let pk = g.gen_range(2..4);
        track("avg_pool", check_pool(Pool::Avg, shape, pk, seed));
        track("max_pool", check_pool(Pool::Max, shape, pk, seed));
        track("linear", check_linear(g.gen_range(1..4), g.gen_range(1..100), g.gen_range(1..9), seed));
        track("mse", check_mse(g.gen_range(1..50), seed));
        let cfg = small_model_config(
            Activation::ALL[seed as usize % 3],
            if seed % 2 == 0 { Pool::Avg } else { Pool::Max },
            1 + seed as usize % 3,
            1 + (seed as usize / 3) % 2,
        );
        let batch = 1 + seed as usize % 2;
        let mut model_seed = seed;
        while kink_margin(&cfg, batch, model_seed) <= KINK_MARGIN {
            redrawn += 1;
            model_seed += 1 << 32;
        }
        track("model", check_model(&cfg, batch, model_seed));
    }
    let secs = start.elapsed().as_secs_f64();
    let max = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    let parts: Vec<String> = worst.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    verdict(
        1,
        "gradients match central differences",
        max < FD_TOL && secs < 60.0,
        format!(
            "20 seeds, worst rel err {max:.2e} < 1e-5 [{}], {redrawn} model cases redrawn off a kink, {secs:.1} s",
            parts.join(", ")
        ),
    )
}

fn superposition() -> Verdict {
    let start = Instant::now();
    let layout = ArrayLayout::published();
    let spec = GridSpec::published_near_field(layout.wavelength());
    let basis = em::precompute_basis(&layout, &spec).unwrap();
    let points = em::make_grid(&spec);
    let mut g = rng(77);
    let mut worst = 0f64;
    for _ in 0..50 {
        let q: Vec<u8> = (0..16).map(|_| g.gen_range(0..4)).collect();
        let cfg = PhaseConfig::from_quadrants(&q).unwrap();
        let field = em::superpose(&basis, &cfg).unwrap();
        for (pt, e) in points.iter().zip(field.values()) {
            worst = worst.max(vec_rel_err(e, &oracle_array_field(&layout, &cfg, *pt)));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        2,
        "cached superposition equals direct array summation",
        worst < 1e-12 && secs < 60.0,
        format!("50 configs x 41x41 points, max rel diff {worst:.2e} < 1e-12, {secs:.1} s"),
    )
}

fn physics() -> Verdict {
    let start = Instant::now();
    let layout = ArrayLayout::published();
    let l = layout.wavelength();
    let cfg = PhaseConfig::zeros(16);
    let boresight = |r: f64| {
        let spec = GridSpec::new(r * l, 0.0, l).unwrap();
        em::superpose(&em::precompute_basis(&layout, &spec).unwrap(), &cfg).unwrap().magnitude()[0]
    };
    let reference = boresight(100.0) * 100.0;
    let mut decay_err = 0f64;
    for step in 0..=30 {
        let r = 100.0 + 10.0 * step as f64;
        decay_err = decay_err.max((boresight(r) * r / reference - 1.0).abs());
    }
    let nfb = em::precompute_basis(&layout, &GridSpec::published_near_field(l)).unwrap();
    let ffb = em::precompute_basis(&layout, &GridSpec::published_far_field(l)).unwrap();
    let mut g = rng(5);
    let mut contrast_ok = true;
    let mut min_gap = f64::INFINITY;
    for i in 0..5 {
        let cfg = if i == 0 {
            PhaseConfig::zeros(16)
        } else {
            PhaseConfig::from_quadrants(&(0..16).map(|_| g.gen_range(0..4)).collect::<Vec<u8>>()).unwrap()
        };
        let near = em::mean_radial_ratio(&em::superpose(&nfb, &cfg).unwrap());
        let far = em::mean_radial_ratio(&em::superpose(&ffb, &cfg).unwrap());
        contrast_ok &= near > far;
        min_gap = min_gap.min(near - far);
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        3,
        "1/r boresight decay and near/far radial contrast",
        decay_err < 0.02 && contrast_ok && secs < 60.0,
        format!(
            "|E|r deviation {:.3}% over 100..400 lambda (< 2%), radial ratio near - far >= {min_gap:.3e} on 5 configs, {secs:.1} s",
            100.0 * decay_err
        ),
    )
}

fn shapes() -> Verdict {
    let cfg = ModelConfig::published();
    let model = Model::<f32>::zeros(cfg.clone()).unwrap();
    let x = Tensor::<f32>::zeros(vec![1, 6, 101, 101]);
    let p = model.params();
    let conv = layers::conv2d_forward(&x, &p.tensors[0], &p.tensors[1], cfg.stride).unwrap();
    let pooled = layers::pool_forward(cfg.pool, &layers::activation_forward(cfg.activation, &conv), cfg.pool_kernel).unwrap();
    let out = model.forward(&x).unwrap();
    let observed = (
        conv.shape().to_vec(),
        pooled.shape().to_vec(),
        cfg.flattened_dim(),
        cfg.output_dim(),
        out.shape().to_vec(),
    );
    let expected = (vec![1, 10, 97, 97], vec![1, 10, 48, 48], Some(23_040), 10_086, vec![1, 6, 41, 41]);
    verdict(
        4,
        "published shape contract",
        observed == expected,
        format!(
            "6x101x101 -> {:?} -> {:?} -> {:?} -> {} -> {:?}",
            &observed.0[1..],
            &observed.1[1..],
            observed.2,
            observed.3,
            &observed.4[1..]
        ),
    )
}

fn scheduler() -> Verdict {
    let mid = lr_factor(150);
    let ends = lr_factor(0) == 1.0 && [300, 301, 700, 10_000].iter().all(|&s| lr_factor(s) == 0.005);
    let pass = ends && (mid - 0.5025).abs() < 1e-12 && LinearSchedule::default().factor(300) == 0.005;
    verdict(5, "scheduler endpoints", pass, format!("factor(0)={}, factor(>=300)={}, factor(150)={mid}", lr_factor(0), lr_factor(300)))
}

fn metric_identity() -> Verdict {
    let m = Metrics::from_mse(0.3898, (-3748.556, 3456.257));
    verdict(
        6,
        "NRMSE identity",
        (m.nrmse / 8.66e-5 - 1.0).abs() < 0.01,
        format!("nrmse {:.4e} vs 8.66e-5 (within {:.2}%)", m.nrmse, 100.0 * (m.nrmse / 8.66e-5 - 1.0).abs()),
    )
}

/// Published geometry with every plane scaled by its dataset max-abs.
fn desk_dataset() -> Dataset {
    let layout = ArrayLayout::published();
    let l = layout.wavelength();
    dataset::generate(
        &layout,
        &GridSpec::published_near_field(l),
        &GridSpec::published_far_field(l),
        DESK_SAMPLES,
        DATA_SEED,
        Normalization::MaxAbs,
    )
    .unwrap()
}

struct DeskRun {
    initial_train_mse: f64,
    train: Metrics,
    test: Metrics,
    checkpoint_sha256: String,
    history_text: String,
    seconds: f64,
}

fn desk_run(ds: &Dataset) -> (DeskRun, Model<f32>) {
    let start = Instant::now();
    let split = dataset::split(ds.len(), DESK_TRAIN, DESK_TEST, SPLIT_SEED).unwrap();
    let range = ds.manifest.value_range();
    let mut model = Model::<f32>::init(ModelConfig::published(), INIT_SEED).unwrap();
    let initial_train_mse = train::evaluate(&model, ds, &split.train, range).unwrap().mse;
    let config = TrainConfig { epochs: DESK_EPOCHS, seed: SHUFFLE_SEED, eval_every: Some(10), ..TrainConfig::default() };
    let (history, adam) = train::train(&mut model, ds, &split.train, &split.test, &config).unwrap();
    let train_m = train::evaluate(&model, ds, &split.train, range).unwrap();
    let test_m = train::evaluate(&model, ds, &split.test, range).unwrap();
    let mut hasher = HashWriter(Sha256::new());
    write_checkpoint_to(&model, Some(&adam), &mut hasher).unwrap();
    let run = DeskRun {
        initial_train_mse,
        train: train_m,
        test: test_m,
        checkpoint_sha256: format!("{:x}", hasher.0.finalize()),
        history_text: history.to_text(),
        seconds: start.elapsed().as_secs_f64(),
    };
    (run, model)
}

struct HashWriter(Sha256);

impl std::io::Write for HashWriter {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

fn learning(run: &DeskRun) -> Verdict {
    let ratio = run.initial_train_mse / run.train.mse;
    for line in run.history_text.lines() {
        println!("    {line}");
    }
    verdict(
        7,
        "desk-scale learning",
        ratio > 10.0 && run.test.nrmse < 5e-3,
        format!(
            "max-abs scaled fields, train mse {:.4e} -> {:.4e} (initial/{ratio:.1}, need > 10), test mse {:.4e}, test nrmse {:.3e} (need < 5e-3), range [{:.4}, {:.4}], {:.0} s",
            run.initial_train_mse,
            run.train.mse,
            run.test.mse,
            run.test.nrmse,
            run.test.value_range.0,
            run.test.value_range.1,
            run.seconds
        ),
    )
}

fn determinism(a: &DeskRun, b: &DeskRun) -> Verdict {
    let same_metrics = a.train.mse.to_bits() == b.train.mse.to_bits()
        && a.test.mse.to_bits() == b.test.mse.to_bits()
        && a.initial_train_mse.to_bits() == b.initial_train_mse.to_bits()
        && a.history_text == b.history_text;
    verdict(
        8,
        "bitwise-reproducible desk run",
        a.checkpoint_sha256 == b.checkpoint_sha256 && same_metrics,
        format!("checkpoint sha256 {} vs {}, metrics and history identical: {same_metrics}", &a.checkpoint_sha256[..16], &b.checkpoint_sha256[..16]),
    )
}

fn cross_validation(ds: &Dataset) -> Verdict {
    let start = Instant::now();
    let config = TrainConfig { epochs: CV_EPOCHS, seed: SHUFFLE_SEED, ..TrainConfig::default() };
    let r = train::kfold_cv::<f32>(ds, 10, &ModelConfig::published(), &config, SPLIT_SEED, INIT_SEED).unwrap();
    let n = r.fold_mses.len() as f64;
    let mean = r.fold_mses.iter().sum::<f64>() / n;
    let std = (r.fold_mses.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / n).sqrt();
    let spread = r.fold_sizes.iter().max().unwrap() - r.fold_sizes.iter().min().unwrap();
    let pass = r.fold_mses.len() == 10 && mean == r.mean && std == r.std && spread <= 1 && r.fold_sizes.iter().sum::<usize>() == ds.len();
    verdict(
        9,
        "10-fold cross-validation",
        pass,
        format!(
            "fold sizes {:?}, mean {:.4e}, std {:.4e} recomputed exactly: {}, {CV_EPOCHS} epochs per fold, {:.0} s",
            r.fold_sizes,
            r.mean,
            r.std,
            mean == r.mean && std == r.std,
            start.elapsed().as_secs_f64()
        ),
    )
}

fn latency(model: &Model<f32>, ds: &Dataset) -> Verdict {
    let (x, _) = train::gather::<f32>(ds, &[0]).unwrap();
    let times: Vec<f64> = (0..5).map(|_| train::predict(model, &x).unwrap().elapsed.as_secs_f64()).collect();
    let worst = times.iter().copied().fold(0.0, f64::max);
    verdict(10, "single inference latency", worst < 1.0, format!("worst of 5 single-sample passes {:.1} ms (< 1000 ms)", worst * 1e3))
}

fn main() {
    let mut verdicts = vec![gradients(), superposition(), physics(), shapes(), scheduler(), metric_identity()];
    let ds = desk_dataset();
    let (first, model) = desk_run(&ds);
    verdicts.push(learning(&first));
    verdicts.push(latency(&model, &ds));
    // One published-size model with its optimizer state at a time.
    drop(model);
    let (second, _) = desk_run(&ds);
    verdicts.push(determinism(&first, &second));
    verdicts.push(cross_validation(&ds));

    verdicts.sort_by_key(|v| v.id);
    println!("acceptance summary:");
    for v in &verdicts {
        println!("  criterion {:2} {}", v.id, if v.pass { "PASS" } else { "FAIL" });
    }
    let failed: Vec<u32> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
