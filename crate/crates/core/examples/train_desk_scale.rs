//! Desk-scale training run on the published architecture and geometry.
//!
//! Generates `samples` phase configurations, trains on all but 50 of them
//! and reports train/test metrics.
//!
//! ```text
//! cargo run --release --example train_desk_scale -- [samples] [epochs] [none|max-abs]
//! ```
//! Defaults are 550 samples, 60 epochs, unnormalized fields.

use std::time::Instant;

use fieldnet::dataset::{self, Normalization};
use fieldnet::em::{ArrayLayout, GridSpec};
use fieldnet::nn::{Model, ModelConfig};
use fieldnet::train::{self, TrainConfig};

fn main() -> fieldnet::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let int = |i: usize, default: usize| args.get(i).map_or(default, |a| a.parse().expect("integer argument"));
    let samples = int(0, 550);
    let epochs = int(1, 60);
    let normalization = match args.get(2) {
        Some(s) => Normalization::parse(s)?,
        None => Normalization::None,
    };
    let test_n = 50.min(samples / 10).max(1);

    let layout = ArrayLayout::published();
    let l = layout.wavelength();
    let ds = dataset::generate(
        &layout,
        &GridSpec::published_near_field(l),
        &GridSpec::published_far_field(l),
        samples,
        2024,
        normalization,
    )?;
    let split = dataset::split(samples, samples - test_n, test_n, 1)?;
    let range = ds.manifest.value_range();
    println!("near-field range [{:.4}, {:.4}]", range.0, range.1);

    let mut model = Model::<f32>::init(ModelConfig::published(), 7)?;
    let initial = train::evaluate(&model, &ds, &split.train, range)?;
    println!("initial train mse {:.6e}", initial.mse);
    let config = TrainConfig {
        epochs,
        seed: 11,
        eval_every: Some(10),
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let (history, _) = train::train(&mut model, &ds, &split.train, &split.test, &config)?;
    for r in &history.records {
        match r.test_mse {
            Some(t) => println!("epoch {:3}  lr {:.3e}  train {:.6e}  test {:.6e}", r.epoch, r.lr, r.train_mse, t),
            None => println!("epoch {:3}  lr {:.3e}  train {:.6e}", r.epoch, r.lr, r.train_mse),
        }
    }
    let train_m = train::evaluate(&model, &ds, &split.train, range)?;
    let test_m = train::evaluate(&model, &ds, &split.test, range)?;
    println!(
        "final train mse {:.6e} (initial/{:.1}), test mse {:.6e}, test nrmse {:.3e}, {:.1} s",
        train_m.mse,
        initial.mse / train_m.mse,
        test_m.mse,
        test_m.nrmse,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
