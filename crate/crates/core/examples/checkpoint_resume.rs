//! Save a model with its optimizer state, reload it and keep training.
//!
//! ```text
//! cargo run --release --example checkpoint_resume
//! ```

use fieldnet::dataset::{self, Normalization};
use fieldnet::em::{ArrayLayout, GridSpec};
use fieldnet::nn::checkpoint::{read_checkpoint, read_checkpoint_header, write_checkpoint};
use fieldnet::nn::{Model, ModelConfig};
use fieldnet::train::{self, TrainConfig, Trainer};

fn main() -> fieldnet::Result<()> {
    let layout = ArrayLayout::published();
    let l = layout.wavelength();
    let nf = GridSpec::from_wavelengths(4.5, 2.0, 0.5, l)?;
    let ff = GridSpec::from_wavelengths(25.0, 5.0, 0.5, l)?;
    let ds = dataset::generate(&layout, &nf, &ff, 40, 1, Normalization::None)?;
    let idx: Vec<usize> = (0..ds.len()).collect();
    let range = ds.manifest.value_range();

    let mut model = Model::<f64>::init(ModelConfig::for_sides(11, 5), 3)?;
    let (_, adam) = train::train(&mut model, &ds, &idx, &[], &TrainConfig { epochs: 10, ..TrainConfig::default() })?;
    let path = std::env::temp_dir().join("fieldnet-resume.ckpt");
    write_checkpoint(&model, Some(&adam), &path)?;

    let header = read_checkpoint_header(&path)?;
    let (mut restored, state) = read_checkpoint::<f64>(&path)?;
    let state = state.expect("optimizer state saved");
    assert_eq!(restored, model);
    println!("{} checkpoint at Adam step {}, {} bytes", header.precision.as_str(), state.step, std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0));

    let mut trainer = Trainer::new(TrainConfig { epochs: 10, seed: 1, ..TrainConfig::default() }, &restored)?;
    trainer.adam = state;
    let before = train::evaluate(&restored, &ds, &idx, range)?.mse;
    trainer.run(&mut restored, &ds, &idx, &[])?;
    let after = train::evaluate(&restored, &ds, &idx, range)?.mse;
    println!("mse {before:.4e} -> {after:.4e} after 10 more epochs (Adam step {})", trainer.adam.step);
    Ok(())
}
