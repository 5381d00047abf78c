//! k-fold cross-validation on a reduced geometry (11x11 far field, 5x5
//! near field) with the published architecture and optimizer settings.
//!
//! ```text
//! cargo run --release --example cross_validation -- [samples] [k] [epochs]
//! ```

use fieldnet::dataset::{self, Normalization};
use fieldnet::em::{ArrayLayout, GridSpec};
use fieldnet::nn::ModelConfig;
use fieldnet::train::{kfold_cv, TrainConfig};

fn main() -> fieldnet::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let (samples, k, epochs) = (*args.first().unwrap_or(&60), *args.get(1).unwrap_or(&10), *args.get(2).unwrap_or(&20));

    let layout = ArrayLayout::published();
    let l = layout.wavelength();
    let nf = GridSpec::from_wavelengths(4.5, 2.0, 0.5, l)?;
    let ff = GridSpec::from_wavelengths(25.0, 5.0, 0.5, l)?;
    let ds = dataset::generate(&layout, &nf, &ff, samples, 5, Normalization::None)?;
    let model = ModelConfig::for_sides(ff.points_per_side(), nf.points_per_side());
    let config = TrainConfig { epochs, ..TrainConfig::default() };
    let r = kfold_cv::<f32>(&ds, k, &model, &config, 0, 0)?;
    print!("{}", r.report());
    Ok(())
}
