//! Train briefly on a reduced geometry, then write ground-truth and
//! predicted |E| maps of one test sample as CSV and PGM on a shared scale.
//!
//! ```text
//! cargo run --release --example field_images -- [out_dir]
//! ```

use std::path::PathBuf;

use fieldnet::cli::{grid_csv, grid_pgm};
use fieldnet::dataset::{self, packed_magnitude, Normalization};
use fieldnet::em::{ArrayLayout, GridSpec};
use fieldnet::nn::{Model, ModelConfig};
use fieldnet::train::{self, TrainConfig};

fn main() -> fieldnet::Result<()> {
    let dir = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("fieldnet-images"), PathBuf::from);
    std::fs::create_dir_all(&dir).expect("create output directory");

    let layout = ArrayLayout::published();
    let l = layout.wavelength();
    let nf = GridSpec::from_wavelengths(4.5, 10.0, 0.5, l)?;
    let ff = GridSpec::from_wavelengths(25.0, 20.0, 0.5, l)?;
    let ds = dataset::generate(&layout, &nf, &ff, 120, 3, Normalization::None)?;
    let split = dataset::split(ds.len(), 100, 20, 0)?;
    let mut model = Model::<f32>::init(ModelConfig::for_sides(ff.points_per_side(), nf.points_per_side()), 0)?;
    train::train(&mut model, &ds, &split.train, &[], &TrainConfig { epochs: 40, ..TrainConfig::default() })?;

    let index = split.test[0];
    let (x, _) = train::gather::<f32>(&ds, &[index])?;
    let pred = model.forward(&x)?;
    let side = nf.points_per_side();
    let truth = packed_magnitude(&ds.samples[index].nf, side * side)?;
    let predicted = packed_magnitude(pred.data(), side * side)?;
    let lo = truth.iter().chain(&predicted).copied().fold(f64::INFINITY, f64::min);
    let hi = truth.iter().chain(&predicted).copied().fold(f64::NEG_INFINITY, f64::max);
    for (name, values) in [("truth", &truth), ("pred", &predicted)] {
        std::fs::write(dir.join(format!("{name}.csv")), grid_csv(values, side)).expect("write csv");
        std::fs::write(dir.join(format!("{name}.pgm")), grid_pgm(values, side, lo, hi)).expect("write pgm");
    }
    let m = train::evaluate(&model, &ds, &split.test, ds.manifest.value_range())?;
    println!("sample {index}: {side}x{side} maps in {}, shared scale [{lo:.4}, {hi:.4}], test nrmse {:.3e}", dir.display(), m.nrmse);
    Ok(())
}
