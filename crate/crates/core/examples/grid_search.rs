//! Grid search over pooling, activation and kernel size on a reduced
//! geometry, with a resumable log.
//!
//! ```text
//! cargo run --release --example grid_search -- [epochs_per_trial]
//! ```
//! Run it twice: the second run reads every trial back from the log.

use fieldnet::dataset::{self, Normalization};
use fieldnet::em::{ArrayLayout, GridSpec};
use fieldnet::hyperopt::{run_search, Axis, BudgetConfig, SearchSpace};

fn main() -> fieldnet::Result<()> {
    let epochs: usize = std::env::args().nth(1).map_or(20, |a| a.parse().expect("epoch count"));
    let layout = ArrayLayout::published();
    let l = layout.wavelength();
    let nf = GridSpec::from_wavelengths(4.5, 2.0, 0.5, l)?;
    let ff = GridSpec::from_wavelengths(25.0, 5.0, 0.5, l)?;
    let ds = dataset::generate(&layout, &nf, &ff, 80, 9, Normalization::None)?;
    let split = dataset::split(ds.len(), 64, 16, 0)?;

    let log = std::env::temp_dir().join("fieldnet-grid-search.log");
    let budget = BudgetConfig { epochs, seed: 1, ..BudgetConfig::default() };
    let axes = [Axis::Pool, Axis::Activation, Axis::Kernel];
    let report = run_search::<f32>(&SearchSpace::default(), &axes, &ds, &split.train, &split.test, &budget, Some(&log))?;
    print!("{}", report.to_text());
    println!("{} trials resumed from {}", report.resumed, log.display());
    Ok(())
}
