//! Generate a dataset, write it to disk and read it back.
//!
//! ```text
//! cargo run --release --example generate_dataset -- [samples] [out_dir]
//! ```
//! Uses the published geometry; defaults to 8 samples in the system temp
//! directory.

use std::path::PathBuf;

use fieldnet::dataset::{self, Normalization};
use fieldnet::em::{ArrayLayout, GridSpec};

fn main() -> fieldnet::Result<()> {
    let mut args = std::env::args().skip(1);
    let samples: usize = args.next().map_or(8, |s| s.parse().expect("sample count"));
    let dir = args.next().map_or_else(|| std::env::temp_dir().join("fieldnet-example"), PathBuf::from);
    std::fs::create_dir_all(&dir).expect("create output directory");

    let layout = ArrayLayout::published();
    let l = layout.wavelength();
    let ds = dataset::generate(&layout, &GridSpec::published_near_field(l), &GridSpec::published_far_field(l), samples, 42, Normalization::None)?;
    let stem = dir.join("dataset");
    dataset::write_dataset(&ds, &stem)?;
    let back = dataset::read_dataset(&stem)?;
    assert_eq!(back, ds);

    let m = &back.manifest;
    let (manifest, payload) = dataset::dataset_paths(&stem);
    println!("wrote {} and {}", manifest.display(), payload.display());
    println!("far field {:?}, near field {:?}, layout {}", m.ff_shape(), m.nf_shape(), &m.layout_hash[..12]);
    println!("near-field values in [{:?}, {:?}]", m.value_min, m.value_max);
    println!("first phases: {:?}", back.samples[0].config.phases_deg());
    println!("configuration space: {} phase assignments", dataset::configuration_space_size(16));
    Ok(())
}
