//! Field engine tour: the reference array, its Fraunhofer distance, one
//! element's exact dipole field and a phased superposition on both planes.
//!
//! ```text
//! cargo run --release --example array_fields
//! ```

use fieldnet::em::{self, ArrayLayout, GridSpec, PhaseConfig};

fn main() -> fieldnet::Result<()> {
    let layout = ArrayLayout::published();
    let l = layout.wavelength();
    let d = layout.aperture_dimension();
    println!("{} elements, lambda = {:.3} mm, aperture D = {:.2} lambda", layout.element_count(), l * 1e3, d / l);
    println!("far-field boundary 2D^2/lambda = {:.2} lambda", em::far_field_boundary(d, l)? / l);

    for r in [0.05, 1.0, 4.5, 25.0, 100.0] {
        let e = em::element_field(&layout, 0, [0.0, 0.0, r * l])?;
        let p = layout.element_positions()[0];
        let (radial, transverse) = em::radial_transverse(&e, [-p[0], -p[1], r * l]);
        println!("element 0 at z = {r:>6} lambda: |E| = {:.4e}, radial/transverse = {:.3e}", em::field_magnitude(&e), radial / transverse);
    }

    let config = PhaseConfig::new(vec![0, 90, 180, 270, 90, 180, 270, 0, 180, 270, 0, 90, 270, 0, 90, 180])?;
    for (name, spec) in [("near", GridSpec::published_near_field(l)), ("far", GridSpec::published_far_field(l))] {
        let basis = em::precompute_basis(&layout, &spec)?;
        let field = em::superpose(&basis, &config)?;
        let mag = field.magnitude();
        let peak = mag.iter().copied().fold(0.0, f64::max);
        println!(
            "{name:>4} plane: {0}x{0} points at z = {1} lambda, peak |E| {peak:.4e}, mean radial ratio {2:.4}",
            spec.points_per_side(),
            spec.plane_height_z() / l,
            em::mean_radial_ratio(&field)
        );
    }
    Ok(())
}
