//! Analytic field synthesis for a planar phased array.
//!
//! Each element is an infinitesimal electric dipole in free space. With time
//! convention `e^{+jωt}` and outgoing phase `e^{-jkR}`, the exact field of a
//! dipole with unit orientation `p` at distance `R` along unit vector `n` is
//!
//! ```text
//! E = A e^{-jkR} [ (p - n(n·p)) / (kR) + (3n(n·p) - p) (1/(kR)^3 + j/(kR)^2) ]
//! ```
//!
//! expressed in units of `k^3 |p| / (4π ε0)`, with `A` the excitation
//! amplitude of the layout. The `1/(kR)^2` and `1/(kR)^3` terms carry the
//! reactive and radial content that is present on the near-field plane and
//! has decayed by the far-field plane.
//!
//! Fields for unit excitation are computed once per element
//! ([`precompute_basis`]); any phase configuration is then a weighted sum
//! ([`superpose`]).

use num_complex::Complex64;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Operating frequency of the reference array.
pub const PAPER_FREQUENCY_HZ: f64 = 30.0e9;

/// Allowed per-element phase values in degrees.
pub const PHASE_STATES_DEG: [u16; 4] = [0, 90, 180, 270];

/// Complex `(Ex, Ey, Ez)`.
pub type Field3 = [Complex64; 3];

/// Geometry and excitation of the radiating array. Elements sit in the
/// `z = 0` plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayLayout {
    frequency: f64,
    element_positions: Vec<[f64; 2]>,
    polarization_axis: [f64; 3],
    excitation_amplitude: f64,
}

impl ArrayLayout {
    pub fn new(
        frequency: f64,
        element_positions: Vec<[f64; 2]>,
        polarization_axis: [f64; 3],
        excitation_amplitude: f64,
    ) -> Result<Self> {
        if !(frequency.is_finite() && frequency > 0.0) {
            return Err(Error::Domain(format!("frequency must be > 0, got {frequency}")));
        }
        if element_positions.is_empty() {
            return Err(Error::Config("layout needs at least one element".into()));
        }
        for (i, a) in element_positions.iter().enumerate() {
            if !(a[0].is_finite() && a[1].is_finite()) {
                return Err(Error::Config(format!("element {i} position is not finite")));
            }
            for (j, b) in element_positions.iter().enumerate().skip(i + 1) {
                if a == b {
                    return Err(Error::Config(format!(
                        "elements {i} and {j} share position {a:?}"
                    )));
                }
            }
        }
        let norm = polarization_axis.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "polarization axis must be a unit vector, norm is {norm}"
            )));
        }
        if !excitation_amplitude.is_finite() {
            return Err(Error::Config("excitation amplitude is not finite".into()));
        }
        Ok(Self {
            frequency,
            element_positions,
            polarization_axis,
            excitation_amplitude,
        })
    }

    /// Centered `rows × cols` lattice with uniform `pitch`, y-polarized.
    pub fn lattice(frequency: f64, rows: usize, cols: usize, pitch: f64) -> Result<Self> {
        let mut positions = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let x = (c as f64 - (cols as f64 - 1.0) / 2.0) * pitch;
                let y = (r as f64 - (rows as f64 - 1.0) / 2.0) * pitch;
                positions.push([x, y]);
            }
        }
        Self::new(frequency, positions, [0.0, 1.0, 0.0], 1.0)
    }

    /// The 4×4 array at 30 GHz with half-wavelength pitch.
    pub fn published() -> Self {
        let lambda = SPEED_OF_LIGHT / PAPER_FREQUENCY_HZ;
        Self::lattice(PAPER_FREQUENCY_HZ, 4, 4, lambda / 2.0)
            .expect("reference layout is valid")
    }

    pub fn with_single_element(frequency: f64, position: [f64; 2]) -> Result<Self> {
        Self::new(frequency, vec![position], [0.0, 1.0, 0.0], 1.0)
    }

    pub fn frequency(&self) -> f64 {
        self.frequency
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.frequency
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.wavelength()
    }

    pub fn element_positions(&self) -> &[[f64; 2]] {
        &self.element_positions
    }

    pub fn element_count(&self) -> usize {
        self.element_positions.len()
    }

    pub fn polarization_axis(&self) -> [f64; 3] {
        self.polarization_axis
    }

    pub fn excitation_amplitude(&self) -> f64 {
        self.excitation_amplitude
    }

    /// Largest side of the bounding box of element positions.
    pub fn aperture_dimension(&self) -> f64 {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &self.element_positions {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (hi[0] - lo[0]).max(hi[1] - lo[1])
    }

    /// SHA-256 over the exact bit patterns of every layout parameter.
    pub fn layout_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"fieldnet-layout-v1");
        h.update(self.frequency.to_le_bytes());
        h.update((self.element_positions.len() as u64).to_le_bytes());
        for p in &self.element_positions {
            h.update(p[0].to_le_bytes());
            h.update(p[1].to_le_bytes());
        }
        for c in self.polarization_axis {
            h.update(c.to_le_bytes());
        }
        h.update(self.excitation_amplitude.to_le_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A square sampling plane parallel to the array, centered on boresight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    plane_height_z: f64,
    extent: f64,
    spacing: f64,
    points_per_side: usize,
}

impl GridSpec {
    pub fn new(plane_height_z: f64, extent: f64, spacing: f64) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::Config(format!("grid spacing must be > 0, got {spacing}")));
        }
        if !(extent.is_finite() && extent >= 0.0) {
            return Err(Error::Config(format!("grid extent must be >= 0, got {extent}")));
        }
        if !plane_height_z.is_finite() {
            return Err(Error::Config("plane height is not finite".into()));
        }
        let cells = extent / spacing;
        let rounded = cells.round();
        if (cells - rounded).abs() > 1e-9 * rounded.max(1.0) {
            return Err(Error::Config(format!(
                "extent {extent} is not an integer multiple of spacing {spacing}"
            )));
        }
        Ok(Self {
            plane_height_z,
            extent,
            spacing,
            points_per_side: rounded as usize + 1,
        })
    }

    /// All lengths given in wavelengths.
    pub fn from_wavelengths(
        height: f64,
        extent: f64,
        spacing: f64,
        wavelength: f64,
    ) -> Result<Self> {
        // Validate the ratio in wavelength units where it is exact.
        Self::new(height, extent, spacing)?;
        let spec = Self::new(height * wavelength, extent * wavelength, spacing * wavelength)?;
        Ok(spec)
    }

    /// Near-field plane: 4.5λ above the array, 20λ square, λ/2 pitch.
    pub fn published_near_field(wavelength: f64) -> Self {
        Self::from_wavelengths(4.5, 20.0, 0.5, wavelength).expect("valid")
    }

    /// Far-field plane: 25λ above the array, 50λ square, λ/2 pitch.
    pub fn published_far_field(wavelength: f64) -> Self {
        Self::from_wavelengths(25.0, 50.0, 0.5, wavelength).expect("valid")
    }

    pub fn plane_height_z(&self) -> f64 {
        self.plane_height_z
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn points_per_side(&self) -> usize {
        self.points_per_side
    }

    pub fn point_count(&self) -> usize {
        self.points_per_side * self.points_per_side
    }

    /// Reconstruct a spec from stored fields, re-validating it.
    pub fn from_parts(
        plane_height_z: f64,
        extent: f64,
        spacing: f64,
        points_per_side: usize,
    ) -> Result<Self> {
        let spec = Self::new(plane_height_z, extent, spacing)?;
        if spec.points_per_side != points_per_side {
            return Err(Error::Config(format!(
                "points_per_side {points_per_side} disagrees with extent/spacing ({})",
                spec.points_per_side
            )));
        }
        Ok(spec)
    }
}

/// Sampled complex field on one plane, row-major (`y` rows, `x` columns).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    spec: GridSpec,
    values: Vec<Field3>,
}

impl FieldGrid {
    pub fn new(spec: GridSpec, values: Vec<Field3>) -> Result<Self> {
        if values.len() != spec.point_count() {
            return Err(Error::shape("field grid", spec.point_count(), values.len()));
        }
        if values
            .iter()
            .flatten()
            .any(|c| !(c.re.is_finite() && c.im.is_finite()))
        {
            return Err(Error::NonFinite {
                context: "field grid".into(),
            });
        }
        Ok(Self { spec, values })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[Field3] {
        &self.values
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.values.iter().map(field_magnitude).collect()
    }
}

/// `sqrt(|Ex|² + |Ey|² + |Ez|²)`
pub fn field_magnitude(e: &Field3) -> f64 {
    e.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// One quantized phase per element, in degrees.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PhaseConfig {
    phases_deg: Vec<u16>,
}

impl PhaseConfig {
    pub fn new(phases_deg: Vec<u16>) -> Result<Self> {
        if phases_deg.is_empty() {
            return Err(Error::Config("phase config is empty".into()));
        }
        if let Some(bad) = phases_deg.iter().find(|p| !PHASE_STATES_DEG.contains(p)) {
            return Err(Error::Config(format!(
                "phase {bad}° is not one of {PHASE_STATES_DEG:?}"
            )));
        }
        Ok(Self { phases_deg })
    }

    pub fn zeros(elements: usize) -> Self {
        Self {
            phases_deg: vec![0; elements],
        }
    }

    /// Build from quarter-turn indices `0..4`.
    pub fn from_quadrants(quadrants: &[u8]) -> Result<Self> {
        let mut phases = Vec::with_capacity(quadrants.len());
        for &q in quadrants {
            if q > 3 {
                return Err(Error::Config(format!("quadrant {q} out of range 0..4")));
            }
            phases.push(q as u16 * 90);
        }
        Self::new(phases)
    }

    pub fn phases_deg(&self) -> &[u16] {
        &self.phases_deg
    }

    pub fn len(&self) -> usize {
        self.phases_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases_deg.is_empty()
    }

    /// Add a multiple of 90° to every element.
    pub fn shifted(&self, delta_deg: u16) -> Result<Self> {
        if !delta_deg.is_multiple_of(90) {
            return Err(Error::Config(format!("shift {delta_deg}° is not a multiple of 90°")));
        }
        Ok(Self {
            phases_deg: self
                .phases_deg
                .iter()
                .map(|p| (p + delta_deg) % 360)
                .collect(),
        })
    }

    /// `e^{jφ}` for each element, exact for the four quantized states.
    pub fn weights(&self) -> Vec<Complex64> {
        self.phases_deg.iter().map(|&p| phase_weight(p)).collect()
    }
}

fn phase_weight(deg: u16) -> Complex64 {
    match deg {
        0 => Complex64::new(1.0, 0.0),
        90 => Complex64::new(0.0, 1.0),
        180 => Complex64::new(-1.0, 0.0),
        270 => Complex64::new(0.0, -1.0),
        _ => Complex64::from_polar(1.0, (deg as f64).to_radians()),
    }
}

/// Per-element unit-excitation fields on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementBasis {
    spec: GridSpec,
    per_element: Vec<FieldGrid>,
}

impl ElementBasis {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn per_element(&self) -> &[FieldGrid] {
        &self.per_element
    }

    pub fn element_count(&self) -> usize {
        self.per_element.len()
    }
}

/// Fraunhofer distance `2D²/λ`.
pub fn far_field_boundary(aperture: f64, wavelength: f64) -> Result<f64> {
    if !(aperture > 0.0 && wavelength > 0.0) {
        return Err(Error::Domain(format!(
            "aperture and wavelength must be > 0, got D={aperture}, λ={wavelength}"
        )));
    }
    Ok(2.0 * aperture * aperture / wavelength)
}

/// Exact field of element `element_index` under unit excitation at `obs_point`.
pub fn element_field(
    layout: &ArrayLayout,
    element_index: usize,
    obs_point: [f64; 3],
) -> Result<Field3> {
    let pos = layout
        .element_positions
        .get(element_index)
        .ok_or_else(|| {
            Error::Config(format!(
                "element {element_index} out of range for {} elements",
                layout.element_count()
            ))
        })?;
    let d = [obs_point[0] - pos[0], obs_point[1] - pos[1], obs_point[2]];
    let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if r == 0.0 {
        return Err(Error::Singularity {
            element: element_index,
        });
    }
    let n = [d[0] / r, d[1] / r, d[2] / r];
    let p = layout.polarization_axis;
    let n_dot_p = n[0] * p[0] + n[1] * p[1] + n[2] * p[2];

    let kr = layout.wavenumber() * r;
    let phase = Complex64::from_polar(layout.excitation_amplitude, -kr);
    let radiative = phase / kr;
    let reactive = phase * Complex64::new(1.0 / (kr * kr * kr), 1.0 / (kr * kr));

    let mut e = [Complex64::new(0.0, 0.0); 3];
    for a in 0..3 {
        let transverse = p[a] - n[a] * n_dot_p;
        let quasi_static = 3.0 * n[a] * n_dot_p - p[a];
        e[a] = radiative * transverse + reactive * quasi_static;
    }
    Ok(e)
}

/// Grid points in row-major order, centered at `(0, 0, z)`.
pub fn make_grid(spec: &GridSpec) -> Vec<[f64; 3]> {
    let n = spec.points_per_side;
    let center = (n as f64 - 1.0) / 2.0;
    let mut points = Vec::with_capacity(n * n);
    for iy in 0..n {
        let y = (iy as f64 - center) * spec.spacing;
        for ix in 0..n {
            let x = (ix as f64 - center) * spec.spacing;
            points.push([x, y, spec.plane_height_z]);
        }
    }
    points
}

/// Evaluate every element over the grid once, for later phase-only recombination.
pub fn precompute_basis(layout: &ArrayLayout, spec: &GridSpec) -> Result<ElementBasis> {
    let points = make_grid(spec);
    let per_element = (0..layout.element_count())
        .into_par_iter()
        .map(|i| {
            let values = points
                .iter()
                .map(|&pt| element_field(layout, i, pt))
                .collect::<Result<Vec<_>>>()?;
            FieldGrid::new(*spec, values)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ElementBasis {
        spec: *spec,
        per_element,
    })
}

/// `Σᵢ e^{jφᵢ} · basisᵢ`, summed in ascending element order.
pub fn superpose(basis: &ElementBasis, config: &PhaseConfig) -> Result<FieldGrid> {
    if basis.element_count() != config.len() {
        return Err(Error::Config(format!(
            "phase config has {} entries, basis has {} elements",
            config.len(),
            basis.element_count()
        )));
    }
    let zero = Complex64::new(0.0, 0.0);
    let mut acc = vec![[zero; 3]; basis.spec.point_count()];
    for (grid, w) in basis.per_element.iter().zip(config.weights()) {
        for (out, e) in acc.iter_mut().zip(&grid.values) {
            for a in 0..3 {
                out[a] += w * e[a];
            }
        }
    }
    Ok(FieldGrid {
        spec: basis.spec,
        values: acc,
    })
}

/// Split a field into its component along the unit direction from the
/// origin to `point` and the orthogonal remainder; returns magnitudes.
pub fn radial_transverse(e: &Field3, point: [f64; 3]) -> (f64, f64) {
    let r = (point[0] * point[0] + point[1] * point[1] + point[2] * point[2]).sqrt();
    let n = [point[0] / r, point[1] / r, point[2] / r];
    let radial = e[0] * n[0] + e[1] * n[1] + e[2] * n[2];
    let mut t2 = 0.0;
    for a in 0..3 {
        t2 += (e[a] - radial * n[a]).norm_sqr();
    }
    (radial.norm(), t2.sqrt())
}

/// Grid average of `|E_radial| / |E_transverse|`.
pub fn mean_radial_ratio(field: &FieldGrid) -> f64 {
    let points = make_grid(&field.spec);
    let total: f64 = field
        .values
        .iter()
        .zip(&points)
        .map(|(e, &p)| {
            let (radial, transverse) = radial_transverse(e, p);
            radial / transverse
        })
        .sum();
    total / points.len() as f64
}
