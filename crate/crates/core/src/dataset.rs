//! Paired far-field / near-field training corpus.
//!
//! Each sample stores both planes as real `6 × N × N` tensors with channel
//! order `[Re Ex, Im Ex, Re Ey, Im Ey, Re Ez, Im Ez]`, row-major within a
//! channel. On disk a dataset is a text manifest (`<stem>.manifest`) plus a
//! raw little-endian `f32` payload (`<stem>.bin`); see `docs/format.md`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::em::{self, ArrayLayout, ElementBasis, FieldGrid, GridSpec, PhaseConfig};
use crate::error::{Error, Result};

pub const CHANNELS: usize = 6;
pub const FORMAT_NAME: &str = "fieldnet-dataset";
pub const FORMAT_VERSION: u32 = 1;

/// Tensor length for one plane.
pub fn plane_len(spec: &GridSpec) -> usize {
    CHANNELS * spec.point_count()
}

/// Scaling applied to stored values at generation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    #[default]
    None,
    /// Each plane divided by its largest absolute value over the dataset.
    MaxAbs,
}

impl Normalization {
    pub fn as_str(&self) -> &'static str {
        match self {
            Normalization::None => "none",
            Normalization::MaxAbs => "max-abs",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalization::None),
            "max-abs" => Ok(Normalization::MaxAbs),
            other => Err(Error::Config(format!("unknown normalization {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub ff: Vec<f32>,
    pub nf: Vec<f32>,
    pub config: PhaseConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub sample_count: usize,
    pub element_count: usize,
    pub frequency: f64,
    pub nf_spec: GridSpec,
    pub ff_spec: GridSpec,
    pub seed: u64,
    /// Extremes over every stored near-field value.
    pub value_min: f32,
    pub value_max: f32,
    pub layout_hash: String,
    pub normalization: Normalization,
    pub ff_scale: f32,
    pub nf_scale: f32,
}

impl DatasetManifest {
    pub fn value_range(&self) -> (f64, f64) {
        (self.value_min as f64, self.value_max as f64)
    }

    pub fn ff_len(&self) -> usize {
        plane_len(&self.ff_spec)
    }

    pub fn nf_len(&self) -> usize {
        plane_len(&self.nf_spec)
    }

    pub fn ff_shape(&self) -> [usize; 3] {
        let n = self.ff_spec.points_per_side();
        [CHANNELS, n, n]
    }

    pub fn nf_shape(&self) -> [usize; 3] {
        let n = self.nf_spec.points_per_side();
        [CHANNELS, n, n]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Subset in the given order; the manifest range is recomputed.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let samples = indices
            .iter()
            .map(|&i| {
                self.samples
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("sample index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        let (lo, hi) = nf_range(&samples);
        let mut manifest = self.manifest.clone();
        manifest.sample_count = samples.len();
        manifest.value_min = lo;
        manifest.value_max = hi;
        Ok(Dataset { manifest, samples })
    }
}

/// Draw `n` configurations uniformly from the `4^elements` space.
pub fn sample_phase_configs(n: usize, elements: usize, seed: u64) -> Result<Vec<PhaseConfig>> {
    if n < 1 {
        return Err(Error::Config("need at least one phase configuration".into()));
    }
    if elements < 1 {
        return Err(Error::Config("need at least one element".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let q: Vec<u8> = (0..elements).map(|_| rng.gen_range(0..4u8)).collect();
            PhaseConfig::from_quadrants(&q)
        })
        .collect()
}

/// Number of distinct configurations, `4^elements` (saturating).
pub fn configuration_space_size(elements: u32) -> u128 {
    4u128.saturating_pow(elements)
}

/// Pack a complex grid into the 6-channel real layout, narrowing to `f32`.
pub fn pack_channels(grid: &FieldGrid) -> Vec<f32> {
    let points = grid.spec().point_count();
    let mut out = vec![0f32; CHANNELS * points];
    for (p, e) in grid.values().iter().enumerate() {
        for (axis, c) in e.iter().enumerate() {
            out[(2 * axis) * points + p] = c.re as f32;
            out[(2 * axis + 1) * points + p] = c.im as f32;
        }
    }
    out
}

/// Total magnitude `|E|` at each grid point from a packed tensor.
pub fn packed_magnitude(packed: &[f32], points: usize) -> Result<Vec<f64>> {
    if packed.len() != CHANNELS * points {
        return Err(Error::shape("packed magnitude", CHANNELS * points, packed.len()));
    }
    Ok((0..points)
        .map(|p| {
            (0..CHANNELS)
                .map(|c| {
                    let v = packed[c * points + p] as f64;
                    v * v
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

pub fn build_sample(
    nf_basis: &ElementBasis,
    ff_basis: &ElementBasis,
    config: &PhaseConfig,
) -> Result<Sample> {
    if nf_basis.element_count() != ff_basis.element_count() {
        return Err(Error::Config(format!(
            "near-field basis has {} elements, far-field basis has {}",
            nf_basis.element_count(),
            ff_basis.element_count()
        )));
    }
    let nf = em::superpose(nf_basis, config)?;
    let ff = em::superpose(ff_basis, config)?;
    Ok(Sample {
        ff: pack_channels(&ff),
        nf: pack_channels(&nf),
        config: config.clone(),
    })
}

fn nf_range(samples: &[Sample]) -> (f32, f32) {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for v in samples.iter().flat_map(|s| s.nf.iter()) {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    (lo, hi)
}

fn max_abs<'a>(values: impl Iterator<Item = &'a f32>) -> f32 {
    values.fold(0f32, |m, v| m.max(v.abs()))
}

/// Generate a dataset as a pure function of its inputs.
pub fn generate(
    layout: &ArrayLayout,
    nf_spec: &GridSpec,
    ff_spec: &GridSpec,
    n: usize,
    seed: u64,
    normalization: Normalization,
) -> Result<Dataset> {
    let configs = sample_phase_configs(n, layout.element_count(), seed)?;
    let nf_basis = em::precompute_basis(layout, nf_spec)?;
    let ff_basis = em::precompute_basis(layout, ff_spec)?;
    let mut samples = configs
        .par_iter()
        .map(|c| build_sample(&nf_basis, &ff_basis, c))
        .collect::<Result<Vec<_>>>()?;

    let (mut ff_scale, mut nf_scale) = (1f32, 1f32);
    if normalization == Normalization::MaxAbs {
        let ff_max = max_abs(samples.iter().flat_map(|s| s.ff.iter()));
        let nf_max = max_abs(samples.iter().flat_map(|s| s.nf.iter()));
        if ff_max > 0.0 {
            ff_scale = 1.0 / ff_max;
        }
        if nf_max > 0.0 {
            nf_scale = 1.0 / nf_max;
        }
        for s in &mut samples {
            s.ff.iter_mut().for_each(|v| *v *= ff_scale);
            s.nf.iter_mut().for_each(|v| *v *= nf_scale);
        }
    }

    let (value_min, value_max) = nf_range(&samples);
    Ok(Dataset {
        manifest: DatasetManifest {
            sample_count: samples.len(),
            element_count: layout.element_count(),
            frequency: layout.frequency(),
            nf_spec: *nf_spec,
            ff_spec: *ff_spec,
            seed,
            value_min,
            value_max,
            layout_hash: layout.layout_hash(),
            normalization,
            ff_scale,
            nf_scale,
        },
        samples,
    })
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// `(<stem>.manifest, <stem>.bin)`
pub fn dataset_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (with_suffix(stem, ".manifest"), with_suffix(stem, ".bin"))
}

fn write_spec(out: &mut String, prefix: &str, spec: &GridSpec) {
    use std::fmt::Write as _;
    let _ = writeln!(out, "{prefix}.plane_height_z = {:?}", spec.plane_height_z());
    let _ = writeln!(out, "{prefix}.extent = {:?}", spec.extent());
    let _ = writeln!(out, "{prefix}.spacing = {:?}", spec.spacing());
    let _ = writeln!(out, "{prefix}.points_per_side = {}", spec.points_per_side());
}

fn render_manifest(m: &DatasetManifest, samples: &[Sample]) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(out, "# near-field / far-field dataset manifest");
    let _ = writeln!(out, "format = {FORMAT_NAME}");
    let _ = writeln!(out, "version = {FORMAT_VERSION}");
    let _ = writeln!(out, "sample_count = {}", m.sample_count);
    let _ = writeln!(out, "channels = {CHANNELS}");
    let _ = writeln!(out, "channel_order = re_ex,im_ex,re_ey,im_ey,re_ez,im_ez");
    let _ = writeln!(out, "element_count = {}", m.element_count);
    let _ = writeln!(out, "frequency = {:?}", m.frequency);
    write_spec(&mut out, "ff", &m.ff_spec);
    write_spec(&mut out, "nf", &m.nf_spec);
    let _ = writeln!(out, "seed = {}", m.seed);
    let _ = writeln!(out, "value_min = {:?}", m.value_min);
    let _ = writeln!(out, "value_max = {:?}", m.value_max);
    let _ = writeln!(out, "layout_hash = {}", m.layout_hash);
    let _ = writeln!(out, "normalization = {}", m.normalization.as_str());
    let _ = writeln!(out, "ff_scale = {:?}", m.ff_scale);
    let _ = writeln!(out, "nf_scale = {:?}", m.nf_scale);
    let payload = m.sample_count as u64 * (m.ff_len() + m.nf_len()) as u64 * 4;
    let _ = writeln!(out, "payload_bytes = {payload}");
    for (i, s) in samples.iter().enumerate() {
        let phases: Vec<String> = s.config.phases_deg().iter().map(|p| p.to_string()).collect();
        let _ = writeln!(out, "phases.{i} = {}", phases.join(","));
    }
    out
}

fn check_consistent(dataset: &Dataset) -> Result<()> {
    let m = &dataset.manifest;
    if m.sample_count != dataset.samples.len() {
        return Err(Error::Config(format!(
            "manifest declares {} samples, dataset holds {}",
            m.sample_count,
            dataset.samples.len()
        )));
    }
    for (i, s) in dataset.samples.iter().enumerate() {
        if s.ff.len() != m.ff_len() || s.nf.len() != m.nf_len() {
            return Err(Error::shape(
                "dataset sample",
                (m.ff_len(), m.nf_len()),
                (s.ff.len(), s.nf.len()),
            ));
        }
        if s.config.len() != m.element_count {
            return Err(Error::Config(format!(
                "sample {i} has {} phases, layout has {} elements",
                s.config.len(),
                m.element_count
            )));
        }
        if s.ff.iter().chain(&s.nf).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("sample {i}"),
            });
        }
    }
    Ok(())
}

/// Write `<stem>.manifest` and `<stem>.bin`. The manifest value range is
/// recomputed from the samples.
pub fn write_dataset(dataset: &Dataset, stem: &Path) -> Result<()> {
    check_consistent(dataset)?;
    let mut manifest = dataset.manifest.clone();
    let (lo, hi) = nf_range(&dataset.samples);
    manifest.value_min = lo;
    manifest.value_max = hi;

    let (manifest_path, bin_path) = dataset_paths(stem);
    if let Some(dir) = manifest_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = fs::File::create(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let mut w = BufWriter::new(file);
    let mut buf = Vec::new();
    for s in &dataset.samples {
        buf.clear();
        buf.extend(s.ff.iter().chain(&s.nf).flat_map(|v| v.to_le_bytes()));
        w.write_all(&buf).map_err(|e| Error::io(&bin_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&bin_path, e))?;
    fs::write(&manifest_path, render_manifest(&manifest, &dataset.samples))
        .map_err(|e| Error::io(&manifest_path, e))?;
    Ok(())
}

struct ManifestText {
    entries: BTreeMap<String, (String, u64)>,
}

impl ManifestText {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut offset = 0u64;
        for line in text.split_inclusive('\n') {
            let here = offset;
            offset += line.len() as u64;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (k, v) = trimmed
                .split_once('=')
                .ok_or_else(|| Error::format(here, format!("expected key = value, got {trimmed:?}")))?;
            let key = k.trim().to_string();
            if entries.insert(key.clone(), (v.trim().to_string(), here)).is_some() {
                return Err(Error::format(here, format!("duplicate key {key:?}")));
            }
        }
        Ok(Self { entries })
    }

    fn raw(&self, key: &str) -> Result<(&str, u64)> {
        self.entries
            .get(key)
            .map(|(v, o)| (v.as_str(), *o))
            .ok_or_else(|| Error::format(0, format!("missing manifest key {key:?}")))
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let (v, off) = self.raw(key)?;
        v.parse()
            .map_err(|_| Error::format(off, format!("bad value {v:?} for {key:?}")))
    }

    fn spec(&self, prefix: &str) -> Result<GridSpec> {
        let (_, off) = self.raw(&format!("{prefix}.points_per_side"))?;
        GridSpec::from_parts(
            self.get(&format!("{prefix}.plane_height_z"))?,
            self.get(&format!("{prefix}.extent"))?,
            self.get(&format!("{prefix}.spacing"))?,
            self.get(&format!("{prefix}.points_per_side"))?,
        )
        .map_err(|e| Error::format(off, format!("invalid {prefix} grid: {e}")))
    }
}

/// Read a dataset written by [`write_dataset`], verifying sizes, finiteness
/// and the recorded near-field range.
pub fn read_dataset(stem: &Path) -> Result<Dataset> {
    let (manifest_path, bin_path) = dataset_paths(stem);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let mt = ManifestText::parse(&text)?;

    let (format, off) = mt.raw("format")?;
    if format != FORMAT_NAME {
        return Err(Error::format(off, format!("unknown format {format:?}")));
    }
    let version: u32 = mt.get("version")?;
    if version != FORMAT_VERSION {
        let (_, off) = mt.raw("version")?;
        return Err(Error::format(off, format!("unsupported version {version}")));
    }
    let channels: usize = mt.get("channels")?;
    if channels != CHANNELS {
        let (_, off) = mt.raw("channels")?;
        return Err(Error::format(off, format!("expected {CHANNELS} channels, got {channels}")));
    }
    let normalization = {
        let (v, off) = mt.raw("normalization")?;
        Normalization::parse(v).map_err(|e| Error::format(off, e.to_string()))?
    };
    let manifest = DatasetManifest {
        sample_count: mt.get("sample_count")?,
        element_count: mt.get("element_count")?,
        frequency: mt.get("frequency")?,
        nf_spec: mt.spec("nf")?,
        ff_spec: mt.spec("ff")?,
        seed: mt.get("seed")?,
        value_min: mt.get("value_min")?,
        value_max: mt.get("value_max")?,
        layout_hash: mt.raw("layout_hash")?.0.to_string(),
        normalization,
        ff_scale: mt.get("ff_scale")?,
        nf_scale: mt.get("nf_scale")?,
    };
    let per_sample = manifest.ff_len() + manifest.nf_len();
    let expected_bytes = manifest.sample_count as u64 * per_sample as u64 * 4;
    let declared: u64 = mt.get("payload_bytes")?;
    if declared != expected_bytes {
        let (_, off) = mt.raw("payload_bytes")?;
        return Err(Error::format(
            off,
            format!("payload_bytes {declared} disagrees with header ({expected_bytes})"),
        ));
    }

    let mut configs = Vec::with_capacity(manifest.sample_count);
    for i in 0..manifest.sample_count {
        let (v, off) = mt.raw(&format!("phases.{i}"))?;
        let phases = v
            .split(',')
            .map(|p| p.trim().parse::<u16>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::format(off, format!("bad phase list {v:?}")))?;
        let cfg = PhaseConfig::new(phases).map_err(|e| Error::format(off, e.to_string()))?;
        if cfg.len() != manifest.element_count {
            return Err(Error::format(off, "phase list length differs from element_count"));
        }
        configs.push(cfg);
    }
    if mt.entries.contains_key(&format!("phases.{}", manifest.sample_count)) {
        let (_, off) = mt.raw(&format!("phases.{}", manifest.sample_count))?;
        return Err(Error::format(off, "more phase lists than sample_count"));
    }

    let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    if bytes.len() as u64 != expected_bytes {
        return Err(Error::format(
            bytes.len().min(expected_bytes as usize) as u64,
            format!(
                "payload is {} bytes, manifest requires {expected_bytes}",
                bytes.len()
            ),
        ));
    }
    let mut samples = Vec::with_capacity(manifest.sample_count);
    let ff_len = manifest.ff_len();
    for (i, cfg) in configs.into_iter().enumerate() {
        let base = i * per_sample * 4;
        let mut values = Vec::with_capacity(per_sample);
        for j in 0..per_sample {
            let at = base + 4 * j;
            let v = f32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
            if !v.is_finite() {
                return Err(Error::format(at as u64, format!("non-finite value {v} in sample {i}")));
            }
            values.push(v);
        }
        let nf = values.split_off(ff_len);
        samples.push(Sample {
            ff: values,
            nf,
            config: cfg,
        });
    }

    let (lo, hi) = nf_range(&samples);
    if lo.to_bits() != manifest.value_min.to_bits() || hi.to_bits() != manifest.value_max.to_bits() {
        let (_, off) = mt.raw("value_min")?;
        return Err(Error::format(
            off,
            format!(
                "recorded range ({}, {}) differs from payload range ({lo}, {hi})",
                manifest.value_min, manifest.value_max
            ),
        ));
    }
    Ok(Dataset { manifest, samples })
}

/// Disjoint train / test index lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle of `0..count`, then the first `train_n` indices train and
/// the next `test_n` test.
pub fn split(count: usize, train_n: usize, test_n: usize, seed: u64) -> Result<Split> {
    let needed = train_n
        .checked_add(test_n)
        .ok_or_else(|| Error::Config("train + test count overflows".into()))?;
    if needed > count {
        return Err(Error::Config(format!(
            "train {train_n} + test {test_n} exceeds {count} samples"
        )));
    }
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = order[train_n..needed].to_vec();
    order.truncate(train_n);
    Ok(Split { train: order, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::{element_field, make_grid, PAPER_FREQUENCY_HZ, SPEED_OF_LIGHT};

    fn small_specs(l: f64) -> (GridSpec, GridSpec) {
        (
            GridSpec::from_wavelengths(4.5, 4.0, 1.0, l).unwrap(),
            GridSpec::from_wavelengths(25.0, 10.0, 1.0, l).unwrap(),
        )
    }

    #[test]
    fn phase_sampling_is_deterministic() {
        let a = sample_phase_configs(20, 16, 9).unwrap();
        let b = sample_phase_configs(20, 16, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_phase_configs(20, 16, 10).unwrap());
        assert!(sample_phase_configs(0, 16, 1).is_err());
    }

    #[test]
    fn phase_frequencies_are_uniform() {
        let n = 4096;
        let configs = sample_phase_configs(n, 16, 2024).unwrap();
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        for element in 0..16 {
            for state in em::PHASE_STATES_DEG {
                let count = configs
                    .iter()
                    .filter(|c| c.phases_deg()[element] == state)
                    .count() as f64;
                assert!(
                    (count - 0.25 * n as f64).abs() < 4.0 * sigma,
                    "element {element} state {state}: {count}"
                );
            }
        }
    }

    #[test]
    fn space_size() {
        assert_eq!(configuration_space_size(16), 4_294_967_296);
    }

    #[test]
    fn published_shapes() {
        let layout = ArrayLayout::published();
        let l = layout.wavelength();
        let nf = em::precompute_basis(&layout, &GridSpec::published_near_field(l)).unwrap();
        let ff = em::precompute_basis(&layout, &GridSpec::published_far_field(l)).unwrap();
        let s = build_sample(&nf, &ff, &PhaseConfig::zeros(16)).unwrap();
        assert_eq!(s.ff.len(), 6 * 101 * 101);
        assert_eq!(s.nf.len(), 6 * 41 * 41);
    }

    #[test]
    fn zero_config_packs_basis_sum() {
        let layout = ArrayLayout::published();
        let (nfs, ffs) = small_specs(layout.wavelength());
        let nf = em::precompute_basis(&layout, &nfs).unwrap();
        let ff = em::precompute_basis(&layout, &ffs).unwrap();
        let s = build_sample(&nf, &ff, &PhaseConfig::zeros(16)).unwrap();
        let points = nfs.point_count();
        for p in 0..points {
            for axis in 0..3 {
                let sum: num_complex::Complex64 = nf.per_element().iter().map(|g| g.values()[p][axis]).sum();
                assert_eq!(s.nf[2 * axis * points + p], sum.re as f32);
                assert_eq!(s.nf[(2 * axis + 1) * points + p], sum.im as f32);
            }
        }
    }

    #[test]
    fn packed_magnitude_matches_complex_pipeline() {
        let layout = ArrayLayout::published();
        let l = layout.wavelength();
        let (nfs, ffs) = small_specs(l);
        let nf = em::precompute_basis(&layout, &nfs).unwrap();
        let ff = em::precompute_basis(&layout, &ffs).unwrap();
        let cfg = sample_phase_configs(1, 16, 5).unwrap().remove(0);
        let s = build_sample(&nf, &ff, &cfg).unwrap();
        let weights = cfg.weights();
        let mags = packed_magnitude(&s.nf, nfs.point_count()).unwrap();
        for (p, pt) in make_grid(&nfs).into_iter().enumerate() {
            let mut e = [num_complex::Complex64::new(0.0, 0.0); 3];
            for (i, w) in weights.iter().enumerate() {
                let f = element_field(&layout, i, pt).unwrap();
                for a in 0..3 {
                    e[a] += w * f[a];
                }
            }
            let direct = em::field_magnitude(&e);
            assert!((mags[p] - direct).abs() / direct < 1e-6);
        }
    }

    #[test]
    fn mismatched_bases_are_rejected() {
        let l = SPEED_OF_LIGHT / PAPER_FREQUENCY_HZ;
        let (nfs, ffs) = small_specs(l);
        let nf = em::precompute_basis(&ArrayLayout::published(), &nfs).unwrap();
        let one = ArrayLayout::with_single_element(PAPER_FREQUENCY_HZ, [0.0, 0.0]).unwrap();
        let ff = em::precompute_basis(&one, &ffs).unwrap();
        assert!(matches!(
            build_sample(&nf, &ff, &PhaseConfig::zeros(16)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let s = split(4500, 4050, 450, 3).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (4050, 450));
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..4500).collect::<Vec<_>>());
        assert_eq!(s, split(4500, 4050, 450, 3).unwrap());

        let t = split(10, 10, 0, 1).unwrap();
        assert!(t.test.is_empty());
        assert!(split(10, 8, 3, 1).is_err());
        assert!(split(10, usize::MAX, 2, 1).is_err());
    }

    #[test]
    fn generated_range_matches_full_scan() {
        let layout = ArrayLayout::published();
        let (nfs, ffs) = small_specs(layout.wavelength());
        let ds = generate(&layout, &nfs, &ffs, 500, 77, Normalization::None).unwrap();
        let mut lo = f32::INFINITY;
        let mut hi = f32::NEG_INFINITY;
        for s in &ds.samples {
            for &v in &s.nf {
                if v < lo {
                    lo = v;
                }
                if v > hi {
                    hi = v;
                }
            }
        }
        assert_eq!((ds.manifest.value_min, ds.manifest.value_max), (lo, hi));
    }

    #[test]
    fn max_abs_normalization_bounds_values() {
        let layout = ArrayLayout::published();
        let (nfs, ffs) = small_specs(layout.wavelength());
        let ds = generate(&layout, &nfs, &ffs, 20, 1, Normalization::MaxAbs).unwrap();
        let m = ds.samples.iter().flat_map(|s| s.nf.iter()).fold(0f32, |a, v| a.max(v.abs()));
        assert!((m - 1.0).abs() < 1e-6);
        assert!(ds.manifest.nf_scale > 1.0);
    }
}
