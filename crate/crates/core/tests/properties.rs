//! Invariants of the field engine, dataset pipeline, metrics and search grid.

mod common;

use common::*;
use fieldnet::dataset::{self, read_dataset, write_dataset};
use fieldnet::em::{self, ArrayLayout, GridSpec, PhaseConfig};
use fieldnet::hyperopt::{enumerate, Axis, SearchSpace};
use fieldnet::nn::layers::mse_loss;
use fieldnet::nn::{lr_factor, ModelConfig, Tensor};
use fieldnet::train::{kfold_partition, mean_and_population_std, CvResult, Metrics};
use proptest::collection::vec;
use proptest::prelude::*;

fn phases() -> impl Strategy<Value = PhaseConfig> {
    vec(0u8..4, 16).prop_map(|q| PhaseConfig::from_quadrants(&q).unwrap())
}

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(cfg(32))]

    #[test]
    fn superposition_matches_direct_summation(config in phases()) {
        let layout = ArrayLayout::published();
        let (nf, _) = small_specs(layout.wavelength());
        let basis = em::precompute_basis(&layout, &nf).unwrap();
        let field = em::superpose(&basis, &config).unwrap();
        for (pt, e) in em::make_grid(&nf).into_iter().zip(field.values()) {
            prop_assert!(vec_rel_err(e, &oracle_array_field(&layout, &config, pt)) < 1e-12);
        }
    }

    #[test]
    fn superposition_is_linear_over_element_partitions(config in phases(), mask in vec(any::<bool>(), 16)) {
        prop_assume!(mask.iter().any(|&m| m) && mask.iter().any(|&m| !m));
        let layout = ArrayLayout::published();
        let (nf, _) = small_specs(layout.wavelength());
        let whole = em::superpose(&em::precompute_basis(&layout, &nf).unwrap(), &config).unwrap();
        let mut parts = Vec::new();
        for side in [true, false] {
            let idx: Vec<usize> = (0..16).filter(|&i| mask[i] == side).collect();
            let sub = ArrayLayout::new(
                layout.frequency(),
                idx.iter().map(|&i| layout.element_positions()[i]).collect(),
                layout.polarization_axis(),
                1.0,
            ).unwrap();
            let sub_cfg = PhaseConfig::new(idx.iter().map(|&i| config.phases_deg()[i]).collect()).unwrap();
            parts.push(em::superpose(&em::precompute_basis(&sub, &nf).unwrap(), &sub_cfg).unwrap());
        }
        for (p, w) in whole.values().iter().enumerate() {
            let sum = [0, 1, 2].map(|a| parts[0].values()[p][a] + parts[1].values()[p][a]);
            prop_assert!(vec_rel_err(&sum, w) < 1e-12);
        }
    }

    #[test]
    fn global_phase_leaves_magnitude_unchanged(config in phases(), q in 1u16..4) {
        let layout = ArrayLayout::published();
        let (nf, _) = small_specs(layout.wavelength());
        let basis = em::precompute_basis(&layout, &nf).unwrap();
        let a = em::superpose(&basis, &config).unwrap().magnitude();
        let b = em::superpose(&basis, &config.shifted(90 * q).unwrap()).unwrap().magnitude();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(y.abs()));
        }
    }

    #[test]
    fn grid_is_point_symmetric(half in 0usize..30, spacing in 0.1f64..2.0, z in 0.5f64..30.0) {
        let spec = GridSpec::new(z, half as f64 * spacing, spacing).unwrap();
        let pts = em::make_grid(&spec);
        prop_assert_eq!(pts.len(), (half + 1) * (half + 1));
        let n = pts.len();
        for (i, p) in pts.iter().enumerate() {
            let m = pts[n - 1 - i];
            prop_assert_eq!([m[0], m[1], m[2]], [-p[0], -p[1], p[2]]);
        }
    }

    #[test]
    fn boresight_field_decays_as_inverse_distance(q in 0u16..4, r_lambda in 100.0f64..200.0) {
        // An in-phase array keeps its 1/r term at boresight; cancelling
        // phase sets leave only faster-decaying residue there.
        let layout = ArrayLayout::published();
        let config = PhaseConfig::zeros(layout.element_count()).shifted(90 * q).unwrap();
        let l = layout.wavelength();
        let lib = |r: f64| {
            let spec = GridSpec::new(r * l, 0.0, l).unwrap();
            em::superpose(&em::precompute_basis(&layout, &spec).unwrap(), &config).unwrap().magnitude()[0]
        };
        let ratio = lib(2.0 * r_lambda) / lib(r_lambda);
        prop_assert!((ratio / 0.5 - 1.0).abs() < 0.02, "ratio {}", ratio);
    }

    #[test]
    fn boresight_field_matches_oracle(config in phases(), r_lambda in 100.0f64..400.0) {
        let layout = ArrayLayout::published();
        let l = layout.wavelength();
        let spec = GridSpec::new(r_lambda * l, 0.0, l).unwrap();
        let e = em::superpose(&em::precompute_basis(&layout, &spec).unwrap(), &config).unwrap();
        let oracle = oracle_array_field(&layout, &config, [0.0, 0.0, r_lambda * l]);
        prop_assert!(vec_rel_err(&e.values()[0], &oracle) < 1e-12);
    }
}

proptest! {
    #![proptest_config(cfg(8))]

    #[test]
    fn radial_share_is_larger_on_the_near_plane(config in phases()) {
        let layout = ArrayLayout::published();
        let l = layout.wavelength();
        let nf = em::superpose(&em::precompute_basis(&layout, &GridSpec::published_near_field(l)).unwrap(), &config).unwrap();
        let ff = em::superpose(&em::precompute_basis(&layout, &GridSpec::published_far_field(l)).unwrap(), &config).unwrap();
        prop_assert!(em::mean_radial_ratio(&nf) > em::mean_radial_ratio(&ff));
    }

    #[test]
    fn dataset_roundtrip_is_bit_exact(n in 1usize..6, seed in any::<u64>()) {
        let ds = small_dataset(n, seed);
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("set");
        write_dataset(&ds, &stem).unwrap();
        let back = read_dataset(&stem).unwrap();
        prop_assert_eq!(&back, &ds);
        for (a, b) in back.samples.iter().zip(&ds.samples) {
            prop_assert!(a.nf.iter().zip(&b.nf).all(|(x, y)| x.to_bits() == y.to_bits()));
            prop_assert!(a.ff.iter().zip(&b.ff).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        let lo = ds.samples.iter().flat_map(|s| s.nf.iter()).copied().fold(f32::INFINITY, f32::min);
        let hi = ds.samples.iter().flat_map(|s| s.nf.iter()).copied().fold(f32::NEG_INFINITY, f32::max);
        prop_assert_eq!((ds.manifest.value_min, ds.manifest.value_max), (lo, hi));
    }

    #[test]
    fn channels_reconstruct_the_complex_field(config in phases()) {
        let layout = ArrayLayout::published();
        let (nf, ff) = small_specs(layout.wavelength());
        let nb = em::precompute_basis(&layout, &nf).unwrap();
        let fb = em::precompute_basis(&layout, &ff).unwrap();
        let s = dataset::build_sample(&nb, &fb, &config).unwrap();
        let points = nf.point_count();
        for (p, pt) in em::make_grid(&nf).into_iter().enumerate() {
            let e = oracle_array_field(&layout, &config, pt);
            for a in 0..3 {
                let re = s.nf[2 * a * points + p] as f64;
                let im = s.nf[(2 * a + 1) * points + p] as f64;
                let scale = em::field_magnitude(&e);
                prop_assert!((re - e[a].re).abs() <= 1e-6 * scale);
                prop_assert!((im - e[a].im).abs() <= 1e-6 * scale);
            }
        }
    }
}

proptest! {
    #[test]
    fn split_is_disjoint_and_seeded(
        (count, a, b) in (1usize..400)
            .prop_flat_map(|c| (Just(c), 0..=c))
            .prop_flat_map(|(c, a)| (Just(c), Just(a), 0..=c - a)),
        seed in any::<u64>(),
    ) {
        let s = dataset::split(count, a, b, seed).unwrap();
        prop_assert_eq!(&s, &dataset::split(count, a, b, seed).unwrap());
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        all.dedup();
        prop_assert_eq!(all.len(), a + b);
        prop_assert!(all.iter().all(|&i| i < count));
    }

    #[test]
    fn folds_partition_all_indices(count in 2usize..600, k in 2usize..12, seed in any::<u64>()) {
        prop_assume!(k <= count);
        let folds = kfold_partition(count, k, seed).unwrap();
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut all: Vec<usize> = folds.into_iter().flatten().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..count).collect::<Vec<_>>());
    }

    #[test]
    fn cv_summary_recomputes(mses in vec(0.0f64..10.0, 1..20)) {
        let r = CvResult::from_folds(mses.clone(), vec![1; mses.len()]);
        let mean = mses.iter().sum::<f64>() / mses.len() as f64;
        let var = mses.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / mses.len() as f64;
        prop_assert!((r.mean - mean).abs() <= 1e-12 * mean.abs().max(1e-300));
        prop_assert!((r.std - var.sqrt()).abs() <= 1e-12 * var.sqrt().max(1e-300));
        prop_assert_eq!(mean_and_population_std(&r.fold_mses), (r.mean, r.std));
    }

    #[test]
    fn nrmse_identity(mse in 0.0f64..1e6, lo in -1e4f64..0.0, span in 1e-3f64..1e4) {
        let m = Metrics::from_mse(mse, (lo, lo + span));
        let recovered = m.nrmse * ((lo + span) - lo);
        prop_assert!((recovered - mse.sqrt()).abs() <= 1e-12 * mse.sqrt().max(1e-300));
    }

    #[test]
    fn lr_factor_is_monotone_and_bounded(a in 0u64..1000, b in 0u64..1000) {
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(lr_factor(hi) <= lr_factor(lo));
        for s in [a, b] {
            prop_assert!((0.005..=1.0).contains(&lr_factor(s)));
        }
    }

    #[test]
    fn mse_is_nonnegative_and_zero_at_identity(v in vec(-1e3f64..1e3, 1..64), w in vec(-1e3f64..1e3, 64)) {
        let p = Tensor::new(vec![v.len()], v.clone()).unwrap();
        let t = Tensor::new(vec![v.len()], w[..v.len()].to_vec()).unwrap();
        prop_assert!(mse_loss(&p, &t).unwrap().0 >= 0.0);
        prop_assert_eq!(mse_loss(&p, &p).unwrap().0, 0.0);
    }

    #[test]
    fn enumeration_size_is_the_axis_product(mask in vec(any::<bool>(), 9)) {
        let space = SearchSpace { out_channels: vec![6, 10, 24], ..SearchSpace::default() };
        let axes: Vec<Axis> = Axis::ALL.iter().zip(&mask).filter(|(_, &m)| m).map(|(a, _)| *a).collect();
        let expected: usize = axes.iter().map(|&a| space.axis_len(a)).product();
        let pts = enumerate(&space, &axes).unwrap();
        prop_assert_eq!(pts.len(), expected);
        prop_assert_eq!(&pts, &enumerate(&space, &axes).unwrap());
    }
}

#[test]
fn every_architecture_point_of_the_full_grid_is_constructible() {
    let space = SearchSpace::default();
    let arch = [Axis::OutChannels, Axis::Kernel, Axis::Stride, Axis::PoolKernel, Axis::FcLayers];
    let pts = enumerate(&space, &arch).unwrap();
    assert_eq!(pts.len(), 19 * 2 * 2 * 2 * 3);
    for p in &pts {
        let c = p.model_config(6, 101, [6, 41, 41]);
        c.validate().unwrap();
        // Shape oracle: valid conv then floor pooling.
        let conv = (101 - p.kernel) / p.stride + 1;
        assert_eq!(c.flattened_dim(), Some(p.out_channels * (conv / p.pool_kernel).pow(2)));
    }
}

#[test]
fn kernel5_stride2_shape() {
    let c = ModelConfig { kernel: 5, stride: 2, ..ModelConfig::published() };
    c.validate().unwrap();
    // (101 - 5) / 2 + 1 = 49, floor(49 / 2) = 24.
    assert_eq!(c.flattened_dim(), Some(10 * 24 * 24));
}
