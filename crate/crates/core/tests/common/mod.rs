//! Finite-difference oracles and random tensors shared by the integration tests.
#![allow(dead_code)]

use fieldnet::nn::layers::{self, Activation, Pool};
use fieldnet::nn::{Model, ModelConfig, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_EPS: f64 = 1e-6;
pub const FD_TOL: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// `‖a - n‖ / ‖n‖`, or `‖a - n‖` when `n` vanishes.
pub fn vector_rel_err(diff_sq: f64, norm_sq: f64) -> f64 {
    if norm_sq == 0.0 {
        diff_sq.sqrt()
    } else {
        (diff_sq / norm_sq).sqrt()
    }
}

/// Relative error of an analytic gradient against central differences of
/// `f` around `x`, taken over the whole tensor.
pub fn fd_check(x: &Tensor<f64>, analytic: &[f64], mut f: impl FnMut(&Tensor<f64>) -> f64) -> f64 {
    assert_eq!(x.len(), analytic.len());
    let (mut diff, mut norm) = (0f64, 0f64);
    let mut probe = x.clone();
    for (i, &a) in analytic.iter().enumerate() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + FD_EPS;
        let up = f(&probe);
        probe.data_mut()[i] = orig - FD_EPS;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * FD_EPS);
        diff += (a - numeric).powi(2);
        norm += numeric * numeric;
    }
    vector_rel_err(diff, norm)
}

/// `Σ r ⊙ y`: projects a tensor output onto a fixed random direction.
pub fn project(y: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

pub struct ConvCase {
    pub n: usize,
    pub c: usize,
    pub side: usize,
    pub o: usize,
    pub k: usize,
    pub stride: usize,
}

/// Worst relative error over input, weight and bias gradients of conv2d.
pub fn check_conv(case: &ConvCase, seed: u64) -> f64 {
    let mut g = rng(seed);
    let x = random_tensor(&mut g, &[case.n, case.c, case.side, case.side]);
    let w = random_tensor(&mut g, &[case.o, case.c, case.k, case.k]);
    let b = random_tensor(&mut g, &[case.o]);
    let y = layers::conv2d_forward(&x, &w, &b, case.stride).unwrap();
    let r = random_tensor(&mut g, y.shape());
    let grads = layers::conv2d_backward(&x, &w, &r, case.stride, true).unwrap();
    let s = case.stride;
    let ex = fd_check(&x, grads.input.as_ref().unwrap().data(), |x| {
        project(&layers::conv2d_forward(x, &w, &b, s).unwrap(), &r)
    });
    let ew = fd_check(&w, grads.weight.data(), |w| project(&layers::conv2d_forward(&x, w, &b, s).unwrap(), &r));
    let eb = fd_check(&b, grads.bias.data(), |b| project(&layers::conv2d_forward(&x, &w, b, s).unwrap(), &r));
    ex.max(ew).max(eb)
}

pub fn check_activation(kind: Activation, len: usize, seed: u64) -> f64 {
    let mut g = rng(seed);
    let x = random_tensor(&mut g, &[len]);
    let r = random_tensor(&mut g, &[len]);
    let analytic = layers::activation_backward(kind, &x, &r).unwrap();
    fd_check(&x, analytic.data(), |x| project(&layers::activation_forward(kind, x), &r))
}

pub fn check_pool(kind: Pool, shape: [usize; 4], k: usize, seed: u64) -> f64 {
    let mut g = rng(seed);
    let x = random_tensor(&mut g, &shape);
    let y = layers::pool_forward(kind, &x, k).unwrap();
    let r = random_tensor(&mut g, y.shape());
    let analytic = layers::pool_backward(kind, &x, k, &r).unwrap();
    fd_check(&x, analytic.data(), |x| project(&layers::pool_forward(kind, x, k).unwrap(), &r))
}

pub fn check_linear(n: usize, d_in: usize, d_out: usize, seed: u64) -> f64 {
    let mut g = rng(seed);
    let x = random_tensor(&mut g, &[n, d_in]);
    let w = random_tensor(&mut g, &[d_in, d_out]);
    let b = random_tensor(&mut g, &[d_out]);
    let r = random_tensor(&mut g, &[n, d_out]);
    let grads = layers::linear_backward(&x, &w, &r).unwrap();
    let ex = fd_check(&x, grads.input.data(), |x| project(&layers::linear_forward(x, &w, &b).unwrap(), &r));
    let ew = fd_check(&w, grads.weight.data(), |w| project(&layers::linear_forward(&x, w, &b).unwrap(), &r));
    let eb = fd_check(&b, grads.bias.data(), |b| project(&layers::linear_forward(&x, &w, b).unwrap(), &r));
    ex.max(ew).max(eb)
}

pub fn check_mse(len: usize, seed: u64) -> f64 {
    let mut g = rng(seed);
    let p = random_tensor(&mut g, &[len]);
    let t = random_tensor(&mut g, &[len]);
    let (_, grad) = layers::mse_loss(&p, &t).unwrap();
    fd_check(&p, grad.data(), |p| layers::mse_loss(p, &t).unwrap().0)
}

pub fn small_model_config(activation: Activation, pool: Pool, fc_layers: usize, stride: usize) -> ModelConfig {
    ModelConfig {
        in_channels: 2,
        input_side: 8,
        out_channels: 2,
        kernel: 3,
        stride,
        activation,
        pool,
        pool_kernel: 2,
        fc_layers,
        output_shape: [2, 2, 2],
    }
}

/// Distance below which a piecewise-linear unit is treated as sitting on
/// its kink for a central-difference stencil of width `FD_EPS`.
pub const KINK_MARGIN: f64 = 1e-4;

fn model_case(config: &ModelConfig, batch: usize, seed: u64) -> (Model<f64>, Tensor<f64>, Tensor<f64>) {
    let mut g = rng(seed);
    let model = Model::<f64>::init(config.clone(), seed).unwrap();
    let x = random_tensor(&mut g, &[batch, config.in_channels, config.input_side, config.input_side]);
    let mut yshape = vec![batch];
    yshape.extend(config.output_shape);
    let y = random_tensor(&mut g, &yshape);
    (model, x, y)
}

/// Smallest distance of any ReLU-family pre-activation from zero, or of any
/// live max-pool winner from its runner-up, in the `check_model` case.
pub fn kink_margin(config: &ModelConfig, batch: usize, seed: u64) -> f64 {
    let (model, x, _) = model_case(config, batch, seed);
    let p = &model.params().tensors;
    let piecewise = config.activation != Activation::Tanh;
    let mut margin = f64::INFINITY;
    let mut note = |pre: &Tensor<f64>| {
        if piecewise {
            margin = pre.data().iter().fold(margin, |m, v| m.min(v.abs()));
        }
    };
    let conv = layers::conv2d_forward(&x, &p[0], &p[1], config.stride).unwrap();
    note(&conv);
    let act = layers::activation_forward(config.activation, &conv);
    let mut pool_gap = f64::INFINITY;
    if config.pool == Pool::Max {
        let (h, k) = (act.shape()[2], config.pool_kernel);
        for plane in act.data().chunks(h * h) {
            for oy in 0..h / k {
                for ox in 0..h / k {
                    let mut vals: Vec<f64> = (0..k * k).map(|i| plane[(oy * k + i / k) * h + ox * k + i % k]).collect();
                    vals.sort_by(|a, b| b.total_cmp(a));
                    let dead = config.activation == Activation::Relu && vals[0] == 0.0;
                    if !dead {
                        pool_gap = pool_gap.min(vals[0] - vals[1]);
                    }
                }
            }
        }
    }
    let pooled = layers::pool_forward(config.pool, &act, config.pool_kernel).unwrap();
    let mut h = pooled.reshape(vec![batch, config.flattened_dim().unwrap()]).unwrap();
    for layer in 0..config.fc_layers {
        let y = layers::linear_forward(&h, &p[2 + 2 * layer], &p[3 + 2 * layer]).unwrap();
        if layer + 1 < config.fc_layers {
            note(&y);
            h = layers::activation_forward(config.activation, &y);
        }
    }
    margin.min(pool_gap)
}

/// Whole-model check: the full gradient vector of `loss_and_gradients`
/// against central differences of the forward MSE.
pub fn check_model(config: &ModelConfig, batch: usize, seed: u64) -> f64 {
    let (mut model, x, y) = model_case(config, batch, seed);
    let (_, grads) = model.loss_and_gradients(&x, &y).unwrap();
    let (mut diff, mut norm) = (0f64, 0f64);
    let mut probe = model.clone();
    for (slot, grad) in grads.tensors.iter().enumerate() {
        for (i, &a) in grad.data().iter().enumerate() {
            let orig = model.params().tensors[slot].data()[i];
            let mut at = |v: f64| {
                probe.params_mut().tensors[slot].data_mut()[i] = v;
                layers::mse_loss(&probe.forward(&x).unwrap(), &y).unwrap().0
            };
            let numeric = (at(orig + FD_EPS) - at(orig - FD_EPS)) / (2.0 * FD_EPS);
            probe.params_mut().tensors[slot].data_mut()[i] = orig;
            diff += (a - numeric).powi(2);
            norm += numeric * numeric;
        }
    }
    vector_rel_err(diff, norm)
}

use fieldnet::dataset::{self, Dataset, Normalization};
use fieldnet::em::{ArrayLayout, GridSpec, PhaseConfig};
use num_complex::Complex64;

/// Near field 5×5 at 4.5λ, far field 11×11 at 25λ, both at λ/2 pitch.
pub fn small_specs(wavelength: f64) -> (GridSpec, GridSpec) {
    (
        GridSpec::from_wavelengths(4.5, 2.0, 0.5, wavelength).unwrap(),
        GridSpec::from_wavelengths(25.0, 5.0, 0.5, wavelength).unwrap(),
    )
}

pub fn small_dataset(n: usize, seed: u64) -> Dataset {
    small_dataset_normalized(n, seed, Normalization::None)
}

pub fn small_dataset_normalized(n: usize, seed: u64, normalization: Normalization) -> Dataset {
    let layout = ArrayLayout::published();
    let (nf, ff) = small_specs(layout.wavelength());
    dataset::generate(&layout, &nf, &ff, n, seed, normalization).unwrap()
}

/// Closed-form field of a y-directed unit dipole at `src` (z = 0), written
/// out independently of the library.
pub fn oracle_dipole(k: f64, src: [f64; 2], obs: [f64; 3]) -> [Complex64; 3] {
    let d = [obs[0] - src[0], obs[1] - src[1], obs[2]];
    let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    let n = [d[0] / r, d[1] / r, d[2] / r];
    let kr = k * r;
    let g = Complex64::new(0.0, -kr).exp();
    let far = g / kr;
    let near = g * (Complex64::new(1.0, 0.0) / (kr * kr * kr) + Complex64::new(0.0, 1.0) / (kr * kr));
    let ny = n[1];
    let p = [0.0, 1.0, 0.0];
    let mut e = [Complex64::new(0.0, 0.0); 3];
    for a in 0..3 {
        e[a] = far * (p[a] - n[a] * ny) + near * (3.0 * n[a] * ny - p[a]);
    }
    e
}

/// Direct array sum at one point with excitations `e^{jφ}` from degrees.
pub fn oracle_array_field(layout: &ArrayLayout, cfg: &PhaseConfig, obs: [f64; 3]) -> [Complex64; 3] {
    let mut acc = [Complex64::new(0.0, 0.0); 3];
    for (pos, &deg) in layout.element_positions().iter().zip(cfg.phases_deg()) {
        let w = Complex64::from_polar(1.0, (deg as f64).to_radians());
        let e = oracle_dipole(layout.wavenumber(), *pos, obs);
        for a in 0..3 {
            acc[a] += w * e[a];
        }
    }
    acc
}

pub fn vec_rel_err(a: &[Complex64; 3], b: &[Complex64; 3]) -> f64 {
    let diff: f64 = (0..3).map(|i| (a[i] - b[i]).norm_sqr()).sum::<f64>().sqrt();
    let scale: f64 = (0..3).map(|i| b[i].norm_sqr()).sum::<f64>().sqrt();
    diff / scale
}
