//! Compare the analytic gradient of a small network with central finite
//! differences in f64.
//!
//! ```text
//! cargo run --release --example gradient_check
//! ```

use fieldnet::nn::layers::{mse_loss, Activation, Pool};
use fieldnet::nn::{Model, ModelConfig, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> fieldnet::Result<()> {
    let eps = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (activation, pool) in [(Activation::Relu, Pool::Avg), (Activation::Tanh, Pool::Max), (Activation::LeakyRelu, Pool::Avg)] {
        let config = ModelConfig {
            in_channels: 2,
            input_side: 9,
            out_channels: 3,
            kernel: 3,
            stride: 1,
            activation,
            pool,
            pool_kernel: 2,
            fc_layers: 2,
            output_shape: [2, 3, 3],
        };
        let mut model = Model::<f64>::init(config, 1)?;
        let x = Tensor::new(vec![2, 2, 9, 9], (0..324).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
        let y = Tensor::new(vec![2, 2, 3, 3], (0..36).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
        let (_, grads) = model.loss_and_gradients(&x, &y)?;

        let mut worst = 0f64;
        for slot in 0..grads.tensors.len() {
            for i in 0..grads.tensors[slot].len() {
                let orig = model.params().tensors[slot].data()[i];
                let mut loss_at = |v: f64| -> fieldnet::Result<f64> {
                    model.params_mut().tensors[slot].data_mut()[i] = v;
                    Ok(mse_loss(&model.forward(&x)?, &y)?.0)
                };
                let numeric = (loss_at(orig + eps)? - loss_at(orig - eps)?) / (2.0 * eps);
                loss_at(orig)?;
                let analytic = grads.tensors[slot].data()[i];
                let scale = analytic.abs().max(numeric.abs());
                if scale > 1e-7 {
                    worst = worst.max((analytic - numeric).abs() / scale);
                }
            }
        }
        println!("{:>10} + {} pool: worst relative error {worst:.2e}", activation.as_str(), pool.as_str());
    }
    Ok(())
}
