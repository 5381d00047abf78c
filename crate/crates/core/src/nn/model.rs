//! The reconstruction network: conv → activation → pool → flatten → linear
//! stack → reshape to the near-field tensor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::layers::{self, Activation, Pool};
use crate::nn::{AdamState, Real, Tensor};

/// Architecture hyperparameters plus the input/output geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub in_channels: usize,
    /// Side length of the square input planes.
    pub input_side: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub activation: Activation,
    pub pool: Pool,
    pub pool_kernel: usize,
    /// Number of fully connected layers, output layer included.
    pub fc_layers: usize,
    /// `[channels, side, side]` of the predicted near-field tensor.
    pub output_shape: [usize; 3],
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::published()
    }
}

impl ModelConfig {
    /// 6→10 channels, 5×5 kernel, stride 1, ReLU, 2×2 average pool, one
    /// linear layer; 6×101×101 in, 6×41×41 out.
    pub fn published() -> Self {
        Self::for_sides(101, 41)
    }

    /// Published hyperparameters on arbitrary square input/output planes.
    pub fn for_sides(input_side: usize, output_side: usize) -> Self {
        Self {
            in_channels: 6,
            input_side,
            out_channels: 10,
            kernel: 5,
            stride: 1,
            activation: Activation::Relu,
            pool: Pool::Avg,
            pool_kernel: 2,
            fc_layers: 1,
            output_shape: [6, output_side, output_side],
        }
    }

    pub fn conv_side(&self) -> Option<usize> {
        layers::conv_output_side(self.input_side, self.kernel, self.stride)
    }

    pub fn pooled_side(&self) -> Option<usize> {
        self.conv_side()
            .filter(|&s| self.pool_kernel > 0 && s >= self.pool_kernel)
            .map(|s| s / self.pool_kernel)
    }

    /// Length of the flattened pooled feature map.
    pub fn flattened_dim(&self) -> Option<usize> {
        self.pooled_side().map(|s| self.out_channels * s * s)
    }

    pub fn output_dim(&self) -> usize {
        self.output_shape.iter().product()
    }

    /// Width of each hidden fully connected layer: the rounded geometric
    /// mean of the flattened and output dimensions.
    pub fn hidden_width(&self) -> Option<usize> {
        self.flattened_dim()
            .map(|f| ((f as f64) * (self.output_dim() as f64)).sqrt().round() as usize)
    }

    /// `(in, out)` of each linear layer in order.
    pub fn linear_dims(&self) -> Result<Vec<(usize, usize)>> {
        self.validate()?;
        let flat = self.flattened_dim().expect("validated");
        let hidden = self.hidden_width().expect("validated");
        let mut dims = Vec::with_capacity(self.fc_layers);
        let mut d_in = flat;
        for i in 0..self.fc_layers {
            let d_out = if i + 1 == self.fc_layers { self.output_dim() } else { hidden };
            dims.push((d_in, d_out));
            d_in = d_out;
        }
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        if self.fc_layers == 0 {
            return Err(Error::Config("need at least one linear layer".into()));
        }
        if self.output_dim() == 0 {
            return Err(Error::Config("output shape must be non-empty".into()));
        }
        let conv = self.conv_side().ok_or_else(|| {
            Error::shape(
                "conv",
                format!("input side >= kernel {} with stride >= 1", self.kernel),
                self.input_side,
            )
        })?;
        self.pooled_side()
            .filter(|&p| p > 0)
            .ok_or_else(|| Error::shape("pool", format!("conv side >= pool kernel {}", self.pool_kernel), conv))?;
        Ok(())
    }

    pub fn param_count(&self) -> Result<usize> {
        let conv = self.out_channels * self.in_channels * self.kernel * self.kernel + self.out_channels;
        Ok(conv + self.linear_dims()?.iter().map(|(i, o)| i * o + o).sum::<usize>())
    }

    /// `key = value` lines, the inverse of [`ModelConfig::from_text`].
    pub fn to_text(&self) -> String {
        format!(
            "in_channels = {}\ninput_side = {}\nout_channels = {}\nkernel = {}\nstride = {}\nactivation = {}\npool = {}\npool_kernel = {}\nfc_layers = {}\noutput_shape = {},{},{}\n",
            self.in_channels,
            self.input_side,
            self.out_channels,
            self.kernel,
            self.stride,
            self.activation.as_str(),
            self.pool.as_str(),
            self.pool_kernel,
            self.fc_layers,
            self.output_shape[0],
            self.output_shape[1],
            self.output_shape[2],
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::published();
        let mut seen = 0;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("bad model config line {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            let num = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad value {v:?} for {k}")))
            };
            match k {
                "in_channels" => cfg.in_channels = num(v)?,
                "input_side" => cfg.input_side = num(v)?,
                "out_channels" => cfg.out_channels = num(v)?,
                "kernel" => cfg.kernel = num(v)?,
                "stride" => cfg.stride = num(v)?,
                "activation" => cfg.activation = Activation::parse(v)?,
                "pool" => cfg.pool = Pool::parse(v)?,
                "pool_kernel" => cfg.pool_kernel = num(v)?,
                "fc_layers" => cfg.fc_layers = num(v)?,
                "output_shape" => {
                    let parts = v.split(',').map(|p| num(p.trim())).collect::<Result<Vec<_>>>()?;
                    cfg.output_shape = parts
                        .try_into()
                        .map_err(|_| Error::Config("output_shape needs three dims".into()))?;
                }
                other => return Err(Error::Config(format!("unknown model config key {other:?}"))),
            }
            seen += 1;
        }
        if seen != 10 {
            return Err(Error::Config(format!("model config has {seen} keys, expected 10")));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parameter tensors in slot order: conv weight `[O, C, k, k]`, conv bias
/// `[O]`, then weight `[in, out]` and bias `[out]` for each linear layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub tensors: Vec<Tensor<T>>,
}

pub const CONV_WEIGHT: usize = 0;
pub const CONV_BIAS: usize = 1;

pub fn linear_weight_slot(layer: usize) -> usize {
    2 + 2 * layer
}

pub fn linear_bias_slot(layer: usize) -> usize {
    3 + 2 * layer
}

impl<T: Real> ModelParams<T> {
    pub fn zeros_for(config: &ModelConfig) -> Result<Self> {
        Ok(Self {
            tensors: param_shapes(config)?.into_iter().map(Tensor::zeros).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn param_shapes(config: &ModelConfig) -> Result<Vec<Vec<usize>>> {
    let mut shapes = vec![
        vec![config.out_channels, config.in_channels, config.kernel, config.kernel],
        vec![config.out_channels],
    ];
    for (d_in, d_out) in config.linear_dims()? {
        shapes.push(vec![d_in, d_out]);
        shapes.push(vec![d_out]);
    }
    Ok(shapes)
}

/// Receives each parameter gradient, possibly in pieces, together with the
/// matching mutable parameter slice.
pub trait ParamSink<T> {
    fn absorb(&mut self, slot: usize, offset: usize, grad: &[T], param: &mut [T]) -> Result<()>;
}

/// Copies gradients into a full [`ModelParams`] buffer.
pub struct GradCollector<T> {
    pub grads: ModelParams<T>,
}

impl<T: Real> ParamSink<T> for GradCollector<T> {
    fn absorb(&mut self, slot: usize, offset: usize, grad: &[T], _param: &mut [T]) -> Result<()> {
        self.grads.tensors[slot].data_mut()[offset..offset + grad.len()].copy_from_slice(grad);
        Ok(())
    }
}

/// Applies Adam to each piece as it arrives, so no full gradient buffer is
/// ever materialized.
pub struct AdamSink<'a, T> {
    pub state: &'a mut AdamState<T>,
    pub lr: f64,
}

impl<T: Real> ParamSink<T> for AdamSink<'_, T> {
    fn absorb(&mut self, slot: usize, offset: usize, grad: &[T], param: &mut [T]) -> Result<()> {
        self.state.update_slice(slot, offset, param, grad, self.lr)
    }
}

struct Trace<T> {
    conv_pre: Tensor<T>,
    activated: Tensor<T>,
    /// Input to each linear layer.
    linear_in: Vec<Tensor<T>>,
    /// Pre-activation outputs of the hidden linear layers.
    hidden_pre: Vec<Tensor<T>>,
    output: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    params: ModelParams<T>,
}

impl<T: Real> Model<T> {
    /// Uniform initialization in `±1/sqrt(fan_in)` per layer, seeded.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let shapes = param_shapes(&config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let conv_fan_in = config.in_channels * config.kernel * config.kernel;
        let dims = config.linear_dims()?;
        let tensors = shapes
            .into_iter()
            .enumerate()
            .map(|(slot, shape)| {
                let fan_in = if slot < 2 { conv_fan_in } else { dims[(slot - 2) / 2].0 };
                let bound = 1.0 / (fan_in as f64).sqrt();
                let len = shape.iter().product();
                let data = (0..len)
                    .map(|_| T::from_f64_lossy(rng.gen_range(-bound..bound)))
                    .collect();
                Tensor::new(shape, data)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            params: ModelParams { tensors },
        })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        let params = ModelParams::zeros_for(&config)?;
        Ok(Self { config, params })
    }

    pub fn from_params(config: ModelConfig, params: ModelParams<T>) -> Result<Self> {
        let shapes = param_shapes(&config)?;
        if shapes.len() != params.tensors.len()
            || shapes.iter().zip(&params.tensors).any(|(s, t)| s[..] != *t.shape())
        {
            return Err(Error::shape(
                "model parameters",
                shapes,
                params.tensors.iter().map(|t| t.shape().to_vec()).collect::<Vec<_>>(),
            ));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ModelParams<T> {
        self.params
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<usize> {
        let c = &self.config;
        let [n, ch, h, w] = input.dims4("input")?;
        if ch != c.in_channels || h != c.input_side || w != c.input_side {
            return Err(Error::shape("input", [n, c.in_channels, c.input_side, c.input_side], input.shape()));
        }
        Ok(n)
    }

    fn trace(&self, input: &Tensor<T>) -> Result<Trace<T>> {
        let n = self.check_input(input)?;
        let c = &self.config;
        let p = &self.params.tensors;
        let conv_pre = layers::conv2d_forward(input, &p[CONV_WEIGHT], &p[CONV_BIAS], c.stride)?;
        let activated = layers::activation_forward(c.activation, &conv_pre);
        let pooled = layers::pool_forward(c.pool, &activated, c.pool_kernel)?;
        let flat_dim = c.flattened_dim().expect("validated");
        let mut x = pooled.reshape(vec![n, flat_dim])?;
        let mut linear_in = Vec::with_capacity(c.fc_layers);
        let mut hidden_pre = Vec::new();
        for layer in 0..c.fc_layers {
            let y = layers::linear_forward(&x, &p[linear_weight_slot(layer)], &p[linear_bias_slot(layer)])?;
            linear_in.push(x);
            if layer + 1 < c.fc_layers {
                x = layers::activation_forward(c.activation, &y);
                hidden_pre.push(y);
            } else {
                x = y;
            }
        }
        let [oc, oh, ow] = c.output_shape;
        let output = x.reshape(vec![n, oc, oh, ow])?;
        Ok(Trace {
            conv_pre,
            activated,
            linear_in,
            hidden_pre,
            output,
        })
    }

    /// `[N, C, H, W]` far-field batch → `[N, 6, S, S]` near-field prediction.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.trace(input)?.output)
    }

    /// Backward pass feeding every parameter gradient to `sink`. Each linear
    /// layer's input gradient is formed before its weights are handed out, so
    /// a sink may update parameters in place.
    fn backward(&mut self, input: &Tensor<T>, trace: Trace<T>, grad_out: Tensor<T>, sink: &mut impl ParamSink<T>) -> Result<()> {
        let c = self.config.clone();
        let n = input.shape()[0];
        let mut dy = grad_out.reshape(vec![n, c.output_dim()])?;
        let Trace {
            conv_pre,
            activated,
            linear_in,
            mut hidden_pre,
            ..
        } = trace;
        for layer in (0..c.fc_layers).rev() {
            let w_slot = linear_weight_slot(layer);
            let b_slot = linear_bias_slot(layer);
            let x = &linear_in[layer];
            let dx = layers::linear_input_grad(&self.params.tensors[w_slot], &dy)?;
            let db = layers::linear_bias_grad(&dy)?;
            sink.absorb(b_slot, 0, &db, self.params.tensors[b_slot].data_mut())?;
            let d_out = dy.shape()[1];
            let weight = self.params.tensors[w_slot].data_mut();
            layers::linear_weight_grad_blocks(x, &dy, |row0, block| {
                let off = row0 * d_out;
                sink.absorb(w_slot, off, block, &mut weight[off..off + block.len()])
            })?;
            dy = if layer > 0 {
                let pre = hidden_pre.pop().expect("one per hidden layer");
                layers::activation_backward(c.activation, &pre, &dx)?
            } else {
                dx
            };
        }
        let pooled_side = c.pooled_side().expect("validated");
        let d_pooled = dy.reshape(vec![n, c.out_channels, pooled_side, pooled_side])?;
        let d_act = layers::pool_backward(c.pool, &activated, c.pool_kernel, &d_pooled)?;
        let d_conv = layers::activation_backward(c.activation, &conv_pre, &d_act)?;
        let g = layers::conv2d_backward(input, &self.params.tensors[CONV_WEIGHT], &d_conv, c.stride, false)?;
        sink.absorb(CONV_BIAS, 0, g.bias.data(), self.params.tensors[CONV_BIAS].data_mut())?;
        sink.absorb(CONV_WEIGHT, 0, g.weight.data(), self.params.tensors[CONV_WEIGHT].data_mut())?;
        Ok(())
    }

    /// MSE loss of the prediction and the full parameter gradient.
    pub fn loss_and_gradients(&mut self, input: &Tensor<T>, target: &Tensor<T>) -> Result<(T, ModelParams<T>)> {
        let trace = self.trace(input)?;
        let (loss, grad) = layers::mse_loss(&trace.output, target)?;
        let mut sink = GradCollector {
            grads: ModelParams::zeros_for(&self.config)?,
        };
        self.backward(input, trace, grad, &mut sink)?;
        Ok((loss, sink.grads))
    }

    /// One fused forward/backward/Adam step; returns the pre-update loss.
    /// A non-finite loss aborts before any parameter changes.
    pub fn train_step(&mut self, input: &Tensor<T>, target: &Tensor<T>, state: &mut AdamState<T>, lr: f64) -> Result<T> {
        let trace = self.trace(input)?;
        let (loss, grad) = layers::mse_loss(&trace.output, target)?;
        if !loss.is_finite() || !grad.is_finite() {
            return Err(Error::NonFinite {
                context: format!("training loss ({loss:?})"),
            });
        }
        if !state.congruent_with(&self.params) {
            return Err(Error::shape("adam state", self.params.tensors.len(), state.first.len()));
        }
        state.begin_step();
        self.backward(input, trace, grad, &mut AdamSink { state, lr })?;
        Ok(loss)
    }
}
