//! Batched layer kernels with hand-derived backward passes.
//!
//! Image tensors are `[N, C, H, W]`; dense tensors are `[N, D]`. Gradients
//! over a batch are reduced in ascending sample order.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::real::{gemm, Mat};
use crate::nn::{Real, Tensor};

/// Rows of a linear weight gradient produced per block.
pub const WEIGHT_BLOCK_ROWS: usize = 64;

pub const LEAKY_RELU_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Tanh,
    LeakyRelu,
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Relu, Activation::Tanh, Activation::LeakyRelu];

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::LeakyRelu => "leaky_relu",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "leaky_relu" => Ok(Activation::LeakyRelu),
            other => Err(Error::Config(format!("unknown activation {other:?}"))),
        }
    }

    fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Tanh => x.tanh(),
            Activation::LeakyRelu => {
                if x > T::zero() {
                    x
                } else {
                    x * T::from_f64_lossy(LEAKY_RELU_SLOPE)
                }
            }
        }
    }

    /// Derivative at the pre-activation value `x`; ReLU'(0) = 0.
    fn derivative<T: Real>(self, x: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                T::one() - t * t
            }
            Activation::LeakyRelu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::from_f64_lossy(LEAKY_RELU_SLOPE)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pool {
    Avg,
    Max,
}

impl Pool {
    pub fn as_str(self) -> &'static str {
        match self {
            Pool::Avg => "avg",
            Pool::Max => "max",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "avg" => Ok(Pool::Avg),
            "max" => Ok(Pool::Max),
            other => Err(Error::Config(format!("unknown pooling {other:?}"))),
        }
    }
}

/// Output side of a valid (unpadded) convolution.
pub fn conv_output_side(side: usize, kernel: usize, stride: usize) -> Option<usize> {
    if kernel == 0 || stride == 0 || side < kernel {
        None
    } else {
        Some((side - kernel) / stride + 1)
    }
}

fn conv_geometry<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
) -> Result<([usize; 4], [usize; 4], usize, usize)> {
    let [n, c, h, w] = input.dims4("conv input")?;
    let [o, wc, kh, kw] = weight.dims4("conv weight")?;
    if wc != c || kh != kw {
        return Err(Error::shape("conv weight", [o, c, kh, kh], weight.shape()));
    }
    let ho = conv_output_side(h, kh, stride)
        .ok_or_else(|| Error::shape("conv input", format!("H >= {kh}, stride >= 1"), [h, w]))?;
    let wo = conv_output_side(w, kw, stride)
        .ok_or_else(|| Error::shape("conv input", format!("W >= {kw}, stride >= 1"), [h, w]))?;
    Ok(([n, c, h, w], [o, wc, kh, kw], ho, wo))
}

/// Unfold one `[C, H, W]` sample into `[C·k·k, Ho·Wo]` columns.
fn im2col<T: Real>(x: &[T], c: usize, h: usize, w: usize, k: usize, stride: usize, ho: usize, wo: usize) -> Vec<T> {
    let p = ho * wo;
    let mut cols = vec![T::zero(); c * k * k * p];
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..ho {
                    let src = &plane[(oy * stride + ky) * w + kx..];
                    let d = &mut dst[oy * wo..(oy + 1) * wo];
                    if stride == 1 {
                        d.copy_from_slice(&src[..wo]);
                    } else {
                        for (ox, v) in d.iter_mut().enumerate() {
                            *v = src[ox * stride];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im_add<T: Real>(cols: &[T], out: &mut [T], c: usize, h: usize, w: usize, k: usize, stride: usize, ho: usize, wo: usize) {
    let p = ho * wo;
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..ho {
                    for ox in 0..wo {
                        let iy = oy * stride + ky;
                        let ix = ox * stride + kx;
                        out[(ci * h + iy) * w + ix] = out[(ci * h + iy) * w + ix] + src[oy * wo + ox];
                    }
                }
            }
        }
    }
}

/// Valid cross-correlation: `[N, C, H, W] → [N, O, Ho, Wo]`.
pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
) -> Result<Tensor<T>> {
    let ([n, c, h, w], [o, _, k, _], ho, wo) = conv_geometry(input, weight, stride)?;
    if bias.shape() != [o] {
        return Err(Error::shape("conv bias", [o], bias.shape()));
    }
    let p = ho * wo;
    let ck = c * k * k;
    let mut out = vec![T::zero(); n * o * p];
    out.par_chunks_mut(o * p)
        .zip(input.data().par_chunks(c * h * w))
        .for_each(|(dst, x)| {
            let cols = im2col(x, c, h, w, k, stride, ho, wo);
            for (oi, row) in dst.chunks_mut(p).enumerate() {
                row.fill(bias.data()[oi]);
            }
            gemm(
                T::one(),
                Mat::row_major(weight.data(), o, ck),
                Mat::row_major(&cols, ck, p),
                T::one(),
                dst,
            );
        });
    Tensor::new(vec![n, o, ho, wo], out)
}

pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    want_input: bool,
) -> Result<ConvGrads<T>> {
    let ([n, c, h, w], [o, _, k, _], ho, wo) = conv_geometry(input, weight, stride)?;
    if grad_out.shape() != [n, o, ho, wo] {
        return Err(Error::shape("conv grad", [n, o, ho, wo], grad_out.shape()));
    }
    let p = ho * wo;
    let ck = c * k * k;
    let per_sample: Vec<(Vec<T>, Vec<T>, Option<Vec<T>>)> = input
        .data()
        .par_chunks(c * h * w)
        .zip(grad_out.data().par_chunks(o * p))
        .map(|(x, g)| {
            let cols = im2col(x, c, h, w, k, stride, ho, wo);
            let mut dw = vec![T::zero(); o * ck];
            gemm(
                T::one(),
                Mat::row_major(g, o, p),
                Mat::row_major(&cols, ck, p).t(),
                T::zero(),
                &mut dw,
            );
            let db: Vec<T> = g.chunks(p).map(|row| row.iter().copied().sum()).collect();
            let dx = want_input.then(|| {
                let mut dcols = vec![T::zero(); ck * p];
                gemm(
                    T::one(),
                    Mat::row_major(weight.data(), o, ck).t(),
                    Mat::row_major(g, o, p),
                    T::zero(),
                    &mut dcols,
                );
                let mut dx = vec![T::zero(); c * h * w];
                col2im_add(&dcols, &mut dx, c, h, w, k, stride, ho, wo);
                dx
            });
            (dw, db, dx)
        })
        .collect();

    let mut dw = vec![T::zero(); o * ck];
    let mut db = vec![T::zero(); o];
    let mut dx = want_input.then(|| Vec::with_capacity(n * c * h * w));
    for (sw, sb, sx) in per_sample {
        dw.iter_mut().zip(&sw).for_each(|(a, b)| *a = *a + *b);
        db.iter_mut().zip(&sb).for_each(|(a, b)| *a = *a + *b);
        if let (Some(acc), Some(sx)) = (dx.as_mut(), sx) {
            acc.extend_from_slice(&sx);
        }
    }
    Ok(ConvGrads {
        input: dx.map(|d| Tensor::new(vec![n, c, h, w], d)).transpose()?,
        weight: Tensor::new(vec![o, c, k, k], dw)?,
        bias: Tensor::new(vec![o], db)?,
    })
}

pub fn activation_forward<T: Real>(kind: Activation, x: &Tensor<T>) -> Tensor<T> {
    let data = x.data().iter().map(|&v| kind.apply(v)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

/// `grad_out ⊙ f'(x)` with `x` the pre-activation input.
pub fn activation_backward<T: Real>(kind: Activation, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape() != grad_out.shape() {
        return Err(Error::shape("activation grad", x.shape(), grad_out.shape()));
    }
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| g * kind.derivative(v))
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

fn pool_dims<T: Real>(x: &Tensor<T>, k: usize) -> Result<[usize; 6]> {
    let [n, c, h, w] = x.dims4("pool input")?;
    if k == 0 || h < k || w < k {
        return Err(Error::shape("pool input", format!("H, W >= {k}"), [h, w]));
    }
    Ok([n, c, h, w, h / k, w / k])
}

/// Non-overlapping `k×k` windows with stride `k`; trailing rows and columns
/// that do not fill a window are dropped.
pub fn pool_forward<T: Real>(kind: Pool, x: &Tensor<T>, k: usize) -> Result<Tensor<T>> {
    let [n, c, h, w, ho, wo] = pool_dims(x, k)?;
    let scale = T::one() / T::from_usize(k * k).expect("window");
    let mut out = vec![T::zero(); n * c * ho * wo];
    for (plane, dst) in x.data().chunks(h * w).zip(out.chunks_mut(ho * wo)) {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = match kind {
                    Pool::Avg => T::zero(),
                    Pool::Max => T::neg_infinity(),
                };
                for dy in 0..k {
                    for dx in 0..k {
                        let v = plane[(oy * k + dy) * w + ox * k + dx];
                        acc = match kind {
                            Pool::Avg => acc + v,
                            Pool::Max => if v > acc { v } else { acc },
                        };
                    }
                }
                dst[oy * wo + ox] = match kind {
                    Pool::Avg => acc * scale,
                    Pool::Max => acc,
                };
            }
        }
    }
    Tensor::new(vec![n, c, ho, wo], out)
}

/// Average pooling spreads each gradient uniformly over its window; max
/// pooling routes it to the first maximal element in row-major order.
pub fn pool_backward<T: Real>(kind: Pool, x: &Tensor<T>, k: usize, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w, ho, wo] = pool_dims(x, k)?;
    if grad_out.shape() != [n, c, ho, wo] {
        return Err(Error::shape("pool grad", [n, c, ho, wo], grad_out.shape()));
    }
    let scale = T::one() / T::from_usize(k * k).expect("window");
    let mut dx = vec![T::zero(); n * c * h * w];
    for ((plane, g), d) in x
        .data()
        .chunks(h * w)
        .zip(grad_out.data().chunks(ho * wo))
        .zip(dx.chunks_mut(h * w))
    {
        for oy in 0..ho {
            for ox in 0..wo {
                let go = g[oy * wo + ox];
                match kind {
                    Pool::Avg => {
                        for dy in 0..k {
                            for ddx in 0..k {
                                d[(oy * k + dy) * w + ox * k + ddx] = go * scale;
                            }
                        }
                    }
                    Pool::Max => {
                        let mut best = (oy * k) * w + ox * k;
                        for dy in 0..k {
                            for ddx in 0..k {
                                let at = (oy * k + dy) * w + ox * k + ddx;
                                if plane[at] > plane[best] {
                                    best = at;
                                }
                            }
                        }
                        d[best] = d[best] + go;
                    }
                }
            }
        }
    }
    Tensor::new(vec![n, c, h, w], dx)
}

/// `y = x W + b` with `x: [N, in]`, `W: [in, out]`, `b: [out]`.
pub fn linear_forward<T: Real>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, d_in] = x.dims2("linear input")?;
    let [w_in, d_out] = weight.dims2("linear weight")?;
    if w_in != d_in {
        return Err(Error::shape("linear input", [n, w_in], x.shape()));
    }
    if bias.shape() != [d_out] {
        return Err(Error::shape("linear bias", [d_out], bias.shape()));
    }
    let mut y = Vec::with_capacity(n * d_out);
    for _ in 0..n {
        y.extend_from_slice(bias.data());
    }
    gemm(
        T::one(),
        Mat::row_major(x.data(), n, d_in),
        Mat::row_major(weight.data(), d_in, d_out),
        T::one(),
        &mut y,
    );
    Tensor::new(vec![n, d_out], y)
}

/// `dx = dy Wᵀ`
pub fn linear_input_grad<T: Real>(weight: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let [d_in, d_out] = weight.dims2("linear weight")?;
    let [n, g_out] = grad_out.dims2("linear grad")?;
    if g_out != d_out {
        return Err(Error::shape("linear grad", [n, d_out], grad_out.shape()));
    }
    let mut dx = vec![T::zero(); n * d_in];
    gemm(
        T::one(),
        Mat::row_major(grad_out.data(), n, d_out),
        Mat::row_major(weight.data(), d_in, d_out).t(),
        T::zero(),
        &mut dx,
    );
    Tensor::new(vec![n, d_in], dx)
}

/// Column sums of `dy`, accumulated in sample order.
pub fn linear_bias_grad<T: Real>(grad_out: &Tensor<T>) -> Result<Vec<T>> {
    let [_, d_out] = grad_out.dims2("linear grad")?;
    let mut db = vec![T::zero(); d_out];
    for row in grad_out.data().chunks(d_out) {
        db.iter_mut().zip(row).for_each(|(a, b)| *a = *a + *b);
    }
    Ok(db)
}

/// Stream `dW = xᵀ dy` in blocks of [`WEIGHT_BLOCK_ROWS`] rows. `sink`
/// receives the first row index and the row-major block.
pub fn linear_weight_grad_blocks<T: Real>(
    x: &Tensor<T>,
    grad_out: &Tensor<T>,
    mut sink: impl FnMut(usize, &[T]) -> Result<()>,
) -> Result<()> {
    let [n, d_in] = x.dims2("linear input")?;
    let [gn, d_out] = grad_out.dims2("linear grad")?;
    if gn != n {
        return Err(Error::shape("linear grad", [n, d_out], grad_out.shape()));
    }
    let xt = Mat::row_major(x.data(), n, d_in).t();
    let dy = Mat::row_major(grad_out.data(), n, d_out);
    let mut block = vec![T::zero(); WEIGHT_BLOCK_ROWS * d_out];
    let mut row0 = 0;
    while row0 < d_in {
        let rows = WEIGHT_BLOCK_ROWS.min(d_in - row0);
        let a = Mat {
            data: &xt.data[row0..],
            rows,
            cols: n,
            rs: xt.rs,
            cs: xt.cs,
        };
        let out = &mut block[..rows * d_out];
        gemm(T::one(), a, dy, T::zero(), out);
        sink(row0, out)?;
        row0 += rows;
    }
    Ok(())
}

pub struct LinearGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn linear_backward<T: Real>(x: &Tensor<T>, weight: &Tensor<T>, grad_out: &Tensor<T>) -> Result<LinearGrads<T>> {
    let [d_in, d_out] = weight.dims2("linear weight")?;
    let input = linear_input_grad(weight, grad_out)?;
    let bias = Tensor::new(vec![d_out], linear_bias_grad(grad_out)?)?;
    let mut dw = vec![T::zero(); d_in * d_out];
    linear_weight_grad_blocks(x, grad_out, |row0, block| {
        dw[row0 * d_out..row0 * d_out + block.len()].copy_from_slice(block);
        Ok(())
    })?;
    Ok(LinearGrads {
        input,
        weight: Tensor::new(vec![d_in, d_out], dw)?,
        bias,
    })
}

/// Mean squared error over all elements and its gradient `2(pred - target)/N`.
pub fn mse_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("mse", target.shape(), pred.shape()));
    }
    let n = pred.len();
    if n == 0 {
        return Ok((T::zero(), Tensor::zeros(pred.shape().to_vec())));
    }
    let inv_n = T::one() / T::from_usize(n).expect("count");
    let two = T::from_f64_lossy(2.0);
    let mut sum = 0f64;
    let mut grad = Vec::with_capacity(n);
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let d = p - t;
        sum += (d * d).to_f64_lossy();
        grad.push(two * d * inv_n);
    }
    let loss = T::from_f64_lossy(sum / n as f64);
    Ok((loss, Tensor::new(pred.shape().to_vec(), grad)?))
}
