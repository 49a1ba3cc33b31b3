//! Layer kernels with explicit forward and backward passes.
//!
//! Batched activations are `[N, C, H, W]` for the convolutional stages and
//! `[N, features]` for the fully connected ones.

use crate::error::{shape_err, Error, Result};
use crate::tensor::{gemm, transpose_into, Patches, Shape, Tensor};

fn nchw(x: &Tensor, what: &str) -> Result<[usize; 4]> {
    match *x.dims() {
        [n, c, h, w] => Ok([n, c, h, w]),
        _ => Err(shape_err!("{what}: expected [N, C, H, W], got {}", x.shape())),
    }
}

fn tensor(dims: &[usize], data: Vec<f32>) -> Tensor {
    Tensor::from_parts(Shape::new(dims).expect("layer shapes are validated upstream"), data)
}

/// State a convolution keeps for its backward pass.
#[derive(Clone, Debug)]
pub struct ConvCache {
    batch: usize,
    patches: Patches,
    /// Lowered input, `[C_in·kh·kw, N·out_h·out_w]`.
    cols: Vec<f32>,
    weight: Tensor,
}

#[derive(Clone, Debug)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

/// 2-D cross-correlation: `out[n, o] = bias[o] + Σ_c weight[o, c] ⋆ x[n, c]`.
pub fn conv_forward(
    x: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<(Tensor, ConvCache)> {
    let [n, c, h, w] = nchw(x, "conv input")?;
    let [out_c, in_c, kh, kw] = match *weight.dims() {
        [o, i, kh, kw] => [o, i, kh, kw],
        _ => return Err(shape_err!("conv weight must be rank 4, got {}", weight.shape())),
    };
    if in_c != c {
        return Err(shape_err!(
            "conv weight {} expects {in_c} input channels, input {} has {c}",
            weight.shape(),
            x.shape()
        ));
    }
    if bias.dims() != [out_c] {
        return Err(shape_err!("conv bias {} does not match {out_c} output channels", bias.shape()));
    }
    let patches = Patches::new(c, h, w, kh, kw, stride, pad)?;
    let (rows, positions) = (patches.rows(), patches.positions());
    let ld = n * positions;

    let mut cols = vec![0.0; rows * ld];
    let image_len = c * h * w;
    for (i, image) in x.data().chunks_exact(image_len).enumerate() {
        patches.lower_into(image, &mut cols, ld, i * positions);
    }

    let mut product = vec![0.0; out_c * ld];
    gemm(weight.data(), &cols, &mut product, out_c, rows, ld);

    let mut out = vec![0.0; n * out_c * positions];
    for (o, row) in product.chunks_exact(ld).enumerate() {
        let b = bias.data()[o];
        for i in 0..n {
            let dst = &mut out[(i * out_c + o) * positions..(i * out_c + o + 1) * positions];
            for (d, &s) in dst.iter_mut().zip(&row[i * positions..(i + 1) * positions]) {
                *d = s + b;
            }
        }
    }

    let cache = ConvCache { batch: n, patches, cols, weight: weight.clone() };
    Ok((tensor(&[n, out_c, patches.out_h, patches.out_w], out), cache))
}

pub fn conv_backward(grad_out: &Tensor, cache: &ConvCache) -> Result<ConvGrads> {
    let (input, weight, bias) = conv_backward_inner(grad_out, cache, true)?;
    Ok(ConvGrads { input: input.expect("input gradient was requested"), weight, bias })
}

/// Weight and bias gradients only, for a first layer whose input needs none.
pub(crate) fn conv_backward_params(grad_out: &Tensor, cache: &ConvCache) -> Result<(Tensor, Tensor)> {
    let (_, weight, bias) = conv_backward_inner(grad_out, cache, false)?;
    Ok((weight, bias))
}

fn conv_backward_inner(
    grad_out: &Tensor,
    cache: &ConvCache,
    need_input: bool,
) -> Result<(Option<Tensor>, Tensor, Tensor)> {
    let p = &cache.patches;
    let out_c = cache.weight.dims()[0];
    let n = cache.batch;
    let expected = [n, out_c, p.out_h, p.out_w];
    if grad_out.dims() != expected {
        return Err(shape_err!(
            "conv gradient {} does not match forward output {}",
            grad_out.shape(),
            Shape::new(&expected)?
        ));
    }
    let (rows, positions) = (p.rows(), p.positions());
    let ld = n * positions;

    // Gather the gradient as [C_out, N·P] to line up with the lowered input.
    let mut g = vec![0.0; out_c * ld];
    for i in 0..n {
        for o in 0..out_c {
            let src = &grad_out.data()[(i * out_c + o) * positions..(i * out_c + o + 1) * positions];
            g[o * ld + i * positions..o * ld + (i + 1) * positions].copy_from_slice(src);
        }
    }

    let grad_bias: Vec<f32> = g.chunks_exact(ld).map(|row| row.iter().fold(0.0, |acc, &v| acc + v)).collect();

    let mut cols_t = vec![0.0; rows * ld];
    transpose_into(&cache.cols, &mut cols_t, rows, ld);
    let mut grad_w = vec![0.0; out_c * rows];
    gemm(&g, &cols_t, &mut grad_w, out_c, ld, rows);
    drop(cols_t);

    let weight = tensor(cache.weight.dims(), grad_w);
    let bias = tensor(&[out_c], grad_bias);
    if !need_input {
        return Ok((None, weight, bias));
    }

    let mut w_t = vec![0.0; out_c * rows];
    transpose_into(cache.weight.data(), &mut w_t, out_c, rows);
    let mut grad_cols = vec![0.0; rows * ld];
    gemm(&w_t, &g, &mut grad_cols, rows, out_c, ld);

    let image_len = p.channels * p.height * p.width;
    let mut grad_x = vec![0.0; n * image_len];
    for (i, dst) in grad_x.chunks_exact_mut(image_len).enumerate() {
        p.raise_into(&grad_cols, ld, i * positions, dst);
    }
    Ok((Some(tensor(&[n, p.channels, p.height, p.width], grad_x)), weight, bias))
}

pub fn relu_forward(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Passes `grad` where the forward input was strictly positive. `activation`
/// may be the forward input or output: both are positive at the same places.
pub fn relu_backward(grad: &Tensor, activation: &Tensor) -> Result<Tensor> {
    if grad.shape() != activation.shape() {
        return Err(shape_err!("relu gradient {} does not match activation {}", grad.shape(), activation.shape()));
    }
    let data = grad.data().iter().zip(activation.data()).map(|(&g, &a)| if a > 0.0 { g } else { 0.0 }).collect();
    Ok(tensor(grad.dims(), data))
}

#[derive(Clone, Debug)]
pub struct PoolCache {
    input_dims: [usize; 4],
    /// Flat input index of each output's maximum.
    argmax: Vec<u32>,
}

/// 2×2 max-pool with stride 2. Ties go to the first position in row-major order.
pub fn maxpool_forward(x: &Tensor) -> Result<(Tensor, PoolCache)> {
    let [n, c, h, w] = nchw(x, "max-pool input")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(shape_err!("max-pool needs even height and width, got {}", x.shape()));
    }
    if x.numel() > u32::MAX as usize {
        return Err(shape_err!("max-pool input {} too large", x.shape()));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; n * c * oh * ow];
    let mut argmax = vec![0u32; n * c * oh * ow];
    let data = x.data();
    for (row, (dst, idx)) in out.chunks_exact_mut(ow).zip(argmax.chunks_exact_mut(ow)).enumerate() {
        // Output row `row` reads input rows 2·row and 2·row + 1 of the stacked planes.
        let top = 2 * row * w;
        let upper = &data[top..top + w];
        let lower = &data[top + w..top + 2 * w];
        for ox in 0..ow {
            let window = [upper[2 * ox], upper[2 * ox + 1], lower[2 * ox], lower[2 * ox + 1]];
            let offsets = [top + 2 * ox, top + 2 * ox + 1, top + w + 2 * ox, top + w + 2 * ox + 1];
            let mut best = 0;
            for k in 1..4 {
                if window[k] > window[best] {
                    best = k;
                }
            }
            dst[ox] = window[best];
            idx[ox] = offsets[best] as u32;
        }
    }
    let cache = PoolCache { input_dims: [n, c, h, w], argmax };
    Ok((tensor(&[n, c, oh, ow], out), cache))
}

pub fn maxpool_backward(grad_out: &Tensor, cache: &PoolCache) -> Result<Tensor> {
    let [n, c, h, w] = cache.input_dims;
    if grad_out.dims() != [n, c, h / 2, w / 2] {
        return Err(shape_err!(
            "max-pool gradient {} does not match pooled input [{n}, {c}, {h}, {w}]",
            grad_out.shape()
        ));
    }
    let mut grad = vec![0.0; n * c * h * w];
    for (&idx, &g) in cache.argmax.iter().zip(grad_out.data()) {
        grad[idx as usize] += g;
    }
    Ok(tensor(&cache.input_dims, grad))
}

#[derive(Clone, Debug)]
pub struct LinearCache {
    input: Tensor,
    weight: Tensor,
}

#[derive(Clone, Debug)]
pub struct LinearGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

/// `y = x · Wᵀ + b` for `x: [N, in]`, `W: [out, in]`, `b: [out]`.
pub fn linear_forward(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<(Tensor, LinearCache)> {
    let (n, width) = match *x.dims() {
        [n, width] => (n, width),
        _ => return Err(shape_err!("linear input must be [N, features], got {}", x.shape())),
    };
    let (out, inp) = match *weight.dims() {
        [o, i] => (o, i),
        _ => return Err(shape_err!("linear weight must be rank 2, got {}", weight.shape())),
    };
    if inp != width {
        return Err(shape_err!("linear weight {} expects {inp} inputs, got {}", weight.shape(), x.shape()));
    }
    if bias.dims() != [out] {
        return Err(shape_err!("linear bias {} does not match {out} outputs", bias.shape()));
    }
    let mut w_t = vec![0.0; out * inp];
    transpose_into(weight.data(), &mut w_t, out, inp);
    let mut y = vec![0.0; n * out];
    gemm(x.data(), &w_t, &mut y, n, inp, out);
    for row in y.chunks_exact_mut(out) {
        for (v, &b) in row.iter_mut().zip(bias.data()) {
            *v += b;
        }
    }
    let cache = LinearCache { input: x.clone(), weight: weight.clone() };
    Ok((tensor(&[n, out], y), cache))
}

pub fn linear_backward(grad_out: &Tensor, cache: &LinearCache) -> Result<LinearGrads> {
    let n = cache.input.dims()[0];
    let inp = cache.input.dims()[1];
    let out = cache.weight.dims()[0];
    if grad_out.dims() != [n, out] {
        return Err(shape_err!("linear gradient {} does not match forward output [{n}, {out}]", grad_out.shape()));
    }
    let mut g_t = vec![0.0; n * out];
    transpose_into(grad_out.data(), &mut g_t, n, out);

    let mut grad_w = vec![0.0; out * inp];
    gemm(&g_t, cache.input.data(), &mut grad_w, out, n, inp);
    let grad_b: Vec<f32> = g_t.chunks_exact(n).map(|row| row.iter().fold(0.0, |acc, &v| acc + v)).collect();
    let mut grad_x = vec![0.0; n * inp];
    gemm(grad_out.data(), cache.weight.data(), &mut grad_x, n, out, inp);

    Ok(LinearGrads {
        input: tensor(&[n, inp], grad_x),
        weight: tensor(&[out, inp], grad_w),
        bias: tensor(&[out], grad_b),
    })
}

/// Result of [`softmax_xent`].
#[derive(Clone, Debug)]
pub struct SoftmaxXent {
    /// Mean negative log-likelihood over the batch.
    pub loss: f32,
    /// `(probs − onehot) / N`.
    pub grad: Tensor,
    pub probs: Tensor,
}

/// Row-wise softmax, computed after subtracting each row's maximum.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let classes = match *logits.dims() {
        [_, c] => c,
        _ => return Err(shape_err!("logits must be [N, classes], got {}", logits.shape())),
    };
    let mut probs = logits.data().to_vec();
    for row in probs.chunks_exact_mut(classes) {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Ok(tensor(logits.dims(), probs))
}

pub fn softmax_xent(logits: &Tensor, labels: &[usize]) -> Result<SoftmaxXent> {
    let (n, classes) = match *logits.dims() {
        [n, c] => (n, c),
        _ => return Err(shape_err!("logits must be [N, classes], got {}", logits.shape())),
    };
    if labels.len() != n {
        return Err(shape_err!("{} labels for a batch of {n}", labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Validation(format!("label {bad} outside 0..{classes}")));
    }
    let probs = softmax(logits)?;
    let mut loss_sum = 0.0f32;
    let mut grad = probs.data().to_vec();
    let scale = 1.0 / n as f32;
    for ((row, g), &label) in logits.data().chunks_exact(classes).zip(grad.chunks_exact_mut(classes)).zip(labels) {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let lse = row.iter().fold(0.0f32, |acc, &v| acc + (v - max).exp()).ln();
        loss_sum += lse - (row[label] - max);
        g[label] -= 1.0;
        for v in g.iter_mut() {
            *v *= scale;
        }
    }
    Ok(SoftmaxXent { loss: loss_sum / n as f32, grad: tensor(&[n, classes], grad), probs })
}
