//! Central finite differences against every analytic backward pass.
//!
//! Each check reduces a layer's output to a scalar `L = Σ r·y` with fixed
//! random weights `r`, so `∂L/∂y = r` is the upstream gradient, then compares
//! the analytic gradient with `(L(θ+ε) − L(θ−ε)) / 2ε` for every entry.
//! Error is measured per tensor as `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`.
//! Single layers get inputs placed away from their kinks; for the whole
//! network the test searches seeds for a point whose ±ε probes all keep the
//! same ReLU signs and pooling winners, and checks that it found one.

use ferex::nn::{
    conv_backward, conv_forward, init_params, linear_backward, linear_forward, logits, loss_and_grads,
    maxpool_backward, maxpool_forward, relu_backward, relu_forward, softmax_xent, ModelConfig, Parameters,
};
use ferex::rng::SeededRng;
use ferex::Tensor;

const EPS: f32 = 1e-3;
const TOL: f64 = 1e-3;

fn random(rng: &mut SeededRng, dims: &[usize], scale: f64) -> Tensor {
    let n = dims.iter().product();
    let data = (0..n).map(|_| rng.uniform(-scale, scale) as f32).collect();
    Tensor::from_vec(dims, data).unwrap()
}

/// Values at least `gap` apart in magnitude from zero, so ReLU kinks are out of reach of ε.
fn away_from_zero(rng: &mut SeededRng, dims: &[usize], gap: f64) -> Tensor {
    let n = dims.iter().product();
    let data = (0..n)
        .map(|_| {
            let v = rng.uniform(gap, 1.0);
            (if rng.next_f64() < 0.5 { -v } else { v }) as f32
        })
        .collect();
    Tensor::from_vec(dims, data).unwrap()
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

fn rel_error(analytic: &[f32], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(&a, &n)| (f64::from(a) - n).powi(2)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|&a| f64::from(a).powi(2)).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    let denom = na.max(nn);
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}

/// Numeric gradient of `f` with respect to every entry of `x`.
fn numeric_grad(x: &Tensor, mut f: impl FnMut(&Tensor) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.numel())
        .map(|i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + EPS;
            let up = f(&probe);
            probe.data_mut()[i] = orig - EPS;
            let down = f(&probe);
            probe.data_mut()[i] = orig;
            (up - down) / (2.0 * f64::from(EPS))
        })
        .collect()
}

fn assert_close(what: &str, analytic: &Tensor, numeric: &[f64]) {
    let e = rel_error(analytic.data(), numeric);
    assert!(e < TOL, "{what}: relative error {e:.2e}");
}

pub fn conv_gradients() {
    let mut rng = SeededRng::new(11);
    for (n, c, o, hw, pad) in [(2, 2, 3, 5, 1), (1, 3, 2, 6, 0), (3, 1, 4, 4, 1)] {
        let x = random(&mut rng, &[n, c, hw, hw], 1.0);
        let w = random(&mut rng, &[o, c, 3, 3], 0.5);
        let b = random(&mut rng, &[o], 0.5);
        let (y, cache) = conv_forward(&x, &w, &b, 1, pad).unwrap();
        let r = random(&mut rng, y.dims(), 1.0);
        let g = conv_backward(&r, &cache).unwrap();

        let loss = |x: &Tensor, w: &Tensor, b: &Tensor| dot(&conv_forward(x, w, b, 1, pad).unwrap().0, &r);
        assert_close("conv input", &g.input, &numeric_grad(&x, |x| loss(x, &w, &b)));
        assert_close("conv weight", &g.weight, &numeric_grad(&w, |w| loss(&x, w, &b)));
        assert_close("conv bias", &g.bias, &numeric_grad(&b, |b| loss(&x, &w, b)));
    }
}

pub fn relu_gradient() {
    let mut rng = SeededRng::new(12);
    let x = away_from_zero(&mut rng, &[3, 2, 4, 4], 0.01);
    let y = relu_forward(&x);
    let r = random(&mut rng, y.dims(), 1.0);
    let g = relu_backward(&r, &y).unwrap();
    assert_close("relu", &g, &numeric_grad(&x, |x| dot(&relu_forward(x), &r)));
}

pub fn maxpool_gradient() {
    let mut rng = SeededRng::new(13);
    // A shuffled ladder of values 0.01 apart: no window has two entries within ε.
    let dims = [2, 3, 6, 6];
    let n: usize = dims.iter().product();
    let mut ladder: Vec<f32> = (0..n).map(|i| i as f32 * 0.01 - 1.0).collect();
    rng.shuffle(&mut ladder);
    let x = Tensor::from_vec(&dims, ladder).unwrap();
    let (y, cache) = maxpool_forward(&x).unwrap();
    let r = random(&mut rng, y.dims(), 1.0);
    let g = maxpool_backward(&r, &cache).unwrap();
    assert_close("maxpool", &g, &numeric_grad(&x, |x| dot(&maxpool_forward(x).unwrap().0, &r)));
}

pub fn linear_gradients() {
    let mut rng = SeededRng::new(14);
    let x = random(&mut rng, &[4, 7], 1.0);
    let w = random(&mut rng, &[5, 7], 0.5);
    let b = random(&mut rng, &[5], 0.5);
    let (y, cache) = linear_forward(&x, &w, &b).unwrap();
    let r = random(&mut rng, y.dims(), 1.0);
    let g = linear_backward(&r, &cache).unwrap();
    let loss = |x: &Tensor, w: &Tensor, b: &Tensor| dot(&linear_forward(x, w, b).unwrap().0, &r);
    assert_close("linear input", &g.input, &numeric_grad(&x, |x| loss(x, &w, &b)));
    assert_close("linear weight", &g.weight, &numeric_grad(&w, |w| loss(&x, w, &b)));
    assert_close("linear bias", &g.bias, &numeric_grad(&b, |b| loss(&x, &w, b)));
}

pub fn softmax_xent_gradient() {
    let mut rng = SeededRng::new(15);
    let logits = random(&mut rng, &[5, 3], 2.0);
    let labels = [0, 2, 1, 1, 0];
    let out = softmax_xent(&logits, &labels).unwrap();
    let numeric = numeric_grad(&logits, |l| f64::from(softmax_xent(l, &labels).unwrap().loss));
    assert_close("softmax cross-entropy", &out.grad, &numeric);
}

/// Which side of every kink the network is on: each ReLU input's sign and
/// each pooling window's winner (where the winner is positive; all-zero
/// windows pass no gradient either way). Built from the public layer kernels.
fn activation_pattern(config: &ModelConfig, params: &Parameters, x: &Tensor) -> Vec<u32> {
    let mut pattern = Vec::new();
    let mut h = x.clone();
    for layer in &params.conv {
        let (z, _) = conv_forward(&h, &layer.weight, &layer.bias, config.stride, config.pad).unwrap();
        pattern.extend(z.data().iter().map(|&v| u32::from(v > 0.0)));
        let a = relu_forward(&z);
        let [n, c, hh, ww] = <[usize; 4]>::try_from(a.dims()).unwrap();
        for plane in 0..n * c {
            for oy in 0..hh / 2 {
                for ox in 0..ww / 2 {
                    let at = |k: usize| a.data()[plane * hh * ww + (2 * oy + k / 2) * ww + 2 * ox + k % 2];
                    let best = (0..4).fold(0, |b, k| if at(k) > at(b) { k } else { b });
                    pattern.push(if at(best) > 0.0 { best as u32 } else { 4 });
                }
            }
        }
        h = maxpool_forward(&a).unwrap().0;
    }
    let n = h.dims()[0];
    let mut h = h.reshape(&[n, config.flatten_width()]).unwrap();
    for layer in &params.fc[..params.fc.len() - 1] {
        let z = linear_forward(&h, &layer.weight, &layer.bias).unwrap().0;
        pattern.extend(z.data().iter().map(|&v| u32::from(v > 0.0)));
        h = relu_forward(&z);
    }
    pattern
}

/// Mean softmax cross-entropy evaluated in double precision, so the
/// difference quotient is not swamped by rounding of the loss itself.
fn mean_xent_f64(logits: &Tensor, labels: &[usize]) -> f64 {
    let k = logits.dims()[1];
    let total: f64 = logits
        .data()
        .chunks_exact(k)
        .zip(labels)
        .map(|(row, &y)| {
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(f64::from(v)));
            let lse = max + row.iter().map(|&v| (f64::from(v) - max).exp()).sum::<f64>().ln();
            lse - f64::from(row[y])
        })
        .sum();
    total / labels.len() as f64
}

/// Central differences of the mean loss for every parameter, or `None` if
/// some ±ε probe moves the network across a kink, where the difference
/// quotient says nothing about the derivative.
fn network_numeric(
    config: &ModelConfig,
    params: &mut Parameters,
    x: &Tensor,
    labels: &[usize],
) -> Option<Vec<Vec<f64>>> {
    let reference = activation_pattern(config, params, x);
    let count = params.tensors().count();
    let mut all = Vec::with_capacity(count);
    for t in 0..count {
        let n = params.tensors().nth(t).unwrap().numel();
        let mut numeric = Vec::with_capacity(n);
        for i in 0..n {
            let mut at = |delta: f32| {
                let orig = params.tensors().nth(t).unwrap().data()[i];
                params.tensors_mut().nth(t).unwrap().data_mut()[i] = orig + delta;
                let smooth = activation_pattern(config, params, x) == reference;
                let l = mean_xent_f64(&logits(config, params, x).unwrap(), labels);
                params.tensors_mut().nth(t).unwrap().data_mut()[i] = orig;
                smooth.then_some(l)
            };
            numeric.push((at(EPS)? - at(-EPS)?) / (2.0 * f64::from(EPS)));
        }
        all.push(numeric);
    }
    Some(all)
}

pub fn full_network_s16() {
    let config = ModelConfig::with_widths(16, [2, 3, 3, 4], [6, 5]);
    let labels = [0, 1, 2];
    // Seeds are tried in order until every probe stays on one side of every kink.
    let (seed, params, x, numeric) = (0..500u64)
        .find_map(|seed| {
            let mut params = init_params(&config, seed).unwrap();
            let x = random(&mut SeededRng::new(seed), &[3, 1, 16, 16], 1.0);
            let numeric = network_numeric(&config, &mut params, &x, &labels)?;
            Some((seed, params, x, numeric))
        })
        .expect("some seed below 500 yields a kink-free neighbourhood");

    let (_, grads) = loss_and_grads(&config, &params, &x, &labels).unwrap();
    for (t, (analytic, numeric)) in grads.tensors().zip(&numeric).enumerate() {
        assert_close(&format!("seed {seed}, parameter tensor {t}"), analytic, numeric);
    }
}
