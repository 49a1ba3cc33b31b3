//! The expression classifier: four `conv → ReLU → 2×2 max-pool` stages, a
//! flatten, two ReLU fully connected layers and a linear class head.

pub mod layers;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

pub use layers::{
    conv_backward, conv_forward, linear_backward, linear_forward, maxpool_backward, maxpool_forward, relu_backward,
    relu_forward, softmax, softmax_xent, ConvCache, ConvGrads, LinearCache, LinearGrads, PoolCache, SoftmaxXent,
};

pub const CONV_LAYERS: usize = 4;
pub const HIDDEN_FC_LAYERS: usize = 2;
pub const NUM_CLASSES: usize = 3;

/// Network architecture. Serialized as JSON inside checkpoints.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Side length of the square grayscale input.
    pub input_size: usize,
    pub conv_channels: Vec<usize>,
    /// Square kernel side; padding is `(kernel - 1) / 2` so convolutions keep the spatial size.
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    /// Max-pool window and stride.
    pub pool: usize,
    pub fc_widths: Vec<usize>,
    pub num_classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_size: 96,
            conv_channels: vec![16, 32, 64, 128],
            kernel: 3,
            stride: 1,
            pad: 1,
            pool: 2,
            fc_widths: vec![256, 64],
            num_classes: NUM_CLASSES,
        }
    }
}

impl ModelConfig {
    /// Same architecture with every width replaced; handy for small tests.
    pub fn with_widths(input_size: usize, conv_channels: [usize; 4], fc_widths: [usize; 2]) -> Self {
        ModelConfig {
            input_size,
            conv_channels: conv_channels.to_vec(),
            fc_widths: fc_widths.to_vec(),
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.conv_channels.len() != CONV_LAYERS {
            return bad(format!("expected {CONV_LAYERS} conv layers, got {}", self.conv_channels.len()));
        }
        if self.fc_widths.len() != HIDDEN_FC_LAYERS {
            return bad(format!(
                "expected {HIDDEN_FC_LAYERS} hidden fully connected widths, got {}",
                self.fc_widths.len()
            ));
        }
        if self.conv_channels.contains(&0) || self.fc_widths.contains(&0) {
            return bad("layer widths must be positive".into());
        }
        if self.num_classes != NUM_CLASSES {
            return bad(format!("num_classes must be {NUM_CLASSES}, got {}", self.num_classes));
        }
        if self.kernel == 0 || self.kernel.is_multiple_of(2) || self.stride != 1 || self.pad != (self.kernel - 1) / 2 {
            return bad(format!(
                "convolutions must preserve size (odd kernel, stride 1, pad (kernel-1)/2), got kernel {} stride {} pad {}",
                self.kernel, self.stride, self.pad
            ));
        }
        if self.pool != 2 {
            return bad(format!("only 2x2 pooling is supported, got {}", self.pool));
        }
        let reduction = 1 << CONV_LAYERS;
        if self.input_size == 0 || !self.input_size.is_multiple_of(reduction) {
            return bad(format!("input_size {} must be a positive multiple of {reduction}", self.input_size));
        }
        if self.input_size > 4096 {
            return bad(format!("input_size {} is unreasonably large", self.input_size));
        }
        Ok(())
    }

    /// Spatial side after the last pool.
    pub fn final_side(&self) -> usize {
        self.input_size >> CONV_LAYERS
    }

    /// Features entering the first fully connected layer.
    pub fn flatten_width(&self) -> usize {
        self.conv_channels[CONV_LAYERS - 1] * self.final_side() * self.final_side()
    }

    /// Parameter tensor shapes in canonical order: each conv weight then bias,
    /// then each fully connected weight then bias.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = Vec::new();
        let mut in_c = 1;
        for &out_c in &self.conv_channels {
            shapes.push(vec![out_c, in_c, self.kernel, self.kernel]);
            shapes.push(vec![out_c]);
            in_c = out_c;
        }
        let mut width = self.flatten_width();
        for &out in self.fc_widths.iter().chain(std::iter::once(&self.num_classes)) {
            shapes.push(vec![out, width]);
            shapes.push(vec![out]);
            width = out;
        }
        shapes
    }
}

/// Weight and bias of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Learnable tensors. The same type carries gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters {
    pub conv: Vec<LayerParams>,
    pub fc: Vec<LayerParams>,
}

pub type Gradients = Parameters;

impl Parameters {
    pub fn zeros(config: &ModelConfig) -> Result<Parameters> {
        config.validate()?;
        let tensors = config.param_shapes().iter().map(|s| Tensor::zeros(s)).collect::<Result<Vec<_>>>()?;
        Parameters::from_tensors(config, tensors)
    }

    /// Reassembles parameters from tensors in canonical order, checking every shape.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<Tensor>) -> Result<Parameters> {
        let shapes = config.param_shapes();
        if tensors.len() != shapes.len() {
            return Err(shape_err!("expected {} parameter tensors, got {}", shapes.len(), tensors.len()));
        }
        for (i, (t, s)) in tensors.iter().zip(&shapes).enumerate() {
            if t.dims() != s.as_slice() {
                return Err(shape_err!("parameter {i} has shape {}, config implies {s:?}", t.shape()));
            }
        }
        let mut layers = Vec::with_capacity(shapes.len() / 2);
        let mut iter = tensors.into_iter();
        while let (Some(weight), Some(bias)) = (iter.next(), iter.next()) {
            layers.push(LayerParams { weight, bias });
        }
        let fc = layers.split_off(CONV_LAYERS);
        Ok(Parameters { conv: layers, fc })
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.conv.iter().chain(&self.fc).flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.conv.iter_mut().chain(&mut self.fc).flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn into_tensors(self) -> Vec<Tensor> {
        self.conv.into_iter().chain(self.fc).flat_map(|l| [l.weight, l.bias]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(Tensor::is_finite)
    }

    pub fn zeros_like(&self) -> Parameters {
        let zero = |t: &Tensor| Tensor::from_parts(t.shape().clone(), vec![0.0; t.numel()]);
        let layer = |l: &LayerParams| LayerParams { weight: zero(&l.weight), bias: zero(&l.bias) };
        Parameters { conv: self.conv.iter().map(layer).collect(), fc: self.fc.iter().map(layer).collect() }
    }
}

/// Weights uniform in `±√(6 / fan_in)`, biases zero. Layers draw in canonical
/// order from one stream, so a seed fixes every value.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<Parameters> {
    let mut params = Parameters::zeros(config)?;
    let mut rng = SeededRng::derive(seed, "init");
    for layer in params.conv.iter_mut().chain(params.fc.iter_mut()) {
        let fan_in: usize = layer.weight.dims()[1..].iter().product();
        let bound = (6.0 / fan_in as f64).sqrt();
        for w in layer.weight.data_mut() {
            *w = ((2.0 * rng.next_f64() - 1.0) * bound) as f32;
        }
    }
    Ok(params)
}

/// Everything [`backward`] needs from one [`forward`] call.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    conv: Vec<ConvCache>,
    conv_act: Vec<Tensor>,
    pool: Vec<PoolCache>,
    flat_dims: Vec<usize>,
    fc: Vec<LinearCache>,
    fc_act: Vec<Tensor>,
}

fn check_input(config: &ModelConfig, x: &Tensor) -> Result<()> {
    let s = config.input_size;
    match *x.dims() {
        [_, 1, h, w] if h == s && w == s => Ok(()),
        _ => Err(shape_err!("expected input [N, 1, {s}, {s}], got {}", x.shape())),
    }
}

/// Runs the network on `x: [N, 1, S, S]`, returning logits `[N, 3]`.
pub fn forward(config: &ModelConfig, params: &Parameters, x: &Tensor) -> Result<(Tensor, ForwardCache)> {
    check_input(config, x)?;
    let mut cache = ForwardCache {
        conv: Vec::with_capacity(CONV_LAYERS),
        conv_act: Vec::with_capacity(CONV_LAYERS),
        pool: Vec::with_capacity(CONV_LAYERS),
        flat_dims: Vec::new(),
        fc: Vec::with_capacity(HIDDEN_FC_LAYERS + 1),
        fc_act: Vec::with_capacity(HIDDEN_FC_LAYERS),
    };

    let mut h = x.clone();
    for layer in &params.conv {
        let (z, c) = conv_forward(&h, &layer.weight, &layer.bias, config.stride, config.pad)?;
        let a = relu_forward(&z);
        let (p, pc) = maxpool_forward(&a)?;
        cache.conv.push(c);
        cache.conv_act.push(a);
        cache.pool.push(pc);
        h = p;
    }

    cache.flat_dims = h.dims().to_vec();
    let n = cache.flat_dims[0];
    let mut h = h.reshape(&[n, config.flatten_width()])?;
    let last = params.fc.len() - 1;
    for (i, layer) in params.fc.iter().enumerate() {
        let (z, c) = linear_forward(&h, &layer.weight, &layer.bias)?;
        cache.fc.push(c);
        if i < last {
            let a = relu_forward(&z);
            cache.fc_act.push(a.clone());
            h = a;
        } else {
            h = z;
        }
    }
    Ok((h, cache))
}

/// Logits without keeping a cache around.
pub fn logits(config: &ModelConfig, params: &Parameters, x: &Tensor) -> Result<Tensor> {
    forward(config, params, x).map(|(l, _)| l)
}

/// Back-propagates `grad_logits` through the cached forward pass.
pub fn backward(params: &Parameters, grad_logits: &Tensor, cache: &ForwardCache) -> Result<Gradients> {
    let mut grads = params.zeros_like();

    let mut g = grad_logits.clone();
    for i in (0..params.fc.len()).rev() {
        if i < params.fc.len() - 1 {
            g = relu_backward(&g, &cache.fc_act[i])?;
        }
        let lg = linear_backward(&g, &cache.fc[i])?;
        grads.fc[i] = LayerParams { weight: lg.weight, bias: lg.bias };
        g = lg.input;
    }

    let mut g = g.reshape(&cache.flat_dims)?;
    for i in (0..params.conv.len()).rev() {
        g = maxpool_backward(&g, &cache.pool[i])?;
        g = relu_backward(&g, &cache.conv_act[i])?;
        if i == 0 {
            let (weight, bias) = layers::conv_backward_params(&g, &cache.conv[0])?;
            grads.conv[0] = LayerParams { weight, bias };
            break;
        }
        let cg = conv_backward(&g, &cache.conv[i])?;
        grads.conv[i] = LayerParams { weight: cg.weight, bias: cg.bias };
        g = cg.input;
    }
    Ok(grads)
}

/// Mean loss and gradients for one labelled batch.
pub fn loss_and_grads(
    config: &ModelConfig,
    params: &Parameters,
    x: &Tensor,
    labels: &[usize],
) -> Result<(f32, Gradients)> {
    let (logits, cache) = forward(config, params, x)?;
    let out = softmax_xent(&logits, labels)?;
    let grads = backward(params, &out.grad, &cache)?;
    Ok((out.loss, grads))
}
