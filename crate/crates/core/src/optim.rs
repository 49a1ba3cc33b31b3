//! Minibatch SGD with classical momentum.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::nn::{Gradients, Parameters};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f32,
    pub momentum: f32,
    pub batch_size: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig { learning_rate: 0.01, momentum: 0.9, batch_size: 16 }
    }
}

impl SgdConfig {
    /// A zero learning rate is accepted so a run can be checked for no-op updates.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// One velocity tensor per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    velocity: Parameters,
}

impl OptimState {
    pub fn new(params: &Parameters) -> Self {
        OptimState { velocity: params.zeros_like() }
    }

    pub fn velocity(&self) -> &Parameters {
        &self.velocity
    }
}

/// `v ← momentum·v + g`, then `w ← w − lr·v`, for every parameter tensor.
pub fn sgd_step(params: &mut Parameters, grads: &Gradients, state: &mut OptimState, config: &SgdConfig) -> Result<()> {
    let mismatch = params
        .tensors()
        .zip(grads.tensors())
        .zip(state.velocity.tensors())
        .find(|((p, g), v)| p.shape() != g.shape() || p.shape() != v.shape());
    if let Some(((p, g), v)) = mismatch {
        return Err(shape_err!(
            "sgd: parameter {}, gradient {} and velocity {} disagree",
            p.shape(),
            g.shape(),
            v.shape()
        ));
    }
    let counts = [params.tensors().count(), grads.tensors().count(), state.velocity.tensors().count()];
    if counts[0] != counts[1] || counts[0] != counts[2] {
        return Err(shape_err!("sgd: tensor counts differ {counts:?}"));
    }

    let (lr, mu) = (config.learning_rate, config.momentum);
    for ((w, g), v) in params.tensors_mut().zip(grads.tensors()).zip(state.velocity.tensors_mut()) {
        for ((w, &g), v) in w.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *v = mu * *v + g;
            *w -= lr * *v;
        }
    }
    Ok(())
}
