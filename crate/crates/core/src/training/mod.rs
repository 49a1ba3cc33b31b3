//! The epoch loop: shuffle, minibatch SGD over the whole training set, then
//! score the full training and test sets.

pub mod checkpoint;
mod history;

use serde::{Deserialize, Serialize};

use crate::dataset::{stack_images, ClassLabel, DatasetSplit, LabeledExample};
use crate::error::{shape_err, Error, Result};
use crate::metrics::{accuracy, predict};
use crate::nn::{loss_and_grads, ModelConfig, Parameters};
use crate::optim::{sgd_step, OptimState, SgdConfig};
use crate::rng::SeededRng;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, params_digest, save_checkpoint};
pub use history::{parse_history_csv, HISTORY_HEADER};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub sgd: SgdConfig,
    pub seed: u64,
    pub shuffle_each_epoch: bool,
    /// Accuracies are computed every `eval_every` epochs and always after the last.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 100, sgd: SgdConfig::default(), seed: 0, shuffle_each_epoch: true, eval_every: 1 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        self.sgd.validate()
    }
}

/// One row of the training curve. Accuracies are absent on epochs that were not evaluated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub mean_loss: f32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingHistory {
    pub records: Vec<EpochRecord>,
    pub final_params_digest: String,
}

impl TrainingHistory {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// CSV with header `epoch,train_acc,test_acc,mean_loss`.
    pub fn to_csv(&self) -> String {
        history::to_csv(&self.records)
    }
}

fn labels_of(examples: &[LabeledExample]) -> Vec<ClassLabel> {
    examples.iter().map(|e| e.label).collect()
}

fn check_images(config: &ModelConfig, examples: &[LabeledExample], side: &str) -> Result<()> {
    let s = config.input_size;
    if examples.is_empty() {
        return Err(Error::Validation(format!("{side} set is empty")));
    }
    if let Some(bad) = examples.iter().find(|e| e.image.dims() != [1, s, s]) {
        return Err(shape_err!(
            "{side} image {} has shape {}, model expects [1, {s}, {s}]",
            bad.source_id,
            bad.image.shape()
        ));
    }
    Ok(())
}

/// Accuracy of `params` on a set of examples.
pub fn score(config: &ModelConfig, params: &Parameters, examples: &[LabeledExample]) -> Result<f64> {
    let predicted = predict(config, params, examples.iter().map(|e| &e.image))?;
    accuracy(&predicted, &labels_of(examples))
}

pub fn fit(
    model_config: &ModelConfig,
    params: Parameters,
    split: &DatasetSplit,
    train_config: &TrainConfig,
) -> Result<(Parameters, TrainingHistory)> {
    fit_with_progress(model_config, params, split, train_config, |_| {})
}

/// [`fit`], calling `on_epoch` after each epoch's record is complete.
pub fn fit_with_progress(
    model_config: &ModelConfig,
    mut params: Parameters,
    split: &DatasetSplit,
    train_config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Parameters, TrainingHistory)> {
    model_config.validate()?;
    train_config.validate()?;
    check_images(model_config, &split.train, "train")?;
    check_images(model_config, &split.test, "test")?;
    // Surfaces parameter/config disagreement before any step runs.
    Parameters::from_tensors(model_config, params.clone().into_tensors())?;

    let mut state = OptimState::new(&params);
    let mut rng = SeededRng::derive(train_config.seed, "shuffle");
    let mut order: Vec<usize> = (0..split.train.len()).collect();
    let mut records = Vec::with_capacity(train_config.epochs);

    for epoch in 1..=train_config.epochs {
        if train_config.shuffle_each_epoch {
            rng.shuffle(&mut order);
        }
        let mut loss_sum = 0.0f64;
        for batch in order.chunks(train_config.sgd.batch_size) {
            let x = stack_images(batch.iter().map(|&i| &split.train[i].image))?;
            let labels: Vec<usize> = batch.iter().map(|&i| split.train[i].label.index()).collect();
            let (loss, grads) = loss_and_grads(model_config, &params, &x, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            loss_sum += f64::from(loss) * batch.len() as f64;
            sgd_step(&mut params, &grads, &mut state, &train_config.sgd)?;
        }
        let mean_loss = (loss_sum / split.train.len() as f64) as f32;
        if !mean_loss.is_finite() || !params.is_finite() {
            return Err(Error::Diverged { epoch, loss: mean_loss });
        }

        let evaluate = epoch % train_config.eval_every == 0 || epoch == train_config.epochs;
        let (train_accuracy, test_accuracy) = if evaluate {
            (Some(score(model_config, &params, &split.train)?), Some(score(model_config, &params, &split.test)?))
        } else {
            (None, None)
        };
        let record = EpochRecord { epoch, train_accuracy, test_accuracy, mean_loss };
        on_epoch(&record);
        records.push(record);
    }

    let history = TrainingHistory { records, final_params_digest: params_digest(&params) };
    Ok((params, history))
}
