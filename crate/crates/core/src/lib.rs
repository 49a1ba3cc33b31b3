//! A small convolutional network for three-way facial expression
//! classification (negative, neutral, positive), written from scratch.
//!
//! The pipeline: decode PNG/PGM/PPM images, convert to grayscale,
//! center-crop and resize ([`imaging`]); build a labelled dataset and split
//! it ([`dataset`]); train a four-block conv net with SGD and momentum
//! ([`nn`], [`optim`], [`training`]); score it ([`metrics`]) and draw the
//! accuracy curve and confusion heatmap ([`report`]).
//!
//! Everything is deterministic given a seed: the matrix kernels sum in a
//! fixed order and every random draw comes from a labelled stream of
//! [`rng::SeededRng`].
//!
//! ```
//! use ferex::{dataset, nn, training};
//!
//! let model = nn::ModelConfig::with_widths(16, [2, 2, 4, 4], [8, 8]);
//! let data = dataset::synth_generate(4, 16, 1).unwrap();
//! let split = dataset::split(data, 0.75, 1).unwrap();
//! let params = nn::init_params(&model, 1).unwrap();
//! let cfg = training::TrainConfig { epochs: 2, ..Default::default() };
//! let (_, history) = training::fit(&model, params, &split, &cfg).unwrap();
//! assert_eq!(history.records.len(), 2);
//! ```

pub mod config;
pub mod dataset;
mod error;
pub mod imaging;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod report;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{Shape, Tensor};
