//! Run settings read from a flat `key = value` file.
//!
//! ```text
//! # comments start with '#'
//! data = faces/
//! epochs = 60
//! conv_channels = 16,32,64,128
//! ```
//!
//! Blank lines are ignored, keys may appear once, and unknown keys are errors.
//! Command-line flags are applied afterwards with [`RunConfig::set`], so they
//! override the file.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dataset::{scan_dir, split, split_by_subject, synth_generate_total, DatasetSplit, LabeledExample};
use crate::error::{Error, Result};
use crate::imaging::PreprocessConfig;
use crate::nn::ModelConfig;
use crate::training::TrainConfig;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.75;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Root with one subdirectory per class. Required unless `synth` is set.
    pub data: Option<PathBuf>,
    /// Generate synthetic data with this many held-out test images instead of reading `data`.
    pub synth: Option<usize>,
    pub seed: u64,
    pub train_fraction: f64,
    pub split_by_subject: bool,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub preprocess: PreprocessConfig,
    pub out: PathBuf,
    pub history: PathBuf,
    pub curve: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            synth: None,
            seed: DEFAULT_SEED,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            split_by_subject: false,
            model: ModelConfig::default(),
            train: TrainConfig { seed: DEFAULT_SEED, ..TrainConfig::default() },
            preprocess: PreprocessConfig::default(),
            out: PathBuf::from("model.ck"),
            history: PathBuf::from("history.csv"),
            curve: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "data",
    "synth",
    "seed",
    "train_fraction",
    "split_by_subject",
    "epochs",
    "learning_rate",
    "momentum",
    "batch_size",
    "eval_every",
    "shuffle",
    "input_size",
    "crop_fraction",
    "conv_channels",
    "fc_widths",
    "out",
    "history",
    "curve",
];

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn list<const N: usize>(key: &str, value: &str) -> Result<[usize; N]> {
    let items = value.split(',').map(|v| num::<usize>(key, v.trim())).collect::<Result<Vec<_>>>()?;
    items.try_into().map_err(|v: Vec<usize>| {
        Error::Config(format!("{key}: expected {N} comma-separated values, found {}", v.len()))
    })
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, found {value:?}"))),
    }
}

impl RunConfig {
    /// Sets one key. Used for both file lines and command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "data" => self.data = Some(PathBuf::from(value)),
            "synth" => self.synth = Some(num(key, value)?),
            "seed" => {
                self.seed = num(key, value)?;
                self.train.seed = self.seed;
            }
            "train_fraction" => self.train_fraction = num(key, value)?,
            "split_by_subject" => self.split_by_subject = flag(key, value)?,
            "epochs" => self.train.epochs = num(key, value)?,
            "learning_rate" => self.train.sgd.learning_rate = num(key, value)?,
            "momentum" => self.train.sgd.momentum = num(key, value)?,
            "batch_size" => self.train.sgd.batch_size = num(key, value)?,
            "eval_every" => self.train.eval_every = num(key, value)?,
            "shuffle" => self.train.shuffle_each_epoch = flag(key, value)?,
            "input_size" => {
                let s = num(key, value)?;
                self.model.input_size = s;
                self.preprocess.input_size = s;
            }
            "crop_fraction" => self.preprocess.crop_fraction = num(key, value)?,
            "conv_channels" => self.model.conv_channels = list::<4>(key, value)?.to_vec(),
            "fc_widths" => self.model.fc_widths = list::<2>(key, value)?.to_vec(),
            "out" => self.out = PathBuf::from(value),
            "history" => self.history = PathBuf::from(value),
            "curve" => self.curve = Some(PathBuf::from(value)),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies every line of a config file on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key {key:?}", n + 1)));
            }
            self.set(key, value).map_err(|e| {
                Error::Config(format!("line {}: {}", n + 1, e.to_string().trim_start_matches("config error: ")))
            })?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.is_none() && self.synth.is_none() {
            return Err(Error::Config("no data root given and synthetic mode not requested".into()));
        }
        if self.synth == Some(0) {
            return Err(Error::Config("synth must be at least 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train_fraction {} must lie in (0, 1)", self.train_fraction)));
        }
        self.model.validate()?;
        self.train.validate()?;
        self.preprocess.validate()?;
        if self.model.input_size != self.preprocess.input_size {
            return Err(Error::Config("model and preprocessing input sizes differ".into()));
        }
        Ok(())
    }

    /// Loads the examples this run describes: synthetic faces at the model's
    /// input size, or every image under `data` after preprocessing.
    pub fn load_examples(&self) -> Result<Vec<LabeledExample>> {
        match (self.synth, &self.data) {
            (Some(test_images), _) => {
                synth_generate_total(synth_total(test_images, self.train_fraction), self.model.input_size, self.seed)
            }
            (None, Some(root)) => scan_dir(root, &self.preprocess),
            (None, None) => Err(Error::Config("no data root given and synthetic mode not requested".into())),
        }
    }

    pub fn split(&self, examples: Vec<LabeledExample>) -> Result<DatasetSplit> {
        if self.split_by_subject {
            split_by_subject(examples, self.train_fraction, self.seed)
        } else {
            split(examples, self.train_fraction, self.seed)
        }
    }

    pub fn load_split(&self) -> Result<DatasetSplit> {
        self.split(self.load_examples()?)
    }
}

/// Total synthetic images so that a `train_fraction` split leaves `test_images`
/// held out: `round(test_images / (1 − train_fraction))`.
pub fn synth_total(test_images: usize, train_fraction: f64) -> usize {
    (test_images as f64 / (1.0 - train_fraction)).round() as usize
}
