//! Labelled examples, directory scanning and the seeded train/test split.

pub mod synth;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use crate::error::{shape_err, Error, Result};
use crate::imaging::{preprocess, PreprocessConfig};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

pub use synth::{synth_generate, synth_generate_total, write_synth_dataset};

/// Expression class. Index order is alphabetical and is also the confusion-matrix axis order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassLabel {
    Negative = 0,
    Neutral = 1,
    Positive = 2,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 3] = [ClassLabel::Negative, ClassLabel::Neutral, ClassLabel::Positive];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<ClassLabel> {
        ClassLabel::ALL.get(i).copied()
    }

    /// Lowercase name, also the dataset subdirectory name.
    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Negative => "negative",
            ClassLabel::Neutral => "neutral",
            ClassLabel::Positive => "positive",
        }
    }

    pub fn from_name(name: &str) -> Option<ClassLabel> {
        ClassLabel::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample {
    /// `[1, S, S]`, values in `[0, 1]`.
    pub image: Tensor,
    pub label: ClassLabel,
    /// Path relative to the dataset root, or a generator id.
    pub source_id: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
    pub seed: u64,
    pub train_fraction: f64,
}

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "pgm", "ppm"];

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.iter().any(|x| e.eq_ignore_ascii_case(x)))
}

/// Loads `<root>/{negative,neutral,positive}/*.{png,pgm,ppm}`.
///
/// Files are visited in lexicographic order within each class and classes in
/// label order. Files with other extensions are ignored; a file with an image
/// extension that fails to decode is an error.
pub fn scan_dir(root: &Path, config: &PreprocessConfig) -> Result<Vec<LabeledExample>> {
    let expected = "expected subdirectories negative/, neutral/, positive/";
    if !root.is_dir() {
        return Err(Error::Layout { root: root.to_path_buf(), reason: format!("not a directory; {expected}") });
    }
    let mut examples = Vec::new();
    for label in ClassLabel::ALL {
        let dir = root.join(label.name());
        if !dir.is_dir() {
            return Err(Error::Layout {
                root: root.to_path_buf(),
                reason: format!("missing {}/; {expected}", label.name()),
            });
        }
        let mut files = Vec::new();
        for entry in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let path = entry.path();
            if path.is_file() && is_image(&path) {
                files.push(entry.file_name());
            }
        }
        files.sort();
        for name in files {
            let image = preprocess(&dir.join(&name), config)?;
            examples.push(LabeledExample {
                image,
                label,
                source_id: format!("{}/{}", label.name(), name.to_string_lossy()),
            });
        }
    }
    if examples.is_empty() {
        return Err(Error::EmptyDataset(root.to_path_buf()));
    }
    Ok(examples)
}

/// Training-set size for `n` examples: `round(fraction · n)`.
pub fn train_count(n: usize, train_fraction: f64) -> usize {
    (train_fraction * n as f64).round() as usize
}

fn check_split_args(examples: &[LabeledExample], train_fraction: f64) -> Result<()> {
    if examples.len() < 2 {
        return Err(Error::Validation(format!("cannot split {} example(s)", examples.len())));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Validation(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = examples.iter().find(|e| !seen.insert(e.source_id.as_str())) {
        return Err(Error::Validation(format!("duplicate source id {}", dup.source_id)));
    }
    Ok(())
}

/// Shuffles uniformly with the seed and sends the first `round(fraction · N)` to train.
pub fn split(examples: Vec<LabeledExample>, train_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    check_split_args(&examples, train_fraction)?;
    let n = examples.len();
    let n_train = train_count(n, train_fraction);
    if n_train == 0 || n_train == n {
        return Err(Error::Validation(format!("train fraction {train_fraction} of {n} examples leaves an empty side")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::derive(seed, "split").shuffle(&mut order);
    let mut slots: Vec<Option<LabeledExample>> = examples.into_iter().map(Some).collect();
    let mut take = |i: &usize| slots[*i].take().expect("permutation visits each index once");
    let train = order[..n_train].iter().map(&mut take).collect();
    let test = order[n_train..].iter().map(&mut take).collect();
    Ok(DatasetSplit { train, test, seed, train_fraction })
}

/// Subject id: the file name up to its first `_` or `-`.
pub fn subject_id(source_id: &str) -> &str {
    let file = source_id.rsplit('/').next().unwrap_or(source_id);
    file.split(['_', '-']).next().unwrap_or(file)
}

/// Like [`split`] but keeps every subject's images on one side. Subjects are
/// shuffled and assigned to train until it holds at least `round(fraction · N)`
/// images, so the train size can overshoot that target. The last subject in
/// the shuffled order always goes to test, so with few subjects train can
/// also fall short.
pub fn split_by_subject(examples: Vec<LabeledExample>, train_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    check_split_args(&examples, train_fraction)?;
    let target = train_count(examples.len(), train_fraction);
    let mut groups: BTreeMap<String, Vec<LabeledExample>> = BTreeMap::new();
    for e in examples {
        groups.entry(subject_id(&e.source_id).to_string()).or_default().push(e);
    }
    if groups.len() < 2 {
        return Err(Error::Validation("subject split needs at least two subjects".into()));
    }
    let mut subjects: Vec<Vec<LabeledExample>> = groups.into_values().collect();
    SeededRng::derive(seed, "split").shuffle(&mut subjects);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    let last = subjects.len() - 1;
    for (i, group) in subjects.into_iter().enumerate() {
        if train.len() < target && (i < last || train.is_empty()) {
            train.extend(group);
        } else {
            test.extend(group);
        }
    }
    if test.is_empty() {
        return Err(Error::Validation("subject split left the test side empty".into()));
    }
    Ok(DatasetSplit { train, test, seed, train_fraction })
}

/// Stacks `[1, S, S]` images into one `[N, 1, S, S]` batch.
pub fn stack_images<'a>(images: impl IntoIterator<Item = &'a Tensor>) -> Result<Tensor> {
    let mut data = Vec::new();
    let mut dims: Option<Vec<usize>> = None;
    let mut n = 0;
    for img in images {
        match &dims {
            None => dims = Some(img.dims().to_vec()),
            Some(d) if d.as_slice() != img.dims() => {
                return Err(shape_err!("cannot batch images of shapes {d:?} and {}", img.shape()));
            }
            _ => {}
        }
        data.extend_from_slice(img.data());
        n += 1;
    }
    let dims = dims.ok_or_else(|| shape_err!("cannot batch zero images"))?;
    if dims.len() != 3 {
        return Err(shape_err!("expected [C, H, W] images, got {dims:?}"));
    }
    Tensor::from_vec(&[n, dims[0], dims[1], dims[2]], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dummy(n: usize) -> Vec<LabeledExample> {
        (0..n)
            .map(|i| LabeledExample {
                image: Tensor::full(&[1, 1, 1], (i % 10) as f32 / 10.0).unwrap(),
                label: ClassLabel::ALL[i % 3],
                source_id: format!("s{}_{i}.pgm", i / 3),
            })
            .collect()
    }

    #[test]
    fn default_scale_split() {
        let s = split(dummy(320), 0.75, 42).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (240, 80));
    }

    #[test]
    fn split_is_seeded() {
        let ids = |s: &DatasetSplit| s.train.iter().map(|e| e.source_id.clone()).collect::<Vec<_>>();
        let a = split(dummy(50), 0.75, 1).unwrap();
        let b = split(dummy(50), 0.75, 1).unwrap();
        let c = split(dummy(50), 0.75, 2).unwrap();
        assert_eq!(ids(&a), ids(&b));
        assert_ne!(ids(&a), ids(&c));
    }

    #[test]
    fn split_errors() {
        assert!(split(dummy(1), 0.75, 0).is_err());
        assert!(split(dummy(2), 0.1, 0).is_err());
        assert!(split(dummy(10), 1.0, 0).is_err());
        let mut dup = dummy(4);
        dup[3].source_id = dup[0].source_id.clone();
        assert!(split(dup, 0.5, 0).is_err());
    }

    #[test]
    fn subject_split_keeps_subjects_together() {
        let s = split_by_subject(dummy(30), 0.75, 5).unwrap();
        let train: HashSet<&str> = s.train.iter().map(|e| subject_id(&e.source_id)).collect();
        assert!(s.test.iter().all(|e| !train.contains(subject_id(&e.source_id))));
        assert_eq!(s.train.len() + s.test.len(), 30);
        assert!(s.train.len() >= 23);
    }

    #[test]
    fn label_names_round_trip() {
        for c in ClassLabel::ALL {
            assert_eq!(ClassLabel::from_name(c.name()), Some(c));
            assert_eq!(ClassLabel::from_index(c.index()), Some(c));
        }
        assert_eq!(ClassLabel::from_index(3), None);
    }
}
