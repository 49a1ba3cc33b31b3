//! Prediction, confusion matrix and the text classification report.
//!
//! The confusion matrix has true labels on rows and predicted labels on
//! columns, both in [`ClassLabel`] order. Normalizing each row gives
//! per-class recall.

use std::fmt::Write;

use crate::dataset::{stack_images, ClassLabel};
use crate::error::{Error, Result};
use crate::nn::{logits, softmax, ModelConfig, Parameters, NUM_CLASSES};
use crate::tensor::Tensor;

/// Images per forward pass during inference. Results do not depend on it.
pub const EVAL_BATCH: usize = 32;

/// Index of the largest logit; ties go to the lowest class index.
pub fn argmax_label(row: &[f32]) -> ClassLabel {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().take(NUM_CLASSES) {
        if v > row[best] {
            best = i;
        }
    }
    ClassLabel::ALL[best]
}

fn batched_logits<'a>(
    config: &ModelConfig,
    params: &Parameters,
    images: impl IntoIterator<Item = &'a Tensor>,
) -> Result<Vec<Tensor>> {
    let images: Vec<&Tensor> = images.into_iter().collect();
    images.chunks(EVAL_BATCH).map(|chunk| logits(config, params, &stack_images(chunk.iter().copied())?)).collect()
}

pub fn predict<'a>(
    config: &ModelConfig,
    params: &Parameters,
    images: impl IntoIterator<Item = &'a Tensor>,
) -> Result<Vec<ClassLabel>> {
    let mut out = Vec::new();
    for l in batched_logits(config, params, images)? {
        out.extend(l.data().chunks_exact(NUM_CLASSES).map(argmax_label));
    }
    Ok(out)
}

/// Softmax probabilities per image, in class order.
pub fn predict_proba<'a>(
    config: &ModelConfig,
    params: &Parameters,
    images: impl IntoIterator<Item = &'a Tensor>,
) -> Result<Vec<[f32; NUM_CLASSES]>> {
    let mut out = Vec::new();
    for l in batched_logits(config, params, images)? {
        let p = softmax(&l)?;
        out.extend(p.data().chunks_exact(NUM_CLASSES).map(|r| [r[0], r[1], r[2]]));
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; NUM_CLASSES]; NUM_CLASSES]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn record(&mut self, truth: ClassLabel, predicted: ClassLabel) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn counts(&self) -> &[[u64; NUM_CLASSES]; NUM_CLASSES] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_total(&self, truth: ClassLabel) -> u64 {
        self.counts[truth.index()].iter().sum()
    }

    /// Each row divided by its total. Rows with no examples stay zero.
    pub fn normalized(&self) -> [[f64; NUM_CLASSES]; NUM_CLASSES] {
        let mut out = [[0.0; NUM_CLASSES]; NUM_CLASSES];
        for (row, counts) in out.iter_mut().zip(&self.counts) {
            let total: u64 = counts.iter().sum();
            if total > 0 {
                for (v, &c) in row.iter_mut().zip(counts) {
                    *v = c as f64 / total as f64;
                }
            }
        }
        out
    }

    /// CSV with header `true\predicted,negative,neutral,positive` and raw counts.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\predicted,negative,neutral,positive\n");
        for (label, row) in ClassLabel::ALL.iter().zip(&self.counts) {
            let _ = writeln!(s, "{label},{},{},{}", row[0], row[1], row[2]);
        }
        s
    }

    /// Parses the output of [`ConfusionMatrix::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Format(format!("confusion csv: {msg}"));
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
        if header.iter().collect::<Vec<_>>() != ["true\\predicted", "negative", "neutral", "positive"] {
            return Err(bad(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
        }
        let mut counts = [[0u64; NUM_CLASSES]; NUM_CLASSES];
        let mut seen = [false; NUM_CLASSES];
        for record in reader.records() {
            let record = record.map_err(|e| bad(e.to_string()))?;
            if record.len() != 4 {
                return Err(bad(format!("row has {} fields", record.len())));
            }
            let label =
                ClassLabel::from_name(&record[0]).ok_or_else(|| bad(format!("unknown label {:?}", &record[0])))?;
            if std::mem::replace(&mut seen[label.index()], true) {
                return Err(bad(format!("duplicate row {label}")));
            }
            for (j, field) in record.iter().skip(1).enumerate() {
                counts[label.index()][j] = field.parse().map_err(|_| bad(format!("bad count {field:?}")))?;
            }
        }
        if seen.contains(&false) {
            return Err(bad("missing rows".into()));
        }
        Ok(ConfusionMatrix { counts })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub overall_accuracy: f64,
    pub per_class_recall: [f64; NUM_CLASSES],
    pub confusion: ConfusionMatrix,
    pub n: u64,
}

impl EvalReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Result<Self> {
        let n = confusion.total();
        if n == 0 {
            return Err(Error::Validation("cannot report on zero examples".into()));
        }
        let norm = confusion.normalized();
        Ok(EvalReport {
            overall_accuracy: confusion.trace() as f64 / n as f64,
            per_class_recall: [norm[0][0], norm[1][1], norm[2][2]],
            confusion,
            n,
        })
    }
}

pub fn evaluate(predictions: &[ClassLabel], labels: &[ClassLabel]) -> Result<EvalReport> {
    if predictions.len() != labels.len() {
        return Err(Error::Validation(format!("{} predictions for {} labels", predictions.len(), labels.len())));
    }
    if predictions.is_empty() {
        return Err(Error::Validation("cannot evaluate zero predictions".into()));
    }
    let mut confusion = ConfusionMatrix::default();
    for (&p, &t) in predictions.iter().zip(labels) {
        confusion.record(t, p);
    }
    EvalReport::from_confusion(confusion)
}

/// Fraction of correct predictions, or an error for empty/mismatched input.
pub fn accuracy(predictions: &[ClassLabel], labels: &[ClassLabel]) -> Result<f64> {
    evaluate(predictions, labels).map(|r| r.overall_accuracy)
}

/// Fixed-format text report.
pub fn render_report(report: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "overall accuracy: {:.1}%", report.overall_accuracy * 100.0);
    let _ = writeln!(s, "evaluated images: {}", report.n);
    let _ = writeln!(s);
    let _ = writeln!(s, "per-class recall:");
    for (label, recall) in ClassLabel::ALL.iter().zip(report.per_class_recall) {
        let _ =
            writeln!(s, "  {:<9} {:>6.1}%  (n={})", label.name(), recall * 100.0, report.confusion.row_total(*label));
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "confusion matrix (rows: true label, columns: predicted label, row-normalized):");
    let _ = writeln!(s, "  {:<9} {:>9} {:>9} {:>9}", "", "negative", "neutral", "positive");
    for (label, row) in ClassLabel::ALL.iter().zip(report.confusion.normalized()) {
        let _ = writeln!(
            s,
            "  {:<9} {:>9.2} {:>9.2} {:>9.2}  (n={})",
            label.name(),
            row[0],
            row[1],
            row[2],
            report.confusion.row_total(*label)
        );
    }
    s
}
