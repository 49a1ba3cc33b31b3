use std::fmt::Write;

use super::EpochRecord;
use crate::error::{Error, Result};

pub const HISTORY_HEADER: &str = "epoch,train_acc,test_acc,mean_loss";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Values use Rust's shortest round-trip formatting, so parsing restores them exactly.
pub(super) fn to_csv(records: &[EpochRecord]) -> String {
    let mut s = String::from(HISTORY_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(s, "{},{},{},{}", r.epoch, opt(r.train_accuracy), opt(r.test_accuracy), r.mean_loss);
    }
    s
}

/// Reads a history CSV, enforcing the header, 1-based consecutive epochs,
/// accuracies in `[0, 1]` and finite non-negative losses.
pub fn parse_history_csv(text: &str) -> Result<Vec<EpochRecord>> {
    let bad = |msg: String| Error::Format(format!("history csv: {msg}"));
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| bad(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != HISTORY_HEADER {
        return Err(bad(format!("expected header {HISTORY_HEADER}")));
    }
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        if row.len() != 4 {
            return Err(bad(format!("row {} has {} fields", i + 1, row.len())));
        }
        let epoch: usize = row[0].parse().map_err(|_| bad(format!("bad epoch {:?}", &row[0])))?;
        if epoch != i + 1 {
            return Err(bad(format!("expected epoch {}, found {epoch}", i + 1)));
        }
        let acc = |field: &str| -> Result<Option<f64>> {
            if field.is_empty() {
                return Ok(None);
            }
            let v: f64 = field.parse().map_err(|_| bad(format!("bad accuracy {field:?}")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(bad(format!("accuracy {v} outside [0, 1]")));
            }
            Ok(Some(v))
        };
        let mean_loss: f32 = row[3].parse().map_err(|_| bad(format!("bad loss {:?}", &row[3])))?;
        if !(mean_loss.is_finite() && mean_loss >= 0.0) {
            return Err(bad(format!("loss {mean_loss} is not a finite non-negative value")));
        }
        records.push(EpochRecord { epoch, train_accuracy: acc(&row[1])?, test_accuracy: acc(&row[2])?, mean_loss });
    }
    Ok(records)
}
