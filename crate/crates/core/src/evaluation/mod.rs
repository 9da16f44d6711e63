//! Accuracy, per-class precision/recall/F1, averages and confusion
//! matrices.
//!
//! For class `c` of a confusion matrix `M` (rows = truth, columns =
//! prediction): `P = M[c][c] / colsum(c)`, `R = M[c][c] / rowsum(c)`,
//! `F1 = 2PR / (P + R)`, with every 0/0 taken as 0. The macro average is
//! the plain mean over classes; the weighted average weights each class by
//! its support (row sum), so weighted F1 averages per-class F1 rather than
//! combining weighted P and R.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{LabelTaxonomy, TaskId};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::predict;
use crate::tokenizer::{encode, Vocab};
use crate::training::Checkpoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task_id: TaskId,
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub confusion: Vec<Vec<u64>>,
    pub total_samples: u64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn confusion_matrix(preds: &[usize], truths: &[usize], classes: usize) -> Result<Vec<Vec<u64>>> {
    if preds.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: truths.len(),
        });
    }
    let mut m = vec![vec![0u64; classes]; classes];
    for (&p, &t) in preds.iter().zip(truths) {
        if let Some(&label) = [t, p].iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        m[t][p] += 1;
    }
    Ok(m)
}

pub fn prf_report(confusion: &[Vec<u64>], taxonomy: &LabelTaxonomy) -> Result<EvalReport> {
    let k = confusion.len();
    if k != taxonomy.len() || confusion.iter().any(|r| r.len() != k) {
        return Err(Error::shape(
            "prf_report",
            format!("confusion of {k} rows for {} labels must be square", taxonomy.len()),
        ));
    }
    let row_sums: Vec<u64> = confusion.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<u64> = (0..k).map(|c| confusion.iter().map(|r| r[c]).sum()).collect();
    let total: u64 = row_sums.iter().sum();
    let trace: u64 = (0..k).map(|c| confusion[c][c]).sum();

    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let tp = confusion[c][c] as f64;
            let precision = ratio(tp, col_sums[c] as f64);
            let recall = ratio(tp, row_sums[c] as f64);
            ClassMetrics {
                label: taxonomy.labels[c].clone(),
                precision,
                recall,
                f1: ratio(2.0 * precision * recall, precision + recall),
                support: row_sums[c],
            }
        })
        .collect();

    let average = |weight: &dyn Fn(&ClassMetrics) -> f64| {
        let norm: f64 = per_class.iter().map(weight).sum();
        let avg = |field: fn(&ClassMetrics) -> f64| {
            ratio(per_class.iter().map(|m| weight(m) * field(m)).sum(), norm)
        };
        Averages {
            precision: avg(|m| m.precision),
            recall: avg(|m| m.recall),
            f1: avg(|m| m.f1),
        }
    };
    let macro_avg = average(&|_| 1.0);
    let weighted_avg = average(&|m| m.support as f64);

    Ok(EvalReport {
        task_id: taxonomy.task_id,
        per_class,
        accuracy: ratio(trace as f64, total as f64),
        macro_avg,
        weighted_avg,
        confusion: confusion.to_vec(),
        total_samples: total,
    })
}

impl EvalReport {
    /// Verifies the count identities between the matrix and the summary.
    pub fn check_consistency(&self) -> std::result::Result<(), String> {
        let entries: u64 = self.confusion.iter().flatten().sum();
        let support: u64 = self.per_class.iter().map(|c| c.support).sum();
        let trace: u64 = (0..self.confusion.len()).map(|c| self.confusion[c][c]).sum();
        if entries != self.total_samples || support != self.total_samples {
            return Err(format!("entries {entries}, support {support}, total {}", self.total_samples));
        }
        if ratio(trace as f64, self.total_samples as f64) != self.accuracy {
            return Err(format!("accuracy {} vs trace {trace}/{}", self.accuracy, self.total_samples));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Aligned plain-text report: one row per class, then accuracy and
    /// the two averages.
    pub fn to_table(&self) -> String {
        let header = ["Class", "Precision", "Recall", "F1-Score", "Number of Samples"];
        let n = self.total_samples.to_string();
        let f = |x: f64| format!("{x:.4}");
        let mut rows: Vec<[String; 5]> = self
            .per_class
            .iter()
            .map(|c| [c.label.clone(), f(c.precision), f(c.recall), f(c.f1), c.support.to_string()])
            .collect();
        let body = rows.len();
        rows.push(["Accuracy".into(), String::new(), String::new(), f(self.accuracy), n.clone()]);
        for (name, a) in [("Macro Avg", self.macro_avg), ("Weighted Avg", self.weighted_avg)] {
            rows.push([name.into(), f(a.precision), f(a.recall), f(a.f1), n.clone()]);
        }
        let width = |i: usize| {
            rows.iter()
                .map(|r| r[i].chars().count())
                .chain([header[i].len()])
                .max()
                .unwrap_or(0)
        };
        let widths: Vec<usize> = (0..5).map(width).collect();
        let line = |cells: [&str; 5]| {
            let mut s = String::new();
            for (i, c) in cells.iter().enumerate() {
                let pad = widths[i] - c.chars().count();
                if i == 0 {
                    s.push_str(c);
                    s.push_str(&" ".repeat(pad));
                } else {
                    s.push_str("  ");
                    s.push_str(&" ".repeat(pad));
                    s.push_str(c);
                }
            }
            s.trim_end().to_string()
        };
        let rule = "-".repeat(widths.iter().sum::<usize>() + 8);
        let mut out = String::new();
        let _ = writeln!(out, "{}", line(header));
        let _ = writeln!(out, "{rule}");
        for (i, r) in rows.iter().enumerate() {
            if i == body {
                let _ = writeln!(out, "{rule}");
            }
            let _ = writeln!(out, "{}", line([&r[0], &r[1], &r[2], &r[3], &r[4]].map(String::as_str)));
        }
        out
    }

    /// Confusion matrix as CSV with a header of predicted labels and the
    /// true label leading each row.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for c in &self.per_class {
            out.push(',');
            out.push_str(&c.label);
        }
        out.push('\n');
        for (c, row) in self.per_class.iter().zip(&self.confusion) {
            out.push_str(&c.label);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Predicts every `(preprocessed line, label)` pair with the checkpoint's
/// head for `taxonomy.task_id` and builds the report.
pub fn evaluate(
    ckpt: &Checkpoint,
    vocab: &Vocab,
    examples: &[(String, usize)],
    taxonomy: &LabelTaxonomy,
    exec: Exec,
) -> Result<EvalReport> {
    ckpt.check_vocab(vocab)?;
    let task = taxonomy.task_id;
    let head = ckpt.params.heads.get(&task).ok_or(Error::MissingHead(task.to_string()))?;
    if head.num_labels() != taxonomy.len() {
        return Err(Error::shape(
            "evaluate",
            format!("head has {} labels, taxonomy {}", head.num_labels(), taxonomy.len()),
        ));
    }
    let preds = exec.map(examples, |_, (line, _)| {
        let seq = encode(line, vocab, ckpt.config.max_len);
        predict(&seq, &ckpt.config, &ckpt.params, task).map(|p| p.label)
    });
    let preds: Vec<usize> = preds.into_iter().collect::<Result<_>>()?;
    let truths: Vec<usize> = examples.iter().map(|(_, l)| *l).collect();
    prf_report(&confusion_matrix(&preds, &truths, taxonomy.len())?, taxonomy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tax(k: usize) -> LabelTaxonomy {
        let mut t = LabelTaxonomy::for_task(TaskId::SentimentT);
        t.labels.truncate(k);
        t
    }

    #[test]
    fn perfect_predictions_are_diagonal() {
        let y = [0, 1, 1, 2, 2, 2];
        let m = confusion_matrix(&y, &y, 3).unwrap();
        assert_eq!(m, vec![vec![1, 0, 0], vec![0, 2, 0], vec![0, 0, 3]]);
        let r = prf_report(&m, &tax(3)).unwrap();
        assert!(r.per_class.iter().all(|c| c.precision == 1.0 && c.recall == 1.0 && c.f1 == 1.0));
        assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn hand_counted_case() {
        let m = confusion_matrix(&[0, 1, 1], &[0, 1, 0], 2).unwrap();
        assert_eq!(m, vec![vec![1, 1], vec![0, 1]]);
        let r = prf_report(&m, &tax(2)).unwrap();
        let c0 = &r.per_class[0];
        let c1 = &r.per_class[1];
        assert_eq!((c0.precision, c0.recall), (1.0, 0.5));
        assert_eq!((c1.precision, c1.recall), (0.5, 1.0));
        assert!((c0.f1 - 2.0 / 3.0).abs() < 1e-15 && (c1.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.weighted_avg.f1 - 2.0 / 3.0).abs() < 1e-15);
        r.check_consistency().unwrap();
    }

    #[test]
    fn empty_and_absent_classes() {
        assert_eq!(confusion_matrix(&[], &[], 2).unwrap(), vec![vec![0, 0]; 2]);
        let m = confusion_matrix(&[0, 0, 1], &[0, 1, 1], 3).unwrap();
        let r = prf_report(&m, &tax(3)).unwrap();
        let absent = &r.per_class[2];
        assert_eq!((absent.precision, absent.recall, absent.f1, absent.support), (0.0, 0.0, 0.0, 0));
        let empty = prf_report(&vec![vec![0; 2]; 2], &tax(2)).unwrap();
        assert_eq!(empty.accuracy, 0.0);
        assert_eq!(empty.weighted_avg.f1, 0.0);
    }

    #[test]
    fn input_guards() {
        assert!(matches!(confusion_matrix(&[0], &[0, 1], 2), Err(Error::LengthMismatch { left: 1, right: 2 })));
        assert!(matches!(confusion_matrix(&[0, 3], &[0, 1], 2), Err(Error::LabelOutOfRange { label: 3, .. })));
        assert!(prf_report(&[vec![1, 0]], &tax(2)).is_err());
    }

    #[test]
    fn table_layout() {
        let m = confusion_matrix(&[0, 1, 1], &[0, 1, 0], 2).unwrap();
        let table = prf_report(&m, &tax(2)).unwrap().to_table();
        let rule = "-".repeat(60);
        let want = [
            "Class         Precision  Recall  F1-Score  Number of Samples",
            &rule,
            "Anger            1.0000  0.5000    0.6667                  2",
            "Love             0.5000  1.0000    0.6667                  1",
            &rule,
            "Accuracy                           0.6667                  3",
            "Macro Avg        0.7500  0.7500    0.6667                  3",
            "Weighted Avg     0.8333  0.6667    0.6667                  3",
        ];
        assert_eq!(table.lines().collect::<Vec<_>>(), want);
    }

    #[test]
    fn csv_layout() {
        let m = confusion_matrix(&[0, 1, 1], &[0, 1, 0], 2).unwrap();
        let csv = prf_report(&m, &tax(2)).unwrap().confusion_csv();
        assert_eq!(csv, "true\\predicted,Anger,Love\nAnger,1,1\nLove,0,1\n");
    }
}
