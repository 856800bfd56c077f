//! Seeded-classification scoring: confusion matrix, macro-averaged
//! precision/recall/F1, and report rendering.
//!
//! Macro values are unweighted means over the categories; in particular the
//! overall F1 is the mean of per-category F1 values, not the harmonic mean
//! of macro precision and macro recall. Unresolved predictions count as a
//! false negative for their truth class and a false positive for no class.
//! Zero denominators yield 0 so every metric is total.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusFormat};
use crate::orchestrator::{RunResult, UNRESOLVED_LABEL};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("truth and prediction lengths differ: {truth} vs {pred}")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("truth label not in label set: {0}")]
    UnknownTruthLabel(String),
    #[error("prediction label not in label set: {0}")]
    UnknownPredLabel(String),
    #[error("label set contains duplicate: {0}")]
    DuplicateLabel(String),
    #[error("empty confusion matrix")]
    EmptyMatrix,
    #[error("reports do not share the label set")]
    LabelSetMismatch,
    #[error("document {0} has no ground-truth category")]
    MissingGroundTruth(String),
    #[error("document {0} carries {1} labels; seeded scoring expects exactly one")]
    MultiLabelAssignment(String, usize),
    #[error("document {0} appears in neither assignments nor quarantine")]
    MissingPrediction(String),
    #[error("prediction file malformed at line {line}: {reason}")]
    MalformedPrediction { line: u64, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Rows are truth, columns are prediction; quarantined/unresolved documents
/// are tallied in a separate per-truth-class column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    labels: Vec<String>,
    counts: Vec<Vec<u64>>,
    unresolved: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn count(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth][pred]
    }

    pub fn unresolved(&self, truth: usize) -> u64 {
        self.unresolved[truth]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum::<u64>() + self.unresolved.iter().sum::<u64>()
    }

    fn true_positives(&self, class: usize) -> u64 {
        self.counts[class][class]
    }

    fn false_positives(&self, class: usize) -> u64 {
        (0..self.labels.len())
            .filter(|&row| row != class)
            .map(|row| self.counts[row][class])
            .sum()
    }

    fn false_negatives(&self, class: usize) -> u64 {
        let misrouted: u64 = (0..self.labels.len())
            .filter(|&col| col != class)
            .map(|col| self.counts[class][col])
            .sum();
        misrouted + self.unresolved[class]
    }
}

/// Tallies aligned truth/prediction label sequences. Every truth label must
/// belong to the label set; predictions must be a label or the unresolved
/// marker.
pub fn confusion(
    truth: &[String],
    pred: &[String],
    labels: &[String],
) -> Result<ConfusionMatrix, EvalError> {
    if truth.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            truth: truth.len(),
            pred: pred.len(),
        });
    }
    let mut index = BTreeMap::new();
    for (i, label) in labels.iter().enumerate() {
        if index.insert(label.as_str(), i).is_some() {
            return Err(EvalError::DuplicateLabel(label.clone()));
        }
    }
    let n = labels.len();
    let mut counts = vec![vec![0u64; n]; n];
    let mut unresolved = vec![0u64; n];
    for (t, p) in truth.iter().zip(pred) {
        let row = *index
            .get(t.as_str())
            .ok_or_else(|| EvalError::UnknownTruthLabel(t.clone()))?;
        if p == UNRESOLVED_LABEL {
            unresolved[row] += 1;
        } else {
            let col = *index
                .get(p.as_str())
                .ok_or_else(|| EvalError::UnknownPredLabel(p.clone()))?;
            counts[row][col] += 1;
        }
    }
    Ok(ConfusionMatrix {
        labels: labels.to_vec(),
        counts,
        unresolved,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub labels: Vec<String>,
    pub per_category: BTreeMap<String, CategoryMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub n_categories: usize,
}

fn ratio(numerator: u64, denominator: u64) -> f64 {
    if denominator == 0 {
        0.0
    } else {
        numerator as f64 / denominator as f64
    }
}

/// Per-category precision/recall/F1 and their unweighted means.
pub fn macro_metrics(matrix: &ConfusionMatrix) -> Result<EvalReport, EvalError> {
    let n = matrix.labels.len();
    if n == 0 || matrix.total() == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let mut per_category = BTreeMap::new();
    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut f1_sum = 0.0;
    for (class, label) in matrix.labels.iter().enumerate() {
        let tp = matrix.true_positives(class);
        let precision = ratio(tp, tp + matrix.false_positives(class));
        let recall = ratio(tp, tp + matrix.false_negatives(class));
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        precision_sum += precision;
        recall_sum += recall;
        f1_sum += f1;
        per_category.insert(
            label.clone(),
            CategoryMetrics {
                precision,
                recall,
                f1,
            },
        );
    }
    Ok(EvalReport {
        labels: matrix.labels.clone(),
        per_category,
        macro_precision: precision_sum / n as f64,
        macro_recall: recall_sum / n as f64,
        macro_f1: f1_sum / n as f64,
        n_categories: n,
    })
}

/// Renders per-category and overall F1 as a fixed-width text table: one row
/// per model, columns in the given label order, values shown to two
/// decimals (internal precision is untouched).
pub fn render_table(
    reports: &[(String, EvalReport)],
    labels: &[String],
) -> Result<String, EvalError> {
    for (_, report) in reports {
        let mut want: Vec<&String> = labels.iter().collect();
        let mut have: Vec<&String> = report.labels.iter().collect();
        want.sort();
        have.sort();
        if want != have {
            return Err(EvalError::LabelSetMismatch);
        }
    }
    let mut columns: Vec<String> = vec!["Model".to_string()];
    columns.extend(labels.iter().cloned());
    columns.push("F1-Score".to_string());

    let mut rows: Vec<Vec<String>> = Vec::new();
    for (model, report) in reports {
        let mut row = vec![model.clone()];
        for label in labels {
            row.push(format!("{:.2}", report.per_category[label].f1));
        }
        row.push(format!("{:.2}", report.macro_f1));
        rows.push(row);
    }

    let widths: Vec<usize> = columns
        .iter()
        .enumerate()
        .map(|(i, header)| {
            rows.iter()
                .map(|row| row[i].len())
                .chain([header.len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let render_row = |cells: &[String]| -> String {
        cells
            .iter()
            .zip(&widths)
            .map(|(cell, width)| format!("{cell:>width$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };

    let mut out = render_row(&columns);
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for row in &rows {
        out.push_str(&render_row(row));
        out.push('\n');
    }
    out.push_str("F1-Score is the unweighted mean of per-category F1 values.\n");
    Ok(out)
}

/// Scores a seeded run against the corpus ground truth: one label per
/// assignment, quarantined documents scored as unresolved.
pub fn score_run(
    result: &RunResult,
    corpus: &Corpus,
    labels: &[String],
) -> Result<EvalReport, EvalError> {
    let pairs = run_label_pairs(result, corpus, labels)?;
    let (truth, pred): (Vec<String>, Vec<String>) = pairs.into_iter().unzip();
    macro_metrics(&confusion(&truth, &pred, labels)?)
}

/// Aligned (truth, prediction) label pairs for a seeded run, in corpus
/// order. Labels are canonicalized case-insensitively against `labels`.
pub fn run_label_pairs(
    result: &RunResult,
    corpus: &Corpus,
    labels: &[String],
) -> Result<Vec<(String, String)>, EvalError> {
    let canonical = |name: &str| -> Option<String> {
        let folded = name.trim().to_lowercase();
        labels.iter().find(|l| l.to_lowercase() == folded).cloned()
    };
    let mut pairs = Vec::with_capacity(corpus.len());
    for doc in corpus.documents() {
        let truth_raw = doc
            .category
            .as_deref()
            .ok_or_else(|| EvalError::MissingGroundTruth(doc.id.clone()))?;
        let truth =
            canonical(truth_raw).ok_or_else(|| EvalError::UnknownTruthLabel(truth_raw.into()))?;
        let pred = if let Some(assignment) = result.assignment_for(&doc.id) {
            if assignment.topics.len() != 1 {
                return Err(EvalError::MultiLabelAssignment(
                    doc.id.clone(),
                    assignment.topics.len(),
                ));
            }
            let name = &assignment.topics[0].name;
            canonical(name).ok_or_else(|| EvalError::UnknownPredLabel(name.clone()))?
        } else if result.quarantined(&doc.id).is_some() {
            UNRESOLVED_LABEL.to_string()
        } else {
            return Err(EvalError::MissingPrediction(doc.id.clone()));
        };
        pairs.push((truth, pred));
    }
    Ok(pairs)
}

/// (id, predicted_label) rows so external baseline outputs can be scored by
/// the same harness. CSV has an `id,predicted_label` header; JSONL uses the
/// same keys.
pub fn write_predictions(
    result: &RunResult,
    corpus: &Corpus,
    path: &Path,
    format: CorpusFormat,
) -> Result<(), EvalError> {
    let mut rows: Vec<(String, String)> = Vec::with_capacity(corpus.len());
    for doc in corpus.documents() {
        let label = if let Some(assignment) = result.assignment_for(&doc.id) {
            assignment
                .topics
                .first()
                .map(|t| t.name.clone())
                .unwrap_or_else(|| UNRESOLVED_LABEL.to_string())
        } else {
            UNRESOLVED_LABEL.to_string()
        };
        rows.push((doc.id.clone(), label));
    }
    write_prediction_rows(&rows, path, format)
}

fn write_prediction_rows(
    rows: &[(String, String)],
    path: &Path,
    format: CorpusFormat,
) -> Result<(), EvalError> {
    match format {
        CorpusFormat::Csv => {
            let mut writer = csv::Writer::from_path(path)
                .map_err(|e| EvalError::Io(std::io::Error::other(e.to_string())))?;
            writer
                .write_record(["id", "predicted_label"])
                .map_err(|e| EvalError::Io(std::io::Error::other(e.to_string())))?;
            for (id, label) in rows {
                writer
                    .write_record([id, label])
                    .map_err(|e| EvalError::Io(std::io::Error::other(e.to_string())))?;
            }
            writer
                .flush()
                .map_err(|e| EvalError::Io(std::io::Error::other(e.to_string())))?;
        }
        CorpusFormat::Jsonl => {
            use std::io::Write as _;
            let mut file = std::fs::File::create(path)?;
            for (id, label) in rows {
                writeln!(
                    file,
                    "{}",
                    serde_json::json!({"id": id, "predicted_label": label})
                )?;
            }
        }
    }
    Ok(())
}

/// Reads a prediction file back as id → label.
pub fn read_predictions(
    path: &Path,
    format: CorpusFormat,
) -> Result<BTreeMap<String, String>, EvalError> {
    let mut map = BTreeMap::new();
    match format {
        CorpusFormat::Csv => {
            let mut reader = csv::Reader::from_path(path)
                .map_err(|e| EvalError::Io(std::io::Error::other(e.to_string())))?;
            let headers = reader
                .headers()
                .map_err(|e| EvalError::MalformedPrediction {
                    line: 1,
                    reason: e.to_string(),
                })?
                .clone();
            let id_col = headers.iter().position(|h| h == "id");
            let label_col = headers.iter().position(|h| h == "predicted_label");
            let (Some(id_col), Some(label_col)) = (id_col, label_col) else {
                return Err(EvalError::MalformedPrediction {
                    line: 1,
                    reason: "header must contain id, predicted_label".into(),
                });
            };
            for row in reader.records() {
                let record = row.map_err(|e| EvalError::MalformedPrediction {
                    line: e.position().map_or(0, |p| p.line()),
                    reason: e.to_string(),
                })?;
                let line = record.position().map_or(0, |p| p.line());
                let get = |col: usize| {
                    record
                        .get(col)
                        .map(str::to_string)
                        .ok_or(EvalError::MalformedPrediction {
                            line,
                            reason: format!("missing column {col}"),
                        })
                };
                map.insert(get(id_col)?, get(label_col)?);
            }
        }
        CorpusFormat::Jsonl => {
            #[derive(Deserialize)]
            struct Row {
                id: String,
                predicted_label: String,
            }
            let text = std::fs::read_to_string(path)?;
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let row: Row =
                    serde_json::from_str(line).map_err(|e| EvalError::MalformedPrediction {
                        line: (i + 1) as u64,
                        reason: e.to_string(),
                    })?;
                map.insert(row.id, row.predicted_label);
            }
        }
    }
    Ok(map)
}
