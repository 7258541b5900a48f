//! The prediction-matrix data model.
//!
//! A [`PredictionMatrix`] holds one [`PredictionRecord`] per classified example:
//! the K softmax probabilities followed by the true and predicted labels. Row
//! order is an identity, so downstream reports can refer to "row 8688" and mean
//! the same example the exporter wrote.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 10;

/// Index of the largest element; ties go to the lowest index.
///
/// NaN entries never win. Returns 0 for an empty slice.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] || (values[best].is_nan() && !v.is_nan()) {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub probs: Vec<f64>,
    pub true_label: usize,
    pub pred_label: usize,
}

impl PredictionRecord {
    pub fn new(probs: Vec<f64>, true_label: usize, pred_label: usize) -> Self {
        Self {
            probs,
            true_label,
            pred_label,
        }
    }

    /// Builds a record whose predicted label is the argmax of `probs`.
    pub fn from_probs(probs: Vec<f64>, true_label: usize) -> Self {
        let pred_label = argmax(&probs);
        Self::new(probs, true_label, pred_label)
    }

    pub fn is_correct(&self) -> bool {
        self.true_label == self.pred_label
    }
}

/// Softmax outputs of a classifier over an ordered dataset.
///
/// Construction checks the structural invariants (every record has `k`
/// probabilities and labels below `k`). Probability-mass invariants are left
/// to [`validate`], which reports rather than rejects.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    k: usize,
    records: Vec<PredictionRecord>,
    source_tag: String,
}

impl PredictionMatrix {
    pub fn new(
        k: usize,
        records: Vec<PredictionRecord>,
        source_tag: impl Into<String>,
    ) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid(
                "k",
                format!("need at least 2 classes, got {k}"),
            ));
        }
        if k > u16::MAX as usize {
            return Err(Error::invalid("k", format!("{k} exceeds {}", u16::MAX)));
        }
        for (row, rec) in records.iter().enumerate() {
            if rec.probs.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    actual: rec.probs.len(),
                });
            }
            for label in [rec.true_label, rec.pred_label] {
                if label >= k {
                    return Err(Error::LabelOutOfRange { row, label, k });
                }
            }
        }
        Ok(Self {
            k,
            records,
            source_tag: source_tag.into(),
        })
    }

    pub fn empty(k: usize) -> Result<Self> {
        Self::new(k, Vec::new(), "")
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[PredictionRecord] {
        &self.records
    }

    pub fn record(&self, row: usize) -> Option<&PredictionRecord> {
        self.records.get(row)
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    pub fn with_source_tag(mut self, tag: impl Into<String>) -> Self {
        self.source_tag = tag.into();
        self
    }

    pub fn iter(&self) -> std::slice::Iter<'_, PredictionRecord> {
        self.records.iter()
    }

    /// A new matrix holding the given rows, in the given order.
    ///
    /// Panics if an index is out of bounds.
    pub fn select(&self, rows: &[usize]) -> PredictionMatrix {
        PredictionMatrix {
            k: self.k,
            records: rows.iter().map(|&r| self.records[r].clone()).collect(),
            source_tag: self.source_tag.clone(),
        }
    }

    pub fn correct(&self) -> PredictionMatrix {
        self.select(&partition(self).correct)
    }

    pub fn incorrect(&self) -> PredictionMatrix {
        self.select(&partition(self).incorrect)
    }

    pub fn accuracy(&self) -> Option<f64> {
        if self.records.is_empty() {
            return None;
        }
        let correct = self.records.iter().filter(|r| r.is_correct()).count();
        Some(correct as f64 / self.records.len() as f64)
    }
}

impl<'a> IntoIterator for &'a PredictionMatrix {
    type Item = &'a PredictionRecord;
    type IntoIter = std::slice::Iter<'a, PredictionRecord>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}

/// Row indices split by whether the prediction matched the true label.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassPartition {
    pub correct: Vec<usize>,
    pub incorrect: Vec<usize>,
}

pub fn partition(matrix: &PredictionMatrix) -> ClassPartition {
    let mut out = ClassPartition::default();
    for (row, rec) in matrix.iter().enumerate() {
        if rec.is_correct() {
            out.correct.push(row);
        } else {
            out.incorrect.push(row);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViolationKind {
    /// Probabilities do not sum to one within tolerance.
    Mass {
        sum: f64,
    },
    /// A probability is outside [0, 1] (beyond tolerance).
    OutOfRange {
        index: usize,
        value: f64,
    },
    NonFinite {
        index: usize,
    },
    /// Stored prediction disagrees with the lowest-index argmax.
    PredNotArgmax {
        pred: usize,
        argmax: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub row: usize,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "row {}: ", self.row)?;
        match &self.kind {
            ViolationKind::Mass { sum } => write!(f, "probability mass {sum} ≠ 1"),
            ViolationKind::OutOfRange { index, value } => {
                write!(f, "probability p{index} = {value} outside [0, 1]")
            }
            ViolationKind::NonFinite { index } => write!(f, "probability p{index} is not finite"),
            ViolationKind::PredNotArgmax { pred, argmax } => {
                write!(f, "pred {pred} ≠ argmax {argmax}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub rows: usize,
    pub tolerance: f64,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every record against the probability invariants at tolerance `tol`.
pub fn validate(matrix: &PredictionMatrix, tol: f64) -> ValidationReport {
    let mut violations = Vec::new();
    for (row, rec) in matrix.iter().enumerate() {
        let mut finite = true;
        for (index, &p) in rec.probs.iter().enumerate() {
            if !p.is_finite() {
                finite = false;
                violations.push(Violation {
                    row,
                    kind: ViolationKind::NonFinite { index },
                });
            } else if p < -tol || p > 1.0 + tol {
                violations.push(Violation {
                    row,
                    kind: ViolationKind::OutOfRange { index, value: p },
                });
            }
        }
        if !finite {
            continue;
        }
        let sum: f64 = rec.probs.iter().sum();
        if (sum - 1.0).abs() > tol {
            violations.push(Violation {
                row,
                kind: ViolationKind::Mass { sum },
            });
        }
        let am = argmax(&rec.probs);
        if am != rec.pred_label {
            violations.push(Violation {
                row,
                kind: ViolationKind::PredNotArgmax {
                    pred: rec.pred_label,
                    argmax: am,
                },
            });
        }
    }
    ValidationReport {
        rows: matrix.len(),
        tolerance: tol,
        violations,
    }
}
