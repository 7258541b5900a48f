//! Per-class safety thresholds and the accept/defer gate.
//!
//! The threshold for class `c` is the smallest distance from any incorrect
//! calibration prediction *predicted as* `c` to centroid `c`. A new prediction
//! is accepted only when it lies strictly inside that radius; on or beyond the
//! boundary it is deferred.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::{
    init_centroids, kmeans, label_integrity, squared_distance, CentroidProvenance, CentroidSet,
    KMeansParams,
};
use crate::error::{Error, Result};
use crate::model::{argmax, partition, PredictionMatrix, PredictionRecord};

pub const BUNDLE_FORMAT: &str = "SGB1";

/// Default scale-factor grid for [`threshold_sweep`]: 0.0, 0.1, ..., 0.9.
pub fn default_factors() -> Vec<f64> {
    (0..10).map(|i| i as f64 / 10.0).collect()
}

/// What to do for classes with no incorrect calibration predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnboundedPolicy {
    /// Threshold stays at +inf and every prediction of the class is accepted.
    #[default]
    AcceptAlways,
    /// Threshold falls back to the largest correct-prediction distance.
    MaxCorrectDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdTable {
    /// Threshold per class; `f64::INFINITY` for unbounded classes under
    /// [`UnboundedPolicy::AcceptAlways`].
    pub t: Vec<f64>,
    /// Incorrect predictions per predicted class that fed each minimum.
    pub counts: Vec<usize>,
    /// Classes with no incorrect predictions, ascending.
    pub unbounded: Vec<usize>,
    pub policy: UnboundedPolicy,
}

impl ThresholdTable {
    pub fn k(&self) -> usize {
        self.t.len()
    }

    pub fn is_unbounded(&self, class: usize) -> bool {
        self.unbounded.binary_search(&class).is_ok()
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.t.is_empty() && self.unbounded.len() == self.t.len() {
            out.push("no incorrect predictions: every class is unbounded".to_string());
        }
        for (c, &t) in self.t.iter().enumerate() {
            if t == 0.0 {
                out.push(format!(
                    "class {c}: an incorrect prediction sits exactly on the centroid (threshold 0)"
                ));
            }
        }
        out
    }
}

/// Distance from a record's probabilities to the centroid of its predicted
/// class. Thresholds, overlap and gating all go through this so the
/// boundary comparison is bit-for-bit consistent.
pub fn prediction_distance(rec: &PredictionRecord, centroids: &CentroidSet) -> f64 {
    squared_distance(&rec.probs, centroids.centroid(rec.pred_label)).sqrt()
}

fn check_dims(k: usize, centroids: &CentroidSet) -> Result<()> {
    if centroids.k() != k || centroids.dim() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            actual: if centroids.k() != k {
                centroids.k()
            } else {
                centroids.dim()
            },
        });
    }
    Ok(())
}

/// Minimum distance to centroid `c` over rows predicted as `c`.
///
/// The matrix is expected to hold only the incorrect calibration predictions;
/// every row is used as given.
pub fn compute_thresholds(
    matrix: &PredictionMatrix,
    centroids: &CentroidSet,
) -> Result<ThresholdTable> {
    let k = matrix.k();
    check_dims(k, centroids)?;
    let mut t = vec![f64::INFINITY; k];
    let mut counts = vec![0usize; k];
    for rec in matrix {
        let c = rec.pred_label;
        counts[c] += 1;
        t[c] = t[c].min(prediction_distance(rec, centroids));
    }
    let unbounded = (0..k).filter(|&c| counts[c] == 0).collect();
    Ok(ThresholdTable {
        t,
        counts,
        unbounded,
        policy: UnboundedPolicy::AcceptAlways,
    })
}

/// Replaces unbounded thresholds with the largest distance among the
/// `correct` rows predicted as that class. Classes without correct rows stay
/// at +inf.
pub fn apply_max_correct_fallback(
    table: &mut ThresholdTable,
    correct: &PredictionMatrix,
    centroids: &CentroidSet,
) -> Result<()> {
    check_dims(table.k(), centroids)?;
    let mut max_d = vec![f64::NEG_INFINITY; table.k()];
    for rec in correct.iter().filter(|r| r.is_correct()) {
        let c = rec.pred_label;
        max_d[c] = max_d[c].max(prediction_distance(rec, centroids));
    }
    for &c in &table.unbounded {
        if max_d[c].is_finite() {
            table.t[c] = max_d[c];
        }
    }
    table.policy = UnboundedPolicy::MaxCorrectDistance;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Defer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GateDecision {
    pub verdict: Verdict,
    pub pred_label: usize,
    pub distance: f64,
    pub threshold_used: f64,
    /// The predicted class had no incorrect calibration predictions.
    pub unbounded: bool,
}

impl GateDecision {
    pub fn accepted(&self) -> bool {
        self.verdict == Verdict::Accept
    }
}

/// Accepts iff the distance to the argmax class centroid is strictly below
/// that class's threshold.
pub fn gate(probs: &[f64], bundle: &CalibrationBundle) -> Result<GateDecision> {
    if probs.len() != bundle.k() {
        return Err(Error::DimensionMismatch {
            expected: bundle.k(),
            actual: probs.len(),
        });
    }
    let pred_label = argmax(probs);
    let distance = squared_distance(probs, bundle.centroids.centroid(pred_label)).sqrt();
    let threshold_used = bundle.thresholds.t[pred_label];
    let verdict = if distance < threshold_used {
        Verdict::Accept
    } else {
        Verdict::Defer
    };
    Ok(GateDecision {
        verdict,
        pred_label,
        distance,
        threshold_used,
        unbounded: bundle.thresholds.is_unbounded(pred_label),
    })
}

/// Gates every row of `matrix`, in order.
pub fn gate_matrix(
    matrix: &PredictionMatrix,
    bundle: &CalibrationBundle,
) -> Result<Vec<GateDecision>> {
    matrix.iter().map(|r| gate(&r.probs, bundle)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverlapRow {
    /// Correct predictions at or beyond the class threshold.
    pub count: usize,
    pub total: usize,
    pub percent: f64,
}

impl OverlapRow {
    fn new(count: usize, total: usize) -> Self {
        let percent = if total == 0 {
            0.0
        } else {
            100.0 * count as f64 / total as f64
        };
        Self {
            count,
            total,
            percent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapTable {
    pub per_class: Vec<OverlapRow>,
    pub totals: OverlapRow,
    /// Correct rows that the gate would defer; reported as incorrect, the
    /// input matrix itself is left as is.
    pub tagged_rows: Vec<usize>,
}

/// Correct predictions whose distance reaches the class threshold.
///
/// Rows where the prediction is wrong are ignored.
pub fn overlap_stats(
    matrix: &PredictionMatrix,
    bundle: &CalibrationBundle,
) -> Result<OverlapTable> {
    check_dims(matrix.k(), &bundle.centroids)?;
    let k = matrix.k();
    let mut counts = vec![0usize; k];
    let mut totals = vec![0usize; k];
    let mut tagged_rows = Vec::new();
    for (row, rec) in matrix.iter().enumerate() {
        if !rec.is_correct() {
            continue;
        }
        let c = rec.pred_label;
        totals[c] += 1;
        if prediction_distance(rec, &bundle.centroids) >= bundle.thresholds.t[c] {
            counts[c] += 1;
            tagged_rows.push(row);
        }
    }
    let per_class: Vec<OverlapRow> = (0..k)
        .map(|c| OverlapRow::new(counts[c], totals[c]))
        .collect();
    let totals = OverlapRow::new(counts.iter().sum(), totals.iter().sum());
    Ok(OverlapTable {
        per_class,
        totals,
        tagged_rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    /// `None` for the all-classes aggregate.
    pub class: Option<usize>,
    pub factor: f64,
    pub total: usize,
    pub covered: usize,
    pub covered_correct: usize,
    /// Fraction of predictions strictly inside the reduced threshold.
    pub coverage: Option<f64>,
    /// Fraction of covered predictions that are correct.
    pub retained_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub factors: Vec<f64>,
    /// Class-major: all factors for class 0, then class 1, ..., then the
    /// aggregate rows.
    pub points: Vec<SweepPoint>,
}

impl SweepTable {
    pub fn for_class(&self, class: Option<usize>) -> impl Iterator<Item = &SweepPoint> {
        self.points.iter().filter(move |p| p.class == class)
    }
}

/// Coverage and retained accuracy when each threshold shrinks to
/// `(1 - f) * t`, for every factor `f` in `factors`.
pub fn threshold_sweep(
    matrix: &PredictionMatrix,
    bundle: &CalibrationBundle,
    factors: &[f64],
) -> Result<SweepTable> {
    check_dims(matrix.k(), &bundle.centroids)?;
    if let Some(&f) = factors.iter().find(|f| !(0.0..1.0).contains(*f)) {
        return Err(Error::InvalidFactor(f));
    }
    let k = matrix.k();
    let rows: Vec<(usize, f64, bool)> = matrix
        .iter()
        .map(|r| {
            (
                r.pred_label,
                prediction_distance(r, &bundle.centroids),
                r.is_correct(),
            )
        })
        .collect();

    let mut totals = vec![0usize; k];
    for &(c, _, _) in &rows {
        totals[c] += 1;
    }
    let mut points = Vec::with_capacity((k + 1) * factors.len());
    let mut agg = vec![(0usize, 0usize); factors.len()];
    for class in 0..k {
        for (fi, &f) in factors.iter().enumerate() {
            let limit = (1.0 - f) * bundle.thresholds.t[class];
            let (mut covered, mut covered_correct) = (0, 0);
            for &(c, d, ok) in &rows {
                if c == class && d < limit {
                    covered += 1;
                    covered_correct += ok as usize;
                }
            }
            agg[fi].0 += covered;
            agg[fi].1 += covered_correct;
            points.push(sweep_point(
                Some(class),
                f,
                totals[class],
                covered,
                covered_correct,
            ));
        }
    }
    for (fi, &f) in factors.iter().enumerate() {
        points.push(sweep_point(None, f, rows.len(), agg[fi].0, agg[fi].1));
    }
    Ok(SweepTable {
        factors: factors.to_vec(),
        points,
    })
}

fn sweep_point(
    class: Option<usize>,
    factor: f64,
    total: usize,
    covered: usize,
    covered_correct: usize,
) -> SweepPoint {
    SweepPoint {
        class,
        factor,
        total,
        covered,
        covered_correct,
        coverage: (total > 0).then(|| covered as f64 / total as f64),
        retained_accuracy: (covered > 0).then(|| covered_correct as f64 / covered as f64),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub source_tag: String,
    pub calibration_rows: usize,
    pub correct_rows: usize,
    pub incorrect_rows: usize,
    /// Present when the centroids were refined by K-Means.
    pub kmeans: Option<KMeansParams>,
    pub kmeans_iterations: Option<usize>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Centroids plus thresholds: everything needed to gate new predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationBundle {
    pub centroids: CentroidSet,
    pub thresholds: ThresholdTable,
    pub meta: BundleMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    /// Refine the class means with K-Means before measuring thresholds.
    pub use_fitted: bool,
    pub kmeans: KMeansParams,
    pub unbounded_policy: UnboundedPolicy,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        Self {
            use_fitted: true,
            kmeans: KMeansParams::default(),
            unbounded_policy: UnboundedPolicy::AcceptAlways,
        }
    }
}

/// Builds centroids from the correct rows and thresholds from the incorrect
/// rows of a calibration matrix.
pub fn calibrate(
    matrix: &PredictionMatrix,
    params: &CalibrationParams,
) -> Result<CalibrationBundle> {
    let split = partition(matrix);
    let correct = matrix.select(&split.correct);
    let incorrect = matrix.select(&split.incorrect);

    let mut warnings = Vec::new();
    let mut centroids = init_centroids(&correct)?;
    let mut kmeans_iterations = None;
    if params.use_fitted {
        let points: Vec<&[f64]> = correct.iter().map(|r| r.probs.as_slice()).collect();
        let fit = kmeans(&points, &centroids, &params.kmeans)?;
        for m in label_integrity(&correct, &fit.assignments) {
            warnings.push(format!(
                "cluster {} is dominated by class {} ({} rows vs {} of its own)",
                m.cluster, m.majority_class, m.majority_count, m.own_count
            ));
        }
        kmeans_iterations = Some(fit.iterations);
        centroids = fit.centroids;
    }

    let mut thresholds = compute_thresholds(&incorrect, &centroids)?;
    if params.unbounded_policy == UnboundedPolicy::MaxCorrectDistance {
        apply_max_correct_fallback(&mut thresholds, &correct, &centroids)?;
    }
    warnings.extend(thresholds.warnings());

    Ok(CalibrationBundle {
        centroids,
        thresholds,
        meta: BundleMeta {
            source_tag: matrix.source_tag().to_string(),
            calibration_rows: matrix.len(),
            correct_rows: split.correct.len(),
            incorrect_rows: split.incorrect.len(),
            kmeans: params.use_fitted.then_some(params.kmeans),
            kmeans_iterations,
            warnings,
        },
    })
}

#[derive(Serialize, Deserialize)]
struct BundleDoc {
    format: String,
    k: usize,
    centroid_provenance: CentroidProvenance,
    centroids: Vec<Vec<f64>>,
    thresholds: Vec<ThresholdEntry>,
    unbounded: Vec<usize>,
    unbounded_policy: UnboundedPolicy,
    source: BundleMeta,
}

#[derive(Serialize, Deserialize)]
struct ThresholdEntry {
    class: usize,
    /// `null` encodes +inf.
    t: Option<f64>,
    incorrect_count: usize,
}

impl CalibrationBundle {
    pub fn k(&self) -> usize {
        self.thresholds.k()
    }

    pub fn to_json_string(&self) -> Result<String> {
        let doc = BundleDoc {
            format: BUNDLE_FORMAT.to_string(),
            k: self.k(),
            centroid_provenance: self.centroids.provenance(),
            centroids: self.centroids.rows().to_vec(),
            thresholds: (0..self.k())
                .map(|c| ThresholdEntry {
                    class: c,
                    t: self.thresholds.t[c]
                        .is_finite()
                        .then_some(self.thresholds.t[c]),
                    incorrect_count: self.thresholds.counts[c],
                })
                .collect(),
            unbounded: self.thresholds.unbounded.clone(),
            unbounded_policy: self.thresholds.policy,
            source: self.meta.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)? + "\n")
    }

    pub fn from_json_str(text: &str, path: &Path) -> Result<Self> {
        let doc: BundleDoc = serde_json::from_str(text)?;
        let malformed = |reason: String| Error::Malformed {
            path: path.into(),
            reason,
        };
        if doc.format != BUNDLE_FORMAT {
            return Err(malformed(format!(
                "format tag `{}`, expected `{BUNDLE_FORMAT}`",
                doc.format
            )));
        }
        let centroids = CentroidSet::new(doc.centroids, doc.centroid_provenance)?;
        if centroids.k() != doc.k || centroids.dim() != doc.k || doc.thresholds.len() != doc.k {
            return Err(malformed(format!(
                "inconsistent dimensions: k = {}, {} centroids of dim {}, {} thresholds",
                doc.k,
                centroids.k(),
                centroids.dim(),
                doc.thresholds.len()
            )));
        }
        let mut t = Vec::with_capacity(doc.k);
        let mut counts = Vec::with_capacity(doc.k);
        for (i, e) in doc.thresholds.iter().enumerate() {
            if e.class != i {
                return Err(malformed(format!(
                    "threshold entry {i} is for class {}",
                    e.class
                )));
            }
            t.push(e.t.unwrap_or(f64::INFINITY));
            counts.push(e.incorrect_count);
        }
        let mut unbounded = doc.unbounded;
        unbounded.sort_unstable();
        if unbounded.iter().any(|&c| c >= doc.k) {
            return Err(malformed("unbounded class out of range".into()));
        }
        Ok(Self {
            centroids,
            thresholds: ThresholdTable {
                t,
                counts,
                unbounded,
                policy: doc.unbounded_policy,
            },
            meta: doc.source,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text, path)
    }
}
