//! Summary statistics over softmax distances.
//!
//! Covers the per-class distance summary, confusion counts, accuracy vs.
//! mean-distance fits, average softmax profiles, the nearest-distance and
//! misclassification-likelihood matrices (optionally per perturbation level)
//! and distance trends across perturbation levels.

use serde::Serialize;

use crate::clustering::{squared_distance, CentroidSet};
use crate::error::{Error, Result};
use crate::model::{PredictionMatrix, PredictionRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Correct,
    Incorrect,
}

impl Side {
    pub fn of(rec: &PredictionRecord) -> Self {
        if rec.is_correct() {
            Side::Correct
        } else {
            Side::Incorrect
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Correct => "correct",
            Side::Incorrect => "incorrect",
        }
    }
}

/// Which centroid a row's distance is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceTarget {
    #[default]
    Predicted,
    True,
}

impl DistanceTarget {
    fn class_of(self, rec: &PredictionRecord) -> usize {
        match self {
            DistanceTarget::Predicted => rec.pred_label,
            DistanceTarget::True => rec.true_label,
        }
    }
}

fn check_centroids(k: usize, centroids: &CentroidSet) -> Result<()> {
    if centroids.k() != k || centroids.dim() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            actual: centroids.dim(),
        });
    }
    Ok(())
}

fn distance(probs: &[f64], centroid: &[f64]) -> f64 {
    squared_distance(probs, centroid).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    /// Population standard deviation.
    pub sigma: f64,
    pub count: usize,
}

impl Summary {
    /// `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 0 {
            (sorted[mid - 1] + sorted[mid]) / 2.0
        } else {
            sorted[mid]
        };
        Some(Self {
            mean,
            median,
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            sigma: var.sqrt(),
            count: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceStats {
    pub target: DistanceTarget,
    /// Indexed by class; `None` when that side has no rows.
    pub correct: Vec<Option<Summary>>,
    pub incorrect: Vec<Option<Summary>>,
}

impl DistanceStats {
    pub fn get(&self, class: usize, side: Side) -> Option<&Summary> {
        match side {
            Side::Correct => self.correct[class].as_ref(),
            Side::Incorrect => self.incorrect[class].as_ref(),
        }
    }
}

/// Distance summary per class and correctness side. Rows are grouped by the
/// class whose centroid they are measured against.
pub fn distance_stats(
    matrix: &PredictionMatrix,
    centroids: &CentroidSet,
    target: DistanceTarget,
) -> Result<DistanceStats> {
    let k = matrix.k();
    check_centroids(k, centroids)?;
    let mut groups = vec![[Vec::new(), Vec::new()]; k];
    for rec in matrix {
        let c = target.class_of(rec);
        let side = if rec.is_correct() { 0 } else { 1 };
        groups[c][side].push(distance(&rec.probs, centroids.centroid(c)));
    }
    let (correct, incorrect) = groups
        .iter()
        .map(|[ok, bad]| (Summary::of(ok), Summary::of(bad)))
        .unzip();
    Ok(DistanceStats {
        target,
        correct,
        incorrect,
    })
}

/// `counts[true][pred]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn diagonal_sum(&self) -> usize {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }
}

pub fn confusion_matrix(matrix: &PredictionMatrix) -> ConfusionMatrix {
    let k = matrix.k();
    let mut counts = vec![vec![0usize; k]; k];
    for rec in matrix {
        counts[rec.true_label][rec.pred_label] += 1;
    }
    ConfusionMatrix { counts }
}

/// Per true class, fraction predicted correctly; `None` for absent classes.
pub fn class_accuracy(matrix: &PredictionMatrix) -> Vec<Option<f64>> {
    let cm = confusion_matrix(matrix);
    cm.counts
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let total: usize = row.iter().sum();
            (total > 0).then(|| row[c] as f64 / total as f64)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Pearson correlation; 0 when the y values are constant.
    pub r: f64,
}

/// Ordinary least squares of `ys` on `xs`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            what: "ys",
            expected: xs.len(),
            actual: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::DegenerateFit);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::DegenerateFit);
    }
    let slope = sxy / sxx;
    let r = if syy == 0.0 {
        0.0
    } else {
        sxy / (sxx.sqrt() * syy.sqrt())
    };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r,
    })
}

/// Which rows contribute to a class's mean distance in [`accuracy_distance_fit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitAggregation {
    #[default]
    CorrectOnly,
    AllRows,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyFit {
    pub aggregation: FitAggregation,
    /// (class, mean distance, accuracy) for classes where both are defined.
    pub points: Vec<(usize, f64, f64)>,
    pub fit: LinearFit,
}

/// Fits per-class accuracy against the mean distance to the class centroid.
///
/// Distances are measured to the predicted-class centroid and grouped by
/// predicted class, accuracy by true class.
pub fn accuracy_distance_fit(
    matrix: &PredictionMatrix,
    centroids: &CentroidSet,
    aggregation: FitAggregation,
) -> Result<AccuracyFit> {
    let k = matrix.k();
    check_centroids(k, centroids)?;
    let mut sums = vec![(0.0f64, 0usize); k];
    for rec in matrix {
        if aggregation == FitAggregation::CorrectOnly && !rec.is_correct() {
            continue;
        }
        let c = rec.pred_label;
        sums[c].0 += distance(&rec.probs, centroids.centroid(c));
        sums[c].1 += 1;
    }
    let accuracy = class_accuracy(matrix);
    let points: Vec<(usize, f64, f64)> = (0..k)
        .filter_map(|c| {
            let (s, n) = sums[c];
            let acc = accuracy[c]?;
            (n > 0).then(|| (c, s / n as f64, acc))
        })
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| p.1).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.2).collect();
    Ok(AccuracyFit {
        aggregation,
        fit: linear_fit(&xs, &ys)?,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SoftmaxProfiles {
    /// Mean probability vector per predicted class; `None` for empty groups.
    pub correct: Vec<Option<Vec<f64>>>,
    pub incorrect: Vec<Option<Vec<f64>>>,
}

/// Elementwise mean of the probability vectors grouped by predicted class
/// and correctness.
pub fn mean_softmax_profiles(matrix: &PredictionMatrix) -> SoftmaxProfiles {
    let k = matrix.k();
    let mut sums = vec![[(vec![0.0f64; k], 0usize), (vec![0.0f64; k], 0usize)]; k];
    for rec in matrix {
        let slot = &mut sums[rec.pred_label][usize::from(!rec.is_correct())];
        for (s, p) in slot.0.iter_mut().zip(&rec.probs) {
            *s += p;
        }
        slot.1 += 1;
    }
    let mean = |(sum, n): &(Vec<f64>, usize)| {
        (*n > 0).then(|| sum.iter().map(|s| s / *n as f64).collect::<Vec<f64>>())
    };
    SoftmaxProfiles {
        correct: sums.iter().map(|g| mean(&g[0])).collect(),
        incorrect: sums.iter().map(|g| mean(&g[1])).collect(),
    }
}

/// `D[y][c]`: nearest distance from any example of true class `y` to
/// centroid `c`. The diagonal is always `None`; rows for classes with no
/// examples are all `None` and listed in `missing_rows`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NearestDistanceMatrix {
    pub cells: Vec<Vec<Option<f64>>>,
    pub missing_rows: Vec<usize>,
}

impl NearestDistanceMatrix {
    /// Wraps a dense K x K table; diagonal entries are discarded.
    pub fn from_dense(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        let mut cells = Vec::with_capacity(k);
        for (y, row) in rows.into_iter().enumerate() {
            if row.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    actual: row.len(),
                });
            }
            cells.push(
                row.into_iter()
                    .enumerate()
                    .map(|(c, v)| (c != y).then_some(v))
                    .collect(),
            );
        }
        Ok(Self {
            cells,
            missing_rows: Vec::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.cells.len()
    }

    pub fn get(&self, y: usize, c: usize) -> Option<f64> {
        self.cells[y][c]
    }
}

pub fn nearest_distance_matrix(
    matrix: &PredictionMatrix,
    centroids: &CentroidSet,
) -> Result<NearestDistanceMatrix> {
    let k = matrix.k();
    check_centroids(k, centroids)?;
    let mut cells = vec![vec![None::<f64>; k]; k];
    let mut seen = vec![false; k];
    for rec in matrix {
        let y = rec.true_label;
        seen[y] = true;
        for c in (0..k).filter(|&c| c != y) {
            let d = distance(&rec.probs, centroids.centroid(c));
            let cell = &mut cells[y][c];
            *cell = Some(cell.map_or(d, |m| m.min(d)));
        }
    }
    Ok(NearestDistanceMatrix {
        cells,
        missing_rows: (0..k).filter(|&y| !seen[y]).collect(),
    })
}

/// Row-normalised reciprocals of the nearest distances, zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LikelihoodMatrix {
    pub values: Vec<Vec<f64>>,
}

impl LikelihoodMatrix {
    pub fn k(&self) -> usize {
        self.values.len()
    }
}

pub fn misclassification_likelihood(d: &NearestDistanceMatrix) -> Result<LikelihoodMatrix> {
    let k = d.k();
    let mut values = vec![vec![0.0f64; k]; k];
    for y in 0..k {
        let mut total = 0.0;
        for c in (0..k).filter(|&c| c != y) {
            let dist = d.cells[y][c].ok_or(Error::MissingDistance { row: y, col: c })?;
            if !(dist > 0.0) {
                return Err(Error::ZeroDistance { row: y, col: c });
            }
            values[y][c] = 1.0 / dist;
            total += values[y][c];
        }
        for v in values[y].iter_mut() {
            *v /= total;
        }
    }
    Ok(LikelihoodMatrix { values })
}

/// Values indexed by perturbation level, contiguous from 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSeries<T> {
    pub levels: Vec<T>,
}

impl<T> LevelSeries<T> {
    /// Accepts `(level, value)` pairs in any order; levels must be exactly
    /// `0..n`.
    pub fn from_pairs(mut pairs: Vec<(usize, T)>) -> Result<Self> {
        pairs.sort_by_key(|(l, _)| *l);
        for (i, (l, _)) in pairs.iter().enumerate() {
            if *l != i {
                return Err(Error::invalid(
                    "levels",
                    format!("levels must be contiguous from 0, found {l} at position {i}"),
                ));
            }
        }
        Ok(Self {
            levels: pairs.into_iter().map(|(_, v)| v).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Likelihood matrix for each level's prediction matrix against fixed centroids.
pub fn likelihood_by_level(
    levels: &[(usize, PredictionMatrix)],
    centroids: &CentroidSet,
) -> Result<LevelSeries<LikelihoodMatrix>> {
    let pairs = levels
        .iter()
        .map(|(l, m)| {
            let d = nearest_distance_matrix(m, centroids)?;
            Ok((*l, misclassification_likelihood(&d)?))
        })
        .collect::<Result<Vec<_>>>()?;
    LevelSeries::from_pairs(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankedPair {
    pub true_class: usize,
    pub mis_class: usize,
    pub mean: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LikelihoodAggregate {
    pub mean: Vec<Vec<f64>>,
    /// Population standard deviation across levels.
    pub sigma: Vec<Vec<f64>>,
    /// Off-diagonal pairs by descending mean likelihood.
    pub top_pairs: Vec<RankedPair>,
    pub sigma_threshold: f64,
    /// Off-diagonal pairs with sigma strictly below `sigma_threshold`.
    pub consistent_pairs: Vec<(usize, usize)>,
}

pub const DEFAULT_SIGMA_THRESHOLD: f64 = 0.1;

/// Cellwise mean and population standard deviation of the likelihoods over levels.
pub fn aggregate_likelihoods(
    series: &LevelSeries<LikelihoodMatrix>,
    sigma_threshold: f64,
) -> Result<LikelihoodAggregate> {
    let first = series
        .levels
        .first()
        .ok_or_else(|| Error::invalid("levels", "need at least one level"))?;
    let k = first.k();
    for m in &series.levels {
        if m.k() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: m.k(),
            });
        }
    }
    let n = series.len() as f64;
    let mut mean = vec![vec![0.0f64; k]; k];
    let mut sigma = vec![vec![0.0f64; k]; k];
    for y in 0..k {
        for c in 0..k {
            let m = series.levels.iter().map(|l| l.values[y][c]).sum::<f64>() / n;
            let var = series
                .levels
                .iter()
                .map(|l| (l.values[y][c] - m) * (l.values[y][c] - m))
                .sum::<f64>()
                / n;
            mean[y][c] = m;
            sigma[y][c] = var.sqrt();
        }
    }
    let mut top_pairs: Vec<RankedPair> = (0..k)
        .flat_map(|y| (0..k).filter(move |&c| c != y).map(move |c| (y, c)))
        .map(|(y, c)| RankedPair {
            true_class: y,
            mis_class: c,
            mean: mean[y][c],
            sigma: sigma[y][c],
        })
        .collect();
    top_pairs.sort_by(|a, b| {
        b.mean
            .total_cmp(&a.mean)
            .then(a.true_class.cmp(&b.true_class))
            .then(a.mis_class.cmp(&b.mis_class))
    });
    let consistent_pairs = (0..k)
        .flat_map(|y| (0..k).map(move |c| (y, c)))
        .filter(|&(y, c)| y != c && sigma[y][c] < sigma_threshold)
        .collect();
    Ok(LikelihoodAggregate {
        mean,
        sigma,
        top_pairs,
        sigma_threshold,
        consistent_pairs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelDistances {
    /// Mean distance from rows of true class `y` to centroid `y`.
    pub true_mean: Vec<Option<f64>>,
    /// Mean distance from rows misclassified as `c` to centroid `c`.
    pub mis_mean: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TrendSign {
    Rising,
    Falling,
    Flat,
    Mixed,
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceTrends {
    pub series: LevelSeries<LevelDistances>,
    /// `true_deltas[p][y]` = true_mean at level p+1 minus level p.
    pub true_deltas: Vec<Vec<Option<f64>>>,
    pub mis_deltas: Vec<Vec<Option<f64>>>,
    /// Direction of the true-class mean distance per class across levels.
    pub true_sign: Vec<TrendSign>,
}

fn mean_of(sum: f64, n: usize) -> Option<f64> {
    (n > 0).then(|| sum / n as f64)
}

fn deltas(series: &[Vec<Option<f64>>]) -> Vec<Vec<Option<f64>>> {
    series
        .windows(2)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .map(|(a, b)| Some((*b)? - (*a)?))
                .collect()
        })
        .collect()
}

fn sign_of(deltas: &[Vec<Option<f64>>], class: usize) -> TrendSign {
    let ds: Vec<f64> = deltas.iter().filter_map(|row| row[class]).collect();
    if ds.is_empty() {
        TrendSign::Missing
    } else if ds.iter().all(|&d| d > 0.0) {
        TrendSign::Rising
    } else if ds.iter().all(|&d| d < 0.0) {
        TrendSign::Falling
    } else if ds.iter().all(|&d| d == 0.0) {
        TrendSign::Flat
    } else {
        TrendSign::Mixed
    }
}

/// Mean distances per class at each perturbation level, with level-to-level
/// deltas.
pub fn perturbation_distance_trends(
    levels: &[(usize, PredictionMatrix)],
    centroids: &CentroidSet,
) -> Result<DistanceTrends> {
    let mut pairs = Vec::with_capacity(levels.len());
    for (level, m) in levels {
        let k = m.k();
        check_centroids(k, centroids)?;
        let mut t = vec![(0.0f64, 0usize); k];
        let mut mis = vec![(0.0f64, 0usize); k];
        for rec in m {
            let y = rec.true_label;
            t[y].0 += distance(&rec.probs, centroids.centroid(y));
            t[y].1 += 1;
            if !rec.is_correct() {
                let c = rec.pred_label;
                mis[c].0 += distance(&rec.probs, centroids.centroid(c));
                mis[c].1 += 1;
            }
        }
        pairs.push((
            *level,
            LevelDistances {
                true_mean: t.iter().map(|&(s, n)| mean_of(s, n)).collect(),
                mis_mean: mis.iter().map(|&(s, n)| mean_of(s, n)).collect(),
            },
        ));
    }
    let series = LevelSeries::from_pairs(pairs)?;
    let true_series: Vec<_> = series.levels.iter().map(|l| l.true_mean.clone()).collect();
    let mis_series: Vec<_> = series.levels.iter().map(|l| l.mis_mean.clone()).collect();
    let true_deltas = deltas(&true_series);
    let mis_deltas = deltas(&mis_series);
    let k = centroids.k();
    let true_sign = (0..k).map(|c| sign_of(&true_deltas, c)).collect();
    Ok(DistanceTrends {
        series,
        true_deltas,
        mis_deltas,
        true_sign,
    })
}
