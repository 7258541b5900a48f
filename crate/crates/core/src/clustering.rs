//! Class centroids in softmax space.
//!
//! Centroid `c` always stands for class `c`: initial centroids are per-class
//! means of correct predictions, and the Lloyd refinement below never
//! re-seeds or reorders clusters, so the index-to-label mapping survives
//! fitting.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{argmax, PredictionMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CentroidProvenance {
    Initial,
    Fitted,
}

impl fmt::Display for CentroidProvenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CentroidProvenance::Initial => "initial",
            CentroidProvenance::Fitted => "fitted",
        })
    }
}

impl FromStr for CentroidProvenance {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "initial" => Ok(CentroidProvenance::Initial),
            "fitted" => Ok(CentroidProvenance::Fitted),
            other => Err(format!("unknown centroid provenance `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentroidSet {
    centroids: Vec<Vec<f64>>,
    provenance: CentroidProvenance,
}

impl CentroidSet {
    pub fn new(centroids: Vec<Vec<f64>>, provenance: CentroidProvenance) -> Result<Self> {
        let dim = centroids.first().map(Vec::len).ok_or(Error::NoPoints)?;
        if dim == 0 {
            return Err(Error::invalid("centroids", "zero-dimensional centroids"));
        }
        for c in &centroids {
            if c.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: c.len(),
                });
            }
        }
        Ok(Self {
            centroids,
            provenance,
        })
    }

    /// Number of centroids (the class count).
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids[0].len()
    }

    pub fn centroid(&self, class: usize) -> &[f64] {
        &self.centroids[class]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    pub fn provenance(&self) -> CentroidProvenance {
        self.provenance
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# provenance: {}", self.provenance)?;
        for row in &self.centroids {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec");
        String::from_utf8(buf).expect("ascii")
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let malformed = |reason: String| Error::Malformed {
            path: path.into(),
            reason,
        };
        let mut provenance = None;
        let mut rows = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(p) = comment.trim().strip_prefix("provenance:") {
                    provenance = Some(p.trim().parse().map_err(malformed)?);
                }
                continue;
            }
            let row = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| malformed(format!("line {}: {e}", lineno + 1)))?;
            rows.push(row);
        }
        let provenance =
            provenance.ok_or_else(|| malformed("missing `# provenance:` line".into()))?;
        Self::new(rows, provenance)
    }
}

/// Euclidean distance between two equal-length vectors.
pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(squared_distance(a, b).sqrt())
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Distance from `probs` to every centroid, indexed by class.
pub fn distances_to_all_centroids(probs: &[f64], centroids: &CentroidSet) -> Result<Vec<f64>> {
    if probs.len() != centroids.dim() {
        return Err(Error::DimensionMismatch {
            expected: centroids.dim(),
            actual: probs.len(),
        });
    }
    Ok(centroids
        .rows()
        .iter()
        .map(|c| squared_distance(probs, c).sqrt())
        .collect())
}

/// Per-class mean of probability vectors, grouping rows by their argmax.
///
/// Intended for the correct-prediction subset, where argmax equals the label.
pub fn init_centroids(matrix: &PredictionMatrix) -> Result<CentroidSet> {
    let k = matrix.k();
    let mut sums = vec![vec![0.0f64; k]; k];
    let mut counts = vec![0usize; k];
    for rec in matrix {
        let c = argmax(&rec.probs);
        counts[c] += 1;
        for (s, p) in sums[c].iter_mut().zip(&rec.probs) {
            *s += p;
        }
    }
    if let Some(empty) = counts.iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass(empty));
    }
    for (sum, &n) in sums.iter_mut().zip(&counts) {
        for s in sum.iter_mut() {
            *s /= n as f64;
        }
    }
    CentroidSet::new(sums, CentroidProvenance::Initial)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub max_iter: usize,
    /// Stop once the largest centroid movement drops below this.
    pub tol: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

/// State after one assign-then-update round.
#[derive(Debug, Clone, PartialEq)]
pub struct LloydStep {
    pub iteration: usize,
    /// Assignments computed against the centroids from before this step.
    pub assignments: Vec<usize>,
    /// Centroids after the update.
    pub centroids: Vec<Vec<f64>>,
    /// Largest Euclidean centroid movement in this step.
    pub shift: f64,
    /// Sum of squared distances from each point to its updated centroid.
    pub inertia: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centroids: CentroidSet,
    /// Nearest fitted centroid per point.
    pub assignments: Vec<usize>,
    pub iterations: usize,
    pub final_shift: f64,
    pub inertia_history: Vec<f64>,
}

/// Index of the nearest centroid by squared distance; ties go low.
pub(crate) fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = squared_distance(point, &centroids[0]);
    for (i, c) in centroids.iter().enumerate().skip(1) {
        let d = squared_distance(point, c);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

pub fn assign_nearest<P: AsRef<[f64]> + Sync>(points: &[P], centroids: &CentroidSet) -> Vec<usize> {
    points
        .par_iter()
        .map(|p| nearest(p.as_ref(), centroids.rows()))
        .collect()
}

/// Step-wise Lloyd iteration.
///
/// Clusters that receive no points keep their previous centroid.
pub struct Lloyd<'a, P> {
    points: &'a [P],
    centroids: Vec<Vec<f64>>,
    iteration: usize,
}

impl<'a, P: AsRef<[f64]> + Sync> Lloyd<'a, P> {
    pub fn new(points: &'a [P], init: &CentroidSet) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::NoPoints);
        }
        for p in points {
            if p.as_ref().len() != init.dim() {
                return Err(Error::DimensionMismatch {
                    expected: init.dim(),
                    actual: p.as_ref().len(),
                });
            }
        }
        Ok(Self {
            points,
            centroids: init.rows().to_vec(),
            iteration: 0,
        })
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    pub fn step(&mut self) -> LloydStep {
        let assignments: Vec<usize> = self
            .points
            .par_iter()
            .map(|p| nearest(p.as_ref(), &self.centroids))
            .collect();

        let k = self.centroids.len();
        let dim = self.centroids[0].len();
        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in self.points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p.as_ref()) {
                *s += x;
            }
        }
        let mut shift = 0.0f64;
        for ((old, sum), &n) in self.centroids.iter_mut().zip(sums).zip(&counts) {
            if n == 0 {
                continue;
            }
            let new: Vec<f64> = sum.into_iter().map(|s| s / n as f64).collect();
            shift = shift.max(squared_distance(old, &new).sqrt());
            *old = new;
        }
        let inertia = self
            .points
            .iter()
            .zip(&assignments)
            .map(|(p, &a)| squared_distance(p.as_ref(), &self.centroids[a]))
            .sum();
        self.iteration += 1;
        LloydStep {
            iteration: self.iteration,
            assignments,
            centroids: self.centroids.clone(),
            shift,
            inertia,
        }
    }
}

/// Lloyd's K-Means seeded from `init`, stopping when the largest centroid
/// shift falls below `params.tol` or after `params.max_iter` rounds.
pub fn kmeans<P: AsRef<[f64]> + Sync>(
    points: &[P],
    init: &CentroidSet,
    params: &KMeansParams,
) -> Result<KMeansResult> {
    if params.max_iter == 0 {
        return Err(Error::invalid("max_iter", "must be at least 1"));
    }
    if !(params.tol >= 0.0) {
        return Err(Error::invalid("tol", format!("{} is negative", params.tol)));
    }
    let mut lloyd = Lloyd::new(points, init)?;
    let mut inertia_history = Vec::new();
    let mut final_shift = f64::INFINITY;
    let mut iterations = 0;
    while iterations < params.max_iter {
        let step = lloyd.step();
        iterations = step.iteration;
        final_shift = step.shift;
        inertia_history.push(step.inertia);
        if step.shift < params.tol {
            break;
        }
    }
    let centroids = CentroidSet::new(lloyd.centroids().to_vec(), CentroidProvenance::Fitted)?;
    let assignments = assign_nearest(points, &centroids);
    Ok(KMeansResult {
        centroids,
        assignments,
        iterations,
        final_shift,
        inertia_history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Misclustered {
    pub row: usize,
    pub true_class: usize,
    pub assigned_cluster: usize,
}

/// Rows whose assigned cluster differs from their true label.
pub fn find_misclustered(
    matrix: &PredictionMatrix,
    result: &KMeansResult,
) -> Result<Vec<Misclustered>> {
    if matrix.len() != result.assignments.len() {
        return Err(Error::LengthMismatch {
            what: "assignments",
            expected: matrix.len(),
            actual: result.assignments.len(),
        });
    }
    Ok(matrix
        .iter()
        .zip(&result.assignments)
        .enumerate()
        .filter(|(_, (rec, &a))| rec.true_label != a)
        .map(|(row, (rec, &a))| Misclustered {
            row,
            true_class: rec.true_label,
            assigned_cluster: a,
        })
        .collect())
}

/// A cluster whose members are mostly of some other class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LabelMismatch {
    pub cluster: usize,
    pub majority_class: usize,
    pub majority_count: usize,
    pub own_count: usize,
}

/// Majority true class per cluster, reporting clusters where it differs from
/// the cluster index. Empty clusters are skipped.
pub fn label_integrity(matrix: &PredictionMatrix, assignments: &[usize]) -> Vec<LabelMismatch> {
    let k = matrix.k();
    let mut counts = vec![vec![0usize; k]; k];
    for (rec, &a) in matrix.iter().zip(assignments) {
        if a < k {
            counts[a][rec.true_label] += 1;
        }
    }
    counts
        .iter()
        .enumerate()
        .filter_map(|(cluster, row)| {
            let total: usize = row.iter().sum();
            if total == 0 {
                return None;
            }
            let mut majority = 0;
            for (c, &n) in row.iter().enumerate() {
                if n > row[majority] {
                    majority = c;
                }
            }
            (majority != cluster).then_some(LabelMismatch {
                cluster,
                majority_class: majority,
                majority_count: row[majority],
                own_count: row[cluster],
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PredictionRecord;

    fn identity(k: usize) -> CentroidSet {
        let rows = (0..k)
            .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        CentroidSet::new(rows, CentroidProvenance::Initial).unwrap()
    }

    #[test]
    fn distance_examples() {
        let x = [0.3, 0.7];
        assert_eq!(euclidean_distance(&x, &x).unwrap(), 0.0);
        let d = euclidean_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((d - 1.414_213_56).abs() < 1e-8);
        let d = euclidean_distance(&[0.9, 0.1], &[0.5, 0.5]).unwrap();
        assert!((d - 0.565_685_42).abs() < 1e-8);
        assert!(matches!(
            euclidean_distance(&[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn one_hot_rows_give_identity_centroids() {
        let recs = (0..4)
            .map(|c| PredictionRecord::from_probs(identity(4).centroid(c).to_vec(), c))
            .collect();
        let m = PredictionMatrix::new(4, recs, "").unwrap();
        let c = init_centroids(&m).unwrap();
        assert_eq!(c, identity(4));
        assert_eq!(c.provenance(), CentroidProvenance::Initial);
    }

    #[test]
    fn two_point_mean() {
        let recs = vec![
            PredictionRecord::from_probs(vec![0.8, 0.2], 0),
            PredictionRecord::from_probs(vec![0.6, 0.4], 0),
            PredictionRecord::from_probs(vec![0.1, 0.9], 1),
        ];
        let m = PredictionMatrix::new(2, recs, "").unwrap();
        let c = init_centroids(&m).unwrap();
        assert!((c.centroid(0)[0] - 0.7).abs() < 1e-15);
        assert!((c.centroid(0)[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn missing_class_is_an_error() {
        let recs = vec![PredictionRecord::from_probs(vec![0.8, 0.1, 0.1], 0)];
        let m = PredictionMatrix::new(3, recs, "").unwrap();
        assert!(matches!(init_centroids(&m), Err(Error::EmptyClass(1))));
    }

    #[test]
    fn fixed_point_converges_immediately() {
        let init = identity(3);
        let points: Vec<Vec<f64>> = init.rows().to_vec();
        let r = kmeans(&points, &init, &KMeansParams::default()).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.final_shift, 0.0);
        assert_eq!(r.assignments, vec![0, 1, 2]);
        assert_eq!(r.centroids.provenance(), CentroidProvenance::Fitted);
    }

    #[test]
    fn line_example() {
        let points = vec![vec![0.0], vec![0.1], vec![0.9], vec![1.0]];
        let init =
            CentroidSet::new(vec![vec![0.05], vec![0.95]], CentroidProvenance::Initial).unwrap();
        let r = kmeans(&points, &init, &KMeansParams::default()).unwrap();
        assert_eq!(r.assignments, vec![0, 0, 1, 1]);
        assert!((r.centroids.centroid(0)[0] - 0.05).abs() < 1e-15);
        assert!((r.centroids.centroid(1)[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn empty_cluster_keeps_previous_centroid() {
        let points = vec![vec![0.0], vec![0.2]];
        let init =
            CentroidSet::new(vec![vec![0.1], vec![5.0]], CentroidProvenance::Initial).unwrap();
        let r = kmeans(&points, &init, &KMeansParams::default()).unwrap();
        assert_eq!(r.centroids.centroid(1), &[5.0]);
        assert_eq!(r.assignments, vec![0, 0]);
    }

    #[test]
    fn kmeans_argument_errors() {
        let init = identity(2);
        let none: Vec<Vec<f64>> = Vec::new();
        assert!(matches!(
            kmeans(&none, &init, &KMeansParams::default()),
            Err(Error::NoPoints)
        ));
        let bad = vec![vec![1.0, 0.0, 0.0]];
        assert!(matches!(
            kmeans(&bad, &init, &KMeansParams::default()),
            Err(Error::DimensionMismatch { .. })
        ));
        let ok = vec![vec![1.0, 0.0]];
        assert!(kmeans(
            &ok,
            &init,
            &KMeansParams {
                max_iter: 0,
                tol: 0.0
            }
        )
        .is_err());
    }

    #[test]
    fn misclustered_rows_are_reported() {
        let centroids = CentroidSet::new(
            vec![vec![0.9, 0.1], vec![0.1, 0.9]],
            CentroidProvenance::Initial,
        )
        .unwrap();
        let recs = vec![
            PredictionRecord::new(vec![0.9, 0.1], 0, 0),
            PredictionRecord::new(vec![0.45, 0.55], 0, 1),
            PredictionRecord::new(vec![0.1, 0.9], 1, 1),
        ];
        let m = PredictionMatrix::new(2, recs, "").unwrap();
        let pts: Vec<&[f64]> = m.iter().map(|r| r.probs.as_slice()).collect();
        let r = kmeans(
            &pts,
            &centroids,
            &KMeansParams {
                max_iter: 1,
                tol: 0.0,
            },
        )
        .unwrap();
        let mis = find_misclustered(&m, &r).unwrap();
        assert_eq!(
            mis,
            vec![Misclustered {
                row: 1,
                true_class: 0,
                assigned_cluster: 1
            }]
        );

        let short = m.select(&[0]);
        assert!(find_misclustered(&short, &r).is_err());
    }

    #[test]
    fn all_at_own_centroid_means_nothing_misclustered() {
        let c = identity(3);
        let recs = (0..3)
            .map(|i| PredictionRecord::from_probs(c.centroid(i).to_vec(), i))
            .collect();
        let m = PredictionMatrix::new(3, recs, "").unwrap();
        let pts: Vec<&[f64]> = m.iter().map(|r| r.probs.as_slice()).collect();
        let r = kmeans(&pts, &c, &KMeansParams::default()).unwrap();
        assert!(find_misclustered(&m, &r).unwrap().is_empty());
        assert!(label_integrity(&m, &r.assignments).is_empty());
    }

    #[test]
    fn all_centroid_distances() {
        let c = identity(10);
        let d = distances_to_all_centroids(c.centroid(0), &c).unwrap();
        assert_eq!(d[0], 0.0);
        for &v in &d[1..] {
            assert!((v - 2f64.sqrt()).abs() < 1e-15);
        }
        let uniform = vec![0.1; 10];
        for v in distances_to_all_centroids(&uniform, &c).unwrap() {
            assert!((v - 0.9f64.sqrt()).abs() < 1e-12);
        }
        let d = distances_to_all_centroids(c.centroid(3), &c).unwrap();
        assert_eq!(d[3], 0.0);
    }

    #[test]
    fn label_integrity_flags_swapped_cluster() {
        let recs = vec![
            PredictionRecord::new(vec![0.9, 0.1], 1, 0),
            PredictionRecord::new(vec![0.9, 0.1], 1, 0),
            PredictionRecord::new(vec![0.9, 0.1], 0, 0),
        ];
        let m = PredictionMatrix::new(2, recs, "").unwrap();
        let mism = label_integrity(&m, &[0, 0, 0]);
        assert_eq!(
            mism,
            vec![LabelMismatch {
                cluster: 0,
                majority_class: 1,
                majority_count: 2,
                own_count: 1
            }]
        );
    }

    #[test]
    fn centroid_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let c = CentroidSet::new(
            vec![vec![0.1 + 0.2, 0.7], vec![1.0 / 3.0, 2.0 / 3.0]],
            CentroidProvenance::Fitted,
        )
        .unwrap();
        std::fs::write(&path, c.to_csv_string()).unwrap();
        assert_eq!(CentroidSet::read_csv(&path).unwrap(), c);
    }
}
