//! Accept/defer gating of classifier outputs by distance to per-class
//! softmax centroids, with the supporting statistics, IDX dataset I/O and
//! image perturbation tools.

pub mod analysis;
pub mod clustering;
pub mod error;
pub mod idx;
pub mod matrix_io;
pub mod model;
pub mod perturb;
pub mod report;
pub mod synth;
pub mod thresholds;

pub use clustering::{
    distances_to_all_centroids, euclidean_distance, init_centroids, kmeans, CentroidProvenance,
    CentroidSet, KMeansParams, KMeansResult,
};
pub use error::{Error, Result};
pub use matrix_io::{read_matrix, write_matrix, MatrixFormat};
pub use model::{
    argmax, partition, validate, PredictionMatrix, PredictionRecord, ValidationReport,
};
pub use synth::{synth_fixture, SynthParams};
pub use thresholds::{
    calibrate, gate, gate_matrix, overlap_stats, threshold_sweep, CalibrationBundle,
    CalibrationParams, GateDecision, UnboundedPolicy, Verdict,
};
