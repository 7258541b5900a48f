//! Synthetic prediction matrices for desk-scale testing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::model::{PredictionMatrix, PredictionRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub k: usize,
    pub per_class_n: usize,
    /// Scale of the extra weight on the winning class; larger is more peaked.
    pub concentration: f64,
    /// Per-row probability that the prediction goes to a wrong class.
    pub error_rate: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            k: 10,
            per_class_n: 1000,
            concentration: 20.0,
            error_rate: 0.02,
            seed: 7,
        }
    }
}

/// Generates `k * per_class_n` rows in class-major order.
///
/// Each row draws base weights uniformly in [0, 1) for every class, then adds
/// `1 + concentration * Exp(1)` on top of the largest base weight for the
/// winning class, so the winner is a strict argmax. Erroneous rows pick a
/// uniformly drawn wrong class as the winner and lift the true class part of
/// the way towards it, which makes them less peaked than correct rows.
pub fn synth_fixture(params: &SynthParams) -> Result<PredictionMatrix> {
    let SynthParams {
        k,
        per_class_n,
        concentration,
        error_rate,
        seed,
    } = *params;
    if k < 2 {
        return Err(Error::invalid("k", format!("need k >= 2, got {k}")));
    }
    if !(concentration > 0.0 && concentration.is_finite()) {
        return Err(Error::invalid(
            "concentration",
            format!("{concentration} is not > 0"),
        ));
    }
    if !(0.0..1.0).contains(&error_rate) {
        return Err(Error::invalid(
            "error_rate",
            format!("{error_rate} outside [0, 1)"),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(k * per_class_n);
    let mut weights = vec![0.0f64; k];
    for class in 0..k {
        for _ in 0..per_class_n {
            let wrong = rng.random::<f64>() < error_rate;
            let winner = if wrong {
                let j = rng.random_range(0..k - 1);
                if j >= class {
                    j + 1
                } else {
                    j
                }
            } else {
                class
            };
            for w in weights.iter_mut() {
                *w = rng.random::<f64>();
            }
            let base_max = weights.iter().cloned().fold(0.0, f64::max);
            let lift: f64 = Exp1.sample(&mut rng);
            weights[winner] = base_max + 1.0 + concentration * lift;
            if wrong {
                let share = 0.9 * rng.random::<f64>();
                weights[class] += (weights[winner] - weights[class]) * share;
            }
            let total: f64 = weights.iter().sum();
            let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
            records.push(PredictionRecord::new(probs, class, winner));
        }
    }
    PredictionMatrix::new(
        k,
        records,
        format!("synth(k={k},n={per_class_n},seed={seed})"),
    )
}
