use std::path::Path;

use proptest::prelude::*;
use softgate::analysis::{
    aggregate_likelihoods, confusion_matrix, distance_stats, linear_fit,
    misclassification_likelihood, nearest_distance_matrix, DistanceTarget, LevelSeries, Side,
};
use softgate::clustering::{distances_to_all_centroids, euclidean_distance, init_centroids, Lloyd};
use softgate::idx::{IdxImages, IdxLabels, PerturbationSidecar, SidecarEntry};
use softgate::perturb::{apply_perturbation, GrayImage, PerturbationSpec, PerturbationType};
use softgate::{argmax, calibrate, gate, CalibrationParams, PredictionMatrix, PredictionRecord};

fn prob_row(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.001f64..1.0, k).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    })
}

/// Rows predicted by argmax, with a true label that is either the argmax or random.
fn matrix(k: usize, n: std::ops::Range<usize>) -> impl Strategy<Value = PredictionMatrix> {
    prop::collection::vec((prob_row(k), 0..k, prop::bool::weighted(0.7)), n).prop_map(move |rows| {
        let records = rows
            .into_iter()
            .map(|(p, other, correct)| {
                let pred = argmax(&p);
                PredictionRecord::new(p, if correct { pred } else { other }, pred)
            })
            .collect();
        PredictionMatrix::new(k, records, "prop").unwrap()
    })
}

fn any_matrix() -> impl Strategy<Value = PredictionMatrix> {
    (2usize..6).prop_flat_map(|k| matrix(k, 1..80))
}

/// Every class has a correct row, so class means exist.
fn calibratable() -> impl Strategy<Value = PredictionMatrix> {
    (2usize..5).prop_flat_map(|k| {
        (matrix(k, 0..60), Just(k)).prop_map(|(m, k)| {
            let mut records = m.records().to_vec();
            for c in 0..k {
                let mut p = vec![0.1 / (k - 1) as f64; k];
                p[c] = 0.9;
                records.push(PredictionRecord::new(p, c, c));
            }
            PredictionMatrix::new(k, records, "prop").unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lloyd_inertia_never_increases(m in calibratable()) {
        let points: Vec<Vec<f64>> = m.iter().map(|r| r.probs.clone()).collect();
        let init = init_centroids(&m).unwrap();
        let mut lloyd = Lloyd::new(&points, &init).unwrap();
        let mut prev = f64::INFINITY;
        for _ in 0..20 {
            let step = lloyd.step();
            prop_assert!(step.inertia <= prev + 1e-12, "{} > {}", step.inertia, prev);
            prev = step.inertia;
        }
    }

    #[test]
    fn fit_follows_affine_rescaling(
        pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..30),
        a in 0.1f64..10.0,
        b in -3.0f64..3.0,
    ) {
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let Ok(f) = linear_fit(&xs, &ys) else { return Ok(()) };
        prop_assume!(f.r != 0.0);
        let scaled: Vec<f64> = ys.iter().map(|y| a * y + b).collect();
        let g = linear_fit(&xs, &scaled).unwrap();
        prop_assert!((g.slope - a * f.slope).abs() < 1e-9 * (1.0 + g.slope.abs()));
        prop_assert!((g.intercept - (a * f.intercept + b)).abs() < 1e-9 * (1.0 + g.intercept.abs()));
        prop_assert!((g.r - f.r).abs() < 1e-9);
        prop_assert!(f.r.abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn likelihood_rows_sum_to_one(m in calibratable()) {
        let bundle = calibrate(&m, &CalibrationParams::default()).unwrap();
        let d = nearest_distance_matrix(&m, &bundle.centroids).unwrap();
        let Ok(l) = misclassification_likelihood(&d) else { return Ok(()) };
        for (y, row) in l.values.iter().enumerate() {
            prop_assert_eq!(row[y], 0.0);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn single_row_nearest_distances_are_its_centroid_distances(m in calibratable(), pick in any::<prop::sample::Index>()) {
        let bundle = calibrate(&m, &CalibrationParams::default()).unwrap();
        let rec = m.records()[pick.index(m.len())].clone();
        let y = rec.true_label;
        let single = PredictionMatrix::new(m.k(), vec![rec.clone()], "one").unwrap();
        let d = nearest_distance_matrix(&single, &bundle.centroids).unwrap();
        let all = distances_to_all_centroids(&rec.probs, &bundle.centroids).unwrap();
        for c in 0..m.k() {
            prop_assert_eq!(d.get(y, c), if c == y { None } else { Some(all[c]) });
        }
        prop_assert_eq!(d.missing_rows.len(), m.k() - 1);
    }

    #[test]
    fn identical_levels_have_zero_spread(m in calibratable(), levels in 1usize..5) {
        let bundle = calibrate(&m, &CalibrationParams::default()).unwrap();
        let d = nearest_distance_matrix(&m, &bundle.centroids).unwrap();
        let Ok(l) = misclassification_likelihood(&d) else { return Ok(()) };
        let series = LevelSeries::from_pairs((0..levels).map(|i| (i, l.clone())).collect()).unwrap();
        let agg = aggregate_likelihoods(&series, 1e-12).unwrap();
        prop_assert!(agg.sigma.iter().flatten().all(|s| *s < 1e-15));
        prop_assert_eq!(agg.consistent_pairs.len(), m.k() * (m.k() - 1));
        for (y, row) in agg.mean.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                prop_assert!((v - l.values[y][c]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn distance_stats_match_direct_computation(m in calibratable()) {
        let bundle = calibrate(&m, &CalibrationParams::default()).unwrap();
        let stats = distance_stats(&m, &bundle.centroids, DistanceTarget::Predicted).unwrap();
        for c in 0..m.k() {
            for side in [Side::Correct, Side::Incorrect] {
                let ds: Vec<f64> = m
                    .iter()
                    .filter(|r| r.pred_label == c && Side::of(r) == side)
                    .map(|r| euclidean_distance(&r.probs, bundle.centroids.centroid(c)).unwrap())
                    .collect();
                match stats.get(c, side) {
                    None => prop_assert!(ds.is_empty()),
                    Some(s) => {
                        let n = ds.len() as f64;
                        let mean = ds.iter().sum::<f64>() / n;
                        let sigma = (ds.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
                        prop_assert_eq!(s.count, ds.len());
                        prop_assert!((s.mean - mean).abs() < 1e-12);
                        prop_assert!((s.sigma - sigma).abs() < 1e-12);
                        prop_assert_eq!(s.min, ds.iter().cloned().fold(f64::INFINITY, f64::min));
                        prop_assert_eq!(s.max, ds.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
                        prop_assert!(s.min <= s.median && s.median <= s.max);
                    }
                }
            }
        }
    }

    #[test]
    fn confusion_counts_every_row_once(m in any_matrix()) {
        let cm = confusion_matrix(&m);
        prop_assert_eq!(cm.total(), m.len());
        prop_assert_eq!(cm.diagonal_sum(), m.iter().filter(|r| r.is_correct()).count());
    }

    #[test]
    fn gate_accepts_strictly_inside_and_never_a_calibration_error(m in calibratable()) {
        let bundle = calibrate(&m, &CalibrationParams::default()).unwrap();
        for r in m.iter() {
            let d = gate(&r.probs, &bundle).unwrap();
            let t = bundle.thresholds.t[d.pred_label];
            prop_assert_eq!(d.accepted(), d.distance < t);
            if !r.is_correct() {
                prop_assert!(!d.accepted());
            }
        }
    }

    #[test]
    fn idx_files_round_trip(rows in 1usize..6, cols in 1usize..6, count in 0usize..8, seed in any::<u64>()) {
        let pixels: Vec<u8> = (0..rows * cols * count).map(|i| (seed.rotate_left(i as u32 % 64) as u8) ^ i as u8).collect();
        let images = IdxImages::new(rows, cols, pixels).unwrap();
        let bytes = images.encode().unwrap();
        prop_assert_eq!(bytes.len(), 16 + rows * cols * count);
        prop_assert_eq!(IdxImages::decode(&bytes, Path::new("mem")).unwrap(), images);

        let labels = IdxLabels::new((0..count).map(|i| (i % 10) as u8).collect());
        let bytes = labels.encode().unwrap();
        prop_assert_eq!(IdxLabels::decode(&bytes, Path::new("mem")).unwrap(), labels);
    }

    #[test]
    fn sidecar_round_trips(entries in prop::collection::vec(prop::option::of((0u8..12, 1u8..=10)), 0..40)) {
        let sidecar = PerturbationSidecar {
            entries: entries
                .iter()
                .map(|e| match e {
                    None => SidecarEntry::Clean,
                    Some((t, l)) => SidecarEntry::from_bytes([*t, l - 1], 0).unwrap(),
                })
                .collect(),
        };
        let bytes = sidecar.encode();
        prop_assert_eq!(bytes.len(), 2 * entries.len());
        prop_assert_eq!(PerturbationSidecar::decode(&bytes, entries.len(), Path::new("mem")).unwrap(), sidecar);
    }

    #[test]
    fn perturbation_is_deterministic_and_keeps_shape(
        rows in 1usize..12,
        cols in 1usize..12,
        fill in any::<u8>(),
        code in 0u8..12,
        level in 0u8..=10,
        seed in any::<u64>(),
    ) {
        let pixels: Vec<u8> = (0..rows * cols).map(|i| fill.wrapping_add((i * 37) as u8)).collect();
        let img = GrayImage::new(rows, cols, pixels).unwrap();
        let spec = PerturbationSpec::new(PerturbationType::from_code(code).unwrap(), level).unwrap();
        let a = apply_perturbation(&img, spec, seed);
        let b = apply_perturbation(&img, spec, seed);
        prop_assert_eq!(&a, &b);
        prop_assert_eq!((a.rows(), a.cols()), (rows, cols));
        if level == 0 {
            prop_assert_eq!(a, img);
        }
    }
}
