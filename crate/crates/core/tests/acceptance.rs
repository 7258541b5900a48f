//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p softgate-core --test acceptance`.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use softgate::analysis::{
    distance_stats, linear_fit, misclassification_likelihood, DistanceTarget,
    NearestDistanceMatrix, Side,
};
use softgate::clustering::{kmeans, CentroidProvenance, CentroidSet, KMeansParams, Lloyd};
use softgate::idx::{
    image_file_size, image_header, label_file_size, read_flags, read_idx_images, read_idx_labels,
    read_sidecar, write_idx_images, IdxImages, IdxLabels, SidecarEntry,
};
use softgate::perturb::{
    apply_perturbation, generate_perturbed_dataset, GenerateConfig, GenerateMode, GrayImage,
    PerturbationSpec, PerturbationType,
};
use softgate::report::heatmap_color;
use softgate::thresholds::{default_factors, prediction_distance, threshold_sweep};
use softgate::{
    calibrate, gate, gate_matrix, synth_fixture, CalibrationParams, PredictionMatrix,
    PredictionRecord, SynthParams, Verdict,
};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn sha(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

fn calibration_guarantee() -> Outcome {
    let seeds: Vec<u64> = std::iter::once(7).chain(1000..1020).collect();
    let mut slowest = Duration::ZERO;
    let mut boundary_rows = 0;
    for &seed in &seeds {
        let start = Instant::now();
        let m = synth_fixture(&SynthParams {
            k: 10,
            per_class_n: 1000,
            error_rate: 0.02,
            seed,
            ..Default::default()
        })
        .map_err(|e| e.to_string())?;
        let bundle = calibrate(&m, &CalibrationParams::default()).map_err(|e| e.to_string())?;
        let decisions = gate_matrix(&m, &bundle).map_err(|e| e.to_string())?;
        let leaked = m
            .iter()
            .zip(&decisions)
            .filter(|(r, d)| !r.is_correct() && d.accepted())
            .count();
        ensure!(leaked == 0, "seed {seed}: {leaked} incorrect rows accepted");

        // the row that set each threshold sits exactly on it
        for rec in m.iter().filter(|r| !r.is_correct()) {
            let c = rec.pred_label;
            if prediction_distance(rec, &bundle.centroids) == bundle.thresholds.t[c] {
                let d = gate(&rec.probs, &bundle).map_err(|e| e.to_string())?;
                ensure!(
                    d.verdict == Verdict::Defer,
                    "seed {seed}: boundary row accepted"
                );
                boundary_rows += 1;
            }
        }
        let elapsed = start.elapsed();
        ensure!(
            elapsed < Duration::from_secs(5),
            "seed {seed} took {elapsed:?}"
        );
        slowest = slowest.max(elapsed);
    }
    ensure!(
        boundary_rows >= seeds.len(),
        "only {boundary_rows} boundary rows found"
    );
    Ok(format!(
        "{} seeds, 0 incorrect accepted, {boundary_rows} boundary rows deferred, slowest {slowest:.2?}",
        seeds.len()
    ))
}

fn likelihood_normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let k = rng.random_range(2..=12);
        let rows = (0..k)
            .map(|_| (0..k).map(|_| rng.random_range(0.001..3.0)).collect())
            .collect();
        let l = misclassification_likelihood(&NearestDistanceMatrix::from_dense(rows).unwrap())
            .map_err(|e| e.to_string())?;
        for (y, row) in l.values.iter().enumerate() {
            ensure!(row[y] == 0.0, "diagonal not zero");
            ensure!(row.iter().all(|&v| v >= 0.0), "negative entry");
            worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
        }
    }
    ensure!(worst <= 1e-6, "row sum off by {worst}");

    let d = NearestDistanceMatrix::from_dense(vec![
        vec![0.0, 1.0, 2.0],
        vec![1.0, 0.0, 1.0],
        vec![1.0, 1.0, 0.0],
    ])
    .unwrap();
    let l = misclassification_likelihood(&d).map_err(|e| e.to_string())?;
    ensure!(
        l.values[0] == vec![0.0, 2.0 / 3.0, 1.0 / 3.0],
        "hand row gave {:?}",
        l.values[0]
    );

    let reference = [
        0.0669, 0.0858, 0.0608, 0.0632, 0.0821, 0.1724, 0.3313, 0.0763, 0.0612,
    ];
    let sum: f64 = reference.iter().sum();
    ensure!(
        format!("{sum:.4}") == "1.0000",
        "reference row sums to {sum}"
    );
    Ok(format!("100 random matrices, max row error {worst:.1e}; hand row exact; reference row sums to {sum:.4}"))
}

fn idx_bit_exactness() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (count, rows, cols) in [(0usize, 28usize, 28usize), (3, 28, 28), (100, 5, 7)] {
        let pixels: Vec<u8> = (0..count * rows * cols).map(|_| rng.random()).collect();
        let images = IdxImages::new(rows, cols, pixels).unwrap();
        let a = dir.path().join(format!("a-{count}"));
        let b = dir.path().join(format!("b-{count}"));
        write_idx_images(&images, &a).map_err(|e| e.to_string())?;
        let back = read_idx_images(&a).map_err(|e| e.to_string())?;
        ensure!(
            back == images,
            "{count}x{rows}x{cols}: read differs from written"
        );
        write_idx_images(&back, &b).map_err(|e| e.to_string())?;
        let (ha, hb) = (
            sha(&std::fs::read(&a).unwrap()),
            sha(&std::fs::read(&b).unwrap()),
        );
        ensure!(ha == hb, "{count}x{rows}x{cols}: rewrite hash differs");
        let size = std::fs::metadata(&a).unwrap().len();
        ensure!(
            Some(size) == image_file_size(count as u64, rows as u64, cols as u64),
            "size {size}"
        );
    }
    let hex: Vec<String> = image_header(60000, 28, 28)
        .chunks(2)
        .map(|c| format!("{:02x}{:02x}", c[0], c[1]))
        .collect();
    ensure!(
        hex.join(" ") == "0000 0803 0000 ea60 0000 001c 0000 001c",
        "header {}",
        hex.join(" ")
    );
    let sizes = [
        image_file_size(60000, 28, 28).unwrap(),
        label_file_size(60000),
        image_file_size(10000, 28, 28).unwrap(),
        label_file_size(10000),
    ];
    ensure!(
        sizes == [47_040_016, 60_008, 7_840_016, 10_008],
        "sizes {sizes:?}"
    );
    Ok(format!(
        "3 shapes hash-identical; header {}; sizes {sizes:?}",
        hex.join(" ")
    ))
}

/// Plain Lloyd iteration written without reference to the library code.
fn oracle_lloyd(
    points: &[Vec<f64>],
    init: &[Vec<f64>],
    max_iter: usize,
    tol: f64,
) -> Vec<(Vec<usize>, Vec<Vec<f64>>)> {
    let mut centroids = init.to_vec();
    let mut history = Vec::new();
    for _ in 0..max_iter {
        let mut assign = Vec::with_capacity(points.len());
        for p in points {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, c) in centroids.iter().enumerate() {
                let mut d = 0.0;
                for i in 0..p.len() {
                    d += (p[i] - c[i]) * (p[i] - c[i]);
                }
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            assign.push(best);
        }
        let mut shift = 0.0f64;
        let mut next = centroids.clone();
        for j in 0..centroids.len() {
            let members: Vec<&Vec<f64>> = points
                .iter()
                .zip(&assign)
                .filter(|(_, &a)| a == j)
                .map(|(p, _)| p)
                .collect();
            if members.is_empty() {
                continue;
            }
            let mut mean = vec![0.0; points[0].len()];
            for m in &members {
                for i in 0..mean.len() {
                    mean[i] += m[i];
                }
            }
            for v in mean.iter_mut() {
                *v /= members.len() as f64;
            }
            let mut moved = 0.0;
            for i in 0..mean.len() {
                moved += (mean[i] - centroids[j][i]) * (mean[i] - centroids[j][i]);
            }
            shift = shift.max(moved.sqrt());
            next[j] = mean;
        }
        centroids = next;
        history.push((assign, centroids.clone()));
        if shift < tol {
            break;
        }
    }
    history
}

fn kmeans_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = KMeansParams {
        max_iter: 50,
        tol: 1e-9,
    };
    let mut steps_checked = 0;
    for inst in 0..25 {
        let k = rng.random_range(2..=3);
        let dim = rng.random_range(1..=4);
        let n = rng.random_range(k..=100);
        let coarse = inst % 2 == 0;
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..dim)
                    .map(|_| {
                        let v: f64 = rng.random();
                        if coarse {
                            (v * 4.0).floor() / 4.0
                        } else {
                            v
                        }
                    })
                    .collect()
            })
            .collect();
        let init: Vec<Vec<f64>> = (0..k)
            .map(|_| points[rng.random_range(0..n)].clone())
            .collect();
        let expected = oracle_lloyd(&points, &init, params.max_iter, params.tol);
        let init_set = CentroidSet::new(init, CentroidProvenance::Initial).unwrap();

        let mut lloyd = Lloyd::new(&points, &init_set).map_err(|e| e.to_string())?;
        for (i, (assign, cents)) in expected.iter().enumerate() {
            let step = lloyd.step();
            ensure!(
                &step.assignments == assign,
                "instance {inst} iteration {i}: assignments differ"
            );
            ensure!(
                &step.centroids == cents,
                "instance {inst} iteration {i}: centroids differ"
            );
            steps_checked += 1;
        }
        let fit = kmeans(&points, &init_set, &params).map_err(|e| e.to_string())?;
        ensure!(
            fit.iterations == expected.len(),
            "instance {inst}: {} iterations vs {}",
            fit.iterations,
            expected.len()
        );
        ensure!(
            fit.centroids.rows() == expected.last().unwrap().1.as_slice(),
            "instance {inst}: final centroids differ"
        );
    }
    Ok(format!(
        "25 instances, {steps_checked} iterations matched exactly"
    ))
}

fn sweep_monotonicity() -> Outcome {
    let fixtures = [
        SynthParams {
            per_class_n: 500,
            seed: 7,
            ..Default::default()
        },
        SynthParams {
            k: 4,
            per_class_n: 800,
            concentration: 3.0,
            error_rate: 0.1,
            seed: 21,
        },
        SynthParams {
            k: 7,
            per_class_n: 300,
            concentration: 8.0,
            error_rate: 0.05,
            seed: 99,
        },
    ];
    let factors = default_factors();
    let mut checked = 0;
    for (i, p) in fixtures.iter().enumerate() {
        let m = synth_fixture(p).map_err(|e| e.to_string())?;
        let bundle = calibrate(&m, &CalibrationParams::default()).map_err(|e| e.to_string())?;
        let table = threshold_sweep(&m, &bundle, &factors).map_err(|e| e.to_string())?;
        let classes = (0..p.k).map(Some).chain(std::iter::once(None));
        for class in classes {
            let cov: Vec<f64> = table
                .for_class(class)
                .map(|pt| pt.coverage.unwrap_or(0.0))
                .collect();
            ensure!(
                cov.len() == factors.len(),
                "fixture {i} class {class:?}: {} points",
                cov.len()
            );
            ensure!(
                cov.windows(2).all(|w| w[1] <= w[0]),
                "fixture {i} class {class:?}: coverage rises {cov:?}"
            );
            if let Some(c) = class {
                if !bundle.thresholds.is_unbounded(c) {
                    let first = table.for_class(class).next().unwrap();
                    ensure!(
                        first.retained_accuracy == Some(1.0),
                        "fixture {i} class {c}: retained {:?}",
                        first.retained_accuracy
                    );
                }
            }
            checked += 1;
        }
    }
    Ok(format!(
        "{checked} class curves non-increasing; retained accuracy 1 at f=0"
    ))
}

fn stats_oracle() -> Outcome {
    // 20 rows over 3 classes; every (class, side) group is populated
    let rows: [([f64; 3], usize, usize); 20] = [
        ([0.90, 0.05, 0.05], 0, 0),
        ([0.80, 0.10, 0.10], 0, 0),
        ([0.70, 0.20, 0.10], 0, 0),
        ([0.95, 0.03, 0.02], 0, 0),
        ([0.60, 0.30, 0.10], 0, 0),
        ([0.50, 0.40, 0.10], 1, 0),
        ([0.45, 0.35, 0.20], 2, 0),
        ([0.10, 0.85, 0.05], 1, 1),
        ([0.05, 0.90, 0.05], 1, 1),
        ([0.20, 0.70, 0.10], 1, 1),
        ([0.15, 0.75, 0.10], 1, 1),
        ([0.30, 0.60, 0.10], 1, 1),
        ([0.40, 0.55, 0.05], 0, 1),
        ([0.05, 0.50, 0.45], 2, 1),
        ([0.05, 0.05, 0.90], 2, 2),
        ([0.10, 0.10, 0.80], 2, 2),
        ([0.00, 0.25, 0.75], 2, 2),
        ([0.20, 0.20, 0.60], 2, 2),
        ([0.30, 0.20, 0.50], 0, 2),
        ([0.10, 0.42, 0.48], 1, 2),
    ];
    let recs = rows
        .iter()
        .map(|(p, t, q)| PredictionRecord::new(p.to_vec(), *t, *q))
        .collect();
    let m = PredictionMatrix::new(3, recs, "hand").unwrap();
    let centroid_rows = vec![
        vec![0.8, 0.1, 0.1],
        vec![0.1, 0.8, 0.1],
        vec![0.1, 0.1, 0.8],
    ];
    let centroids = CentroidSet::new(centroid_rows.clone(), CentroidProvenance::Initial).unwrap();
    let stats =
        distance_stats(&m, &centroids, DistanceTarget::Predicted).map_err(|e| e.to_string())?;

    let mut groups = 0;
    for class in 0..3 {
        for (side, want_correct) in [(Side::Correct, true), (Side::Incorrect, false)] {
            let mut ds: Vec<f64> = rows
                .iter()
                .filter(|(_, t, q)| *q == class && (t == q) == want_correct)
                .map(|(p, _, _)| {
                    let c = &centroid_rows[class];
                    ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2)).sqrt()
                })
                .collect();
            ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = ds.len();
            let mean = ds.iter().sum::<f64>() / n as f64;
            let median = if n % 2 == 1 {
                ds[n / 2]
            } else {
                (ds[n / 2 - 1] + ds[n / 2]) / 2.0
            };
            let sigma = (ds.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n as f64).sqrt();
            let got = stats
                .get(class, side)
                .ok_or(format!("class {class} {side:?} missing"))?;
            ensure!(
                got.count == n,
                "class {class} {side:?}: count {} vs {n}",
                got.count
            );
            ensure!(
                got.min == ds[0] && got.max == ds[n - 1],
                "class {class} {side:?}: min/max"
            );
            for (name, a, b) in [
                ("mean", got.mean, mean),
                ("median", got.median, median),
                ("sigma", got.sigma, sigma),
            ] {
                ensure!(
                    (a - b).abs() <= 1e-12,
                    "class {class} {side:?} {name}: {a} vs {b}"
                );
            }
            groups += 1;
        }
    }
    let counts: Vec<usize> = (0..3)
        .flat_map(|c| {
            [Side::Correct, Side::Incorrect].map(|s| stats.get(c, s).map_or(0, |g| g.count))
        })
        .collect();
    ensure!(counts == [5, 2, 5, 2, 4, 2], "counts {counts:?}");
    Ok(format!("{groups} groups match the brute-force oracle"))
}

fn reference_fit() -> Outcome {
    let start = Instant::now();
    let mean_correct = [
        0.0166, 0.0154, 0.0370, 0.0352, 0.0295, 0.0298, 0.0154, 0.0302, 0.0619, 0.0399,
    ];
    let correct = [
        5890.0, 6704.0, 5859.0, 6019.0, 5755.0, 5339.0, 5884.0, 6199.0, 5581.0, 5844.0,
    ];
    let incorrect = [
        33.0, 38.0, 99.0, 112.0, 87.0, 82.0, 34.0, 66.0, 270.0, 105.0,
    ];
    let acc: Vec<f64> = correct
        .iter()
        .zip(&incorrect)
        .map(|(c, i)| c / (c + i))
        .collect();
    let fit = linear_fit(&mean_correct, &acc).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure!(fit.slope < 0.0, "slope {}", fit.slope);
    ensure!(fit.r < -0.8, "r {}", fit.r);
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    let near = (fit.slope + 0.806).abs() <= 0.15 && (fit.intercept - 1.009).abs() <= 0.15;
    Ok(format!(
        "slope {:.5} intercept {:.5} r {:.4}; reference (-0.806, 1.009) within 0.15: {}",
        fit.slope,
        fit.intercept,
        fit.r,
        if near { "yes" } else { "no (informational)" }
    ))
}

fn digit_fixture(n: usize, seed: u64) -> (IdxImages, IdxLabels) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = vec![0u8; n * 784];
    for img in pixels.chunks_mut(784) {
        let (r0, c0) = (rng.random_range(4..10), rng.random_range(6..12));
        for r in r0..r0 + 14 {
            for c in c0..c0 + 8 {
                img[r * 28 + c] = rng.random_range(150..=255);
            }
        }
    }
    let labels = (0..n).map(|_| rng.random_range(0..10)).collect();
    (
        IdxImages::new(28, 28, pixels).unwrap(),
        IdxLabels::new(labels),
    )
}

fn file_hashes(files: &softgate::perturb::DatasetFiles) -> Vec<[u8; 32]> {
    [&files.images, &files.labels, &files.levels, &files.flags]
        .iter()
        .map(|p| sha(&std::fs::read(p).unwrap()))
        .collect()
}

fn perturbed_dataset_generation() -> Outcome {
    let (images, labels) = digit_fixture(100, 17);
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |mode: GenerateMode, sub: &str| {
        let cfg = GenerateConfig {
            mode,
            seed: 2024,
            ..Default::default()
        };
        generate_perturbed_dataset(&images, &labels, &cfg, &tmp.path().join(sub))
            .map_err(|e| e.to_string())
    };

    let paired = run(GenerateMode::Paired, "p1")?;
    let f = &paired.files;
    ensure!(
        read_idx_images(&f.images)
            .map_err(|e| e.to_string())?
            .count()
            == 200,
        "paired image count"
    );
    let out_labels = read_idx_labels(&f.labels).map_err(|e| e.to_string())?;
    ensure!(out_labels.count() == 200, "paired label count");
    ensure!(
        (0..100).all(|i| out_labels.labels[2 * i] == labels.labels[i]
            && out_labels.labels[2 * i + 1] == labels.labels[i]),
        "labels not duplicated per pair"
    );
    let flags = read_flags(&f.flags, 200).map_err(|e| e.to_string())?;
    ensure!(
        flags.iter().enumerate().all(|(i, &b)| b == (i % 2) as u8),
        "flags not alternating"
    );
    ensure!(
        std::fs::metadata(&f.levels).unwrap().len() == 400,
        "sidecar size"
    );
    let side = read_sidecar(&f.levels, 200).map_err(|e| e.to_string())?;
    ensure!(
        side.entries
            .iter()
            .enumerate()
            .all(|(i, e)| (i % 2 == 0) == (*e == SidecarEntry::Clean)),
        "sentinels not alternating"
    );
    let again = run(GenerateMode::Paired, "p2")?;
    ensure!(
        file_hashes(&paired.files) == file_hashes(&again.files),
        "paired runs differ"
    );

    let grid = run(GenerateMode::Grid, "g1")?;
    ensure!(
        grid.images_written == 12100,
        "grid wrote {}",
        grid.images_written
    );
    let side = read_sidecar(&grid.files.levels, 12100).map_err(|e| e.to_string())?;
    let mut expected = Vec::with_capacity(12100);
    for _ in 0..100 {
        expected.push(SidecarEntry::Clean);
        for t in 0..12u8 {
            for l in 0..10u8 {
                expected.push(SidecarEntry::Perturbed {
                    type_code: t,
                    level: l,
                });
            }
        }
    }
    ensure!(side.entries == expected, "grid order differs");
    let grid_again = run(GenerateMode::Grid, "g2")?;
    ensure!(
        file_hashes(&grid.files) == file_hashes(&grid_again.files),
        "grid runs differ"
    );

    let big = IdxImages::new(1, 1, vec![7; 60000]).unwrap();
    let big_labels = IdxLabels::new(vec![3; 60000]);
    let out = generate_perturbed_dataset(
        &big,
        &big_labels,
        &GenerateConfig::default(),
        &tmp.path().join("big"),
    )
    .map_err(|e| e.to_string())?;
    let header = std::fs::read(&out.files.images).unwrap()[4..8].to_vec();
    ensure!(
        header == [0x00, 0x01, 0xd4, 0xc0],
        "count bytes {header:02x?}"
    );
    Ok(
        "paired 200/200/200/400, grid 12100 in order, both reproducible, n=60000 count 0x0001d4c0"
            .into(),
    )
}

fn perturbation_monotonicity() -> Outcome {
    let (images, _) = digit_fixture(1, 4);
    let digit = GrayImage::new(28, 28, images.image(0).to_vec()).unwrap();
    let mut lines = Vec::new();
    for t in [
        PerturbationType::GaussianNoise,
        PerturbationType::ShotNoise,
        PerturbationType::ImpulseNoise,
        PerturbationType::Brightness,
    ] {
        let deltas: Vec<f64> = (1..=10)
            .map(|l| {
                digit.mean_abs_delta(&apply_perturbation(
                    &digit,
                    PerturbationSpec::new(t, l).unwrap(),
                    77,
                ))
            })
            .collect();
        ensure!(deltas.windows(2).all(|w| w[1] >= w[0]), "{t}: {deltas:?}");
        lines.push(format!("{t} {:.1}->{:.1}", deltas[0], deltas[9]));
    }
    Ok(lines.join(", "))
}

fn heatmap_sweep() -> Outcome {
    let (xi, zeta) = (0.90, 0.99);
    for i in 0..=1000 {
        let a = i as f64 / 1000.0;
        let want = if a < xi {
            (255, 200, 200)
        } else if a >= zeta {
            (200, 255, 255)
        } else {
            let t = (a - xi) / (zeta - xi);
            let beta = ((1.0 - t) * 255.0 + t * 200.0).floor() as u8;
            let gamma = ((1.0 - t) * 200.0 + t * 255.0).floor() as u8;
            (beta, gamma, gamma)
        };
        let got = heatmap_color(a, xi, zeta).map_err(|e| e.to_string())?;
        ensure!((got.r, got.g, got.b) == want, "a={a}: {got:?} vs {want:?}");
    }
    let at_xi = heatmap_color(xi, xi, zeta).unwrap();
    ensure!(
        (at_xi.r, at_xi.g, at_xi.b) == (255, 200, 200),
        "discontinuous at xi"
    );
    Ok("1001 points exact".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("calibration guarantee", calibration_guarantee),
        ("likelihood normalization", likelihood_normalization),
        ("idx bit-exactness", idx_bit_exactness),
        ("k-means oracle equivalence", kmeans_oracle),
        ("sweep monotonicity", sweep_monotonicity),
        ("stats oracle", stats_oracle),
        ("accuracy-distance fit on reference counts", reference_fit),
        ("perturbed dataset generation", perturbed_dataset_generation),
        ("perturbation monotonicity", perturbation_monotonicity),
        ("heatmap colour sweep", heatmap_sweep),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("PASS  {name}: {detail} [{:.2?}]", start.elapsed()),
            Ok(Err(why)) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL  {name}: panicked");
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
