use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use softgate::analysis::{
    accuracy_distance_fit, aggregate_likelihoods, confusion_matrix, distance_stats,
    misclassification_likelihood, nearest_distance_matrix, perturbation_distance_trends,
    DistanceTarget, FitAggregation, LevelSeries, DEFAULT_SIGMA_THRESHOLD,
};
use softgate::idx::{inspect, read_idx_images, read_idx_labels};
use softgate::perturb::{
    generate_perturbed_dataset, GenerateConfig, GenerateMode, PerturbationType, Split, MAX_LEVEL,
};
use softgate::report::{
    assemble_report, calibration_table, confusion_table, fit_table, num, opt, overlap_table,
    stats_table, sweep_table, HeatmapThresholds, ReportInputs, Table, DEFAULT_XI, DEFAULT_ZETA,
};
use softgate::thresholds::{default_factors, threshold_sweep};
use softgate::{
    calibrate, gate_matrix, overlap_stats, read_matrix, synth_fixture, validate, write_matrix,
    CalibrationBundle, CalibrationParams, KMeansParams, MatrixFormat, PredictionMatrix,
    SynthParams, UnboundedPolicy,
};

/// Seed used when `--seed` is not given.
const DEFAULT_SEED: u64 = 7;

#[derive(Parser)]
#[command(
    name = "softgate",
    version,
    about = "Accept or defer classifier predictions by softmax distance to class centroids"
)]
struct Cli {
    /// Print a JSON envelope instead of csv
    #[arg(long, global = true)]
    json: bool,

    /// Seed for every random choice (synth, perturb)
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check probability mass, ranges and argmax consistency of a prediction matrix
    Validate {
        #[command(flatten)]
        input: MatrixIn,
        /// Allowed deviation of each row's probability sum from 1
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Write a synthetic prediction matrix
    Synth {
        /// Output path (.smx or .csv)
        #[arg(long)]
        out: PathBuf,
        /// Number of classes
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Rows per true class
        #[arg(long, default_value_t = 1000)]
        per_class: usize,
        /// Peakedness of the winning class
        #[arg(long, default_value_t = 20.0)]
        concentration: f64,
        /// Fraction of rows predicted wrong
        #[arg(long, default_value_t = 0.02)]
        error_rate: f64,
        /// Output format; inferred from the extension when absent
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// Build centroids and thresholds from a calibration matrix
    Calibrate {
        #[command(flatten)]
        input: MatrixIn,
        /// Where to write the calibration bundle (JSON)
        #[arg(long)]
        out: PathBuf,
        /// Also write the centroids as csv
        #[arg(long)]
        centroids_out: Option<PathBuf>,
        /// Centroid provenance
        #[arg(long, value_enum, default_value_t = CentroidsArg::Fitted)]
        centroids: CentroidsArg,
        /// Threshold for classes without incorrect predictions
        #[arg(long, value_enum, default_value_t = FallbackArg::AcceptAlways)]
        fallback: FallbackArg,
        /// K-Means iteration cap
        #[arg(long, default_value_t = KMeansParams::default().max_iter)]
        max_iter: usize,
        /// K-Means convergence tolerance on centroid movement
        #[arg(long, default_value_t = KMeansParams::default().tol)]
        kmeans_tol: f64,
    },
    /// Accept or defer every row of a matrix
    Gate {
        #[command(flatten)]
        bundle: BundleIn,
        #[command(flatten)]
        input: MatrixIn,
    },
    /// Count correct predictions at or beyond their class threshold
    Overlap {
        #[command(flatten)]
        bundle: BundleIn,
        #[command(flatten)]
        input: MatrixIn,
    },
    /// Coverage and retained accuracy under scaled-down thresholds
    Sweep {
        #[command(flatten)]
        bundle: BundleIn,
        #[command(flatten)]
        input: MatrixIn,
        /// Comma-separated scale factors in [0, 1)
        #[arg(long, value_delimiter = ',', value_parser = parse_factor)]
        factors: Option<Vec<f64>>,
    },
    /// Distance summary per class for correct and incorrect rows
    Stats {
        #[command(flatten)]
        bundle: BundleIn,
        #[command(flatten)]
        input: MatrixIn,
        /// Which centroid distances are measured to
        #[arg(long, value_enum, default_value_t = TargetArg::Predicted)]
        target: TargetArg,
    },
    /// Confusion matrix, rows by true class
    Confusion {
        #[command(flatten)]
        input: MatrixIn,
    },
    /// Nearest-distance and misclassification-likelihood matrices
    #[command(group(ArgGroup::new("source").required(true).args(["input", "level"])))]
    Likelihood {
        #[command(flatten)]
        bundle: BundleIn,
        /// Single prediction matrix
        #[arg(long = "in", value_name = "PATH")]
        input: Option<PathBuf>,
        /// Matrix for one perturbation level, as LEVEL=PATH; repeatable
        #[arg(long, value_parser = parse_level)]
        level: Vec<(usize, PathBuf)>,
        /// Pairs whose spread across levels is below this count as consistent
        #[arg(long, default_value_t = DEFAULT_SIGMA_THRESHOLD)]
        sigma_threshold: f64,
    },
    /// Mean distances per class across perturbation levels
    Trend {
        #[command(flatten)]
        bundle: BundleIn,
        /// Matrix for one perturbation level, as LEVEL=PATH; repeatable
        #[arg(long, value_parser = parse_level, required = true)]
        level: Vec<(usize, PathBuf)>,
    },
    /// Linear fit of per-class accuracy against mean distance
    Fit {
        #[command(flatten)]
        bundle: BundleIn,
        #[command(flatten)]
        input: MatrixIn,
        /// Rows used for the mean distance per class
        #[arg(long, value_enum, default_value_t = AggregationArg::CorrectOnly)]
        aggregation: AggregationArg,
    },
    /// IDX file utilities
    Idx {
        #[command(subcommand)]
        command: IdxCommand,
    },
    /// Write a perturbed copy of an IDX image set
    Perturb {
        /// Source IDX image file
        #[arg(long)]
        images: PathBuf,
        /// Source IDX label file
        #[arg(long)]
        labels: PathBuf,
        /// Output directory
        #[arg(long, env = "SOFTGATE_OUT_DIR")]
        out_dir: PathBuf,
        /// One random perturbation per image, or every type and level
        #[arg(long, value_enum, default_value_t = ModeArg::Paired)]
        mode: ModeArg,
        /// Comma-separated perturbation names or codes (default: all)
        #[arg(long, value_delimiter = ',', value_parser = parse_type)]
        types: Option<Vec<PerturbationType>>,
        /// Comma-separated levels 1..10 (default: all)
        #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u8).range(1..=MAX_LEVEL as i64))]
        levels: Option<Vec<u8>>,
        /// Selects the output file names
        #[arg(long, value_enum, default_value_t = SplitArg::Train)]
        split: SplitArg,
    },
    /// Assemble the full report for a matrix and bundle
    Report {
        #[command(flatten)]
        bundle: BundleIn,
        #[command(flatten)]
        input: MatrixIn,
        /// Directory for report.md and the csv tables; prints the document when absent
        #[arg(long, env = "SOFTGATE_OUT_DIR")]
        out_dir: Option<PathBuf>,
        /// Accuracy below this is coloured red
        #[arg(long, default_value_t = DEFAULT_XI)]
        xi: f64,
        /// Accuracy from this up is coloured cyan
        #[arg(long, default_value_t = DEFAULT_ZETA)]
        zeta: f64,
        /// Comma-separated sweep factors in [0, 1)
        #[arg(long, value_delimiter = ',', value_parser = parse_factor)]
        factors: Option<Vec<f64>>,
        /// Which centroid distances are measured to
        #[arg(long, value_enum, default_value_t = TargetArg::Predicted)]
        target: TargetArg,
        /// Rows used for the mean distance per class
        #[arg(long, value_enum, default_value_t = AggregationArg::CorrectOnly)]
        aggregation: AggregationArg,
    },
}

#[derive(Subcommand)]
enum IdxCommand {
    /// Print header fields and expected vs actual size
    Inspect {
        /// IDX files to inspect
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct MatrixIn {
    /// Prediction matrix (.smx binary, or .csv)
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Override format detection by extension
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Expected class count; mismatches are an error
    #[arg(long)]
    k: Option<usize>,
}

impl MatrixIn {
    fn load(&self) -> Result<PredictionMatrix> {
        load_matrix(&self.input, self.format, self.k)
    }
}

#[derive(Args)]
struct BundleIn {
    /// Calibration bundle written by `calibrate`
    #[arg(long, value_name = "PATH")]
    bundle: PathBuf,
}

impl BundleIn {
    fn load(&self) -> Result<CalibrationBundle> {
        CalibrationBundle::load(&self.bundle)
            .with_context(|| format!("loading {}", self.bundle.display()))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Smx,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum CentroidsArg {
    /// Class means refined by K-Means
    Fitted,
    /// Plain class means
    Initial,
}

#[derive(Clone, Copy, ValueEnum)]
enum FallbackArg {
    AcceptAlways,
    MaxCorrect,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Predicted,
    True,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggregationArg {
    CorrectOnly,
    AllRows,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Paired,
    Grid,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

fn parse_factor(s: &str) -> Result<f64, String> {
    let f: f64 = s.trim().parse().map_err(|e| format!("{e}"))?;
    if (0.0..1.0).contains(&f) {
        Ok(f)
    } else {
        Err(format!("{f} is outside [0, 1)"))
    }
}

fn parse_level(s: &str) -> Result<(usize, PathBuf), String> {
    let (level, path) = s.split_once('=').ok_or("expected LEVEL=PATH")?;
    let level = level
        .trim()
        .parse()
        .map_err(|e| format!("bad level `{level}`: {e}"))?;
    Ok((level, PathBuf::from(path)))
}

fn parse_type(s: &str) -> Result<PerturbationType, String> {
    s.parse().map_err(|e: softgate::Error| e.to_string())
}

fn matrix_format(path: &Path, format: Option<FormatArg>) -> MatrixFormat {
    match format {
        Some(FormatArg::Smx) => MatrixFormat::Smx,
        Some(FormatArg::Csv) => MatrixFormat::Csv,
        None => MatrixFormat::from_path(path),
    }
}

fn load_matrix(
    path: &Path,
    format: Option<FormatArg>,
    k: Option<usize>,
) -> Result<PredictionMatrix> {
    let m = read_matrix(path, matrix_format(path, format))
        .with_context(|| format!("reading {}", path.display()))?;
    if let Some(k) = k {
        if m.k() != k {
            bail!("{}: has k = {}, expected {k}", path.display(), m.k());
        }
    }
    Ok(m)
}

fn load_levels(levels: &[(usize, PathBuf)]) -> Result<Vec<(usize, PredictionMatrix)>> {
    levels
        .iter()
        .map(|(l, p)| Ok((*l, load_matrix(p, None, None)?)))
        .collect()
}

/// What a command produced: csv for stdout, structured data for `--json`.
struct Outcome {
    csv: String,
    data: Value,
    notes: Vec<String>,
    failed: bool,
}

impl Outcome {
    fn new(csv: String, data: Value) -> Self {
        Self {
            csv,
            data,
            notes: Vec::new(),
            failed: false,
        }
    }

    fn table(t: &Table, data: Value) -> Self {
        Self::new(t.to_csv(), data)
    }
}

fn run(cli: &Cli) -> Result<Outcome> {
    Ok(match &cli.command {
        Command::Validate { input, tol } => {
            let m = input.load()?;
            let report = validate(&m, *tol);
            let mut t = Table::new("violations", "", &["row", "violation"]);
            for v in &report.violations {
                t.rows.push(vec![v.row.to_string(), v.to_string()]);
            }
            let mut out = Outcome::table(&t, serde_json::to_value(&report)?);
            out.failed = !report.is_valid();
            out.notes.push(format!(
                "{} rows, k = {}, {} violations at tolerance {tol}",
                m.len(),
                m.k(),
                report.violations.len()
            ));
            out
        }
        Command::Synth {
            out,
            k,
            per_class,
            concentration,
            error_rate,
            format,
        } => {
            let m = synth_fixture(&SynthParams {
                k: *k,
                per_class_n: *per_class,
                concentration: *concentration,
                error_rate: *error_rate,
                seed: cli.seed,
            })?;
            write_matrix(&m, out, matrix_format(out, *format))?;
            let incorrect = m.iter().filter(|r| !r.is_correct()).count();
            let mut t = Table::new("synth", "", &["path", "rows", "k", "incorrect", "seed"]);
            t.rows.push(vec![
                out.display().to_string(),
                m.len().to_string(),
                m.k().to_string(),
                incorrect.to_string(),
                cli.seed.to_string(),
            ]);
            Outcome::table(
                &t,
                json!({"path": out, "rows": m.len(), "k": m.k(), "incorrect": incorrect, "seed": cli.seed}),
            )
        }
        Command::Calibrate {
            input,
            out,
            centroids_out,
            centroids,
            fallback,
            max_iter,
            kmeans_tol,
        } => {
            let m = input.load()?;
            let params = CalibrationParams {
                use_fitted: matches!(centroids, CentroidsArg::Fitted),
                kmeans: KMeansParams {
                    max_iter: *max_iter,
                    tol: *kmeans_tol,
                },
                unbounded_policy: match fallback {
                    FallbackArg::AcceptAlways => UnboundedPolicy::AcceptAlways,
                    FallbackArg::MaxCorrect => UnboundedPolicy::MaxCorrectDistance,
                },
            };
            let bundle = calibrate(&m, &params)?;
            bundle.save(out)?;
            if let Some(path) = centroids_out {
                std::fs::write(path, bundle.centroids.to_csv_string())?;
            }
            let mut o = Outcome::table(
                &calibration_table(&bundle),
                json!({
                    "bundle": out,
                    "thresholds": bundle.thresholds,
                    "meta": bundle.meta,
                }),
            );
            o.notes = bundle.meta.warnings.clone();
            o
        }
        Command::Gate { bundle, input } => {
            let b = bundle.load()?;
            let m = input.load()?;
            let decisions = gate_matrix(&m, &b)?;
            let mut t = Table::new(
                "gate",
                "",
                &[
                    "row",
                    "pred",
                    "distance",
                    "threshold",
                    "verdict",
                    "unbounded",
                    "true",
                    "correct",
                ],
            );
            let mut accepted_incorrect = 0;
            for (i, (d, r)) in decisions.iter().zip(m.iter()).enumerate() {
                if d.accepted() && !r.is_correct() {
                    accepted_incorrect += 1;
                }
                t.rows.push(vec![
                    i.to_string(),
                    d.pred_label.to_string(),
                    num(d.distance),
                    num(d.threshold_used),
                    if d.accepted() { "accept" } else { "defer" }.to_string(),
                    d.unbounded.to_string(),
                    r.true_label.to_string(),
                    r.is_correct().to_string(),
                ]);
            }
            let accepted = decisions.iter().filter(|d| d.accepted()).count();
            let summary = json!({
                "rows": m.len(),
                "accepted": accepted,
                "deferred": m.len() - accepted,
                "accepted_incorrect": accepted_incorrect,
            });
            let mut o = Outcome::table(&t, json!({"summary": summary, "decisions": decisions}));
            o.notes.push(format!(
                "{accepted} accepted, {} deferred, {accepted_incorrect} accepted but incorrect",
                m.len() - accepted
            ));
            o
        }
        Command::Overlap { bundle, input } => {
            let o = overlap_stats(&input.load()?, &bundle.load()?)?;
            Outcome::table(&overlap_table(&o), serde_json::to_value(&o)?)
        }
        Command::Sweep {
            bundle,
            input,
            factors,
        } => {
            let factors = factors.clone().unwrap_or_else(default_factors);
            let s = threshold_sweep(&input.load()?, &bundle.load()?, &factors)?;
            Outcome::table(&sweep_table(&s), serde_json::to_value(&s)?)
        }
        Command::Stats {
            bundle,
            input,
            target,
        } => {
            let s = distance_stats(&input.load()?, &bundle.load()?.centroids, target.into())?;
            Outcome::table(&stats_table(&s), serde_json::to_value(&s)?)
        }
        Command::Confusion { input } => {
            let cm = confusion_matrix(&input.load()?);
            Outcome::table(
                &confusion_table(&cm, HeatmapThresholds::default())?,
                serde_json::to_value(&cm)?,
            )
        }
        Command::Likelihood {
            bundle,
            input,
            level,
            sigma_threshold,
        } => {
            let b = bundle.load()?;
            let levels = match input {
                Some(p) => vec![(0, load_matrix(p, None, None)?)],
                None => load_levels(level)?,
            };
            likelihood(&b, levels, *sigma_threshold, input.is_none())?
        }
        Command::Trend { bundle, level } => {
            let tr = perturbation_distance_trends(&load_levels(level)?, &bundle.load()?.centroids)?;
            let mut t = Table::new(
                "trend",
                "",
                &[
                    "level",
                    "class",
                    "true_mean",
                    "mis_mean",
                    "true_delta",
                    "mis_delta",
                ],
            );
            for (p, l) in tr.series.levels.iter().enumerate() {
                for c in 0..l.true_mean.len() {
                    let delta = |d: &Vec<Vec<Option<f64>>>| p.checked_sub(1).and_then(|q| d[q][c]);
                    t.rows.push(vec![
                        p.to_string(),
                        c.to_string(),
                        opt(l.true_mean[c]),
                        opt(l.mis_mean[c]),
                        opt(delta(&tr.true_deltas)),
                        opt(delta(&tr.mis_deltas)),
                    ]);
                }
            }
            let mut o = Outcome::table(&t, serde_json::to_value(&tr)?);
            o.notes.push(format!(
                "direction of true-class distance per class: {:?}",
                tr.true_sign
            ));
            o
        }
        Command::Fit {
            bundle,
            input,
            aggregation,
        } => {
            let f = accuracy_distance_fit(
                &input.load()?,
                &bundle.load()?.centroids,
                aggregation.into(),
            )?;
            let mut o = Outcome::table(&fit_table(&f), serde_json::to_value(&f)?);
            o.notes.push(format!(
                "slope {} intercept {} r {}",
                num(f.fit.slope),
                num(f.fit.intercept),
                num(f.fit.r)
            ));
            o
        }
        Command::Idx {
            command: IdxCommand::Inspect { paths },
        } => {
            let mut t = Table::new(
                "inspect",
                "",
                &[
                    "path",
                    "magic",
                    "kind",
                    "count",
                    "rows",
                    "cols",
                    "expected_size",
                    "actual_size",
                    "status",
                ],
            );
            let mut reports = Vec::new();
            for p in paths {
                let r = inspect(p).with_context(|| format!("opening {}", p.display()))?;
                let s = |v: Option<u32>| v.map(|v| v.to_string()).unwrap_or_default();
                t.rows.push(vec![
                    p.display().to_string(),
                    s(r.magic),
                    r.kind
                        .map(|k| format!("{k:?}").to_lowercase())
                        .unwrap_or_default(),
                    s(r.count),
                    s(r.rows),
                    s(r.cols),
                    r.expected_size.map(|v| v.to_string()).unwrap_or_default(),
                    r.actual_size.to_string(),
                    r.problem.clone().unwrap_or_else(|| "ok".into()),
                ]);
                reports.push(r);
            }
            let mut o = Outcome::table(&t, serde_json::to_value(&reports)?);
            o.failed = reports.iter().any(|r| !r.is_ok());
            o
        }
        Command::Perturb {
            images,
            labels,
            out_dir,
            mode,
            types,
            levels,
            split,
        } => {
            let imgs =
                read_idx_images(images).with_context(|| format!("reading {}", images.display()))?;
            let labs =
                read_idx_labels(labels).with_context(|| format!("reading {}", labels.display()))?;
            let cfg = GenerateConfig {
                mode: match mode {
                    ModeArg::Paired => GenerateMode::Paired,
                    ModeArg::Grid => GenerateMode::Grid,
                },
                seed: cli.seed,
                types: types
                    .clone()
                    .unwrap_or_else(|| PerturbationType::ALL.to_vec()),
                levels: levels.clone().unwrap_or_else(|| (1..=MAX_LEVEL).collect()),
                split: match split {
                    SplitArg::Train => Split::Train,
                    SplitArg::Test => Split::Test,
                },
            };
            let s = generate_perturbed_dataset(&imgs, &labs, &cfg, out_dir)?;
            let mut t = Table::new("perturb", "", &["file", "path", "records"]);
            for (name, path) in [
                ("images", &s.files.images),
                ("labels", &s.files.labels),
                ("levels", &s.files.levels),
                ("flags", &s.files.flags),
            ] {
                t.rows.push(vec![
                    name.into(),
                    path.display().to_string(),
                    s.images_written.to_string(),
                ]);
            }
            Outcome::table(&t, json!({"summary": s, "config": cfg}))
        }
        Command::Report {
            bundle,
            input,
            out_dir,
            xi,
            zeta,
            factors,
            target,
            aggregation,
        } => {
            let b = bundle.load()?;
            let m = input.load()?;
            report(
                &b,
                &m,
                out_dir.as_deref(),
                HeatmapThresholds {
                    xi: *xi,
                    zeta: *zeta,
                },
                factors.clone(),
                *target,
                *aggregation,
            )?
        }
    })
}

fn likelihood(
    b: &CalibrationBundle,
    levels: Vec<(usize, PredictionMatrix)>,
    sigma_threshold: f64,
    aggregate: bool,
) -> Result<Outcome> {
    let mut t = Table::new(
        "likelihood",
        "",
        &["matrix", "level", "true", "mis", "value"],
    );
    let mut per_level = Vec::new();
    let mut series = Vec::new();
    let mut notes = Vec::new();
    for (level, m) in &levels {
        let d = nearest_distance_matrix(m, &b.centroids)?;
        if !d.missing_rows.is_empty() {
            notes.push(format!(
                "level {level}: no rows for classes {:?}",
                d.missing_rows
            ));
        }
        for (y, row) in d.cells.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                if y != c {
                    t.rows.push(vec![
                        "nearest_distance".into(),
                        level.to_string(),
                        y.to_string(),
                        c.to_string(),
                        opt(*v),
                    ]);
                }
            }
        }
        let l = misclassification_likelihood(&d).with_context(|| format!("level {level}"))?;
        for (y, row) in l.values.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                if y != c {
                    t.rows.push(vec![
                        "likelihood".into(),
                        level.to_string(),
                        y.to_string(),
                        c.to_string(),
                        num(*v),
                    ]);
                }
            }
        }
        per_level.push(json!({"level": level, "nearest_distance": d, "likelihood": l}));
        series.push((*level, l));
    }
    let mut data = json!({"levels": per_level});
    if aggregate {
        let agg = aggregate_likelihoods(&LevelSeries::from_pairs(series)?, sigma_threshold)?;
        for (name, grid) in [("mean", &agg.mean), ("sigma", &agg.sigma)] {
            for (y, row) in grid.iter().enumerate() {
                for (c, v) in row.iter().enumerate() {
                    if y != c {
                        t.rows.push(vec![
                            name.into(),
                            String::new(),
                            y.to_string(),
                            c.to_string(),
                            num(*v),
                        ]);
                    }
                }
            }
        }
        if let Some(top) = agg.top_pairs.first() {
            notes.push(format!(
                "top pair: true {} as {} (mean {}, sigma {})",
                top.true_class,
                top.mis_class,
                num(top.mean),
                num(top.sigma)
            ));
        }
        notes.push(format!(
            "{} pairs with sigma below {}",
            agg.consistent_pairs.len(),
            num(sigma_threshold)
        ));
        data["aggregate"] = serde_json::to_value(&agg)?;
    }
    let mut o = Outcome::table(&t, data);
    o.notes = notes;
    Ok(o)
}

fn report(
    b: &CalibrationBundle,
    m: &PredictionMatrix,
    out_dir: Option<&Path>,
    heatmap: HeatmapThresholds,
    factors: Option<Vec<f64>>,
    target: TargetArg,
    aggregation: AggregationArg,
) -> Result<Outcome> {
    let mut notes = Vec::new();
    let stats = distance_stats(m, &b.centroids, target.into())?;
    let confusion = confusion_matrix(m);
    let overlap = overlap_stats(m, b)?;
    let sweep = threshold_sweep(m, b, &factors.unwrap_or_else(default_factors))?;
    let likelihood = nearest_distance_matrix(m, &b.centroids)
        .and_then(|d| misclassification_likelihood(&d))
        .map_err(|e| notes.push(format!("likelihood skipped: {e}")))
        .ok();
    let fit = accuracy_distance_fit(m, &b.centroids, aggregation.into())
        .map_err(|e| notes.push(format!("fit skipped: {e}")))
        .ok();
    let r = assemble_report(&ReportInputs {
        bundle: Some(b),
        stats: Some(&stats),
        confusion: Some(&confusion),
        overlap: Some(&overlap),
        sweep: Some(&sweep),
        likelihood: likelihood.as_ref(),
        fit: fit.as_ref(),
        heatmap,
    })?;
    notes.extend(r.warnings.iter().cloned());
    let (csv, files) = match out_dir {
        Some(dir) => {
            let files = r.write_to_dir(dir)?;
            let mut t = Table::new("files", "", &["path"]);
            t.rows
                .extend(files.iter().map(|p| vec![p.display().to_string()]));
            (t.to_csv(), files)
        }
        None => (r.document.clone(), Vec::new()),
    };
    let mut o = Outcome::new(
        csv,
        json!({"files": files, "empty_sections": r.empty_sections, "warnings": r.warnings}),
    );
    o.notes = notes;
    Ok(o)
}

impl From<&TargetArg> for DistanceTarget {
    fn from(t: &TargetArg) -> Self {
        match t {
            TargetArg::Predicted => DistanceTarget::Predicted,
            TargetArg::True => DistanceTarget::True,
        }
    }
}

impl From<TargetArg> for DistanceTarget {
    fn from(t: TargetArg) -> Self {
        (&t).into()
    }
}

impl From<&AggregationArg> for FitAggregation {
    fn from(a: &AggregationArg) -> Self {
        match a {
            AggregationArg::CorrectOnly => FitAggregation::CorrectOnly,
            AggregationArg::AllRows => FitAggregation::AllRows,
        }
    }
}

impl From<AggregationArg> for FitAggregation {
    fn from(a: AggregationArg) -> Self {
        (&a).into()
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Validate { .. } => "validate",
        Command::Synth { .. } => "synth",
        Command::Calibrate { .. } => "calibrate",
        Command::Gate { .. } => "gate",
        Command::Overlap { .. } => "overlap",
        Command::Sweep { .. } => "sweep",
        Command::Stats { .. } => "stats",
        Command::Confusion { .. } => "confusion",
        Command::Likelihood { .. } => "likelihood",
        Command::Trend { .. } => "trend",
        Command::Fit { .. } => "fit",
        Command::Idx { .. } => "idx inspect",
        Command::Perturb { .. } => "perturb",
        Command::Report { .. } => "report",
    }
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = command_name(&cli.command);
    match run(&cli) {
        Ok(out) => {
            if cli.json {
                let envelope = json!({
                    "command": name,
                    "status": if out.failed { "failed" } else { "ok" },
                    "notes": out.notes,
                    "data": out.data,
                });
                emit(&format!("{envelope:#}\n"));
            } else {
                emit(&out.csv);
                for n in &out.notes {
                    eprintln!("note: {n}");
                }
            }
            if out.failed {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            if cli.json {
                let envelope =
                    json!({"command": name, "status": "error", "error": format!("{e:#}")});
                emit(&format!("{envelope:#}\n"));
            }
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
