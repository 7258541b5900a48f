//! Report assembly: a text document with fenced csv blocks, the same tables
//! as standalone csv files, and a long-format csv for plotting.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::analysis::{
    AccuracyFit, ConfusionMatrix, DistanceStats, LikelihoodMatrix, Side, Summary,
};
use crate::error::{Error, Result};
use crate::thresholds::{CalibrationBundle, OverlapRow, OverlapTable, SweepTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ColorTriple {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl ColorTriple {
    pub fn hex(&self) -> String {
        format!("#{:02x}{:02x}{:02x}", self.r, self.g, self.b)
    }
}

pub const DEFAULT_XI: f64 = 0.90;
pub const DEFAULT_ZETA: f64 = 0.99;

/// Background colour for an accuracy cell: light red below `xi`, light cyan
/// from `zeta` up, interpolated (floored) in between.
pub fn heatmap_color(a: f64, xi: f64, zeta: f64) -> Result<ColorTriple> {
    if !(xi < zeta) {
        return Err(Error::invalid(
            "xi",
            format!("need xi < zeta, got {xi} >= {zeta}"),
        ));
    }
    if a < xi {
        return Ok(ColorTriple {
            r: 255,
            g: 200,
            b: 200,
        });
    }
    if a >= zeta {
        return Ok(ColorTriple {
            r: 200,
            g: 255,
            b: 255,
        });
    }
    let t = (a - xi) / (zeta - xi);
    let beta = ((1.0 - t) * 255.0 + t * 200.0).floor() as u8;
    let gamma = ((1.0 - t) * 200.0 + t * 255.0).floor() as u8;
    Ok(ColorTriple {
        r: beta,
        g: gamma,
        b: gamma,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeatmapThresholds {
    pub xi: f64,
    pub zeta: f64,
}

impl Default for HeatmapThresholds {
    fn default() -> Self {
        Self {
            xi: DEFAULT_XI,
            zeta: DEFAULT_ZETA,
        }
    }
}

/// One csv table. Cells are pre-formatted so the document and the csv file
/// carry identical text.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: &'static str,
    pub title: &'static str,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &'static str, title: &'static str, columns: &[&str]) -> Self {
        Self {
            name,
            title,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }
}

/// Shortest round-trip decimal, `inf` for infinities.
pub fn num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        v.to_string()
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Everything a report can contain. Only the calibration bundle is required.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReportInputs<'a> {
    pub bundle: Option<&'a CalibrationBundle>,
    pub stats: Option<&'a DistanceStats>,
    pub confusion: Option<&'a ConfusionMatrix>,
    pub overlap: Option<&'a OverlapTable>,
    pub sweep: Option<&'a SweepTable>,
    pub likelihood: Option<&'a LikelihoodMatrix>,
    pub fit: Option<&'a AccuracyFit>,
    pub heatmap: HeatmapThresholds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub document: String,
    pub tables: Vec<Table>,
    /// Long format: table, class, key, metric, value.
    pub plot: Table,
    pub empty_sections: Vec<&'static str>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Writes `report.md`, one `<table>.csv` per table and `plot_long.csv`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let doc = dir.join("report.md");
        std::fs::write(&doc, &self.document)?;
        written.push(doc);
        for t in self.tables.iter().chain(std::iter::once(&self.plot)) {
            let path = dir.join(format!("{}.csv", t.name));
            std::fs::write(&path, t.to_csv())?;
            written.push(path);
        }
        Ok(written)
    }
}

pub const SECTION_ORDER: [&str; 7] = [
    "calibration",
    "distance_stats",
    "confusion",
    "overlap",
    "sweep",
    "likelihood",
    "fit",
];

pub fn calibration_table(b: &CalibrationBundle) -> Table {
    let mut t = Table::new(
        "calibration",
        "Calibration thresholds",
        &["class", "threshold", "incorrect_count", "unbounded"],
    );
    for c in 0..b.k() {
        t.rows.push(vec![
            c.to_string(),
            num(b.thresholds.t[c]),
            b.thresholds.counts[c].to_string(),
            b.thresholds.is_unbounded(c).to_string(),
        ]);
    }
    t
}

pub fn stats_table(s: &DistanceStats) -> Table {
    let mut t = Table::new(
        "distance_stats",
        "Distance to centroid by class and outcome",
        &[
            "class", "side", "mean", "median", "min", "max", "sigma", "count",
        ],
    );
    for c in 0..s.correct.len() {
        for side in [Side::Correct, Side::Incorrect] {
            let row = match s.get(c, side) {
                Some(Summary {
                    mean,
                    median,
                    min,
                    max,
                    sigma,
                    count,
                }) => vec![
                    num(*mean),
                    num(*median),
                    num(*min),
                    num(*max),
                    num(*sigma),
                    count.to_string(),
                ],
                None => vec![
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    "0".into(),
                ],
            };
            let mut cells = vec![c.to_string(), side.as_str().to_string()];
            cells.extend(row);
            t.rows.push(cells);
        }
    }
    t
}

pub fn confusion_table(cm: &ConfusionMatrix, heat: HeatmapThresholds) -> Result<Table> {
    let k = cm.counts.len();
    let mut cols: Vec<String> = vec!["true".into()];
    cols.extend((0..k).map(|c| format!("pred_{c}")));
    cols.extend(["accuracy".to_string(), "color".to_string()]);
    let mut t = Table {
        name: "confusion",
        title: "Confusion matrix (rows: true class)",
        columns: cols,
        rows: Vec::new(),
    };
    for (y, row) in cm.counts.iter().enumerate() {
        let total: usize = row.iter().sum();
        let acc = (total > 0).then(|| row[y] as f64 / total as f64);
        let mut cells = vec![y.to_string()];
        cells.extend(row.iter().map(|n| n.to_string()));
        cells.push(opt(acc));
        cells.push(match acc {
            Some(a) => heatmap_color(a, heat.xi, heat.zeta)?.hex(),
            None => String::new(),
        });
        t.rows.push(cells);
    }
    Ok(t)
}

pub fn overlap_table(o: &OverlapTable) -> Table {
    let mut t = Table::new(
        "overlap",
        "Correct predictions at or beyond the threshold",
        &["class", "count", "total", "percent"],
    );
    let line = |label: String, r: &OverlapRow| {
        vec![
            label,
            r.count.to_string(),
            r.total.to_string(),
            num(r.percent),
        ]
    };
    for (c, r) in o.per_class.iter().enumerate() {
        t.rows.push(line(c.to_string(), r));
    }
    t.rows.push(line("total".into(), &o.totals));
    t
}

fn class_label(c: Option<usize>) -> String {
    c.map_or_else(|| "all".to_string(), |c| c.to_string())
}

pub fn sweep_table(s: &SweepTable) -> Table {
    let mut t = Table::new(
        "sweep",
        "Coverage and retained accuracy under reduced thresholds",
        &[
            "class",
            "factor",
            "total",
            "covered",
            "covered_correct",
            "coverage",
            "retained_accuracy",
        ],
    );
    for p in &s.points {
        t.rows.push(vec![
            class_label(p.class),
            num(p.factor),
            p.total.to_string(),
            p.covered.to_string(),
            p.covered_correct.to_string(),
            opt(p.coverage),
            opt(p.retained_accuracy),
        ]);
    }
    t
}

pub fn likelihood_table(l: &LikelihoodMatrix, heat: HeatmapThresholds) -> Result<Table> {
    let mut t = Table::new(
        "likelihood",
        "Misclassification likelihood",
        &["true", "mis", "likelihood", "color"],
    );
    for (y, row) in l.values.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            if y != c {
                t.rows.push(vec![
                    y.to_string(),
                    c.to_string(),
                    num(v),
                    heatmap_color(v, heat.xi, heat.zeta)?.hex(),
                ]);
            }
        }
    }
    Ok(t)
}

pub fn fit_table(f: &AccuracyFit) -> Table {
    let mut t = Table::new(
        "fit",
        "Accuracy against mean distance",
        &["class", "mean_distance", "accuracy", "predicted"],
    );
    for &(c, x, y) in &f.points {
        t.rows.push(vec![
            c.to_string(),
            num(x),
            num(y),
            num(f.fit.slope * x + f.fit.intercept),
        ]);
    }
    t
}

fn plot_rows(tables: &[Table]) -> Table {
    let mut plot = Table::new(
        "plot_long",
        "Long-format plot data",
        &["table", "class", "key", "metric", "value"],
    );
    let mut push = |table: &str, class: &str, key: &str, metric: &str, value: &str| {
        if !value.is_empty() {
            plot.rows.push(vec![
                table.into(),
                class.into(),
                key.into(),
                metric.into(),
                value.into(),
            ]);
        }
    };
    for t in tables {
        match t.name {
            "sweep" => {
                for r in &t.rows {
                    push("sweep", &r[0], &r[1], "coverage", &r[5]);
                    push("sweep", &r[0], &r[1], "retained_accuracy", &r[6]);
                }
            }
            "distance_stats" => {
                for r in &t.rows {
                    for (i, m) in ["mean", "median", "min", "max", "sigma"].iter().enumerate() {
                        push("distance_stats", &r[0], &r[1], m, &r[2 + i]);
                    }
                }
            }
            "likelihood" => {
                for r in &t.rows {
                    push("likelihood", &r[0], &r[1], "likelihood", &r[2]);
                }
            }
            "fit" => {
                for r in &t.rows {
                    push("fit", &r[0], &r[1], "accuracy", &r[2]);
                }
            }
            "overlap" => {
                for r in &t.rows {
                    push("overlap", &r[0], "", "percent", &r[3]);
                }
            }
            _ => {}
        }
    }
    plot
}

/// Builds the report. Fails with [`Error::MissingSection`] when no
/// calibration bundle is supplied; other absent inputs become empty sections.
pub fn assemble_report(inputs: &ReportInputs<'_>) -> Result<Report> {
    let bundle = inputs.bundle.ok_or(Error::MissingSection("calibration"))?;
    let heat = inputs.heatmap;
    heatmap_color(0.0, heat.xi, heat.zeta)?;

    let mut tables = vec![calibration_table(bundle)];
    let mut empty_sections = Vec::new();
    macro_rules! section {
        ($name:literal, $input:expr, $build:expr) => {
            match $input {
                Some(v) => tables.push($build(v)?),
                None => empty_sections.push($name),
            }
        };
    }
    section!("distance_stats", inputs.stats, |s| Ok::<_, Error>(
        stats_table(s)
    ));
    section!("confusion", inputs.confusion, |c| confusion_table(c, heat));
    section!("overlap", inputs.overlap, |o| Ok::<_, Error>(
        overlap_table(o)
    ));
    section!("sweep", inputs.sweep, |s| Ok::<_, Error>(sweep_table(s)));
    section!("likelihood", inputs.likelihood, |l| likelihood_table(
        l, heat
    ));
    section!("fit", inputs.fit, |f| Ok::<_, Error>(fit_table(f)));

    let mut warnings = bundle.meta.warnings.clone();
    warnings.extend(
        empty_sections
            .iter()
            .map(|s| format!("section `{s}` has no data")),
    );

    let meta = &bundle.meta;
    let mut doc = String::new();
    let _ = writeln!(doc, "# softgate report\n");
    let _ = writeln!(doc, "- source: {}", meta.source_tag);
    let _ = writeln!(doc, "- calibration rows: {}", meta.calibration_rows);
    let _ = writeln!(doc, "- correct rows: {}", meta.correct_rows);
    let _ = writeln!(doc, "- incorrect rows: {}", meta.incorrect_rows);
    let _ = writeln!(doc, "- centroids: {}", bundle.centroids.provenance());
    if let Some(it) = meta.kmeans_iterations {
        let _ = writeln!(doc, "- k-means iterations: {it}");
    }
    let _ = writeln!(
        doc,
        "- unbounded classes: {:?}",
        bundle.thresholds.unbounded
    );
    let _ = writeln!(
        doc,
        "- heatmap thresholds: xi={} zeta={}",
        num(heat.xi),
        num(heat.zeta)
    );
    if let Some(f) = inputs.fit {
        let _ = writeln!(
            doc,
            "- fit ({:?}): slope={} intercept={} r={}",
            f.aggregation,
            num(f.fit.slope),
            num(f.fit.intercept),
            num(f.fit.r)
        );
    }
    for w in &warnings {
        let _ = writeln!(doc, "- warning: {w}");
    }

    for name in SECTION_ORDER {
        let _ = writeln!(doc);
        match tables.iter().find(|t| t.name == name) {
            Some(t) => {
                let _ = writeln!(doc, "## {} ({})\n", t.title, t.name);
                let _ = write!(doc, "```csv\n{}```\n", t.to_csv());
            }
            None => {
                let _ = writeln!(doc, "## {name}\n\n(no data)");
            }
        }
    }

    let plot = plot_rows(&tables);
    Ok(Report {
        document: doc,
        tables,
        plot,
        empty_sections,
        warnings,
    })
}
