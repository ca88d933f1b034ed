//! Command-line front end: batch classification, the validation experiment,
//! nearest-medoid prediction from a saved index, and corpus generation.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::clustering::{kmeans, silhouette_matrix, silhouette_vectors};
use crate::curve_fit::{classify_by_fit, FitConfig, FitResult};
use crate::knn::MedoidIndex;
use crate::label::CurveLabel;
use crate::series::{ingest_csv, preprocess, write_csv, NormalizedSeries, RawSeries, SeriesId};
use crate::synth::{generate_corpus, ClassMix, CorpusSpec};
use crate::validation::{predict, run_experiment, ExperimentConfig, ExperimentOutput, ValidationError};

/// Fewest usable series `validate` accepts.
pub const MIN_VALIDATE_SERIES: usize = 20;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Internal(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Internal(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(e.into())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "popcurve",
    version,
    about = "Classify population time series by curve fitting and by DTW clustering"
)]
pub struct Cli {
    /// Worker threads for fitting and DTW (default: all cores)
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Label every species column by rules and curve fitting
    Classify(ClassifyArgs),
    /// Run the full two-method agreement experiment
    Validate(ValidateArgs),
    /// Label series by nearest medoid using a saved medoids.json
    Predict(PredictArgs),
    /// Write a labeled synthetic corpus
    Synth(SynthArgs),
}

/// Experiment settings. Unset flags fall back to the config file, then to
/// the built-in defaults.
#[derive(Args, Debug, Default, Clone)]
pub struct ExperimentFlags {
    /// key=value file with any of the settings below
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub sim_length: Option<usize>,
    #[arg(long)]
    pub split_ratio: Option<f64>,
    #[arg(long)]
    pub cluster_threshold: Option<f64>,
    #[arg(long)]
    pub purity_threshold: Option<f64>,
    #[arg(long)]
    pub knn_threshold: Option<f64>,
    #[arg(long)]
    pub fit_error_threshold: Option<f64>,
    #[arg(long)]
    pub dying_epsilon: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    /// Directory of simulation CSV exports
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset name recorded with every series (default: input dir name)
    #[arg(long)]
    pub dataset_tag: Option<String>,
    /// Exit with a data error if any file or series was skipped
    #[arg(long)]
    pub strict: bool,
    #[command(flatten)]
    pub experiment: ExperimentFlags,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub dataset_tag: Option<String>,
    #[arg(long)]
    pub strict: bool,
    /// One SVG per cluster: members thin, medoid thick
    #[arg(long)]
    pub plots: bool,
    /// Silhouette scores of k-means (k = 2..=10) and of the dendrogram cut
    #[arg(long)]
    pub silhouette: bool,
    /// Write the training DTW matrix as distances.csv
    #[arg(long)]
    pub export_distances: bool,
    #[command(flatten)]
    pub experiment: ExperimentFlags,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    pub input: PathBuf,
    /// medoids.json written by `validate`
    #[arg(long)]
    pub medoids: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub dataset_tag: Option<String>,
    #[arg(long)]
    pub strict: bool,
    #[command(flatten)]
    pub experiment: ExperimentFlags,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Series per label
    #[arg(long, default_value_t = 100, conflicts_with = "table1_mix")]
    pub per_class: usize,
    /// Split --total by the class mix of the combined user corpus
    #[arg(long)]
    pub table1_mix: bool,
    #[arg(long, default_value_t = 971, requires = "table1_mix")]
    pub total: usize,
    /// Gaussian noise sigma on the unit-scale curve
    #[arg(long, default_value_t = 0.02)]
    pub noise: f64,
    #[arg(long, default_value_t = 400)]
    pub length: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub species_per_file: usize,
    #[arg(long, default_value = "synth")]
    pub dataset_tag: String,
}

/// Provenance of a run. Reports embed it without timings so reruns are
/// byte-identical; `run_manifest.json` carries the timings.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub inputs: Vec<String>,
    pub config: serde_json::Value,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<Skipped>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<BTreeMap<String, f64>>,
}

impl RunManifest {
    fn new(command: &'static str, inputs: Vec<String>, config: serde_json::Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            inputs,
            config,
            skipped: Vec::new(),
            timings: None,
        }
    }

    fn without_timings(&self) -> Self {
        Self {
            timings: None,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Skipped {
    pub source: String,
    pub reason: String,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(jobs);
    }
    let pool = pool.build().map_err(|e| CliError::Internal(e.into()))?;
    pool.install(|| match cli.command {
        Command::Classify(a) => cmd_classify(&a),
        Command::Validate(a) => cmd_validate(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Synth(a) => cmd_synth(&a),
    })
}

/// Parses a `key = value` file; `#` starts a comment. Keys may use `-` or
/// `_` between words.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("config line {}: expected key=value", n + 1))
        })?;
        out.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    Ok(out)
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| CliError::Usage(format!("config key {key}: cannot parse `{v}`")))
}

impl ExperimentFlags {
    /// Defaults, overridden by the config file, overridden by flags.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            for (k, v) in parse_config_file(&text)? {
                match k.as_str() {
                    "sim_length" => cfg.sim_length = parse_value(&k, &v)?,
                    "split_ratio" => cfg.split_ratio = parse_value(&k, &v)?,
                    "cluster_threshold" => cfg.cluster_threshold = parse_value(&k, &v)?,
                    "purity_threshold" => cfg.purity_threshold = parse_value(&k, &v)?,
                    "knn_threshold" => cfg.knn_threshold = parse_value(&k, &v)?,
                    "fit_error_threshold" => cfg.fit_error_threshold = parse_value(&k, &v)?,
                    "dying_epsilon" => cfg.dying_epsilon = parse_value(&k, &v)?,
                    "seed" | "rng_seed" => cfg.rng_seed = parse_value(&k, &v)?,
                    _ => return Err(CliError::Usage(format!("unknown config key `{k}`"))),
                }
            }
        }
        macro_rules! apply {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { cfg.$field = v; })*
            };
        }
        apply!(
            sim_length => sim_length,
            split_ratio => split_ratio,
            cluster_threshold => cluster_threshold,
            purity_threshold => purity_threshold,
            knn_threshold => knn_threshold,
            fit_error_threshold => fit_error_threshold,
            dying_epsilon => dying_epsilon,
            seed => rng_seed
        );
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

/// Usable series from a directory, plus what had to be skipped.
struct Ingested {
    files: Vec<String>,
    raw: Vec<RawSeries>,
    series: Vec<NormalizedSeries>,
    skipped: Vec<Skipped>,
}

fn csv_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir)
        .map_err(|e| CliError::Data(format!("cannot read input directory {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(format!("no csv files in {}", dir.display())));
    }
    Ok(files)
}

fn default_tag(dir: &Path) -> String {
    dir.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

fn ingest_dir(dir: &Path, tag: &str, sim_length: usize) -> Result<Ingested, CliError> {
    let files = csv_files(dir)?;
    let mut out = Ingested {
        files: files.iter().map(|p| p.display().to_string()).collect(),
        raw: Vec::new(),
        series: Vec::new(),
        skipped: Vec::new(),
    };
    for path in &files {
        match ingest_csv(path, tag) {
            Ok(batch) => {
                for raw in batch {
                    match preprocess(&raw, sim_length) {
                        Ok(s) => {
                            out.series.push(s);
                            out.raw.push(raw);
                        }
                        Err(e) => out.skipped.push(Skipped {
                            source: format!("{} ({})", path.display(), raw.id),
                            reason: e.to_string(),
                        }),
                    }
                }
            }
            Err(e) => out.skipped.push(Skipped {
                source: path.display().to_string(),
                reason: e.to_string(),
            }),
        }
    }
    for s in &out.skipped {
        eprintln!("skipped {}: {}", s.source, s.reason);
    }
    Ok(out)
}

fn create_out_dir(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn finish_strict(strict: bool, skipped: &[Skipped]) -> Result<(), CliError> {
    if strict && !skipped.is_empty() {
        return Err(CliError::Data(format!(
            "{} input(s) skipped under --strict",
            skipped.len()
        )));
    }
    Ok(())
}

fn params_field(params: &Option<Vec<f64>>) -> String {
    params
        .as_ref()
        .map(|p| p.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "))
        .unwrap_or_default()
}

#[derive(Serialize)]
struct ClassifyRecord<'a> {
    series: &'a SeriesId,
    #[serde(flatten)]
    fit: &'a FitResult,
}

pub fn cmd_classify(a: &ClassifyArgs) -> Result<(), CliError> {
    let cfg = a.experiment.resolve()?;
    let tag = a.dataset_tag.clone().unwrap_or_else(|| default_tag(&a.input));
    let start = Instant::now();
    let data = ingest_dir(&a.input, &tag, cfg.sim_length)?;
    if data.series.is_empty() {
        return Err(CliError::Data("no usable series in input".into()));
    }
    let fit_cfg = FitConfig {
        fit_error_threshold: cfg.fit_error_threshold,
        dying_epsilon: cfg.dying_epsilon,
    };
    let fits: Vec<FitResult> = data
        .series
        .par_iter()
        .map(|s| classify_by_fit(s, &fit_cfg))
        .collect();
    create_out_dir(&a.out)?;

    let records: Vec<ClassifyRecord> = data
        .series
        .iter()
        .zip(&fits)
        .map(|(s, fit)| ClassifyRecord { series: &s.origin, fit })
        .collect();
    write_json(&a.out.join("classifications.json"), &records)?;
    let mut w = csv::Writer::from_path(a.out.join("classifications.csv"))?;
    w.write_record(["dataset", "model", "species", "label", "family", "rss", "params"])?;
    for r in &records {
        w.write_record([
            r.series.dataset_tag.as_str(),
            &r.series.model_id,
            &r.series.species_name,
            r.fit.label.as_str(),
            r.fit.family.map(|f| f.label().as_str()).unwrap_or(""),
            &r.fit.rss.map(|v| v.to_string()).unwrap_or_default(),
            &params_field(&r.fit.params),
        ])?;
    }
    w.flush()?;

    let mut manifest = RunManifest::new(
        "classify",
        data.files.clone(),
        serde_json::json!({
            "sim_length": cfg.sim_length,
            "fit_error_threshold": cfg.fit_error_threshold,
            "dying_epsilon": cfg.dying_epsilon,
        }),
    );
    manifest.skipped = data.skipped.clone();
    manifest.timings = Some(BTreeMap::from([(
        "total".to_string(),
        start.elapsed().as_secs_f64(),
    )]));
    write_json(&a.out.join("run_manifest.json"), &manifest)?;

    let mut counts = [0usize; 7];
    for f in &fits {
        counts[f.label.index()] += 1;
    }
    println!("classified {} series", fits.len());
    for l in CurveLabel::ALL {
        println!("  {:<20}{}", l.as_str(), counts[l.index()]);
    }
    finish_strict(a.strict, &data.skipped)
}

#[derive(Serialize)]
struct ReportFile<'a> {
    manifest: RunManifest,
    report: &'a crate::validation::ValidationReport,
}

pub fn cmd_validate(a: &ValidateArgs) -> Result<(), CliError> {
    let cfg = a.experiment.resolve()?;
    let tag = a.dataset_tag.clone().unwrap_or_else(|| default_tag(&a.input));
    let start = Instant::now();
    let data = ingest_dir(&a.input, &tag, cfg.sim_length)?;
    if data.series.len() < MIN_VALIDATE_SERIES {
        return Err(CliError::Data(format!(
            "too few series: {} usable, need at least {MIN_VALIDATE_SERIES}",
            data.series.len()
        )));
    }
    let ingest_secs = start.elapsed().as_secs_f64();
    let out = run_experiment(&data.raw, &cfg).map_err(|e| match e {
        ValidationError::InvalidConfig(m) => CliError::Usage(m),
        ValidationError::Series(e) => CliError::Data(e.to_string()),
        other => CliError::Internal(other.into()),
    })?;
    create_out_dir(&a.out)?;

    let mut manifest = RunManifest::new("validate", data.files.clone(), serde_json::to_value(&cfg)?);
    manifest.skipped = data.skipped.clone();
    write_json(
        &a.out.join("report.json"),
        &ReportFile {
            manifest: manifest.without_timings(),
            report: &out.report,
        },
    )?;
    out.report
        .confusion
        .write_csv(fs::File::create(a.out.join("confusion.csv"))?)?;
    write_clusters_csv(&a.out.join("clusters.csv"), &out)?;
    write_assignments_csv(&a.out.join("assignments.csv"), &out)?;
    write_json(&a.out.join("dendrogram.json"), &out.dendrogram)?;
    write_json(&a.out.join("medoids.json"), &out.medoids)?;
    if a.export_distances {
        if let Some(d) = &out.distances {
            d.write_csv(fs::File::create(a.out.join("distances.csv"))?)?;
        }
    }
    if a.silhouette {
        write_silhouette(&a.out.join("silhouette.csv"), &out, cfg.rng_seed)?;
    }
    if a.plots {
        let dir = a.out.join("plots");
        create_out_dir(&dir)?;
        for c in &out.clusters {
            let svg = cluster_svg(&out, c);
            fs::write(dir.join(format!("cluster_{:03}.svg", c.id)), svg)?;
        }
    }

    let mut timings = BTreeMap::from([("ingest".to_string(), ingest_secs)]);
    timings.extend(out.timings.iter().map(|(k, v)| (k.to_string(), *v)));
    timings.insert("total".into(), start.elapsed().as_secs_f64());
    manifest.timings = Some(timings);
    write_json(&a.out.join("run_manifest.json"), &manifest)?;

    let r = &out.report;
    let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.2}%"));
    println!(
        "{} series: {} train ({} clustered), {} test",
        r.n_series, r.train_size, r.clustered_size, r.test_size
    );
    println!(
        "{} clusters at threshold {}, {} demoted to outlier",
        r.cluster_count,
        cfg.cluster_threshold,
        r.demoted_clusters.len()
    );
    println!("training agreement: {}", pct(r.training_agreement));
    println!(
        "test agreement: {} ({}/{})",
        pct(r.test_agreement),
        r.confusion.trace(),
        r.confusion.total()
    );
    finish_strict(a.strict, &data.skipped)
}

fn write_clusters_csv(path: &Path, out: &ExperimentOutput) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["cluster", "size", "label", "medoid_label", "purity", "demoted", "medoid"])?;
    for c in &out.report.clusters {
        w.write_record([
            c.id.to_string(),
            c.size.to_string(),
            c.label.to_string(),
            c.medoid_label.to_string(),
            c.purity.to_string(),
            c.demoted.to_string(),
            c.medoid.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per input series: its split, fit label and the clustering side's
/// label (its cluster's for training series, nearest medoid's for test).
fn write_assignments_csv(path: &Path, out: &ExperimentOutput) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "dataset", "model", "species", "set", "fit_label", "cluster", "is_medoid", "cluster_label",
        "distance",
    ])?;
    let mut rows: Vec<(usize, [String; 6])> = Vec::with_capacity(out.series.len());
    for (leaf, &i) in out.clustered.iter().enumerate() {
        let c = &out.clusters[out.flat.assignments[leaf]];
        rows.push((
            i,
            [
                "train".into(),
                out.fits[i].label.to_string(),
                c.id.to_string(),
                (c.medoid == leaf).to_string(),
                c.label.to_string(),
                String::new(),
            ],
        ));
    }
    for (p, &i) in out.predictions.iter().zip(&out.test) {
        rows.push((
            i,
            [
                "test".into(),
                p.fit_label.to_string(),
                p.cluster_id.map(|c| c.to_string()).unwrap_or_default(),
                "false".into(),
                p.predicted.to_string(),
                p.distance.map(|d| d.to_string()).unwrap_or_default(),
            ],
        ));
    }
    let clustered_or_test: std::collections::HashSet<usize> = rows.iter().map(|r| r.0).collect();
    for i in (0..out.series.len()).filter(|i| !clustered_or_test.contains(i)) {
        // constant training series never enter clustering
        rows.push((
            i,
            [
                "train".into(),
                out.fits[i].label.to_string(),
                String::new(),
                "false".into(),
                CurveLabel::Constant.to_string(),
                String::new(),
            ],
        ));
    }
    rows.sort_by_key(|r| r.0);
    for (i, cols) in rows {
        let id = &out.series[i].origin;
        let mut rec = vec![id.dataset_tag.clone(), id.model_id.clone(), id.species_name.clone()];
        rec.extend(cols);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn write_silhouette(path: &Path, out: &ExperimentOutput, seed: u64) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "k", "distance", "score"])?;
    let vectors: Vec<&[f64]> = out.clustered.iter().map(|&i| out.series[i].values()).collect();
    let n = vectors.len();
    for k in 2..=10.min(n.saturating_sub(1)) {
        let km = kmeans(&vectors, k, seed);
        if let Ok(score) = silhouette_vectors(&km.assignments, &vectors) {
            w.write_record(["kmeans".to_string(), k.to_string(), "euclidean".into(), score.to_string()])?;
        }
    }
    if let Some(d) = &out.distances {
        if let Ok(score) = silhouette_matrix(&out.flat.assignments, d) {
            w.write_record([
                "hierarchical".to_string(),
                out.clusters.len().to_string(),
                "dtw".into(),
                score.to_string(),
            ])?;
            if let Ok(score) = silhouette_vectors(&out.flat.assignments, &vectors) {
                w.write_record([
                    "hierarchical".to_string(),
                    out.clusters.len().to_string(),
                    "euclidean".into(),
                    score.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn polyline(values: &[f64], width: f64, height: f64, pad: f64) -> String {
    let n = values.len().max(2) - 1;
    let mut pts = String::new();
    for (t, v) in values.iter().enumerate() {
        let x = pad + width * t as f64 / n as f64;
        let y = pad + height * (1.0 - v);
        let _ = write!(pts, "{x:.1},{y:.1} ");
    }
    pts.trim_end().to_string()
}

fn cluster_svg(out: &ExperimentOutput, c: &crate::clustering::LabeledCluster) -> String {
    let (w, h, pad) = (640.0, 320.0, 24.0);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\">\n",
        w + 2.0 * pad,
        h + 2.0 * pad + 16.0
    );
    let _ = writeln!(
        svg,
        "<rect x=\"{pad}\" y=\"{pad}\" width=\"{w}\" height=\"{h}\" fill=\"none\" stroke=\"#999\"/>"
    );
    for &leaf in &c.members {
        let s = &out.series[out.clustered[leaf]];
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"#8aa\" stroke-width=\"0.6\" stroke-opacity=\"0.6\" points=\"{}\"/>",
            polyline(s.values(), w, h, pad)
        );
    }
    let m = &out.series[out.clustered[c.medoid]];
    let _ = writeln!(
        svg,
        "<polyline fill=\"none\" stroke=\"#c33\" stroke-width=\"2.5\" points=\"{}\"/>",
        polyline(m.values(), w, h, pad)
    );
    let _ = writeln!(
        svg,
        "<text x=\"{pad}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">cluster {}: {} ({} members, purity {:.2}, medoid {})</text>",
        h + 2.0 * pad + 8.0,
        c.id,
        c.label,
        c.members.len(),
        c.purity,
        m.origin
    );
    svg.push_str("</svg>\n");
    svg
}

pub fn cmd_predict(a: &PredictArgs) -> Result<(), CliError> {
    let cfg = a.experiment.resolve()?;
    let text = fs::read(&a.medoids)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", a.medoids.display())))?;
    let index: MedoidIndex = serde_json::from_slice(&text)
        .map_err(|e| CliError::Data(format!("bad medoid index {}: {e}", a.medoids.display())))?;
    let tag = a.dataset_tag.clone().unwrap_or_else(|| default_tag(&a.input));
    let start = Instant::now();
    let data = ingest_dir(&a.input, &tag, cfg.sim_length)?;
    if data.series.is_empty() {
        return Err(CliError::Data("no usable series in input".into()));
    }
    if let Some(e) = index.entries.first() {
        if e.series.len() != cfg.sim_length {
            return Err(CliError::Data(format!(
                "medoids have length {}, but sim_length is {}",
                e.series.len(),
                cfg.sim_length
            )));
        }
    }
    let preds: Vec<_> = data
        .series
        .par_iter()
        .map(|s| predict(s, &index, cfg.knn_threshold))
        .collect();
    create_out_dir(&a.out)?;
    let mut w = csv::Writer::from_path(a.out.join("predictions.csv"))?;
    w.write_record(["dataset", "model", "species", "label", "cluster", "distance"])?;
    for (s, (label, cluster, distance)) in data.series.iter().zip(&preds) {
        w.write_record([
            s.origin.dataset_tag.as_str(),
            &s.origin.model_id,
            &s.origin.species_name,
            label.as_str(),
            &cluster.map(|c| c.to_string()).unwrap_or_default(),
            &distance.map(|d| d.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    let mut manifest = RunManifest::new(
        "predict",
        data.files.clone(),
        serde_json::json!({
            "medoids": a.medoids.display().to_string(),
            "sim_length": cfg.sim_length,
            "knn_threshold": cfg.knn_threshold,
        }),
    );
    manifest.skipped = data.skipped.clone();
    manifest.timings = Some(BTreeMap::from([(
        "total".to_string(),
        start.elapsed().as_secs_f64(),
    )]));
    write_json(&a.out.join("run_manifest.json"), &manifest)?;
    println!("predicted {} series", preds.len());
    finish_strict(a.strict, &data.skipped)
}

pub fn cmd_synth(a: &SynthArgs) -> Result<(), CliError> {
    let spec = CorpusSpec {
        mix: if a.table1_mix {
            ClassMix::Table1 { total: a.total }
        } else {
            ClassMix::PerClass(a.per_class)
        },
        noise_sigma: a.noise,
        length: a.length,
        seed: a.seed,
        species_per_file: a.species_per_file,
        dataset_tag: a.dataset_tag.clone(),
    };
    let files = generate_corpus(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
    let series_dir = a.out.join("series");
    create_out_dir(&series_dir)?;
    let mut labels = csv::Writer::from_path(a.out.join("labels.csv"))?;
    labels.write_record(["dataset", "model", "species", "label", "ceiling", "params"])?;
    let mut count = 0;
    for f in &files {
        let raws: Vec<RawSeries> = f.series.iter().map(|g| g.raw.clone()).collect();
        write_csv(
            BufWriter::new(fs::File::create(series_dir.join(format!("{}.csv", f.model_id)))?),
            &raws,
        )?;
        for g in &f.series {
            labels.write_record([
                g.raw.id.dataset_tag.as_str(),
                &g.raw.id.model_id,
                &g.raw.id.species_name,
                g.label.as_str(),
                &g.ceiling.to_string(),
                &params_field(&Some(g.params.clone())),
            ])?;
            count += 1;
        }
    }
    labels.flush()?;
    let manifest = RunManifest::new(
        "synth",
        Vec::new(),
        serde_json::json!({
            "per_class": (!a.table1_mix).then_some(a.per_class),
            "table1_total": a.table1_mix.then_some(a.total),
            "noise": a.noise,
            "length": a.length,
            "seed": a.seed,
            "species_per_file": a.species_per_file,
            "dataset_tag": a.dataset_tag,
        }),
    );
    write_json(&a.out.join("run_manifest.json"), &manifest)?;
    println!("wrote {count} series in {} files to {}", files.len(), series_dir.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_parsing() {
        let map = parse_config_file("# comment\nknn-threshold = 3\n\nsplit_ratio=0.6 # inline\n").unwrap();
        assert_eq!(map["knn_threshold"], "3");
        assert_eq!(map["split_ratio"], "0.6");
        assert!(parse_config_file("no equals sign").is_err());
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.conf");
        fs::write(&path, "knn_threshold = 3\ncluster_threshold = 2\nseed = 9\n").unwrap();
        let flags = ExperimentFlags {
            config: Some(path),
            cluster_threshold: Some(1.5),
            ..Default::default()
        };
        let cfg = flags.resolve().unwrap();
        assert_eq!(cfg.knn_threshold, 3.0);
        assert_eq!(cfg.cluster_threshold, 1.5);
        assert_eq!(cfg.rng_seed, 9);
        assert_eq!(cfg.split_ratio, 0.7);
    }

    #[test]
    fn bad_config_is_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.conf");
        fs::write(&path, "colour = blue\n").unwrap();
        let flags = ExperimentFlags {
            config: Some(path),
            ..Default::default()
        };
        assert_eq!(flags.resolve().unwrap_err().exit_code(), EXIT_USAGE);
        let flags = ExperimentFlags {
            split_ratio: Some(1.5),
            ..Default::default()
        };
        assert_eq!(flags.resolve().unwrap_err().exit_code(), EXIT_USAGE);
    }

    #[test]
    fn exit_codes_for_parse_errors() {
        assert_eq!(run(["popcurve", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["popcurve", "validate"]), EXIT_USAGE);
        assert_eq!(run(["popcurve", "--help"]), EXIT_OK);
    }
}
