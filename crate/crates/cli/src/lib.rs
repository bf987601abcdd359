//! Batch driver behind the `clusterauc` binary.
//!
//! Every subcommand computes its results in memory, writes them into a
//! temporary directory next to the target and only then moves them into
//! place, so a failed run leaves no partial output behind.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use clusterauc::ingest::{IngestError, Table};
use clusterauc::kmeans::{KMeansError, DEFAULT_MAX_ITER};
use clusterauc::report::{write_decompose_bundle, write_drift_bundle, ReportError, VERSION};
use clusterauc::synthetic::{self, SyntheticConfig};
use clusterauc::{
    build_drift, build_report, ingest, kmeans_fit, BinStrategy, ClusterId, DiagnosticsReport,
    FocusCriterion, IngestSpec, KMeansModel, ReportConfig, TiePolicy,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    KMeans(#[from] KMeansError),
    #[error("{0}")]
    Invalid(String),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    fn io(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.to_owned(),
            source,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "clusterauc", version, about = "Cluster-level AUC, calibration and drift diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decompose the global AUC into cluster-pair cells and write the full report.
    Decompose(AnalysisArgs),
    /// Explain the worst (or a chosen) cluster through per-feature drift.
    Drift(AnalysisArgs),
    /// Assign clusters with seeded k-means and append them to the input.
    Cluster(ClusterArgs),
    /// Write a seeded, fraud-like synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TieArg {
    Half,
    Strict,
}

impl From<TieArg> for TiePolicy {
    fn from(t: TieArg) -> Self {
        match t {
            TieArg::Half => TiePolicy::HalfCredit,
            TieArg::Strict => TiePolicy::Strict,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CriterionArg {
    Auc,
    Brier,
    Logloss,
}

impl From<CriterionArg> for FocusCriterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::Auc => FocusCriterion::Auc,
            CriterionArg::Brier => FocusCriterion::Brier,
            CriterionArg::Logloss => FocusCriterion::LogLoss,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BinArg {
    Quantile,
    Uniform,
}

impl From<BinArg> for BinStrategy {
    fn from(b: BinArg) -> Self {
        match b {
            BinArg::Quantile => BinStrategy::Quantile,
            BinArg::Uniform => BinStrategy::Uniform,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct AnalysisArgs {
    /// Scored CSV file.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output_dir: PathBuf,
    #[arg(long)]
    pub score_col: String,
    #[arg(long, default_value = "label")]
    pub label_col: String,
    /// Cluster id column; without it the whole file is one cluster.
    #[arg(long)]
    pub cluster_col: Option<String>,
    /// Probability column for Brier and log loss. Defaults to the score when it lies in [0, 1].
    #[arg(long)]
    pub prob_col: Option<String>,
    /// Comma-separated feature columns. Defaults to all other numeric columns.
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    #[arg(long, value_enum, default_value_t = TieArg::Half)]
    pub tie_policy: TieArg,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    #[arg(long, value_enum, default_value_t = BinArg::Quantile)]
    pub bin_strategy: BinArg,
    /// Features binned by distinct value instead of by the bin strategy.
    #[arg(long, value_delimiter = ',')]
    pub categorical: Vec<String>,
    #[arg(long, default_value_t = 1e-15)]
    pub clamp_eps: f64,
    /// How the cluster to explain is chosen.
    #[arg(long, value_enum, default_value_t = CriterionArg::Auc)]
    pub criterion: CriterionArg,
    #[arg(long)]
    pub focus_cluster: Option<String>,
    /// Recorded in the report; the analyses themselves are deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl AnalysisArgs {
    pub fn ingest_spec(&self) -> IngestSpec {
        IngestSpec {
            cluster_column: self.cluster_col.clone(),
            probability_column: self.prob_col.clone(),
            feature_columns: self.features.clone(),
            ..IngestSpec::new(&self.input, &self.score_col, &self.label_col)
        }
    }

    pub fn report_config(&self) -> Result<ReportConfig, CliError> {
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return Err(CliError::Invalid(format!(
                "--clamp-eps must lie in (0, 0.5), got {}",
                self.clamp_eps
            )));
        }
        if self.bins < 2 {
            return Err(CliError::Invalid(format!("--bins must be at least 2, got {}", self.bins)));
        }
        Ok(ReportConfig {
            score_column: self.score_col.clone(),
            label_column: self.label_col.clone(),
            cluster_column: self.cluster_col.clone(),
            probability_column: self.prob_col.clone(),
            feature_columns: self.features.clone(),
            tie_policy: self.tie_policy.into(),
            num_bins: self.bins,
            bin_strategy: self.bin_strategy.into(),
            categorical: self.categorical.clone(),
            clamp_eps: self.clamp_eps,
            criterion: self.criterion.into(),
            focus_cluster: self.focus_cluster.clone().map(ClusterId),
            seed: self.seed,
            ..ReportConfig::default()
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output_dir: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated feature columns. Defaults to all numeric columns except score and label.
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    /// Excluded from the default feature set.
    #[arg(long, default_value = "score")]
    pub score_col: String,
    /// Excluded from the default feature set.
    #[arg(long, default_value = "label")]
    pub label_col: String,
    /// Name of the appended column.
    #[arg(long, default_value = "cluster")]
    pub cluster_col: String,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub output_dir: PathBuf,
    #[arg(long, default_value_t = 20_000)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub clusters: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

/// Parses `args`, runs the command and returns the process exit code.
///
/// 0 on success, 1 on validation errors, 2 on usage errors.
pub fn run_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match run(&cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

pub fn run(command: &Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Decompose(a) => cmd_decompose(a, out),
        Command::Drift(a) => cmd_drift(a, out),
        Command::Cluster(a) => cmd_cluster(a, out),
        Command::Synth(a) => cmd_synth(a, out),
    }
}

/// Writes into a sibling temp directory, then moves the files into `target`.
fn publish<F>(target: &Path, write: F) -> Result<Vec<PathBuf>, CliError>
where
    F: FnOnce(&Path) -> Result<Vec<PathBuf>, CliError>,
{
    let parent = match target.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_owned(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(CliError::io(&parent))?;
    let staging = tempfile::Builder::new()
        .prefix(".clusterauc-")
        .tempdir_in(&parent)
        .map_err(CliError::io(&parent))?;
    let written = write(staging.path())?;

    if !target.exists() {
        fs::rename(staging.path(), target).map_err(CliError::io(target))?;
        // The directory now lives at `target`; nothing is left to clean up.
        let _ = staging.keep();
    } else {
        for f in &written {
            let dest = target.join(f.file_name().expect("written files have names"));
            fs::rename(f, &dest).map_err(CliError::io(&dest))?;
        }
    }
    Ok(written
        .iter()
        .map(|f| target.join(f.file_name().expect("written files have names")))
        .collect())
}

fn fmt6(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_owned(), |x| format!("{x:.6}"))
}

fn fmt_id(id: Option<&ClusterId>) -> String {
    id.map_or_else(|| "n/a".to_owned(), |c| c.to_string())
}

/// The stdout summary printed by `decompose`.
pub fn summary_table(r: &DiagnosticsReport) -> String {
    let a = &r.auc_decomposition;
    let w = &r.worst_clusters;
    let mut s = String::new();
    let mut line = |k: &str, v: String| s.push_str(&format!("{k} {v}\n"));
    line("n", r.dataset.n.to_string());
    line("clusters", r.dataset.clusters.to_string());
    line("global_auc", fmt6(Some(a.global)));
    line("intra_total", fmt6(Some(a.intra_total)));
    line("inter_total", fmt6(Some(a.inter_total)));
    line("residual", format!("{:.6e}", a.residual));
    line("global_brier", fmt6(r.brier.as_ref().map(|b| b.global)));
    line("global_log_loss", fmt6(r.log_loss.as_ref().map(|l| l.global)));
    line("worst_min_diagonal_auc", fmt_id(w.min_diagonal_auc.as_ref()));
    line("worst_max_brier", fmt_id(w.max_brier.as_ref()));
    line("worst_max_log_loss", fmt_id(w.max_log_loss.as_ref()));

    s.push_str("\ncluster n positives negatives auc brier log_loss\n");
    for (i, c) in r.dataset.per_cluster.iter().enumerate() {
        let brier = r.brier.as_ref().map(|b| b.per_cluster[i].value);
        let ll = r.log_loss.as_ref().map(|l| l.per_cluster[i].value);
        s.push_str(&format!(
            "{} {} {} {} {} {} {}\n",
            c.cluster,
            c.n,
            c.positives,
            c.negatives,
            fmt6(a.matrix[i][i]),
            fmt6(brier),
            fmt6(ll)
        ));
    }
    s
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(|source| CliError::Io { path: PathBuf::from("<stdout>"), source })
}

pub fn cmd_decompose(args: &AnalysisArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = args.report_config()?;
    let ingested = ingest(&args.ingest_spec())?;
    for r in &ingested.summary.rejected {
        log::warn!("row {} skipped: {}", r.row, r.reason);
    }
    let report = build_report(&ingested, &config)?;
    if report.brier.is_none() {
        log::warn!("no probabilities available, Brier score and log loss are omitted");
    }
    publish(&args.output_dir, |dir| Ok(write_decompose_bundle(&report, dir)?))?;
    write_out(out, &summary_table(&report))
}

pub fn cmd_drift(args: &AnalysisArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = args.report_config()?;
    let ingested = ingest(&args.ingest_spec())?;
    let doc = build_drift(&ingested, &config)?;
    publish(&args.output_dir, |dir| Ok(write_drift_bundle(&doc, dir)?))?;
    let mut s = format!("focus_cluster {}\n", doc.focus_cluster);
    s.push_str(&format!("label_rate_focus {}\n", fmt6(Some(doc.report.label_rate_focus))));
    s.push_str(&format!("label_rate_rest {}\n", fmt6(Some(doc.report.label_rate_rest))));
    s.push_str("\nfeature psi js_divergence\n");
    for f in &doc.report.per_feature {
        s.push_str(&format!("{} {:.6} {:.6}\n", f.feature, f.psi, f.js_divergence));
    }
    write_out(out, &s)
}

#[derive(Debug, Serialize)]
struct ModelDocument<'a> {
    model: &'a KMeansModel<f64>,
    k: usize,
    cluster_column: &'a str,
    input_digest: String,
    version: &'a str,
}

fn feature_rows(table: &Table, cols: &[usize]) -> Result<Vec<Vec<f64>>, CliError> {
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            cols.iter()
                .map(|&c| {
                    let v = rec.get(c).map_or("", |s| s.trim());
                    v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| {
                        CliError::Invalid(format!(
                            "row {}, column {:?}: {v:?} is not a finite number",
                            i + 1,
                            table.headers[c]
                        ))
                    })
                })
                .collect()
        })
        .collect()
}

pub fn cmd_cluster(args: &ClusterArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let table = Table::read(&args.input, b',')?;
    if table.headers.iter().any(|h| h == &args.cluster_col) {
        return Err(CliError::Invalid(format!(
            "input already has a {:?} column, choose another --cluster-col",
            args.cluster_col
        )));
    }
    let cols: Vec<usize> = match &args.features {
        Some(names) => names.iter().map(|n| table.column(n)).collect::<Result<_, _>>()?,
        None => table
            .numeric_columns()
            .into_iter()
            .filter(|&c| table.headers[c] != args.score_col && table.headers[c] != args.label_col)
            .collect(),
    };
    if cols.is_empty() {
        return Err(CliError::Invalid("no numeric feature columns to cluster on".into()));
    }
    let names: Vec<String> = cols.iter().map(|&c| table.headers[c].clone()).collect();
    let rows = feature_rows(&table, &cols)?;
    let (model, labels) = kmeans_fit(&rows, &names, args.k, DEFAULT_MAX_ITER, args.seed)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head = table.headers.clone();
    head.push(args.cluster_col.clone());
    w.write_record(&head).expect("in-memory write");
    for (rec, l) in table.rows.iter().zip(&labels) {
        let mut r = rec.clone();
        r.push(l.to_string());
        w.write_record(&r).expect("in-memory write");
    }
    let csv_text = w.into_inner().expect("in-memory flush");
    let doc = ModelDocument {
        model: &model,
        k: args.k,
        cluster_column: &args.cluster_col,
        input_digest: format!("sha256:{}", table.digest),
        version: VERSION,
    };
    let mut json = serde_json::to_string_pretty(&doc).expect("model serializes");
    json.push('\n');

    publish(&args.output_dir, |dir| {
        let mut files = Vec::new();
        for (name, bytes) in [("clustered.csv", csv_text.as_slice()), ("model.json", json.as_bytes())] {
            let p = dir.join(name);
            fs::write(&p, bytes).map_err(CliError::io(&p))?;
            files.push(p);
        }
        Ok(files)
    })?;
    let mut sizes = vec![0usize; args.k];
    for &l in &labels {
        sizes[l] += 1;
    }
    let mut s = format!("k {}\niterations {}\ninertia {:.6}\n\ncluster n\n", args.k, model.iterations_run, model.inertia);
    for (c, n) in sizes.iter().enumerate() {
        s.push_str(&format!("{c} {n}\n"));
    }
    write_out(out, &s)
}

pub fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if args.clusters < 2 || args.n == 0 {
        return Err(CliError::Invalid("--clusters must be at least 2 and --n positive".into()));
    }
    let config = SyntheticConfig {
        n: args.n,
        clusters: args.clusters,
        seed: args.seed,
        ..SyntheticConfig::default()
    };
    let rows = synthetic::generate(&config);
    let text = synthetic::to_csv(&rows);
    publish(&args.output_dir, |dir| {
        let p = dir.join("synthetic.csv");
        fs::write(&p, &text).map_err(CliError::io(&p))?;
        Ok(vec![p])
    })?;
    let positives = rows.iter().filter(|r| r.label == 1).count();
    write_out(out, &format!("rows {}\npositives {}\nshifted_cluster C{}\n", rows.len(), positives, args.clusters))
}
