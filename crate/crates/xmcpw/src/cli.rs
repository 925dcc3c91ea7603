//! Command-line front end.
//!
//! Six subcommands cover the full pipeline: `train`, `predict`,
//! `evaluate`, `propensities`, `simulate` and `stats`. All numeric work
//! runs in `f64`. Exit codes: 0 on success, 1 on usage errors, 2 on
//! data/model errors.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{parse_xmc, power_law_fit, SparseDataset};
use crate::error::{Error, Result};
use crate::loss::WeightScheme;
use crate::metrics;
use crate::ovr::{predict_topk, train, OvrModel, TopK, TrainConfig};
use crate::propensity::{PropensityModel, PropensityParams};
use crate::sim::synthetic_experiment;
use crate::solver::{SolverConfig, SolverLoss};

#[derive(Parser)]
#[command(
    name = "xmcpw",
    about = "Propensity-weighted one-vs-rest linear classification for \
             extreme multi-label problems with missing labels",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a one-vs-rest model with propensity-weighted squared hinge or
    /// logistic loss.
    Train(TrainArgs),
    /// Score a dataset with a trained model and emit top-k labels.
    Predict(PredictArgs),
    /// Compute ranking metrics for a prediction file against ground truth.
    Evaluate(EvaluateArgs),
    /// Print the per-label propensities of a dataset.
    Propensities(PropensitiesArgs),
    /// Run the synthetic missing-label experiment.
    Simulate(SimulateArgs),
    /// Print dataset statistics, a label-frequency histogram and the
    /// power-law fit.
    Stats(StatsArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Training data in the benchmark sparse text format.
    #[arg(long)]
    data: PathBuf,
    /// Output path for the trained model.
    #[arg(long)]
    model_out: PathBuf,
    /// Positive-class weighting: `theory` (2/p - 1) or `empirical` (1/p - 1).
    #[arg(long, default_value = "empirical")]
    scheme: String,
    /// Loss: `sqhinge` or `logistic`.
    #[arg(long, default_value = "sqhinge")]
    loss: String,
    /// Propensity model parameter A.
    #[arg(long, default_value_t = 0.55)]
    a: f64,
    /// Propensity model parameter B.
    #[arg(long, default_value_t = 1.5)]
    b: f64,
    /// Drop weights with absolute value at or below this threshold.
    #[arg(long, default_value_t = 0.01)]
    prune: f64,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Relative gradient-norm stopping tolerance of the solver.
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    /// Global cost multiplier on both class weights.
    #[arg(long, default_value_t = 1.0)]
    cost: f64,
    /// L2-normalize features before training.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    normalize: bool,
    /// Bias feature value appended after normalization; 0 disables.
    #[arg(long, default_value_t = 1.0)]
    bias: f64,
}

#[derive(Args)]
struct PredictArgs {
    /// Data to score, in the benchmark sparse text format.
    #[arg(long)]
    data: PathBuf,
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    /// Number of labels to emit per example.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Ground-truth dataset (labels are read, features ignored).
    #[arg(long)]
    truth: PathBuf,
    /// Prediction file as written by `predict`.
    #[arg(long, visible_alias = "scores")]
    topk: PathBuf,
    /// Cutoffs to evaluate.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 3, 5])]
    k_list: Vec<usize>,
    /// Propensity model parameter A.
    #[arg(long, default_value_t = 0.55)]
    a: f64,
    /// Propensity model parameter B.
    #[arg(long, default_value_t = 1.5)]
    b: f64,
    /// Training data used to compute label frequencies for the propensity
    /// model; without it all propensities are 1 and the propensity-scored
    /// metrics equal their vanilla counterparts.
    #[arg(long)]
    freq_from: Option<PathBuf>,
}

#[derive(Args)]
struct PropensitiesArgs {
    /// Dataset whose label frequencies drive the propensity model.
    #[arg(long)]
    data: PathBuf,
    /// Propensity model parameter A.
    #[arg(long, default_value_t = 0.55)]
    a: f64,
    /// Propensity model parameter B.
    #[arg(long, default_value_t = 1.5)]
    b: f64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Keep-probability grid.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0f64, 0.7, 0.5, 0.3])]
    grid: Vec<f64>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Training points (the test half has the same size).
    #[arg(long, default_value_t = 400)]
    points: usize,
    #[arg(long, default_value_t = 32)]
    features: usize,
    #[arg(long, default_value_t = 8)]
    labels: usize,
}

#[derive(Args)]
struct StatsArgs {
    /// Dataset to summarize.
    #[arg(long)]
    data: PathBuf,
}

/// Parse `argv` and run the requested command, returning the process exit
/// code (0 success, 1 usage error, 2 data/model error).
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            // --help / --version land here and are not failures.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Train(args) => cmd_train(&args),
        Command::Predict(args) => cmd_predict(&args),
        Command::Evaluate(args) => cmd_evaluate(&args),
        Command::Propensities(args) => cmd_propensities(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Stats(args) => cmd_stats(&args),
    };
    match outcome {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            2
        }
    }
}

fn open_dataset(path: &Path) -> Result<SparseDataset<f64>> {
    let file = File::open(path).map_err(|e| Error::Io(annotate(e, path)))?;
    parse_xmc(BufReader::new(file))
}

fn annotate(err: std::io::Error, path: &Path) -> std::io::Error {
    std::io::Error::new(err.kind(), format!("{}: {err}", path.display()))
}

fn writer_or_stdout(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).map_err(|e| Error::Io(annotate(e, path)))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn resolve_threads(requested: usize) -> usize {
    if requested == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        requested
    }
}

fn propensity_model_for(
    dataset: &SparseDataset<f64>,
    a: f64,
    b: f64,
) -> Result<PropensityModel<f64>> {
    let params = PropensityParams::new(a, b, dataset.num_points())?;
    PropensityModel::from_params(params, &dataset.label_frequencies())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut dataset = open_dataset(&args.data)?;
    let propensities = propensity_model_for(&dataset, args.a, args.b)?;
    if args.normalize {
        dataset.l2_normalize();
    }
    if args.bias != 0.0 {
        dataset.add_bias(args.bias)?;
    }
    let config = TrainConfig {
        scheme: WeightScheme::parse(&args.scheme)?,
        loss: SolverLoss::parse(&args.loss)?,
        solver: SolverConfig {
            tolerance: args.tol,
            ..SolverConfig::default()
        },
        prune_threshold: args.prune,
        thread_count: resolve_threads(args.threads),
        global_cost: args.cost,
    };
    let model = train(&dataset, &propensities, &config)?;
    if !model.meta().warnings.is_empty() {
        eprintln!(
            "warning: {} of {} labels hit the iteration cap before converging",
            model.meta().warnings.len(),
            model.num_labels()
        );
    }
    let file = File::create(&args.model_out).map_err(|e| Error::Io(annotate(e, &args.model_out)))?;
    let mut writer = BufWriter::new(file);
    model.save(&mut writer)?;
    writer.flush()?;
    eprintln!(
        "trained {} labels, {} features, {} non-zero weights -> {}",
        model.num_labels(),
        model.num_features(),
        model.nnz(),
        args.model_out.display()
    );
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let model_file = File::open(&args.model).map_err(|e| Error::Io(annotate(e, &args.model)))?;
    let model: OvrModel<f64> = OvrModel::load(BufReader::new(model_file))?;
    let dataset = open_dataset(&args.data)?;
    let topk = predict_topk(&model, &dataset, args.k)?;
    let mut writer = writer_or_stdout(args.out.as_deref())?;
    write_predictions(&topk, &mut writer)?;
    writer.flush()?;
    Ok(())
}

/// One line per example: `label:score` pairs, descending score.
fn write_predictions<W: Write>(topk: &TopK<f64>, writer: &mut W) -> Result<()> {
    for row in &topk.rows {
        let mut line = String::new();
        for (i, &(label, score)) in row.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            line.push_str(&format!("{label}:{score}"));
        }
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

/// Parse a prediction file back into per-example `(label, score)` rows.
pub fn parse_predictions<R: BufRead>(reader: R, num_labels: usize) -> Result<Vec<Vec<(u32, f64)>>> {
    let mut rows = Vec::new();
    for (offset, line) in reader.lines().enumerate() {
        let line_no = offset + 1;
        let line = line.map_err(Error::Io)?;
        if line.trim().is_empty() {
            rows.push(Vec::new());
            continue;
        }
        let mut row = Vec::new();
        for token in line.split_whitespace() {
            let (label_str, score_str) = token.split_once(':').ok_or_else(|| {
                Error::parse(line_no, format!("expected `label:score`, got `{token}`"))
            })?;
            let label: u32 = label_str
                .parse()
                .map_err(|e| Error::parse(line_no, format!("bad label `{label_str}`: {e}")))?;
            if label as usize >= num_labels {
                return Err(Error::parse(
                    line_no,
                    format!("label {label} out of range (< {num_labels})"),
                ));
            }
            let score: f64 = score_str
                .parse()
                .map_err(|e| Error::parse(line_no, format!("bad score `{score_str}`: {e}")))?;
            row.push((label, score));
        }
        rows.push(row);
    }
    Ok(rows)
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let truth_set = open_dataset(&args.truth)?;
    let predictions_file =
        File::open(&args.topk).map_err(|e| Error::Io(annotate(e, &args.topk)))?;
    let predictions =
        parse_predictions(BufReader::new(predictions_file), truth_set.num_labels())?;
    let inv_props: Vec<f64> = match &args.freq_from {
        Some(path) => {
            let train_set = open_dataset(path)?;
            if train_set.num_labels() != truth_set.num_labels() {
                return Err(Error::Dimension(format!(
                    "frequency source has {} labels, truth has {}",
                    train_set.num_labels(),
                    truth_set.num_labels()
                )));
            }
            propensity_model_for(&train_set, args.a, args.b)?.inverse_propensities()
        }
        None => vec![1.0; truth_set.num_labels()],
    };
    let truth = truth_set.label_sets();
    let report = metrics::evaluate(&truth, &predictions, &args.k_list, &inv_props, true)?;
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    let mut stdout = BufWriter::new(std::io::stdout());
    write!(stdout, "{}", report.to_table())?;
    write!(stdout, "{}", report.to_kv_lines())?;
    stdout.flush()?;
    Ok(())
}

fn cmd_propensities(args: &PropensitiesArgs) -> Result<()> {
    let dataset = open_dataset(&args.data)?;
    let model = propensity_model_for(&dataset, args.a, args.b)?;
    let mut writer = writer_or_stdout(args.out.as_deref())?;
    for p in model.per_label() {
        writeln!(writer, "{}", p.get())?;
    }
    writer.flush()?;
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let report = synthetic_experiment::<f64>(
        args.points,
        args.features,
        args.labels,
        &args.grid,
        args.seed,
    )?;
    print!("{report}");
    Ok(())
}

fn cmd_stats(args: &StatsArgs) -> Result<()> {
    let dataset = open_dataset(&args.data)?;
    let freqs = dataset.label_frequencies();
    let total_positives: usize = freqs.counts.iter().sum();
    let mut stdout = BufWriter::new(std::io::stdout());
    writeln!(stdout, "points: {}", dataset.num_points())?;
    writeln!(stdout, "features: {}", dataset.num_features())?;
    writeln!(stdout, "labels: {}", dataset.num_labels())?;
    writeln!(stdout, "positive pairs: {total_positives}")?;
    if dataset.num_points() > 0 {
        writeln!(
            stdout,
            "avg labels per point: {:.4}",
            total_positives as f64 / dataset.num_points() as f64
        )?;
    }
    if dataset.num_labels() > 0 {
        writeln!(
            stdout,
            "avg points per label: {:.4}",
            total_positives as f64 / dataset.num_labels() as f64
        )?;
    }

    // Histogram over power-of-two frequency buckets.
    writeln!(stdout, "label frequency histogram:")?;
    let zero_count = freqs.counts.iter().filter(|&&c| c == 0).count();
    writeln!(stdout, "  [0]: {zero_count}")?;
    let max_count = freqs.counts.iter().copied().max().unwrap_or(0);
    let mut lo = 1usize;
    while lo <= max_count {
        let hi = lo * 2;
        let in_bucket = freqs.counts.iter().filter(|&&c| c >= lo && c < hi).count();
        if in_bucket > 0 {
            writeln!(stdout, "  [{lo}, {hi}): {in_bucket}")?;
        }
        lo = hi;
    }

    match power_law_fit::<f64>(&freqs) {
        Ok(fit) => writeln!(
            stdout,
            "power law fit: n1={:.6} beta={:.6} r2={:.6}",
            fit.n1, fit.beta, fit.r2
        )?,
        Err(err) => writeln!(stdout, "power law fit: unavailable ({err})")?,
    }
    stdout.flush()?;
    Ok(())
}
