//! Command-line front-end.
//!
//! [`parse_args`] turns an argument vector into a validated [`RunConfig`]
//! and [`run`] executes it. Exit codes: 0 on success (and `--help`), 1 on
//! data or runtime errors, 2 on usage errors.

use std::ffi::OsString;
use std::fmt;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::classify::{train_labeled, Family, TrainSpec};
use crate::curves::CurveSet;
use crate::error::{Error, Result};
use crate::eval::{kfold_cv, mean_std, runtime_bench, BenchConfig, CvReport};
use crate::io::{self, Model};
use crate::piecewise::{fisher_segment_with, SegmentOptions};
use crate::rhlp::{fit_em, EmConfig};
use crate::select::{bic, grid_select};
use crate::simulate::{
    complex_classes, homogeneous_classes, sample_rhlp, smoothness_spec, switch_standins, three_regime_spec,
    waveform_with, SimSpec, Simulated, WaveformGrid, SMOOTHNESS_DIVISORS,
};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(
    name = "regimecurve",
    version,
    about = "Curve modeling with regime changes: piecewise polynomial regression and hidden logistic process regression",
    after_help = "Set REGIMECURVE_LOG (e.g. info, debug) to control log verbosity."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seed of every random draw (restarts, simulation, fold assignment).
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a seeded synthetic dataset.
    Simulate(SimulateArgs),
    /// Fit one model (RHLP by default) to a set of curves.
    Fit(FitArgs),
    /// Optimal piecewise polynomial segmentation of a set of curves.
    Segment(SegmentArgs),
    /// BIC grid search over the number of regimes and the degree.
    Select(SelectArgs),
    /// Train a MAP classifier and/or classify curves.
    Classify(ClassifyArgs),
    /// Stratified k-fold cross-validated misclassification rate.
    Cv(CvArgs),
    /// Wall-clock benchmark of both estimators on simulated data.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    /// Three quadratic regimes on [0, 5] (n = 50, m = 100 by default).
    Rhlp,
    /// Three constant regimes whose transitions sharpen with --level 1..10.
    Smoothness,
    /// Breiman's three waveform classes (--n curves per class, default 500).
    Waveform,
    /// Two classes mixing three generators, one shared by both classes.
    Complex,
    /// Two classes from one generator each (baseline of `complex`).
    Homogeneous,
    /// Draw --n curves from the RHLP model given by --model-in.
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WaveformPoints {
    /// t = 0, 1, …, 20.
    Inclusive,
    /// t = 0, 1, …, 19.
    HalfOpen,
}

#[derive(Debug, Args)]
struct EmArgs {
    /// Relative log-likelihood change that stops EM.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    /// EM initializations; the best final log-likelihood wins.
    #[arg(long, default_value_t = 5)]
    restarts: usize,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = Scenario::Rhlp)]
    scenario: Scenario,
    /// Number of curves (per class for `waveform`).
    #[arg(long)]
    n: Option<usize>,
    /// Points per curve.
    #[arg(long)]
    m: Option<usize>,
    /// Smoothness level 1..10.
    #[arg(long)]
    level: Option<usize>,
    #[arg(long, value_enum, default_value_t = WaveformPoints::Inclusive)]
    waveform_grid: WaveformPoints,
    #[arg(long)]
    model_in: Option<PathBuf>,
    /// Curves CSV to write.
    #[arg(long)]
    output: PathBuf,
    /// Labels CSV to write.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// TSV of the true mean curve and hidden regimes (single-model scenarios).
    #[arg(long)]
    truth_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long = "K")]
    k: usize,
    #[arg(long)]
    p: usize,
    #[command(flatten)]
    em: EmArgs,
    /// Minimum points per piecewise segment.
    #[arg(long, default_value_t = 1)]
    min_seg_len: usize,
    /// Model JSON to write.
    #[arg(long)]
    model_out: Option<PathBuf>,
    /// Fit summary JSON to write.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Plot-data TSV to write.
    #[arg(long)]
    emit_plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long, value_enum, default_value_t = FamilyArg::Rhlp)]
    family: FamilyArg,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Args)]
struct SegmentArgs {
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    Rhlp,
    Piecewise,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Rhlp => Family::Rhlp,
            FamilyArg::Piecewise => Family::Piecewise,
        }
    }
}

#[derive(Debug, Args)]
struct SelectArgs {
    #[arg(long)]
    input: PathBuf,
    /// Inclusive range such as `1..5` or `1-5`.
    #[arg(long = "K-range", default_value = "1..5", value_parser = parse_range)]
    k_range: (usize, usize),
    #[arg(long = "p-range", default_value = "0..3", value_parser = parse_range)]
    p_range: (usize, usize),
    #[command(flatten)]
    em: EmArgs,
    /// Report to write (`.tsv` for TSV, JSON otherwise).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    /// Curves CSV: training curves, or curves to classify with --model-in.
    #[arg(long)]
    input: PathBuf,
    /// Training labels CSV.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long = "K")]
    k: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long, value_enum, default_value_t = FamilyArg::Rhlp)]
    family: FamilyArg,
    #[command(flatten)]
    em: EmArgs,
    /// Trained classifier JSON to read instead of training.
    #[arg(long)]
    model_in: Option<PathBuf>,
    /// Trained classifier JSON to write.
    #[arg(long)]
    model_out: Option<PathBuf>,
    /// Predictions CSV (label and per-class posteriors) to write.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CvArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long = "K")]
    k: usize,
    #[arg(long)]
    p: usize,
    #[arg(long, value_enum, default_value_t = FamilyArg::Rhlp)]
    family: FamilyArg,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Independent fold assignments (seeds seed, seed+1, …).
    #[arg(long, default_value_t = 1)]
    repetitions: usize,
    #[command(flatten)]
    em: EmArgs,
    /// Report to write (`.tsv` for TSV, JSON otherwise).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Curve counts (comma separated).
    #[arg(long, value_delimiter = ',', default_values_t = [50])]
    n: Vec<usize>,
    /// Curve sizes (comma separated).
    #[arg(long, value_delimiter = ',', default_values_t = [100, 200, 300, 400, 500])]
    m: Vec<usize>,
    /// Benchmark one family only (default: both).
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    #[arg(long = "K", default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    p: usize,
    #[arg(long, default_value_t = 3)]
    repetitions: usize,
    #[command(flatten)]
    em: EmArgs,
    /// Report to write (`.tsv` for TSV, JSON otherwise).
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_range(s: &str) -> std::result::Result<(usize, usize), String> {
    let parts: Vec<&str> = if let Some((a, b)) = s.split_once("..") {
        vec![a, b.trim_start_matches('=')]
    } else if let Some((a, b)) = s.split_once(['-', ':']) {
        vec![a, b]
    } else {
        vec![s, s]
    };
    let num = |x: &str| {
        x.trim()
            .parse::<usize>()
            .map_err(|_| format!("`{s}` is not a range such as 1..5"))
    };
    let (a, b) = (num(parts[0])?, num(parts[1])?);
    if a > b {
        return Err(format!("empty range `{s}`"));
    }
    Ok((a, b))
}

/// What a validated invocation does.
#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Simulate(SimulateTask),
    Fit(FitTask),
    Select(SelectTask),
    Classify(ClassifyTask),
    Cv(CvTask),
    Bench(BenchTask),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateTask {
    pub scenario: Scenario,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub level: Option<usize>,
    pub waveform_grid: WaveformGrid,
    pub model_in: Option<PathBuf>,
    pub output: PathBuf,
    pub labels: Option<PathBuf>,
    pub truth_out: Option<PathBuf>,
}

/// `fit` and `segment` (the latter is `fit` with the piecewise family).
#[derive(Debug, Clone, PartialEq)]
pub struct FitTask {
    pub family: Family,
    pub input: PathBuf,
    pub k: usize,
    pub p: usize,
    pub em: EmConfig,
    pub segments: SegmentOptions,
    pub model_out: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub emit_plot: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectTask {
    pub input: PathBuf,
    pub k_range: RangeInclusive<usize>,
    pub p_range: RangeInclusive<usize>,
    pub em: EmConfig,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierSource {
    Train { labels: PathBuf, spec: TrainSpec },
    Load(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyTask {
    pub input: PathBuf,
    pub source: ClassifierSource,
    pub model_out: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvTask {
    pub input: PathBuf,
    pub labels: PathBuf,
    pub spec: TrainSpec,
    pub folds: usize,
    pub repetitions: usize,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchTask {
    pub bench: BenchConfig,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: Option<usize>,
    pub task: Task,
}

impl RunConfig {
    /// Model family the task fits, if it fits one.
    pub fn family(&self) -> Option<Family> {
        match &self.task {
            Task::Fit(t) => Some(t.family),
            Task::Select(_) => Some(Family::Rhlp),
            Task::Classify(ClassifyTask {
                source: ClassifierSource::Train { spec, .. },
                ..
            })
            | Task::Cv(CvTask { spec, .. }) => Some(spec.family),
            _ => None,
        }
    }
}

/// Outcome of argument parsing that does not yield a runnable config.
#[derive(Debug, Clone, PartialEq)]
pub enum ArgsError {
    /// `--help` / `--version` text; printed to stdout, exit code 0.
    Info(String),
    /// Invalid invocation; printed to stderr, exit code 2.
    Usage(String),
}

impl ArgsError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ArgsError::Info(_) => 0,
            ArgsError::Usage(_) => 2,
        }
    }
}

impl fmt::Display for ArgsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArgsError::Info(s) | ArgsError::Usage(s) => f.write_str(s),
        }
    }
}

fn usage(msg: impl Into<String>) -> ArgsError {
    ArgsError::Usage(format!("error: {}", msg.into()))
}

fn check_k(k: usize) -> std::result::Result<usize, ArgsError> {
    if k < 1 {
        return Err(usage("K must be ≥ 1"));
    }
    Ok(k)
}

fn em_config(a: &EmArgs, seed: u64) -> std::result::Result<EmConfig, ArgsError> {
    if !(a.tol > 0.0) {
        return Err(usage("--tol must be > 0"));
    }
    if a.max_iter < 1 {
        return Err(usage("--max-iter must be ≥ 1"));
    }
    if a.restarts < 1 {
        return Err(usage("--restarts must be ≥ 1"));
    }
    Ok(EmConfig {
        max_iter: a.max_iter,
        tol: a.tol,
        restarts: a.restarts,
        seed,
        ..EmConfig::default()
    })
}

fn fit_task(family: Family, a: ModelArgs, seed: u64) -> std::result::Result<FitTask, ArgsError> {
    if a.min_seg_len < 1 {
        return Err(usage("--min-seg-len must be ≥ 1"));
    }
    Ok(FitTask {
        family,
        input: a.input,
        k: check_k(a.k)?,
        p: a.p,
        em: em_config(&a.em, seed)?,
        segments: SegmentOptions { min_len: a.min_seg_len },
        model_out: a.model_out,
        output: a.output,
        emit_plot: a.emit_plot,
    })
}

fn train_spec(family: FamilyArg, k: usize, p: usize, em: EmConfig) -> std::result::Result<TrainSpec, ArgsError> {
    Ok(TrainSpec::new(family.into(), check_k(k)?, p).with_em(em))
}

/// Parses and validates an argument vector (including the program name).
pub fn parse_args<I, T>(argv: I) -> std::result::Result<RunConfig, ArgsError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ArgsError::Info(e.render().to_string()),
        _ => ArgsError::Usage(e.render().to_string()),
    })?;
    if cli.threads == Some(0) {
        return Err(usage("--threads must be ≥ 1"));
    }
    let seed = cli.seed;
    let task = match cli.command {
        Command::Simulate(a) => {
            match a.scenario {
                Scenario::Smoothness => match a.level {
                    Some(l) if (1..=SMOOTHNESS_DIVISORS.len()).contains(&l) => {}
                    Some(l) => return Err(usage(format!("--level must be in 1..=10, got {l}"))),
                    None => return Err(usage("--scenario smoothness requires --level")),
                },
                Scenario::Model if a.model_in.is_none() => {
                    return Err(usage("--scenario model requires --model-in"));
                }
                _ => {}
            }
            if a.n == Some(0) {
                return Err(usage("--n must be ≥ 1"));
            }
            if matches!(a.m, Some(m) if m < 2) {
                return Err(usage("--m must be ≥ 2"));
            }
            Task::Simulate(SimulateTask {
                scenario: a.scenario,
                n: a.n,
                m: a.m,
                level: a.level,
                waveform_grid: match a.waveform_grid {
                    WaveformPoints::Inclusive => WaveformGrid::Inclusive,
                    WaveformPoints::HalfOpen => WaveformGrid::HalfOpen,
                },
                model_in: a.model_in,
                output: a.output,
                labels: a.labels,
                truth_out: a.truth_out,
            })
        }
        Command::Fit(a) => Task::Fit(fit_task(a.family.into(), a.model, seed)?),
        Command::Segment(a) => Task::Fit(fit_task(Family::Piecewise, a.model, seed)?),
        Command::Select(a) => {
            check_k(a.k_range.0)?;
            Task::Select(SelectTask {
                input: a.input,
                k_range: a.k_range.0..=a.k_range.1,
                p_range: a.p_range.0..=a.p_range.1,
                em: em_config(&a.em, seed)?,
                output: a.output,
            })
        }
        Command::Classify(a) => {
            let em = em_config(&a.em, seed)?;
            let source = match (a.model_in, a.labels) {
                (Some(path), None) => ClassifierSource::Load(path),
                (Some(_), Some(_)) => return Err(usage("--model-in and --labels are mutually exclusive")),
                (None, Some(labels)) => {
                    let (Some(k), Some(p)) = (a.k, a.p) else {
                        return Err(usage("training requires --K and --p"));
                    };
                    ClassifierSource::Train {
                        labels,
                        spec: train_spec(a.family, k, p, em)?,
                    }
                }
                (None, None) => return Err(usage("give --labels (to train) or --model-in (to predict)")),
            };
            if matches!(source, ClassifierSource::Load(_)) && a.output.is_none() {
                return Err(usage("prediction requires --output"));
            }
            Task::Classify(ClassifyTask {
                input: a.input,
                source,
                model_out: a.model_out,
                output: a.output,
            })
        }
        Command::Cv(a) => {
            if a.folds < 2 {
                return Err(usage("--folds must be ≥ 2"));
            }
            if a.repetitions < 1 {
                return Err(usage("--repetitions must be ≥ 1"));
            }
            Task::Cv(CvTask {
                input: a.input,
                labels: a.labels,
                spec: train_spec(a.family, a.k, a.p, em_config(&a.em, seed)?)?,
                folds: a.folds,
                repetitions: a.repetitions,
                output: a.output,
            })
        }
        Command::Bench(a) => {
            if a.repetitions < 1 {
                return Err(usage("--repetitions must be ≥ 1"));
            }
            if a.n.contains(&0) || a.m.iter().any(|&m| m < 2) {
                return Err(usage("benchmark sizes need n ≥ 1 and m ≥ 2"));
            }
            let methods = match a.family {
                Some(f) => vec![f.into()],
                None => vec![Family::Piecewise, Family::Rhlp],
            };
            let cells = a.n.iter().flat_map(|&n| a.m.iter().map(move |&m| (n, m))).collect();
            Task::Bench(BenchTask {
                bench: BenchConfig {
                    cells,
                    methods,
                    k: check_k(a.k)?,
                    p: a.p,
                    repetitions: a.repetitions,
                    seed,
                    em: em_config(&a.em, seed)?,
                },
                output: a.output,
            })
        }
    };
    Ok(RunConfig {
        seed,
        threads: cli.threads,
        task,
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports always serialize");
    s.push('\n');
    s
}

/// Writes `json` or `tsv` depending on the extension, or prints the TSV.
fn emit_report(output: Option<&Path>, json: String, tsv: String) -> Result<()> {
    match output {
        Some(path) if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("tsv")) => write_file(path, &tsv),
        Some(path) => write_file(path, &json),
        None => {
            print!("{tsv}");
            Ok(())
        }
    }
}

fn simulate(task: &SimulateTask, seed: u64) -> Result<()> {
    let single = |spec: SimSpec| -> Result<(Simulated, Vec<i64>)> {
        let sim = sample_rhlp(&spec)?;
        let labels = vec![1; sim.curves.n()];
        Ok((sim, labels))
    };
    let (curves, labels, truth) = match task.scenario {
        Scenario::Rhlp => {
            let (sim, l) = single(three_regime_spec(task.n.unwrap_or(50), task.m.unwrap_or(100))?.with_seed(seed))?;
            (sim.curves.clone(), l, Some(sim))
        }
        Scenario::Smoothness => {
            let base = smoothness_spec(task.level.expect("validated"))?;
            let (n, m) = (task.n.unwrap_or(base.n), task.m.unwrap_or(base.m));
            let (sim, l) = single(base.with_size(n, m).with_seed(seed))?;
            (sim.curves.clone(), l, Some(sim))
        }
        Scenario::Model => {
            let path = task.model_in.as_deref().expect("validated");
            let Model::Rhlp(model) = io::read_model(path)? else {
                return Err(Error::domain(format!("{}: expected an rhlp model", path.display())));
            };
            let (sim, l) = single(SimSpec::from_model(&model, task.n.unwrap_or(50), seed))?;
            (sim.curves.clone(), l, Some(sim))
        }
        Scenario::Waveform => {
            let (c, l) = waveform_with(task.n.unwrap_or(500), seed, task.waveform_grid)?;
            (c, l, None)
        }
        Scenario::Complex => {
            let (c, l) = complex_classes(&switch_standins(), seed)?;
            (c, l, None)
        }
        Scenario::Homogeneous => {
            let (c, l) = homogeneous_classes(&switch_standins(), seed)?;
            (c, l, None)
        }
    };
    io::write_curves(&task.output, &curves)?;
    if let Some(path) = &task.labels {
        io::write_labels(path, &labels)?;
    }
    if let Some(path) = &task.truth_out {
        let Some(sim) = truth else {
            return Err(Error::domain("--truth-out is only available for single-model scenarios"));
        };
        let mut tsv = String::from("t\tmean\tz\n");
        for ((t, mu), z) in sim.curves.times().iter().zip(&sim.mean_curve).zip(&sim.z) {
            tsv.push_str(&format!("{t}\t{mu}\t{z}\n"));
        }
        write_file(path, &tsv)?;
    }
    eprintln!("wrote {} curves of {} points to {}", curves.n(), curves.m(), task.output.display());
    Ok(())
}

#[derive(Serialize)]
struct FitSummary {
    family: Family,
    #[serde(rename = "K")]
    k: usize,
    p: usize,
    n: usize,
    m: usize,
    loglik: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    bic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<Vec<usize>>,
}

fn fit(task: &FitTask) -> Result<()> {
    let curves = io::read_curves(&task.input)?;
    let (model, summary) = match task.family {
        Family::Rhlp => {
            let (model, trace) = fit_em(&curves, task.k, task.p, &task.em)?;
            let summary = FitSummary {
                family: Family::Rhlp,
                k: task.k,
                p: task.p,
                n: curves.n(),
                m: curves.m(),
                loglik: model.loglik,
                bic: Some(bic(&model, &curves)?),
                iterations: Some(trace.iterations),
                converged: Some(trace.converged),
                trace: Some(trace.logliks),
                gamma: None,
            };
            (Model::Rhlp(model), summary)
        }
        Family::Piecewise => {
            let model = fisher_segment_with(&curves, task.k, task.p, task.segments)?;
            let summary = FitSummary {
                family: Family::Piecewise,
                k: task.k,
                p: task.p,
                n: curves.n(),
                m: curves.m(),
                loglik: model.loglik,
                bic: None,
                iterations: None,
                converged: None,
                trace: None,
                gamma: Some(model.gamma.clone()),
            };
            (Model::Piecewise(model), summary)
        }
    };
    match &summary.bic {
        Some(b) => println!(
            "{} K={} p={} loglik={} bic={} iterations={} converged={}",
            summary.family,
            summary.k,
            summary.p,
            summary.loglik,
            b,
            summary.iterations.unwrap_or(0),
            summary.converged.unwrap_or(false)
        ),
        None => println!(
            "{} K={} p={} loglik={} gamma={:?}",
            summary.family,
            summary.k,
            summary.p,
            summary.loglik,
            summary.gamma.as_deref().unwrap_or_default()
        ),
    }
    if let Some(path) = &task.model_out {
        io::write_model(path, &model)?;
    }
    if let Some(path) = &task.output {
        write_file(path, &to_json(&summary))?;
    }
    if let Some(path) = &task.emit_plot {
        io::emit_plot_data(&model, &curves, path)?;
    }
    Ok(())
}

fn select(task: &SelectTask) -> Result<()> {
    let curves = io::read_curves(&task.input)?;
    let report = grid_select(&curves, task.k_range.clone(), task.p_range.clone(), &task.em)?;
    eprintln!("best (K, p) = ({}, {})", report.best.0, report.best.1);
    emit_report(task.output.as_deref(), to_json(&report), report.to_tsv())
}

fn labeled_input(curves_path: &Path, labels_path: &Path) -> Result<(CurveSet, Vec<i64>)> {
    let curves = io::read_curves(curves_path)?;
    let labels = io::read_labels(labels_path)?;
    if labels.len() != curves.n() {
        return Err(Error::domain(format!(
            "{} has {} labels but {} has {} curves",
            labels_path.display(),
            labels.len(),
            curves_path.display(),
            curves.n()
        )));
    }
    Ok((curves, labels))
}

fn classify(task: &ClassifyTask) -> Result<()> {
    let (curves, classifier) = match &task.source {
        ClassifierSource::Train { labels, spec } => {
            let (curves, labels) = labeled_input(&task.input, labels)?;
            let classifier = train_labeled(&curves, &labels, spec)?;
            let wrong = classifier
                .predict_all(&curves)
                .iter()
                .zip(&labels)
                .filter(|(a, b)| a != b)
                .count();
            eprintln!(
                "trained {} classes; training error {:.4}",
                classifier.classes().len(),
                wrong as f64 / curves.n() as f64
            );
            (curves, classifier)
        }
        ClassifierSource::Load(path) => {
            let Model::Classifier(c) = io::read_model(path)? else {
                return Err(Error::domain(format!("{}: expected a classifier", path.display())));
            };
            (io::read_curves(&task.input)?, c)
        }
    };
    if let Some(path) = &task.model_out {
        io::write_model(path, &Model::Classifier(classifier.clone()))?;
    }
    if let Some(path) = &task.output {
        if curves.m() != classifier.m() {
            return Err(Error::domain(format!(
                "curves have {} points but the classifier was trained on {}",
                curves.m(),
                classifier.m()
            )));
        }
        let mut csv = String::from("label");
        for c in classifier.classes() {
            csv.push_str(&format!(",posterior_{}", c.label));
        }
        csv.push('\n');
        for row in curves.rows() {
            let post = classifier.class_posteriors(row);
            let label = classifier.classes()[crate::classify::argmax(&post)].label;
            csv.push_str(&label.to_string());
            for v in post {
                csv.push_str(&format!(",{v}"));
            }
            csv.push('\n');
        }
        write_file(path, &csv)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CvSummary {
    repetitions: Vec<CvReport>,
    mean_error: f64,
    std_error: f64,
}

fn cv(task: &CvTask, seed: u64) -> Result<()> {
    let (curves, labels) = labeled_input(&task.input, &task.labels)?;
    let reports = (0..task.repetitions)
        .map(|r| kfold_cv(&curves, &labels, task.folds, &task.spec, seed + r as u64))
        .collect::<Result<Vec<_>>>()?;
    let means: Vec<f64> = reports.iter().map(|r| r.mean_error).collect();
    let (mean_error, across) = mean_std(&means);
    // One repetition: spread across folds; several: spread of the repetition means.
    let std_error = if reports.len() == 1 { reports[0].std_error } else { across };
    let summary = CvSummary {
        repetitions: reports,
        mean_error,
        std_error,
    };
    eprintln!(
        "{} {}-fold CV error: {:.4} ({:.4})",
        task.spec.family, task.folds, summary.mean_error, summary.std_error
    );
    let mut tsv = String::from("seed\tfold\terror\n");
    for r in &summary.repetitions {
        for (f, e) in r.folds.iter().enumerate() {
            tsv.push_str(&format!("{}\t{}\t{e}\n", r.seed, f + 1));
        }
    }
    tsv.push_str(&format!("mean\t\t{}\nstd\t\t{}\n", summary.mean_error, summary.std_error));
    emit_report(task.output.as_deref(), to_json(&summary), tsv)
}

fn bench(task: &BenchTask) -> Result<()> {
    let report = runtime_bench(&task.bench)?;
    emit_report(task.output.as_deref(), to_json(&report), report.to_tsv())
}

/// Executes a validated configuration.
pub fn run(config: &RunConfig) -> Result<()> {
    let go = || match &config.task {
        Task::Simulate(t) => simulate(t, config.seed),
        Task::Fit(t) => fit(t),
        Task::Select(t) => select(t),
        Task::Classify(t) => classify(t),
        Task::Cv(t) => cv(t, config.seed),
        Task::Bench(t) => bench(t),
    };
    match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::domain(format!("cannot start {n} threads: {e}")))?
            .install(go),
        None => go(),
    }
}

/// Full program: logging setup, parsing, execution; returns the exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("REGIMECURVE_LOG", "warn")).try_init();
    let config = match parse_args(argv) {
        Ok(c) => c,
        Err(e @ ArgsError::Info(_)) => {
            print!("{e}");
            return e.exit_code();
        }
        Err(e) => {
            eprintln!("{}", e.to_string().trim_end());
            return e.exit_code();
        }
    };
    match run(&config) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &str) -> std::result::Result<RunConfig, ArgsError> {
        parse_args(std::iter::once("regimecurve").chain(args.split_whitespace()))
    }

    #[test]
    fn fit_flags_map_to_config() {
        let c = parse("fit --input c.csv --K 3 --p 2").unwrap();
        assert_eq!(c.family(), Some(Family::Rhlp));
        assert_eq!(c.seed, DEFAULT_SEED);
        let Task::Fit(t) = c.task else { panic!() };
        assert_eq!((t.k, t.p), (3, 2));
        assert_eq!(t.em.seed, 42);
    }

    #[test]
    fn segment_is_a_piecewise_fit() {
        let c = parse("segment --input c.csv --K 2 --p 1 --model-out m.json").unwrap();
        assert_eq!(c.family(), Some(Family::Piecewise));
        let Task::Fit(t) = c.task else { panic!() };
        assert_eq!(t.model_out.as_deref(), Some(Path::new("m.json")));
    }

    #[test]
    fn usage_errors_exit_2() {
        let e = parse("fit --input c.csv --K 0 --p 1").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("K must be ≥ 1"));
        for bad in [
            "fit --input c.csv --K 2",
            "fit --input c.csv --K x --p 1",
            "fit --input c.csv --K 2 --p 1 --bogus",
            "cv --input c.csv --labels l.csv --K 2 --p 1 --folds 1",
            "select --input c.csv --K-range 3..1",
            "simulate --scenario smoothness --output o.csv",
            "classify --input c.csv",
            "frobnicate",
        ] {
            assert_eq!(parse(bad).unwrap_err().exit_code(), 2, "{bad}");
        }
    }

    #[test]
    fn help_exits_0() {
        let e = parse("--help").unwrap_err();
        assert_eq!(e.exit_code(), 0);
        assert!(e.to_string().contains("segment"));
        assert_eq!(parse("fit --help").unwrap_err().exit_code(), 0);
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("1..5"), Ok((1, 5)));
        assert_eq!(parse_range("1..=5"), Ok((1, 5)));
        assert_eq!(parse_range("0-3"), Ok((0, 3)));
        assert_eq!(parse_range("2"), Ok((2, 2)));
        assert!(parse_range("5..1").is_err());
        let Task::Select(t) = parse("select --input c.csv --seed 7").unwrap().task else { panic!() };
        assert_eq!((t.k_range, t.p_range, t.em.seed), (1..=5, 0..=3, 7));
    }
}
