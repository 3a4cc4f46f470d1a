mod commands;
mod load;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

/// Carpal tunnel syndrome measurement and diagnosis pipeline.
#[derive(Debug, Parser)]
#[command(name = "ctsd", version)]
pub struct Cli {
    /// Worker threads; 0 lets the runtime decide.
    #[arg(long, global = true, env = "CTSD_THREADS", default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with analytic ground truth.
    Synth(SynthArgs),
    /// Measure every video and write per-video and summary reports.
    Measure(MeasureArgs),
    /// Score predicted masks against ground truth.
    EvalSeg(EvalSegArgs),
    /// Train a classifier on the train split.
    Train(TrainArgs),
    /// Apply a trained model and write a predictions report.
    Diagnose(DiagnoseArgs),
    /// Compare predictions with manifest labels and write the ROC curve.
    EvalDiagnosis(EvalDiagnosisArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MaskSource {
    Gt,
    Pred,
}

impl MaskSource {
    pub fn name(self) -> &'static str {
        match self {
            MaskSource::Gt => "gt",
            MaskSource::Pred => "pred",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Policy {
    Exclude,
    Strict,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    pub cts: usize,
    #[arg(long, default_value_t = 100)]
    pub normal: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(short = 'o', long = "out")]
    pub out: PathBuf,
    /// Replace a non-empty output directory.
    #[arg(long)]
    pub force: bool,
    #[arg(long, default_value_t = 24)]
    pub frames: usize,
    /// Square image side in pixels.
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    #[arg(long, default_value_t = 0.08)]
    pub mm_per_px: f64,
    /// Skip the perturbed `pred/` masks.
    #[arg(long)]
    pub no_pred: bool,
    /// Probability of a blank predicted frame.
    #[arg(long)]
    pub dropout: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MeasureArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = MaskSource::Gt)]
    pub source: MaskSource,
    #[arg(short = 'o', long = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Policy::Exclude)]
    pub policy: Policy,
}

#[derive(Debug, Args)]
pub struct EvalSegArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(short = 'o', long = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClassifierKind {
    Rf,
    Lr,
    Svm,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = ClassifierKind::Rf)]
    pub classifier: ClassifierKind,
    #[arg(long, value_enum, default_value_t = MaskSource::Gt)]
    pub source: MaskSource,
    #[arg(short = 'o', long = "out")]
    pub out: PathBuf,
    /// Also write the training report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 135)]
    pub trees: usize,
    #[arg(long, default_value_t = 6)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 12)]
    pub min_samples_split: usize,
    #[arg(long, default_value_t = 9)]
    pub min_samples_leaf: usize,
    /// `log2`, `all` or a count.
    #[arg(long, default_value = "log2")]
    pub max_features: String,
    #[arg(long, default_value_t = 90)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-2)]
    pub l2: f64,
    #[arg(long, default_value_t = 20_000)]
    pub lr_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long = "svm-c", default_value_t = 1.0)]
    pub svm_c: f64,
    #[arg(long, default_value_t = 2_000)]
    pub svm_iters: usize,
    /// Decision threshold for the validation report.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitSel {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value_t = MaskSource::Gt)]
    pub source: MaskSource,
    #[arg(long, value_enum, default_value_t = SplitSel::Test)]
    pub split: SplitSel,
    #[arg(short = 'o', long = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalDiagnosisArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// ROC curve CSV output.
    #[arg(long)]
    pub roc: Option<PathBuf>,
    /// Also write the report here.
    #[arg(short = 'o', long = "out")]
    pub out: Option<PathBuf>,
}

/// An error with a machine-readable kind; `usage` errors exit with 2.
#[derive(Debug)]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

pub fn failure(kind: &'static str, message: impl Into<String>) -> anyhow::Error {
    Failure {
        kind,
        message: message.into(),
    }
    .into()
}

fn report_error(kind: &str, message: &str) {
    eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            report_error("usage", &e.render().to_string());
            return ExitCode::from(2);
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(pool) => pool,
        Err(e) => {
            report_error("runtime", &e.to_string());
            return ExitCode::from(1);
        }
    };
    match pool.install(|| commands::run(&cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = match e.downcast_ref::<Failure>() {
                Some(f) if f.kind == "usage" => (f.kind, 2),
                Some(f) => (f.kind, 1),
                None => ("runtime", 1),
            };
            report_error(kind, &format!("{e:#}"));
            ExitCode::from(code)
        }
    }
}
