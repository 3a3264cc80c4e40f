use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use cfprobe::config::{
    AnchorMode, Correctness, DatasetFormat, ExperimentConfig, FileConfig, Overrides, ENDPOINT_URL_ENV,
};
use cfprobe::error::CliError;
use cfprobe::{pipeline, serve};
use cfprobe_core::color::ColorMetric;
use cfprobe_core::kind::PerturbationKind;
use cfprobe_core::model::MockModel;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Probe a VQA model with knowledge-guided counterfactual questions.
#[derive(Debug, Parser)]
#[command(name = "cfprobe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    experiment: ExperimentArgs,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate counterfactual questions for each configured kind.
    Perturb,
    /// Generate counterfactuals and ask the model original and counterfactual questions.
    Run,
    /// Score recorded answers and mine rules.
    Report,
    /// Run, then report.
    All,
    /// Serve a mock answer table over the model HTTP protocol.
    ServeMock {
        /// Mock table JSON file.
        #[arg(long)]
        table: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Vqa2,
    Vg,
    Toy,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MetricArg {
    EuclideanRgb,
    DeltaE76Lab,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CorrectnessArg {
    Auto,
    ExactAny,
    VqaSoft,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AnchorArg {
    Lemma,
    Hypernym,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    dataset_format: Option<FormatArg>,
    /// Question file (toy JSONL, VQA v2 questions JSON or Visual Genome QA JSON).
    #[arg(long, global = true)]
    questions: Option<PathBuf>,
    /// VQA v2 annotations JSON.
    #[arg(long, global = true)]
    annotations: Option<PathBuf>,
    #[arg(long, global = true)]
    wordnet_dir: Option<PathBuf>,
    /// Color table CSV (`name,#RRGGBB`); defaults to the bundled CSS palette.
    #[arg(long, global = true)]
    colors: Option<PathBuf>,
    #[arg(long, global = true)]
    stoplist: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    color_metric: Option<MetricArg>,
    /// Perturbation kind; repeat for several (e.g. `--kind synonym-verb`).
    #[arg(long = "kind", global = true, value_parser = parse_kind)]
    kinds: Vec<PerturbationKind>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, conflicts_with = "mock_table")]
    endpoint_url: Option<String>,
    #[arg(long, global = true)]
    mock_table: Option<PathBuf>,
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    #[arg(long, global = true, value_enum)]
    correctness: Option<CorrectnessArg>,
    #[arg(long, global = true)]
    min_support: Option<usize>,
    #[arg(long, global = true)]
    stable_threshold: Option<f64>,
    #[arg(long, global = true)]
    volatile_threshold: Option<f64>,
    #[arg(long, global = true, value_enum)]
    anchor: Option<AnchorArg>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<PerturbationKind, String> {
    s.parse()
        .map_err(|_| {
            let names: Vec<String> = PerturbationKind::ALL.iter().map(|k| k.to_string()).collect();
            format!("unknown kind {s:?}; expected one of {}", names.join(", "))
        })
}

impl ExperimentArgs {
    fn into_config(self) -> Result<ExperimentConfig, CliError> {
        let file = match &self.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let overrides = Overrides {
            dataset_format: self.dataset_format.map(|f| match f {
                FormatArg::Vqa2 => DatasetFormat::Vqa2,
                FormatArg::Vg => DatasetFormat::Vg,
                FormatArg::Toy => DatasetFormat::Toy,
            }),
            questions: self.questions,
            annotations: self.annotations,
            wordnet_dir: self.wordnet_dir,
            colors: self.colors,
            stoplist: self.stoplist,
            color_metric: self.color_metric.map(|m| match m {
                MetricArg::EuclideanRgb => ColorMetric::EuclideanRgb,
                MetricArg::DeltaE76Lab => ColorMetric::DeltaE76Lab,
            }),
            kinds: self.kinds,
            seed: self.seed,
            endpoint_url: self.endpoint_url,
            mock_table: self.mock_table,
            parallelism: self.parallelism,
            correctness: self.correctness.map(|c| match c {
                CorrectnessArg::Auto => Correctness::Auto,
                CorrectnessArg::ExactAny => Correctness::ExactAny,
                CorrectnessArg::VqaSoft => Correctness::VqaSoft,
            }),
            min_support: self.min_support,
            stable_threshold: self.stable_threshold,
            volatile_threshold: self.volatile_threshold,
            anchor: self.anchor.map(|a| match a {
                AnchorArg::Lemma => AnchorMode::Lemma,
                AnchorArg::Hypernym => AnchorMode::Hypernym,
            }),
            out: self.out,
            env_endpoint_url: std::env::var(ENDPOINT_URL_ENV).ok().filter(|s| !s.is_empty()),
        };
        ExperimentConfig::build(file, overrides)
    }
}

async fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::ServeMock { table, bind } => {
            let model = MockModel::load(&table).map_err(|e| CliError::Input(e.to_string()))?;
            serve::serve_mock(model, bind).await
        }
        Command::Perturb => {
            let cfg = cli.experiment.into_config()?;
            let out = pipeline::cmd_perturb(&cfg)?;
            for (kind, s) in &out.skips.kinds {
                println!("{kind}: {} generated, {} skipped", s.generated, s.stats.total());
            }
            Ok(())
        }
        Command::Run => {
            let cfg = cli.experiment.into_config()?;
            let summary = pipeline::cmd_run(&cfg).await?;
            println!("{} requests, {} failed", summary.requests, summary.failed);
            Ok(())
        }
        Command::Report => {
            let cfg = cli.experiment.into_config()?;
            print_report(&pipeline::cmd_report(&cfg)?);
            Ok(())
        }
        Command::All => {
            let cfg = cli.experiment.into_config()?;
            let summary = pipeline::cmd_run(&cfg).await?;
            println!("{} requests, {} failed", summary.requests, summary.failed);
            print_report(&pipeline::cmd_report(&cfg)?);
            Ok(())
        }
    }
}

fn print_report(out: &pipeline::ReportOutput) {
    print!("{}", pipeline::render_accuracy(&out.accuracy));
    for rule in &out.rules.rules {
        println!("{}", rule.summary_line());
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match execute(cli).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
