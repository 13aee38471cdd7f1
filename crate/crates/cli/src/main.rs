//! `csft`: run the calibration pipeline stage by stage.

mod commands;
mod error;
mod workspace;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "csft", version, about = "Confidence calibration pipeline")]
struct Cli {
    /// Run configuration file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set seeds.bootstrap=3`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Directory that relative artifact paths resolve against.
    #[arg(short = 'C', long, global = true, value_name = "DIR")]
    workdir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Shuffle the corpus and cut disjoint slices.
    Partition(PartitionArgs),
    /// Query a model endpoint for every item of a slice.
    Elicit(ElicitArgs),
    /// Parse and judge a response log.
    Grade(GradeArgs),
    /// Per-item self-consistency profiles from a sampled pass.
    Consistency(ConsistencyArgs),
    /// Write real and shuffled-target training files.
    EmitTrain(EmitTrainArgs),
    /// Signal validity metrics and paired deltas across conditions.
    Metrics(MetricsArgs),
    /// Fit linear probes over the layer/token grid.
    Probe(ProbeArgs),
    /// Evaluate the decision rules over the metrics.
    Gate(GateArgs),
    /// Generate a synthetic world, its corpus and optionally serve it.
    Simulate(SimulateArgs),
    /// Aggregate metrics, probe and gate results into the study report.
    Report(ReportArgs),
    /// Print the resolved configuration.
    ShowConfig,
}

#[derive(Args, Debug)]
pub struct PartitionArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Shuffle seed (seeds.partition).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Slice as NAME=SIZE, in cut order; replaces the configured slices.
    #[arg(long = "slice", value_name = "NAME=SIZE")]
    pub slices: Vec<String>,
    /// File of item ids to exclude (paths.exclusions).
    #[arg(long)]
    pub exclude: Option<PathBuf>,
    #[arg(long, default_value = "split_manifest.json")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Greedy,
    Sampled,
}

#[derive(Args, Debug)]
pub struct ElicitArgs {
    /// Slice of the split manifest to query.
    #[arg(long)]
    pub slice: String,
    #[arg(long, value_enum, default_value_t = Mode::Greedy)]
    pub mode: Mode,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value = "split_manifest.json")]
    pub manifest: PathBuf,
    /// Endpoint base URL (endpoint.base_url).
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Model name sent with each request (endpoint.model_name).
    #[arg(long)]
    pub model: Option<String>,
    /// Samples per item in sampled mode (elicitation.samples).
    #[arg(long)]
    pub samples: Option<u32>,
    /// Sampling temperature (elicitation.temperature).
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Serve this simulated world in-process and query it instead.
    #[arg(long, value_name = "WORLD_JSON")]
    pub mock_world: Option<PathBuf>,
    /// Defaults to responses/<slice>-<mode>.jsonl.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GradeArgs {
    #[arg(long)]
    pub responses: PathBuf,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Parser profile (policy.parser_profile).
    #[arg(long)]
    pub profile: Option<String>,
    /// Defaults to grades/<responses file name>.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ConsistencyArgs {
    /// Graded sampled pass.
    #[arg(long)]
    pub grades: PathBuf,
    #[arg(long, default_value = "consistency.jsonl")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EmitTrainArgs {
    #[arg(long, default_value = "consistency.jsonl")]
    pub consistency: PathBuf,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Keep only items whose modal answer is correct (policy.modal_filter).
    #[arg(long)]
    pub modal_filter: Option<bool>,
    /// Shuffled-control seed (seeds.shuffle).
    #[arg(long)]
    pub shuffle_seed: Option<u64>,
    #[arg(long, default_value = "train")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    /// Graded greedy pass as NAME=PATH; the first is the baseline.
    #[arg(long = "condition", value_name = "NAME=PATH", required = true)]
    pub conditions: Vec<String>,
    /// Self-consistency profiles, for difficulty bins and the n_correct signal.
    #[arg(long)]
    pub consistency: Option<PathBuf>,
    /// Response log with logprobs as NAME=PATH, for the entropy signal.
    #[arg(long = "entropy", value_name = "NAME=PATH")]
    pub entropy: Vec<String>,
    /// Bootstrap resamples (policy.bootstrap_resamples).
    #[arg(long)]
    pub resamples: Option<usize>,
    #[arg(long, default_value = "metrics.json")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ProbeArgs {
    #[arg(long)]
    pub train_states: PathBuf,
    #[arg(long)]
    pub eval_states: PathBuf,
    /// Greedy grades for the training items.
    #[arg(long)]
    pub train_grades: PathBuf,
    /// Greedy grades for the evaluation items; also the verbal baseline.
    #[arg(long)]
    pub eval_grades: PathBuf,
    #[arg(long, default_value = "probe.json")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GateArgs {
    #[arg(long, default_value = "metrics.json")]
    pub metrics: PathBuf,
    #[arg(long)]
    pub probe: Option<PathBuf>,
    /// Rules file (policy.gate).
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long, default_value = "gate.json")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Bimodal,
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Process {
    Ceiling,
    Binary,
    Graded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    FreeText,
    UppercaseLetter,
    LowercaseOption,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Link {
    Gaussian,
    Logistic,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 2000)]
    pub items: usize,
    #[arg(long, value_enum, default_value_t = Preset::Bimodal)]
    pub preset: Preset,
    /// Per-sample accuracy for the constant preset.
    #[arg(long, default_value_t = 0.5)]
    pub p_correct: f64,
    /// World seed (seeds.world).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Process::Ceiling)]
    pub confidence: Process,
    #[arg(long, default_value_t = 0.977)]
    pub ceiling_share: f64,
    #[arg(long, default_value_t = 95.0)]
    pub hi: f64,
    #[arg(long, default_value_t = 5.0)]
    pub lo: f64,
    #[arg(long, default_value_t = 0.22)]
    pub flip: f64,
    #[arg(long, value_enum, default_value_t = Link::Gaussian)]
    pub link: Link,
    #[arg(long, default_value_t = 60.0)]
    pub center: f64,
    #[arg(long, default_value_t = 20.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 15.0)]
    pub noise_sd: f64,
    #[arg(long, value_enum, default_value_t = Format::FreeText)]
    pub format: Format,
    #[arg(long, default_value_t = 0.0)]
    pub unparsed_share: f64,
    /// Also write offline greedy and sampled response logs.
    #[arg(long)]
    pub offline: bool,
    /// Also write synthetic hidden states of this width under `states/`.
    #[arg(long, value_name = "DIM")]
    pub hidden_states: Option<usize>,
    /// Separation of correct and incorrect items along the probe direction.
    #[arg(long, default_value_t = 2.0)]
    pub state_signal: f64,
    /// Serve the world as a chat-completions endpoint on this port.
    #[arg(long, value_name = "PORT")]
    pub serve: Option<u16>,
    #[arg(long, default_value = "sim")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long, default_value = "metrics.json")]
    pub metrics: PathBuf,
    #[arg(long)]
    pub probe: Option<PathBuf>,
    #[arg(long)]
    pub gate: Option<PathBuf>,
    /// Aggregate even if inputs were produced under different configurations.
    #[arg(long)]
    pub force: bool,
    /// Markdown output; the JSON twin is written alongside.
    #[arg(long, default_value = "report.md")]
    pub out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut overrides = cli.set.clone();
    if let Some(dir) = &cli.workdir {
        overrides.push(format!("paths.workdir={:?}", dir.display().to_string()));
    }
    match cli.command {
        Command::Partition(a) => commands::partition(&cli.config, overrides, a),
        Command::Elicit(a) => commands::elicit(&cli.config, overrides, a),
        Command::Grade(a) => commands::grade(&cli.config, overrides, a),
        Command::Consistency(a) => commands::consistency(&cli.config, overrides, a),
        Command::EmitTrain(a) => commands::emit_train(&cli.config, overrides, a),
        Command::Metrics(a) => commands::metrics(&cli.config, overrides, a),
        Command::Probe(a) => commands::probe(&cli.config, overrides, a),
        Command::Gate(a) => commands::gate(&cli.config, overrides, a),
        Command::Simulate(a) => commands::simulate(&cli.config, overrides, a),
        Command::Report(a) => commands::report(&cli.config, overrides, a),
        Command::ShowConfig => commands::show_config(&cli.config, overrides),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("csft: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
