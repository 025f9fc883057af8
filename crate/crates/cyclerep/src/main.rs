//! Command-line experiment runner.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use cyclerep::harness::{self, AblationAxis, EmbeddingSource, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "cyclerep",
    version,
    about = "Self-supervised phase embeddings for periodic sequences: \
             dataset generation, training, evaluation, anomaly scoring"
)]
struct Cli {
    /// JSON experiment config; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config value by dotted path, e.g. `train.margin=0.3`
    /// or `seeds=[1,2,3]`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Shortcut for `output_dir=...`.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic train/test datasets per seed.
    Gen,
    /// Train the projection head on the train split.
    Train,
    /// Embed the test split with the trained head.
    Embed,
    /// Weighted k-NN periodicity metrics on the test split.
    Eval {
        /// Embedding source: trained head, frozen-encoder baseline or
        /// random baseline.
        #[arg(long, default_value = "trained")]
        source: String,
    },
    /// Unsupervised anomaly scoring of the anomalous test videos.
    Anomaly,
    /// TSM / autocorrelation / PCA / NN-distance diagnostic dumps.
    Diag,
    /// Full chain: gen, train, embed, eval (trained + frozen), anomaly, diag.
    Run,
    /// Re-run the pipeline across a parameter grid and tabulate.
    Ablate {
        /// Grid axis: sampling_strategy, augment_mode, sequence_length,
        /// output_dim, head_variant, l2norm or data_fraction.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
    },
}

fn run(cli: Cli) -> cyclerep::Result<()> {
    let mut overrides = cli.overrides.clone();
    if let Some(dir) = &cli.output_dir {
        overrides.push(format!("output_dir={}", serde_json::json!(dir)));
    }
    let cfg = ExperimentConfig::load(cli.config.as_deref(), &overrides)?;

    match cli.command {
        Command::Gen => harness::cmd_gen(&cfg),
        Command::Train => harness::cmd_train(&cfg),
        Command::Embed => harness::cmd_embed(&cfg),
        Command::Eval { source } => {
            let source = match source.as_str() {
                "trained" => EmbeddingSource::Trained,
                "frozen" => EmbeddingSource::Frozen,
                "random" => EmbeddingSource::Random,
                other => {
                    return Err(cyclerep::Error::Config(format!(
                        "unknown eval source {other:?} (trained, frozen or random)"
                    )))
                }
            };
            harness::cmd_eval(&cfg, source)
        }
        Command::Anomaly => harness::cmd_anomaly(&cfg),
        Command::Diag => harness::cmd_diag(&cfg),
        Command::Run => harness::cmd_run(&cfg),
        Command::Ablate { axis, values } => {
            let axis = AblationAxis::parse(&axis)?;
            harness::cmd_ablate(&cfg, axis, &values)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
