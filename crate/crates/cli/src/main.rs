use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use framegraph_cli::{
    cmd_benchmark, cmd_evaluate, cmd_generate, cmd_parse, cmd_train, DecodeOverrides, RunConfig,
};

/// Frame-semantic parsing by incremental graph construction.
#[derive(Parser)]
#[command(name = "framegraph", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic ontology and train/dev/test corpora.
    Generate {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        n_sentences: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train the model variant described by a JSON run configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Print one line per epoch to stderr.
        #[arg(long)]
        verbose: bool,
    },
    /// Parse a JSONL corpus with one or more chained checkpoints.
    Parse {
        /// Checkpoint directory; repeat to chain pipeline stages in order.
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Refuse to run unless the checkpoint was trained on this ontology.
        #[arg(long)]
        ontology: Option<PathBuf>,
        #[command(flatten)]
        decode: DecodeArgs,
    },
    /// Score predicted tuples against gold, aligned by sentence order.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        ontology: PathBuf,
        #[arg(long)]
        per_sentence: bool,
        /// Write the report here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Measure decoding throughput in sentences per second.
    Benchmark {
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 3)]
        runs: usize,
        #[command(flatten)]
        decode: DecodeArgs,
    },
}

#[derive(Args)]
struct DecodeArgs {
    /// Decode frames without the lexical-unit mask.
    #[arg(long)]
    no_lu_mask: bool,
    /// Turn a partial-predicate node with no partners into a predicate.
    #[arg(long)]
    promote_singleton_pprd: bool,
}

impl From<DecodeArgs> for DecodeOverrides {
    fn from(a: DecodeArgs) -> Self {
        DecodeOverrides {
            no_lu_mask: a.no_lu_mask,
            promote_singleton_pprd: a.promote_singleton_pprd,
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            seed,
            n_sentences,
            out_dir,
        } => {
            let summary = cmd_generate(seed, n_sentences, &out_dir)?;
            println!("{}", serde_json::to_string(&summary)?);
        }
        Command::Train { config, verbose } => {
            let config = RunConfig::load(&config)?;
            let summary = cmd_train(&config, |r| {
                if verbose {
                    eprintln!(
                        "{:?} epoch {}: loss_n {:.4} loss_e {:.4} dev F1 target {:.4} frame {:.4} role {:.4}",
                        r.stage,
                        r.epoch,
                        r.loss_n,
                        r.loss_e,
                        r.dev_target_f1,
                        r.dev_frame_f1,
                        r.dev_role_f1
                    );
                }
            })?;
            println!("{}", serde_json::to_string(&summary.stages)?);
        }
        Command::Parse {
            checkpoints,
            input,
            output,
            ontology,
            decode,
        } => {
            let n = cmd_parse(
                &checkpoints,
                &input,
                &output,
                ontology.as_deref(),
                decode.into(),
            )?;
            eprintln!("parsed {n} sentences into {}", output.display());
        }
        Command::Evaluate {
            pred,
            gold,
            ontology,
            per_sentence,
            output,
        } => {
            let report = cmd_evaluate(&pred, &gold, &ontology, per_sentence)?;
            let text = serde_json::to_string_pretty(&report)?;
            match output {
                Some(path) => std::fs::write(&path, text + "\n")
                    .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?,
                None => println!("{text}"),
            }
        }
        Command::Benchmark {
            checkpoints,
            corpus,
            runs,
            decode,
        } => {
            let report = cmd_benchmark(&checkpoints, &corpus, runs, decode.into())?;
            println!("{}", serde_json::to_string(&report)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
