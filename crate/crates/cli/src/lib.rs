//! Command implementations behind the `framegraph` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use framegraph::corpus::{
    corpus_stats, generate_fixture, load_corpus, save_corpus, AnnotatedSentence, CorpusStats,
    FixtureOptions, FrameOntology,
};
use framegraph::encoder::{
    EncoderConfig, EncoderKind, HashingPieceEncoder, PieceEncoder, Vocabulary,
};
use framegraph::metrics::{evaluate_corpus, EvalReport};
use framegraph::model::Pipeline;
use framegraph::training::{
    evaluate_pipeline, read_json, train, write_json, write_metrics_log, Checkpoint, CheckpointMeta,
    EpochRecord, ModelSpec, StageSummary, CHECKPOINT_FILE, METRICS_FILE,
};
use serde::{Deserialize, Serialize};

mod config;

pub use config::{Flags, RunConfig};

/// Effective configuration written next to a checkpoint.
pub const CONFIG_ECHO: &str = "config.json";
/// Dev-set report written next to a checkpoint.
pub const DEV_REPORT: &str = "dev_report.json";

/// Character width of the pieces of the bundled external backend.
const PIECE_CHARS: usize = 3;

/// Piece encoder used when the configuration asks for an external
/// contextual encoder. Only the hashing stand-in ships with the crate.
pub fn external_backend(config: &EncoderConfig) -> Option<Arc<dyn PieceEncoder>> {
    match config.encoder_kind {
        EncoderKind::ExternalContextual => Some(Arc::new(HashingPieceEncoder::new(
            config.word_dim,
            PIECE_CHARS,
        ))),
        EncoderKind::TinyEmbedding => None,
    }
}

// ---------------------------------------------------------------------------
// generate

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub seed: u64,
    pub train: CorpusStats,
    pub dev: CorpusStats,
    pub test: CorpusStats,
}

/// Sizes of the 80/10/10 split of `n` sentences.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let dev = n / 10;
    let test = n / 10;
    (n - dev - test, dev, test)
}

pub fn cmd_generate(seed: u64, n_sentences: usize, out_dir: &Path) -> Result<GenerateSummary> {
    ensure!(n_sentences > 0, "n_sentences must be positive");
    let (ontology, sentences) = generate_fixture(seed, n_sentences, &FixtureOptions::default());
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    ontology.save(out_dir.join("ontology.json"))?;
    let (n_train, n_dev, _) = split_sizes(n_sentences);
    let (train_set, rest) = sentences.split_at(n_train);
    let (dev_set, test_set) = rest.split_at(n_dev);
    for (name, part) in [("train", train_set), ("dev", dev_set), ("test", test_set)] {
        save_corpus(out_dir.join(format!("{name}.jsonl")), part)?;
    }
    Ok(GenerateSummary {
        seed,
        train: corpus_stats(train_set),
        dev: corpus_stats(dev_set),
        test: corpus_stats(test_set),
    })
}

// ---------------------------------------------------------------------------
// train

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub stages: Vec<StageSummary>,
    pub history: Vec<EpochRecord>,
    pub dev: EvalReport,
}

pub fn cmd_train(config: &RunConfig, on_epoch: impl FnMut(&EpochRecord)) -> Result<TrainSummary> {
    config.validate()?;
    let ontology = FrameOntology::load(&config.ontology_path)?;
    let train_set = load_corpus(&config.train_path, &ontology)?;
    let dev_set = match &config.dev_path {
        Some(p) => load_corpus(p, &ontology)?,
        None => Vec::new(),
    };
    ensure!(
        !train_set.is_empty(),
        "training corpus {} is empty",
        config.train_path.display()
    );

    let ontology = Arc::new(ontology);
    let spec = ModelSpec {
        encoder: config.encoder.clone(),
        vocab: Vocabulary::from_corpus(&train_set),
        ontology: ontology.clone(),
        external: external_backend(&config.encoder),
        decode: config.flags.decode_options(),
    };
    let outcome = train(&spec, &train_set, &dev_set, &config.train, on_epoch)?;

    let dir = &config.checkpoint_dir;
    let meta = CheckpointMeta {
        variant: config.train.model_variant,
        stages: outcome.stages.clone(),
        encoder: config.encoder.clone(),
        decode: spec.decode,
        ontology_digest: ontology.digest(),
        vocab_digest: spec.vocab.digest(),
    };
    Checkpoint::save(dir, &meta, &outcome.pipeline)?;
    write_json(&dir.join(CONFIG_ECHO), config)?;
    write_metrics_log(&dir.join(METRICS_FILE), &outcome.history)?;
    write_json(&dir.join(DEV_REPORT), &outcome.final_dev)?;
    Ok(TrainSummary {
        stages: outcome.stages,
        history: outcome.history,
        dev: outcome.final_dev,
    })
}

// ---------------------------------------------------------------------------
// parse

/// Loads checkpoints and chains their stages in the given order. All of
/// them must share one ontology; `ontology` (when given) must match it too.
pub fn load_pipeline(
    checkpoints: &[PathBuf],
    ontology: Option<&FrameOntology>,
) -> Result<(Pipeline, Vec<CheckpointMeta>)> {
    ensure!(
        !checkpoints.is_empty(),
        "at least one checkpoint is required"
    );
    let mut stages = Vec::new();
    let mut metas: Vec<CheckpointMeta> = Vec::new();
    for dir in checkpoints {
        // The backend must exist before the networks can be rebuilt.
        let peek: CheckpointMeta = read_json(&dir.join(CHECKPOINT_FILE))
            .with_context(|| format!("reading checkpoint {}", dir.display()))?;
        let (meta, pipeline) = Checkpoint::load(dir, ontology, external_backend(&peek.encoder))
            .with_context(|| format!("loading checkpoint {}", dir.display()))?;
        if let Some(first) = metas.first() {
            if first.ontology_digest != meta.ontology_digest {
                bail!(
                    "checkpoint {} uses ontology {} but {} uses {}",
                    dir.display(),
                    meta.ontology_digest,
                    checkpoints[0].display(),
                    first.ontology_digest
                );
            }
        }
        stages.extend(pipeline.stages);
        metas.push(meta);
    }
    Ok((Pipeline::new(stages)?, metas))
}

/// Decoding switches for `parse` and `benchmark`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeOverrides {
    pub no_lu_mask: bool,
    pub promote_singleton_pprd: bool,
}

fn apply_overrides(pipeline: &mut Pipeline, overrides: DecodeOverrides) {
    for network in &mut pipeline.stages {
        let mut d = network.decode_options();
        if overrides.no_lu_mask {
            d.lu_mask = false;
        }
        if overrides.promote_singleton_pprd {
            d.promote_singleton_pprd = true;
        }
        network.set_decode_options(d);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParseEcho {
    pub checkpoints: Vec<PathBuf>,
    pub input: PathBuf,
    pub output: PathBuf,
    pub variants: Vec<String>,
    pub overrides: DecodeOverrides,
}

/// Parses `input`, writes predicted sentences to `output` and the effective
/// settings to `<output>.config.json`. Returns the number of sentences.
pub fn cmd_parse(
    checkpoints: &[PathBuf],
    input: &Path,
    output: &Path,
    ontology_path: Option<&Path>,
    overrides: DecodeOverrides,
) -> Result<usize> {
    let given = ontology_path.map(FrameOntology::load).transpose()?;
    let (mut pipeline, metas) = load_pipeline(checkpoints, given.as_ref())?;
    apply_overrides(&mut pipeline, overrides);
    let ontology = pipeline.stages[0].ontology().clone();
    let sentences = load_corpus(input, &ontology)?;
    let parsed = parse_all(&pipeline, &sentences)?;
    save_corpus(output, &parsed)?;
    let echo = ParseEcho {
        checkpoints: checkpoints.to_vec(),
        input: input.to_path_buf(),
        output: output.to_path_buf(),
        variants: metas.iter().map(|m| m.variant.name().to_string()).collect(),
        overrides,
    };
    write_json(&echo_path(output), &echo)?;
    Ok(parsed.len())
}

pub fn echo_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".config.json");
    output.with_file_name(name)
}

pub fn parse_all(
    pipeline: &Pipeline,
    sentences: &[AnnotatedSentence],
) -> Result<Vec<AnnotatedSentence>> {
    sentences
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let prediction = pipeline.parse(s).with_context(|| format!("sentence {i}"))?;
            Ok(AnnotatedSentence {
                tuples: prediction.tuples,
                ..s.clone()
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// evaluate

pub fn cmd_evaluate(
    pred: &Path,
    gold: &Path,
    ontology_path: &Path,
    per_sentence: bool,
) -> Result<EvalReport> {
    let ontology = FrameOntology::load(ontology_path)?;
    let pred = load_corpus(pred, &ontology)?;
    let gold = load_corpus(gold, &ontology)?;
    Ok(evaluate_corpus(&pred, &gold, per_sentence)?)
}

/// Scores a checkpoint chain directly on a gold corpus (module scores from
/// the parse graph where available).
pub fn evaluate_checkpoints(checkpoints: &[PathBuf], gold: &Path) -> Result<EvalReport> {
    let (pipeline, _) = load_pipeline(checkpoints, None)?;
    let sentences = load_corpus(gold, pipeline.stages[0].ontology())?;
    Ok(evaluate_pipeline(&pipeline, &sentences, false)?)
}

// ---------------------------------------------------------------------------
// benchmark

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub sentences: usize,
    /// Sentences per second of each timed run.
    pub runs: Vec<f64>,
    pub median: f64,
}

/// Decoding throughput: one warm-up pass, then `runs` (at least 3) timed
/// passes over the gold-stripped corpus; the median is reported.
pub fn benchmark_pipeline(
    pipeline: &Pipeline,
    sentences: &[AnnotatedSentence],
    runs: usize,
) -> Result<BenchmarkReport> {
    ensure!(!sentences.is_empty(), "benchmark corpus is empty");
    let runs = runs.max(3);
    let stripped: Vec<AnnotatedSentence> =
        sentences.iter().map(AnnotatedSentence::stripped).collect();
    parse_all(pipeline, &stripped)?;
    let mut rates = Vec::with_capacity(runs);
    for _ in 0..runs {
        let start = Instant::now();
        parse_all(pipeline, &stripped)?;
        let secs = start.elapsed().as_secs_f64().max(1e-9);
        rates.push(stripped.len() as f64 / secs);
    }
    let mut sorted = rates.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(BenchmarkReport {
        sentences: stripped.len(),
        median: sorted[sorted.len() / 2],
        runs: rates,
    })
}

pub fn cmd_benchmark(
    checkpoints: &[PathBuf],
    corpus: &Path,
    runs: usize,
    overrides: DecodeOverrides,
) -> Result<BenchmarkReport> {
    let (mut pipeline, _) = load_pipeline(checkpoints, None)?;
    apply_overrides(&mut pipeline, overrides);
    let sentences = load_corpus(corpus, pipeline.stages[0].ontology())?;
    benchmark_pipeline(&pipeline, &sentences, runs)
}
