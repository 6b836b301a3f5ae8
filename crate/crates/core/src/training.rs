//! Training loop, evaluation of pipelines, and checkpoints.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedSentence, FrameOntology};
use crate::decoder::DecodeOptions;
use crate::edge_builder::PairMode;
use crate::encoder::{EncoderConfig, EncoderKind, PieceEncoder, Vocabulary};
use crate::error::{Error, Result};
use crate::metrics::{eval_modules, EvalReport, Evaluator, ModuleGraph};
use crate::model::{
    sentence_lemmas, LossBreakdown, LossOptions, ModelVariant, Network, Pipeline, Stage,
};
use crate::nn::{AdamW, ForwardCtx, Matrix, Param, ParamGroup, Tape};
use crate::node_builder::GoldGraph;
use crate::semicrf::GoldCoverage;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Learning rate of the word-level encoder parameters. Defaults to
    /// 1e-5 for an external encoder and to `lr_other` otherwise.
    pub lr_encoder: Option<f64>,
    pub lr_other: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub model_variant: ModelVariant,
    pub pair_mode: PairMode,
    pub null_span_keep_rate: f64,
    /// Keep the token-embedding group (the pluggable encoder part) at its
    /// initial values.
    pub freeze_encoder: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 8,
            lr_encoder: None,
            lr_other: 1e-3,
            weight_decay: 0.01,
            grad_clip: 5.0,
            early_stop_patience: 20,
            max_epochs: 100,
            seed: 13,
            model_variant: ModelVariant::Joint,
            pair_mode: PairMode::GoldNodes,
            null_span_keep_rate: 1.0,
            freeze_encoder: false,
        }
    }
}

impl TrainConfig {
    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if !(self.lr_other > 0.0) || self.lr_encoder.is_some_and(|lr| !(lr > 0.0)) {
            return fail("learning rates must be positive");
        }
        if self.early_stop_patience == 0 {
            return fail("early_stop_patience must be at least 1");
        }
        if !(self.grad_clip > 0.0) {
            return fail("grad_clip must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return fail("weight_decay must be non-negative");
        }
        if !(self.null_span_keep_rate > 0.0 && self.null_span_keep_rate <= 1.0) {
            return fail("null_span_keep_rate must lie in (0, 1]");
        }
        Ok(())
    }

    pub fn effective_lr_encoder(&self, kind: EncoderKind) -> f64 {
        self.lr_encoder.unwrap_or(match kind {
            EncoderKind::ExternalContextual => 1e-5,
            EncoderKind::TinyEmbedding => self.lr_other,
        })
    }

    fn loss_options(&self) -> LossOptions {
        LossOptions {
            pair_mode: self.pair_mode,
            null_span_keep_rate: self.null_span_keep_rate,
        }
    }
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: Stage,
    pub epoch: usize,
    /// Mean node loss per training sentence.
    pub loss_n: f64,
    /// Mean edge loss per training sentence.
    pub loss_e: f64,
    pub dev_target_f1: f64,
    pub dev_frame_f1: f64,
    pub dev_role_f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: Stage,
    pub best_epoch: usize,
    pub best_metric: f64,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub pipeline: Pipeline,
    pub stages: Vec<StageSummary>,
    pub history: Vec<EpochRecord>,
    pub final_dev: EvalReport,
}

/// Per-sentence gold structures reused every epoch.
struct Prepared<'a> {
    sentence: &'a AnnotatedSentence,
    gold: GoldGraph,
    lemmas: Vec<String>,
}

fn prepare<'a>(sentences: &'a [AnnotatedSentence], network: &Network) -> Result<Vec<Prepared<'a>>> {
    let max_len = network.encoder().config().max_span_length;
    sentences
        .iter()
        .map(|s| {
            Ok(Prepared {
                sentence: s,
                gold: GoldGraph::build(s, network.ontology(), network.role_labels(), max_len),
                lemmas: sentence_lemmas(s)?,
            })
        })
        .collect()
}

/// Loss of a batch in evaluation mode (no dropout, no sampling).
pub fn compute_loss(
    network: &Network,
    batch: &[AnnotatedSentence],
    options: &LossOptions,
) -> Result<LossBreakdown> {
    let tape = Tape::new();
    let ctx = ForwardCtx::eval(&tape, network.store());
    let mut total = LossBreakdown::default();
    for p in prepare(batch, network)? {
        total += network
            .sentence_loss(&ctx, p.sentence, &p.gold, &p.lemmas, options)?
            .breakdown;
    }
    Ok(total)
}

/// Gradient coverage counts for the semi-CRF stage (roles that could not be
/// put into a gold segmentation).
pub fn semicrf_coverage(
    network: &Network,
    sentences: &[AnnotatedSentence],
) -> Result<GoldCoverage> {
    let tape = Tape::new();
    let ctx = ForwardCtx::eval(&tape, network.store());
    let mut coverage = GoldCoverage::default();
    for p in prepare(sentences, network)? {
        coverage += network
            .sentence_loss(
                &ctx,
                p.sentence,
                &p.gold,
                &p.lemmas,
                &LossOptions::default(),
            )?
            .coverage;
    }
    Ok(coverage)
}

/// Runs a pipeline over gold sentences and scores it. Module scores come
/// from the parse graph when the pipeline produces a complete one, and from
/// the graph implied by the output tuples otherwise.
pub fn evaluate_pipeline(
    pipeline: &Pipeline,
    gold: &[AnnotatedSentence],
    per_sentence: bool,
) -> Result<EvalReport> {
    let ontology = pipeline.stages[0].ontology();
    let role_labels = pipeline.stages[0].role_labels();
    let full = pipeline.has_full_graph();
    let mut evaluator = Evaluator::new(per_sentence);
    for sentence in gold {
        let prediction = pipeline.parse(sentence)?;
        let modules = full.then(|| {
            eval_modules(
                &prediction.graph.module_view(ontology, role_labels),
                &ModuleGraph::from_tuples(&sentence.tuples),
            )
        });
        evaluator.add(
            sentence.id.as_deref(),
            &prediction.tuples,
            &sentence.tuples,
            modules,
        );
    }
    Ok(evaluator.report())
}

/// Number that early stopping maximizes for a stage of a variant.
pub fn selection_metric(variant: ModelVariant, stage: Stage, report: &EvalReport) -> f64 {
    match (variant, stage) {
        (_, Stage::Node) => (report.node.f1 + report.frame_module.f1) / 2.0,
        (ModelVariant::Predicate, _) => report.target.f1,
        (ModelVariant::Frame | ModelVariant::PredicateFrame, _) => report.frame.f1,
        _ => report.role.f1,
    }
}

/// Ordering key for model selection: the selection metric, then role,
/// frame and target F1, then lower training loss. Compared
/// lexicographically so that flat stretches of the main metric (common at
/// the start of training) still register progress.
pub fn selection_key(
    variant: ModelVariant,
    stage: Stage,
    report: &EvalReport,
    train_loss: f64,
) -> Vec<f64> {
    vec![
        selection_metric(variant, stage, report),
        report.role.f1,
        report.frame.f1,
        report.target.f1,
        -train_loss,
    ]
}

fn improves(candidate: &[f64], best: &[f64]) -> bool {
    for (c, b) in candidate.iter().zip(best) {
        if c != b {
            return c > b;
        }
    }
    false
}

/// Everything needed to build fresh networks for a run.
#[derive(Clone)]
pub struct ModelSpec {
    pub encoder: EncoderConfig,
    pub vocab: Vocabulary,
    pub ontology: Arc<FrameOntology>,
    pub external: Option<Arc<dyn PieceEncoder>>,
    pub decode: DecodeOptions,
}

impl ModelSpec {
    pub fn build(&self, stage: Stage, seed: u64) -> Result<Network> {
        Network::new(
            stage,
            &self.encoder,
            self.vocab.clone(),
            self.ontology.clone(),
            self.external.clone(),
            self.decode,
            seed,
        )
    }

    /// Untrained networks for every stage of a variant.
    pub fn build_variant(&self, variant: ModelVariant, seed: u64) -> Result<Pipeline> {
        let stages = variant
            .stages()
            .into_iter()
            .enumerate()
            .map(|(i, stage)| self.build(stage, stage_seed(seed, i)))
            .collect::<Result<Vec<_>>>()?;
        Pipeline::new(stages)
    }
}

fn stage_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index as u64 + 1))
}

/// Trains every stage of `config.model_variant` in order. Each stage is
/// selected on the dev set with the stages before it fixed; with an empty
/// dev set, selection falls back to the lowest training loss.
pub fn train(
    spec: &ModelSpec,
    train_set: &[AnnotatedSentence],
    dev_set: &[AnnotatedSentence],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let variant = config.model_variant;
    let mut stages: Vec<Network> = Vec::new();
    let mut summaries = Vec::new();
    let mut history = Vec::new();
    for (index, stage) in variant.stages().into_iter().enumerate() {
        let seed = stage_seed(config.seed, index);
        stages.push(spec.build(stage, seed)?);
        let mut pipeline = Pipeline::new(stages)?;
        let summary = train_last_stage(
            &mut pipeline,
            variant,
            train_set,
            dev_set,
            config,
            seed,
            |r| {
                on_epoch(r);
                history.push(r.clone());
            },
        )?;
        summaries.push(summary);
        stages = pipeline.stages;
    }
    let pipeline = Pipeline::new(stages)?;
    let final_dev = evaluate_pipeline(&pipeline, dev_set, false)?;
    Ok(TrainOutcome {
        pipeline,
        stages: summaries,
        history,
        final_dev,
    })
}

fn train_last_stage(
    pipeline: &mut Pipeline,
    variant: ModelVariant,
    train_set: &[AnnotatedSentence],
    dev_set: &[AnnotatedSentence],
    config: &TrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<StageSummary> {
    let last = pipeline.stages.len() - 1;
    let stage = pipeline.stages[last].stage();
    let options = config.loss_options();
    let kind = pipeline.stages[last].encoder().config().encoder_kind;
    let prepared = prepare(train_set, &pipeline.stages[last])?;
    let mut optimizer = AdamW::new(
        pipeline.stages[last].store(),
        config.effective_lr_encoder(kind),
        config.lr_other,
        config.weight_decay,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut best: Option<(Vec<f64>, usize, BTreeMap<String, Matrix>)> = None;
    let mut since_best = 0;
    let mut epochs_run = 0;
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        epochs_run = epoch;
        order.shuffle(&mut rng);
        let mut epoch_loss = LossBreakdown::default();
        for batch in order.chunks(config.batch_size) {
            let network = &mut pipeline.stages[last];
            let tape = Tape::new();
            network.store_mut().zero_grads();
            let root = {
                let ctx =
                    ForwardCtx::train(&tape, network.store(), ChaCha8Rng::seed_from_u64(rng.gen()));
                let mut totals = Vec::new();
                for &i in batch {
                    let p = &prepared[i];
                    let loss =
                        network.sentence_loss(&ctx, p.sentence, &p.gold, &p.lemmas, &options)?;
                    epoch_loss += loss.breakdown;
                    totals.extend(loss.total);
                }
                (!totals.is_empty()).then(|| tape.sum_scalars(&totals))
            };
            if let Some(root) = root {
                tape.backward(root, network.store_mut());
                let trainable = |p: &Param| {
                    stage.is_trainable(p)
                        && !(config.freeze_encoder && p.group == ParamGroup::Encoder)
                };
                network
                    .store_mut()
                    .clip_grad_norm(config.grad_clip, trainable);
                optimizer.step(network.store_mut(), trainable);
            }
        }
        let scale = 1.0 / prepared.len() as f64;
        let dev = evaluate_pipeline(pipeline, dev_set, false)?;
        let record = EpochRecord {
            stage,
            epoch,
            loss_n: epoch_loss.loss_n * scale,
            loss_e: epoch_loss.loss_e * scale,
            dev_target_f1: dev.target.f1,
            dev_frame_f1: dev.frame.f1,
            dev_role_f1: dev.role.f1,
        };
        on_epoch(&record);
        let key = if dev_set.is_empty() {
            vec![-epoch_loss.total()]
        } else {
            selection_key(variant, stage, &dev, epoch_loss.total())
        };
        if best.as_ref().is_none_or(|(b, _, _)| improves(&key, b)) {
            best = Some((key, epoch, pipeline.stages[last].store().snapshot()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.early_stop_patience {
                stopped_early = true;
                break;
            }
        }
    }
    let (best_key, best_epoch, snapshot) =
        best.ok_or_else(|| Error::Config("max_epochs must be at least 1".into()))?;
    let best_metric = best_key[0];
    pipeline.stages[last]
        .store_mut()
        .restore(&snapshot)
        .map_err(Error::Checkpoint)?;
    Ok(StageSummary {
        stage,
        best_epoch,
        best_metric,
        epochs_run,
        stopped_early,
    })
}

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const PARAMS_FILE: &str = "params.json";
pub const VOCAB_FILE: &str = "vocab.json";
pub const ONTOLOGY_FILE: &str = "ontology.json";
pub const METRICS_FILE: &str = "metrics.jsonl";

/// Checkpoint metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub variant: ModelVariant,
    pub stages: Vec<StageSummary>,
    pub encoder: EncoderConfig,
    pub decode: DecodeOptions,
    pub ontology_digest: String,
    pub vocab_digest: String,
}

pub struct Checkpoint;

impl Checkpoint {
    pub fn save(dir: &Path, meta: &CheckpointMeta, pipeline: &Pipeline) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let params: Vec<BTreeMap<String, Matrix>> = pipeline
            .stages
            .iter()
            .map(|n| n.store().snapshot())
            .collect();
        let vocab = pipeline.stages[0].encoder().vocab();
        write_json(&dir.join(CHECKPOINT_FILE), meta)?;
        write_json(&dir.join(PARAMS_FILE), &params)?;
        write_json(&dir.join(VOCAB_FILE), vocab)?;
        pipeline.stages[0].ontology().save(dir.join(ONTOLOGY_FILE))
    }

    /// Loads a checkpoint. When `ontology` is given it must match the one
    /// the checkpoint was trained with.
    pub fn load(
        dir: &Path,
        ontology: Option<&FrameOntology>,
        external: Option<Arc<dyn PieceEncoder>>,
    ) -> Result<(CheckpointMeta, Pipeline)> {
        let meta: CheckpointMeta = read_json(&dir.join(CHECKPOINT_FILE))?;
        let stored = FrameOntology::load(dir.join(ONTOLOGY_FILE))?;
        if stored.digest() != meta.ontology_digest {
            return Err(Error::Checkpoint(
                "stored ontology does not match its digest".into(),
            ));
        }
        if let Some(o) = ontology {
            if o.digest() != meta.ontology_digest {
                return Err(Error::Checkpoint(format!(
                    "ontology digest {} differs from the checkpoint's {}",
                    o.digest(),
                    meta.ontology_digest
                )));
            }
        }
        let vocab: Vocabulary = read_json(&dir.join(VOCAB_FILE))?;
        if vocab.digest() != meta.vocab_digest {
            return Err(Error::Checkpoint(format!(
                "vocabulary digest {} differs from the checkpoint's {}",
                vocab.digest(),
                meta.vocab_digest
            )));
        }
        let params: Vec<BTreeMap<String, Matrix>> = read_json(&dir.join(PARAMS_FILE))?;
        let stages = meta.variant.stages();
        if params.len() != stages.len() {
            return Err(Error::Checkpoint(format!(
                "{} parameter sets for {} stages",
                params.len(),
                stages.len()
            )));
        }
        let spec = ModelSpec {
            encoder: meta.encoder.clone(),
            vocab,
            ontology: Arc::new(stored),
            external,
            decode: meta.decode,
        };
        let mut networks = Vec::new();
        for (stage, snapshot) in stages.into_iter().zip(&params) {
            let mut network = spec.build(stage, 0)?;
            network
                .store_mut()
                .restore(snapshot)
                .map_err(Error::Checkpoint)?;
            networks.push(network);
        }
        Ok((meta, Pipeline::new(networks)?))
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes the epoch records as JSON lines.
pub fn write_metrics_log(path: &Path, records: &[EpochRecord]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for r in records {
        let line = serde_json::to_string(r)?;
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
