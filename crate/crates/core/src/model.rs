//! Networks for the joint model and each derived model, and the pipelines
//! that chain them.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    lemmatize, AnnotatedSentence, FrameOntology, FrameTuple, Predicate, RuleLemmatizer, Span,
};
use crate::decoder::{
    decode_frame_restricted, decode_graph, decode_roles, decode_targets, predicate_key,
    DecodeOptions, DecodedPredicate, GraphNode, ParseGraph,
};
use crate::edge_builder::{
    build_candidate_pairs, EdgeBuilder, PPEdgeDistribution, PREdgeDistribution, PairMode,
    CONNECTED, PP_NULL,
};
use crate::encoder::{enumerate_spans, Encoded, Encoder, EncoderConfig, PieceEncoder, Vocabulary};
use crate::error::{Error, Result};
use crate::nn::{ForwardCtx, Head, Param, ParamStore, Tape, Var};
use crate::node_builder::{
    argmax, frame_mask, license_frames, license_key, FrameDistribution, GoldGraph, NodeBuilder,
    NodeType, NodeTypeDistribution,
};
use crate::semicrf::{
    gold_segmentation, lattice_from_scores, roles_from_lattice, scores_gradient,
    semicrf_nll_with_grad, GoldCoverage, SemiCrfHead,
};

/// Which node-type components a stage predicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodePolicy {
    All,
    Predicates,
    Roles,
}

impl NodePolicy {
    pub fn restrict(self, t: NodeType) -> NodeType {
        match self {
            NodePolicy::All => t,
            NodePolicy::Predicates => t.restrict(true, false),
            NodePolicy::Roles => t.restrict(false, true),
        }
    }
}

/// One separately trained network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Joint,
    Predicate,
    Frame,
    Role,
    PredicateFrame,
    FrameRole,
    /// Node half of the node+edge pipeline.
    Node,
    /// Edge half of the node+edge pipeline.
    Edge,
    SemiCrf,
}

impl Stage {
    pub fn node_policy(self) -> Option<NodePolicy> {
        match self {
            Stage::Joint | Stage::Node => Some(NodePolicy::All),
            Stage::Predicate | Stage::PredicateFrame => Some(NodePolicy::Predicates),
            Stage::Role | Stage::FrameRole => Some(NodePolicy::Roles),
            Stage::Frame | Stage::Edge | Stage::SemiCrf => None,
        }
    }

    pub fn uses_frames(self) -> bool {
        matches!(
            self,
            Stage::Joint | Stage::Frame | Stage::PredicateFrame | Stage::FrameRole | Stage::Node
        )
    }

    pub fn uses_pp_edges(self) -> bool {
        matches!(
            self,
            Stage::Joint | Stage::Predicate | Stage::PredicateFrame | Stage::Edge
        )
    }

    pub fn uses_pr_edges(self) -> bool {
        matches!(
            self,
            Stage::Joint | Stage::Role | Stage::FrameRole | Stage::Edge
        )
    }

    /// Stages that read predicates from their input tuples.
    pub fn takes_predicates(self) -> bool {
        matches!(
            self,
            Stage::Frame | Stage::Role | Stage::FrameRole | Stage::SemiCrf
        )
    }

    /// Stages that also read frames from their input tuples.
    pub fn takes_frames(self) -> bool {
        matches!(self, Stage::Role | Stage::SemiCrf)
    }

    pub fn active_heads(self) -> Vec<Head> {
        let mut heads = vec![Head::Encoder];
        if self.node_policy().is_some() {
            heads.push(Head::NodeType);
        }
        if self.uses_frames() {
            heads.push(Head::Frame);
        }
        if self.uses_pp_edges() {
            heads.push(Head::PredicateEdge);
        }
        if self.uses_pr_edges() {
            heads.push(Head::RoleEdge);
        }
        if self == Stage::SemiCrf {
            heads.push(Head::SemiCrf);
        }
        heads
    }

    pub fn is_trainable(self, param: &Param) -> bool {
        self.active_heads().contains(&param.head)
    }
}

/// A trainable model configuration; `NodeEdge` trains two networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelVariant {
    #[serde(rename = "joint")]
    Joint,
    #[serde(rename = "predicate")]
    Predicate,
    #[serde(rename = "frame")]
    Frame,
    #[serde(rename = "role")]
    Role,
    #[serde(rename = "predicate∘frame", alias = "predicate-frame")]
    PredicateFrame,
    #[serde(rename = "frame∘role", alias = "frame-role")]
    FrameRole,
    #[serde(rename = "node+edge", alias = "node-edge")]
    NodeEdge,
    #[serde(rename = "semicrf", alias = "semi-crf")]
    SemiCrf,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 8] = [
        ModelVariant::Joint,
        ModelVariant::Predicate,
        ModelVariant::Frame,
        ModelVariant::Role,
        ModelVariant::PredicateFrame,
        ModelVariant::FrameRole,
        ModelVariant::NodeEdge,
        ModelVariant::SemiCrf,
    ];

    pub fn stages(self) -> Vec<Stage> {
        match self {
            ModelVariant::Joint => vec![Stage::Joint],
            ModelVariant::Predicate => vec![Stage::Predicate],
            ModelVariant::Frame => vec![Stage::Frame],
            ModelVariant::Role => vec![Stage::Role],
            ModelVariant::PredicateFrame => vec![Stage::PredicateFrame],
            ModelVariant::FrameRole => vec![Stage::FrameRole],
            ModelVariant::NodeEdge => vec![Stage::Node, Stage::Edge],
            ModelVariant::SemiCrf => vec![Stage::SemiCrf],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Joint => "joint",
            ModelVariant::Predicate => "predicate",
            ModelVariant::Frame => "frame",
            ModelVariant::Role => "role",
            ModelVariant::PredicateFrame => "predicate∘frame",
            ModelVariant::FrameRole => "frame∘role",
            ModelVariant::NodeEdge => "node+edge",
            ModelVariant::SemiCrf => "semicrf",
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::UnknownVariant(s.to_string()))
    }
}

/// Loss-time switches.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossOptions {
    pub pair_mode: PairMode,
    /// Fraction of NULL spans kept in the node-type loss during training.
    pub null_span_keep_rate: f64,
}

impl Default for LossOptions {
    fn default() -> Self {
        LossOptions {
            pair_mode: PairMode::GoldNodes,
            null_span_keep_rate: 1.0,
        }
    }
}

/// Node loss `L_n` (node types and frames) and edge loss `L_e`
/// (predicate-predicate, predicate-role and, for the semi-CRF stage, the
/// segmentation NLL).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub loss_n: f64,
    pub loss_e: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.loss_n + self.loss_e
    }
}

impl std::ops::AddAssign for LossBreakdown {
    fn add_assign(&mut self, o: LossBreakdown) {
        self.loss_n += o.loss_n;
        self.loss_e += o.loss_e;
    }
}

/// Recorded loss of one sentence.
#[derive(Clone, Copy, Debug)]
pub struct SentenceLoss {
    /// Scalar to back-propagate; `None` when no term applies.
    pub total: Option<Var>,
    pub breakdown: LossBreakdown,
    pub coverage: GoldCoverage,
}

/// Output of one network (or pipeline) on one sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub tuples: Vec<FrameTuple>,
    pub graph: ParseGraph,
}

/// Lemmas of a sentence, computed with the rule lemmatizer when absent.
pub fn sentence_lemmas(sentence: &AnnotatedSentence) -> Result<Vec<String>> {
    match &sentence.lemmas {
        Some(l) => Ok(l.clone()),
        None => Ok(lemmatize(sentence, &RuleLemmatizer)?
            .lemmas
            .unwrap_or_default()),
    }
}

/// One network: an encoder and every head. Heads outside the stage stay
/// frozen and contribute no loss.
pub struct Network {
    stage: Stage,
    ontology: Arc<FrameOntology>,
    role_labels: Vec<String>,
    encoder: Encoder,
    nodes: NodeBuilder,
    edges: EdgeBuilder,
    semicrf: SemiCrfHead,
    store: ParamStore,
    decode: DecodeOptions,
}

impl fmt::Debug for Network {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Network")
            .field("stage", &self.stage)
            .field("params", &self.store.num_scalars())
            .finish()
    }
}

impl Network {
    pub fn new(
        stage: Stage,
        config: &EncoderConfig,
        vocab: Vocabulary,
        ontology: Arc<FrameOntology>,
        external: Option<Arc<dyn PieceEncoder>>,
        decode: DecodeOptions,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = Encoder::new(config, vocab, external, &mut store, &mut rng)?;
        let span_dim = config.span_dim();
        let role_labels = ontology.role_labels();
        let nodes = NodeBuilder::new(
            &mut store,
            span_dim,
            config.mlp_hidden,
            ontology.num_frames(),
            config.dropout_mlp,
            &mut rng,
        );
        let edges = EdgeBuilder::new(
            &mut store,
            span_dim,
            config.mlp_hidden,
            role_labels.clone(),
            config.dropout_mlp,
            &mut rng,
        );
        let semicrf = SemiCrfHead::new(&mut store, span_dim, role_labels.clone(), &mut rng);
        Ok(Network {
            stage,
            ontology,
            role_labels,
            encoder,
            nodes,
            edges,
            semicrf,
            store,
            decode,
        })
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn ontology(&self) -> &FrameOntology {
        &self.ontology
    }

    pub fn role_labels(&self) -> &[String] {
        &self.role_labels
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn node_builder(&self) -> &NodeBuilder {
        &self.nodes
    }

    pub fn edge_builder(&self) -> &EdgeBuilder {
        &self.edges
    }

    pub fn semicrf_head(&self) -> &SemiCrfHead {
        &self.semicrf
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn decode_options(&self) -> DecodeOptions {
        self.decode
    }

    pub fn set_decode_options(&mut self, decode: DecodeOptions) {
        self.decode = decode;
    }

    fn max_span_length(&self) -> usize {
        self.encoder.config().max_span_length
    }

    fn licensed(&self, span: &Span, lemmas: &[String]) -> Option<Vec<usize>> {
        if self.decode.lu_mask {
            license_frames(span, lemmas, &self.ontology)
        } else {
            None
        }
    }

    /// Frame distributions for `spans` (rows of `reps`), each masked by its
    /// own lexical unit when masking is on.
    fn frame_distributions(
        &self,
        ctx: &ForwardCtx<'_>,
        reps: Var,
        spans: &[Span],
        lemmas: &[String],
    ) -> Vec<FrameDistribution> {
        let logits = self.nodes.frame_logits(ctx, reps);
        let logits = ctx.tape.value(logits);
        spans
            .iter()
            .enumerate()
            .map(|(i, s)| {
                FrameDistribution::from_logits(logits.row(i), self.licensed(s, lemmas).as_deref())
            })
            .collect()
    }

    /// Scores edges between the nodes of `graph` with this network's
    /// encoder and edge heads.
    fn score_edges(&self, ctx: &ForwardCtx<'_>, encoded: &Encoded, graph: &mut ParseGraph) {
        if graph.nodes.is_empty() || !(self.stage.uses_pp_edges() || self.stage.uses_pr_edges()) {
            return;
        }
        let typed: Vec<(Span, NodeType)> =
            graph.nodes.iter().map(|n| (n.span, n.node_type)).collect();
        let spans: Vec<Span> = typed.iter().map(|t| t.0).collect();
        let pairs = build_candidate_pairs(&typed);
        let reps = self.encoder.represent_spans(ctx, encoded, &spans);
        if self.stage.uses_pp_edges() && !pairs.pp.is_empty() {
            let logits = self.edges.pp_logits(ctx, reps, &pairs.pp);
            let logits = ctx.tape.value(logits);
            for (k, &pair) in pairs.pp.iter().enumerate() {
                graph
                    .pp_edges
                    .insert(pair, PPEdgeDistribution::from_logits(logits.row(k)));
            }
        }
        if self.stage.uses_pr_edges() && !pairs.pr.is_empty() {
            let logits = self.edges.pr_logits(ctx, reps, &pairs.pr);
            let logits = ctx.tape.value(logits);
            for (k, &pair) in pairs.pr.iter().enumerate() {
                graph
                    .pr_edges
                    .insert(pair, PREdgeDistribution::from_logits(logits.row(k)));
            }
        }
    }

    /// Runs the stage on one sentence. Stages that consume predicates (and
    /// frames) read them from `given`; the others ignore it.
    pub fn predict(
        &self,
        sentence: &AnnotatedSentence,
        given: &[FrameTuple],
    ) -> Result<Prediction> {
        let lemmas = sentence_lemmas(sentence)?;
        let tape = Tape::new();
        let ctx = ForwardCtx::eval(&tape, &self.store);
        let encoded = self.encoder.encode(&ctx, &sentence.tokens);

        let mut components: BTreeMap<Span, NodeType> = BTreeMap::new();
        if let Some(policy) = self.stage.node_policy() {
            let spans = enumerate_spans(sentence.len(), self.max_span_length());
            let reps = self.encoder.represent_spans(&ctx, &encoded, &spans);
            let logits = self.nodes.node_logits(&ctx, reps);
            let logits = tape.value(logits);
            for (i, span) in spans.iter().enumerate() {
                let t = policy.restrict(NodeTypeDistribution::from_logits(logits.row(i)).argmax());
                if t.is_node() {
                    components.insert(*span, t);
                }
            }
        }
        let given: &[FrameTuple] = if self.stage.takes_predicates() {
            given
        } else {
            &[]
        };
        for tuple in given {
            let single = tuple.predicate.pieces.len() == 1;
            for piece in &tuple.predicate.pieces {
                let t = components.get(piece).copied().unwrap_or(NodeType::Null);
                let merged = NodeType::from_components(
                    t.is_full_predicate() || single,
                    t.is_partial_predicate() || !single,
                    t.is_role(),
                );
                components.insert(*piece, merged);
            }
        }

        let mut graph = ParseGraph {
            nodes: components
                .iter()
                .map(|(&span, &node_type)| GraphNode {
                    span,
                    node_type,
                    frame: None,
                })
                .collect(),
            ..Default::default()
        };
        if self.stage.uses_frames() {
            let (idx, spans): (Vec<usize>, Vec<Span>) = graph
                .nodes
                .iter()
                .enumerate()
                .filter(|(_, n)| n.node_type.is_predicate())
                .map(|(i, n)| (i, n.span))
                .unzip();
            if !spans.is_empty() {
                let reps = self.encoder.represent_spans(&ctx, &encoded, &spans);
                let dists = self.frame_distributions(&ctx, reps, &spans, &lemmas);
                for (i, d) in idx.into_iter().zip(dists) {
                    graph.nodes[i].frame = Some(d);
                }
            }
        }
        self.score_edges(&ctx, &encoded, &mut graph);

        let tuples = if self.stage == Stage::SemiCrf {
            self.semicrf_roles(&ctx, &encoded, sentence.len(), given)?
        } else if self.stage.takes_predicates() {
            let index: BTreeMap<Span, usize> = graph
                .nodes
                .iter()
                .enumerate()
                .map(|(i, n)| (n.span, i))
                .collect();
            let mut out = Vec::with_capacity(given.len());
            for tuple in given {
                let predicate = DecodedPredicate {
                    pieces: tuple.predicate.pieces.clone(),
                    source_nodes: tuple.predicate.pieces.iter().map(|p| index[p]).collect(),
                };
                let frame = if self.stage.takes_frames() {
                    tuple.frame.clone()
                } else {
                    self.resolve_frame(&predicate, &graph, &lemmas)?
                };
                let roles = if self.stage.uses_pr_edges() {
                    decode_roles(
                        &predicate,
                        &frame,
                        &graph,
                        &self.ontology,
                        &self.role_labels,
                    )?
                } else {
                    Vec::new()
                };
                out.push(FrameTuple::new(tuple.predicate.clone(), frame, roles));
            }
            out
        } else if self.stage.uses_frames() {
            decode_graph(
                &graph,
                &self.ontology,
                &self.role_labels,
                &lemmas,
                &self.decode,
            )?
        } else {
            // Predicate identification alone: frames are placeholders.
            let placeholder = &self.ontology.frames()[0];
            decode_targets(&graph, &self.decode)
                .into_iter()
                .map(|p| FrameTuple::new(Predicate::new(p.pieces), placeholder.clone(), Vec::new()))
                .collect()
        };
        Ok(Prediction { tuples, graph })
    }

    fn resolve_frame(
        &self,
        predicate: &DecodedPredicate,
        graph: &ParseGraph,
        lemmas: &[String],
    ) -> Result<String> {
        let licensed = if self.decode.lu_mask {
            license_key(&predicate_key(&predicate.pieces, lemmas), &self.ontology)
        } else {
            None
        };
        let f = decode_frame_restricted(predicate, graph, licensed.as_deref())?;
        Ok(self.ontology.frames()[f].clone())
    }

    /// Adds this network's edge scores to a graph built by another network
    /// and decodes it.
    pub fn complete_graph(
        &self,
        sentence: &AnnotatedSentence,
        mut graph: ParseGraph,
    ) -> Result<Prediction> {
        let lemmas = sentence_lemmas(sentence)?;
        let tape = Tape::new();
        let ctx = ForwardCtx::eval(&tape, &self.store);
        let encoded = self.encoder.encode(&ctx, &sentence.tokens);
        graph.pp_edges.clear();
        graph.pr_edges.clear();
        self.score_edges(&ctx, &encoded, &mut graph);
        let tuples = decode_graph(
            &graph,
            &self.ontology,
            &self.role_labels,
            &lemmas,
            &self.decode,
        )?;
        Ok(Prediction { tuples, graph })
    }

    /// `1 × d` predicate representation: mean of its piece representations.
    fn predicate_rep(&self, ctx: &ForwardCtx<'_>, encoded: &Encoded, pieces: &[Span]) -> Var {
        let reps = self.encoder.represent_spans(ctx, encoded, pieces);
        ctx.tape.group_mean(reps, &[(0..pieces.len()).collect()])
    }

    fn semicrf_roles(
        &self,
        ctx: &ForwardCtx<'_>,
        encoded: &Encoded,
        n: usize,
        given: &[FrameTuple],
    ) -> Result<Vec<FrameTuple>> {
        let max_len = self.max_span_length();
        let spans = enumerate_spans(n, max_len);
        let reps = self.encoder.represent_spans(ctx, encoded, &spans);
        let mut out = Vec::with_capacity(given.len());
        for tuple in given {
            let columns = self.semicrf.frame_columns(&self.ontology, &tuple.frame)?;
            let roles = self.ontology.roles_of(&tuple.frame).unwrap_or_default();
            let pred = self.predicate_rep(ctx, encoded, &tuple.predicate.pieces);
            let scores = self.semicrf.span_scores(ctx, reps, pred);
            let lattice =
                lattice_from_scores(&ctx.tape.value(scores), &spans, n, max_len, &columns);
            out.push(FrameTuple::new(
                tuple.predicate.clone(),
                tuple.frame.clone(),
                roles_from_lattice(&lattice, roles),
            ));
        }
        Ok(out)
    }

    /// Records the stage's loss for one sentence on `ctx.tape`.
    pub fn sentence_loss(
        &self,
        ctx: &ForwardCtx<'_>,
        sentence: &AnnotatedSentence,
        gold: &GoldGraph,
        lemmas: &[String],
        options: &LossOptions,
    ) -> Result<SentenceLoss> {
        let tape = ctx.tape;
        let encoded = self.encoder.encode(ctx, &sentence.tokens);
        let mut node_terms: Vec<(Var, &'static str)> = Vec::new();
        let mut edge_terms: Vec<(Var, &'static str)> = Vec::new();
        let mut coverage = GoldCoverage::default();
        let mut predicted: Option<Vec<(Span, NodeType)>> = None;

        if let Some(policy) = self.stage.node_policy() {
            let all = enumerate_spans(sentence.len(), self.max_span_length());
            let keep_rate = options.null_span_keep_rate;
            let spans: Vec<Span> = match ctx.rng() {
                Some(mut rng) if keep_rate < 1.0 => all
                    .into_iter()
                    .filter(|s| {
                        policy.restrict(gold.node_type(s)).is_node() || rng.gen::<f64>() < keep_rate
                    })
                    .collect(),
                _ => all,
            };
            let targets: Vec<usize> = spans
                .iter()
                .map(|s| policy.restrict(gold.node_type(s)).index())
                .collect();
            let reps = self.encoder.represent_spans(ctx, &encoded, &spans);
            let logits = self.nodes.node_logits(ctx, reps);
            if options.pair_mode == PairMode::PredictedNodes {
                let values = tape.value(logits);
                predicted = Some(
                    spans
                        .iter()
                        .enumerate()
                        .map(|(i, s)| {
                            (
                                *s,
                                policy.restrict(NodeType::from_index(argmax(values.row(i)))),
                            )
                        })
                        .filter(|(_, t)| t.is_node())
                        .collect(),
                );
            }
            node_terms.push((tape.softmax_nll(logits, &targets, None), "node"));
        }

        if self.stage.uses_frames() && !gold.frames.is_empty() {
            let spans: Vec<Span> = gold.frames.keys().copied().collect();
            let targets: Vec<usize> = gold.frames.values().copied().collect();
            let n_frames = self.ontology.num_frames();
            let mut mask = Vec::with_capacity(spans.len() * n_frames);
            let mut any_mask = false;
            for (span, &target) in spans.iter().zip(&targets) {
                // A gold frame outside the licensed set would make the
                // masked loss infinite; such rows stay unmasked.
                let row = frame_mask(self.licensed(span, lemmas).as_deref(), n_frames)
                    .filter(|m| m[target])
                    .unwrap_or_else(|| vec![true; n_frames]);
                any_mask |= row.iter().any(|&b| !b);
                mask.extend(row);
            }
            let reps = self.encoder.represent_spans(ctx, &encoded, &spans);
            let logits = self.nodes.frame_logits(ctx, reps);
            let nll = tape.softmax_nll(logits, &targets, any_mask.then_some(mask.as_slice()));
            node_terms.push((nll, "frame"));
        }

        if self.stage.uses_pp_edges() || self.stage.uses_pr_edges() {
            let typed: Vec<(Span, NodeType)> = match &predicted {
                Some(p) => p.clone(),
                None => gold.nodes.iter().map(|(s, t)| (*s, *t)).collect(),
            };
            let typed: Vec<(Span, NodeType)> = match self.stage.node_policy() {
                // Stages without node typing of one component take that
                // component from gold.
                Some(NodePolicy::Predicates) | Some(NodePolicy::Roles) if predicted.is_some() => {
                    merge_gold(&typed, gold, self.stage)
                }
                _ => typed,
            };
            let spans: Vec<Span> = typed.iter().map(|t| t.0).collect();
            let pairs = build_candidate_pairs(&typed);
            if !spans.is_empty() && (!pairs.pp.is_empty() || !pairs.pr.is_empty()) {
                let reps = self.encoder.represent_spans(ctx, &encoded, &spans);
                if self.stage.uses_pp_edges() && !pairs.pp.is_empty() {
                    let targets: Vec<usize> = pairs
                        .pp
                        .iter()
                        .map(|&(i, j)| {
                            let key = crate::node_builder::canonical_pair(spans[i], spans[j]);
                            if gold.pp_edges.contains(&key) {
                                CONNECTED
                            } else {
                                PP_NULL
                            }
                        })
                        .collect();
                    let logits = self.edges.pp_logits(ctx, reps, &pairs.pp);
                    edge_terms.push((
                        tape.softmax_nll(logits, &targets, None),
                        "predicate-predicate edge",
                    ));
                }
                if self.stage.uses_pr_edges() && !pairs.pr.is_empty() {
                    let null = self.edges.role_null();
                    let targets: Vec<usize> = pairs
                        .pr
                        .iter()
                        .map(|&(i, j)| {
                            gold.pr_edges
                                .get(&(spans[i], spans[j]))
                                .copied()
                                .unwrap_or(null)
                        })
                        .collect();
                    let logits = self.edges.pr_logits(ctx, reps, &pairs.pr);
                    edge_terms.push((
                        tape.softmax_nll(logits, &targets, None),
                        "predicate-role edge",
                    ));
                }
            }
        }

        if self.stage == Stage::SemiCrf && !sentence.tuples.is_empty() {
            let n = sentence.len();
            let max_len = self.max_span_length();
            let spans = enumerate_spans(n, max_len);
            let reps = self.encoder.represent_spans(ctx, &encoded, &spans);
            for tuple in &sentence.tuples {
                let columns = self.semicrf.frame_columns(&self.ontology, &tuple.frame)?;
                let roles = self.ontology.roles_of(&tuple.frame).unwrap_or_default();
                let gold_roles: Vec<(Span, usize)> = tuple
                    .roles
                    .iter()
                    .filter_map(|r| {
                        roles
                            .iter()
                            .position(|x| x == &r.role_name)
                            .map(|l| (r.value, l))
                    })
                    .collect();
                let (segmentation, cov) = gold_segmentation(n, max_len, &gold_roles, roles.len());
                coverage += cov;
                let pred = self.predicate_rep(ctx, &encoded, &tuple.predicate.pieces);
                let scores = self.semicrf.span_scores(ctx, reps, pred);
                let (nll, grad) = {
                    let values = tape.value(scores);
                    let lattice = lattice_from_scores(&values, &spans, n, max_len, &columns);
                    let (nll, lattice_grad) = semicrf_nll_with_grad(&lattice, &segmentation)?;
                    (
                        nll,
                        scores_gradient(&lattice_grad, &spans, values.shape(), &columns),
                    )
                };
                edge_terms.push((tape.precomputed(scores, nll, grad), "semi-CRF"));
            }
        }

        let mut breakdown = LossBreakdown::default();
        for (terms, slot) in [
            (&node_terms, &mut breakdown.loss_n),
            (&edge_terms, &mut breakdown.loss_e),
        ] {
            for &(v, name) in terms.iter() {
                let x = tape.value(v).item();
                if !x.is_finite() {
                    return Err(Error::NonFiniteLoss { term: name });
                }
                *slot += x;
            }
        }
        let all: Vec<Var> = node_terms.iter().chain(&edge_terms).map(|t| t.0).collect();
        let total = (!all.is_empty()).then(|| tape.sum_scalars(&all));
        Ok(SentenceLoss {
            total,
            breakdown,
            coverage,
        })
    }
}

/// Predicted nodes of one component joined with gold nodes of the other.
fn merge_gold(
    predicted: &[(Span, NodeType)],
    gold: &GoldGraph,
    stage: Stage,
) -> Vec<(Span, NodeType)> {
    let mut merged: BTreeMap<Span, NodeType> = BTreeMap::new();
    let keep_gold = |t: NodeType| match stage.node_policy() {
        Some(NodePolicy::Predicates) => t.restrict(false, true),
        Some(NodePolicy::Roles) => t.restrict(true, false),
        _ => NodeType::Null,
    };
    for (s, t) in gold.nodes.iter() {
        let g = keep_gold(*t);
        if g.is_node() {
            merged.insert(*s, g);
        }
    }
    for (s, t) in predicted {
        let g = merged.get(s).copied().unwrap_or(NodeType::Null);
        merged.insert(
            *s,
            NodeType::from_components(
                g.is_full_predicate() || t.is_full_predicate(),
                g.is_partial_predicate() || t.is_partial_predicate(),
                g.is_role() || t.is_role(),
            ),
        );
    }
    merged.into_iter().collect()
}

/// Networks applied in order; the output tuples of each stage are the
/// input of the next.
#[derive(Debug)]
pub struct Pipeline {
    pub stages: Vec<Network>,
}

impl Pipeline {
    pub fn new(stages: Vec<Network>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::Config("a pipeline needs at least one stage".into()));
        }
        Ok(Pipeline { stages })
    }

    /// Parses a sentence. Its own tuples feed the first stage when that
    /// stage consumes predicates (for instance a frame-only model).
    pub fn parse(&self, sentence: &AnnotatedSentence) -> Result<Prediction> {
        let mut given = sentence.tuples.clone();
        let mut graph: Option<ParseGraph> = None;
        let mut last = None;
        for network in &self.stages {
            let prediction = match (network.stage(), graph.take()) {
                (Stage::Edge, Some(g)) => network.complete_graph(sentence, g)?,
                _ => network.predict(sentence, &given)?,
            };
            if network.stage() == Stage::Node {
                graph = Some(prediction.graph.clone());
            }
            given = prediction.tuples.clone();
            last = Some(prediction);
        }
        Ok(last.expect("pipeline has a stage"))
    }

    /// True when the last graph carries every node and edge type, so module
    /// scores can be read from it directly.
    pub fn has_full_graph(&self) -> bool {
        let stages: Vec<Stage> = self.stages.iter().map(|s| s.stage()).collect();
        stages == [Stage::Joint] || stages.ends_with(&[Stage::Node, Stage::Edge])
    }
}
