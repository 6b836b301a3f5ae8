//! Span typing into the eight node types and frame classification of
//! predicate nodes under the lexical-unit mask.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedSentence, FrameOntology, Span};
use crate::nn::{
    masked_softmax, softmax, ForwardCtx, Head, Mlp, ParamGroup, ParamSpec, ParamStore, Var,
};

/// Node type of a span: any non-empty combination of full predicate,
/// partial predicate and role, or `Null`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeType {
    #[serde(rename = "FPRD")]
    Fprd,
    #[serde(rename = "PPRD")]
    Pprd,
    #[serde(rename = "ROLE")]
    Role,
    #[serde(rename = "FPRD-PPRD")]
    FprdPprd,
    #[serde(rename = "FPRD-ROLE")]
    FprdRole,
    #[serde(rename = "PPRD-ROLE")]
    PprdRole,
    #[serde(rename = "FPRD-PPRD-ROLE")]
    FprdPprdRole,
    #[serde(rename = "NULL")]
    Null,
}

impl NodeType {
    pub const ALL: [NodeType; 8] = [
        NodeType::Fprd,
        NodeType::Pprd,
        NodeType::Role,
        NodeType::FprdPprd,
        NodeType::FprdRole,
        NodeType::PprdRole,
        NodeType::FprdPprdRole,
        NodeType::Null,
    ];

    pub const COUNT: usize = 8;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> NodeType {
        NodeType::ALL[i]
    }

    pub fn from_components(full: bool, partial: bool, role: bool) -> NodeType {
        match (full, partial, role) {
            (true, false, false) => NodeType::Fprd,
            (false, true, false) => NodeType::Pprd,
            (false, false, true) => NodeType::Role,
            (true, true, false) => NodeType::FprdPprd,
            (true, false, true) => NodeType::FprdRole,
            (false, true, true) => NodeType::PprdRole,
            (true, true, true) => NodeType::FprdPprdRole,
            (false, false, false) => NodeType::Null,
        }
    }

    pub fn is_full_predicate(self) -> bool {
        matches!(
            self,
            NodeType::Fprd | NodeType::FprdPprd | NodeType::FprdRole | NodeType::FprdPprdRole
        )
    }

    pub fn is_partial_predicate(self) -> bool {
        matches!(
            self,
            NodeType::Pprd | NodeType::FprdPprd | NodeType::PprdRole | NodeType::FprdPprdRole
        )
    }

    pub fn is_role(self) -> bool {
        matches!(
            self,
            NodeType::Role | NodeType::FprdRole | NodeType::PprdRole | NodeType::FprdPprdRole
        )
    }

    pub fn is_predicate(self) -> bool {
        self.is_full_predicate() || self.is_partial_predicate()
    }

    pub fn is_node(self) -> bool {
        self != NodeType::Null
    }

    /// Keeps only the requested components.
    pub fn restrict(self, predicates: bool, roles: bool) -> NodeType {
        NodeType::from_components(
            predicates && self.is_full_predicate(),
            predicates && self.is_partial_predicate(),
            roles && self.is_role(),
        )
    }

    pub fn label(self) -> &'static str {
        match self {
            NodeType::Fprd => "FPRD",
            NodeType::Pprd => "PPRD",
            NodeType::Role => "ROLE",
            NodeType::FprdPprd => "FPRD-PPRD",
            NodeType::FprdRole => "FPRD-ROLE",
            NodeType::PprdRole => "PPRD-ROLE",
            NodeType::FprdPprdRole => "FPRD-PPRD-ROLE",
            NodeType::Null => "NULL",
        }
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Probabilities over [`NodeType::ALL`].
#[derive(Clone, Debug, PartialEq)]
pub struct NodeTypeDistribution(pub Vec<f64>);

impl NodeTypeDistribution {
    pub fn from_logits(logits: &[f64]) -> Self {
        NodeTypeDistribution(softmax(logits))
    }

    /// Most probable type; ties go to the lower index.
    pub fn argmax(&self) -> NodeType {
        NodeType::from_index(argmax(&self.0))
    }
}

/// Probabilities over the ontology's frame list.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameDistribution {
    pub probs: Vec<f64>,
    pub mask_applied: bool,
}

impl FrameDistribution {
    pub fn from_logits(logits: &[f64], licensed: Option<&[usize]>) -> Self {
        let mask = frame_mask(licensed, logits.len());
        FrameDistribution {
            probs: masked_softmax(logits, mask.as_deref()),
            mask_applied: mask.is_some(),
        }
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

static EMPTY_LICENSES: AtomicUsize = AtomicUsize::new(0);

/// Number of lexicon lookups that hit an entry with no frames (treated as
/// unmasked) since process start.
pub fn empty_license_warnings() -> usize {
    EMPTY_LICENSES.load(Ordering::Relaxed)
}

/// Pseudo lexical unit of a span: its lemmas joined by single spaces.
pub fn lemma_key(lemmas: &[String], span: &Span) -> String {
    lemmas[span.start..=span.end].join(" ")
}

/// Frames the lexicon licenses for `key`, as ontology frame indices.
/// `None` means "no mask": the key is unknown or its entry is empty.
pub fn license_key(key: &str, ontology: &FrameOntology) -> Option<Vec<usize>> {
    let frames = ontology.lookup(key)?;
    if frames.is_empty() {
        EMPTY_LICENSES.fetch_add(1, Ordering::Relaxed);
        return None;
    }
    Some(
        frames
            .iter()
            .filter_map(|f| ontology.frame_index(f))
            .collect(),
    )
}

pub fn license_frames(
    span: &Span,
    lemmas: &[String],
    ontology: &FrameOntology,
) -> Option<Vec<usize>> {
    license_key(&lemma_key(lemmas, span), ontology)
}

pub fn frame_mask(licensed: Option<&[usize]>, n_frames: usize) -> Option<Vec<bool>> {
    let licensed = licensed.filter(|l| !l.is_empty())?;
    let mut mask = vec![false; n_frames];
    for &f in licensed {
        mask[f] = true;
    }
    Some(mask)
}

/// Gold graph labels derived from a sentence's frame tuples.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GoldGraph {
    /// Every gold node span with its composite type (including spans longer
    /// than the enumeration limit).
    pub nodes: BTreeMap<Span, NodeType>,
    /// Frame index of every predicate node span. A span that is a predicate
    /// of several tuples takes the frame of the first.
    pub frames: BTreeMap<Span, usize>,
    /// Pieces of one multi-piece predicate, canonically ordered.
    pub pp_edges: BTreeSet<(Span, Span)>,
    /// (predicate node, role node) → index into the role label list.
    pub pr_edges: BTreeMap<(Span, Span), usize>,
    /// Gold node spans longer than the enumeration limit.
    pub uncovered_nodes: usize,
    /// Conflicting labels dropped when two tuples disagree on a pair.
    pub label_conflicts: usize,
}

impl GoldGraph {
    pub fn build(
        sentence: &AnnotatedSentence,
        ontology: &FrameOntology,
        role_labels: &[String],
        max_span_length: usize,
    ) -> GoldGraph {
        let mut components: BTreeMap<Span, (bool, bool, bool)> = BTreeMap::new();
        let mut gold = GoldGraph::default();
        for tuple in &sentence.tuples {
            let frame = ontology.frame_index(&tuple.frame);
            let pieces = &tuple.predicate.pieces;
            let single = pieces.len() == 1;
            for piece in pieces {
                let c = components.entry(*piece).or_default();
                if single {
                    c.0 = true;
                } else {
                    c.1 = true;
                }
                if let Some(f) = frame {
                    gold.frames.entry(*piece).or_insert(f);
                }
            }
            for (i, a) in pieces.iter().enumerate() {
                for b in &pieces[i + 1..] {
                    gold.pp_edges.insert(canonical_pair(*a, *b));
                }
            }
            for role in &tuple.roles {
                components.entry(role.value).or_default().2 = true;
                let Some(label) = role_labels.iter().position(|r| r == &role.role_name) else {
                    continue;
                };
                for piece in pieces {
                    match gold.pr_edges.get(&(*piece, role.value)) {
                        Some(&existing) if existing != label => gold.label_conflicts += 1,
                        Some(_) => {}
                        None => {
                            gold.pr_edges.insert((*piece, role.value), label);
                        }
                    }
                }
            }
        }
        gold.nodes = components
            .into_iter()
            .map(|(span, (f, p, r))| (span, NodeType::from_components(f, p, r)))
            .collect();
        gold.uncovered_nodes = gold
            .nodes
            .keys()
            .filter(|s| s.len() > max_span_length)
            .count();
        gold
    }

    pub fn node_type(&self, span: &Span) -> NodeType {
        self.nodes.get(span).copied().unwrap_or(NodeType::Null)
    }

    pub fn predicate_spans(&self) -> Vec<Span> {
        self.nodes
            .iter()
            .filter(|(_, t)| t.is_predicate())
            .map(|(s, _)| *s)
            .collect()
    }

    pub fn partial_spans(&self) -> Vec<Span> {
        self.nodes
            .iter()
            .filter(|(_, t)| t.is_partial_predicate())
            .map(|(s, _)| *s)
            .collect()
    }

    pub fn role_spans(&self) -> Vec<Span> {
        self.nodes
            .iter()
            .filter(|(_, t)| t.is_role())
            .map(|(s, _)| *s)
            .collect()
    }
}

/// Orders a span pair by (start, end).
pub fn canonical_pair(a: Span, b: Span) -> (Span, Span) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Node-type and frame classifiers.
#[derive(Clone, Debug)]
pub struct NodeBuilder {
    pub node_mlp: Mlp,
    pub frame_mlp: Mlp,
    n_frames: usize,
}

impl NodeBuilder {
    pub fn new(
        store: &mut ParamStore,
        span_dim: usize,
        mlp_hidden: usize,
        n_frames: usize,
        dropout: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let node_mlp = Mlp::new(
            &mut ParamSpec {
                store,
                group: ParamGroup::Other,
                head: Head::NodeType,
            },
            "node",
            span_dim,
            mlp_hidden,
            NodeType::COUNT,
            dropout,
            rng,
        );
        let frame_mlp = Mlp::new(
            &mut ParamSpec {
                store,
                group: ParamGroup::Other,
                head: Head::Frame,
            },
            "frame",
            span_dim,
            mlp_hidden,
            n_frames,
            dropout,
            rng,
        );
        NodeBuilder {
            node_mlp,
            frame_mlp,
            n_frames,
        }
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    /// `m × 8` node-type logits.
    pub fn node_logits(&self, ctx: &ForwardCtx<'_>, spans: Var) -> Var {
        self.node_mlp.forward(ctx, spans)
    }

    /// `m × |F|` frame logits.
    pub fn frame_logits(&self, ctx: &ForwardCtx<'_>, spans: Var) -> Var {
        self.frame_mlp.forward(ctx, spans)
    }

    pub fn classify_node_type(&self, ctx: &ForwardCtx<'_>, span: Var) -> NodeTypeDistribution {
        let logits = self.node_logits(ctx, span);
        let logits = ctx.tape.value(logits);
        NodeTypeDistribution::from_logits(logits.row(0))
    }

    pub fn classify_frame(
        &self,
        ctx: &ForwardCtx<'_>,
        span: Var,
        licensed: Option<&[usize]>,
    ) -> FrameDistribution {
        let logits = self.frame_logits(ctx, span);
        let logits = ctx.tape.value(logits);
        FrameDistribution::from_logits(logits.row(0), licensed)
    }
}
