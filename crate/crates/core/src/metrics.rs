//! Exact-match precision, recall and F1 for targets, frames and roles, plus
//! module-level scores over typed nodes, predicate-node frames and edges.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedSentence, FrameTuple, Span};
use crate::error::{Error, Result};
use crate::node_builder::NodeType;

/// Raw counts behind a [`Prf`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub pred_count: usize,
    pub gold_count: usize,
}

impl Counts {
    pub fn of_sets<T: Ord>(pred: &BTreeSet<T>, gold: &BTreeSet<T>) -> Counts {
        Counts {
            tp: pred.intersection(gold).count(),
            pred_count: pred.len(),
            gold_count: gold.len(),
        }
    }

    pub fn prf(self) -> Prf {
        Prf::from_counts(self)
    }
}

impl Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts {
            tp: self.tp + o.tp,
            pred_count: self.pred_count + o.pred_count,
            gold_count: self.gold_count + o.gold_count,
        }
    }
}

impl AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        *self = *self + o;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub pred_count: usize,
    pub gold_count: usize,
}

impl Prf {
    /// Undefined ratios (zero denominators) are reported as 0.
    pub fn from_counts(c: Counts) -> Prf {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(c.tp, c.pred_count);
        let recall = ratio(c.tp, c.gold_count);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
            tp: c.tp,
            pred_count: c.pred_count,
            gold_count: c.gold_count,
        }
    }

    pub fn counts(&self) -> Counts {
        Counts {
            tp: self.tp,
            pred_count: self.pred_count,
            gold_count: self.gold_count,
        }
    }
}

pub type TargetItem = Vec<Span>;
pub type FrameItem = (Vec<Span>, String);
pub type RoleItem = (Vec<Span>, String, Span);

pub fn target_items(tuples: &[FrameTuple]) -> BTreeSet<TargetItem> {
    tuples.iter().map(|t| t.predicate.pieces.clone()).collect()
}

pub fn frame_items(tuples: &[FrameTuple]) -> BTreeSet<FrameItem> {
    tuples
        .iter()
        .map(|t| (t.predicate.pieces.clone(), t.frame.clone()))
        .collect()
}

pub fn role_items(tuples: &[FrameTuple]) -> BTreeSet<RoleItem> {
    tuples
        .iter()
        .flat_map(|t| {
            t.roles
                .iter()
                .map(|r| (t.predicate.pieces.clone(), r.role_name.clone(), r.value))
        })
        .collect()
}

pub fn eval_target(pred: &[FrameTuple], gold: &[FrameTuple]) -> Prf {
    Counts::of_sets(&target_items(pred), &target_items(gold)).prf()
}

pub fn eval_frame(pred: &[FrameTuple], gold: &[FrameTuple]) -> Prf {
    Counts::of_sets(&frame_items(pred), &frame_items(gold)).prf()
}

pub fn eval_role(pred: &[FrameTuple], gold: &[FrameTuple]) -> Prf {
    Counts::of_sets(&role_items(pred), &role_items(gold)).prf()
}

/// A labeled non-NULL edge.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeItem {
    /// Two pieces of one predicate, in span order.
    Connected(Span, Span),
    /// Predicate node, role node, role name.
    Role(Span, Span, String),
}

/// Graph view used for module-level scoring.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ModuleGraph {
    /// Non-NULL nodes.
    pub nodes: BTreeMap<Span, NodeType>,
    /// Frame name per predicate node.
    pub frames: BTreeMap<Span, String>,
    pub edges: BTreeSet<EdgeItem>,
}

impl ModuleGraph {
    /// Graph implied by a set of tuples: pieces of multi-piece predicates
    /// are PPRD nodes, single pieces FPRD, role values ROLE.
    pub fn from_tuples(tuples: &[FrameTuple]) -> ModuleGraph {
        let mut components: BTreeMap<Span, (bool, bool, bool)> = BTreeMap::new();
        let mut graph = ModuleGraph::default();
        for t in tuples {
            let pieces = &t.predicate.pieces;
            for (i, p) in pieces.iter().enumerate() {
                let c = components.entry(*p).or_default();
                if pieces.len() == 1 {
                    c.0 = true;
                } else {
                    c.1 = true;
                }
                graph.frames.entry(*p).or_insert_with(|| t.frame.clone());
                for q in &pieces[i + 1..] {
                    graph.edges.insert(EdgeItem::Connected(*p, *q));
                }
                for r in &t.roles {
                    graph
                        .edges
                        .insert(EdgeItem::Role(*p, r.value, r.role_name.clone()));
                }
            }
            for r in &t.roles {
                components.entry(r.value).or_default().2 = true;
            }
        }
        graph.nodes = components
            .into_iter()
            .map(|(s, (f, p, r))| (s, NodeType::from_components(f, p, r)))
            .collect();
        graph
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ModuleCounts {
    pub node: Counts,
    pub frame_module: Counts,
    pub edge: Counts,
}

impl AddAssign for ModuleCounts {
    fn add_assign(&mut self, o: ModuleCounts) {
        self.node += o.node;
        self.frame_module += o.frame_module;
        self.edge += o.edge;
    }
}

/// Node matches need the exact composite type; frame matches are over
/// (predicate node, frame) pairs; edge matches over labeled edges.
pub fn eval_modules(pred: &ModuleGraph, gold: &ModuleGraph) -> ModuleCounts {
    let nodes = |g: &ModuleGraph| -> BTreeSet<(Span, NodeType)> {
        g.nodes
            .iter()
            .filter(|(_, t)| t.is_node())
            .map(|(s, t)| (*s, *t))
            .collect()
    };
    let frames = |g: &ModuleGraph| -> BTreeSet<(Span, String)> {
        g.frames.iter().map(|(s, f)| (*s, f.clone())).collect()
    };
    ModuleCounts {
        node: Counts::of_sets(&nodes(pred), &nodes(gold)),
        frame_module: Counts::of_sets(&frames(pred), &frames(gold)),
        edge: Counts::of_sets(&pred.edges, &gold.edges),
    }
}

/// Per-sentence counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentenceReport {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub target: Counts,
    pub frame: Counts,
    pub role: Counts,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub target: Prf,
    pub frame: Prf,
    pub role: Prf,
    pub node: Prf,
    pub frame_module: Prf,
    pub edge: Prf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentences: Option<Vec<SentenceReport>>,
}

/// Accumulates counts sentence by sentence.
#[derive(Clone, Debug, Default)]
pub struct Evaluator {
    target: Counts,
    frame: Counts,
    role: Counts,
    modules: ModuleCounts,
    sentences: Option<Vec<SentenceReport>>,
}

impl Evaluator {
    pub fn new(per_sentence: bool) -> Self {
        Evaluator {
            sentences: per_sentence.then(Vec::new),
            ..Default::default()
        }
    }

    /// Adds one sentence. Module counts come from `modules` when given,
    /// otherwise from graphs implied by the tuples.
    pub fn add(
        &mut self,
        id: Option<&str>,
        pred: &[FrameTuple],
        gold: &[FrameTuple],
        modules: Option<ModuleCounts>,
    ) {
        let target = Counts::of_sets(&target_items(pred), &target_items(gold));
        let frame = Counts::of_sets(&frame_items(pred), &frame_items(gold));
        let role = Counts::of_sets(&role_items(pred), &role_items(gold));
        self.target += target;
        self.frame += frame;
        self.role += role;
        self.modules += modules.unwrap_or_else(|| {
            eval_modules(
                &ModuleGraph::from_tuples(pred),
                &ModuleGraph::from_tuples(gold),
            )
        });
        if let Some(sentences) = &mut self.sentences {
            sentences.push(SentenceReport {
                index: sentences.len(),
                id: id.map(str::to_string),
                target,
                frame,
                role,
            });
        }
    }

    pub fn report(self) -> EvalReport {
        EvalReport {
            target: self.target.prf(),
            frame: self.frame.prf(),
            role: self.role.prf(),
            node: self.modules.node.prf(),
            frame_module: self.modules.frame_module.prf(),
            edge: self.modules.edge.prf(),
            sentences: self.sentences,
        }
    }
}

/// Scores predicted sentences against gold ones aligned by position. Each
/// pair must have identical tokens.
pub fn evaluate_corpus(
    pred: &[AnnotatedSentence],
    gold: &[AnnotatedSentence],
    per_sentence: bool,
) -> Result<EvalReport> {
    if pred.len() != gold.len() {
        return Err(Error::Alignment {
            index: pred.len().min(gold.len()),
            message: format!("{} predicted vs {} gold sentences", pred.len(), gold.len()),
        });
    }
    let mut evaluator = Evaluator::new(per_sentence);
    for (i, (p, g)) in pred.iter().zip(gold).enumerate() {
        if p.tokens != g.tokens {
            return Err(Error::Alignment {
                index: i,
                message: "tokens differ".into(),
            });
        }
        evaluator.add(g.id.as_deref(), &p.tuples, &g.tuples, None);
    }
    Ok(evaluator.report())
}
