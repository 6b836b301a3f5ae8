//! Turns a scored parse graph into frame tuples.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{FrameOntology, FrameTuple, Predicate, RoleAssignment, Span};
use crate::edge_builder::{PPEdgeDistribution, PREdgeDistribution};
use crate::error::{Error, Result};
use crate::metrics::{EdgeItem, ModuleGraph};
use crate::node_builder::{argmax, license_key, FrameDistribution, NodeType};

#[derive(Clone, Debug, PartialEq)]
pub struct GraphNode {
    pub span: Span,
    pub node_type: NodeType,
    pub frame: Option<FrameDistribution>,
}

/// Typed nodes with their scored edges. Edge keys index into `nodes`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParseGraph {
    pub nodes: Vec<GraphNode>,
    pub pp_edges: BTreeMap<(usize, usize), PPEdgeDistribution>,
    pub pr_edges: BTreeMap<(usize, usize), PREdgeDistribution>,
}

impl ParseGraph {
    pub fn pp_edge(&self, a: usize, b: usize) -> Option<&PPEdgeDistribution> {
        self.pp_edges
            .get(&(a, b))
            .or_else(|| self.pp_edges.get(&(b, a)))
    }

    /// Module-scoring view: node types, argmax frame of every predicate
    /// node, and argmax edges that are not NULL.
    pub fn module_view(&self, ontology: &FrameOntology, role_labels: &[String]) -> ModuleGraph {
        let mut view = ModuleGraph::default();
        for node in &self.nodes {
            if node.node_type.is_node() {
                view.nodes.insert(node.span, node.node_type);
            }
            if let (true, Some(dist)) = (node.node_type.is_predicate(), &node.frame) {
                view.frames
                    .insert(node.span, ontology.frames()[dist.argmax()].clone());
            }
        }
        for (&(a, b), dist) in &self.pp_edges {
            if dist.is_connected() {
                let (x, y) = (self.nodes[a].span, self.nodes[b].span);
                view.edges.insert(EdgeItem::Connected(x.min(y), x.max(y)));
            }
        }
        for (&(p, r), dist) in &self.pr_edges {
            let label = argmax(&dist.0);
            if label < role_labels.len() {
                view.edges.insert(EdgeItem::Role(
                    self.nodes[p].span,
                    self.nodes[r].span,
                    role_labels[label].clone(),
                ));
            }
        }
        view
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodedPredicate {
    pub pieces: Vec<Span>,
    pub source_nodes: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeOptions {
    /// Restrict frames to those the lexicon licenses for the predicate.
    pub lu_mask: bool,
    /// Turn PPRD nodes with no connected partner into single-piece
    /// predicates instead of dropping them.
    pub promote_singleton_pprd: bool,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            lu_mask: true,
            promote_singleton_pprd: false,
        }
    }
}

/// Union-find with path halving; the smaller index becomes the root.
#[derive(Clone, Debug)]
pub struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    pub fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Assembles predicates: every full-predicate node alone, and every
/// connected group of two or more partial-predicate nodes. Pieces that
/// overlap an earlier piece of the same group are dropped. Predicates with
/// identical pieces are merged.
pub fn decode_targets(graph: &ParseGraph, options: &DecodeOptions) -> Vec<DecodedPredicate> {
    let mut out: Vec<DecodedPredicate> = Vec::new();
    for (i, node) in graph.nodes.iter().enumerate() {
        if node.node_type.is_full_predicate() {
            out.push(DecodedPredicate {
                pieces: vec![node.span],
                source_nodes: vec![i],
            });
        }
    }
    let mut sets = DisjointSets::new(graph.nodes.len());
    for (&(a, b), dist) in &graph.pp_edges {
        let partial = |i: usize| graph.nodes[i].node_type.is_partial_predicate();
        if partial(a) && partial(b) && dist.is_connected() {
            sets.union(a, b);
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, node) in graph.nodes.iter().enumerate() {
        if node.node_type.is_partial_predicate() {
            groups.entry(sets.find(i)).or_default().push(i);
        }
    }
    for members in groups.into_values() {
        let mut members = members;
        members.sort_by_key(|&i| graph.nodes[i].span);
        let mut kept: Vec<usize> = Vec::new();
        for i in members.iter().copied() {
            if kept
                .iter()
                .all(|&k| !graph.nodes[k].span.overlaps(&graph.nodes[i].span))
            {
                kept.push(i);
            }
        }
        if members.len() >= 2 && kept.len() >= 2 {
            out.push(DecodedPredicate {
                pieces: kept.iter().map(|&i| graph.nodes[i].span).collect(),
                source_nodes: kept,
            });
        } else if members.len() == 1 && options.promote_singleton_pprd {
            out.push(DecodedPredicate {
                pieces: vec![graph.nodes[members[0]].span],
                source_nodes: members,
            });
        }
    }
    let mut merged: Vec<DecodedPredicate> = Vec::new();
    for p in out {
        match merged.iter_mut().find(|m| m.pieces == p.pieces) {
            Some(m) => {
                for s in p.source_nodes {
                    if !m.source_nodes.contains(&s) {
                        m.source_nodes.push(s);
                    }
                }
            }
            None => merged.push(p),
        }
    }
    merged
}

/// Frame index maximizing the summed distributions of the source nodes,
/// optionally restricted to `licensed`. Ties go to the lowest index.
pub fn decode_frame_restricted(
    predicate: &DecodedPredicate,
    graph: &ParseGraph,
    licensed: Option<&[usize]>,
) -> Result<usize> {
    let mut total: Vec<f64> = Vec::new();
    for &i in &predicate.source_nodes {
        let dist = graph.nodes[i]
            .frame
            .as_ref()
            .ok_or(Error::MissingFrameDistribution(i))?;
        if total.is_empty() {
            total = vec![0.0; dist.probs.len()];
        }
        for (t, p) in total.iter_mut().zip(&dist.probs) {
            *t += p;
        }
    }
    match licensed.filter(|l| !l.is_empty()) {
        None => Ok(argmax(&total)),
        Some(allowed) => {
            let mut allowed = allowed.to_vec();
            allowed.sort_unstable();
            let mut best = allowed[0];
            for &f in &allowed[1..] {
                if total[f] > total[best] {
                    best = f;
                }
            }
            Ok(best)
        }
    }
}

pub fn decode_frame(predicate: &DecodedPredicate, graph: &ParseGraph) -> Result<usize> {
    decode_frame_restricted(predicate, graph, None)
}

/// Roles for one predicate: for every role node, the predicate-role
/// distributions of the source nodes are averaged and the argmax is taken
/// over the frame's roles and NULL. NULL wins ties.
pub fn decode_roles(
    predicate: &DecodedPredicate,
    frame: &str,
    graph: &ParseGraph,
    ontology: &FrameOntology,
    role_labels: &[String],
) -> Result<Vec<RoleAssignment>> {
    let roles = ontology
        .roles_of(frame)
        .ok_or_else(|| Error::UnknownFrame(frame.to_string()))?;
    let allowed: BTreeSet<usize> = roles
        .iter()
        .filter_map(|r| role_labels.iter().position(|l| l == r))
        .collect();
    let null = role_labels.len();
    let mut out = Vec::new();
    for (r, node) in graph.nodes.iter().enumerate() {
        if !node.node_type.is_role() {
            continue;
        }
        let dists: Vec<&PREdgeDistribution> = predicate
            .source_nodes
            .iter()
            .filter_map(|&p| graph.pr_edges.get(&(p, r)))
            .collect();
        if dists.is_empty() {
            continue;
        }
        let scale = 1.0 / dists.len() as f64;
        let mean = |label: usize| dists.iter().map(|d| d.0[label]).sum::<f64>() * scale;
        let mut best = null;
        let mut best_p = mean(null);
        for &label in &allowed {
            let p = mean(label);
            if p > best_p {
                best = label;
                best_p = p;
            }
        }
        if best != null {
            out.push(RoleAssignment::new(role_labels[best].clone(), node.span));
        }
    }
    Ok(out)
}

/// Pseudo lexical unit of a predicate: the lemmas of all its pieces in
/// order, space-joined.
pub fn predicate_key(pieces: &[Span], lemmas: &[String]) -> String {
    pieces
        .iter()
        .flat_map(|p| lemmas[p.start..=p.end].iter().map(String::as_str))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Full decode of a scored graph.
pub fn decode_graph(
    graph: &ParseGraph,
    ontology: &FrameOntology,
    role_labels: &[String],
    lemmas: &[String],
    options: &DecodeOptions,
) -> Result<Vec<FrameTuple>> {
    let mut tuples = Vec::new();
    for predicate in decode_targets(graph, options) {
        let licensed = if options.lu_mask {
            license_key(&predicate_key(&predicate.pieces, lemmas), ontology)
        } else {
            None
        };
        let frame = decode_frame_restricted(&predicate, graph, licensed.as_deref())?;
        let frame = ontology.frames()[frame].clone();
        let roles = decode_roles(&predicate, &frame, graph, ontology, role_labels)?;
        tuples.push(FrameTuple::new(
            Predicate::new(predicate.pieces),
            frame,
            roles,
        ));
    }
    Ok(tuples)
}
