//! Independent reference implementations used by the integration tests and
//! the acceptance harness.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use framegraph::corpus::{
    generate_fixture, AnnotatedSentence, FixtureOptions, FrameOntology, Span,
};
use framegraph::decoder::{DecodeOptions, GraphNode, ParseGraph};
use framegraph::edge_builder::{PPEdgeDistribution, PREdgeDistribution};
use framegraph::encoder::{EncoderConfig, Vocabulary};
use framegraph::model::{sentence_lemmas, LossOptions, Network, Stage};
use framegraph::nn::{ForwardCtx, Tape};
use framegraph::node_builder::{FrameDistribution, GoldGraph, NodeType};
use framegraph::training::ModelSpec;
use rand::Rng;

pub fn fixture(seed: u64, n: usize) -> (Arc<FrameOntology>, Vec<AnnotatedSentence>) {
    let (ontology, sentences) = generate_fixture(seed, n, &FixtureOptions::default());
    (Arc::new(ontology), sentences)
}

/// Small random encoder dimensions for gradient checks.
pub fn random_tiny_config(rng: &mut impl Rng) -> EncoderConfig {
    EncoderConfig {
        word_dim: rng.gen_range(2..6),
        hidden_size: rng.gen_range(2..5),
        num_layers: rng.gen_range(1..3),
        max_span_length: rng.gen_range(2..5),
        width_embedding_dim: rng.gen_range(1..4),
        dropout_lstm: 0.0,
        dropout_mlp: 0.0,
        mlp_hidden: rng.gen_range(2..6),
        ..EncoderConfig::default()
    }
}

pub fn tiny_spec(ontology: Arc<FrameOntology>, sentences: &[AnnotatedSentence]) -> ModelSpec {
    ModelSpec {
        encoder: EncoderConfig::tiny(),
        vocab: Vocabulary::from_corpus(sentences),
        ontology,
        external: None,
        decode: DecodeOptions::default(),
    }
}

// ---------------------------------------------------------------------------
// Semi-CRF by enumeration

/// Every segmentation of `n` tokens into labelled segments of length at most
/// `max_len`, as `(start, len, label)` lists.
pub fn all_segmentations(
    n: usize,
    max_len: usize,
    labels: usize,
) -> Vec<Vec<(usize, usize, usize)>> {
    fn go(
        pos: usize,
        n: usize,
        max_len: usize,
        labels: usize,
        prefix: &mut Vec<(usize, usize, usize)>,
        out: &mut Vec<Vec<(usize, usize, usize)>>,
    ) {
        if pos == n {
            out.push(prefix.clone());
            return;
        }
        for len in 1..=max_len.min(n - pos) {
            for label in 0..labels {
                prefix.push((pos, len, label));
                go(pos + len, n, max_len, labels, prefix, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(0, n, max_len, labels, &mut Vec::new(), &mut out);
    out
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

// ---------------------------------------------------------------------------
// Decoder oracle

pub const MAX_PARTIAL: usize = 6;

/// Random scored graph over distinct spans of a short sentence, with at most
/// [`MAX_PARTIAL`] partial-predicate nodes.
pub fn random_graph(rng: &mut impl Rng, n_frames: usize, n_roles: usize) -> ParseGraph {
    let n_tokens = rng.gen_range(2..10);
    let mut spans = BTreeSet::new();
    let wanted = rng.gen_range(1..10);
    for _ in 0..wanted * 3 {
        if spans.len() >= wanted {
            break;
        }
        let start = rng.gen_range(0..n_tokens);
        let end = (start + rng.gen_range(0..3)).min(n_tokens - 1);
        spans.insert(Span::new(start, end));
    }
    let mut partial = 0;
    let nodes: Vec<GraphNode> = spans
        .into_iter()
        .map(|span| {
            let mut node_type = NodeType::from_index(rng.gen_range(0..NodeType::COUNT - 1));
            if node_type.is_partial_predicate() {
                if partial == MAX_PARTIAL {
                    node_type =
                        [NodeType::Fprd, NodeType::Role, NodeType::FprdRole][rng.gen_range(0..3)];
                } else {
                    partial += 1;
                }
            }
            // Quantized probabilities make ties common.
            let frame = node_type.is_predicate().then(|| {
                let raw: Vec<f64> = (0..n_frames)
                    .map(|_| rng.gen_range(0..4) as f64 + 1.0)
                    .collect();
                let sum: f64 = raw.iter().sum();
                FrameDistribution {
                    probs: raw.iter().map(|x| x / sum).collect(),
                    mask_applied: false,
                }
            });
            GraphNode {
                span,
                node_type,
                frame,
            }
        })
        .collect();
    let mut graph = ParseGraph {
        nodes,
        ..Default::default()
    };
    for a in 0..graph.nodes.len() {
        for b in a + 1..graph.nodes.len() {
            if graph.nodes[a].node_type.is_partial_predicate()
                && graph.nodes[b].node_type.is_partial_predicate()
            {
                let p = [0.2, 0.5, 0.8][rng.gen_range(0..3)];
                graph
                    .pp_edges
                    .insert((a, b), PPEdgeDistribution([p, 1.0 - p]));
            }
        }
    }
    for p in 0..graph.nodes.len() {
        if !graph.nodes[p].node_type.is_predicate() {
            continue;
        }
        for r in 0..graph.nodes.len() {
            if graph.nodes[r].node_type.is_role() {
                let raw: Vec<f64> = (0..=n_roles)
                    .map(|_| rng.gen_range(0..3) as f64 + 1.0)
                    .collect();
                let sum: f64 = raw.iter().sum();
                graph.pr_edges.insert(
                    (p, r),
                    PREdgeDistribution(raw.iter().map(|x| x / sum).collect()),
                );
            }
        }
    }
    graph
}

/// Ontology with `n_frames` frames over `n_roles` role names; frame `i`
/// owns a deterministic subset of the roles.
pub fn synthetic_ontology(n_frames: usize, n_roles: usize) -> FrameOntology {
    let roles: Vec<String> = (0..n_roles).map(|r| format!("R{r}")).collect();
    let frames = (0..n_frames).map(|f| {
        let owned: Vec<String> = roles
            .iter()
            .enumerate()
            .filter(|(r, _)| (r + f) % 2 == 0 || *r == f % n_roles)
            .map(|(_, x)| x.clone())
            .collect();
        (format!("F{f}"), owned)
    });
    FrameOntology::new(frames, Vec::<(String, Vec<String>)>::new()).expect("valid ontology")
}

/// Expected decoder output: `(pieces, frame name, sorted (role, span))`.
pub type OracleTuple = (Vec<Span>, String, Vec<(String, Span)>);

pub fn oracle_decode(
    graph: &ParseGraph,
    ontology: &FrameOntology,
    role_labels: &[String],
    promote: bool,
) -> BTreeSet<OracleTuple> {
    let nodes = &graph.nodes;
    // Predicates: piece list with the nodes that voted for it.
    let mut predicates: BTreeMap<Vec<Span>, BTreeSet<usize>> = BTreeMap::new();
    for (i, n) in nodes.iter().enumerate() {
        if n.node_type.is_full_predicate() {
            predicates.entry(vec![n.span]).or_default().insert(i);
        }
    }
    let partial: Vec<usize> = (0..nodes.len())
        .filter(|&i| nodes[i].node_type.is_partial_predicate())
        .collect();
    let linked = |a: usize, b: usize| {
        let key = (a.min(b), a.max(b));
        graph.pp_edges.get(&key).is_some_and(|d| d.0[0] > d.0[1])
    };
    let mut seen = BTreeSet::new();
    for &start in &partial {
        if !seen.insert(start) {
            continue;
        }
        let mut component = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(x) = queue.pop_front() {
            for &y in &partial {
                if !seen.contains(&y) && linked(x, y) {
                    seen.insert(y);
                    component.push(y);
                    queue.push_back(y);
                }
            }
        }
        component.sort_by_key(|&i| nodes[i].span);
        if component.len() == 1 {
            if promote {
                predicates
                    .entry(vec![nodes[start].span])
                    .or_default()
                    .insert(start);
            }
            continue;
        }
        let mut kept: Vec<usize> = Vec::new();
        for &i in &component {
            if kept.iter().all(|&k| {
                nodes[k].span.end < nodes[i].span.start || nodes[i].span.end < nodes[k].span.start
            }) {
                kept.push(i);
            }
        }
        if kept.len() >= 2 {
            let pieces: Vec<Span> = kept.iter().map(|&i| nodes[i].span).collect();
            predicates.entry(pieces).or_default().extend(kept);
        }
    }

    let mut out = BTreeSet::new();
    for (pieces, sources) in predicates {
        let n_frames = ontology.num_frames();
        let mut total = vec![0.0; n_frames];
        for &s in &sources {
            for (t, p) in total
                .iter_mut()
                .zip(&nodes[s].frame.as_ref().unwrap().probs)
            {
                *t += p;
            }
        }
        let mut frame = 0;
        for f in 1..n_frames {
            if total[f] > total[frame] {
                frame = f;
            }
        }
        let frame_name = ontology.frames()[frame].clone();
        let allowed = ontology.roles_of(&frame_name).unwrap();
        let null = role_labels.len();
        let mut roles = Vec::new();
        for (r, node) in nodes.iter().enumerate() {
            if !node.node_type.is_role() {
                continue;
            }
            let dists: Vec<&PREdgeDistribution> = sources
                .iter()
                .filter_map(|&p| graph.pr_edges.get(&(p, r)))
                .collect();
            if dists.is_empty() {
                continue;
            }
            let mean: Vec<f64> = (0..=null)
                .map(|l| dists.iter().map(|d| d.0[l]).sum::<f64>() / dists.len() as f64)
                .collect();
            let mut best: Option<usize> = None;
            for (l, name) in role_labels.iter().enumerate() {
                if allowed.contains(name)
                    && mean[l] > mean[null]
                    && best.is_none_or(|b| mean[l] > mean[b])
                {
                    best = Some(l);
                }
            }
            if let Some(l) = best {
                roles.push((role_labels[l].clone(), node.span));
            }
        }
        roles.sort();
        out.insert((pieces, frame_name, roles));
    }
    out
}

pub fn tuples_as_oracle(tuples: &[framegraph::corpus::FrameTuple]) -> BTreeSet<OracleTuple> {
    tuples
        .iter()
        .map(|t| {
            let mut roles: Vec<(String, Span)> = t
                .roles
                .iter()
                .map(|r| (r.role_name.clone(), r.value))
                .collect();
            roles.sort();
            (t.predicate.pieces.clone(), t.frame.clone(), roles)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Finite differences on a whole network

/// Loss of one sentence under the stage's objective, evaluated without
/// dropout.
pub fn network_loss(network: &Network, sentence: &AnnotatedSentence) -> f64 {
    let tape = Tape::new();
    let ctx = ForwardCtx::eval(&tape, network.store());
    let gold = GoldGraph::build(
        sentence,
        network.ontology(),
        network.role_labels(),
        network.encoder().config().max_span_length,
    );
    let lemmas = sentence_lemmas(sentence).unwrap();
    let loss = network
        .sentence_loss(&ctx, sentence, &gold, &lemmas, &LossOptions::default())
        .unwrap();
    let x = loss.total.map_or(0.0, |v| tape.value(v).item());
    x
}

/// Compares analytic gradients with central differences on up to
/// `per_param` entries of every trainable parameter. Returns the worst
/// relative error `|a - n| / max(|a|, |n|)` over entries whose magnitude
/// exceeds `floor`, and the number of entries compared (zero when the
/// sentence has no loss term for the stage).
pub fn gradient_check(
    network: &mut Network,
    sentence: &AnnotatedSentence,
    per_param: usize,
    rng: &mut impl Rng,
) -> (f64, usize) {
    let stage: Stage = network.stage();
    network.store_mut().zero_grads();
    {
        let tape = Tape::new();
        let gold = GoldGraph::build(
            sentence,
            network.ontology(),
            network.role_labels(),
            network.encoder().config().max_span_length,
        );
        let lemmas = sentence_lemmas(sentence).unwrap();
        let total = {
            let ctx = ForwardCtx::eval(&tape, network.store());
            network
                .sentence_loss(&ctx, sentence, &gold, &lemmas, &LossOptions::default())
                .unwrap()
                .total
        };
        match total {
            Some(total) => tape.backward(total, network.store_mut()),
            None => return (0.0, 0),
        }
    }
    let ids: Vec<_> = network
        .store()
        .ids()
        .filter(|&id| stage.is_trainable(network.store().param(id)))
        .collect();
    let eps = 1e-5;
    let floor = 1e-7;
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for id in ids {
        let len = network.store().value(id).len();
        let analytic = network.store().grad(id).clone();
        for _ in 0..per_param.min(len) {
            let i = rng.gen_range(0..len);
            let orig = network.store().value(id).data()[i];
            network.store_mut().value_mut(id).data_mut()[i] = orig + eps;
            let plus = network_loss(network, sentence);
            network.store_mut().value_mut(id).data_mut()[i] = orig - eps;
            let minus = network_loss(network, sentence);
            network.store_mut().value_mut(id).data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.data()[i];
            let scale = a.abs().max(numeric.abs());
            if scale < floor {
                continue;
            }
            worst = worst.max((a - numeric).abs() / scale.max(1e-4));
            compared += 1;
        }
    }
    (worst, compared)
}

// ---------------------------------------------------------------------------
// Hand-scored metric fixture

fn tuple(
    pieces: &[(usize, usize)],
    frame: &str,
    roles: &[(&str, usize, usize)],
) -> framegraph::corpus::FrameTuple {
    use framegraph::corpus::{FrameTuple, Predicate, RoleAssignment};
    FrameTuple::new(
        Predicate::new(pieces.iter().map(|&(s, e)| Span::new(s, e)).collect()),
        frame,
        roles
            .iter()
            .map(|&(r, s, e)| RoleAssignment::new(r, Span::new(s, e)))
            .collect(),
    )
}

/// Expected `(tp, predicted, gold)` for target, frame and role.
pub struct ExpectedCounts {
    pub target: (usize, usize, usize),
    pub frame: (usize, usize, usize),
    pub role: (usize, usize, usize),
}

/// Five predicted/gold sentence pairs covering a discontinuous predicate
/// with a missing piece, a span that is both predicate and role, a wrong
/// frame, a spurious role, and a spurious predicate.
///
/// Per sentence (target / frame / role as tp,pred,gold):
/// 1. missing piece: 0,1,1 / 0,1,1 / 0,1,2
/// 2. shared span, exact: 2,2,2 / 2,2,2 / 2,2,2
/// 3. wrong frame: 1,1,1 / 0,1,1 / 1,1,1
/// 4. spurious role: 1,1,1 / 1,1,1 / 1,2,1
/// 5. spurious predicate: 0,1,0 / 0,1,0 / 0,0,0
pub fn adversarial_metric_fixture() -> (
    Vec<AnnotatedSentence>,
    Vec<AnnotatedSentence>,
    ExpectedCounts,
) {
    let tokens: Vec<String> = "a b c d e f".split(' ').map(str::to_string).collect();
    let pairs = vec![
        (
            vec![tuple(&[(1, 1)], "A", &[("Agent", 0, 0)])],
            vec![tuple(
                &[(1, 1), (3, 3)],
                "A",
                &[("Agent", 0, 0), ("Theme", 4, 5)],
            )],
        ),
        (
            vec![
                tuple(&[(0, 0)], "A", &[("Theme", 2, 2)]),
                tuple(&[(2, 2)], "B", &[("Agent", 3, 3)]),
            ],
            vec![
                tuple(&[(0, 0)], "A", &[("Theme", 2, 2)]),
                tuple(&[(2, 2)], "B", &[("Agent", 3, 3)]),
            ],
        ),
        (
            vec![tuple(&[(1, 1)], "B", &[("Agent", 0, 0)])],
            vec![tuple(&[(1, 1)], "A", &[("Agent", 0, 0)])],
        ),
        (
            vec![tuple(&[(0, 0)], "A", &[("Agent", 1, 1), ("Theme", 2, 3)])],
            vec![tuple(&[(0, 0)], "A", &[("Agent", 1, 1)])],
        ),
        (vec![tuple(&[(2, 2)], "A", &[])], vec![]),
    ];
    let mut pred = Vec::new();
    let mut gold = Vec::new();
    for (i, (p, g)) in pairs.into_iter().enumerate() {
        let mut s = AnnotatedSentence::new(tokens.clone());
        s.id = Some(format!("s{i}"));
        pred.push(AnnotatedSentence {
            tuples: p,
            ..s.clone()
        });
        gold.push(AnnotatedSentence { tuples: g, ..s });
    }
    let expected = ExpectedCounts {
        target: (4, 6, 5),
        frame: (3, 6, 5),
        role: (4, 6, 6),
    };
    (pred, gold, expected)
}

pub fn adversarial_ontology() -> FrameOntology {
    let roles = vec!["Agent".to_string(), "Theme".to_string()];
    FrameOntology::new(
        [("A".to_string(), roles.clone()), ("B".to_string(), roles)],
        Vec::<(String, Vec<String>)>::new(),
    )
    .unwrap()
}
