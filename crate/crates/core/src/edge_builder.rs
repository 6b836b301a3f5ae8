//! Predicate-predicate and predicate-role edge classifiers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Span;
use crate::error::{Error, Result};
use crate::nn::{softmax, ForwardCtx, Head, Mlp, ParamGroup, ParamSpec, ParamStore, Var};
use crate::node_builder::NodeType;

/// Label index of a connected predicate-predicate edge.
pub const CONNECTED: usize = 0;
/// Label index of an absent predicate-predicate edge.
pub const PP_NULL: usize = 1;

/// Probabilities over {Connected, NULL}.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PPEdgeDistribution(pub [f64; 2]);

impl PPEdgeDistribution {
    pub fn from_logits(logits: &[f64]) -> Self {
        let p = softmax(logits);
        PPEdgeDistribution([p[0], p[1]])
    }

    pub fn connected(&self) -> f64 {
        self.0[CONNECTED]
    }

    /// True only when Connected strictly beats NULL.
    pub fn is_connected(&self) -> bool {
        self.0[CONNECTED] > self.0[PP_NULL]
    }
}

/// Probabilities over the global role labels followed by NULL.
#[derive(Clone, Debug, PartialEq)]
pub struct PREdgeDistribution(pub Vec<f64>);

impl PREdgeDistribution {
    pub fn from_logits(logits: &[f64]) -> Self {
        PREdgeDistribution(softmax(logits))
    }

    pub fn null_index(&self) -> usize {
        self.0.len() - 1
    }

    pub fn null(&self) -> f64 {
        self.0[self.null_index()]
    }
}

/// How candidate node types are obtained when pairing nodes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairMode {
    /// Gold node labels (teacher forcing).
    #[default]
    GoldNodes,
    /// Argmax of the node-type classifier.
    PredictedNodes,
}

/// Candidate pairs, as indices into the node list they were built from.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CandidatePairs {
    /// Unordered pairs of PPRD-typed nodes with `spans[i] < spans[j]`.
    pub pp: Vec<(usize, usize)>,
    /// (predicate-typed node, ROLE-typed node) pairs.
    pub pr: Vec<(usize, usize)>,
}

/// Pairs up typed nodes. The same span may appear on both sides of a
/// predicate-role pair when it carries both components.
pub fn build_candidate_pairs(nodes: &[(Span, NodeType)]) -> CandidatePairs {
    let mut partial: Vec<usize> = (0..nodes.len())
        .filter(|&i| nodes[i].1.is_partial_predicate())
        .collect();
    partial.sort_by_key(|&i| nodes[i].0);
    let mut pairs = CandidatePairs::default();
    for (a, &i) in partial.iter().enumerate() {
        for &j in &partial[a + 1..] {
            pairs.pp.push((i, j));
        }
    }
    for (i, (_, ti)) in nodes.iter().enumerate() {
        if !ti.is_predicate() {
            continue;
        }
        for (j, (_, tj)) in nodes.iter().enumerate() {
            if tj.is_role() {
                pairs.pr.push((i, j));
            }
        }
    }
    pairs
}

/// `[g_i; g_j; g_i ⊙ g_j]` for each pair of rows of `reps`.
pub fn pair_features(ctx: &ForwardCtx<'_>, reps: Var, pairs: &[(usize, usize)]) -> Var {
    let tape = ctx.tape;
    let left: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let right: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let gi = tape.gather_rows(reps, &left);
    let gj = tape.gather_rows(reps, &right);
    tape.concat_cols(&[gi, gj, tape.mul(gi, gj)])
}

/// The two edge classifiers.
#[derive(Clone, Debug)]
pub struct EdgeBuilder {
    pub pp_mlp: Mlp,
    pub pr_mlp: Mlp,
    role_labels: Vec<String>,
}

impl EdgeBuilder {
    pub fn new(
        store: &mut ParamStore,
        span_dim: usize,
        mlp_hidden: usize,
        role_labels: Vec<String>,
        dropout: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let pp_mlp = Mlp::new(
            &mut ParamSpec {
                store,
                group: ParamGroup::Other,
                head: Head::PredicateEdge,
            },
            "edge.pp",
            3 * span_dim,
            mlp_hidden,
            2,
            dropout,
            rng,
        );
        let pr_mlp = Mlp::new(
            &mut ParamSpec {
                store,
                group: ParamGroup::Other,
                head: Head::RoleEdge,
            },
            "edge.pr",
            3 * span_dim,
            mlp_hidden,
            role_labels.len() + 1,
            dropout,
            rng,
        );
        EdgeBuilder {
            pp_mlp,
            pr_mlp,
            role_labels,
        }
    }

    pub fn role_labels(&self) -> &[String] {
        &self.role_labels
    }

    /// Index of NULL in predicate-role distributions.
    pub fn role_null(&self) -> usize {
        self.role_labels.len()
    }

    pub fn pp_logits(&self, ctx: &ForwardCtx<'_>, reps: Var, pairs: &[(usize, usize)]) -> Var {
        self.pp_mlp.forward(ctx, pair_features(ctx, reps, pairs))
    }

    pub fn pr_logits(&self, ctx: &ForwardCtx<'_>, reps: Var, pairs: &[(usize, usize)]) -> Var {
        self.pr_mlp.forward(ctx, pair_features(ctx, reps, pairs))
    }

    /// Scores one predicate-predicate pair. Arguments are put in span order
    /// first, so both argument orders give the same distribution.
    pub fn score_pp_edge(
        &self,
        ctx: &ForwardCtx<'_>,
        a: (Span, Var),
        b: (Span, Var),
    ) -> Result<PPEdgeDistribution> {
        if a.0 == b.0 {
            return Err(Error::SelfEdge);
        }
        let (first, second) = if a.0 < b.0 { (a.1, b.1) } else { (b.1, a.1) };
        let reps = ctx.tape.concat_rows(&[first, second]);
        let logits = self.pp_logits(ctx, reps, &[(0, 1)]);
        let logits = ctx.tape.value(logits);
        Ok(PPEdgeDistribution::from_logits(logits.row(0)))
    }

    pub fn score_pr_edge(
        &self,
        ctx: &ForwardCtx<'_>,
        predicate: Var,
        role: Var,
    ) -> PREdgeDistribution {
        let reps = ctx.tape.concat_rows(&[predicate, role]);
        let logits = self.pr_logits(ctx, reps, &[(0, 1)]);
        let logits = ctx.tape.value(logits);
        PREdgeDistribution::from_logits(logits.row(0))
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::{Matrix, Tape};

    fn builder(store: &mut ParamStore, dim: usize) -> EdgeBuilder {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        EdgeBuilder::new(
            store,
            dim,
            6,
            vec!["A".into(), "B".into(), "C".into()],
            0.0,
            &mut rng,
        )
    }

    #[test]
    fn pair_counts() {
        let s = |i| Span::new(i, i);
        let none = [(s(0), NodeType::Role), (s(1), NodeType::Fprd)];
        assert!(build_candidate_pairs(&none).pp.is_empty());
        let three = [
            (s(4), NodeType::Pprd),
            (s(0), NodeType::Pprd),
            (s(2), NodeType::PprdRole),
        ];
        let pairs = build_candidate_pairs(&three);
        assert_eq!(pairs.pp, vec![(1, 2), (1, 0), (2, 0)]);
        let mixed = [
            (s(0), NodeType::Fprd),
            (s(1), NodeType::Pprd),
            (s(2), NodeType::Role),
            (s(3), NodeType::Role),
            (s(4), NodeType::Role),
            (s(5), NodeType::Null),
        ];
        assert_eq!(build_candidate_pairs(&mixed).pr.len(), 6);
    }

    #[test]
    fn product_block_vanishes_against_zero_vector() {
        let tape = Tape::new();
        let store = ParamStore::new();
        let ctx = ForwardCtx::eval(&tape, &store);
        let reps = tape.constant(Matrix::from_rows(&[vec![1.5, -2.0], vec![0.0, 0.0]]));
        let f = pair_features(&ctx, reps, &[(0, 1)]);
        assert_eq!(tape.value(f).row(0), &[1.5, -2.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn pp_scoring_is_symmetric_and_rejects_self_edges() {
        let mut store = ParamStore::new();
        let edges = builder(&mut store, 4);
        let tape = Tape::new();
        let ctx = ForwardCtx::eval(&tape, &store);
        let ga = tape.constant(Matrix::row_vector(vec![0.1, 0.2, -0.3, 0.4]));
        let gb = tape.constant(Matrix::row_vector(vec![-0.5, 0.6, 0.7, 0.0]));
        let (a, b) = (Span::new(0, 1), Span::new(3, 3));
        let ab = edges.score_pp_edge(&ctx, (a, ga), (b, gb)).unwrap();
        let ba = edges.score_pp_edge(&ctx, (b, gb), (a, ga)).unwrap();
        assert_eq!(ab, ba);
        assert!((ab.0[0] + ab.0[1] - 1.0).abs() < 1e-6);
        assert!(matches!(
            edges.score_pp_edge(&ctx, (a, ga), (a, gb)),
            Err(Error::SelfEdge)
        ));
        let pr = edges.score_pr_edge(&ctx, ga, gb);
        assert_eq!(pr.0.len(), 4);
        assert!((pr.0.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}
