//! Zeroth-order semi-Markov CRF over labeled segmentations, used as the
//! role-labeling stage of one pipeline baseline.

use rand::Rng;

use crate::corpus::{FrameOntology, RoleAssignment, Span};
use crate::error::{Error, Result};
use crate::nn::{
    logsumexp, ForwardCtx, Head, Linear, Matrix, ParamGroup, ParamSpec, ParamStore, Var,
};

/// Segment scores indexed by (start, length − 1, label).
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentLattice {
    n: usize,
    max_len: usize,
    labels: usize,
    scores: Vec<f64>,
}

impl SegmentLattice {
    /// All-zero lattice. Entries for segments running past `n` exist but are
    /// never read.
    pub fn zeros(n: usize, max_len: usize, labels: usize) -> Self {
        assert!(n >= 1 && max_len >= 1 && labels >= 1, "degenerate lattice");
        SegmentLattice {
            n,
            max_len,
            labels,
            scores: vec![0.0; n * max_len * labels],
        }
    }

    pub fn from_fn(
        n: usize,
        max_len: usize,
        labels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut lattice = SegmentLattice::zeros(n, max_len, labels);
        for start in 0..n {
            for len in 1..=max_len.min(n - start) {
                for label in 0..labels {
                    lattice.set(start, len, label, f(start, len, label));
                }
            }
        }
        lattice
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn labels(&self) -> usize {
        self.labels
    }

    fn offset(&self, start: usize, len: usize, label: usize) -> usize {
        debug_assert!(
            len >= 1 && len <= self.max_len && start + len <= self.n && label < self.labels
        );
        (start * self.max_len + len - 1) * self.labels + label
    }

    pub fn score(&self, start: usize, len: usize, label: usize) -> f64 {
        self.scores[self.offset(start, len, label)]
    }

    pub fn set(&mut self, start: usize, len: usize, label: usize, value: f64) {
        let i = self.offset(start, len, label);
        self.scores[i] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.scores.iter().all(|s| s.is_finite())
    }

    /// Segment lengths allowed at `start`.
    fn lengths(&self, start: usize) -> std::ops::RangeInclusive<usize> {
        1..=self.max_len.min(self.n - start)
    }

    /// `alpha[i]`: log-sum of all labeled segmentations of tokens `0..i`.
    fn alpha(&self) -> Vec<f64> {
        let mut alpha = vec![f64::NEG_INFINITY; self.n + 1];
        alpha[0] = 0.0;
        for end in 1..=self.n {
            let terms = (1..=self.max_len.min(end)).flat_map(|len| {
                let start = end - len;
                (0..self.labels).map(move |y| (start, len, y))
            });
            alpha[end] = logsumexp(terms.map(|(s, l, y)| alpha[s] + self.score(s, l, y)));
        }
        alpha
    }

    /// `beta[i]`: log-sum of all labeled segmentations of tokens `i..n`.
    fn beta(&self) -> Vec<f64> {
        let mut beta = vec![f64::NEG_INFINITY; self.n + 1];
        beta[self.n] = 0.0;
        for start in (0..self.n).rev() {
            let terms = self
                .lengths(start)
                .flat_map(|len| (0..self.labels).map(move |y| (len, y)));
            beta[start] = logsumexp(terms.map(|(l, y)| self.score(start, l, y) + beta[start + l]));
        }
        beta
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
    pub label: usize,
}

impl Segment {
    pub fn span(&self) -> Span {
        Span::new(self.start, self.start + self.len - 1)
    }
}

/// Labeled segments covering a sentence left to right.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Segmentation {
    pub segments: Vec<Segment>,
}

impl Segmentation {
    pub fn validate(&self, lattice: &SegmentLattice) -> Result<()> {
        let mut next = 0;
        for s in &self.segments {
            if s.start != next {
                return Err(Error::InvalidSegmentation(format!(
                    "segment at {} but expected {next}",
                    s.start
                )));
            }
            if s.len == 0 || s.len > lattice.max_len {
                return Err(Error::InvalidSegmentation(format!(
                    "segment length {} outside 1..={}",
                    s.len, lattice.max_len
                )));
            }
            if s.label >= lattice.labels {
                return Err(Error::InvalidSegmentation(format!(
                    "label {} out of range",
                    s.label
                )));
            }
            next += s.len;
        }
        if next != lattice.n {
            return Err(Error::InvalidSegmentation(format!(
                "covers {next} of {} tokens",
                lattice.n
            )));
        }
        Ok(())
    }

    /// Sum of segment scores, accumulated from the last segment backwards.
    pub fn score(&self, lattice: &SegmentLattice) -> f64 {
        self.segments
            .iter()
            .rev()
            .fold(0.0, |acc, s| lattice.score(s.start, s.len, s.label) + acc)
    }
}

pub fn forward_logz(lattice: &SegmentLattice) -> f64 {
    lattice.alpha()[lattice.n]
}

/// Posterior probability of every segment, laid out like the lattice.
pub fn marginals(lattice: &SegmentLattice) -> SegmentLattice {
    let alpha = lattice.alpha();
    let beta = lattice.beta();
    let log_z = alpha[lattice.n];
    SegmentLattice::from_fn(lattice.n, lattice.max_len, lattice.labels, |s, l, y| {
        (alpha[s] + lattice.score(s, l, y) + beta[s + l] - log_z).exp()
    })
}

/// Highest-scoring segmentation. Among equal scores the shorter first
/// segment wins, then the lower label, recursively along the sentence.
pub fn viterbi(lattice: &SegmentLattice) -> Segmentation {
    let n = lattice.n;
    let mut best = vec![f64::NEG_INFINITY; n + 1];
    let mut choice = vec![(0usize, 0usize); n];
    best[n] = 0.0;
    for start in (0..n).rev() {
        for len in lattice.lengths(start) {
            for y in 0..lattice.labels {
                let total = lattice.score(start, len, y) + best[start + len];
                if total > best[start] {
                    best[start] = total;
                    choice[start] = (len, y);
                }
            }
        }
    }
    let mut segments = Vec::new();
    let mut start = 0;
    while start < n {
        let (len, label) = choice[start];
        segments.push(Segment { start, len, label });
        start += len;
    }
    Segmentation { segments }
}

/// `logZ − score(gold)`.
pub fn semicrf_nll(lattice: &SegmentLattice, gold: &Segmentation) -> Result<f64> {
    gold.validate(lattice)?;
    Ok(forward_logz(lattice) - gold.score(lattice))
}

/// NLL and its gradient with respect to every lattice score
/// (segment marginal minus gold indicator).
pub fn semicrf_nll_with_grad(
    lattice: &SegmentLattice,
    gold: &Segmentation,
) -> Result<(f64, SegmentLattice)> {
    let nll = semicrf_nll(lattice, gold)?;
    let mut grad = marginals(lattice);
    for s in &gold.segments {
        let g = grad.score(s.start, s.len, s.label);
        grad.set(s.start, s.len, s.label, g - 1.0);
    }
    Ok((nll, grad))
}

/// Gold segmentation for one predicate's roles. Overlapping roles keep the
/// longer one (earlier start on equal length); roles longer than the
/// segment limit cannot be represented. Uncovered tokens become
/// single-token `outside` segments.
pub fn gold_segmentation(
    n: usize,
    max_len: usize,
    roles: &[(Span, usize)],
    outside: usize,
) -> (Segmentation, GoldCoverage) {
    let mut coverage = GoldCoverage::default();
    let mut ordered: Vec<&(Span, usize)> = roles.iter().collect();
    ordered.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(&b.0)));
    let mut kept: Vec<(Span, usize)> = Vec::new();
    for &&(span, label) in &ordered {
        if span.len() > max_len {
            coverage.too_long += 1;
        } else if kept.iter().any(|(k, _)| k.overlaps(&span)) {
            coverage.overlapping += 1;
        } else {
            kept.push((span, label));
        }
    }
    kept.sort();
    let mut segments = Vec::new();
    let mut next = 0;
    for (span, label) in kept {
        while next < span.start {
            segments.push(Segment {
                start: next,
                len: 1,
                label: outside,
            });
            next += 1;
        }
        segments.push(Segment {
            start: span.start,
            len: span.len(),
            label,
        });
        next = span.end + 1;
    }
    while next < n {
        segments.push(Segment {
            start: next,
            len: 1,
            label: outside,
        });
        next += 1;
    }
    (Segmentation { segments }, coverage)
}

/// Gold roles the segmentation could not hold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GoldCoverage {
    pub overlapping: usize,
    pub too_long: usize,
}

impl std::ops::AddAssign for GoldCoverage {
    fn add_assign(&mut self, other: GoldCoverage) {
        self.overlapping += other.overlapping;
        self.too_long += other.too_long;
    }
}

/// Per-label linear scorer over `[g_span; g_pred; g_span ⊙ g_pred]`. The
/// output columns are the global role labels followed by `O`; a frame's
/// lattice reads only the columns of its own roles and `O`.
#[derive(Clone, Debug)]
pub struct SemiCrfHead {
    pub scorer: Linear,
    role_labels: Vec<String>,
}

impl SemiCrfHead {
    pub fn new(
        store: &mut ParamStore,
        span_dim: usize,
        role_labels: Vec<String>,
        rng: &mut impl Rng,
    ) -> Self {
        let scorer = Linear::new(
            &mut ParamSpec {
                store,
                group: ParamGroup::Other,
                head: Head::SemiCrf,
            },
            "semicrf.scorer",
            3 * span_dim,
            role_labels.len() + 1,
            true,
            rng,
        );
        SemiCrfHead {
            scorer,
            role_labels,
        }
    }

    pub fn role_labels(&self) -> &[String] {
        &self.role_labels
    }

    /// Global columns used by a frame's lattice: its roles in ontology
    /// order, then `O`.
    pub fn frame_columns(&self, ontology: &FrameOntology, frame: &str) -> Result<Vec<usize>> {
        let roles = ontology
            .roles_of(frame)
            .ok_or_else(|| Error::UnknownFrame(frame.to_string()))?;
        let mut columns: Vec<usize> = roles
            .iter()
            .map(|r| {
                self.role_labels
                    .iter()
                    .position(|l| l == r)
                    .ok_or_else(|| Error::UnknownRole {
                        frame: frame.to_string(),
                        role: r.clone(),
                    })
            })
            .collect::<Result<_>>()?;
        columns.push(self.role_labels.len());
        Ok(columns)
    }

    /// Scores of every enumerated span (rows, in `spans` order) against one
    /// predicate representation (`1 × d`).
    pub fn span_scores(&self, ctx: &ForwardCtx<'_>, span_reps: Var, predicate: Var) -> Var {
        let tape = ctx.tape;
        let m = tape.shape(span_reps).0;
        let pred = tape.gather_rows(predicate, &vec![0; m]);
        let features = tape.concat_cols(&[span_reps, pred, tape.mul(span_reps, pred)]);
        self.scorer.forward(ctx, features)
    }
}

/// Builds a frame-restricted lattice from global span scores.
pub fn lattice_from_scores(
    scores: &Matrix,
    spans: &[Span],
    n: usize,
    max_len: usize,
    columns: &[usize],
) -> SegmentLattice {
    let mut lattice = SegmentLattice::zeros(n, max_len, columns.len());
    for (row, span) in spans.iter().enumerate() {
        for (label, &col) in columns.iter().enumerate() {
            lattice.set(span.start, span.len(), label, scores.get(row, col));
        }
    }
    lattice
}

/// Scatters a lattice gradient back onto the global score matrix layout.
pub fn scores_gradient(
    grad: &SegmentLattice,
    spans: &[Span],
    shape: (usize, usize),
    columns: &[usize],
) -> Matrix {
    let mut out = Matrix::zeros(shape.0, shape.1);
    for (row, span) in spans.iter().enumerate() {
        for (label, &col) in columns.iter().enumerate() {
            out.set(row, col, grad.score(span.start, span.len(), label));
        }
    }
    out
}

/// Decodes role assignments from a frame-restricted lattice: Viterbi, then
/// every non-`O` segment becomes a role.
pub fn roles_from_lattice(lattice: &SegmentLattice, roles: &[String]) -> Vec<RoleAssignment> {
    viterbi(lattice)
        .segments
        .into_iter()
        .filter(|s| s.label < roles.len())
        .map(|s| RoleAssignment::new(roles[s.label].clone(), s.span()))
        .collect()
}
