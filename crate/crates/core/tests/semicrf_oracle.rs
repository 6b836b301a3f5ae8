mod common;

use common::{all_segmentations, log_sum_exp};
use framegraph::semicrf::{
    forward_logz, marginals, viterbi, Segment, SegmentLattice, Segmentation,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn path_score(lattice: &SegmentLattice, path: &[(usize, usize, usize)]) -> f64 {
    path.iter().map(|&(s, l, y)| lattice.score(s, l, y)).sum()
}

fn as_segmentation(path: &[(usize, usize, usize)]) -> Segmentation {
    Segmentation {
        segments: path
            .iter()
            .map(|&(start, len, label)| Segment { start, len, label })
            .collect(),
    }
}

#[test]
fn logz_and_viterbi_match_enumeration_for_every_small_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 1..=8 {
        for max_len in 1..=3 {
            for labels in 1..=3 {
                for _ in 0..3 {
                    let lattice = SegmentLattice::from_fn(n, max_len, labels, |_, _, _| {
                        rng.gen_range(-3.0..3.0)
                    });
                    let paths = all_segmentations(n, max_len, labels);
                    let scores: Vec<f64> = paths.iter().map(|p| path_score(&lattice, p)).collect();
                    let logz = log_sum_exp(&scores);
                    assert!(
                        (forward_logz(&lattice) - logz).abs() < 1e-8,
                        "n={n} L={max_len} K={labels}"
                    );

                    let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let decoded = viterbi(&lattice);
                    decoded.validate(&lattice).unwrap();
                    assert!((decoded.score(&lattice) - best).abs() < 1e-8);
                }
            }
        }
    }
}

#[test]
fn marginals_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (n, max_len, labels) = (5, 3, 2);
    let lattice = SegmentLattice::from_fn(n, max_len, labels, |_, _, _| rng.gen_range(-2.0..2.0));
    let paths = all_segmentations(n, max_len, labels);
    let scores: Vec<f64> = paths.iter().map(|p| path_score(&lattice, p)).collect();
    let logz = log_sum_exp(&scores);
    let m = marginals(&lattice);
    for start in 0..n {
        for len in 1..=max_len.min(n - start) {
            for label in 0..labels {
                let expected: f64 = paths
                    .iter()
                    .zip(&scores)
                    .filter(|(p, _)| p.contains(&(start, len, label)))
                    .map(|(_, s)| (s - logz).exp())
                    .sum();
                assert!((m.score(start, len, label) - expected).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn uniform_scores_give_path_count() {
    // With all-zero scores Z counts segmentations: the tribonacci-like
    // recurrence c(n) = K * (c(n-1) + c(n-2) + c(n-3)).
    let (n, max_len, labels) = (8, 3, 2);
    let mut c = vec![1.0f64; n + 1];
    for i in 1..=n {
        c[i] = (1..=max_len.min(i)).map(|l| labels as f64 * c[i - l]).sum();
    }
    let lattice = SegmentLattice::zeros(n, max_len, labels);
    assert!((forward_logz(&lattice) - c[n].ln()).abs() < 1e-10);
}

proptest! {
    #[test]
    fn viterbi_beats_random_segmentations(
        n in 1usize..12,
        max_len in 1usize..5,
        labels in 1usize..4,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lattice = SegmentLattice::from_fn(n, max_len, labels, |_, _, _| rng.gen_range(-3.0..3.0));
        let best = viterbi(&lattice).score(&lattice);
        for _ in 0..20 {
            let mut path = Vec::new();
            let mut pos = 0;
            while pos < n {
                let len = rng.gen_range(1..=max_len.min(n - pos));
                path.push((pos, len, rng.gen_range(0..labels)));
                pos += len;
            }
            let seg = as_segmentation(&path);
            prop_assert!(seg.validate(&lattice).is_ok());
            prop_assert!(seg.score(&lattice) <= best + 1e-12);
        }
        prop_assert!(best <= forward_logz(&lattice) + 1e-12);
    }

    #[test]
    fn token_marginals_sum_to_one(
        n in 1usize..10,
        max_len in 1usize..4,
        labels in 1usize..4,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lattice = SegmentLattice::from_fn(n, max_len, labels, |_, _, _| rng.gen_range(-3.0..3.0));
        let m = marginals(&lattice);
        for t in 0..n {
            let mut total = 0.0;
            for start in 0..n {
                for len in 1..=max_len.min(n - start) {
                    if start <= t && t < start + len {
                        total += (0..labels).map(|y| m.score(start, len, y)).sum::<f64>();
                    }
                }
            }
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }
}
