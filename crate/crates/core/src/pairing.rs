//! Positive and negative bimodal pairs with weakly supervised targets.
//!
//! Pairs hold sample indices only; the embeddings are concatenated when a
//! pair is scored so encoder gradients stay live.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::ModalityId;
use crate::error::{config_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairPolarity {
    Positive,
    Negative,
}

impl PairPolarity {
    pub fn as_str(self) -> &'static str {
        match self {
            PairPolarity::Positive => "positive",
            PairPolarity::Negative => "negative",
        }
    }
}

/// Two distinct modalities, `first < second`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModalityPair {
    pub first: ModalityId,
    pub second: ModalityId,
}

impl ModalityPair {
    pub fn new(first: ModalityId, second: ModalityId) -> Result<Self> {
        if first.0 >= second.0 {
            return Err(config_err!("modality pair needs first < second, got ({first}, {second})"));
        }
        Ok(Self { first, second })
    }
}

/// All `k choose 2` modality pairs in lexicographic order.
pub fn modality_pairs(k: usize) -> Vec<ModalityPair> {
    let mut out = Vec::with_capacity(k * k.saturating_sub(1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            out.push(ModalityPair { first: ModalityId(i), second: ModalityId(j) });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BimodalPair {
    pub modalities: ModalityPair,
    /// Sample supplying the first modality.
    pub o1: usize,
    /// Sample supplying the second modality.
    pub o2: usize,
    pub polarity: PairPolarity,
    pub target: f64,
}

#[inline]
pub fn label_distance(l1: f64, l2: f64) -> f64 {
    libm::sqrt((l1 - l2) * (l1 - l2))
}

/// 1 for a same-sample pair, otherwise `1 / (|l1 - l2| + gamma)`.
pub fn correlation_score(o1: usize, o2: usize, labels: &[f64], gamma: f64) -> Result<f64> {
    if !(gamma > 1.0) {
        return Err(config_err!("gamma must be > 1, got {gamma}"));
    }
    if o1 >= labels.len() || o2 >= labels.len() {
        return Err(Error::Batch(alloc::format!(
            "pair ({o1}, {o2}) out of range for {} labels",
            labels.len()
        )));
    }
    if o1 == o2 {
        Ok(1.0)
    } else {
        Ok(1.0 / (label_distance(labels[o1], labels[o2]) + gamma))
    }
}

pub fn generate_positive_pairs(labels: &[f64], modalities: ModalityPair) -> Result<Vec<BimodalPair>> {
    if labels.is_empty() {
        return Err(Error::Batch("cannot build positive pairs from an empty batch".into()));
    }
    Ok((0..labels.len())
        .map(|o| BimodalPair { modalities, o1: o, o2: o, polarity: PairPolarity::Positive, target: 1.0 })
        .collect())
}

/// `round(beta * n)`.
pub fn negative_count(n: usize, beta: f64) -> usize {
    libm::round(beta * n as f64) as usize
}

/// Draws `round(beta * n)` ordered cross-sample pairs uniformly, with
/// replacement, over `{(o1, o2) : o1 != o2}`.
pub fn generate_negative_pairs<R: Rng + ?Sized>(
    labels: &[f64],
    modalities: ModalityPair,
    beta: f64,
    gamma: f64,
    rng: &mut R,
) -> Result<Vec<BimodalPair>> {
    let n = labels.len();
    if n < 2 {
        return Err(Error::Batch(alloc::format!("negative pairs need at least 2 samples, got {n}")));
    }
    if !(beta > 0.0) {
        return Err(config_err!("negative sampling factor must be > 0, got {beta}"));
    }
    if !(gamma > 1.0) {
        return Err(config_err!("gamma must be > 1, got {gamma}"));
    }
    let count = negative_count(n, beta);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let o1 = rng.random_range(0..n);
        let mut o2 = rng.random_range(0..n - 1);
        if o2 >= o1 {
            o2 += 1;
        }
        let target = 1.0 / (label_distance(labels[o1], labels[o2]) + gamma);
        out.push(BimodalPair { modalities, o1, o2, polarity: PairPolarity::Negative, target });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use alloc::collections::BTreeSet;
    use alloc::vec;
    use proptest::prelude::*;

    fn av() -> ModalityPair {
        ModalityPair::new(ModalityId(0), ModalityId(1)).unwrap()
    }

    #[test]
    fn two_samples_force_cross_pairs() {
        let mut rng = stream(0, Stream::Pairing);
        let pairs = generate_negative_pairs(&[0.0, 1.0], av(), 1.0, 1.4, &mut rng).unwrap();
        assert_eq!(pairs.len(), 2);
        assert!(pairs.iter().all(|p| p.o1 != p.o2 && p.polarity == PairPolarity::Negative));
    }

    #[test]
    fn benchmark_batch_gives_1920_negatives() {
        let labels: Vec<f64> = (0..64).map(|i| i as f64 / 64.0).collect();
        let mut rng = stream(0, Stream::Pairing);
        assert_eq!(generate_negative_pairs(&labels, av(), 30.0, 1.4, &mut rng).unwrap().len(), 1920);
    }

    #[test]
    fn sampled_pairs_lie_in_the_enumerated_cross_grid() {
        let mut grid = BTreeSet::new();
        for a in 0..3 {
            for b in 0..3 {
                if a != b {
                    grid.insert((a, b));
                }
            }
        }
        assert_eq!(grid.len(), 6);
        let mut rng = stream(4, Stream::Pairing);
        let pairs = generate_negative_pairs(&[0.1, 0.2, 0.3], av(), 200.0, 1.4, &mut rng).unwrap();
        let seen: BTreeSet<_> = pairs.iter().map(|p| (p.o1, p.o2)).collect();
        assert!(seen.is_subset(&grid));
        // 600 uniform draws over 6 cells hit every cell.
        assert_eq!(seen, grid);
    }

    #[test]
    fn too_small_batches() {
        let mut rng = stream(0, Stream::Pairing);
        assert!(matches!(generate_negative_pairs(&[1.0], av(), 1.0, 1.4, &mut rng), Err(Error::Batch(_))));
        assert!(matches!(generate_positive_pairs(&[], av()), Err(Error::Batch(_))));
    }

    #[test]
    fn positives_are_the_diagonal() {
        let pairs = generate_positive_pairs(&[0.0; 5], av()).unwrap();
        assert_eq!(pairs.iter().map(|p| (p.o1, p.o2)).collect::<Vec<_>>(), vec![(0, 0), (1, 1), (2, 2), (3, 3), (4, 4)]);
        assert!(pairs.iter().all(|p| p.target == 1.0));
        assert_eq!(generate_positive_pairs(&[2.0], av()).unwrap().len(), 1);
    }

    #[test]
    fn score_values() {
        let labels = [1.5, 1.5, 2.0, -1.0, 3.0, -3.0];
        assert_eq!(label_distance(1.5, 1.5), 0.0);
        assert_eq!(label_distance(3.0, -3.0), 6.0);
        assert_eq!(correlation_score(2, 2, &labels, 1.4).unwrap(), 1.0);
        assert!((correlation_score(0, 1, &labels, 1.4).unwrap() - 0.714286).abs() < 1e-6);
        assert!((correlation_score(2, 3, &labels, 1.4).unwrap() - 0.227273).abs() < 1e-6);
        assert!(correlation_score(0, 1, &labels, 1.0).is_err());
    }

    #[test]
    fn modality_pair_enumeration() {
        assert_eq!(modality_pairs(3).len(), 3);
        assert_eq!(modality_pairs(2).len(), 1);
        assert!(ModalityPair::new(ModalityId(1), ModalityId(1)).is_err());
    }

    proptest! {
        #[test]
        fn distance_is_symmetric(a in -3.0f64..3.0, b in -3.0f64..3.0) {
            prop_assert_eq!(label_distance(a, b), label_distance(b, a));
        }

        #[test]
        fn negatives_are_bounded_and_decreasing(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0) {
            let labels = [a, b, c];
            let ab = correlation_score(0, 1, &labels, 1.4).unwrap();
            let ac = correlation_score(0, 2, &labels, 1.4).unwrap();
            prop_assert!(ab > 0.0 && ab <= 1.0 / 1.4);
            let (dab, dac) = (label_distance(a, b), label_distance(a, c));
            if dab < dac { prop_assert!(ab > ac); }
            if dab > dac { prop_assert!(ab < ac); }
        }

        #[test]
        fn generation_is_deterministic(seed in 0u64..1000, n in 2usize..20, beta in 0.5f64..5.0) {
            let labels: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
            let a = generate_negative_pairs(&labels, av(), beta, 1.4, &mut stream(seed, Stream::Pairing)).unwrap();
            let b = generate_negative_pairs(&labels, av(), beta, 1.4, &mut stream(seed, Stream::Pairing)).unwrap();
            prop_assert_eq!(a.len(), negative_count(n, beta));
            prop_assert_eq!(a, b);
        }
    }
}
