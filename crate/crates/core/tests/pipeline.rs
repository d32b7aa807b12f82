use std::collections::HashSet;

use corrcurr_core::curriculum::{partition, replay, FeedRules};
use corrcurr_core::pairing::PairPolarity;
use corrcurr_core::synth::generate_dataset;
use corrcurr_core::trainer::run_pipeline;
use corrcurr_core::{Ablations, CurriculumConfig, ModelConfig, SynthConfig, TrainConfig};
use proptest::prelude::*;

fn small() -> (SynthConfig, TrainConfig, CurriculumConfig) {
    let synth = SynthConfig { samples: 60, noise_fraction: 0.1, seed: 3, ..SynthConfig::default() };
    let train = TrainConfig { epochs: 3, pretrain_epochs: 3, seed: 3, ..TrainConfig::default() };
    let cur = CurriculumConfig { partitions_positive: 3, partitions_negative: 2, ..CurriculumConfig::default() };
    (synth, train, cur)
}

#[test]
fn small_run_is_reproducible_and_well_formed() {
    let (synth, train, cur) = small();
    let ds = generate_dataset(&synth).unwrap();
    let model = ModelConfig::default();
    let a = run_pipeline(&ds.data, &model, &train, &cur, &Ablations::default()).unwrap();
    let b = run_pipeline(&ds.data, &model, &train, &cur, &Ablations::default()).unwrap();
    assert_eq!(a.report, b.report);

    let r = &a.report;
    assert_eq!(r.epochs.len(), 3);
    assert_eq!(r.pretrain.len(), 3);
    assert!(r.final_train_mse.is_finite() && r.final_val_mse.is_finite() && r.final_test_mse.is_finite());
    assert!(!r.trajectory.is_empty());
    let streams: HashSet<_> = r.trajectory.iter().map(|t| (t.modality_i, t.modality_j, t.polarity)).collect();
    assert_eq!(streams.len(), 6);
    for t in &r.trajectory {
        let c = match t.polarity {
            PairPolarity::Positive => 3,
            PairPolarity::Negative => 2,
        };
        assert!((1..=c).contains(&t.c_i), "{t:?}");
        assert!(t.modality_i < t.modality_j);
    }
}

#[test]
fn different_seeds_give_different_runs() {
    let (synth, train, cur) = small();
    let ds = generate_dataset(&synth).unwrap();
    let model = ModelConfig::default();
    let a = run_pipeline(&ds.data, &model, &train, &cur, &Ablations::default()).unwrap();
    let other = TrainConfig { seed: 4, ..train };
    let b = run_pipeline(&ds.data, &model, &other, &cur, &Ablations::default()).unwrap();
    assert_ne!(a.report.final_val_mse.to_bits(), b.report.final_val_mse.to_bits());
}

proptest! {
    #[test]
    fn partitions_tile_the_sorted_pairs(len in 0usize..200, c in 1usize..20) {
        let p = partition(len, c).unwrap();
        prop_assert_eq!(p.count(), c.min(len));
        let mut next = 0;
        let mut sizes = Vec::new();
        for r in &p.ranges {
            prop_assert_eq!(r.start, next);
            next = r.end;
            sizes.push(r.len());
        }
        prop_assert_eq!(next, len);
        if let (Some(lo), Some(hi)) = (sizes.iter().min(), sizes.iter().max()) {
            prop_assert!(hi - lo <= 1);
            prop_assert!(*lo >= 1);
        }
        prop_assert!(sizes.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn replayed_feeder_never_leaves_the_partitions(
        losses in prop::collection::vec(0.0f64..3.0, 0..80),
        parts in 1usize..10,
        patience in 1usize..8,
        backward in any::<bool>(),
    ) {
        let rules = FeedRules { patience, forward_factor: 0.1, backward_factor: 0.15, backward_enabled: backward, augment_fraction: 0.5 };
        let steps = replay(&losses, parts, &rules);
        prop_assert_eq!(steps.len(), losses.len());
        let mut prev = 1;
        for (_, s) in steps {
            prop_assert!((1..=parts).contains(&s.choosing_index));
            prop_assert!(s.choosing_index.abs_diff(prev) <= 1);
            if !backward {
                prop_assert!(s.choosing_index >= prev);
            }
            prev = s.choosing_index;
        }
    }
}
