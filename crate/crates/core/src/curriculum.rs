//! Difficulty scoring, noisy-pair discarding, difficulty partitions, and the
//! three-action pair feeder.
//!
//! Each (modality pair, polarity) combination is a *stream* with its own
//! [`FeederState`]; there are `2 * (k choose 2)` streams.

use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::config::{Ablations, CurriculumConfig};
use crate::correlation::{pair_loss, Embeddings, PredictorBank};
use crate::error::{config_err, Error, Result};
use crate::pairing::{modality_pairs, BimodalPair, ModalityPair, PairPolarity};
use crate::rng::{substream, Rng, Stream};

/// Below this previous loss both ratio tests are skipped.
pub const LOSS_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub modalities: ModalityPair,
    pub polarity: PairPolarity,
}

/// Positive then negative stream for each modality pair, pairs in
/// lexicographic order.
pub fn streams(k: usize) -> Vec<StreamId> {
    modality_pairs(k)
        .into_iter()
        .flat_map(|modalities| {
            [PairPolarity::Positive, PairPolarity::Negative].map(|polarity| StreamId { modalities, polarity })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifficultyScoredPair {
    /// Position of the pair in the stream's creation order.
    pub index: usize,
    pub pair: BimodalPair,
    /// Loss under the frozen pre-trained predictor.
    pub pre_loss: f64,
    /// Loss under the current predictor; 0 during warm-up.
    pub cur_loss: f64,
    pub difficulty: f64,
}

/// A predictor together with the embeddings it should score.
#[derive(Debug, Clone, Copy)]
pub struct PairScorer<'a> {
    pub bank: &'a PredictorBank,
    pub embeddings: &'a Embeddings,
    /// Predictor slot of the modality pair being scored.
    pub pair_index: usize,
}

impl PairScorer<'_> {
    fn loss(&self, pair: &BimodalPair) -> Result<f64> {
        let xi = &self.embeddings[pair.modalities.first.0][pair.o1];
        let xj = &self.embeddings[pair.modalities.second.0][pair.o2];
        Ok(pair_loss(self.bank.predict(self.pair_index, xi, xj)?, pair.target))
    }

    fn embedding_dim(&self) -> Result<usize> {
        Ok(self.bank.for_pair(self.pair_index)?.embedding_dim())
    }
}

/// `l' + lambda * l` after warm-up, `l'` during warm-up.
pub fn difficulty_scores(
    pairs: &[BimodalPair],
    pretrained: PairScorer<'_>,
    current: PairScorer<'_>,
    lambda: f64,
    warm_up: bool,
) -> Result<Vec<DifficultyScoredPair>> {
    if !(lambda >= 0.0) {
        return Err(config_err!("lambda must be >= 0, got {lambda}"));
    }
    if pretrained.embedding_dim()? != current.embedding_dim()? {
        return Err(config_err!(
            "pre-trained predictor has width {}, current predictor {}",
            pretrained.embedding_dim()?,
            current.embedding_dim()?
        ));
    }
    pairs
        .iter()
        .enumerate()
        .map(|(index, pair)| {
            let pre_loss = pretrained.loss(pair)?;
            let (cur_loss, difficulty) = if warm_up {
                (0.0, pre_loss)
            } else {
                let l = current.loss(pair)?;
                (l, pre_loss + lambda * l)
            };
            Ok(DifficultyScoredPair { index, pair: *pair, pre_loss, cur_loss, difficulty })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscardOutcome {
    /// Ascending by difficulty; ties keep creation order.
    pub retained: Vec<DifficultyScoredPair>,
    pub discarded: Vec<DifficultyScoredPair>,
    pub threshold: Option<f64>,
}

/// Nearest-rank empirical percentile of `sorted` (ascending).
pub fn empirical_percentile(sorted: &[f64], percentile: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len();
    // A hair below the product so 0.95 * 100 lands on rank 95, not 96.
    let rank = libm::ceil(percentile * n as f64 - 1e-9).clamp(1.0, n as f64) as usize;
    Some(sorted[rank - 1])
}

/// Sorts by difficulty and, when `percentile` is given, removes pairs whose
/// difficulty strictly exceeds the empirical percentile.
pub fn discard_noisy(mut scored: Vec<DifficultyScoredPair>, percentile: Option<f64>) -> DiscardOutcome {
    scored.sort_by(|a, b| a.difficulty.total_cmp(&b.difficulty));
    let Some(p) = percentile else {
        return DiscardOutcome { retained: scored, discarded: Vec::new(), threshold: None };
    };
    let values: Vec<f64> = scored.iter().map(|s| s.difficulty).collect();
    let Some(threshold) = empirical_percentile(&values, p) else {
        return DiscardOutcome { retained: scored, discarded: Vec::new(), threshold: None };
    };
    let keep = scored.partition_point(|s| s.difficulty <= threshold);
    let discarded = scored.split_off(keep);
    DiscardOutcome { retained: scored, discarded, threshold: Some(threshold) }
}

/// Contiguous difficulty buckets over a sorted list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partitioning {
    pub ranges: Vec<Range<usize>>,
    /// The partition count asked for, before degrading to the pair count.
    pub requested: usize,
}

impl Partitioning {
    pub fn count(&self) -> usize {
        self.ranges.len()
    }

    pub fn degraded(&self) -> bool {
        self.ranges.len() < self.requested
    }

    pub fn len(&self) -> usize {
        self.ranges.last().map_or(0, |r| r.end)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Splits `len` sorted items into `c` equal chunks; the remainder goes one
/// extra item each to the last partitions. Fewer items than `c` degrades
/// to one item per partition.
pub fn partition(len: usize, c: usize) -> Result<Partitioning> {
    if c == 0 {
        return Err(config_err!("partition count must be >= 1"));
    }
    let parts = c.min(len);
    let mut ranges = Vec::with_capacity(parts);
    if parts > 0 {
        let base = len / parts;
        let extra = len % parts;
        let mut start = 0;
        for t in 0..parts {
            let size = base + usize::from(t >= parts - extra);
            ranges.push(start..start + size);
            start += size;
        }
    }
    Ok(Partitioning { ranges, requested: c })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedAction {
    Stay,
    StepForward,
    StepBackward,
}

impl FeedAction {
    pub fn as_str(self) -> &'static str {
        match self {
            FeedAction::Stay => "stay",
            FeedAction::StepForward => "step_forward",
            FeedAction::StepBackward => "step_backward",
        }
    }
}

/// Thresholds of the feeding state machine after ablations are applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedRules {
    pub patience: usize,
    pub forward_factor: f64,
    pub backward_factor: f64,
    pub backward_enabled: bool,
    pub augment_fraction: f64,
}

impl FeedRules {
    pub fn new(cfg: &CurriculumConfig, ablations: &Ablations) -> Self {
        Self {
            patience: if ablations.no_patience { 1 } else { cfg.patience },
            forward_factor: cfg.forward_factor,
            backward_factor: cfg.backward_factor,
            backward_enabled: !ablations.no_backward,
            augment_fraction: if ablations.no_random_sampling { 0.0 } else { cfg.augment_fraction },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeederState {
    /// One-based index of the partition being fed.
    pub choosing_index: usize,
    pub count: usize,
    pub previous_loss: Option<f64>,
}

impl Default for FeederState {
    fn default() -> Self {
        Self { choosing_index: 1, count: 0, previous_loss: None }
    }
}

impl FeederState {
    /// One step of the state machine over `partitions` buckets. The action
    /// names the move actually made, so a step clamped at either end reports
    /// `Stay`.
    pub fn transition(&mut self, loss_now: f64, partitions: usize, rules: &FeedRules) -> FeedAction {
        let c = partitions.max(1);
        self.choosing_index = self.choosing_index.clamp(1, c);
        let Some(prev) = self.previous_loss else {
            self.previous_loss = Some(loss_now);
            self.choosing_index = 1;
            self.count = 0;
            return FeedAction::Stay;
        };
        let ratios = prev >= LOSS_GUARD;
        let action = if ratios && rules.backward_enabled && (loss_now - prev) / prev > rules.backward_factor {
            self.count = 0;
            if self.choosing_index > 1 {
                self.choosing_index -= 1;
                FeedAction::StepBackward
            } else {
                FeedAction::Stay
            }
        } else if ratios && (prev - loss_now) / prev > rules.forward_factor {
            self.count = 0;
            FeedAction::Stay
        } else if self.count >= rules.patience {
            self.count = 0;
            if self.choosing_index < c {
                self.choosing_index += 1;
                FeedAction::StepForward
            } else {
                FeedAction::Stay
            }
        } else {
            self.count += 1;
            FeedAction::Stay
        };
        self.previous_loss = Some(loss_now);
        action
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedOutcome {
    pub action: FeedAction,
    /// Positions into the sorted, retained pair list.
    pub selected: Vec<usize>,
    /// How many of `selected` were replayed from easier partitions.
    pub augmented: usize,
}

/// Runs the state machine, returns partition `c_i`, and when `c_i` is the
/// hardest partition appends `ceil(augment_fraction * |partition c|)`
/// pairs drawn without replacement from the other partitions.
pub fn feed(
    state: &mut FeederState,
    loss_now: f64,
    partitions: &Partitioning,
    rules: &FeedRules,
    rng: &mut Rng,
) -> Result<FeedOutcome> {
    if partitions.is_empty() {
        return Err(Error::Curriculum("feed called with no pairs".into()));
    }
    if !loss_now.is_finite() {
        return Err(Error::Training(format!("non-finite stream loss {loss_now}")));
    }
    let c = partitions.count();
    let action = state.transition(loss_now, c, rules);
    let chosen = partitions.ranges[state.choosing_index - 1].clone();
    let mut selected: Vec<usize> = chosen.clone().collect();
    let mut augmented = 0;
    if state.choosing_index == c && c > 1 && rules.augment_fraction > 0.0 {
        let others = partitions.len() - chosen.len();
        let want = libm::ceil(rules.augment_fraction * chosen.len() as f64) as usize;
        let take = want.min(others);
        if take > 0 {
            let mut picks: Vec<usize> = index::sample(rng, others, take).into_vec();
            picks.sort_unstable();
            // Positions outside the hardest partition are exactly 0..chosen.start.
            selected.extend(picks.iter().map(|&p| if p < chosen.start { p } else { p + chosen.len() }));
            augmented = take;
        }
    }
    Ok(FeedOutcome { action, selected, augmented })
}

/// One line of the feeding trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub round: usize,
    pub modality_i: usize,
    pub modality_j: usize,
    pub polarity: PairPolarity,
    pub action: FeedAction,
    pub c_i: usize,
    pub count: usize,
    pub loss: f64,
}

/// What one stream hands the feeder in one round.
#[derive(Debug, Clone, Copy)]
pub struct StreamInput<'a> {
    pub loss_now: f64,
    pub partitions: &'a Partitioning,
}

/// Owns every stream's state and augmentation generator.
#[derive(Debug, Clone)]
pub struct Feeder {
    streams: Vec<StreamId>,
    states: Vec<FeederState>,
    rngs: Vec<Rng>,
    rules: FeedRules,
    partitions_positive: usize,
    partitions_negative: usize,
    rounds: usize,
}

impl Feeder {
    pub fn new(k: usize, cfg: &CurriculumConfig, ablations: &Ablations, seed: u64) -> Self {
        let streams = streams(k);
        let rngs = (0..streams.len()).map(|i| substream(seed, Stream::Curriculum, i as u64)).collect();
        Self {
            states: alloc::vec![FeederState::default(); streams.len()],
            streams,
            rngs,
            rules: FeedRules::new(cfg, ablations),
            partitions_positive: cfg.partitions_positive,
            partitions_negative: cfg.partitions_negative,
            rounds: 0,
        }
    }

    pub fn streams(&self) -> &[StreamId] {
        &self.streams
    }

    pub fn states(&self) -> &[FeederState] {
        &self.states
    }

    pub fn rules(&self) -> &FeedRules {
        &self.rules
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    /// `c` for a stream: positive and negative streams may differ.
    pub fn partition_count(&self, polarity: PairPolarity) -> usize {
        match polarity {
            PairPolarity::Positive => self.partitions_positive,
            PairPolarity::Negative => self.partitions_negative,
        }
    }

    /// Feeds every stream once, independently.
    pub fn run_round(&mut self, inputs: &[StreamInput<'_>]) -> Result<Vec<(FeedOutcome, TrajectoryRecord)>> {
        if inputs.len() != self.streams.len() {
            return Err(Error::Internal(format!(
                "feeding round got {} stream inputs for {} streams",
                inputs.len(),
                self.streams.len()
            )));
        }
        let round = self.rounds;
        let mut out = Vec::with_capacity(inputs.len());
        for (s, input) in inputs.iter().enumerate() {
            let outcome = feed(&mut self.states[s], input.loss_now, input.partitions, &self.rules, &mut self.rngs[s])?;
            let id = self.streams[s];
            let record = TrajectoryRecord {
                round,
                modality_i: id.modalities.first.0,
                modality_j: id.modalities.second.0,
                polarity: id.polarity,
                action: outcome.action,
                c_i: self.states[s].choosing_index,
                count: self.states[s].count,
                loss: input.loss_now,
            };
            out.push((outcome, record));
        }
        self.rounds += 1;
        Ok(out)
    }
}

/// Replays a recorded loss sequence through a fresh state machine.
pub fn replay(losses: &[f64], partitions: usize, rules: &FeedRules) -> Vec<(FeedAction, FeederState)> {
    let mut state = FeederState::default();
    losses
        .iter()
        .map(|&loss| {
            let action = state.transition(loss, partitions, rules);
            (action, state)
        })
        .collect()
}
