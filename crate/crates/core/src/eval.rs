//! Leave-one-out top-K evaluation with hit ratio and NDCG.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{Dataset, ItemId, Split, UserId};
use crate::error::{Error, Result};
use crate::fusion::ModelState;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutoffMetrics {
    pub k: usize,
    pub hr: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub users_evaluated: usize,
    pub metrics: Vec<CutoffMetrics>,
    /// 1-based rank of each evaluated user's held-out item.
    #[serde(skip)]
    pub per_user_rank: BTreeMap<UserId, usize>,
}

impl EvalReport {
    /// Aggregates ranks into per-cutoff means.
    pub fn from_ranks(per_user_rank: BTreeMap<UserId, usize>, cutoffs: &[usize]) -> Result<Self> {
        if per_user_rank.is_empty() {
            return Err(Error::Evaluation("no users with a held-out item".into()));
        }
        let n = per_user_rank.len() as f64;
        let metrics = cutoffs
            .iter()
            .map(|&k| {
                let (hr, ndcg) = per_user_rank.values().fold((0.0, 0.0), |(h, g), &r| {
                    (h + hr_at_k(r, k), g + ndcg_at_k(r, k))
                });
                CutoffMetrics {
                    k,
                    hr: hr / n,
                    ndcg: ndcg / n,
                }
            })
            .collect();
        Ok(Self {
            users_evaluated: per_user_rank.len(),
            metrics,
            per_user_rank,
        })
    }

    pub fn hr(&self, k: usize) -> Option<f64> {
        self.metrics.iter().find(|m| m.k == k).map(|m| m.hr)
    }

    pub fn ndcg(&self, k: usize) -> Option<f64> {
        self.metrics.iter().find(|m| m.k == k).map(|m| m.ndcg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    /// `user<TAB>rank` lines, raw user IDs taken from `train`.
    pub fn write_per_user_tsv<W: Write>(&self, train: &Dataset, mut out: W) -> std::io::Result<()> {
        for (&u, &r) in &self.per_user_rank {
            writeln!(out, "{}\t{r}", train.users().raw(u))?;
        }
        Ok(())
    }
}

pub fn hr_at_k(rank: usize, k: usize) -> f64 {
    debug_assert!(rank >= 1);
    if rank <= k {
        1.0
    } else {
        0.0
    }
}

pub fn ndcg_at_k(rank: usize, k: usize) -> f64 {
    debug_assert!(rank >= 1);
    if rank <= k {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

/// Pessimistic rank of `held_out` among `candidates`: one plus the number
/// of other candidates scoring at least as high. A NaN score counts as
/// ranked above.
pub fn rank_among(
    scores: &[f64],
    held_out: ItemId,
    candidates: impl Iterator<Item = ItemId>,
) -> usize {
    let target = scores[held_out as usize];
    1 + candidates
        .filter(|&i| i != held_out)
        .filter(|&i| {
            let s = scores[i as usize];
            s.partial_cmp(&target) != Some(Ordering::Less)
        })
        .count()
}

/// Rank of the held-out item against the full catalog minus the user's
/// target-behavior training positives.
pub fn rank_held_out(
    user: UserId,
    state: &ModelState,
    agg_pref: &[f64],
    lambda: f64,
    train: &Dataset,
    held_out: ItemId,
) -> usize {
    let scores = state.score_all(user, agg_pref, lambda);
    let positives = train.target_items_of(user);
    rank_among(
        &scores,
        held_out,
        (0..train.num_items() as ItemId).filter(|i| positives.binary_search(i).is_err()),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub cutoffs: Vec<usize>,
    /// Rank against this many sampled non-positive items instead of the
    /// whole catalog.
    pub sampled_candidates: Option<usize>,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            cutoffs: vec![10],
            sampled_candidates: None,
            seed: 0,
        }
    }
}

pub fn evaluate(state: &ModelState, split: &Split, cutoffs: &[usize]) -> Result<EvalReport> {
    evaluate_with(
        state,
        split,
        &EvalOptions {
            cutoffs: cutoffs.to_vec(),
            ..Default::default()
        },
    )
}

/// Ranks every held-out item and aggregates the metrics. Users are scored
/// in parallel; each user's result depends only on the model, so the report
/// is identical for any thread count or user order.
pub fn evaluate_with(state: &ModelState, split: &Split, opts: &EvalOptions) -> Result<EvalReport> {
    if opts.cutoffs.is_empty() || opts.cutoffs.contains(&0) {
        return Err(Error::Evaluation("cutoffs must be positive".into()));
    }
    let train = &split.train;
    let ranks: Vec<(UserId, usize)> = split
        .test
        .par_iter()
        .map(|h| {
            let agg = state.aggregate(h.user, train);
            let lambda = state.lambda(h.user, train);
            let rank = match opts.sampled_candidates {
                None => rank_held_out(h.user, state, &agg, lambda, train, h.item),
                Some(n) => {
                    let scores = state.score_all(h.user, &agg, lambda);
                    let mut rng = ChaCha8Rng::seed_from_u64(
                        opts.seed ^ (h.user as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                    );
                    let cands = sample_candidates(train, h.user, h.item, n, &mut rng);
                    rank_among(&scores, h.item, cands.into_iter())
                }
            };
            (h.user, rank)
        })
        .collect();
    EvalReport::from_ranks(ranks.into_iter().collect(), &opts.cutoffs)
}

/// Ranks every held-out item by training interaction counts over
/// `behaviors`, with the same candidate set and tie rule as [`evaluate`].
pub fn popularity_baseline(
    split: &Split,
    behaviors: &[usize],
    cutoffs: &[usize],
) -> Result<EvalReport> {
    let train = &split.train;
    let mut counts = vec![0.0; train.num_items()];
    for &b in behaviors {
        for x in train.interactions(b) {
            counts[x.item as usize] += 1.0;
        }
    }
    let ranks = split
        .test
        .iter()
        .map(|h| {
            let positives = train.target_items_of(h.user);
            let cands =
                (0..train.num_items() as ItemId).filter(|i| positives.binary_search(i).is_err());
            (h.user, rank_among(&counts, h.item, cands))
        })
        .collect();
    EvalReport::from_ranks(ranks, cutoffs)
}

fn sample_candidates<R: Rng>(
    train: &Dataset,
    user: UserId,
    held_out: ItemId,
    n: usize,
    rng: &mut R,
) -> Vec<ItemId> {
    let positives = train.target_items_of(user);
    let mut pool: Vec<ItemId> = (0..train.num_items() as ItemId)
        .filter(|i| *i != held_out && positives.binary_search(i).is_err())
        .collect();
    if pool.len() > n {
        let (chosen, _) = pool.partial_shuffle(rng, n);
        pool = chosen.to_vec();
    }
    pool
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_closed_forms() {
        assert_eq!((hr_at_k(1, 10), ndcg_at_k(1, 10)), (1.0, 1.0));
        assert!((ndcg_at_k(2, 10) - 0.630930).abs() < 1e-6);
        assert_eq!((hr_at_k(11, 10), ndcg_at_k(11, 10)), (0.0, 0.0));
    }

    #[test]
    fn counting_rank() {
        let scores = [0.5, 0.9, 0.1];
        assert_eq!(rank_among(&scores, 0, 0..3), 2);
        assert_eq!(rank_among(&[0.9, 0.5, 0.1], 0, 0..3), 1);
    }

    #[test]
    fn ties_count_against_the_held_out_item() {
        assert_eq!(rank_among(&[0.3, 0.3, 0.3], 1, 0..3), 3);
    }

    #[test]
    fn averaging_over_users() {
        let one = EvalReport::from_ranks([(0, 1)].into_iter().collect(), &[10]).unwrap();
        assert_eq!((one.hr(10), one.ndcg(10)), (Some(1.0), Some(1.0)));
        let two = EvalReport::from_ranks([(0, 1), (1, 11)].into_iter().collect(), &[10]).unwrap();
        assert_eq!((two.hr(10), two.ndcg(10)), (Some(0.5), Some(0.5)));
        assert!(EvalReport::from_ranks(BTreeMap::new(), &[10]).is_err());
    }
}
