//! Budgeted batch selection as an exact 0/1 knapsack over kilobyte units.

use crate::ids::BatchId;

pub const KB: u64 = 1024;

/// Knapsack weight of a batch: its size rounded up to whole kilobytes.
pub fn quantized_cost(bytes: u64) -> usize {
    bytes.div_ceil(KB) as usize
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBatch {
    pub batch_id: BatchId,
    pub bytes: u64,
    pub score: f64,
}

/// Picks the subset of batches with maximum total score whose quantized cost
/// fits in `floor(budget_bytes / 1024)` kilobytes. Batches scoring zero or
/// less are never selected.
///
/// Among equally scoring subsets the one whose sorted id list is
/// lexicographically smallest wins. Totals are compared as right-to-left sums
/// over ascending ids, the same association the table below builds, so exact
/// float comparison is meaningful. Returned ids are ascending.
pub fn resample_budget(batches: &[ScoredBatch], budget_bytes: u64) -> Vec<BatchId> {
    let cap = (budget_bytes / KB) as usize;
    let mut items: Vec<&ScoredBatch> = batches.iter().filter(|b| b.score > 0.0).collect();
    if cap == 0 || items.is_empty() {
        return Vec::new();
    }
    items.sort_by_key(|b| b.batch_id);
    let n = items.len();
    let costs: Vec<usize> = items.iter().map(|b| quantized_cost(b.bytes)).collect();

    // best[i][c]: max score using items[i..] within capacity c.
    let width = cap + 1;
    let mut best = vec![0.0f64; (n + 1) * width];
    for i in (0..n).rev() {
        for c in 0..width {
            let skip = best[(i + 1) * width + c];
            let take =
                if costs[i] <= c { items[i].score + best[(i + 1) * width + c - costs[i]] } else { f64::NEG_INFINITY };
            best[i * width + c] = skip.max(take);
        }
    }

    let mut chosen = Vec::new();
    let mut c = cap;
    for i in 0..n {
        let target = best[i * width + c];
        // The empty remainder sorts before any nonempty one.
        if target == 0.0 {
            break;
        }
        if costs[i] <= c && items[i].score + best[(i + 1) * width + c - costs[i]] == target {
            chosen.push(items[i].batch_id);
            c -= costs[i];
        }
    }
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sb(id: u64, score: f64, kb: u64) -> ScoredBatch {
        ScoredBatch { batch_id: BatchId(id), bytes: kb * KB, score }
    }

    /// Exhaustive enumeration over the positive-score batches with the same
    /// tie rule.
    fn brute_force(batches: &[ScoredBatch], budget_bytes: u64) -> (f64, Vec<BatchId>) {
        let cap = (budget_bytes / KB) as usize;
        let mut sorted = batches.to_vec();
        sorted.retain(|b| b.score > 0.0);
        sorted.sort_by_key(|b| b.batch_id);
        let mut best: Option<(f64, Vec<BatchId>)> = None;
        for mask in 0u32..(1 << sorted.len()) {
            let picked: Vec<&ScoredBatch> =
                sorted.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, b)| b).collect();
            let cost: usize = picked.iter().map(|b| quantized_cost(b.bytes)).sum();
            if cost > cap {
                continue;
            }
            let total = picked.iter().rev().fold(0.0, |acc, b| b.score + acc);
            let ids: Vec<BatchId> = picked.iter().map(|b| b.batch_id).collect();
            best = match best {
                None => Some((total, ids)),
                Some((bt, bids)) => {
                    if total > bt || (total == bt && ids < bids) {
                        Some((total, ids))
                    } else {
                        Some((bt, bids))
                    }
                }
            };
        }
        best.unwrap()
    }

    #[test]
    fn zero_budget_selects_nothing() {
        assert!(resample_budget(&[sb(1, 0.9, 1)], 0).is_empty());
        assert!(resample_budget(&[sb(1, 0.9, 1)], 1023).is_empty());
    }

    #[test]
    fn everything_fits() {
        let bs = [sb(3, 0.1, 1), sb(1, 0.2, 2), sb(2, 0.3, 1)];
        assert_eq!(resample_budget(&bs, 100 * KB), vec![BatchId(1), BatchId(2), BatchId(3)]);
    }

    #[test]
    fn two_small_beat_one_large() {
        let bs = [sb(1, 0.9, 2), sb(2, 0.6, 1), sb(3, 0.5, 1)];
        assert_eq!(resample_budget(&bs, 2 * KB), vec![BatchId(2), BatchId(3)]);
        assert_eq!(brute_force(&bs, 2 * KB).1, vec![BatchId(2), BatchId(3)]);
    }

    #[test]
    fn partial_kilobytes_round_up() {
        let bs = [ScoredBatch { batch_id: BatchId(1), bytes: 1025, score: 1.0 }];
        assert!(resample_budget(&bs, KB).is_empty());
        assert_eq!(resample_budget(&bs, 2 * KB), vec![BatchId(1)]);
    }

    #[test]
    fn ties_prefer_lexicographically_smallest() {
        let bs = [sb(5, 0.5, 1), sb(2, 0.5, 1), sb(9, 0.5, 1)];
        assert_eq!(resample_budget(&bs, KB), vec![BatchId(2)]);
        // Zero-score items never pad the manifest.
        let bs = [sb(1, 0.0, 1), sb(2, 0.0, 1)];
        assert!(resample_budget(&bs, 10 * KB).is_empty());
        let bs = [sb(1, 0.0, 1), sb(2, -0.3, 1), sb(3, 0.7, 1)];
        assert_eq!(resample_budget(&bs, 10 * KB), vec![BatchId(3)]);
    }

    proptest! {
        #[test]
        fn matches_exhaustive_enumeration(
            items in prop::collection::vec((0.0..1.0f64, 1u64..5000), 0..12),
            budget in 0u64..20_000,
        ) {
            let bs: Vec<ScoredBatch> = items
                .iter()
                .enumerate()
                .map(|(i, &(score, bytes))| ScoredBatch { batch_id: BatchId(100 - i as u64), bytes, score })
                .collect();
            let got = resample_budget(&bs, budget);
            let (opt, opt_ids) = brute_force(&bs, budget);
            let mut sorted = bs.clone();
            sorted.sort_by_key(|b| b.batch_id);
            let total = sorted.iter().filter(|b| got.contains(&b.batch_id)).rev().fold(0.0, |acc, b| b.score + acc);
            let cost: usize = bs.iter().filter(|b| got.contains(&b.batch_id)).map(|b| quantized_cost(b.bytes)).sum();
            prop_assert!(cost as u64 <= budget / KB);
            prop_assert_eq!(total, opt);
            prop_assert_eq!(got, opt_ids);
        }
    }
}
