//! Two-sided Wilcoxon rank-sum (Mann-Whitney U) test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact null distribution is used while the smaller sample has at most this
/// many values...
pub const EXACT_MAX_MIN_N: usize = 8;
/// ...and the pooled sample at most this many.
pub const EXACT_MAX_TOTAL_N: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSumResult {
    /// U of the first sample: number of pairs with `a > b`, ties counting half.
    pub u: f64,
    pub p_value: f64,
    pub exact: bool,
    /// Every value in both samples was equal; `p_value` is 1.
    pub degenerate: bool,
}

impl RankSumResult {
    /// The first sample tends to be larger than the second.
    pub fn first_is_larger(&self, n_a: usize, n_b: usize) -> bool {
        self.u > (n_a * n_b) as f64 / 2.0
    }
}

/// Pooled midranks, doubled so they stay integral, and the tie-group sizes.
fn doubled_midranks(a: &[f64], b: &[f64]) -> (Vec<u64>, Vec<usize>) {
    let mut pooled: Vec<(f64, usize)> = a
        .iter()
        .chain(b)
        .copied()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut ranks = vec![0u64; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        // ranks i+1..=j+1 averaged, times two
        let doubled = (i + 1 + j + 1) as u64;
        for p in &pooled[i..=j] {
            ranks[p.1] = doubled;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

/// Counts of size-`k` subsets by doubled rank sum.
fn subset_sum_counts(ranks: &[u64], k: usize) -> Vec<f64> {
    let max_sum: u64 = ranks.iter().sum();
    let width = max_sum as usize + 1;
    // table[j][s]: subsets of size j with sum s
    let mut table = vec![vec![0.0f64; width]; k + 1];
    table[0][0] = 1.0;
    for &r in ranks {
        let r = r as usize;
        for j in (1..=k).rev() {
            let (lower, upper) = table.split_at_mut(j);
            let (prev, cur) = (&lower[j - 1], &mut upper[0]);
            for s in (r..width).rev() {
                cur[s] += prev[s - r];
            }
        }
    }
    table.swap_remove(k)
}

pub fn rank_sum_test(a: &[f64], b: &[f64]) -> Result<RankSumResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    let (ranks, ties) = doubled_midranks(a, b);
    let sum2: u64 = ranks[..na].iter().sum();
    let u = sum2 as f64 / 2.0 - (na * (na + 1)) as f64 / 2.0;
    let mean_u = (na * nb) as f64 / 2.0;

    if ties.len() == 1 {
        return Ok(RankSumResult {
            u: mean_u,
            p_value: 1.0,
            exact: false,
            degenerate: true,
        });
    }

    if na.min(nb) <= EXACT_MAX_MIN_N && n <= EXACT_MAX_TOTAL_N {
        // doubled expected rank sum of the first sample
        let centre = (na * (n + 1)) as i64;
        let observed = (sum2 as i64 - centre).abs();
        let counts = subset_sum_counts(&ranks, na);
        let total: f64 = counts.iter().sum();
        let extreme: f64 = counts
            .iter()
            .enumerate()
            .filter(|(s, _)| (*s as i64 - centre).abs() >= observed)
            .map(|(_, c)| c)
            .sum();
        return Ok(RankSumResult {
            u,
            p_value: (extreme / total).min(1.0),
            exact: true,
            degenerate: false,
        });
    }

    let tie_term: f64 =
        ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1)) as f64;
    let var = (na * nb) as f64 / 12.0 * ((n + 1) as f64 - tie_term);
    let z = (((u - mean_u).abs() - 0.5).max(0.0)) / var.sqrt();
    Ok(RankSumResult {
        u,
        p_value: libm::erfc(z / std::f64::consts::SQRT_2).min(1.0),
        exact: false,
        degenerate: false,
    })
}
