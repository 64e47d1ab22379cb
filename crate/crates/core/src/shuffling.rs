//! Per-agent, per-epoch sample orders.
//!
//! Every `(agent, epoch)` pair gets its own ChaCha stream derived from the
//! master seed, so an order never depends on which other orders were drawn
//! before it or on which thread asked for it.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{pairwise_sum, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SamplingMode {
    /// Fresh uniform permutation every epoch.
    Reshuffle,
    /// One permutation per agent, reused for every epoch.
    ShuffleOnce,
    /// `m` independent uniform draws per epoch.
    WithReplacement,
}

impl SamplingMode {
    pub fn is_without_replacement(self) -> bool {
        !matches!(self, SamplingMode::WithReplacement)
    }
}

impl fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplingMode::Reshuffle => "rr",
            SamplingMode::ShuffleOnce => "once",
            SamplingMode::WithReplacement => "iid",
        })
    }
}

impl FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "rr" => Ok(SamplingMode::Reshuffle),
            "once" => Ok(SamplingMode::ShuffleOnce),
            "iid" => Ok(SamplingMode::WithReplacement),
            other => Err(Error::Config(format!("unknown sampling mode {other:?} (rr | once | iid)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PermutationStream {
    master_seed: u64,
    mode: SamplingMode,
}

impl PermutationStream {
    pub fn new(master_seed: u64, mode: SamplingMode) -> Self {
        PermutationStream { master_seed, mode }
    }

    pub fn mode(&self) -> SamplingMode {
        self.mode
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    fn rng(&self, agent: usize, epoch: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(((agent as u64) << 32) ^ (epoch as u64));
        rng
    }

    /// 0-based component indices agent `agent` visits during `epoch`.
    pub fn order(&self, agent: usize, epoch: usize, m: usize) -> Vec<usize> {
        match self.mode {
            SamplingMode::Reshuffle => self.shuffled(agent, epoch, m),
            SamplingMode::ShuffleOnce => self.shuffled(agent, 0, m),
            SamplingMode::WithReplacement => {
                let mut rng = self.rng(agent, epoch);
                (0..m).map(|_| rng.random_range(0..m)).collect()
            }
        }
    }

    /// The same order in the 1-based labelling `{1, …, m}`.
    pub fn permutation(&self, agent: usize, epoch: usize, m: usize) -> Vec<usize> {
        self.order(agent, epoch, m).into_iter().map(|k| k + 1).collect()
    }

    fn shuffled(&self, agent: usize, epoch: usize, m: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..m).collect();
        idx.shuffle(&mut self.rng(agent, epoch));
        idx
    }
}

/// Population variance `σ² = (1/m) Σ ‖X_j − X̄‖²`.
pub fn population_variance(xs: &[Vector]) -> f64 {
    let m = xs.len();
    let dim = xs[0].len();
    let mean = crate::linalg::pairwise_sum_vectors(m, dim, &|j| xs[j].clone()) / m as f64;
    let terms: Vec<f64> = xs.iter().map(|x| (x - &mean).norm_squared()).collect();
    pairwise_sum(&terms) / m as f64
}

/// Closed-form `E‖X̄_π − X̄‖² = (m − ℓ) / (ℓ (m − 1)) σ²` for the mean of the
/// first `ℓ` entries of a uniform permutation.
pub fn rr_variance_predicted(m: usize, l: usize, sigma_sq: f64) -> f64 {
    if l >= m {
        return 0.0;
    }
    (m - l) as f64 / (l as f64 * (m - 1) as f64) * sigma_sq
}

const ENUMERATION_LIMIT: usize = 7;
const MONTE_CARLO_DRAWS: usize = 200_000;

/// Returns `(empirical, predicted)` for the prefix-mean variance. The
/// empirical value is an exact average over all `m!` orders when `m ≤ 7`
/// and a seeded Monte Carlo estimate otherwise.
pub fn rr_variance_check(xs: &[Vector], l: usize) -> Result<(f64, f64)> {
    let m = xs.len();
    if m < 2 {
        return Err(Error::Config(format!("need at least 2 vectors, got {m}")));
    }
    if l == 0 || l > m {
        return Err(Error::Config(format!("prefix length must lie in 1..={m}, got {l}")));
    }
    let dim = xs[0].len();
    let mean = crate::linalg::pairwise_sum_vectors(m, dim, &|j| xs[j].clone()) / m as f64;
    let predicted = rr_variance_predicted(m, l, population_variance(xs));
    let prefix_dev = |order: &[usize]| {
        let mut acc = Vector::zeros(dim);
        for &k in &order[..l] {
            acc += &xs[k];
        }
        (acc / l as f64 - &mean).norm_squared()
    };
    let empirical = if m <= ENUMERATION_LIMIT {
        let mut values = Vec::new();
        for_each_permutation(m, &mut |order| values.push(prefix_dev(order)));
        pairwise_sum(&values) / values.len() as f64
    } else {
        let stream = PermutationStream::new(0x5eed_0f_5eed, SamplingMode::Reshuffle);
        let values: Vec<f64> = (0..MONTE_CARLO_DRAWS)
            .map(|k| prefix_dev(&stream.order(0, k, m)))
            .collect();
        pairwise_sum(&values) / values.len() as f64
    };
    Ok((empirical, predicted))
}

/// Visits all permutations of `0..m` in lexicographic order.
pub fn for_each_permutation(m: usize, visit: &mut dyn FnMut(&[usize])) {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], visit: &mut dyn FnMut(&[usize])) {
        if prefix.len() == used.len() {
            visit(prefix);
            return;
        }
        for k in 0..used.len() {
            if !used[k] {
                used[k] = true;
                prefix.push(k);
                rec(prefix, used, visit);
                prefix.pop();
                used[k] = false;
            }
        }
    }
    rec(&mut Vec::with_capacity(m), &mut vec![false; m], visit);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};
    use std::collections::HashMap;

    fn random_vectors(m: usize, p: usize, seed: u64) -> Vec<Vector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m)
            .map(|_| Vector::from_fn(p, |_, _| StandardNormal.sample(&mut rng)))
            .collect()
    }

    #[test]
    fn single_component_permutation() {
        let s = PermutationStream::new(3, SamplingMode::Reshuffle);
        for t in 0..10 {
            assert_eq!(s.permutation(0, t, 1), vec![1]);
        }
    }

    #[test]
    fn permutations_are_one_based_permutations() {
        let s = PermutationStream::new(9, SamplingMode::Reshuffle);
        let mut p = s.permutation(2, 7, 10);
        p.sort_unstable();
        assert_eq!(p, (1..=10).collect::<Vec<_>>());
    }

    #[test]
    fn deterministic_and_keyed() {
        let s = PermutationStream::new(42, SamplingMode::Reshuffle);
        assert_eq!(s.order(3, 5, 20), s.order(3, 5, 20));
        assert_ne!(s.order(3, 5, 20), s.order(4, 5, 20));
        assert_ne!(s.order(3, 5, 20), s.order(3, 6, 20));
        let other = PermutationStream::new(43, SamplingMode::Reshuffle);
        assert_ne!(s.order(3, 5, 20), other.order(3, 5, 20));
    }

    #[test]
    fn shuffle_once_reuses_first_epoch() {
        let s = PermutationStream::new(1, SamplingMode::ShuffleOnce);
        let first = s.order(0, 0, 12);
        for t in 1..5 {
            assert_eq!(s.order(0, t, 12), first);
        }
    }

    #[test]
    fn with_replacement_draws_in_range() {
        let s = PermutationStream::new(1, SamplingMode::WithReplacement);
        let draws = s.order(0, 0, 50);
        assert_eq!(draws.len(), 50);
        assert!(draws.iter().all(|&k| k < 50));
        let mut sorted = draws.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert!(sorted.len() < 50, "50 uniform draws out of 50 almost surely repeat");
    }

    #[test]
    fn three_element_orders_are_uniform() {
        let s = PermutationStream::new(2024, SamplingMode::Reshuffle);
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for k in 0..120_000 {
            *counts.entry(s.order(k % 400, k / 400, 3)).or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        for (order, c) in counts {
            assert!((19_500..=20_500).contains(&c), "{order:?} appeared {c} times");
        }
    }

    #[test]
    fn variance_formula_edge_cases() {
        let xs = random_vectors(5, 3, 1);
        let sigma = population_variance(&xs);
        let (emp, pred) = rr_variance_check(&xs, 5).unwrap();
        assert_eq!(pred, 0.0);
        assert!(emp < 1e-28);
        let (emp, pred) = rr_variance_check(&xs, 1).unwrap();
        assert!((pred - sigma).abs() < 1e-15);
        assert!((emp - sigma).abs() < 1e-12);
    }

    #[test]
    fn enumeration_m4_l2_is_a_third_of_sigma() {
        let xs = random_vectors(4, 3, 7);
        let sigma = population_variance(&xs);
        let (emp, pred) = rr_variance_check(&xs, 2).unwrap();
        assert!((pred - sigma / 3.0).abs() < 1e-15);
        assert!((emp - sigma / 3.0).abs() < 1e-12);
    }

    #[test]
    fn enumeration_matches_formula_up_to_six() {
        for m in 2..=6 {
            let xs = random_vectors(m, 4, m as u64);
            for l in 1..=m {
                let (emp, pred) = rr_variance_check(&xs, l).unwrap();
                assert!((emp - pred).abs() <= 1e-12 * pred.max(1.0), "m={m} l={l}: {emp} vs {pred}");
            }
        }
    }

    #[test]
    fn monte_carlo_branch_close_to_formula() {
        let xs = random_vectors(9, 2, 5);
        let (emp, pred) = rr_variance_check(&xs, 4).unwrap();
        assert!((emp - pred).abs() < 0.02 * pred, "{emp} vs {pred}");
    }

    #[test]
    fn degenerate_inputs_rejected() {
        assert!(rr_variance_check(&random_vectors(1, 2, 0), 1).is_err());
        assert!(rr_variance_check(&random_vectors(3, 2, 0), 0).is_err());
        assert!(rr_variance_check(&random_vectors(3, 2, 0), 4).is_err());
    }

    #[test]
    fn permutation_enumeration_counts() {
        let mut count = 0;
        for_each_permutation(5, &mut |_| count += 1);
        assert_eq!(count, 120);
    }

    #[test]
    fn sampling_mode_round_trip() {
        for s in ["rr", "once", "iid"] {
            assert_eq!(s.parse::<SamplingMode>().unwrap().to_string(), s);
        }
        assert!("shuffle".parse::<SamplingMode>().is_err());
    }

    proptest! {
        #[test]
        fn every_order_is_a_permutation(seed: u64, agent in 0usize..64, epoch in 0usize..1000, m in 1usize..40) {
            let s = PermutationStream::new(seed, SamplingMode::Reshuffle);
            let mut o = s.order(agent, epoch, m);
            o.sort_unstable();
            prop_assert_eq!(o, (0..m).collect::<Vec<_>>());
        }
    }
}
