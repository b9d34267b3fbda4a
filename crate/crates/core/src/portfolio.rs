//! Portfolio rules, wealth integration and the weight transfers applied when
//! companies split or merge.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, PathError, Result};
use crate::events::{EventKind, EventRecord};
use crate::exec::{map_paths, path_rng};
use crate::numeric::{fsum, ulp};
use crate::params::ModelParams;
use crate::path::{simulate_path, PathSpec};
use crate::sde::MarketState;
use crate::stats::Proportion;

/// A bounded rule assigning a weight to every extant company.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PortfolioRule {
    /// Everything in the money market.
    Cash,
    /// Weights equal to market weights.
    Market,
    /// `1/N` in each company.
    EqualWeight,
    /// `weight` on the company holding `rank` (1-based), nothing elsewhere.
    RankTilt { rank: usize, weight: f64 },
    /// Starts equal-weighted and is never rebalanced across companies;
    /// weights only change through the split/merger transfers.
    FixedMix,
}

impl PortfolioRule {
    /// `K_π`: bound on |π_i|.
    pub fn bound(&self) -> f64 {
        match self {
            PortfolioRule::Cash => 0.0,
            PortfolioRule::Market | PortfolioRule::EqualWeight | PortfolioRule::FixedMix => 1.0,
            PortfolioRule::RankTilt { weight, .. } => weight.abs(),
        }
    }

    /// Whether the weights carry state that only the transfer rules update.
    pub fn is_stateful(&self) -> bool {
        matches!(self, PortfolioRule::FixedMix)
    }

    /// Weights as a function of the current capitalizations and ranking.
    /// Stateful rules return their initial allocation here.
    pub fn weights_into(&self, caps: &[f64], total: f64, order: &[usize], out: &mut Vec<f64>) {
        let n = caps.len();
        out.clear();
        match *self {
            PortfolioRule::Cash => out.resize(n, 0.0),
            PortfolioRule::Market => out.extend(caps.iter().map(|c| c / total)),
            PortfolioRule::EqualWeight | PortfolioRule::FixedMix => out.resize(n, 1.0 / n as f64),
            PortfolioRule::RankTilt { rank, weight } => {
                out.resize(n, 0.0);
                if rank >= 1 && rank <= n {
                    out[order[rank - 1]] = weight;
                }
            }
        }
    }

    pub fn weights(&self, state: &MarketState) -> Vec<f64> {
        let order = crate::sde::rank(state).rank_to_index;
        let mut out = Vec::new();
        self.weights_into(state.caps(), state.total(), &order, &mut out);
        out
    }
}

impl fmt::Display for PortfolioRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PortfolioRule::Cash => f.write_str("cash"),
            PortfolioRule::Market => f.write_str("market"),
            PortfolioRule::EqualWeight => f.write_str("equal"),
            PortfolioRule::RankTilt { rank, weight } if *weight == 1.0 => write!(f, "rank:{rank}"),
            PortfolioRule::RankTilt { rank, weight } => write!(f, "rank:{rank}:{weight}"),
            PortfolioRule::FixedMix => f.write_str("fixed-mix"),
        }
    }
}

impl FromStr for PortfolioRule {
    type Err = Error;

    /// `cash`, `market`, `equal`, `fixed-mix`, `rank:K` or `rank:K:W`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("unknown portfolio rule `{s}`"));
        match s {
            "cash" => Ok(PortfolioRule::Cash),
            "market" => Ok(PortfolioRule::Market),
            "equal" => Ok(PortfolioRule::EqualWeight),
            "fixed-mix" => Ok(PortfolioRule::FixedMix),
            _ => {
                let mut parts = s.split(':');
                if parts.next() != Some("rank") {
                    return Err(bad());
                }
                let rank: usize = parts.next().and_then(|r| r.parse().ok()).ok_or_else(bad)?;
                let weight: f64 = match parts.next() {
                    Some(w) => w.parse().map_err(|_| bad())?,
                    None => 1.0,
                };
                if rank == 0 || parts.next().is_some() || !weight.is_finite() {
                    return Err(bad());
                }
                Ok(PortfolioRule::RankTilt { rank, weight })
            }
        }
    }
}

impl TryFrom<String> for PortfolioRule {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PortfolioRule> for String {
    fn from(r: PortfolioRule) -> String {
        r.to_string()
    }
}

/// Money-market proportion `π₀ = 1 − Σ π_i`.
pub fn money_market_weight(pi: &[f64]) -> f64 {
    1.0 - fsum(pi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonPositiveWealth(pub f64);

/// `V' = V (1 + Σ π_i r_i)` over one step with simple returns `r_i`.
pub fn wealth_step(v: f64, pi: &[f64], returns: &[f64]) -> std::result::Result<f64, NonPositiveWealth> {
    let growth: f64 = pi.iter().zip(returns).map(|(p, r)| p * r).sum();
    let next = v * (1.0 + growth);
    if next > 0.0 && next.is_finite() {
        Ok(next)
    } else {
        Err(NonPositiveWealth(next))
    }
}

/// Rule (A): the merged company (last slot) inherits `π_i + π_j`.
pub fn transfer_on_merger(pi: &[f64], i: usize, j: usize) -> Vec<f64> {
    assert!(i < j && j < pi.len(), "invalid merger indices");
    let mut out = Vec::with_capacity(pi.len() - 1);
    out.extend_from_slice(&pi[..i]);
    out.extend_from_slice(&pi[i + 1..j]);
    out.extend_from_slice(&pi[j + 1..]);
    out.push(pi[i] + pi[j]);
    out
}

/// Rule (B): the two children (last two slots) share `π_i` in proportion to
/// their capitalizations.
pub fn transfer_on_split(pi: &[f64], i: usize, caps_before: &[f64], caps_after: &[f64]) -> Vec<f64> {
    assert!(i < pi.len() && caps_after.len() == pi.len() + 1, "invalid split transfer");
    let n = pi.len();
    let parent = caps_before[i];
    let first = pi[i] * (caps_after[n - 1] / parent);
    // Exact complement keeps π_N + π_{N+1} = π_i bit for bit.
    let second = pi[i] - first;
    let mut out = Vec::with_capacity(n + 1);
    out.extend_from_slice(&pi[..i]);
    out.extend_from_slice(&pi[i + 1..]);
    out.push(first);
    out.push(second);
    out
}

/// Transfers `pi` through an event; suppressed mergers leave it untouched.
pub fn transfer(pi: &[f64], event: &EventRecord) -> Vec<f64> {
    match event.kind {
        EventKind::Split { parent, .. } => transfer_on_split(pi, parent, &event.caps_before, &event.caps_after),
        EventKind::Merger { i, j } => transfer_on_merger(pi, i, j),
        EventKind::SuppressedMerger { .. } => pi.to_vec(),
    }
}

/// A rule together with its current weights and wealth along one path.
#[derive(Debug, Clone)]
pub struct Position {
    pub rule: PortfolioRule,
    pub weights: Vec<f64>,
    pub wealth: f64,
}

impl Position {
    pub fn new(rule: PortfolioRule, caps: &[f64], total: f64, order: &[usize]) -> Self {
        let mut weights = Vec::with_capacity(caps.len() + 1);
        rule.weights_into(caps, total, order, &mut weights);
        Self { rule, weights, wealth: 1.0 }
    }

    /// Recomputes state-driven weights at the start of a step.
    pub fn rebalance(&mut self, caps: &[f64], total: f64, order: &[usize]) {
        if !self.rule.is_stateful() {
            self.rule.weights_into(caps, total, order, &mut self.weights);
        }
    }

    pub fn advance(&mut self, returns: &[f64], t: f64) -> std::result::Result<(), PathError> {
        self.wealth = wealth_step(self.wealth, &self.weights, returns).map_err(|e| PathError::NonPositiveWealth {
            t,
            rule: self.rule.to_string(),
            value: e.0,
        })?;
        Ok(())
    }

    /// Applies the transfer rule; returns the change in total allocation
    /// `Σ π_i` measured in ulps of `Σ |π_i|`. Wealth is left untouched.
    pub fn on_event(&mut self, event: &EventRecord) -> f64 {
        let before = fsum(&self.weights);
        let scale: f64 = self.weights.iter().map(|w| w.abs()).sum();
        self.weights = transfer(&self.weights, event);
        let after = fsum(&self.weights);
        if before == after {
            0.0
        } else {
            (after - before).abs() / ulp(scale)
        }
    }
}

/// Empirical frequencies of `V^π(T) ≥ V^ρ(T)` and `V^π(T) > V^ρ(T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArbitrageProbe {
    pub at_least: Proportion,
    pub strictly: Proportion,
    pub failed_paths: u64,
}

/// Monte Carlo probe of relative arbitrage of `pi` against `rho`; purely
/// diagnostic.
#[allow(clippy::too_many_arguments)]
pub fn relative_arbitrage_probe(
    params: &ModelParams,
    initial: &MarketState,
    pi: &PortfolioRule,
    rho: &PortfolioRule,
    horizon: f64,
    paths: u64,
    seed: u64,
    workers: usize,
) -> Result<ArbitrageProbe> {
    if paths == 0 {
        return Err(contract("relative arbitrage probe needs at least one path"));
    }
    let rules = [pi.clone(), rho.clone()];
    let spec = PathSpec::new(params, initial, horizon).rules(&rules);
    let outcomes = map_paths(paths, workers, |p| {
        simulate_path(&spec, &mut path_rng(seed, p)).map(|s| (s.wealth[0], s.wealth[1]))
    });
    let (mut ge, mut gt, mut ok, mut failed) = (0, 0, 0, 0);
    for o in outcomes {
        match o {
            Ok((a, b)) => {
                ok += 1;
                ge += u64::from(a >= b);
                gt += u64::from(a > b);
            }
            Err(_) => failed += 1,
        }
    }
    Ok(ArbitrageProbe {
        at_least: Proportion::new(ge, ok),
        strictly: Proportion::new(gt, ok),
        failed_paths: failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::Lineage;
    use proptest::prelude::*;

    #[test]
    fn money_market_examples() {
        let s = MarketState::new(0.0, vec![1.0, 2.0, 5.0]).unwrap();
        assert_eq!(money_market_weight(&PortfolioRule::Market.weights(&s)), 0.0);
        assert_eq!(money_market_weight(&PortfolioRule::Cash.weights(&s)), 1.0);
        assert!((money_market_weight(&[0.5, 0.2]) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn wealth_step_examples() {
        assert_eq!(wealth_step(2.0, &[0.0, 0.0], &[0.5, -0.9]).unwrap(), 2.0);
        assert!((wealth_step(1.0, &[1.0, 0.0], &[0.02, -0.5]).unwrap() - 1.02).abs() < 1e-15);
        assert!(wealth_step(1.0, &[3.0], &[-0.5]).is_err());
    }

    #[test]
    fn merger_transfer_example() {
        let out = transfer_on_merger(&[0.1, 0.2, 0.3, 0.4], 1, 3);
        assert_eq!(out.len(), 3);
        assert_eq!(out[0], 0.1);
        assert_eq!(out[1], 0.3);
        assert!((out[2] - 0.6).abs() < 1e-15);
        assert_eq!(transfer_on_merger(&[0.0; 4], 0, 2), vec![0.0; 3]);
    }

    #[test]
    fn split_transfer_example() {
        // Company 2 (cap 10) splits with ξ = 0.6 while holding π = 0.3.
        let before = [5.0, 10.0, 5.0];
        let after = [5.0, 5.0, 6.0, 4.0];
        let out = transfer_on_split(&[0.2, 0.3, 0.1], 1, &before, &after);
        assert_eq!(out[0], 0.2);
        assert_eq!(out[1], 0.1);
        assert!((out[2] - 0.18).abs() < 1e-15);
        assert!((out[3] - 0.12).abs() < 1e-15);
        assert_eq!(out[2] + out[3], 0.3);
    }

    #[test]
    fn rule_names_round_trip() {
        for s in ["cash", "market", "equal", "fixed-mix", "rank:1", "rank:3:0.5"] {
            assert_eq!(s.parse::<PortfolioRule>().unwrap().to_string(), s);
        }
        for s in ["", "rank", "rank:0", "rank:x", "rank:1:2:3", "momentum"] {
            assert!(s.parse::<PortfolioRule>().is_err(), "{s}");
        }
    }

    #[test]
    fn rank_tilt_follows_current_leader() {
        let s = MarketState::new(0.0, vec![1.0, 4.0, 4.0]).unwrap();
        let w = PortfolioRule::RankTilt { rank: 1, weight: 1.0 }.weights(&s);
        assert_eq!(w, vec![0.0, 1.0, 0.0]);
        let w = PortfolioRule::RankTilt { rank: 3, weight: -0.5 }.weights(&s);
        assert_eq!(w, vec![-0.5, 0.0, 0.0]);
    }

    #[test]
    fn identical_rules_never_beat_each_other() {
        let p = ModelParams::uniform(16, 0.0, 1.0, 0.1, 0.3).with_clock(1.0, 2.0).with_dt(1e-2);
        let s = MarketState::equal(3, 1.0).unwrap();
        let probe = relative_arbitrage_probe(&p, &s, &PortfolioRule::EqualWeight, &PortfolioRule::EqualWeight, 1.0, 50, 1, 1)
            .unwrap();
        assert_eq!(probe.at_least.estimate(), 1.0);
        assert_eq!(probe.strictly.estimate(), 0.0);
    }

    fn split_event(caps: &[f64], i: usize, xi: f64) -> EventRecord {
        let first = xi * caps[i];
        let mut after: Vec<f64> = caps.iter().enumerate().filter(|(k, _)| *k != i).map(|(_, c)| *c).collect();
        after.push(first);
        after.push(caps[i] - first);
        EventRecord {
            time: 0.0,
            kind: EventKind::Split { parent: i, xi },
            n_before: caps.len(),
            n_after: caps.len() + 1,
            caps_before: caps.to_vec(),
            caps_after: after,
            lineage: Lineage::default(),
        }
    }

    proptest! {
        #[test]
        fn market_weights_are_a_fixed_point_of_split_transfer(
            caps in proptest::collection::vec(0.01f64..100.0, 2..10),
            pick in any::<prop::sample::Index>(),
            xi in 0.5f64..=0.7,
        ) {
            let s = MarketState::new(0.0, caps.clone()).unwrap();
            let i = pick.index(caps.len());
            let ev = split_event(&caps, i, xi);
            let moved = transfer(&PortfolioRule::Market.weights(&s), &ev);
            let after = MarketState::new(0.0, ev.caps_after.clone()).unwrap();
            let fresh = PortfolioRule::Market.weights(&after);
            for (a, b) in moved.iter().zip(&fresh) {
                prop_assert!((a - b).abs() <= 1e-15);
            }
        }

        #[test]
        fn split_then_merge_restores_weights(
            pi in proptest::collection::vec(-2.0f64..2.0, 2..10),
            pick in any::<prop::sample::Index>(),
            xi in 0.5f64..=0.7,
        ) {
            let caps: Vec<f64> = (0..pi.len()).map(|k| 1.0 + k as f64).collect();
            let i = pick.index(pi.len());
            let ev = split_event(&caps, i, xi);
            let split = transfer(&pi, &ev);
            prop_assert_eq!(fsum(&split), fsum(&pi));
            let n = split.len();
            let merged = transfer_on_merger(&split, n - 2, n - 1);
            let mut a = merged.clone();
            let mut b = pi.clone();
            a.sort_by(|x, y| x.partial_cmp(y).unwrap());
            b.sort_by(|x, y| x.partial_cmp(y).unwrap());
            prop_assert_eq!(a, b);
        }

        #[test]
        fn merger_transfer_conserves_allocation(
            pi in proptest::collection::vec(-2.0f64..2.0, 3..10),
            a in any::<prop::sample::Index>(),
            b in any::<prop::sample::Index>(),
        ) {
            let (i, j) = (a.index(pi.len()), b.index(pi.len()));
            prop_assume!(i != j);
            let (i, j) = (i.min(j), i.max(j));
            let out = transfer_on_merger(&pi, i, j);
            let scale: f64 = pi.iter().map(|x| x.abs()).sum();
            prop_assert!((fsum(&out) - fsum(&pi)).abs() <= 4.0 * ulp(scale));
            prop_assert!((money_market_weight(&out) + fsum(&out) - 1.0).abs() <= 4.0 * ulp(scale.max(1.0)));
        }
    }
}
