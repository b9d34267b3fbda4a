//! Market state, lexicographic ranking and the frozen-rank Euler–Maruyama step.

use crate::error::{contract, PathError, Result};
use crate::numeric::fsum;
use crate::params::ModelParams;

/// Time plus a vector of at least two strictly positive capitalizations.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketState {
    pub t: f64,
    caps: Vec<f64>,
}

impl MarketState {
    pub fn new(t: f64, caps: Vec<f64>) -> Result<Self> {
        if caps.len() < 2 {
            return Err(contract(format!("a market needs at least 2 companies, got {}", caps.len())));
        }
        if let Some(c) = caps.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(contract(format!("capitalizations must be finite and positive, got {c}")));
        }
        Ok(Self { t, caps })
    }

    /// `n` companies of capitalization `cap` at time zero.
    pub fn equal(n: usize, cap: f64) -> Result<Self> {
        Self::new(0.0, vec![cap; n])
    }

    /// Capitalizations proportional to `weights` (need not be normalized).
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        Self::new(0.0, weights.to_vec())
    }

    pub(crate) fn from_parts_unchecked(t: f64, caps: Vec<f64>) -> Self {
        Self { t, caps }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.caps.len()
    }

    #[inline]
    pub fn caps(&self) -> &[f64] {
        &self.caps
    }

    pub(crate) fn caps_mut(&mut self) -> &mut [f64] {
        &mut self.caps
    }

    /// Total capitalization, correctly rounded.
    pub fn total(&self) -> f64 {
        fsum(&self.caps)
    }

    pub fn max_weight(&self) -> f64 {
        let total = self.total();
        self.caps.iter().fold(0.0f64, |m, c| m.max(c / total))
    }
}

/// `rank_to_index[k]` is the company holding rank `k` (0 = largest).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankAssignment {
    pub rank_to_index: Vec<usize>,
}

impl RankAssignment {
    /// Inverse permutation: the rank of each company.
    pub fn index_to_rank(&self) -> Vec<usize> {
        let mut out = vec![0; self.rank_to_index.len()];
        for (k, &i) in self.rank_to_index.iter().enumerate() {
            out[i] = k;
        }
        out
    }

    /// 1-based view, as positions are usually quoted.
    pub fn one_based(&self) -> Vec<usize> {
        self.rank_to_index.iter().map(|i| i + 1).collect()
    }
}

#[inline]
fn outranks(caps: &[f64], a: usize, b: usize) -> bool {
    caps[a] > caps[b] || (caps[a] == caps[b] && a < b)
}

/// Re-sorts `order` in place so that it ranks `caps` in decreasing order with
/// ties going to the lower index. Reusing the previous step's order makes this
/// linear when ranks rarely change.
pub fn rank_into(caps: &[f64], order: &mut Vec<usize>) {
    if order.len() != caps.len() {
        order.clear();
        order.extend(0..caps.len());
    }
    for pos in 1..order.len() {
        let cur = order[pos];
        let mut j = pos;
        while j > 0 && outranks(caps, cur, order[j - 1]) {
            order[j] = order[j - 1];
            j -= 1;
        }
        order[j] = cur;
    }
}

pub fn rank(state: &MarketState) -> RankAssignment {
    let mut order = Vec::new();
    rank_into(state.caps(), &mut order);
    RankAssignment { rank_to_index: order }
}

/// Lowest index among the largest capitalizations.
pub fn top_index(caps: &[f64]) -> usize {
    let mut best = 0;
    for (i, &c) in caps.iter().enumerate().skip(1) {
        if c > caps[best] {
            best = i;
        }
    }
    best
}

pub fn market_weights(state: &MarketState) -> Vec<f64> {
    let total = state.total();
    state.caps().iter().map(|c| c / total).collect()
}

/// Applies one step to `caps` using ranks frozen at the start of the step:
/// `log X_i += g(N, k_i) Δt + σ(N, k_i) √Δt ξ_i`.
pub(crate) fn euler_step_ranked(
    caps: &mut [f64],
    order: &[usize],
    params: &ModelParams,
    noise: &[f64],
) -> std::result::Result<(), ()> {
    let n = caps.len();
    let dt = params.dt;
    let sqdt = dt.sqrt();
    let g = params.drift.row(n);
    let s = params.vol.row(n);
    for (k, &i) in order.iter().enumerate() {
        let next = caps[i] * (g[k] * dt + s[k] * sqdt * noise[i]).exp();
        if !(next.is_finite() && next > 0.0) {
            return Err(());
        }
        caps[i] = next;
    }
    Ok(())
}

/// One frozen-rank Euler–Maruyama step driven by `noise` (one standard
/// Gaussian per company, indexed by company).
pub fn euler_step(state: &MarketState, params: &ModelParams, noise: &[f64]) -> Result<MarketState> {
    if noise.len() != state.n() {
        return Err(contract(format!(
            "noise has {} entries for {} companies",
            noise.len(),
            state.n()
        )));
    }
    if state.n() > params.vol.max_n() || state.n() > params.drift.max_n() {
        return Err(contract(format!("no coefficients for N = {}", state.n())));
    }
    let order = rank(state).rank_to_index;
    let mut caps = state.caps().to_vec();
    let t = state.t + params.dt;
    euler_step_ranked(&mut caps, &order, params, noise).map_err(|_| PathError::Overflow { t })?;
    Ok(MarketState::from_parts_unchecked(t, caps))
}

/// Excess growth rate of the market portfolio,
/// `½ Σ_k σ(N,k)² μ_(k) (1 − μ_(k))`, using ranked weights.
pub fn excess_growth_rate(state: &MarketState, params: &ModelParams) -> f64 {
    let n = state.n();
    let total = state.total();
    let order = rank(state).rank_to_index;
    let s = params.vol.row(n);
    0.5 * order
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let m = state.caps()[i] / total;
            s[k] * s[k] * m * (1.0 - m)
        })
        .sum::<f64>()
}
