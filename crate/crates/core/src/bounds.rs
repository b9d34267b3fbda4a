//! Closed-form hitting and tail bounds, and the Monte Carlo estimators they
//! are checked against.

use rand_distr::{Distribution, Exp};
use serde::Serialize;

use crate::error::{contract, Result};
use crate::events::{clock_rate, EventKind, MarketSim};
use crate::exec::{map_paths, path_rng};
use crate::numeric::{ln_cosh, ln_factorial};
use crate::params::ModelParams;
use crate::sde::MarketState;
use crate::stats::Proportion;
use crate::PathError;

/// Upper bound on the probability that the top weight, starting at `mu1`,
/// reaches `1 − δ` before an independent exponential time of rate `lambda`.
pub fn lemma_bound(mu1: f64, delta: f64, sigma_bar: f64, lambda: f64) -> f64 {
    let base = mu1.max(0.5) / (1.0 - delta);
    2.0 * (lambda.sqrt() / sigma_bar * base.ln()).exp()
}

/// Log-distance of the top weight above ½, floored at zero.
pub fn x_tilde(mu1: f64) -> f64 {
    (mu1.ln() - 0.5f64.ln()).max(0.0)
}

/// Log-distance of the threshold `1 − δ` above ½.
pub fn y_tilde(delta: f64) -> f64 {
    (1.0 - delta).ln() - 0.5f64.ln()
}

/// `cosh(x̃√λ/σ̄) / cosh(ỹ√λ/σ̄)`: probability that the reflected comparison
/// process started at `x̃` reaches `ỹ` before an exponential time of rate λ.
pub fn rbm_hit_before_exp(x: f64, y: f64, lambda: f64, sigma_bar: f64) -> Result<f64> {
    if !(0.0 <= x && x <= y) {
        return Err(contract(format!("need 0 ≤ x̃ ≤ ỹ, got x̃ = {x}, ỹ = {y}")));
    }
    if !(lambda > 0.0 && sigma_bar > 0.0) {
        return Err(contract("λ and σ̄ must be positive"));
    }
    if x == y {
        return Ok(1.0);
    }
    let a = lambda.sqrt() / sigma_bar;
    Ok((ln_cosh(a * x) - ln_cosh(a * y)).exp())
}

/// Exponent `α₁` of the double-jump bound `p_N = 2 exp(−α₁ √λ_N)`.
pub fn alpha1(delta: f64, delta0: f64, sigma: f64) -> f64 {
    ((1.0 - delta).ln() - (1.0 - delta0).max(0.5).ln()) / sigma
}

/// Bound on the probability that the event after an upward jump is again a
/// split, as a power of the weight ratio.
pub fn p_n(delta: f64, delta0: f64, sigma: f64, lambda_n: f64) -> Result<f64> {
    if !(0.0 < delta && delta < delta0 && delta0 < 1.0) {
        return Err(contract("need 0 < δ < δ₀ < 1"));
    }
    let ratio = (1.0 - delta0).max(0.5) / (1.0 - delta);
    Ok(2.0 * (lambda_n.sqrt() / sigma * ratio.ln()).exp())
}

/// Same quantity as [`p_n`] written as `2 exp(−α₁ √λ_N)`.
pub fn p_n_exp(delta: f64, delta0: f64, sigma: f64, lambda_n: f64) -> f64 {
    2.0 * (-alpha1(delta, delta0, sigma) * lambda_n.sqrt()).exp()
}

/// `H(s) = s − 1 − log s`.
pub fn h_fn(s: f64) -> Result<f64> {
    if s.is_nan() || s <= 0.0 {
        return Err(contract(format!("H(s) needs s > 0, got {s}")));
    }
    Ok(s - 1.0 - s.ln())
}

/// Largest `s₀ < 1` with `H(s) ≥ −½ log s` on `(0, s₀]`: the root of
/// `s − 1 = ½ log s` below ½.
pub fn h_threshold() -> f64 {
    let f = |s: f64| s - 1.0 - 0.5 * s.ln();
    let (mut lo, mut hi) = (1e-6, 0.5);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExplosionTerms {
    pub log_sigma1: f64,
    pub log_sigma2: f64,
}

impl ExplosionTerms {
    pub fn sigma1(&self) -> f64 {
        self.log_sigma1.exp()
    }

    pub fn sigma2(&self) -> f64 {
        self.log_sigma2.exp()
    }

    pub fn sum(&self) -> f64 {
        self.sigma1() + self.sigma2()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplosionInputs {
    pub l: u64,
    pub u: f64,
    pub horizon: f64,
    pub c: f64,
    pub alpha: f64,
    pub delta: f64,
    pub delta0: f64,
    pub sigma: f64,
}

fn rate(c: f64, alpha: f64, n: u64) -> f64 {
    if n <= 2 {
        0.0
    } else {
        c * (n as f64).powf(alpha)
    }
}

/// The two terms bounding the probability of `2L` events before `T`:
///
/// * `Σ₁ = (3u)^L / L! · 2^{L−1} · exp(−α₁ (L−1) √λ̲)`, with `λ̲` the
///   smallest rate on levels `L+1 ..= 2L−1`;
/// * `Σ₂ = exp(−u H(T λ̄ / u))`, with `λ̄` the largest rate on levels
///   `3 ..= 2L−1`.
///
/// Both are returned as logarithms.
pub fn explosion_bound_terms(x: &ExplosionInputs) -> Result<ExplosionTerms> {
    let l = x.l;
    if l < 2 {
        return Err(contract("L must be at least 2"));
    }
    let lam_low = (l + 1..=2 * l - 1).map(|n| rate(x.c, x.alpha, n)).fold(f64::INFINITY, f64::min);
    let lam_high = (3..=2 * l - 1).map(|n| rate(x.c, x.alpha, n)).fold(0.0, f64::max);
    if x.u.is_nan() || x.u <= (l as f64).max(x.horizon * lam_high) {
        return Err(contract(format!("need u > L ∨ Tλ̄ = {}", (l as f64).max(x.horizon * lam_high))));
    }
    let a1 = alpha1(x.delta, x.delta0, x.sigma);
    let lf = l as f64;
    let log_sigma1 = lf * (3.0 * x.u).ln() - ln_factorial(l) + (lf - 1.0) * 2f64.ln() - a1 * (lf - 1.0) * lam_low.sqrt();
    let log_sigma2 = -x.u * h_fn(x.horizon * lam_high / x.u)?;
    Ok(ExplosionTerms { log_sigma1, log_sigma2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HitEstimate {
    pub hits: Proportion,
    /// Paths that reached `max_time` with neither outcome; counted as misses.
    pub censored: u64,
}

/// Frequency with which the top weight reaches `1 − δ` before an independent
/// exponential time of rate `lambda`, with the company count frozen.
pub fn estimate_split_before_clock(
    params: &ModelParams,
    initial: &MarketState,
    lambda: f64,
    max_time: f64,
    paths: u64,
    seed: u64,
    workers: usize,
) -> Result<HitEstimate> {
    let n = initial.n();
    if n > params.drift.max_n() {
        return Err(contract("initial N outside the coefficient table"));
    }
    let g = params.drift.row(n);
    if g.iter().skip(1).any(|gk| g[0] > *gk) {
        return Err(contract("the top-rank drift must not exceed any other drift"));
    }
    if lambda < 0.0 {
        return Err(contract("λ must be non-negative"));
    }
    let threshold = params.threshold();
    let outcomes = map_paths(paths, workers, |p| {
        let mut rng = path_rng(seed, p);
        let eta = if lambda > 0.0 { Exp::new(lambda).expect("positive rate").sample(&mut rng) } else { f64::INFINITY };
        let stop = eta.min(max_time);
        let mut sim = MarketSim::with_clock(params, initial.clone(), crate::MergerClock::never())
            .expect("initial state validated")
            .with_events(false);
        if sim.state().max_weight() >= threshold {
            return Ok::<_, PathError>((true, false));
        }
        while sim.t() + params.dt <= stop + 1e-12 * stop.max(1.0) {
            sim.step(&mut rng)?;
            if sim.state().max_weight() >= threshold {
                return Ok((true, false));
            }
        }
        Ok((false, eta > max_time))
    });
    let mut hits = 0;
    let mut censored = 0;
    for o in outcomes {
        match o {
            Ok((h, c)) => {
                hits += h as u64;
                censored += c as u64;
            }
            Err(_) => censored += 1,
        }
    }
    Ok(HitEstimate { hits: Proportion::new(hits, paths), censored })
}

/// State at level `n − 1` whose top company (index 0) sits exactly at the
/// threshold, the remaining weight shared equally.
pub fn double_jump_start(n: usize, params: &ModelParams) -> Result<MarketState> {
    if n < 3 {
        return Err(contract("double-jump segments need N ≥ 3"));
    }
    let rest = params.delta / (n - 2) as f64;
    let mut caps = vec![rest; n - 1];
    caps[0] = params.threshold();
    MarketState::new(0.0, caps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DoubleJump {
    pub n: usize,
    /// Segments whose next event after the upward jump to `n` is a split.
    pub splits: Proportion,
    pub censored: u64,
    pub lambda_n: f64,
    pub bound: f64,
}

/// Each segment starts with a split taking the market from `n − 1` to `n`
/// companies and runs to the next split or executed merger.
pub fn estimate_double_jump(
    params: &ModelParams,
    n: usize,
    max_time: f64,
    paths: u64,
    seed: u64,
    workers: usize,
) -> Result<DoubleJump> {
    let start = double_jump_start(n, params)?;
    if n > params.n_max {
        return Err(contract("N exceeds n_max"));
    }
    let lambda_n = clock_rate(n, params)?;
    let bound = p_n(params.delta, params.delta0(), params.sigma_max_at(n), lambda_n)?;
    let outcomes = map_paths(paths, workers, |p| {
        let mut rng = path_rng(seed, p);
        let mut sim = MarketSim::with_clock(params, start.clone(), crate::MergerClock::never())
            .expect("start state fits n_max");
        let xi = params.split.sample(params.eps0, &mut rng);
        sim.force_split(0, xi, &mut rng)?;
        while sim.t() < max_time {
            if let Some(ev) = sim.step(&mut rng)? {
                match ev.kind {
                    EventKind::Split { .. } => return Ok::<_, PathError>(Some(true)),
                    EventKind::Merger { .. } => return Ok(Some(false)),
                    EventKind::SuppressedMerger { .. } => {}
                }
            }
        }
        Ok(None)
    });
    let (mut splits, mut censored) = (0, 0);
    for o in outcomes {
        match o {
            Ok(Some(true)) => splits += 1,
            Ok(Some(false)) => {}
            _ => censored += 1,
        }
    }
    Ok(DoubleJump { n, splits: Proportion::new(splits, paths), censored, lambda_n, bound })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailRow {
    pub u: f64,
    pub tail: Proportion,
    /// `−log p̂(u) / u`.
    pub stat: f64,
    pub stat_lo: f64,
    pub stat_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    pub rows: Vec<TailRow>,
    pub guard_fired: u64,
    pub overflow: u64,
    pub paths: u64,
    /// Pairs `(a, b)`, `a < b`, with disjoint statistic intervals where the
    /// statistic decreased.
    pub decreases: Vec<(usize, usize)>,
    pub compared_pairs: u64,
}

/// Empirical tail of the maximal company count up to `horizon`. A path that
/// trips the explosion guard counts as reaching `n_max + 1`.
#[allow(clippy::too_many_arguments)]
pub fn tail_of_max_count(
    params: &ModelParams,
    initial: &MarketState,
    horizon: f64,
    u_grid: &[f64],
    z: f64,
    paths: u64,
    seed: u64,
    workers: usize,
) -> Result<TailReport> {
    if u_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(contract("u-grid must be strictly increasing"));
    }
    if initial.n() > params.n_max {
        return Err(contract("initial N exceeds n_max"));
    }
    let maxima = map_paths(paths, workers, |p| {
        let mut rng = path_rng(seed, p);
        let mut sim = MarketSim::new(params, initial.clone(), &mut rng).expect("initial state validated");
        let mut max_n = initial.n();
        let run = (|| {
            if let Some(ev) = sim.settle(&mut rng)? {
                max_n = max_n.max(ev.n_after);
            }
            for _ in 0..sim.steps_to(horizon) {
                if let Some(ev) = sim.step(&mut rng)? {
                    max_n = max_n.max(ev.n_after);
                }
            }
            Ok::<(), PathError>(())
        })();
        match run {
            Ok(()) => (max_n, 0u8),
            Err(PathError::ExplosionGuard { .. }) => (params.n_max + 1, 1),
            Err(_) => (max_n, 2),
        }
    });
    let guard_fired = maxima.iter().filter(|m| m.1 == 1).count() as u64;
    let overflow = maxima.iter().filter(|m| m.1 == 2).count() as u64;
    let rows: Vec<TailRow> = u_grid
        .iter()
        .map(|&u| {
            let tail = Proportion::new(maxima.iter().filter(|m| m.0 as f64 > u).count() as u64, paths);
            let (lo, hi) = tail.wilson(z);
            TailRow { u, tail, stat: -tail.estimate().ln() / u, stat_lo: -hi.ln() / u, stat_hi: -lo.ln() / u }
        })
        .collect();
    let mut decreases = Vec::new();
    let mut compared = 0;
    for a in 0..rows.len() {
        for b in a + 1..rows.len() {
            let (ra, rb) = (&rows[a], &rows[b]);
            let disjoint = ra.stat_hi < rb.stat_lo || rb.stat_hi < ra.stat_lo;
            if disjoint {
                compared += 1;
                if rb.stat < ra.stat {
                    decreases.push((a, b));
                }
            }
        }
    }
    Ok(TailReport { rows, guard_fired, overflow, paths, decreases, compared_pairs: compared })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::RankTable;

    #[test]
    fn lemma_bound_examples() {
        let b = lemma_bound(0.5, 0.1, 1.0, 4.0);
        assert!((b - 2.0 * (5.0f64 / 9.0).powi(2)).abs() < 1e-14);
        assert!((b - 0.61728).abs() < 1e-5);
        assert_eq!(lemma_bound(0.3, 0.1, 1.0, 0.0), 2.0);
        assert!((lemma_bound(0.9 - 1e-12, 0.1, 1.0, 4.0) - 2.0).abs() < 1e-10);
    }

    #[test]
    fn lemma_bound_monotone_in_lambda_and_sigma() {
        let mut prev = f64::INFINITY;
        for lam in [0.0, 0.5, 1.0, 4.0, 16.0, 100.0, 1e4, 1e8] {
            let b = lemma_bound(0.6, 0.1, 1.0, lam);
            assert!(b <= prev && b.is_finite());
            prev = b;
        }
        assert!(lemma_bound(0.6, 0.1, 0.5, 4.0) < lemma_bound(0.6, 0.1, 1.0, 4.0));
    }

    #[test]
    fn rbm_boundary_values() {
        let y = y_tilde(0.1);
        assert!((y - 0.5877866649).abs() < 1e-9);
        let at0 = rbm_hit_before_exp(0.0, y, 4.0, 1.0).unwrap();
        assert!((at0 - 1.0 / (2.0 * y).cosh()).abs() < 1e-15);
        assert_eq!(rbm_hit_before_exp(y, y, 4.0, 1.0).unwrap(), 1.0);
        assert!(rbm_hit_before_exp(0.7, y, 4.0, 1.0).is_err());
        let r = rbm_hit_before_exp(0.55, y, 1e8, 1.0).unwrap();
        assert!(r > 0.0 && (r.ln() - (-1e4 * (y - 0.55))).abs() < 1e-6);
    }

    #[test]
    fn p_n_examples_and_identity() {
        let p = p_n(0.1, 0.2, 1.0, 1.0).unwrap();
        assert!((p - 2.0 * 0.8 / 0.9).abs() < 1e-14);
        assert!(p_n(0.2, 0.1, 1.0, 1.0).is_err());
        for &(d, d0, s, l) in &[(0.1, 0.2, 1.0, 1.0), (0.05, 0.37, 0.7, 18.0), (0.15, 0.6, 2.0, 1e6), (0.01, 0.02, 1.3, 0.3)] {
            let a = p_n(d, d0, s, l).unwrap();
            let b = p_n_exp(d, d0, s, l);
            assert!(((a - b) / a).abs() < 1e-12);
        }
        let mut prev = f64::INFINITY;
        for l in [0.0, 1.0, 10.0, 100.0, 1e4] {
            let v = p_n(0.1, 0.3, 1.0, l).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn h_properties() {
        assert_eq!(h_fn(1.0).unwrap(), 0.0);
        assert!(h_fn(0.0).is_err());
        let s0 = h_threshold();
        assert!((s0 - 0.2032).abs() < 1e-3, "{s0}");
        for k in 1..=1000 {
            let s = s0 * k as f64 / 1000.0;
            assert!(h_fn(s).unwrap() >= -0.5 * s.ln() - 1e-12, "s = {s}");
        }
        assert!(h_fn(0.5).unwrap() < -0.5 * 0.5f64.ln());
    }

    #[test]
    fn explosion_terms_decrease_along_quadratic_u() {
        let mut prev = f64::INFINITY;
        for l in [10u64, 20, 40] {
            let x = ExplosionInputs {
                l,
                u: 32.0 * (l * l) as f64,
                horizon: 1.0,
                c: 4.0,
                alpha: 2.0,
                delta: 0.1,
                delta0: 0.37,
                sigma: 1.0,
            };
            let t = explosion_bound_terms(&x).unwrap();
            assert!(t.log_sigma1.is_finite() && t.log_sigma2.is_finite());
            assert!(t.sum() < prev, "L = {l}: {t:?}");
            prev = t.sum();
        }
    }

    #[test]
    fn explosion_terms_domain() {
        let x = ExplosionInputs { l: 10, u: 5.0, horizon: 1.0, c: 4.0, alpha: 2.0, delta: 0.1, delta0: 0.37, sigma: 1.0 };
        assert!(explosion_bound_terms(&x).is_err());
        let zero = ExplosionInputs { c: 0.0, u: 100.0, ..x };
        assert!(explosion_bound_terms(&zero).is_err());
    }

    #[test]
    fn split_before_clock_trivial_cases() {
        let p = ModelParams::uniform(8, 0.0, 1.0, 0.1, 0.3).with_dt(1e-3);
        let s = MarketState::from_weights(&[0.5, 0.5]).unwrap();
        // No clock: two names diffuse until one reaches 0.9.
        let e = estimate_split_before_clock(&p, &s, 0.0, 100.0, 200, 1, 0).unwrap();
        assert_eq!(e.hits.successes + e.censored, 200);
        assert!(e.hits.estimate() > 0.95);
        let bad = ModelParams { drift: RankTable::linear(8, 0.1, -0.2), ..p.clone() };
        assert!(estimate_split_before_clock(&bad, &s, 1.0, 1.0, 10, 1, 0).is_err());
    }

    #[test]
    fn double_jump_extremes() {
        let fast = ModelParams::uniform(8, 0.0, 1.0, 0.1, 0.3).with_clock(1e5, 2.0);
        let d = estimate_double_jump(&fast, 4, 10.0, 500, 2, 0).unwrap();
        assert_eq!(d.splits.successes, 0);
        let none = ModelParams::uniform(8, 0.0, 1.0, 0.1, 0.3).with_clock(0.0, 2.0);
        let d = estimate_double_jump(&none, 3, 200.0, 200, 2, 0).unwrap();
        assert_eq!(d.bound, 2.0);
        assert!(d.splits.successes + d.censored == 200 && d.splits.successes > 190);
        let s = double_jump_start(4, &none).unwrap();
        assert_eq!(s.caps(), &[0.9, 0.05, 0.05]);
    }

    #[test]
    fn tail_definitional_cases() {
        let p = ModelParams::uniform(6, 0.0, 2.0, 0.15, 0.3).with_clock(0.5, 1.0);
        let s = MarketState::equal(3, 1.0).unwrap();
        let r = tail_of_max_count(&p, &s, 2.0, &[1.0, 2.0, 6.0], 3.0, 2000, 5, 0).unwrap();
        assert_eq!(r.rows[0].tail.successes, 2000);
        assert_eq!(r.rows[1].tail.successes, 2000);
        assert_eq!(r.rows[2].tail.successes, r.guard_fired);
        assert!(tail_of_max_count(&p, &s, 1.0, &[3.0, 2.0], 3.0, 10, 5, 0).is_err());
    }
}
