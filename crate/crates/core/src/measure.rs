//! Pathwise Girsanov density and the martingale (no-arbitrage) checks.
//!
//! Along a path, `M(t) = Σ θ(N, k_i) ΔW_i` summed over steps and companies,
//! `⟨M⟩(t) = Σ θ² Δt`, and `Z(t) = exp(−M − ⟨M⟩/2)`. The density is
//! driven by exactly the Gaussians used for the capitalization step.

use serde::Serialize;

use crate::error::{contract, Result};
use crate::events::MarketSim;
use crate::exec::{map_paths, path_rng};
use crate::params::{ModelParams, ThetaMode};
use crate::path::{simulate_path, PathSpec};
use crate::portfolio::PortfolioRule;
use crate::sde::{rank, MarketState};
use crate::stats::MeanEstimate;

/// Market price of risk for rank `k` (0-based) of an `n`-company market.
pub fn theta(n: usize, k: usize, params: &ModelParams) -> Result<f64> {
    if n < 2 || k >= n || n > params.vol.max_n() {
        return Err(contract(format!("rank {k} invalid for N = {n}")));
    }
    let sigma = params.vol.get(n, k);
    if sigma == 0.0 {
        return Err(contract("θ undefined for zero volatility"));
    }
    Ok(theta_unchecked(params.drift.get(n, k), sigma, params.theta_mode))
}

#[inline]
fn theta_unchecked(g: f64, sigma: f64, mode: ThetaMode) -> f64 {
    match mode {
        ThetaMode::Paper => g / sigma,
        ThetaMode::Martingale => (g + 0.5 * sigma * sigma) / sigma,
    }
}

/// `C = max |θ|` over the whole coefficient table.
pub fn theta_bound(params: &ModelParams) -> f64 {
    params
        .drift
        .rows()
        .zip(params.vol.rows())
        .flat_map(|((_, g), (_, s))| g.iter().zip(s).map(|(g, s)| theta_unchecked(*g, *s, params.theta_mode).abs()))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct GirsanovState {
    /// Running stochastic integral `M`.
    pub m: f64,
    /// Running quadratic variation `⟨M⟩`.
    pub qv: f64,
}

impl GirsanovState {
    /// `log Z`; kept in log space so long horizons do not underflow.
    #[inline]
    pub fn log_z(&self) -> f64 {
        -self.m - 0.5 * self.qv
    }

    pub fn z(&self) -> f64 {
        self.log_z().exp()
    }

    pub(crate) fn accumulate_ranked(&mut self, n: usize, order: &[usize], noise: &[f64], params: &ModelParams) {
        let dt = params.dt;
        let sqdt = dt.sqrt();
        let g = params.drift.row(n);
        let s = params.vol.row(n);
        let mut m = 0.0;
        let mut qv = 0.0;
        for (k, &i) in order.iter().enumerate() {
            let th = theta_unchecked(g[k], s[k], params.theta_mode);
            m += th * noise[i];
            qv += th * th;
        }
        self.m += m * sqdt;
        self.qv += qv * dt;
    }
}

/// Adds one step's contribution; `noise` must be the vector that drove the
/// matching Euler step from `state`.
pub fn accumulate(gs: GirsanovState, state: &MarketState, params: &ModelParams, noise: &[f64]) -> Result<GirsanovState> {
    if noise.len() != state.n() {
        return Err(contract("noise length must match the company count"));
    }
    let order = rank(state).rank_to_index;
    let mut out = gs;
    out.accumulate_ranked(state.n(), &order, noise, params);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleEstimate {
    pub rule: String,
    pub estimate: MeanEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleReport {
    pub mode: ThetaMode,
    pub paths: u64,
    pub failed_paths: u64,
    /// `E[Z(T)]`.
    pub density: MeanEstimate,
    /// `E[Z(T) V^π(T)]` for each rule.
    pub wealth: Vec<RuleEstimate>,
    /// `E[exp(⟨M⟩(T)/2)]`, a finite-sample Novikov proxy.
    pub novikov_proxy: MeanEstimate,
    pub qv_bound_breaches: u64,
    pub mean_max_n: f64,
}

/// Estimates `E[Z(T)]` and `E[Z(T) V^π(T)]` over `paths` full-model paths.
/// Under an equivalent martingale measure both equal 1.
pub fn martingale_test(
    params: &ModelParams,
    initial: &MarketState,
    rules: &[PortfolioRule],
    horizon: f64,
    paths: u64,
    seed: u64,
    workers: usize,
) -> Result<MartingaleReport> {
    if paths == 0 {
        return Err(contract("martingale test needs at least one path"));
    }
    let spec = PathSpec::new(params, initial, horizon).rules(rules);
    let outcomes = map_paths(paths, workers, |p| {
        simulate_path(&spec, &mut path_rng(seed, p)).map(|s| {
            let z = s.girsanov.z();
            (z, s.wealth.iter().map(|v| z * v).collect::<Vec<_>>(), s.girsanov.qv, s.audit.qv_bound_breaches, s.max_n)
        })
    });
    let mut zs = Vec::with_capacity(outcomes.len());
    let mut zv: Vec<Vec<f64>> = vec![Vec::with_capacity(outcomes.len()); rules.len()];
    let mut nov = Vec::with_capacity(outcomes.len());
    let (mut failed, mut breaches, mut max_n_sum) = (0, 0, 0.0);
    for o in outcomes {
        match o {
            Ok((z, v, qv, b, max_n)) => {
                zs.push(z);
                for (col, x) in zv.iter_mut().zip(v) {
                    col.push(x);
                }
                nov.push((0.5 * qv).exp());
                breaches += b;
                max_n_sum += max_n as f64;
            }
            Err(_) => failed += 1,
        }
    }
    let ok = zs.len() as f64;
    Ok(MartingaleReport {
        mode: params.theta_mode,
        paths,
        failed_paths: failed,
        density: MeanEstimate::from_samples(&zs),
        wealth: rules
            .iter()
            .zip(&zv)
            .map(|(r, col)| RuleEstimate { rule: r.to_string(), estimate: MeanEstimate::from_samples(col) })
            .collect(),
        novikov_proxy: MeanEstimate::from_samples(&nov),
        qv_bound_breaches: breaches,
        mean_max_n: max_n_sum / ok,
    })
}

/// Fixed-N check with events disabled: `E[Z(T) X_i(T) / X_i(0)]` for the
/// company at 0-based index `company`.
pub fn single_name_check(
    params: &ModelParams,
    initial: &MarketState,
    company: usize,
    horizon: f64,
    paths: u64,
    seed: u64,
    workers: usize,
) -> Result<MeanEstimate> {
    if company >= initial.n() {
        return Err(contract("company index out of range"));
    }
    if paths == 0 {
        return Err(contract("single-name check needs at least one path"));
    }
    let outcomes = map_paths(paths, workers, |p| {
        let mut rng = path_rng(seed, p);
        let mut sim = MarketSim::new(params, initial.clone(), &mut rng)
            .expect("initial state validated")
            .with_events(false);
        let mut gs = GirsanovState::default();
        for _ in 0..sim.steps_to(horizon) {
            sim.step(&mut rng)?;
            gs.accumulate_ranked(sim.last_n(), sim.last_order(), sim.last_noise(), params);
        }
        let ratio = sim.state().caps()[company] / initial.caps()[company];
        Ok::<f64, crate::PathError>(gs.z() * ratio)
    });
    let samples: Vec<f64> = outcomes.into_iter().filter_map(|o| o.ok()).collect();
    Ok(MeanEstimate::from_samples(&samples))
}
