//! Full simulation of one path: market, portfolios and Girsanov density,
//! together with an audit of the pathwise invariants.

use rand::Rng;
use serde::Serialize;

use crate::error::PathError;
use crate::events::{EventKind, EventRecord, MarketSim};
use crate::measure::{theta_bound, GirsanovState};
use crate::numeric::{fsum, ulp};
use crate::params::ModelParams;
use crate::portfolio::{PortfolioRule, Position};
use crate::sde::MarketState;

#[derive(Debug, Clone)]
pub struct PathSpec<'a> {
    pub params: &'a ModelParams,
    pub initial: &'a MarketState,
    pub horizon: f64,
    pub rules: &'a [PortfolioRule],
    pub events: bool,
    pub record_events: bool,
    /// Record a [`Sample`] every this many steps (and at the horizon).
    pub sample_stride: Option<u64>,
}

impl<'a> PathSpec<'a> {
    pub fn new(params: &'a ModelParams, initial: &'a MarketState, horizon: f64) -> Self {
        Self {
            params,
            initial,
            horizon,
            rules: &[],
            events: true,
            record_events: false,
            sample_stride: None,
        }
    }

    pub fn rules(mut self, rules: &'a [PortfolioRule]) -> Self {
        self.rules = rules;
        self
    }

    pub fn events(mut self, enabled: bool) -> Self {
        self.events = enabled;
        self
    }

    pub fn record_events(mut self, on: bool) -> Self {
        self.record_events = on;
        self
    }

    pub fn sample_every(mut self, stride: Option<u64>) -> Self {
        self.sample_stride = stride.filter(|s| *s > 0);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub n: usize,
    pub mu_max: f64,
    pub v_market: f64,
    /// Wealth of each rule in [`PathSpec::rules`], same order.
    pub wealth: Vec<f64>,
    pub z: f64,
}

/// Worst-case values of the pathwise invariants seen along a path (or a
/// merged set of paths).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Audit {
    /// Largest market weight over every post-event state on the step grid.
    pub max_weight: f64,
    /// Largest `log(μ_parent / (1 − δ))` at split detection.
    pub max_split_overshoot: f64,
    /// Largest |C(T_m+) − C(T_m)| in ulps of C(T_m).
    pub max_cap_drift_ulps: f64,
    /// Largest change of Σπ_i across a transfer, in ulps of Σ|π_i|.
    pub max_alloc_drift_ulps: f64,
    /// Events at which some wealth value changed.
    pub wealth_jumps: u64,
    /// Largest |V^μ(t) C(0) / C(t) − 1| along the path.
    pub max_market_identity_err: f64,
    /// Largest gap between transferred pre-event market weights and the
    /// market weights of the post-event caps.
    pub max_market_transfer_err: f64,
    /// Steps at which ⟨M⟩(t) exceeded C² t max N.
    pub qv_bound_breaches: u64,
    pub splits: u64,
    pub mergers: u64,
    pub suppressed_mergers: u64,
    /// Suppressed mergers that happened with three or more companies.
    pub suppressed_mergers_n3: u64,
}

impl Default for Audit {
    fn default() -> Self {
        Self {
            max_weight: 0.0,
            max_split_overshoot: f64::NEG_INFINITY,
            max_cap_drift_ulps: 0.0,
            max_alloc_drift_ulps: 0.0,
            wealth_jumps: 0,
            max_market_identity_err: 0.0,
            max_market_transfer_err: 0.0,
            qv_bound_breaches: 0,
            splits: 0,
            mergers: 0,
            suppressed_mergers: 0,
            suppressed_mergers_n3: 0,
        }
    }
}

impl Audit {
    pub fn merge(&mut self, o: &Audit) {
        self.max_weight = self.max_weight.max(o.max_weight);
        self.max_split_overshoot = self.max_split_overshoot.max(o.max_split_overshoot);
        self.max_cap_drift_ulps = self.max_cap_drift_ulps.max(o.max_cap_drift_ulps);
        self.max_alloc_drift_ulps = self.max_alloc_drift_ulps.max(o.max_alloc_drift_ulps);
        self.wealth_jumps += o.wealth_jumps;
        self.max_market_identity_err = self.max_market_identity_err.max(o.max_market_identity_err);
        self.max_market_transfer_err = self.max_market_transfer_err.max(o.max_market_transfer_err);
        self.qv_bound_breaches += o.qv_bound_breaches;
        self.splits += o.splits;
        self.mergers += o.mergers;
        self.suppressed_mergers += o.suppressed_mergers;
        self.suppressed_mergers_n3 += o.suppressed_mergers_n3;
    }
}

#[derive(Debug, Clone)]
pub struct PathSummary {
    pub final_state: MarketState,
    pub initial_caps: Vec<f64>,
    pub max_n: usize,
    /// Terminal wealth per rule, same order as [`PathSpec::rules`].
    pub wealth: Vec<f64>,
    pub v_market: f64,
    pub total_initial: f64,
    pub total_final: f64,
    pub girsanov: GirsanovState,
    /// Company ids alive at the horizon, aligned with `final_state`.
    pub final_ids: Vec<u64>,
    pub events: Vec<EventRecord>,
    pub samples: Vec<Sample>,
    pub audit: Audit,
}

struct Tracker<'a> {
    spec: &'a PathSpec<'a>,
    positions: Vec<Position>,
    market: Position,
    gs: GirsanovState,
    theta_sq_bound: f64,
    audit: Audit,
    max_n: usize,
    total0: f64,
    events: Vec<EventRecord>,
    samples: Vec<Sample>,
    order: Vec<usize>,
}

impl Tracker<'_> {
    fn on_event(&mut self, ev: EventRecord) {
        let before = fsum(&ev.caps_before);
        let after = fsum(&ev.caps_after);
        let drift = if before == after { 0.0 } else { (after - before).abs() / ulp(before) };
        let a = &mut self.audit;
        a.max_cap_drift_ulps = a.max_cap_drift_ulps.max(drift);
        match ev.kind {
            EventKind::Split { .. } => {
                a.splits += 1;
                let w = ev.parent_weight().expect("split has a parent");
                a.max_split_overshoot = a.max_split_overshoot.max((w / self.spec.params.threshold()).ln());
            }
            EventKind::Merger { .. } => a.mergers += 1,
            EventKind::SuppressedMerger { .. } => {
                a.suppressed_mergers += 1;
                if ev.n_before >= 3 {
                    a.suppressed_mergers_n3 += 1;
                }
            }
        }
        for pos in self.positions.iter_mut().chain(std::iter::once(&mut self.market)) {
            let v = pos.wealth;
            let d = pos.on_event(&ev);
            a.max_alloc_drift_ulps = a.max_alloc_drift_ulps.max(d);
            if pos.wealth != v {
                a.wealth_jumps += 1;
            }
        }
        // Transferring the market weights of the pre-event caps must give the
        // market weights of the post-event caps.
        let mu_before: Vec<f64> = ev.caps_before.iter().map(|c| c / before).collect();
        let gap = crate::portfolio::transfer(&mu_before, &ev)
            .iter()
            .zip(&ev.caps_after)
            .fold(0.0f64, |m, (w, c)| m.max((w - c / after).abs()));
        a.max_market_transfer_err = a.max_market_transfer_err.max(gap);
        self.max_n = self.max_n.max(ev.n_after);
        if self.spec.record_events {
            self.events.push(ev);
        }
    }

    fn sample(&mut self, state: &MarketState) {
        self.samples.push(Sample {
            t: state.t,
            n: state.n(),
            mu_max: state.max_weight(),
            v_market: self.market.wealth,
            wealth: self.positions.iter().map(|p| p.wealth).collect(),
            z: self.gs.z(),
        });
    }
}

/// Simulates one path up to the horizon. Portfolios rebalance at the start
/// of every step; wealth is never touched at event times.
pub fn simulate_path<R: Rng + ?Sized>(spec: &PathSpec<'_>, rng: &mut R) -> Result<PathSummary, PathError> {
    let params = spec.params;
    if spec.initial.n() > params.n_max {
        return Err(PathError::ExplosionGuard { t: spec.initial.t, n_max: params.n_max });
    }
    let mut sim = MarketSim::new(params, spec.initial.clone(), rng)
        .expect("initial state validated")
        .with_events(spec.events);

    let caps0 = spec.initial.caps();
    let total0 = spec.initial.total();
    let mut order = Vec::new();
    crate::sde::rank_into(caps0, &mut order);
    let mut tr = Tracker {
        spec,
        positions: spec.rules.iter().map(|r| Position::new(r.clone(), caps0, total0, &order)).collect(),
        market: Position::new(PortfolioRule::Market, caps0, total0, &order),
        gs: GirsanovState::default(),
        theta_sq_bound: theta_bound(params).powi(2),
        audit: Audit::default(),
        max_n: spec.initial.n(),
        total0,
        events: Vec::new(),
        samples: Vec::new(),
        order,
    };

    if let Some(ev) = sim.settle(rng)? {
        tr.on_event(ev);
    }
    tr.audit.max_weight = sim.state().max_weight();
    if spec.sample_stride.is_some() {
        tr.sample(sim.state());
    }

    let steps = sim.steps_to(spec.horizon);
    let mut start_caps = Vec::new();
    for k in 1..=steps {
        start_caps.clear();
        start_caps.extend_from_slice(sim.state().caps());
        let event = sim.step(rng)?;
        let t = sim.t();

        // Weights are set from the state at the start of the step, using the
        // ranking the diffusion itself was driven by.
        let total = fsum(&start_caps);
        tr.order.clear();
        tr.order.extend_from_slice(sim.last_order());
        for pos in tr.positions.iter_mut().chain(std::iter::once(&mut tr.market)) {
            pos.rebalance(&start_caps, total, &tr.order);
            pos.advance(sim.last_returns(), t)?;
        }
        tr.gs.accumulate_ranked(sim.last_n(), sim.last_order(), sim.last_noise(), params);
        if tr.gs.qv > tr.theta_sq_bound * t * tr.max_n as f64 * (1.0 + 1e-12) {
            tr.audit.qv_bound_breaches += 1;
        }

        if let Some(ev) = event {
            tr.on_event(ev);
        }

        let state = sim.state();
        let total_now = state.total();
        let top = state.caps().iter().fold(0.0f64, |m, c| m.max(*c)) / total_now;
        tr.audit.max_weight = tr.audit.max_weight.max(top);
        let identity = (tr.market.wealth * tr.total0 / total_now - 1.0).abs();
        tr.audit.max_market_identity_err = tr.audit.max_market_identity_err.max(identity);
        if let Some(stride) = spec.sample_stride {
            if k % stride == 0 || k == steps {
                let state = state.clone();
                tr.sample(&state);
            }
        }
    }

    let final_ids = sim.ids().to_vec();
    let final_state = sim.into_state();
    Ok(PathSummary {
        total_final: final_state.total(),
        initial_caps: caps0.to_vec(),
        final_ids,
        final_state,
        max_n: tr.max_n,
        wealth: tr.positions.iter().map(|p| p.wealth).collect(),
        v_market: tr.market.wealth,
        total_initial: tr.total0,
        girsanov: tr.gs,
        events: tr.events,
        samples: tr.samples,
        audit: tr.audit,
    })
}
