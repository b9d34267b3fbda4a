//! Split and merger events, and the per-path simulator that interleaves them
//! with the diffusion.
//!
//! Positions follow the renaming rules of the construction: on a split of
//! company `i`, later companies shift down one slot and the two children take
//! the last two slots; on a merger of `i < j`, the survivors close ranks and
//! the merged company takes the last slot. All indices here are 0-based; the
//! JSON event log reports them 1-based.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{contract, PathError, Result};
use crate::numeric::fsum;
use crate::params::{ModelParams, SplitDraw};
use crate::sde::{euler_step_ranked, rank_into, top_index, MarketState};

/// Merger clock rate for an `n`-company market: zero for two companies,
/// `c · n^α` otherwise.
pub fn clock_rate(n: usize, params: &ModelParams) -> Result<f64> {
    match n {
        0 | 1 => Err(contract(format!("clock rate undefined for N = {n}"))),
        2 => Ok(0.0),
        _ => Ok(params.clock_c * (n as f64).powf(params.clock_alpha)),
    }
}

/// Exponential holding time until the next merger attempt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergerClock {
    pub remaining: f64,
}

impl MergerClock {
    pub fn draw<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Self {
        if rate > 0.0 {
            // 1 - U lies in (0, 1], so the log is finite.
            let u: f64 = rng.random();
            Self { remaining: -(1.0 - u).ln() / rate }
        } else {
            Self::never()
        }
    }

    pub fn never() -> Self {
        Self { remaining: f64::INFINITY }
    }
}

/// The unique company whose weight has reached `1 − δ`, if any. Detection
/// happens after a step, so the weight may overshoot the threshold.
pub fn detect_split(state: &MarketState, params: &ModelParams) -> Option<usize> {
    detect_in(state.caps(), params.threshold())
}

fn detect_in(caps: &[f64], threshold: f64) -> Option<usize> {
    let total = fsum(caps);
    let i = top_index(caps);
    (caps[i] / total >= threshold).then_some(i)
}

fn split_caps(caps: &[f64], i: usize, xi: f64) -> Vec<f64> {
    let parent = caps[i];
    let first = xi * parent;
    // xi >= 1/2 puts `first` within a factor two of `parent`, so the
    // subtraction is exact and the children add back to the parent exactly.
    let second = parent - first;
    let mut out = Vec::with_capacity(caps.len() + 1);
    out.extend_from_slice(&caps[..i]);
    out.extend_from_slice(&caps[i + 1..]);
    out.push(first);
    out.push(second);
    out
}

fn merge_caps(caps: &[f64], i: usize, j: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(caps.len() - 1);
    out.extend_from_slice(&caps[..i]);
    out.extend_from_slice(&caps[i + 1..j]);
    out.extend_from_slice(&caps[j + 1..]);
    out.push(caps[i] + caps[j]);
    out
}

/// Splits company `i` into `ξ X_i` and `(1 − ξ) X_i`, appended last.
pub fn apply_split(state: &MarketState, i: usize, xi: SplitDraw) -> Result<MarketState> {
    if i >= state.n() {
        return Err(contract(format!("split index {i} out of range for N = {}", state.n())));
    }
    Ok(MarketState::from_parts_unchecked(state.t, split_caps(state.caps(), i, xi.xi())))
}

/// Draws the pair to merge: the top company (lowest index among ties) is
/// excluded and the pair is uniform over the remaining `C(N−1, 2)` pairs.
/// Returned as `(i, j)` with `i < j`.
pub fn sample_merger_pair<R: Rng + ?Sized>(state: &MarketState, rng: &mut R) -> Result<(usize, usize)> {
    let n = state.n();
    if n < 3 {
        return Err(contract(format!("no merger pair for N = {n}")));
    }
    Ok(pair_excluding_top(state.caps(), rng))
}

fn pair_excluding_top<R: Rng + ?Sized>(caps: &[f64], rng: &mut R) -> (usize, usize) {
    let n = caps.len();
    let top = top_index(caps);
    let a = rng.random_range(0..n - 1);
    let mut b = rng.random_range(0..n - 2);
    if b >= a {
        b += 1;
    }
    let lift = |x: usize| if x >= top { x + 1 } else { x };
    let (a, b) = (lift(a), lift(b));
    (a.min(b), a.max(b))
}

/// Whether merging `i` and `j` would create a company at or above `1 − δ`.
pub fn merger_suppressed(state: &MarketState, i: usize, j: usize, params: &ModelParams) -> bool {
    suppressed_in(state.caps(), i, j, params.threshold())
}

fn suppressed_in(caps: &[f64], i: usize, j: usize, threshold: f64) -> bool {
    let total = fsum(caps);
    caps[i] / total + caps[j] / total >= threshold
}

/// Merges `i < j` into one company in the last slot.
pub fn apply_merger(state: &MarketState, i: usize, j: usize, params: &ModelParams) -> Result<MarketState> {
    let n = state.n();
    if n < 3 || i >= j || j >= n {
        return Err(contract(format!("invalid merger ({i}, {j}) for N = {n}")));
    }
    if merger_suppressed(state, i, j, params) {
        return Err(contract(format!("merger ({i}, {j}) is suppressed and cannot be applied")));
    }
    Ok(MarketState::from_parts_unchecked(state.t, merge_caps(state.caps(), i, j)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Split { parent: usize, xi: f64 },
    Merger { i: usize, j: usize },
    SuppressedMerger { i: usize, j: usize },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Split { .. } => "split",
            EventKind::Merger { .. } => "merger",
            EventKind::SuppressedMerger { .. } => "suppressed_merger",
        }
    }
}

/// Stable company ids consumed and created by an event; diagnostics only.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Lineage {
    pub retired: Vec<u64>,
    pub created: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
    pub n_before: usize,
    pub n_after: usize,
    pub caps_before: Vec<f64>,
    pub caps_after: Vec<f64>,
    pub lineage: Lineage,
}

#[derive(Serialize)]
struct EventLine<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    path: Option<u64>,
    t: f64,
    kind: &'a str,
    i: usize,
    j: Option<usize>,
    xi: Option<f64>,
    n_before: usize,
    n_after: usize,
}

impl EventRecord {
    /// One JSON object (no trailing newline) with fields
    /// `path?, t, kind, i, j, xi, n_before, n_after`; `i`, `j` are 1-based.
    pub fn to_json_line(&self, path: Option<u64>) -> String {
        let (i, j, xi) = match self.kind {
            EventKind::Split { parent, xi } => (parent + 1, None, Some(xi)),
            EventKind::Merger { i, j } | EventKind::SuppressedMerger { i, j } => (i + 1, Some(j + 1), None),
        };
        let line = EventLine {
            path,
            t: self.time,
            kind: self.kind.name(),
            i,
            j,
            xi,
            n_before: self.n_before,
            n_after: self.n_after,
        };
        serde_json::to_string(&line).expect("event line serializes")
    }

    /// Market weight of the split parent just before the split.
    pub fn parent_weight(&self) -> Option<f64> {
        match self.kind {
            EventKind::Split { parent, .. } => Some(self.caps_before[parent] / fsum(&self.caps_before)),
            _ => None,
        }
    }

    pub fn is_upward(&self) -> bool {
        self.n_after > self.n_before
    }
}

/// Steps one path of the model: diffusion between events, splits at the
/// threshold, mergers when the clock rings.
///
/// Within a step the order of random draws is fixed: `N` Gaussians, then the
/// split fraction or the merger pair, then the new clock.
#[derive(Debug, Clone)]
pub struct MarketSim<'p> {
    params: &'p ModelParams,
    state: MarketState,
    t0: f64,
    steps: u64,
    clock: MergerClock,
    events: bool,
    order: Vec<usize>,
    noise: Vec<f64>,
    start_caps: Vec<f64>,
    returns: Vec<f64>,
    ids: Vec<u64>,
    next_id: u64,
}

impl<'p> MarketSim<'p> {
    /// Starts a path and draws the first merger clock.
    pub fn new<R: Rng + ?Sized>(params: &'p ModelParams, state: MarketState, rng: &mut R) -> Result<Self> {
        let rate = clock_rate(state.n(), params)?;
        let clock = MergerClock::draw(rate, rng);
        Self::with_clock(params, state, clock)
    }

    pub fn with_clock(params: &'p ModelParams, state: MarketState, clock: MergerClock) -> Result<Self> {
        if state.n() > params.n_max {
            return Err(contract(format!("initial N = {} exceeds n_max = {}", state.n(), params.n_max)));
        }
        let n = state.n();
        Ok(Self {
            params,
            t0: state.t,
            state,
            steps: 0,
            clock,
            events: true,
            order: Vec::with_capacity(n + 1),
            noise: Vec::with_capacity(n + 1),
            start_caps: Vec::with_capacity(n + 1),
            returns: Vec::with_capacity(n + 1),
            ids: (0..n as u64).collect(),
            next_id: n as u64,
        })
    }

    /// Disabling events freezes the company count: the diffusion runs on
    /// with no split detection and no merger clock.
    pub fn with_events(mut self, enabled: bool) -> Self {
        self.events = enabled;
        self
    }

    pub fn params(&self) -> &'p ModelParams {
        self.params
    }

    pub fn state(&self) -> &MarketState {
        &self.state
    }

    pub fn into_state(self) -> MarketState {
        self.state
    }

    pub fn clock(&self) -> MergerClock {
        self.clock
    }

    pub fn t(&self) -> f64 {
        self.state.t
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Company count during the last step.
    pub fn last_n(&self) -> usize {
        self.noise.len()
    }

    /// Gaussians that drove the last step, indexed by company.
    pub fn last_noise(&self) -> &[f64] {
        &self.noise
    }

    /// Ranking used for the last step (`order[k]` holds rank `k`).
    pub fn last_order(&self) -> &[usize] {
        &self.order
    }

    /// `X_i(t + Δt) / X_i(t) − 1` for the last step, before any event renaming.
    pub fn last_returns(&self) -> &[f64] {
        &self.returns
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    /// Number of whole steps needed to reach `horizon` from the path start.
    pub fn steps_to(&self, horizon: f64) -> u64 {
        let span = (horizon - self.t0) / self.params.dt;
        if span <= 0.0 {
            0
        } else {
            (span - 1e-9).ceil() as u64
        }
    }

    /// Applies a split immediately if some weight already sits at or above
    /// the threshold (e.g. a forced initial state).
    pub fn settle<R: Rng + ?Sized>(&mut self, rng: &mut R) -> std::result::Result<Option<EventRecord>, PathError> {
        if !self.events {
            return Ok(None);
        }
        match detect_in(self.state.caps(), self.params.threshold()) {
            Some(i) => {
                let xi = self.params.split.sample(self.params.eps0, rng);
                self.split(i, xi, rng).map(Some)
            }
            None => Ok(None),
        }
    }

    /// Splits company `i` now and redraws the clock.
    pub fn force_split<R: Rng + ?Sized>(
        &mut self,
        i: usize,
        xi: SplitDraw,
        rng: &mut R,
    ) -> std::result::Result<EventRecord, PathError> {
        assert!(i < self.state.n(), "split index out of range");
        self.split(i, xi, rng)
    }

    fn split<R: Rng + ?Sized>(
        &mut self,
        i: usize,
        xi: SplitDraw,
        rng: &mut R,
    ) -> std::result::Result<EventRecord, PathError> {
        let n = self.state.n();
        if n + 1 > self.params.n_max {
            return Err(PathError::ExplosionGuard { t: self.state.t, n_max: self.params.n_max });
        }
        let before = self.state.caps().to_vec();
        let after = split_caps(&before, i, xi.xi());
        let retired = self.ids.remove(i);
        let created = vec![self.next_id, self.next_id + 1];
        self.ids.extend_from_slice(&created);
        self.next_id += 2;
        self.state = MarketState::from_parts_unchecked(self.state.t, after.clone());
        self.reset_clock(rng);
        Ok(EventRecord {
            time: self.state.t,
            kind: EventKind::Split { parent: i, xi: xi.xi() },
            n_before: n,
            n_after: n + 1,
            caps_before: before,
            caps_after: after,
            lineage: Lineage { retired: vec![retired], created },
        })
    }

    fn ring<R: Rng + ?Sized>(&mut self, rng: &mut R) -> EventRecord {
        let n = self.state.n();
        let before = self.state.caps().to_vec();
        let (i, j) = pair_excluding_top(&before, rng);
        let record = if suppressed_in(&before, i, j, self.params.threshold()) {
            EventRecord {
                time: self.state.t,
                kind: EventKind::SuppressedMerger { i, j },
                n_before: n,
                n_after: n,
                caps_after: before.clone(),
                caps_before: before,
                lineage: Lineage::default(),
            }
        } else {
            let after = merge_caps(&before, i, j);
            let b = self.ids.remove(j);
            let a = self.ids.remove(i);
            self.ids.push(self.next_id);
            self.next_id += 1;
            self.state = MarketState::from_parts_unchecked(self.state.t, after.clone());
            EventRecord {
                time: self.state.t,
                kind: EventKind::Merger { i, j },
                n_before: n,
                n_after: n - 1,
                caps_before: before,
                caps_after: after,
                lineage: Lineage { retired: vec![a, b], created: vec![self.next_id - 1] },
            }
        };
        self.reset_clock(rng);
        record
    }

    fn reset_clock<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let rate = clock_rate(self.state.n(), self.params).expect("N >= 2 is maintained");
        self.clock = MergerClock::draw(rate, rng);
    }

    /// Advances one step of length `dt`, then applies at most one event.
    /// A split takes precedence over a clock ring in the same step.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> std::result::Result<Option<EventRecord>, PathError> {
        let n = self.state.n();
        rank_into(self.state.caps(), &mut self.order);
        self.noise.clear();
        self.noise.extend((0..n).map(|_| -> f64 { StandardNormal.sample(rng) }));
        self.start_caps.clear();
        self.start_caps.extend_from_slice(self.state.caps());

        self.steps += 1;
        let t = self.t0 + self.steps as f64 * self.params.dt;
        euler_step_ranked(self.state.caps_mut(), &self.order, self.params, &self.noise)
            .map_err(|_| PathError::Overflow { t })?;
        self.state.t = t;

        self.returns.clear();
        self.returns.extend(
            self.state.caps().iter().zip(&self.start_caps).map(|(x, x0)| x / x0 - 1.0),
        );

        if !self.events {
            return Ok(None);
        }
        if let Some(i) = detect_in(self.state.caps(), self.params.threshold()) {
            let xi = self.params.split.sample(self.params.eps0, rng);
            return self.split(i, xi, rng).map(Some);
        }
        self.clock.remaining -= self.params.dt;
        if self.clock.remaining <= 0.0 {
            return Ok(Some(self.ring(rng)));
        }
        Ok(None)
    }
}

/// Runs the diffusion from `state` until the first event or `horizon`,
/// whichever comes first. Returns the (post-event) state, the clock as it
/// stands afterwards (redrawn if an event fired) and the event, if any.
pub fn run_until_event<R: Rng + ?Sized>(
    state: MarketState,
    params: &ModelParams,
    clock: MergerClock,
    rng: &mut R,
    horizon: f64,
) -> Result<(MarketState, MergerClock, Option<EventRecord>)> {
    let mut sim = MarketSim::with_clock(params, state, clock)?;
    if let Some(ev) = sim.settle(rng)? {
        let clock = sim.clock();
        return Ok((sim.into_state(), clock, Some(ev)));
    }
    let steps = sim.steps_to(horizon);
    for _ in 0..steps {
        if let Some(ev) = sim.step(rng)? {
            let clock = sim.clock();
            return Ok((sim.into_state(), clock, Some(ev)));
        }
    }
    let clock = sim.clock();
    Ok((sim.into_state(), clock, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::ulp;
    use crate::sde::market_weights;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn st(caps: &[f64]) -> MarketState {
        MarketState::new(0.0, caps.to_vec()).unwrap()
    }

    fn params() -> ModelParams {
        ModelParams::uniform(16, 0.0, 1.0, 0.1, 0.3)
    }

    #[test]
    fn clock_rate_examples() {
        let p = params().with_clock(1.0, 2.0);
        assert_eq!(clock_rate(2, &p).unwrap(), 0.0);
        assert_eq!(clock_rate(10, &p).unwrap(), 100.0);
        let zero = params().with_clock(0.0, 2.0);
        for n in 2..10 {
            assert_eq!(clock_rate(n, &zero).unwrap(), 0.0);
        }
        assert!(clock_rate(1, &p).is_err());
    }

    #[test]
    fn detect_split_examples() {
        let p = params();
        assert_eq!(detect_split(&st(&[0.92, 0.05, 0.03]), &p), Some(0));
        assert_eq!(detect_split(&st(&[0.6, 0.4]), &p), None);
        // Boundary is included: 9/10 is exactly the threshold.
        assert_eq!(detect_split(&st(&[9.0, 1.0]), &p), Some(0));
    }

    #[test]
    fn split_renames_per_construction() {
        let xi = SplitDraw::new(0.6, 0.3).unwrap();
        let s = apply_split(&st(&[2.0, 5.0, 3.0]), 1, xi).unwrap();
        assert_eq!(s.caps(), &[2.0, 3.0, 3.0, 2.0]);
        let half = SplitDraw::new(0.5, 0.3).unwrap();
        let s = apply_split(&st(&[4.0, 3.0]), 0, half).unwrap();
        assert_eq!(s.caps(), &[3.0, 2.0, 2.0]);
        assert!(apply_split(&st(&[4.0, 3.0]), 2, half).is_err());
    }

    #[test]
    fn merger_renames_per_construction() {
        let p = params();
        let s = apply_merger(&st(&[1.0, 2.0, 3.0, 4.0, 5.0]), 1, 3, &p).unwrap();
        assert_eq!(s.caps(), &[1.0, 3.0, 5.0, 6.0]);
        let s = apply_merger(&st(&[1.0, 2.0, 3.0]), 0, 1, &p).unwrap();
        assert_eq!(s.caps(), &[3.0, 3.0]);
    }

    #[test]
    fn suppressed_merger_cannot_be_applied() {
        let p = params();
        let two = st(&[1.0, 3.0]);
        assert!(merger_suppressed(&two, 0, 1, &p));
        let s = st(&[0.5, 0.3, 0.2]);
        assert!(!merger_suppressed(&s, 1, 2, &p));
        let heavy = st(&[0.46, 0.46, 0.08]);
        assert!(merger_suppressed(&heavy, 0, 1, &p));
        assert!(apply_merger(&heavy, 0, 1, &p).is_err());
    }

    #[test]
    fn three_companies_always_merge_the_bottom_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(sample_merger_pair(&st(&[5.0, 1.0, 2.0]), &mut rng).unwrap(), (1, 2));
        }
        assert!(sample_merger_pair(&st(&[5.0, 1.0]), &mut rng).is_err());
    }

    #[test]
    fn merger_pairs_are_uniform_and_exclude_the_tied_top() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = st(&[5.0, 5.0, 1.0, 1.0]);
        let draws = 100_000;
        let mut counts = std::collections::BTreeMap::new();
        for _ in 0..draws {
            *counts.entry(sample_merger_pair(&s, &mut rng).unwrap()).or_insert(0u64) += 1;
        }
        assert_eq!(counts.keys().copied().collect::<Vec<_>>(), vec![(1, 2), (1, 3), (2, 3)]);
        let p = 1.0 / 3.0;
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        for c in counts.values() {
            assert!((*c as f64 / draws as f64 - p).abs() < 3.0 * se);
        }
    }

    #[test]
    fn six_companies_give_ten_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = st(&[1.0, 2.0, 9.0, 3.0, 4.0, 5.0]);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..5000 {
            let (i, j) = sample_merger_pair(&s, &mut rng).unwrap();
            assert!(i != 2 && j != 2);
            seen.insert((i, j));
        }
        assert_eq!(seen.len(), 10);
    }

    #[test]
    fn forced_threshold_state_splits_immediately() {
        let p = params().with_clock(0.0, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (s, _, ev) = run_until_event(st(&[9.0, 0.5, 0.5]), &p, MergerClock::never(), &mut rng, 1.0).unwrap();
        let ev = ev.unwrap();
        assert_eq!(ev.time, 0.0);
        assert!(matches!(ev.kind, EventKind::Split { parent: 0, .. }));
        assert_eq!(s.n(), 4);
        let w = market_weights(&s);
        assert!(w.iter().all(|&m| m <= 0.9 * 0.7 + 1e-15));
    }

    #[test]
    fn no_event_without_clock_or_threshold() {
        let p = params().with_clock(0.0, 2.0).with_dt(1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (s, _, ev) = run_until_event(MarketState::equal(5, 1.0).unwrap(), &p, MergerClock::never(), &mut rng, 0.05)
            .unwrap();
        assert!(ev.is_none());
        assert!((s.t - 0.05).abs() < 1e-12);
        assert_eq!(s.n(), 5);
    }

    #[test]
    fn fast_clock_merges_first() {
        let p = params().with_clock(1e6 / 9.0, 2.0);
        let mut merges = 0;
        let trials = 10_000;
        for k in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(k);
            let clock = MergerClock::draw(clock_rate(3, &p).unwrap(), &mut rng);
            let (s, _, ev) = run_until_event(MarketState::equal(3, 1.0).unwrap(), &p, clock, &mut rng, 1.0).unwrap();
            if matches!(ev.map(|e| e.kind), Some(EventKind::Merger { .. })) {
                assert_eq!(s.n(), 2);
                merges += 1;
            }
        }
        assert!(merges as f64 / trials as f64 >= 0.99);
    }

    #[test]
    fn event_json_line_fields() {
        let ev = EventRecord {
            time: 0.25,
            kind: EventKind::Merger { i: 1, j: 3 },
            n_before: 5,
            n_after: 4,
            caps_before: vec![],
            caps_after: vec![],
            lineage: Lineage::default(),
        };
        let v: serde_json::Value = serde_json::from_str(&ev.to_json_line(Some(7))).unwrap();
        assert_eq!(v["path"], 7);
        assert_eq!(v["kind"], "merger");
        assert_eq!(v["i"], 2);
        assert_eq!(v["j"], 4);
        assert!(v["xi"].is_null());
        assert_eq!(v["n_after"], 4);
    }

    fn caps_strategy() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.01f64..100.0, 3..12)
    }

    fn sorted(mut v: Vec<f64>) -> Vec<f64> {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    proptest! {
        #[test]
        fn split_preserves_total_and_multiset(caps in caps_strategy(), pick in any::<prop::sample::Index>(), xi in 0.5f64..=0.7) {
            let s = st(&caps);
            let i = pick.index(caps.len());
            let after = apply_split(&s, i, SplitDraw::new(xi, 0.3).unwrap()).unwrap();
            prop_assert_eq!(after.n(), s.n() + 1);
            prop_assert!((after.total() - s.total()).abs() <= 4.0 * ulp(s.total()));
            let children = &after.caps()[s.n() - 1..];
            prop_assert_eq!(children[0] + children[1], caps[i]);
            let mut expected: Vec<f64> = caps.clone();
            expected.remove(i);
            expected.extend_from_slice(children);
            prop_assert_eq!(sorted(after.caps().to_vec()), sorted(expected));
        }

        #[test]
        fn merger_of_split_children_restores_multiset(caps in caps_strategy(), pick in any::<prop::sample::Index>(), xi in 0.5f64..=0.7) {
            let p = params();
            let s = st(&caps);
            let i = pick.index(caps.len());
            let split = apply_split(&s, i, SplitDraw::new(xi, 0.3).unwrap()).unwrap();
            prop_assume!(!merger_suppressed(&split, split.n() - 2, split.n() - 1, &p));
            let merged = apply_merger(&split, split.n() - 2, split.n() - 1, &p).unwrap();
            prop_assert_eq!(sorted(merged.caps().to_vec()), sorted(caps.clone()));
        }

        #[test]
        fn sampled_mergers_preserve_total_and_are_never_suppressed(caps in caps_strategy(), seed in any::<u64>()) {
            let p = params();
            let s = st(&caps);
            prop_assume!(s.max_weight() <= p.threshold());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (i, j) = sample_merger_pair(&s, &mut rng).unwrap();
            prop_assert!(!merger_suppressed(&s, i, j, &p));
            let after = apply_merger(&s, i, j, &p).unwrap();
            prop_assert_eq!(after.n(), s.n() - 1);
            prop_assert!((after.total() - s.total()).abs() <= 4.0 * ulp(s.total()));
        }

        #[test]
        fn exact_boundary_split_bounds_all_weights(rest in proptest::collection::vec(0.01f64..1.0, 1..8), xi in 0.5f64..=0.7) {
            let p = params();
            // Top company at exactly 1 - δ of the total.
            let others: f64 = rest.iter().sum();
            let mut caps = vec![others * 9.0];
            caps.extend_from_slice(&rest);
            let s = st(&caps);
            let after = apply_split(&s, 0, SplitDraw::new(xi, p.eps0).unwrap()).unwrap();
            let w = market_weights(&after);
            let children = &w[w.len() - 2..];
            for c in children {
                prop_assert!(*c <= (1.0 - p.delta) * (1.0 - p.eps0) + 1e-12);
            }
            for o in &w[..w.len() - 2] {
                prop_assert!(*o <= p.delta + 1e-12);
            }
        }
    }
}
