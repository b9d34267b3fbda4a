//! Scenario orchestration behind the CLI subcommands, and the check rows
//! each of them produces.

use std::path::Path;
use std::time::Instant;

use crate::bounds::{
    estimate_double_jump, estimate_split_before_clock, explosion_bound_terms, lemma_bound, rbm_hit_before_exp,
    tail_of_max_count, ExplosionInputs,
};
use crate::config::ScenarioConfig;
use crate::error::{Error, PathError, Result};
use crate::exec::{derive_seed, map_paths, path_rng};
use crate::measure::{martingale_test, single_name_check};
use crate::oracle::ReflectedBm;
use crate::params::{ModelParams, ThetaMode};
use crate::path::{simulate_path, Audit, PathSpec, PathSummary};
use crate::report::{self, CheckRow, PathFailure, RunReport};
use crate::sde::MarketState;

/// Command-line overrides of a loaded scenario.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<u64>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub workers: Option<usize>,
    pub out: Option<std::path::PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Verify,
    BoundCheck,
    Martingale,
    Tail,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Verify => "verify",
            Command::BoundCheck => "bound-check",
            Command::Martingale => "martingale",
            Command::Tail => "tail",
        }
    }
}

/// Applies overrides. `--paths` sets the path count of every estimator the
/// command runs.
pub fn apply_overrides(cfg: &mut ScenarioConfig, o: &Overrides, cmd: Command) -> Result<()> {
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(w) = o.workers {
        cfg.workers = w;
    }
    if let Some(d) = o.out.clone() {
        cfg.output.dir = d;
    }
    if let Some(h) = o.horizon {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Usage(format!("--horizon must be positive, got {h}")));
        }
        cfg.horizon = h;
        cfg.martingale.horizon = h;
        cfg.tail.horizon = h;
    }
    if let Some(dt) = o.dt {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Usage(format!("--dt must be positive, got {dt}")));
        }
        cfg.model.dt = dt;
        cfg.bounds.lemma.dt = dt;
        cfg.bounds.rbm.dt = dt;
    }
    if let Some(p) = o.paths {
        if p == 0 {
            return Err(Error::Usage("--paths must be at least 1".into()));
        }
        let all = cmd == Command::Verify;
        if cmd == Command::Simulate || all {
            cfg.paths = p;
            cfg.verify.audit_paths = p;
        }
        if cmd == Command::Martingale || all {
            cfg.martingale.paths = p;
            cfg.martingale.single_name_paths = p;
        }
        if cmd == Command::Tail || all {
            cfg.tail.paths = p;
        }
        if cmd == Command::BoundCheck || all {
            cfg.bounds.lemma.paths = p;
            cfg.bounds.rbm.paths = p;
            cfg.bounds.double_jump.paths = p;
        }
    }
    Ok(())
}

/// Everything a `simulate` run writes.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub report: RunReport,
    pub series: String,
    pub paths: String,
    pub events: String,
}

impl Simulation {
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("series.csv"), &self.series)?;
        std::fs::write(dir.join("paths.csv"), &self.paths)?;
        std::fs::write(dir.join("events.jsonl"), &self.events)?;
        self.report.write_to(dir)
    }
}

fn run_paths(
    cfg: &ScenarioConfig,
    paths: u64,
    workers: usize,
    stride: Option<u64>,
    record_events: bool,
) -> Vec<std::result::Result<PathSummary, PathError>> {
    let spec = PathSpec::new(&cfg.model, &cfg.initial, cfg.horizon)
        .rules(&cfg.simulate.portfolios)
        .record_events(record_events)
        .sample_every(stride);
    map_paths(paths, workers, |p| simulate_path(&spec, &mut path_rng(cfg.seed, p)))
}

fn simulate_with(cfg: &ScenarioConfig, paths: u64, workers: usize) -> Simulation {
    let start = Instant::now();
    let rules = &cfg.simulate.portfolios;
    let results = run_paths(cfg, paths, workers, Some(cfg.output.sample_stride), cfg.output.events);
    let mut series = report::series_header(rules);
    let mut table = report::paths_header(rules);
    let mut events = String::new();
    let mut audit = Audit::default();
    let mut report = RunReport::new(Command::Simulate.name(), cfg.seed, paths);
    for (p, r) in results.iter().enumerate() {
        let p = p as u64;
        match r {
            Ok(s) => {
                report::append_series(&mut series, p, s);
                report::append_path_row(&mut table, p, s);
                for e in &s.events {
                    events.push_str(&e.to_json_line(Some(p)));
                    events.push('\n');
                }
                audit.merge(&s.audit);
            }
            Err(e) => {
                report::append_failed_path_row(&mut table, p, e.tag(), rules.len());
                report.failures.push(PathFailure { path: p, kind: e.tag().into(), message: e.to_string() });
            }
        }
    }
    report.checks = audit_checks(&audit, &cfg.model, paths);
    report.audit = Some(audit);
    report.wall_clock_secs = start.elapsed().as_secs_f64();
    Simulation { report, series, paths: table, events }
}

/// Runs every path of the scenario and collects the series, per-path table,
/// event log and the pathwise invariant checks.
pub fn simulate(cfg: &ScenarioConfig) -> Simulation {
    simulate_with(cfg, cfg.paths, cfg.workers)
}

/// Diversity, conservation, merger and market-identity checks from an
/// aggregated audit.
pub fn audit_checks(a: &Audit, params: &ModelParams, paths: u64) -> Vec<CheckRow> {
    let n = format!("paths={paths}, dt={}, delta={}", params.dt, params.delta);
    let overshoot_cap = 5.0 * params.sigma_max() * params.dt.sqrt();
    let overshoot = if a.splits == 0 { 0.0 } else { a.max_split_overshoot };
    vec![
        CheckRow::new("diversity: max weight", &n, a.max_weight, 0.0, params.threshold(), a.max_weight <= params.threshold()),
        CheckRow::new(
            "diversity: split overshoot (log-weight)",
            format!("{n}, splits={}", a.splits),
            overshoot,
            0.0,
            overshoot_cap,
            overshoot <= overshoot_cap,
        ),
        CheckRow::new("conservation: capitalization (ulps)", &n, a.max_cap_drift_ulps, 0.0, 4.0, a.max_cap_drift_ulps <= 4.0),
        CheckRow::new(
            "conservation: allocation across transfers (ulps)",
            &n,
            a.max_alloc_drift_ulps,
            0.0,
            4.0,
            a.max_alloc_drift_ulps <= 4.0,
        ),
        CheckRow::new("conservation: wealth jumps at events", &n, a.wealth_jumps as f64, 0.0, 0.0, a.wealth_jumps == 0),
        CheckRow::new(
            "conservation: market weights after transfer",
            &n,
            a.max_market_transfer_err,
            0.0,
            1e-12,
            a.max_market_transfer_err <= 1e-12,
        ),
        CheckRow::new(
            "mergers: suppressed with N >= 3",
            format!("{n}, mergers={}", a.mergers),
            a.suppressed_mergers_n3 as f64,
            0.0,
            0.0,
            a.suppressed_mergers_n3 == 0,
        ),
        CheckRow::new(
            "market identity: |V C(0)/C(T) - 1|",
            &n,
            a.max_market_identity_err,
            0.0,
            1e-9,
            a.max_market_identity_err <= 1e-9,
        ),
    ]
}

/// Top weight reaching the threshold before an exponential time, over the
/// (λ, δ) grid, against the closed-form bound.
pub fn lemma_checks(cfg: &ScenarioConfig) -> Result<Vec<CheckRow>> {
    let l = &cfg.bounds.lemma;
    let mut rows = Vec::new();
    let rest = (1.0 - l.top_weight) / (l.n - 1) as f64;
    let mut weights = vec![rest; l.n];
    weights[0] = l.top_weight;
    let initial = MarketState::from_weights(&weights)?;
    for &delta in &l.deltas {
        let params = ModelParams::uniform(l.n.max(3), 0.0, l.vol, delta, 0.3).with_dt(l.dt);
        for &lambda in &l.lambdas {
            let tag = format!("lemma:{lambda}:{delta}");
            let e = estimate_split_before_clock(&params, &initial, lambda, l.max_time, l.paths, derive_seed(cfg.seed, &tag), cfg.workers)?;
            let bound = lemma_bound(l.top_weight, delta, params.sigma_max_at(l.n), lambda);
            let (p, se) = (e.hits.estimate(), e.hits.stderr());
            rows.push(CheckRow::new(
                "split before clock <= bound",
                format!("N={}, mu1={}, lambda={lambda}, delta={delta}, paths={}, censored={}", l.n, l.top_weight, l.paths, e.censored),
                p,
                se,
                bound,
                p <= bound + 3.0 * se,
            ));
        }
    }
    Ok(rows)
}

/// Closed-form reflected-BM hitting probability against the Monte Carlo oracle.
pub fn rbm_checks(cfg: &ScenarioConfig) -> Result<Vec<CheckRow>> {
    let r = &cfg.bounds.rbm;
    let mut rows = Vec::new();
    for (k, &[x, y, lambda, sigma]) in r.points.iter().enumerate() {
        let exact = rbm_hit_before_exp(x, y, lambda, sigma)?;
        let oracle = ReflectedBm::new(x, y, 2.0 * sigma * sigma, lambda, r.dt)?;
        let est = oracle.estimate(r.paths, derive_seed(cfg.seed, &format!("rbm:{k}")), cfg.workers);
        let (p, se) = (est.estimate(), est.stderr());
        rows.push(CheckRow::new(
            "reflected BM formula vs oracle",
            format!("x={x}, y={y}, lambda={lambda}, sigma={sigma}, paths={}, dt={}", r.paths, r.dt),
            p,
            se,
            exact,
            (p - exact).abs() <= 3.0 * se,
        ));
    }
    Ok(rows)
}

/// Frequency of a second split right after an upward jump, per level.
pub fn double_jump_checks(cfg: &ScenarioConfig) -> Result<Vec<CheckRow>> {
    let d = &cfg.bounds.double_jump;
    let n_max = d.levels.iter().copied().max().unwrap_or(3).max(3) + 1;
    let params = ModelParams::uniform(n_max, 0.0, d.vol, d.delta, d.eps0).with_clock(d.c, d.alpha);
    let mut rows = Vec::new();
    for &n in &d.levels {
        let e = estimate_double_jump(&params, n, d.max_time, d.paths, derive_seed(cfg.seed, &format!("jump:{n}")), cfg.workers)?;
        let (p, se) = (e.splits.estimate(), e.splits.stderr());
        rows.push(CheckRow::new(
            "double upward jump <= p_N",
            format!("N={n}, lambda_N={}, delta={}, eps0={}, paths={}, censored={}", e.lambda_n, d.delta, d.eps0, d.paths, e.censored),
            p,
            se,
            e.bound,
            p <= e.bound + 3.0 * se && e.bound < 0.5,
        ));
    }
    Ok(rows)
}

/// The explosion-proof bound terms decrease along `u = 32 L²`.
pub fn explosion_term_check(cfg: &ScenarioConfig) -> Result<CheckRow> {
    let d = &cfg.bounds.double_jump;
    let delta0 = 1.0 - (1.0 - d.delta) * (1.0 - d.eps0);
    let mut sums = Vec::new();
    for l in [10u64, 20, 40] {
        let t = explosion_bound_terms(&ExplosionInputs {
            l,
            u: 32.0 * (l * l) as f64,
            horizon: 1.0,
            c: 4.0,
            alpha: 2.0,
            delta: d.delta,
            delta0,
            sigma: d.vol,
        })?;
        sums.push(t.sum());
    }
    let ok = sums.windows(2).all(|w| w[1] < w[0]);
    Ok(CheckRow::new(
        "explosion bound terms decreasing in L",
        format!("L=10,20,40, u=32L^2, c=4, alpha=2, sums={sums:?}"),
        sums[2],
        0.0,
        sums[0],
        ok,
    ))
}

/// Tail of the maximal company count and the explosion guard.
pub fn tail_checks(cfg: &ScenarioConfig) -> Result<Vec<CheckRow>> {
    let t = &cfg.tail;
    let params = ModelParams::uniform(t.n_max, 0.0, t.vol, t.delta, t.eps0).with_clock(t.c, t.alpha).with_dt(cfg.model.dt);
    let initial = MarketState::equal(t.initial_n, 1.0)?;
    let r = tail_of_max_count(&params, &initial, t.horizon, &t.u_grid, t.z, t.paths, derive_seed(cfg.seed, "tail"), cfg.workers)?;
    let inputs = format!("c={}, alpha={}, T={}, sigma={}, delta={}, N0={}, paths={}", t.c, t.alpha, t.horizon, t.vol, t.delta, t.initial_n, t.paths);
    let mut rows: Vec<CheckRow> = r
        .rows
        .iter()
        .map(|row| {
            let p = row.tail.estimate();
            CheckRow::new(
                format!("tail statistic -log p(u)/u at u={}", row.u),
                format!("{inputs}, exceed={}, ci=[{}, {}]", row.tail.successes, row.stat_lo, row.stat_hi),
                row.stat,
                row.tail.stderr() / (p * row.u),
                f64::NAN,
                true,
            )
        })
        .collect();
    rows.push(CheckRow::new(
        "tail statistic nondecreasing over separated points",
        format!("{inputs}, compared_pairs={}, decreases={:?}", r.compared_pairs, r.decreases),
        r.decreases.len() as f64,
        0.0,
        0.0,
        r.decreases.is_empty() && r.compared_pairs > 0,
    ));
    rows.push(CheckRow::new(
        "explosion guard never fires",
        format!("{inputs}, n_max={}, overflow={}", t.n_max, r.overflow),
        r.guard_fired as f64,
        0.0,
        0.0,
        r.guard_fired == 0 && r.overflow == 0,
    ));
    Ok(rows)
}

/// `E[Z] = 1` and `E[Z V^π] = 1` on the scenario, plus the single-name
/// check that separates the two θ conventions.
pub fn martingale_checks(cfg: &ScenarioConfig) -> Result<Vec<CheckRow>> {
    let m = &cfg.martingale;
    let k = m.k_se;
    let seed = derive_seed(cfg.seed, "martingale");
    let rep = martingale_test(&cfg.model, &cfg.initial, &m.portfolios, m.horizon, m.paths, seed, cfg.workers)?;
    let inputs = format!("theta={}, T={}, paths={}, failed={}", rep.mode, m.horizon, m.paths, rep.failed_paths);
    let mut rows = vec![CheckRow::new(
        "E[Z(T)] = 1",
        &inputs,
        rep.density.mean,
        rep.density.stderr,
        1.0,
        rep.density.within(1.0, k) && rep.failed_paths == 0,
    )];
    for w in &rep.wealth {
        rows.push(CheckRow::new(
            format!("E[Z(T) V(T)] = 1 for {}", w.rule),
            &inputs,
            w.estimate.mean,
            w.estimate.stderr,
            1.0,
            w.estimate.within(1.0, k) && rep.failed_paths == 0,
        ));
    }
    rows.push(CheckRow::new(
        "quadratic variation within C^2 T max N",
        &inputs,
        rep.qv_bound_breaches as f64,
        0.0,
        0.0,
        rep.qv_bound_breaches == 0,
    ));

    let n = m.single_name_n;
    let base = ModelParams::uniform(n.max(3), 0.0, 1.0, cfg.model.delta, cfg.model.eps0).with_dt(cfg.model.dt);
    let initial = MarketState::equal(n, 1.0)?;
    let seed = derive_seed(cfg.seed, "single-name");
    for mode in [ThetaMode::Martingale, ThetaMode::Paper] {
        let params = base.clone().with_theta_mode(mode);
        let e = single_name_check(&params, &initial, 0, m.horizon, m.single_name_paths, seed, cfg.workers)?;
        let hit = e.within(1.0, k);
        let (name, pass) = match mode {
            ThetaMode::Martingale => ("single-name E[Z X(T)/X(0)] = 1 (martingale theta)", hit),
            ThetaMode::Paper => ("single-name E[Z X(T)/X(0)] != 1 (paper theta rejected)", !hit),
        };
        rows.push(CheckRow::new(
            name,
            format!("g=0, sigma=1, N={n}, events off, T={}, paths={}", m.horizon, m.single_name_paths),
            e.mean,
            e.stderr,
            1.0,
            pass,
        ));
    }
    Ok(rows)
}

/// Simulates with one worker and with `verify.determinism_workers`, and
/// compares every output byte.
pub fn determinism_check(cfg: &ScenarioConfig) -> CheckRow {
    let v = &cfg.verify;
    let a = simulate_with(cfg, v.determinism_paths, 1);
    let b = simulate_with(cfg, v.determinism_paths, v.determinism_workers);
    let same = a.series == b.series && a.paths == b.paths && a.events == b.events && a.report.checks_csv() == b.report.checks_csv();
    let bytes = a.series.len() + a.paths.len() + a.events.len();
    CheckRow::new(
        "determinism: workers 1 vs many",
        format!("paths={}, workers=1 vs {}, bytes={bytes}", v.determinism_paths, v.determinism_workers),
        if same { 0.0 } else { 1.0 },
        0.0,
        0.0,
        same,
    )
}

pub fn bound_check(cfg: &ScenarioConfig) -> Result<RunReport> {
    let start = Instant::now();
    let mut report = RunReport::new(Command::BoundCheck.name(), cfg.seed, cfg.bounds.lemma.paths);
    report.checks.extend(lemma_checks(cfg)?);
    report.checks.extend(rbm_checks(cfg)?);
    report.checks.extend(double_jump_checks(cfg)?);
    report.checks.push(explosion_term_check(cfg)?);
    report.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

pub fn martingale(cfg: &ScenarioConfig) -> Result<RunReport> {
    let start = Instant::now();
    let mut report = RunReport::new(Command::Martingale.name(), cfg.seed, cfg.martingale.paths);
    report.checks = martingale_checks(cfg)?;
    report.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

pub fn tail(cfg: &ScenarioConfig) -> Result<RunReport> {
    let start = Instant::now();
    let mut report = RunReport::new(Command::Tail.name(), cfg.seed, cfg.tail.paths);
    report.checks = tail_checks(cfg)?;
    report.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

/// The pathwise audit run used by `verify`: no series, no event log.
pub fn audit_run(cfg: &ScenarioConfig) -> (Audit, Vec<PathFailure>) {
    let results = run_paths(cfg, cfg.verify.audit_paths, cfg.workers, None, false);
    let mut audit = Audit::default();
    let mut failures = Vec::new();
    for (p, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) => audit.merge(&s.audit),
            Err(e) => failures.push(PathFailure { path: p as u64, kind: e.tag().into(), message: e.to_string() }),
        }
    }
    (audit, failures)
}

/// Runs every acceptance check. A failing check never stops the others.
pub fn verify(cfg: &ScenarioConfig) -> Result<RunReport> {
    let start = Instant::now();
    let mut report = RunReport::new(Command::Verify.name(), cfg.seed, cfg.verify.audit_paths);
    let (audit, failures) = audit_run(cfg);
    report.checks.extend(audit_checks(&audit, &cfg.model, cfg.verify.audit_paths));
    report.checks.push(CheckRow::new(
        "audit run: no aborted paths",
        format!("paths={}", cfg.verify.audit_paths),
        failures.len() as f64,
        0.0,
        0.0,
        failures.is_empty(),
    ));
    report.audit = Some(audit);
    report.failures = failures;
    report.checks.extend(lemma_checks(cfg)?);
    report.checks.extend(rbm_checks(cfg)?);
    report.checks.extend(double_jump_checks(cfg)?);
    report.checks.push(explosion_term_check(cfg)?);
    report.checks.extend(tail_checks(cfg)?);
    report.checks.extend(martingale_checks(cfg)?);
    report.checks.push(determinism_check(cfg));
    report.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok(report)
}
