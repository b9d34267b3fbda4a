//! Scenario files (TOML).
//!
//! ```toml
//! seed = 7
//! paths = 10000
//! horizon = 1.0
//!
//! [model]
//! n_max = 64
//! delta = 0.1
//! eps0 = 0.3
//! drift = { kind = "linear", base = 0.0, slope = 0.1 }
//! vol = { kind = "constant", value = 1.0 }
//! clock = { c = 1.0, alpha = 2.0 }
//!
//! [initial]
//! n = 3
//! ```
//!
//! Optional keys and sections (`workers`, `model.dt`, `model.split`,
//! `model.theta_mode`, `initial.caps`, `[output]`, `[simulate]`,
//! `[martingale]`, `[tail]`, `[bounds.*]`, `[verify]`) are listed on the
//! structs below with their defaults. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::params::{Assumption, ModelParams, RankTable, SplitDistribution, ThetaMode, Violation, DEFAULT_DT};
use crate::portfolio::PortfolioRule;
use crate::sde::MarketState;

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TableSpec {
    Constant { value: f64 },
    /// `base + slope · k / (N − 1)` for rank `k` (0 = largest).
    Linear { base: f64, slope: f64 },
    /// Explicit rows starting at `N = 2`.
    Rows { rows: Vec<Vec<f64>> },
}

impl TableSpec {
    fn build(&self, n_max: usize) -> Result<RankTable> {
        Ok(match self {
            TableSpec::Constant { value } => RankTable::constant(n_max, *value),
            TableSpec::Linear { base, slope } => RankTable::linear(n_max, *base, *slope),
            TableSpec::Rows { rows } => RankTable::from_rows(rows.clone())?,
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClockSpec {
    c: f64,
    alpha: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSpec {
    n_max: usize,
    delta: f64,
    eps0: f64,
    drift: TableSpec,
    vol: TableSpec,
    clock: ClockSpec,
    #[serde(default = "default_dt")]
    dt: f64,
    #[serde(default)]
    split: SplitDistribution,
    #[serde(default)]
    theta_mode: ThetaMode,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialSpec {
    /// Equal caps for `n` companies...
    n: Option<usize>,
    #[serde(default = "one")]
    cap: f64,
    /// ...or explicit caps.
    caps: Option<Vec<f64>>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Steps between time-series samples.
    pub sample_stride: u64,
    pub events: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), sample_stride: 100, events: true }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub portfolios: Vec<PortfolioRule>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { portfolios: default_rules() }
    }
}

fn default_rules() -> Vec<PortfolioRule> {
    vec![
        PortfolioRule::Cash,
        PortfolioRule::Market,
        PortfolioRule::EqualWeight,
        PortfolioRule::RankTilt { rank: 1, weight: 1.0 },
    ]
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MartingaleConfig {
    pub portfolios: Vec<PortfolioRule>,
    pub paths: u64,
    pub horizon: f64,
    /// Fixed-N check: g ≡ 0, σ ≡ 1, events off.
    pub single_name_n: usize,
    pub single_name_paths: u64,
    pub k_se: f64,
}

impl Default for MartingaleConfig {
    fn default() -> Self {
        Self {
            portfolios: default_rules(),
            paths: 100_000,
            horizon: 1.0,
            single_name_n: 3,
            single_name_paths: 100_000,
            k_se: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TailConfig {
    pub c: f64,
    pub alpha: f64,
    pub horizon: f64,
    pub n_max: usize,
    pub vol: f64,
    pub delta: f64,
    pub eps0: f64,
    pub initial_n: usize,
    pub u_grid: Vec<f64>,
    pub paths: u64,
    /// Normal quantile of the Wilson intervals.
    pub z: f64,
}

impl Default for TailConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            alpha: 2.0,
            horizon: 1.0,
            n_max: 64,
            vol: 2.0,
            delta: 0.15,
            eps0: 0.1,
            initial_n: 2,
            u_grid: vec![2.0, 3.0, 4.0, 5.0, 6.0],
            paths: 100_000,
            z: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LemmaConfig {
    pub n: usize,
    pub top_weight: f64,
    pub vol: f64,
    pub lambdas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub paths: u64,
    pub max_time: f64,
    pub dt: f64,
}

impl Default for LemmaConfig {
    fn default() -> Self {
        Self {
            n: 5,
            top_weight: 0.5,
            vol: 1.0,
            lambdas: vec![4.0, 16.0, 64.0],
            deltas: vec![0.05, 0.1, 0.15],
            paths: 100_000,
            max_time: 100.0,
            dt: DEFAULT_DT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RbmConfig {
    /// `[x̃, ỹ, λ, σ̄]` per point.
    pub points: Vec<[f64; 4]>,
    pub paths: u64,
    pub dt: f64,
}

impl Default for RbmConfig {
    fn default() -> Self {
        let y = (0.9f64).ln() - 0.5f64.ln();
        Self {
            points: vec![[0.2, y, 4.0, 1.0], [0.0, y, 4.0, 1.0], [0.4, y, 16.0, 1.0]],
            paths: 100_000,
            dt: DEFAULT_DT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DoubleJumpConfig {
    pub levels: Vec<usize>,
    pub c: f64,
    pub alpha: f64,
    pub delta: f64,
    pub eps0: f64,
    pub vol: f64,
    pub paths: u64,
    pub max_time: f64,
}

impl Default for DoubleJumpConfig {
    fn default() -> Self {
        Self { levels: vec![3, 4, 5], c: 2.0, alpha: 2.0, delta: 0.1, eps0: 0.3, vol: 1.0, paths: 10_000, max_time: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsConfig {
    pub lemma: LemmaConfig,
    pub rbm: RbmConfig,
    pub double_jump: DoubleJumpConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Paths for the diversity / conservation audit run.
    pub audit_paths: u64,
    /// Paths for the worker-count determinism comparison.
    pub determinism_paths: u64,
    /// Worker count compared against a single worker.
    pub determinism_workers: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { audit_paths: 10_000, determinism_paths: 200, determinism_workers: 8 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: u64,
    paths: u64,
    horizon: f64,
    #[serde(default)]
    workers: usize,
    model: ModelSpec,
    initial: InitialSpec,
    #[serde(default)]
    output: OutputConfig,
    #[serde(default)]
    simulate: SimulateConfig,
    #[serde(default)]
    martingale: MartingaleConfig,
    #[serde(default)]
    tail: TailConfig,
    #[serde(default)]
    bounds: BoundsConfig,
    #[serde(default)]
    verify: VerifyConfig,
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub paths: u64,
    pub horizon: f64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub model: ModelParams,
    pub initial: MarketState,
    pub output: OutputConfig,
    pub simulate: SimulateConfig,
    pub martingale: MartingaleConfig,
    pub tail: TailConfig,
    pub bounds: BoundsConfig,
    pub verify: VerifyConfig,
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// Parses and validates; on failure every violated condition is listed.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse(e.message().to_string()))?;
    let mut violations = Vec::new();
    let mut numerics = |message: String| violations.push(Violation { assumption: Assumption::Numerics, message });

    let m = &raw.model;
    let drift = m.drift.build(m.n_max);
    let vol = m.vol.build(m.n_max);
    if let Err(e) = &drift {
        numerics(format!("drift table: {e}"));
    }
    if let Err(e) = &vol {
        numerics(format!("volatility table: {e}"));
    }
    if !(raw.horizon > 0.0 && raw.horizon.is_finite()) {
        numerics(format!("horizon > 0 required, got {}", raw.horizon));
    }
    if raw.paths == 0 {
        numerics("paths must be positive".into());
    }
    let initial = match (&raw.initial.n, &raw.initial.caps) {
        (Some(n), None) => MarketState::equal(*n, raw.initial.cap),
        (None, Some(caps)) => MarketState::new(0.0, caps.clone()),
        _ => Err(Error::Parse("[initial] needs exactly one of `n` or `caps`".into())),
    };
    let initial = match initial {
        Ok(s) => {
            if s.n() > m.n_max {
                numerics(format!("initial N = {} exceeds n_max = {}", s.n(), m.n_max));
            }
            Some(s)
        }
        Err(Error::Parse(msg)) => return Err(Error::Parse(msg)),
        Err(e) => {
            numerics(format!("initial state: {e}"));
            None
        }
    };

    let model = match (drift, vol) {
        (Ok(drift), Ok(vol)) => {
            let model = ModelParams {
                drift,
                vol,
                delta: m.delta,
                eps0: m.eps0,
                split: m.split,
                clock_c: m.clock.c,
                clock_alpha: m.clock.alpha,
                n_max: m.n_max,
                dt: m.dt,
                theta_mode: m.theta_mode,
            };
            let mut all = model.violations();
            all.append(&mut violations);
            violations = all;
            Some(model)
        }
        _ => None,
    };
    if !violations.is_empty() {
        return Err(Error::Config(violations));
    }
    Ok(ScenarioConfig {
        seed: raw.seed,
        paths: raw.paths,
        horizon: raw.horizon,
        workers: raw.workers,
        model: model.expect("validated"),
        initial: initial.expect("validated"),
        output: raw.output,
        simulate: raw.simulate,
        martingale: raw.martingale,
        tail: raw.tail,
        bounds: raw.bounds,
        verify: raw.verify,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 1
paths = 10
horizon = 1.0

[model]
n_max = 16
delta = 0.1
eps0 = 0.3
drift = { kind = "linear", base = 0.0, slope = 0.1 }
vol = { kind = "constant", value = 1.0 }
clock = { c = 1.0, alpha = 2.0 }

[initial]
n = 3
"#;

    fn messages(text: &str) -> Vec<String> {
        match parse_config(text) {
            Err(Error::Config(v)) => v.iter().map(|x| x.to_string()).collect(),
            other => panic!("expected violations, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_accepted() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.initial.caps(), &[1.0, 1.0, 1.0]);
        assert_eq!(c.model.dt, DEFAULT_DT);
        assert_eq!(c.model.theta_mode, ThetaMode::Martingale);
        assert_eq!(c.model.drift.get(3, 2), 0.1);
        assert_eq!(c.workers, 0);
    }

    #[test]
    fn large_delta_cites_coefficient_assumption() {
        let m = messages(&MINIMAL.replace("delta = 0.1", "delta = 0.2"));
        assert_eq!(m.len(), 1);
        assert!(m[0].starts_with("Assumption 2"), "{m:?}");
        assert!(m[0].contains("δ ∈ (0, 1/6)"));
    }

    #[test]
    fn inverted_drift_cites_ordering_assumption() {
        let text = MINIMAL.replace(
            r#"drift = { kind = "linear", base = 0.0, slope = 0.1 }"#,
            r#"drift = { kind = "rows", rows = [[0.2, 0.1], [0.0, 0.1, 0.2]] }"#,
        ).replace("n_max = 16", "n_max = 3");
        let m = messages(&text);
        assert!(m.iter().any(|x| x.starts_with("Assumption 1")), "{m:?}");
    }

    #[test]
    fn every_violation_is_listed() {
        let text = MINIMAL
            .replace("delta = 0.1", "delta = 0.3")
            .replace("eps0 = 0.3", "eps0 = 0.7")
            .replace("alpha = 2.0", "alpha = -1.0")
            .replace("slope = 0.1", "slope = -0.1");
        let m = messages(&text);
        for tag in ["Assumption 1", "Assumption 2", "Assumption 3", "Assumption 5"] {
            assert!(m.iter().any(|x| x.starts_with(tag)), "{tag} missing from {m:?}");
        }
    }

    #[test]
    fn missing_key_is_a_parse_error() {
        let err = parse_config(&MINIMAL.replace("eps0 = 0.3\n", "")).unwrap_err();
        assert!(matches!(&err, Error::Parse(m) if m.contains("eps0")), "{err}");
        let err = parse_config(&MINIMAL.replace("n = 3", "")).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(parse_config(&format!("{MINIMAL}\nfoo = 1\n")), Err(Error::Parse(_))));
    }

    #[test]
    fn optional_sections_parse() {
        let text = format!(
            "{MINIMAL}\n[simulate]\nportfolios = [\"market\", \"rank:2:0.5\"]\n[tail]\nu_grid = [3.0, 4.0]\n[output]\nsample_stride = 10\n"
        );
        let c = parse_config(&text).unwrap();
        assert_eq!(c.simulate.portfolios[1], PortfolioRule::RankTilt { rank: 2, weight: 0.5 });
        assert_eq!(c.tail.u_grid, vec![3.0, 4.0]);
        assert_eq!(c.output.sample_stride, 10);
        assert!(c.output.events);
    }
}
