//! Model coefficients and their admissibility checks.

use std::fmt;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// Per-rank coefficient table: one row for each company count `N = 2..=n_max`,
/// row `N` holding the values for ranks `0..N` (rank 0 is the largest company).
#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    rows: Vec<Vec<f64>>,
}

impl RankTable {
    pub fn constant(n_max: usize, value: f64) -> Self {
        Self::linear(n_max, value, 0.0)
    }

    /// `value(N, k) = base + slope · k / (N − 1)` for rank `k = 0..N`.
    pub fn linear(n_max: usize, base: f64, slope: f64) -> Self {
        let rows = (2..=n_max.max(2))
            .map(|n| {
                (0..n)
                    .map(|k| base + slope * k as f64 / (n - 1) as f64)
                    .collect()
            })
            .collect();
        Self { rows }
    }

    /// Explicit rows, the first for `N = 2`. Row `r` must have `r + 2` entries.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(contract("coefficient table needs at least the N = 2 row"));
        }
        for (r, row) in rows.iter().enumerate() {
            if row.len() != r + 2 {
                return Err(contract(format!(
                    "coefficient row for N = {} has {} entries",
                    r + 2,
                    row.len()
                )));
            }
        }
        Ok(Self { rows })
    }

    /// Largest company count the table covers.
    pub fn max_n(&self) -> usize {
        self.rows.len() + 1
    }

    #[inline]
    pub fn get(&self, n: usize, rank: usize) -> f64 {
        self.rows[n - 2][rank]
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.rows[n - 2]
    }

    pub fn rows(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.rows.iter().enumerate().map(|(r, row)| (r + 2, row.as_slice()))
    }

    fn fold(&self, init: f64, f: fn(f64, f64) -> f64) -> f64 {
        self.rows.iter().flatten().copied().fold(init, f)
    }
}

/// Law of the split fraction ξ, always supported on `[1/2, 1 − ε₀]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "lowercase", deny_unknown_fields)]
pub enum SplitDistribution {
    #[default]
    Uniform,
    /// Point mass at 1/2.
    Half,
    /// `1/2 + (1/2 − ε₀) · B` with `B ~ Beta(a, b)`.
    Beta { a: f64, b: f64 },
}

/// A split fraction known to lie in `[1/2, 1 − ε₀]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitDraw(f64);

impl SplitDraw {
    pub fn new(xi: f64, eps0: f64) -> Result<Self> {
        if (0.5..=1.0 - eps0).contains(&xi) {
            Ok(Self(xi))
        } else {
            Err(contract(format!("split fraction {xi} outside [1/2, {}]", 1.0 - eps0)))
        }
    }

    pub fn xi(self) -> f64 {
        self.0
    }
}

impl SplitDistribution {
    pub fn sample<R: Rng + ?Sized>(&self, eps0: f64, rng: &mut R) -> SplitDraw {
        let width = 0.5 - eps0;
        let xi = match *self {
            SplitDistribution::Uniform => 0.5 + width * rng.random::<f64>(),
            SplitDistribution::Half => 0.5,
            SplitDistribution::Beta { a, b } => {
                let beta = Beta::new(a, b).expect("beta parameters validated at load");
                0.5 + width * beta.sample(rng)
            }
        };
        SplitDraw(xi.clamp(0.5, 1.0 - eps0))
    }
}

/// Which market price of risk drives the Girsanov density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaMode {
    /// θ = g / σ: removes the drift of the log-capitalizations only.
    Paper,
    /// θ = (g + σ²/2) / σ: removes the drift of the returns dX/X.
    #[default]
    Martingale,
}

impl fmt::Display for ThetaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThetaMode::Paper => "paper",
            ThetaMode::Martingale => "martingale",
        })
    }
}

/// The admissibility conditions a parameter set can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    /// The top-ranked company has the smallest drift.
    DriftOrdering,
    /// Volatilities bounded above and away from zero, δ ∈ (0, 1/6).
    CoefficientBounds,
    /// Split fractions supported on `[1/2, 1 − ε₀]`, ε₀ ∈ (0, 1/2).
    SplitSupport,
    /// Clock rates `c · N^α` with `c ≥ 0`, `α > 0`.
    ClockGrowth,
    /// Settings outside the model assumptions (step size, caps, initial state).
    Numerics,
}

impl Assumption {
    pub fn label(self) -> &'static str {
        match self {
            Assumption::DriftOrdering => "Assumption 1 (drift ordering)",
            Assumption::CoefficientBounds => "Assumption 2 (coefficient bounds)",
            Assumption::SplitSupport => "Assumption 3 (split support)",
            Assumption::ClockGrowth => "Assumption 5 (merger clock growth)",
            Assumption::Numerics => "numerical settings",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub assumption: Assumption,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violated: {}", self.assumption.label(), self.message)
    }
}

pub const DEFAULT_DT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Log-capitalization drift per (N, rank), in 1/time.
    pub drift: RankTable,
    /// Log-capitalization volatility per (N, rank), in 1/√time.
    pub vol: RankTable,
    /// Splits trigger at market weight `1 − delta`.
    pub delta: f64,
    pub eps0: f64,
    pub split: SplitDistribution,
    pub clock_c: f64,
    pub clock_alpha: f64,
    /// Largest admissible company count; exceeding it aborts the path.
    pub n_max: usize,
    pub dt: f64,
    pub theta_mode: ThetaMode,
}

impl ModelParams {
    /// Constant coefficients across all ranks, uniform split law, default step.
    pub fn uniform(n_max: usize, drift: f64, vol: f64, delta: f64, eps0: f64) -> Self {
        Self {
            drift: RankTable::constant(n_max, drift),
            vol: RankTable::constant(n_max, vol),
            delta,
            eps0,
            split: SplitDistribution::Uniform,
            clock_c: 0.0,
            clock_alpha: 2.0,
            n_max,
            dt: DEFAULT_DT,
            theta_mode: ThetaMode::Martingale,
        }
    }

    pub fn with_clock(mut self, c: f64, alpha: f64) -> Self {
        self.clock_c = c;
        self.clock_alpha = alpha;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_theta_mode(mut self, mode: ThetaMode) -> Self {
        self.theta_mode = mode;
        self
    }

    /// Split threshold `1 − δ` on the market weight.
    #[inline]
    pub fn threshold(&self) -> f64 {
        1.0 - self.delta
    }

    /// `δ₀ = 1 − (1 − δ)(1 − ε₀)`: right after an exact-boundary split, every
    /// weight is at most `1 − δ₀`.
    pub fn delta0(&self) -> f64 {
        1.0 - (1.0 - self.delta) * (1.0 - self.eps0)
    }

    pub fn sigma_min(&self) -> f64 {
        self.vol.fold(f64::INFINITY, f64::min)
    }

    pub fn sigma_max(&self) -> f64 {
        self.vol.fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest volatility among the ranks of an `n`-company market.
    pub fn sigma_max_at(&self, n: usize) -> f64 {
        self.vol.row(n).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Every violated condition, in a fixed order. Empty means admissible.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |assumption, message: String| out.push(Violation { assumption, message });

        if self.drift.max_n() < self.n_max || self.vol.max_n() < self.n_max {
            push(
                Assumption::Numerics,
                format!("coefficient tables must cover N = 2..={}", self.n_max),
            );
        }
        for (n, row) in self.drift.rows() {
            if row.iter().any(|g| !g.is_finite()) {
                push(Assumption::CoefficientBounds, format!("drift row N = {n} has non-finite entries"));
                continue;
            }
            let rest = row[1..].iter().copied().fold(f64::INFINITY, f64::min);
            if row[0] > rest {
                push(
                    Assumption::DriftOrdering,
                    format!("g(N={n}, top) = {} exceeds min over lower ranks = {rest}", row[0]),
                );
            }
        }
        for (n, row) in self.vol.rows() {
            if let Some(s) = row.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
                push(
                    Assumption::CoefficientBounds,
                    format!("volatility row N = {n} has entry {s}; need 0 < σ < ∞"),
                );
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0 / 6.0) {
            push(
                Assumption::CoefficientBounds,
                format!("δ ∈ (0, 1/6) required, got {}", self.delta),
            );
        }
        if !(self.eps0 > 0.0 && self.eps0 < 0.5) {
            push(Assumption::SplitSupport, format!("ε₀ ∈ (0, 1/2) required, got {}", self.eps0));
        }
        if let SplitDistribution::Beta { a, b } = self.split {
            if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                push(Assumption::SplitSupport, format!("Beta({a}, {b}) split law needs a, b > 0"));
            }
        }
        if !(self.clock_c >= 0.0 && self.clock_c.is_finite()) {
            push(Assumption::ClockGrowth, format!("clock constant c ≥ 0 required, got {}", self.clock_c));
        }
        if !(self.clock_alpha > 0.0 && self.clock_alpha.is_finite()) {
            push(Assumption::ClockGrowth, format!("clock exponent α > 0 required, got {}", self.clock_alpha));
        }
        if self.n_max < 3 {
            push(Assumption::Numerics, format!("n_max ≥ 3 required, got {}", self.n_max));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            push(Assumption::Numerics, format!("dt > 0 required, got {}", self.dt));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}
