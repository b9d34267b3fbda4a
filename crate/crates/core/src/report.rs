//! Check rows, run reports and the flat-file outputs.
//!
//! File formats (header row, `.` decimals, `\n` line endings):
//!
//! * `series.csv`: `path,t,n,mu_max,v_market,v_pi[<rule>]...,z`
//! * `paths.csv`: `path,status,n_final,max_n,splits,mergers,v_market,v_pi[<rule>]...,log_z`
//! * `events.jsonl`: one JSON object per event, see [`crate::events::EventRecord::to_json_line`]
//! * `checks.csv`: `name,inputs,estimate,stderr,bound,pass`
//! * `report.json`: the whole [`RunReport`]

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::exec::RNG_ALGORITHM;
use crate::path::{Audit, PathSummary};
use crate::portfolio::PortfolioRule;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub name: String,
    pub inputs: String,
    pub estimate: f64,
    pub stderr: f64,
    /// Bound or target the estimate is compared with.
    pub bound: f64,
    pub pass: bool,
}

impl CheckRow {
    pub fn new(name: impl Into<String>, inputs: impl Into<String>, estimate: f64, stderr: f64, bound: f64, pass: bool) -> Self {
        Self { name: name.into(), inputs: inputs.into(), estimate, stderr, bound, pass }
    }

    /// One line for terminal output.
    pub fn summary_line(&self) -> String {
        format!(
            "{} {}: estimate {} (se {}) vs {} [{}]",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.estimate,
            self.stderr,
            self.bound,
            self.inputs
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathFailure {
    pub path: u64,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub seed: u64,
    pub rng: &'static str,
    pub paths: u64,
    pub checks: Vec<CheckRow>,
    pub failures: Vec<PathFailure>,
    pub audit: Option<Audit>,
    pub wall_clock_secs: f64,
}

impl RunReport {
    pub fn new(command: &str, seed: u64, paths: u64) -> Self {
        Self {
            command: command.to_string(),
            seed,
            rng: RNG_ALGORITHM,
            paths,
            checks: Vec::new(),
            failures: Vec::new(),
            audit: None,
            wall_clock_secs: 0.0,
        }
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn checks_csv(&self) -> String {
        let mut out = String::from("name,inputs,estimate,stderr,bound,pass\n");
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                csv_field(&c.name),
                csv_field(&c.inputs),
                c.estimate,
                c.stderr,
                c.bound,
                c.pass
            );
        }
        out
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("checks.csv"), self.checks_csv())?;
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(dir.join("report.json"), json + "\n")?;
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn rule_columns(rules: &[PortfolioRule]) -> String {
    rules.iter().map(|r| format!(",v_pi[{r}]")).collect()
}

pub fn series_header(rules: &[PortfolioRule]) -> String {
    format!("path,t,n,mu_max,v_market{},z\n", rule_columns(rules))
}

pub fn append_series(out: &mut String, path: u64, summary: &PathSummary) {
    for s in &summary.samples {
        let _ = write!(out, "{path},{},{},{},{}", s.t, s.n, s.mu_max, s.v_market);
        for v in &s.wealth {
            let _ = write!(out, ",{v}");
        }
        let _ = writeln!(out, ",{}", s.z);
    }
}

pub fn paths_header(rules: &[PortfolioRule]) -> String {
    format!("path,status,n_final,max_n,splits,mergers,v_market{},log_z\n", rule_columns(rules))
}

pub fn append_path_row(out: &mut String, path: u64, summary: &PathSummary) {
    let _ = write!(
        out,
        "{path},ok,{},{},{},{},{}",
        summary.final_state.n(),
        summary.max_n,
        summary.audit.splits,
        summary.audit.mergers,
        summary.v_market
    );
    for v in &summary.wealth {
        let _ = write!(out, ",{v}");
    }
    let _ = writeln!(out, ",{}", summary.girsanov.log_z());
}

pub fn append_failed_path_row(out: &mut String, path: u64, kind: &str, rules: usize) {
    let _ = write!(out, "{path},{kind},,,,,");
    for _ in 0..rules {
        out.push(',');
    }
    out.push_str(",\n");
}
