//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs on the shipped scenario at full size.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use splitmerge::config::{load_config, ScenarioConfig};
use splitmerge::harness;
use splitmerge::report::CheckRow;

fn shipped() -> ScenarioConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    load_config(&path).expect("shipped config loads")
}

fn select<'a>(rows: &'a [CheckRow], prefix: &str) -> Vec<&'a CheckRow> {
    rows.iter().filter(|r| r.name.starts_with(prefix)).collect()
}

fn timed(id: usize, title: &'static str, f: impl FnOnce() -> Vec<CheckRow>) -> Criterion {
    let start = Instant::now();
    let rows = f();
    Criterion { id, title, rows, secs: start.elapsed().as_secs_f64() }
}

struct Criterion {
    id: usize,
    title: &'static str,
    rows: Vec<CheckRow>,
    secs: f64,
}

impl Criterion {
    fn pass(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.pass)
    }
}

fn main() -> ExitCode {
    let cfg = shipped();
    assert_eq!(cfg.model.delta, 0.1);
    assert_eq!(cfg.model.dt, 1e-3);
    assert_eq!(cfg.horizon, 1.0);
    assert_eq!(cfg.verify.audit_paths, 10_000);

    let mut out: Vec<Criterion> = Vec::new();
    let start = Instant::now();
    let (audit, failures) = harness::audit_run(&cfg);
    let audit_secs = start.elapsed().as_secs_f64();
    let mut audit_rows = harness::audit_checks(&audit, &cfg.model, cfg.verify.audit_paths);
    audit_rows.push(CheckRow::new("audit run: no aborted paths", "", failures.len() as f64, 0.0, 0.0, failures.is_empty()));
    let pick = |prefix: &str| select(&audit_rows, prefix).into_iter().cloned().collect::<Vec<_>>();

    out.push(Criterion { id: 1, title: "diversity", rows: [pick("diversity"), pick("audit run")].concat(), secs: audit_secs });
    out.push(Criterion { id: 2, title: "conservation", rows: pick("conservation"), secs: 0.0 });
    out.push(Criterion { id: 3, title: "no suppressed mergers", rows: pick("mergers"), secs: 0.0 });
    out.push(Criterion { id: 4, title: "market-portfolio identity", rows: pick("market identity"), secs: 0.0 });
    out.push(timed(5, "split-before-clock bound", || harness::lemma_checks(&cfg).expect("lemma grid")));
    out.push(timed(6, "reflected-BM formula vs oracle", || harness::rbm_checks(&cfg).expect("rbm points")));
    out.push(timed(7, "double-jump bound", || harness::double_jump_checks(&cfg).expect("double jump")));
    out.push(timed(8, "non-explosion tail", || {
        let rows = harness::tail_checks(&cfg).expect("tail");
        rows.into_iter().filter(|r| !r.name.starts_with("tail statistic -log")).collect()
    }));
    out.push(timed(9, "martingale measure", || harness::martingale_checks(&cfg).expect("martingale")));
    out.push(timed(10, "determinism across worker counts", || vec![harness::determinism_check(&cfg)]));

    let mut all = true;
    for c in &out {
        for r in &c.rows {
            println!("    {}", r.summary_line());
        }
        println!(
            "criterion {:>2} {:<34} {} ({} checks, {:.1}s)",
            c.id,
            c.title,
            if c.pass() { "PASS" } else { "FAIL" },
            c.rows.len(),
            c.secs
        );
        all &= c.pass();
    }
    if all {
        println!("acceptance: all {} criteria passed", out.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAILED");
        ExitCode::FAILURE
    }
}
