use splitmerge::config::parse_config;
use splitmerge::exec::path_rng;
use splitmerge::harness;
use splitmerge::path::{simulate_path, PathSpec};
use splitmerge::{EventKind, MarketState, ModelParams};

const SCENARIO: &str = r#"
seed = 11
paths = 60
horizon = 1.0

[model]
n_max = 64
delta = 0.1
eps0 = 0.3
drift = { kind = "linear", base = 0.0, slope = 0.1 }
vol = { kind = "constant", value = 1.0 }
clock = { c = 1.0, alpha = 2.0 }

[initial]
n = 3

[output]
sample_stride = 50
"#;

#[test]
fn worker_count_does_not_change_output() {
    let mut cfg = parse_config(SCENARIO).unwrap();
    cfg.workers = 1;
    let a = harness::simulate(&cfg);
    cfg.workers = 8;
    let b = harness::simulate(&cfg);
    assert_eq!(a.series, b.series);
    assert_eq!(a.paths, b.paths);
    assert_eq!(a.events, b.events);
    assert!(a.report.all_pass());
}

#[test]
fn adding_paths_keeps_existing_paths() {
    let mut cfg = parse_config(SCENARIO).unwrap();
    let small = harness::simulate(&cfg);
    cfg.paths = 90;
    let large = harness::simulate(&cfg);
    assert!(large.series.starts_with(&small.series));
    assert!(large.paths.starts_with(&small.paths));
    assert!(large.events.starts_with(&small.events));
}

#[test]
fn outputs_are_written() {
    let cfg = parse_config(SCENARIO).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let sim = harness::simulate(&cfg);
    sim.write_to(dir.path()).unwrap();
    for f in ["series.csv", "paths.csv", "events.jsonl", "checks.csv", "report.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let series = std::fs::read_to_string(dir.path().join("series.csv")).unwrap();
    assert!(series.starts_with("path,t,n,mu_max,v_market,"));
    // 21 samples per path at stride 50 over 1000 steps.
    assert_eq!(series.lines().count(), 1 + 60 * 21);
    let events = std::fs::read_to_string(dir.path().join("events.jsonl")).unwrap();
    for line in events.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["path"].is_u64() && v["t"].is_f64());
    }
}

#[test]
fn without_clock_only_splits_occur() {
    let params = ModelParams::uniform(64, 0.0, 1.0, 0.05, 0.3).with_clock(0.0, 2.0);
    let initial = MarketState::equal(2, 1.0).unwrap();
    let spec = PathSpec::new(&params, &initial, 5.0).record_events(true);
    let mut seen = 0;
    for p in 0..40 {
        let s = simulate_path(&spec, &mut path_rng(21, p)).unwrap();
        assert!(s.events.iter().all(|e| matches!(e.kind, EventKind::Split { .. })));
        seen += s.events.len();
    }
    assert!(seen > 0);
}

#[test]
fn strong_clock_lowers_company_count() {
    let mean_max_n = |c: f64| {
        let params = ModelParams::uniform(64, 0.0, 1.5, 0.1, 0.3).with_clock(c, 2.0);
        let initial = MarketState::equal(3, 1.0).unwrap();
        let spec = PathSpec::new(&params, &initial, 2.0);
        let total: usize = (0..300).map(|p| simulate_path(&spec, &mut path_rng(8, p)).unwrap().max_n).sum();
        total as f64 / 300.0
    };
    assert!(mean_max_n(5.0) < mean_max_n(0.0));
}
