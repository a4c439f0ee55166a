use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fleetroute::io::{self, ProblemFile, RunManifest, SolutionFile};
use fleetroute::lshaped::{run_lshaped, LShapedOptions};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fleetroute"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    let out = bin().current_dir(dir).args(args).output().expect("binary runs");
    if !out.status.success() {
        eprintln!(
            "fleetroute {args:?} -> {:?}\nstdout: {}\nstderr: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        );
    }
    out
}

fn ok(dir: &Path, args: &[&str]) {
    assert_eq!(run(dir, args).status.code(), Some(0), "{args:?}");
}

fn manifest_of(path: &Path) -> RunManifest {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    io::read_json(&PathBuf::from(s), "manifest").unwrap()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let out = bin().args(["simulate", "model.json", "--days", "3"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

/// A small demand model written through the pipeline itself.
fn toy_model(dir: &Path) {
    ok(
        dir,
        &[
            "generate", "--toy", "--history", "history.csv", "--history-days", "120", "--active", "3",
            "--order-size", "4", "-o", "problem.json",
        ],
    );
    ok(dir, &["fit", "history.csv", "-o", "model.json"]);
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    toy_model(d);
    ok(d, &["simulate", "model.json", "--days", "50", "--seed", "7", "-o", "a.json"]);
    ok(d, &["simulate", "model.json", "--days", "50", "--seed", "7", "-o", "b.json"]);
    ok(d, &["simulate", "model.json", "--days", "50", "--seed", "8", "-o", "c.json"]);
    let a = std::fs::read(d.join("a.json")).unwrap();
    let b = std::fs::read(d.join("b.json")).unwrap();
    let c = std::fs::read(d.join("c.json")).unwrap();
    // The envelopes name different manifests, so compare past that line.
    let body = |x: &[u8]| {
        String::from_utf8_lossy(x)
            .lines()
            .filter(|l| !l.contains("\"manifest\""))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(body(&a), body(&b));
    assert_ne!(body(&a), body(&c));
    assert_eq!(manifest_of(&d.join("a.json")).seed, Some(7));
}

#[test]
fn simulate_with_fixed_manifest_name_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    toy_model(d);
    std::fs::create_dir(d.join("x")).unwrap();
    std::fs::create_dir(d.join("y")).unwrap();
    for sub in ["x", "y"] {
        ok(
            d,
            &[
                "simulate", "model.json", "--days", "30", "--seed", "7", "-o", &format!("{sub}/sample.json"),
            ],
        );
    }
    assert_eq!(
        std::fs::read(d.join("x/sample.json")).unwrap(),
        std::fs::read(d.join("y/sample.json")).unwrap()
    );
}

fn write_toy_scenarios(d: &Path) {
    let text = r#"{
  "format_version": 1,
  "kind": "sample",
  "data": {
    "days": [
      {"id": "busy", "orders": {"C01": 6, "C02": 4, "C03": 7, "C05": 3}, "probability": 0.6},
      {"id": "quiet", "orders": {"C02": 5, "C04": 8, "C06": 2}, "probability": 0.4}
    ]
  }
}
"#;
    std::fs::write(d.join("scenarios.json"), text).unwrap();
}

#[test]
fn solve_on_toy_closes_the_gap() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "--toy", "-o", "problem.json"]);
    write_toy_scenarios(d);
    ok(d, &["solve", "problem.json", "scenarios.json", "--eps", "1e-4", "-o", "solution.json"]);
    let sol: SolutionFile = io::read_json(&d.join("solution.json"), "solution").unwrap();
    assert!(sol.gap <= 1e-4, "gap {}", sol.gap);

    // The plain method, run through the library, agrees.
    let problem = ProblemFile::read(&d.join("problem.json")).unwrap();
    let inst = problem.instance().unwrap();
    let days = io::read_days(&d.join("scenarios.json")).unwrap();
    let plain = run_lshaped(&inst, &days, &LShapedOptions::all_off()).unwrap();
    assert!((plain.objective() - sol.objective).abs() <= 1e-4 * sol.objective.abs() + 1e-6);

    let m = manifest_of(&d.join("solution.json"));
    for phase in ["warm_start", "facility_location", "set_covering", "route_generators"] {
        assert!(m.timings.contains_key(phase), "{phase} missing");
    }
    let sum: f64 = m.timings.values().sum();
    assert!(m.timings.values().all(|&t| t >= 0.0));
    assert!((sum - m.wall_seconds).abs() <= 0.05 * m.wall_seconds + 1e-3, "{sum} vs {}", m.wall_seconds);
    assert_eq!(m.input_hashes.len(), 2);
}

#[test]
fn iteration_budget_exits_with_partial_result() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "--toy", "-o", "problem.json"]);
    write_toy_scenarios(d);
    let out = run(d, &["solve", "problem.json", "scenarios.json", "--max-iterations", "1", "-o", "s.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(d.join("s.json").exists());
}

#[test]
fn malformed_inputs_report_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("h.csv"), "date,node,units\n2024-01-01,C01,3\n2024-01-02,C02,lots\n").unwrap();
    let out = run(d, &["fit", "h.csv", "-o", "m.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("h.csv") && err.contains("line 3"), "{err}");
    assert!(!err.contains("panicked"));

    std::fs::write(d.join("p.json"), "{\n  \"format_version\": 1,\n  \"kind\": \"problem\",\n  \"data\": {\"network\": 3}\n}\n").unwrap();
    write_toy_scenarios(d);
    let out = run(d, &["solve", "p.json", "scenarios.json", "-o", "s.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("p.json") && err.contains("line 4"), "{err}");
}

#[test]
fn pipeline_stages_compose() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    toy_model(d);
    ok(d, &["simulate", "model.json", "--days", "200", "--seed", "3", "-o", "sample.json"]);
    ok(
        d,
        &[
            "select-scenarios", "sample.json", "--bands", "80-95,95-100", "--districts", "2", "--problem",
            "problem.json", "-o", "scenarios.json",
        ],
    );
    ok(d, &["solve", "problem.json", "scenarios.json", "-o", "solution.json"]);
    ok(d, &["simulate", "model.json", "--days", "12", "--seed", "11", "-o", "days.json"]);
    ok(d, &["evaluate", "solution.json", "days.json", "--mode", "full_cg", "-o", "full"]);
    ok(d, &["evaluate", "solution.json", "days.json", "--mode", "petal", "-o", "petal"]);
    ok(d, &["compare", "full.json", "petal.json", "-o", "cmp.json"]);
    let days = io::read_days(&d.join("days.json")).unwrap();
    ok(d, &["route-day", "solution.json", "days.json", "--day-id", &days[0].id, "-o", "routes.json"]);
    assert!(d.join("full.csv").exists());
    let csv = std::fs::read_to_string(d.join("full.csv")).unwrap();
    assert_eq!(csv.lines().count(), days.len() + 1);
    let report: fleetroute::eval::EvaluationReport = io::read_json(&d.join("full.json"), "report").unwrap();
    let petal: fleetroute::eval::EvaluationReport = io::read_json(&d.join("petal.json"), "report").unwrap();
    for (f, p) in report.days.iter().zip(&petal.days) {
        assert!(f.value <= p.value + 1e-6);
    }
    for out in ["sample.json", "scenarios.json", "solution.json", "full.json", "routes.json", "cmp.json"] {
        let text = std::fs::read_to_string(d.join(out)).unwrap();
        assert!(text.contains("\"manifest\""), "{out} does not reference its manifest");
        let m = manifest_of(&d.join(out));
        let sum: f64 = m.timings.values().sum();
        assert!((sum - m.wall_seconds).abs() <= 0.05 * m.wall_seconds + 1e-3, "{out}: {sum} vs {}", m.wall_seconds);
    }
}

#[test]
fn evaluate_rejects_a_different_network() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "--toy", "-o", "problem.json"]);
    write_toy_scenarios(d);
    ok(d, &["solve", "problem.json", "scenarios.json", "-o", "solution.json"]);
    ok(d, &["generate", "--clients", "6", "--depots", "2", "--seed", "99", "-o", "other.json"]);
    let out = run(d, &["evaluate", "solution.json", "scenarios.json", "--problem", "other.json", "-o", "r"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("different network"));
}
