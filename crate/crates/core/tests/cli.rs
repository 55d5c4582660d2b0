use std::process::{Command, Output};

fn xbo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xbo"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("XBO_SCENARIOS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const CHICKEN: [&str; 13] = [
    "cook", "--mass", "50", "--lambda", "27", "--ywr", "0.9", "--t-egg", "12", "--t-yolk", "63", "--altitude", "5",
];

#[test]
fn cook_reports_time_and_grade() {
    let o = xbo(&CHICKEN);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let (t, grade) = out.trim().split_once(" s, ").unwrap();
    assert!((t.parse::<f64>().unwrap() - 278.8).abs() < 0.5, "{out}");
    assert_eq!(grade, "Perfect");

    let mut under = CHICKEN;
    under[6] = "0.5";
    let o = xbo(&under);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).ends_with("s, Undercooked\n"), "{}", stdout(&o));
}

#[test]
fn cook_rejects_bad_input() {
    let mut hot = CHICKEN;
    hot[10] = "89.9";
    hot[12] = "10000";
    let o = xbo(&hot);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("uncookable"));

    let mut high = CHICKEN;
    high[12] = "20000";
    let o = xbo(&high);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("altitude"));

    assert_eq!(xbo(&CHICKEN[..11]).status.code(), Some(2));
}

#[test]
fn sensitivity_json() {
    let mut args = CHICKEN.to_vec();
    args[0] = "sensitivity";
    args.push("--json");
    let o = xbo(&args);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let lambda = v["entries"].as_array().unwrap().iter().find(|e| e["param"] == "lambda").unwrap();
    assert!((lambda["effect"].as_f64().unwrap() - 0.1).abs() < 1e-12);

    args.pop();
    let table = stdout(&xbo(&args));
    // heading, column titles, one row per parameter
    assert_eq!(table.lines().count(), 8, "{table}");
    assert!(table.lines().nth(2).unwrap().contains("t_yolk_c"));
}

#[test]
fn explain_from_run_and_from_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.jsonl");
    let trace_s = trace.to_str().unwrap();
    let o = xbo(&[
        "explain", "--scenario", "chicken", "--budget", "12", "--n-e", "300", "--format", "json", "--write-trace", trace_s,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let params = v["decision"]["params"].as_array().unwrap();
    assert_eq!(params.len(), 6);
    // mass is fixed in the training scenario and never tuned
    let mass = params.iter().find(|p| p["name"] == "mass_g").unwrap();
    assert_eq!(mass["fixed"], true);
    assert!(mass.get("tune").is_none());
    assert_eq!(std::fs::read_to_string(&trace).unwrap().lines().count(), 12);

    let o = xbo(&["explain", "--observations", trace_s, "--n-e", "300", "--format", "rules"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("No tune: "), "{text}");
    assert!(text.contains("\nPredicted objective (95%): ["));

    let o = xbo(&["explain", "--observations", trace_s, "--n-e", "300", "--format", "language"]);
    assert!(stdout(&o).trim_end().ends_with("for optimal performance."));
}

#[test]
fn explain_needs_enough_observations() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("short.jsonl");
    std::fs::write(&path, "{\"x\":[50,27,0.9,12,63,5],\"y\":6.4}\n{\"x\":[50,30,0.9,12,63,5],\"y\":30.1}\n").unwrap();
    let o = xbo(&["explain", "--observations", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
}

#[test]
fn simulate_is_reproducible_csv() {
    let args = ["simulate", "--policy", "explanation-following", "--seeds", "0..3", "--condition", "visual"];
    let a = xbo(&args);
    let b = xbo(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let mut rdr = csv::Reader::from_reader(a.stdout.as_slice());
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(&headers[0], "seed");
    assert!(headers.iter().any(|h| h == "treatment_success"));
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 5);
    assert_eq!(&rows[4][0], "all");

    let o = xbo(&["simulate", "--policy", "clairvoyant"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn scenarios_validate() {
    let o = xbo(&["scenarios-validate"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.contains("optimal") && l.ends_with("Perfect")).count(), 7, "{out}");
    assert!(out.trim_end().ends_with("ok"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let mut v: serde_json::Value = serde_json::from_str(xbo::harness::SHIPPED_SCENARIOS).unwrap();
    v[0]["optimal"]["mass_g"] = serde_json::json!(150.0);
    std::fs::write(&bad, v.to_string()).unwrap();
    let o = xbo(&["scenarios-validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    // the service refuses to start on the same file
    let o = xbo(&["serve", "--scenarios", bad.to_str().unwrap(), "--log-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
