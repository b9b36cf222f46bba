use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const HEADER: &str = "dataset,algo,B,sigma,epsilon,U,lambda,eta,ct_mode,seed,T,mistakes,amr,m_prime,n_t,removals,zeta_max,elapsed_ms";
const SYNTH: &str = "synth:noisy:T=400,d=4,margin=0.4,flip=0.1,seed=2";

fn tiny() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/tiny.libsvm")
}

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_okl-bench"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn rows(text: &str) -> Vec<Vec<String>> {
    csv::Reader::from_reader(text.as_bytes())
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect()
}

fn column(name: &str) -> usize {
    HEADER.split(',').position(|c| c == name).unwrap()
}

/// CSV text with the wall-clock column blanked.
fn without_elapsed(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f.pop();
            f.join(",")
        })
        .collect()
}

#[test]
fn run_perceptron_on_tiny_file() {
    let o = bench(&["run", "--algo", "perceptron", "--data", tiny().to_str().unwrap(), "--seed", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().next().unwrap(), HEADER);
    let r = rows(&out);
    assert_eq!(r.len(), 1);
    let amr: f64 = r[0][column("amr")].parse().unwrap();
    assert!((0.0..=1.0).contains(&amr));
    assert_eq!(r[0][column("dataset")], "tiny");
    assert_eq!(r[0][column("T")], "40");
}

#[test]
fn odd_budget_is_a_config_error() {
    let o = bench(&["run", "--algo", "ahpatron", "--B", "5", "--data", tiny().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--B"), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
}

#[test]
fn bad_flags_exit_with_config_code() {
    assert_eq!(bench(&["run", "--algo", "forgetron", "--data", SYNTH]).status.code(), Some(1));
    assert_eq!(bench(&["run", "--ct", "fixed:abc", "--B", "4", "--data", SYNTH]).status.code(), Some(1));
    assert_eq!(bench(&["run", "--data", "missing/file.libsvm", "--B", "4"]).status.code(), Some(1));
    assert_eq!(bench(&["run", "--bogus"]).status.code(), Some(1));
    assert_eq!(bench(&["run", "--algo", "avp-adaptive", "--data", SYNTH]).status.code(), Some(1));
}

#[test]
fn unreadable_file_is_a_run_failure() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.libsvm");
    std::fs::write(&p, "+1 1:1\n-1 oops\n").unwrap();
    let o = bench(&["run", "--algo", "perceptron", "--data", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn bench_row_accounting() {
    let o = bench(&[
        "bench", "--algo", "perceptron,budget-oldest", "--B", "20", "--data", SYNTH, "--seeds", "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 6);
    let seeds: Vec<&str> = r.iter().map(|row| row[column("seed")].as_str()).collect();
    assert_eq!(seeds, ["1", "2", "1", "2", "mean", "mean"]);
    let a: f64 = r[0][column("amr")].parse().unwrap();
    let b: f64 = r[1][column("amr")].parse().unwrap();
    let mean: f64 = r[4][column("amr")].parse().unwrap();
    assert!((mean - (a + b) / 2.0).abs() < 1e-12);
}

#[test]
fn bench_selects_best_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid.csv");
    let o = bench(&[
        "bench", "--algo", "ahpatron", "--B", "16", "--data", SYNTH, "--seeds", "2", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let r = rows(&text);
    assert_eq!(r.len(), 5 * 2 + 1);
    let mut per_eps: Vec<(f64, f64)> = Vec::new();
    for pair in r[..10].chunks(2) {
        let e: f64 = pair[0][column("epsilon")].parse().unwrap();
        let m = pair.iter().map(|row| row[column("amr")].parse::<f64>().unwrap()).sum::<f64>() / 2.0;
        per_eps.push((e, m));
    }
    let best = per_eps
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)))
        .unwrap();
    let agg = &r[10];
    assert_eq!(agg[column("seed")], "mean");
    assert_eq!(agg[column("epsilon")].parse::<f64>().unwrap(), best.0);
    let summary = std::fs::read_to_string(dir.path().join("grid.summary.json")).unwrap();
    let cells: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(cells[0]["best_epsilon"].as_f64().unwrap(), best.0);
    assert_eq!(cells[0]["per_epsilon"].as_array().unwrap().len(), 5);
}

#[test]
fn bench_output_is_deterministic_across_job_counts() {
    let args = |jobs: &'static str| {
        vec![
            "bench", "--algo", "ahpatron,budget-random,avp", "--B", "12,20", "--epsilon", "0.5,0.8",
            "--data", SYNTH, "--seeds", "3", "--jobs", jobs,
        ]
    };
    let a = bench(&args("1"));
    let b = bench(&args("4"));
    assert!(a.status.success() && b.status.success());
    assert_eq!(without_elapsed(&stdout(&a)), without_elapsed(&stdout(&b)));
}

#[test]
fn json_mirrors_csv_fields() {
    let o = bench(&["run", "--algo", "ahpatron", "--B", "8", "--data", SYNTH, "--format", "json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let obj = v[0].as_object().unwrap();
    let keys: Vec<&str> = obj.keys().map(String::as_str).collect();
    let mut expected: Vec<&str> = HEADER.split(',').collect();
    let mut got = keys.clone();
    expected.sort_unstable();
    got.sort_unstable();
    assert_eq!(got, expected);
    assert_eq!(obj["ct_mode"], "norm-ratio");
    assert_eq!(obj["U"].as_f64().unwrap(), 8f64.sqrt() / 2.0);
}

#[test]
fn audited_run_passes() {
    let o = bench(&["run", "--algo", "ahpatron", "--B", "10", "--data", SYNTH, "--audit", "--seeds", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!stderr(&o).contains("invariant"));
}

#[test]
fn check_bounds_removal_count() {
    let o = bench(&["check-bounds", "--suite", "lemma1", "--algo", "ahpatron", "--data", SYNTH, "--B", "16"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().skip(1).collect();
    assert!(!lines.is_empty());
    assert!(lines.iter().all(|l| l.contains(",removal-count,") && l.contains(",holds,")), "{out}");
}

#[test]
fn fixed_radius_bound_refuses_small_budget() {
    let o = bench(&["check-bounds", "--suite", "ahpatron", "--data", SYNTH, "--B", "32"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains(",precondition,"), "{out}");
    assert!(out.contains("B >= 50"), "{out}");
}

#[test]
fn default_suite_passes_on_synthetic_data() {
    let o = bench(&["check-bounds", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let entries = v["entries"].as_array().unwrap();
    assert!(entries.len() >= 9);
    assert!(entries.iter().all(|e| e["status"] != "violated"));
    assert!(entries.iter().filter(|e| e["status"] == "holds").count() >= 9);
}

#[test]
fn alignment_identity() {
    let o = bench(&["alignment", "--data", SYNTH, "--T", "1"]);
    assert!(o.status.success());
    let r = rows(&stdout(&o));
    assert_eq!(stdout(&o).lines().next().unwrap(), "dataset,T,sigma,alignment,hinge_of_mean_embedding,difference,tolerance,holds");
    assert_eq!(r[0][3].parse::<f64>().unwrap().abs(), 0.0);
    let o = bench(&["alignment", "--data", SYNTH, "--sigma", "0.7", "--format", "json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["holds"], true);
    assert!(v["alignment"].as_f64().unwrap() >= 0.0);
}

#[test]
fn alignment_cap() {
    let o = bench(&["alignment", "--data", SYNTH, "--cap", "100"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gen_writes_loadable_libsvm() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g.libsvm");
    let o = bench(&["gen", "--kind", "separable", "--T", "50", "--dim", "3", "--seed", "4", "--out", p.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().count(), 50);
    assert!(text.lines().all(|l| l.starts_with("+1 1:") || l.starts_with("-1 1:")));
    let o = bench(&["run", "--algo", "perceptron", "--data", p.to_str().unwrap()]);
    assert!(o.status.success());
}
