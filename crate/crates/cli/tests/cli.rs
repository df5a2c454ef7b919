use std::path::Path;
use std::process::{Command, Output};

fn cachelearn(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cachelearn"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// `(policy, metric) -> value` from a long-format results CSV.
fn values(csv: &str, metric: &str) -> Vec<(String, f64)> {
    csv.lines()
        .skip(1)
        .filter_map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f.get(4) == Some(&metric)).then(|| (f[1].to_string(), f[5].parse().unwrap()))
        })
        .collect()
}

#[test]
fn gen_is_deterministic_and_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let o = cachelearn(&["gen", "--n", "50", "--alpha", "0.8", "--count", "2000", "--seed", "7", "-o", name], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(dir.path().join(name)).unwrap()
    };
    let (a, b) = (run("a.txt"), run("b.txt"));
    assert_eq!(a, b);
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 2000);
    let manifest = std::fs::read_to_string(dir.path().join("a.txt.manifest.json")).unwrap();
    let m: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(m["command"], "gen");
    assert!(m["argv"].as_array().unwrap().iter().any(|x| x == "--seed"));
}

#[test]
fn replay_reproduces_the_recorded_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = cachelearn(&["gen", "--n", "30", "--alpha", "1.1", "--count", "500", "--seed", "3", "-o", "t.txt"], dir.path());
    assert!(o.status.success());
    let first = std::fs::read(dir.path().join("t.txt")).unwrap();
    std::fs::remove_file(dir.path().join("t.txt")).unwrap();
    let o = cachelearn(&["replay", "t.txt.manifest.json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(dir.path().join("t.txt")).unwrap(), first);
}

#[test]
fn exit_codes_follow_the_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let bad_alpha = cachelearn(&["gen", "--n", "10", "--alpha", "-1", "--count", "5", "-o", "x.txt"], dir.path());
    assert_eq!(bad_alpha.status.code(), Some(2));
    let unknown = cachelearn(&["analyze", "--policy", "mru", "--m", "2", "--n", "4", "--alpha", "0.8"], dir.path());
    assert_eq!(unknown.status.code(), Some(2));
    let too_large = cachelearn(&["analyze", "--policy", "klru:2", "--m", "4", "--n", "20", "--alpha", "0.8"], dir.path());
    assert_eq!(too_large.status.code(), Some(3));
    assert!(stderr(&too_large).contains("cachelearn sim --mc"), "{}", stderr(&too_large));
    let empty = dir.path().join("empty.txt");
    std::fs::write(&empty, "").unwrap();
    let fit = cachelearn(&["fit", "--trace", "empty.txt"], dir.path());
    assert_eq!(fit.status.code(), Some(2));
}

#[test]
fn analyze_reports_exact_quantities() {
    let dir = tempfile::tempdir().unwrap();
    let o = cachelearn(&["analyze", "--policy", "fifo", "--m", "2", "--probs", "0.5,0.3,0.2"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("hit_probability = 0.709677"), "{}", stdout(&o));
    let o = cachelearn(&["analyze", "--policy", "lru", "--m", "2", "--n", "4", "--alpha", "0.8", "--what", "reversible"], dir.path());
    assert!(stdout(&o).contains("reversible = false"), "{}", stdout(&o));
    let o = cachelearn(&["mix", "--policy", "climb", "--m", "4", "--alpha", "0.8", "--bounds", "zipf-exponent"], dir.path());
    assert!(stdout(&o).contains("zipf_exponent = 58"), "{}", stdout(&o));
}

#[test]
fn reductions_agree_in_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let o = cachelearn(
        &[
            "sim", "--policy", "lru", "--policy", "alru:1.0", "--policy", "klru:1", "--m", "4", "--n", "40", "--alpha", "0.9", "--count",
            "50000", "--seed", "11", "-o", "r.csv",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let v = values(&csv, "hit_rate_cumulative");
    assert_eq!(v.len(), 3);
    assert!(v.iter().all(|x| x.1 == v[0].1), "{v:?}");
}

#[test]
fn learning_error_exposes_all_curve_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let o = cachelearn(
        &["learn-error", "--policies", "lru,climb", "--m", "2", "--n", "4", "--alpha", "0.8", "--tgrid", "0,1,10,1000", "-o", "c.csv"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("c.csv")).unwrap();
    let err = values(&csv, "learning_error");
    let dist = values(&csv, "expected_distance");
    assert_eq!(err.len(), 8);
    assert_eq!(dist.len(), 8);
    // e(t) bounds the expected distance at every t.
    assert!(err.iter().zip(&dist).all(|(e, d)| e.1 + 1e-9 >= d.1));
}

#[test]
fn run_executes_a_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"
kind = "simulation"
name = "tiny"
count = 20000
window = 5000
reps = 2
seed = 5

[[policies]]
policy = "lru"
m = 3

[[policies]]
policy = "climb"
m = 3

[source]
kind = "zipf"
n = 20
alpha = 0.8
"#;
    std::fs::write(dir.path().join("tiny.toml"), config).unwrap();
    let o = cachelearn(&["run", "--config", "tiny.toml", "--out", "out"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("out/tiny.csv")).unwrap();
    assert_eq!(values(&csv, "hit_rate_cumulative").len(), 2);
    assert_eq!(values(&csv, "hit_rate_window").len(), 8);
    assert!(dir.path().join("out/tiny.json").exists());
}
