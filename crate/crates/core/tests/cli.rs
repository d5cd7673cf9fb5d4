use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const LINEAR: &str = r#"
[scenario]
duration_samples = 8000
seed = 3
snr_db = 40.0
source = { kind = "white-gaussian" }
rir = { t60_ms = 60.0, length = 32, seed = 5 }

[[algorithm]]
name = "fd-flaf"
label = "linear"
filter_len = 32
block_len = 32
mu_lin = 0.5

[[algorithm]]
name = "pbfd-flaf"
filter_len = 32
block_len = 8
partitions = 4
mu_lin = 0.3
mu_nl = 0.01
expansion = { kind = "legendre", order = 3, input_len = 8 }
"#;

fn bench(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flaf-bench"))
        .args(args)
        .current_dir(dir)
        .env_remove("FLAF_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

#[test]
fn run_writes_traces_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("exp.toml"), LINEAR).unwrap();
    let out = bench(&["run", "exp.toml", "--output-dir", "a"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let trace = fs::read_to_string(tmp.path().join("a/linear.csv")).unwrap();
    assert_eq!(trace.lines().count(), 8001);
    assert!(trace.starts_with("sample_index,e,erle_db"));

    let mut summary = csv::Reader::from_path(tmp.path().join("a/summary.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = summary.records().map(Result::unwrap).collect();
    let linear = rows.iter().find(|r| &r[1] == "linear").unwrap();
    let mean: f64 = linear[3].parse().unwrap();
    assert!(mean > 20.0, "{mean}");
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("exp.toml"), LINEAR).unwrap();
    for dir in ["a", "b"] {
        assert!(bench(&["run", "exp.toml", "--output-dir", dir], tmp.path()).status.success());
    }
    for name in ["linear.csv", "pbfd-flaf-leg.csv", "summary.csv"] {
        let a = fs::read(tmp.path().join("a").join(name)).unwrap();
        let b = fs::read(tmp.path().join("b").join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
}

#[test]
fn env_var_overrides_config_dir() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("exp.toml"), LINEAR.replace("8000", "800")).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_flaf-bench"))
        .args(["run", "exp.toml"])
        .current_dir(tmp.path())
        .env("FLAF_OUTPUT_DIR", "from-env")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("from-env/summary.csv").exists());
}

#[test]
fn bad_config_reports_line_and_fails() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.toml"), LINEAR.replace("partitions = 4", "partitions = 3")).unwrap();
    let out = bench(&["run", "bad.toml"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line ") && err.contains("need 4"), "{err}");
}

#[test]
fn analyze_corr_writes_one_row_per_bin() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bench(
        &["analyze-corr", "--filter-len", "32", "--block-len", "32", "--partitions", "2", "--bins", "1,2,3", "--blocks", "2000"],
        tmp.path(),
    );
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let rows: Vec<csv::StringRecord> = rows.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    for r in rows {
        let a: f64 = r[3].parse().unwrap();
        assert!((a - 0.5).abs() < 0.05, "{a}");
    }
}

#[test]
fn presets_are_listed_and_shown() {
    let tmp = tempfile::tempdir().unwrap();
    let list = String::from_utf8(bench(&["presets", "list"], tmp.path()).stdout).unwrap();
    assert!(list.lines().any(|l| l.starts_with("table2")));
    let show = bench(&["presets", "show", "table2"], tmp.path());
    assert!(String::from_utf8(show.stdout).unwrap().contains("[scenario]"));
    assert_eq!(bench(&["presets", "show", "nope"], tmp.path()).status.code(), Some(1));
}
