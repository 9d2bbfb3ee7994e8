use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn blis(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blis")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &str = r#"
name = "tiny"
duration_s = 300.0
lp_fraction = 0.5

[[apps]]
app_id = 1
modules = 2
rate_nml = 10
rate_lp = 5
period_s = 150.0
"#;

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

#[test]
fn codec_describes_a_beacon() {
    let o = blis(&["codec", "--hex", "4243010100000000020300010003000100020000000001000000010101"]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert!(text.contains("sync_new         [1,0]"), "{text}");
    assert!(text.contains("solicits module 0"), "{text}");
}

#[test]
fn codec_exit_codes() {
    assert_eq!(blis(&["codec", "--hex", "not-hex"]).status.code(), Some(1));
    // Well-formed hex, malformed packet.
    let o = blis(&["codec", "--hex", "4243010100"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("malformed"));
}

#[test]
fn usage_and_config_errors_exit_one() {
    assert_eq!(blis(&[]).status.code(), Some(1));
    assert_eq!(blis(&["bogus"]).status.code(), Some(1));
    assert_eq!(blis(&["run", "--config", "/nonexistent.toml"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.toml", "duration_s = 10.0\nwat = 1\n");
    let o = blis(&["run", "--config", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("wat"));
    let neg = write_config(dir.path(), "neg.toml", "duration_s = -5.0\n");
    let o = blis(&["run", "--config", &neg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("duration_s"));
    assert_eq!(blis(&["--help"]).status.code(), Some(0));
}

#[test]
fn run_writes_report_log_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.toml", SMALL);
    let out = dir.path().join("out");
    let o = blis(&["run", "--config", &cfg, "--seed", "2", "--out", out.to_str().unwrap(), "--plot", "--log"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("schema_version,scenario,energy_strategy"));
    let row = lines.next().unwrap();
    assert!(row.starts_with("1,tiny,atem,vsda,2,"), "{row}");
    assert!(out.join("events.log").exists());
    assert!(fs::read_to_string(out.join("availability.svg")).unwrap().starts_with("<svg"));

    let o = blis(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert!(json["reference"]["availability_gain_pct"].is_number());
}

#[test]
fn compare_pairs_variants_over_a_glob() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "a.toml", SMALL);
    write_config(dir.path(), "b.toml", &SMALL.replace("tiny", "tiny-b"));
    let out = dir.path().join("out");
    let pattern = format!("{}/*.toml", dir.path().display());
    let o = Command::new(env!("CARGO_BIN_EXE_blis"))
        .args(["compare", "--configs", &pattern, "--seeds", "0..2", "--out", out.to_str().unwrap()])
        .env("BLIS_SIM_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("atem+vsda vs central+vsda"));
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    // 2 scenarios x 4 variants x 2 seeds
    assert_eq!(csv.lines().count(), 1 + 16);

    let o = blis(&["compare", "--configs", "/nowhere/*.toml"]);
    assert_eq!(o.status.code(), Some(1));
    let o = blis(&["compare", "--configs", &pattern, "--variants", "atem+nope"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn forecast_writes_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let mut trace = String::from("time_s,power_mw\n");
    for i in 0..200 {
        trace.push_str(&format!("{i},{}\n", 1.0 + 0.5 * (i as f64 / 10.0).sin()));
    }
    let path = dir.path().join("trace.csv");
    fs::write(&path, trace).unwrap();
    let out = dir.path().join("out");
    let o = blis(&["forecast", "--trace", path.to_str().unwrap(), "--model", "persistence", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let pred = fs::read_to_string(out.join("predictions.csv")).unwrap();
    assert_eq!(pred.lines().next(), Some("t,actual_mw,predicted_mw"));
    assert_eq!(pred.lines().count(), 200);

    let o = blis(&[
        "forecast", "--trace", path.to_str().unwrap(), "--model", "lstm", "--epochs", "5", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let loss = fs::read_to_string(out.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 1 + 1 + 5);

    let o = blis(&["forecast", "--trace", path.to_str().unwrap(), "--model", "prophet"]);
    assert_eq!(o.status.code(), Some(1));
    let short = dir.path().join("short.csv");
    fs::write(&short, "time_s,power_mw\n0,1\n1,1\n").unwrap();
    let o = blis(&["forecast", "--trace", short.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
