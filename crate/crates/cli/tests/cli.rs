use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use geoprofit_cli::config::{load_config, parse_config, RunConfig, TraceSection, TraceSource};
use geoprofit_cli::traces::load_traces;
use geoprofit_core::simulator::estimate_stats;

const INSTANCE: &str = r#"
version = 1

[[data_centers]]
name = "a"
max_servers = 200

[[data_centers]]
name = "b"
max_servers = 200
network_delay = 0.03

[[classes]]
name = "web"
deadline = 1.0
income = 5e-5
per_server_capacity = 10.0
drop_threshold = 0.5
"#;

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geoprofit"))
        .args(args)
        .current_dir(cwd)
        .env_remove("GEOPROFIT_OUT")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> =
        fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    v.sort();
    v
}

/// 24 hourly rows: constant 8 kW at `a`, 4 kW at `b`, prices 0.05 and 0.07.
fn hourly_power() -> String {
    let mut s = String::from("timestamp,green_kw.a,green_kw.b,price.a,price.b\n");
    for h in 0..24 {
        s += &format!("{},8,4,0.05,0.07\n", h * 3600);
    }
    s
}

fn traces_config(dir: &Path, files: &[&str]) -> PathBuf {
    let list: Vec<String> = files.iter().map(|f| format!("\"{f}\"")).collect();
    let text = format!("{INSTANCE}\n[traces]\nfiles = [{}]\nslot_length = 900\n", list.join(", "));
    write(dir, "run.toml", &text)
}

#[test]
fn sample_config_loads() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/three-sites.toml");
    let cfg = load_config(&root).unwrap();
    assert_eq!(cfg.dc_names(), ["west", "central", "east"]);
    assert_eq!(cfg.class_names(), ["web", "video"]);
    assert!(cfg.data_centers.iter().all(|d| d.pue == 1.2 && d.peak_power == 0.2 && d.idle_power == 0.1));
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = INSTANCE.replacen("max_servers = 200", "max_servers = 200\npue = 0.9", 1);
    let err = parse_config(&bad, dir.path()).unwrap_err().to_string();
    assert!(err.contains("data_centers[0].pue"), "{err}");

    let path = write(dir.path(), "bad.toml", &bad);
    let out = bin(&["solve", "--config", path.to_str().unwrap(), "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config error"));
}

#[test]
fn hourly_rows_expand_to_quarter_hour_slots() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "power.csv", &hourly_power());
    let mut rates = String::from("timestamp,rate.web\n");
    for h in 0..24 {
        rates += &format!("{},{}\n", h * 3600, 100 + h);
    }
    write(dir.path(), "rates.csv", &rates);
    let cfg = load_config(&traces_config(dir.path(), &["power.csv", "rates.csv"])).unwrap();
    let section = files_section(&cfg);
    let set = load_traces(section, &cfg).unwrap();
    assert_eq!(set.len(), 96);
    // 8 kW for a quarter hour
    assert_eq!(set.slots[5].green_energy, [2.0, 1.0]);
    assert_eq!(set.slots[5].brown_price, [0.05, 0.07]);
    // hour 1 covers slots 4..8; coarse rates get the fallback cv
    let s = &set.slots[5].class_stats[0];
    assert_eq!(s.mean_rate, 101.0);
    assert!((s.variance.sqrt() / s.mean_rate - section.fallback_cv).abs() < 1e-12);
}

fn files_section(cfg: &RunConfig) -> &TraceSection {
    match &cfg.traces {
        Some(TraceSource::Files(s)) => s,
        _ => panic!("config has no trace files"),
    }
}

#[test]
fn per_second_rates_match_the_estimator() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "power.csv", &hourly_power());
    let samples: Vec<f64> = (0..1800).map(|t| 100.0 + 7.0 * ((t as f64) * 0.37).sin() + (t % 5) as f64).collect();
    let mut rates = String::from("timestamp,rate.web\n");
    for (t, v) in samples.iter().enumerate() {
        rates += &format!("{t},{v}\n");
    }
    write(dir.path(), "rates.csv", &rates);
    let cfg = load_config(&traces_config(dir.path(), &["power.csv", "rates.csv"])).unwrap();
    let section = files_section(&cfg);
    let set = load_traces(section, &cfg).unwrap();
    assert_eq!(set.len(), 2);
    for k in 0..2 {
        let want = estimate_stats(&samples[k * 900..(k + 1) * 900], section.lag_cap).unwrap();
        assert_eq!(set.slots[k].class_stats[0], want);
    }
}

fn trace_error(power: &str, rates: &str) -> String {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "power.csv", power);
    write(dir.path(), "rates.csv", rates);
    let cfg = traces_config(dir.path(), &["power.csv", "rates.csv"]);
    let out = bin(&["simulate", "--config", cfg.to_str().unwrap(), "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(listing(&dir.path().join("o")), ["diagnostics.json"]);
    String::from_utf8(out.stderr).unwrap()
}

#[test]
fn malformed_traces_are_located() {
    let rates = "timestamp,rate.web\n0,100\n3600,100\n7200,100\n";
    let dup = "timestamp,green_kw.a,green_kw.b,price.a,price.b\n0,1,1,1,1\n3600,1,1,1,1\n3600,1,1,1,1\n";
    let e = trace_error(dup, rates);
    assert!(e.contains("power.csv") && e.contains("line 4") && e.contains("duplicated timestamp"), "{e}");

    let missing = "timestamp,green_kw.a,price.a,price.b\n0,1,1,1\n3600,1,1,1\n";
    let e = trace_error(missing, rates);
    assert!(e.contains("missing column green_kw.b"), "{e}");

    let negative = "timestamp,green_kw.a,green_kw.b,price.a,price.b\n0,1,1,1,1\n3600,1,-2,1,1\n";
    let e = trace_error(negative, rates);
    assert!(e.contains("line 3") && e.contains("green_kw.b") && e.contains("negative"), "{e}");
}

#[test]
fn generated_traces_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let gen = format!(
        "{INSTANCE}
[generator]
hours = 2
slot_length = 900
wind = [{{ mean = 5.0, amplitude = 1.0 }}, {{ mean = 3.0 }}]
price = [{{ mean = 0.05 }}, {{ mean = 0.07, noise_sd = 0.01 }}]
workload = [{{ mean_rate = 80.0, cv = 0.2 }}]
"
    );
    let cfg = write(dir.path(), "gen.toml", &gen);
    let out = bin(&["gen-traces", "--config", cfg.to_str().unwrap(), "--seed", "3", "--out", "t"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(listing(&dir.path().join("t")), ["power.csv", "rates.csv"]);

    let from_gen = geoprofit_cli::commands::build_traces(&{
        let mut c = load_config(&cfg).unwrap();
        c.override_seed(3);
        c
    })
    .unwrap();
    let replay = traces_config(dir.path(), &["t/power.csv", "t/rates.csv"]);
    let text = fs::read_to_string(&replay).unwrap() + "lag_cap = 30\n";
    fs::write(&replay, text).unwrap();
    let from_files = geoprofit_cli::commands::build_traces(&load_config(&replay).unwrap()).unwrap();
    assert_eq!(from_gen.len(), from_files.len());
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-13 * a.abs().max(b.abs()).max(1e-300);
    for (x, y) in from_gen.slots.iter().zip(&from_files.slots) {
        assert!(x.green_energy.iter().zip(&y.green_energy).all(|(a, b)| close(*a, *b)));
        assert!(x.brown_price.iter().zip(&y.brown_price).all(|(a, b)| close(*a, *b)));
        assert!(close(x.class_stats[0].mean_rate, y.class_stats[0].mean_rate));
        assert!(close(x.class_stats[0].variance, y.class_stats[0].variance));
    }
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = bin(&["solve", "--format", "xml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = bin(&["--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn validate_loss_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for run in ["a", "b"] {
        let out = bin(&["validate-loss", "--seed", "7", "--format", "csv", "--out", run], dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["loss-battery.csv", "loss-battery-summary.csv"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        assert_eq!(a, fs::read(dir.path().join("b").join(name)).unwrap());
    }
}

#[test]
fn csv_reports_reparse_to_fifteen_digits() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{INSTANCE}
[slot]
length = 900
green_energy = [1.5, 0.0]
brown_price = [0.05, 0.08]
classes = [{{ mean_rate = 120.0, cv = 0.2 }}]
"
    );
    let cfg = write(dir.path(), "one.toml", &text);
    for fmt in ["csv", "jsonl"] {
        let out = bin(&["solve", "--config", cfg.to_str().unwrap(), "--format", fmt, "--out", fmt], dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let mut rdr = csv::Reader::from_path(dir.path().join("csv/solve.csv")).unwrap();
    let head = rdr.headers().unwrap().clone();
    let row = rdr.records().next().unwrap().unwrap();
    let col = |name: &str| head.iter().position(|h| h == name).unwrap();
    assert_eq!(&row[col("status")], "optimal");
    let profit: f64 = row[col("profit")].parse().unwrap();

    let line = fs::read_to_string(dir.path().join("jsonl/solve.jsonl")).unwrap();
    let json: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(json["profit"].as_f64().unwrap(), profit);
    assert!(profit > 0.0);
    // 15 significant digits written as d.dddddddddddddde±x
    let mantissa = row[col("profit")].split('e').next().unwrap();
    assert_eq!(mantissa.len(), 16);
}

#[test]
fn unprofitable_pair_is_reported_by_solve() {
    let dir = tempfile::tempdir().unwrap();
    let text = INSTANCE
        .replace("income = 5e-5", "income = 1e-6")
        .replace("per_server_capacity = 10.0", "per_server_capacity = 1.0")
        + "
[slot]
length = 900
green_energy = [0.0, 0.0]
brown_price = [0.005, 0.10]
classes = [{ mean_rate = 50.0, cv = 0.2 }]
";
    let cfg = write(dir.path(), "gate.toml", &text);
    let out = bin(&["solve", "--config", cfg.to_str().unwrap(), "--format", "jsonl", "--out", "o"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let line = fs::read_to_string(dir.path().join("o/solve.jsonl")).unwrap();
    let json: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(json["status"], "non-certified");
    assert_eq!(json["failing_pairs"], "b/web");
    assert!(String::from_utf8_lossy(&out.stdout).contains("b/web"));
}

#[test]
fn failed_audit_exits_three_and_keeps_its_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&["audit-convexity", "--format", "csv", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("check error"));
    assert_eq!(listing(&dir.path().join("o")), ["audit.csv"]);
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_geoprofit"))
        .args(["validate-loss", "--format", "jsonl"])
        .current_dir(dir.path())
        .env("GEOPROFIT_OUT", "from-env")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(listing(&dir.path().join("from-env")), ["loss-battery-summary.jsonl", "loss-battery.jsonl"]);
}
