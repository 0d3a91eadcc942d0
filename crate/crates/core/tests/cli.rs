use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"{"sim": {"horizon_months": 2, "n_paths": 300}}"#;

fn expma(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_expma-lab"));
    cmd.args(args).env_remove("EXPMA_THREADS").env("SOURCE_DATE_EPOCH", "1700000000");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn simulate_writes_one_row_per_strategy() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SMALL);
    let o = expma(&["simulate", "--config", &cfg], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "experiment,strategy,sweep_param,sweep_value,total_return,avg_daily_return,sharpe,log_growth,se_return,se_sharpe,n_paths,seed"
    );
    let strategies: Vec<&str> = lines.map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(strategies, ["utility_c1", "utility_c2", "growth", "buy_and_hold"]);
}

#[test]
fn same_seed_reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SMALL);
    for format in ["csv", "json"] {
        let dirs: Vec<_> = ["a", "b"].iter().map(|d| tmp.path().join(format!("{format}_{d}"))).collect();
        for d in &dirs {
            let o = expma(&["simulate", "--config", &cfg, "--format", format, "--out", d.to_str().unwrap()], &[]);
            assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        }
        let file = format!("performance.{format}");
        let a = fs::read(dirs[0].join(&file)).unwrap();
        let b = fs::read(dirs[1].join(&file)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{file} differs between reruns");
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SMALL);
    let one = expma(&["simulate", "--config", &cfg], &[("EXPMA_THREADS", "1")]);
    let two = expma(&["simulate", "--config", &cfg], &[("EXPMA_THREADS", "2")]);
    assert_eq!(code(&one), 0);
    assert_eq!(one.stdout, two.stdout);
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SMALL);
    let a = expma(&["simulate", "--config", &cfg, "--seed", "1"], &[]);
    let b = expma(&["simulate", "--config", &cfg, "--seed", "2"], &[]);
    assert_ne!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",1")));
}

#[test]
fn configuration_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let empty = write_config(tmp.path(), "empty.json", r#"{"experiment": "cost_sweep", "sweep": []}"#);
    let unknown = write_config(tmp.path(), "unknown.json", r#"{"bogus": 1}"#);
    let wrong = write_config(tmp.path(), "wrong.json", r#"{"experiment": "pde"}"#);
    let missing = tmp.path().join("absent.json");
    for (args, envs) in [
        (vec!["sweep", "--config", &empty], vec![]),
        (vec!["simulate", "--config", &unknown], vec![]),
        (vec!["simulate", "--config", &wrong], vec![]),
        (vec!["simulate", "--config", missing.to_str().unwrap()], vec![]),
        (vec!["sweep"], vec![]),
        (vec!["simulate", "--config", &empty], vec![("EXPMA_THREADS", "0")]),
    ] {
        let o = expma(&args, &envs);
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(o.stdout.is_empty());
    }
}

#[test]
fn numeric_failures_exit_with_three() {
    let tmp = TempDir::new().unwrap();
    let huge = write_config(tmp.path(), "huge.json", r#"{"sim": {"horizon_months": 24, "n_paths": 100000000}}"#);
    let o = expma(&["simulate", "--config", &huge], &[]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn analytics_subcommands_run() {
    for sub in ["strategy", "moments", "growth"] {
        let o = expma(&[sub], &[]);
        assert_eq!(code(&o), 0, "{sub}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(o.stdout.len() > 20);
    }
    let o = expma(&["strategy", "--format", "json"], &[]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["metadata"]["timestamp"], 1_700_000_000);
}
