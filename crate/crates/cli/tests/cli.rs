use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bargain-lab"));
    c.env_remove("BARGAIN_LAB_OUT");
    c
}

fn text(o: &Output) -> (String, String) {
    (
        String::from_utf8_lossy(&o.stdout).into_owned(),
        String::from_utf8_lossy(&o.stderr).into_owned(),
    )
}

#[test]
fn help_exits_zero_and_bad_flags_exit_one() {
    let o = bin().arg("--help").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    for sub in ["run", "simulate", "impute", "mte", "structural", "report"] {
        assert!(text(&o).0.contains(sub), "help lacks {sub}");
    }
    let o = bin().args(["simulate", "--bogus"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn simulate_writes_data_and_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["simulate", "--n", "300", "--seed", "4", "--truth", "collective"])
        .env("BARGAIN_LAB_OUT", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{:?}", text(&o));
    for f in ["simulated.csv", "truth_ledger.csv", "truth_params.csv"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let rows = std::fs::read_to_string(dir.path().join("simulated.csv")).unwrap().lines().count();
    assert_eq!(rows, 301);
}

#[test]
fn structural_without_wages_is_a_prerequisite_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = bin().args(["--out", out, "simulate", "--n", "300"]).output().unwrap();
    assert!(o.status.success());
    let data = dir.path().join("simulated.csv");
    let o = bin()
        .args(["--out", out, "structural", "--data", data.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    let (_, err) = text(&o);
    assert!(err.contains("missing prerequisite") && err.contains("impute"), "{err}");
}

#[test]
fn missing_data_file_is_a_prerequisite_error() {
    let o = bin().args(["mte", "--data", "/nonexistent/households.csv"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).1.contains("does not exist"));
}

#[test]
fn report_renders_the_sons_sharing_rule() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/sons/estimates_collective_sons.csv");
    std::fs::copy(&fixture, dir.path().join("estimates_collective_sons.csv")).unwrap();
    let o = bin()
        .args(["report", "--dir", dir.path().to_str().unwrap(), "--label", "sons"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{:?}", text(&o));
    let (out, _) = text(&o);
    assert!(out.contains("F′ 0.821, ψ_t 1.14"), "{out}");
    assert!(dir.path().join("verdict_sons.md").exists());
    assert!(dir.path().join("sharing_rule_sons.csv").exists());
}

#[test]
fn report_without_tables_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin().args(["report", "--dir", dir.path().to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn zero_replications_fail_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "output_dir = \"results\"\n[input.simulate]\nn = 500\n").unwrap();
    let o = bin()
        .args(["run", cfg.to_str().unwrap(), "--replications", "0"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).1.contains("replications"));
    assert!(!dir.path().join("results").exists());
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[mte.bootstrap]\nreplicatons = 10\n").unwrap();
    let o = bin().args(["run", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).1.contains("replicatons"));
}
