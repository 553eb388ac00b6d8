use std::fs;
use std::process::Command;

use risnoma_harness::export::{read_reports, read_trace_csv};

fn risnoma() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_risnoma"));
    c.env("RUST_LOG", "warn");
    c
}

fn small_config(dir: &std::path::Path) -> std::path::PathBuf {
    let path = dir.join("small.toml");
    fs::write(&path, "eval_slots = 12\ntrain_steps = 64\n[policy]\nhidden = [8]\n[ppo]\nrollout = 32\nminibatch = 16\n").unwrap();
    path
}

#[test]
fn run_writes_traces_that_reproduce_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    let status = risnoma()
        .args(["run", "--scheme", "random", "--seed", "3", "--seeds", "2", "--profile", "lightweight"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let reports = read_reports(out.join("reports.toml")).unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[1].seed, 4);
    for r in &reports {
        let trace = read_trace_csv(r.trace_path.as_ref().unwrap()).unwrap();
        assert_eq!(trace.len(), 12);
        assert!((trace.energy_efficiency() - r.energy_efficiency).abs() <= 1e-9 * r.energy_efficiency.abs().max(1.0));
    }
}

#[test]
fn sweep_emits_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    let status = risnoma()
        .args(["sweep", "--scheme", "random", "--seeds", "2", "--param", "ris_x", "--values", "2,6"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = fs::read_to_string(out.join("plotdata/sweep_ris_x.csv")).unwrap();
    assert!(csv.lines().next().unwrap().starts_with("figure,scheme,param,value,metric,mean,std,n"));
    assert!(csv.contains("random,ris_x,6.0,energy_efficiency") || csv.contains("random,ris_x,6,energy_efficiency"));
}

#[test]
fn unknown_scheme_lists_choices() {
    let out = risnoma().args(["run", "--scheme", "nope"]).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("plain-ppo"), "{err}");
}

#[test]
fn unknown_figure_is_rejected() {
    let out = risnoma().args(["export", "--figures", "fig1"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("fig2_convergence"));
}
