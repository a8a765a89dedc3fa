//! End-to-end checks of the command-line interface: real process, real
//! files, distinct exit codes.

use std::path::PathBuf;
use std::process::{Command, Output};

fn gridstor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridstor"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn tmp(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn tune_prints_parameters_and_gaps() {
    let out = gridstor(&[
        "tune",
        "--feeder",
        "feeder33",
        "--fleet",
        "fleet33",
        "--scenario",
        "random33",
        "--seed",
        "1",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("weighted_gap="), "{text}");
    assert!(text.contains("common_weight_gap="));
    assert!(text.contains("distance_bound="));
    // One row per unit plus header and totals.
    assert!(text.lines().count() >= 33 + 4);
}

#[test]
fn solve_step_compares_solvers() {
    let trace = tmp("step_trace.csv");
    let out = gridstor(&[
        "solve-step",
        "--feeder",
        "feeder12",
        "--fleet",
        "fleet12",
        "--scenario",
        "scenario1",
        "--mode",
        "weighted",
        "--t",
        "3",
        "--compare",
        "--trace-out",
        trace.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let gap_line = text
        .lines()
        .find(|l| l.starts_with("max_abs_gap="))
        .expect("gap line present");
    let gap: f64 = gap_line.trim_start_matches("max_abs_gap=").parse().unwrap();
    assert!(gap <= 1e-6, "{gap_line}");
    let trace_text = std::fs::read_to_string(&trace).unwrap();
    assert!(trace_text.starts_with("j,nu,residual,b_1"));
    assert!(trace_text.lines().count() > 2);
}

#[test]
fn run_writes_deterministic_outputs() {
    let mut outputs = Vec::new();
    for tag in ["a", "b"] {
        let traj = tmp(&format!("traj_{tag}.csv"));
        let metrics = tmp(&format!("metrics_{tag}.txt"));
        let out = gridstor(&[
            "run",
            "--feeder",
            "feeder33",
            "--fleet",
            "fleet33",
            "--scenario",
            "random33",
            "--seed",
            "9",
            "--mode",
            "weighted",
            "--solver",
            "centralized",
            "--horizon",
            "200",
            "--trajectory-out",
            traj.to_str().unwrap(),
            "--metrics-out",
            metrics.to_str().unwrap(),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        outputs.push((
            std::fs::read(&traj).unwrap(),
            std::fs::read(&metrics).unwrap(),
        ));
    }
    assert_eq!(outputs[0].0, outputs[1].0, "trajectory files differ");
    assert_eq!(outputs[0].1, outputs[1].1, "metrics files differ");
    let metrics = String::from_utf8(outputs[0].1.clone()).unwrap();
    assert!(metrics.contains("soc_violations=0"));
    assert!(metrics.contains("voltage_violations=0"));
}

#[test]
fn run_with_config_file_defaults() {
    let cfg = tmp("run.cfg");
    std::fs::write(
        &cfg,
        "feeder=feeder12\nfleet=fleet12\nscenario=scenario1\nmode=greedy\nhorizon=20\n",
    )
    .unwrap();
    let out = gridstor(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("horizon=20"));
}

#[test]
fn validate_feeder_reports_linearization() {
    for feeder in ["feeder12", "feeder33"] {
        let out = gridstor(&["validate-feeder", "--feeder", feeder]);
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("linearization_ok=true"), "{text}");
        assert!(text.contains("band_feasible=true"));
    }
}

#[test]
fn missing_file_exits_with_io_code() {
    let out = gridstor(&[
        "run",
        "--feeder",
        "no_such_feeder.txt",
        "--fleet",
        "fleet12",
        "--scenario",
        "scenario1",
        "--horizon",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn malformed_feeder_exits_with_format_code() {
    let bad = tmp("bad_feeder.txt");
    std::fs::write(&bad, "v0=1.0 alpha=-0.01 beta=0.01\n0 1 0.01\n").unwrap();
    let out = gridstor(&[
        "run",
        "--feeder",
        bad.to_str().unwrap(),
        "--fleet",
        "fleet12",
        "--scenario",
        "scenario1",
        "--horizon",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn missing_seed_for_random_scenario_is_a_format_error() {
    let out = gridstor(&[
        "run",
        "--feeder",
        "feeder33",
        "--fleet",
        "fleet33",
        "--scenario",
        "random33",
        "--horizon",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

#[test]
fn unknown_flag_exits_with_usage_code() {
    let out = gridstor(&["run", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_with_distributed_solver() {
    let out = gridstor(&[
        "run",
        "--feeder",
        "feeder12",
        "--fleet",
        "fleet12",
        "--scenario",
        "scenario1",
        "--mode",
        "weighted",
        "--solver",
        "distributed",
        "--steps",
        "auto",
        "--horizon",
        "30",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("voltage_violations=0"));
}

#[test]
fn custom_files_run_and_trace_exhaustion_is_a_runtime_error() {
    let feeder = tmp("one_bus_feeder.txt");
    std::fs::write(&feeder, "v0=1.0 alpha=-0.0199 beta=0.020\n0 1 0.005 0.004\n").unwrap();
    let fleet = tmp("one_bus_fleet.csv");
    std::fs::write(&fleet, "bus,s_min,s_max,b_min,b_max\n1,0,0.1,-0.01,0.01\n").unwrap();
    let trace = tmp("two_period_trace.csv");
    std::fs::write(
        &trace,
        "t,r,c0,cp,cr,l_1,q_1\n0,1,5,0.5,8,0.004,0.002\n1,-1,20,1.5,12,0.005,0.002\n",
    )
    .unwrap();

    // Within the trace length the run succeeds.
    let ok = gridstor(&[
        "run",
        "--feeder",
        feeder.to_str().unwrap(),
        "--fleet",
        fleet.to_str().unwrap(),
        "--scenario",
        "trace",
        "--trace-file",
        trace.to_str().unwrap(),
        "--mode",
        "greedy",
        "--horizon",
        "2",
    ]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));

    // Asking for more periods than the trace holds fails at runtime.
    let err = gridstor(&[
        "run",
        "--feeder",
        feeder.to_str().unwrap(),
        "--fleet",
        fleet.to_str().unwrap(),
        "--scenario",
        "trace",
        "--trace-file",
        trace.to_str().unwrap(),
        "--mode",
        "greedy",
        "--horizon",
        "5",
    ]);
    assert_eq!(err.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&err.stderr).contains("period"));
}
