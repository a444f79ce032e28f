use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecp-se"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &TempDir, extra: &[&str]) -> PathBuf {
    let meas = dir.path().join("meas.json");
    let case = data("case14.m");
    let mut args = vec![
        "synth",
        "--case",
        path(&case),
        "--rtu-frac",
        "0.75",
        "--seed",
        "4",
        "--out",
        path(&meas),
    ];
    args.extend(extra);
    let out = run(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    meas
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn synth_estimate_verify_round() {
    let dir = TempDir::new().unwrap();
    let meas = synth(&dir, &["--pmu-count", "3"]);
    let case = data("case14.m");
    let report = dir.path().join("report.json");
    let out = run(&[
        "estimate",
        "--case",
        path(&case),
        "--meas",
        path(&meas),
        "--report",
        path(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let r = json(&report);
    assert_eq!(r["status"], "converged");
    assert!(r["sigma_max"].as_f64().unwrap() < 0.05);
    assert_eq!(r["sosc"]["status"], "satisfied");
    assert_eq!(r["state"]["v_re"].as_array().unwrap().len(), 14);

    let out = run(&[
        "verify",
        "--case",
        path(&case),
        "--meas",
        path(&meas),
        "--state",
        path(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn perturbed_state_fails_verification() {
    let dir = TempDir::new().unwrap();
    let meas = synth(&dir, &["--pmu-count", "3"]);
    let case = data("case14.m");
    let report = dir.path().join("report.json");
    assert_eq!(
        code(&run(&[
            "estimate",
            "--case",
            path(&case),
            "--meas",
            path(&meas),
            "--report",
            path(&report)
        ])),
        0
    );

    let mut r = json(&report);
    let v = r["state"]["v_re"][4].as_f64().unwrap();
    r["state"]["v_re"][4] = serde_json::json!(v + 1e-3);
    std::fs::write(&report, r.to_string()).unwrap();
    let out = run(&[
        "verify",
        "--case",
        path(&case),
        "--meas",
        path(&meas),
        "--state",
        path(&report),
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn synth_is_reproducible() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let (ma, mb) = (
        synth(&a, &["--pmu-count", "3"]),
        synth(&b, &["--pmu-count", "3"]),
    );
    assert_eq!(std::fs::read(ma).unwrap(), std::fs::read(mb).unwrap());
    let c = TempDir::new().unwrap();
    let mc = synth(&c, &["--pmu-count", "3", "--stream", "1"]);
    assert_ne!(
        std::fs::read(a.path().join("meas.json")).unwrap(),
        std::fs::read(mc).unwrap()
    );
}

#[test]
fn explicit_buses_and_zero_profile() {
    let dir = TempDir::new().unwrap();
    let meas = synth(&dir, &["--pmu-buses", "2,4,6", "--profile", "zero"]);
    let m = json(&meas);
    let buses: Vec<u64> = m["pmu"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["bus"].as_u64().unwrap())
        .collect();
    assert_eq!(buses, [2, 4, 6]);
    assert_eq!(m["pmu"][0]["v_lo"], m["pmu"][0]["v_hi"]);
}

#[test]
fn iteration_cap_exits_three() {
    let dir = TempDir::new().unwrap();
    let meas = synth(&dir, &["--pmu-count", "3"]);
    let case = data("case14.m");
    let report = dir.path().join("report.json");
    let out = run(&[
        "estimate",
        "--case",
        path(&case),
        "--meas",
        path(&meas),
        "--max-iter",
        "1",
        "--report",
        path(&report),
    ]);
    assert_eq!(code(&out), 3);
    assert_eq!(json(&report)["status"], "max_iter");
}

#[test]
fn missing_pmus_exit_four() {
    let dir = TempDir::new().unwrap();
    let meas = synth(&dir, &["--pmu-count", "0"]);
    let case = data("case14.m");
    let report = dir.path().join("report.json");
    let out = run(&[
        "estimate",
        "--case",
        path(&case),
        "--meas",
        path(&meas),
        "--report",
        path(&report),
    ]);
    assert_eq!(code(&out), 4);
}

#[test]
fn bad_input_exit_two() {
    let dir = TempDir::new().unwrap();
    let meas = dir.path().join("meas.json");
    std::fs::write(&meas, "{\"pmu\": [], \"rtu\": [], \"extra\": 1}").unwrap();
    let case = data("case14.m");
    let report = dir.path().join("report.json");
    let out = run(&[
        "estimate",
        "--case",
        path(&case),
        "--meas",
        path(&meas),
        "--report",
        path(&report),
    ]);
    assert_eq!(code(&out), 2);

    let missing = dir.path().join("absent.m");
    let out = run(&[
        "synth",
        "--case",
        path(&missing),
        "--pmu-count",
        "1",
        "--out",
        path(&meas),
    ]);
    assert_eq!(code(&out), 2);

    let out = run(&[
        "synth",
        "--case",
        path(&case),
        "--pmu-count",
        "3",
        "--out",
        path(&meas),
    ]);
    assert_eq!(
        code(&out),
        2,
        "default RTU fraction cannot be met with 3 PMUs on 14 buses"
    );
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&run(&["estimate"])), 1);
    assert_eq!(code(&run(&["nonsense"])), 1);
    let case = data("case14.m");
    let out = run(&[
        "synth",
        "--case",
        path(&case),
        "--pmu-count",
        "2",
        "--pmu-frac",
        "0.1",
        "--out",
        "x.json",
    ]);
    assert_eq!(code(&out), 1);
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
}

#[test]
fn bench_writes_summary() {
    let dir = TempDir::new().unwrap();
    let case = data("case14.m");
    let report = dir.path().join("bench.json");
    let out = Command::new(env!("CARGO_BIN_EXE_ecp-se"))
        .args([
            "bench",
            "--case",
            path(&case),
            "--pmu-count",
            "3",
            "--rtu-frac",
            "0.75",
            "--trials",
            "4",
            "--seed",
            "2",
        ])
        .args(["--report", path(&report)])
        .env("ECP_SE_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let s = json(&report);
    assert_eq!(s["trials"], 4);
    assert_eq!(s["failures"], 0);
    assert_eq!(s["records"].as_array().unwrap().len(), 4);
    assert!(s["mean_sigma_ss"].as_f64().unwrap() < 1e-3);

    let seq = dir.path().join("seq.json");
    let out = run(&[
        "bench",
        "--case",
        path(&case),
        "--pmu-count",
        "3",
        "--rtu-frac",
        "0.75",
        "--trials",
        "4",
        "--seed",
        "2",
        "--sequential",
        "--report",
        path(&seq),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&seq)["mean_sigma_ss"], s["mean_sigma_ss"]);
}

#[test]
fn bad_thread_count_rejected() {
    let out = Command::new(env!("CARGO_BIN_EXE_ecp-se"))
        .args([
            "bench",
            "--case",
            path(&data("case14.m")),
            "--pmu-count",
            "3",
            "--rtu-frac",
            "0.75",
            "--trials",
            "1",
            "--report",
            "x.json",
        ])
        .env("ECP_SE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}
