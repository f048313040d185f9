use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> String {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/two_processor");
    root.join(name).to_string_lossy().into_owned()
}

fn dtm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dtm")).args(args).output().expect("binary runs")
}

/// `sub` against the two-processor data set, followed by `extra`.
fn on_example(sub: &str, extra: &[&str]) -> Output {
    let (m, b, p) = (data("system.mtx"), data("rhs.txt"), data("plan.txt"));
    let mut args = vec![sub, "--system", &m, "--rhs", &b, "--plan", &p];
    args.extend_from_slice(extra);
    dtm(&args)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
}

#[test]
fn partition_reports_exact_reassembly() {
    let dir = tempfile::tempdir().unwrap();
    let o = on_example("partition", &["--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("reassembly_ok=true"));
    assert!(out.contains("subgraph 0: SPD") && out.contains("subgraph 1: SPD"));
    assert!(dir.path().join("partition.txt").exists());
}

#[test]
fn async_run_converges_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (imp, topo) = (data("impedance.txt"), data("topology.txt"));
    let o = on_example(
        "run",
        &["--impedance", &imp, "--topology", &topo, "--t-max", "2000", "--out", dir.path().to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let t: f64 = value(&out, "converged_at").parse().unwrap();
    assert!(t > 0.0 && t <= 2000.0);
    assert!(value(&out, "final_error").parse::<f64>().unwrap() <= 1e-8);

    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert_eq!(value(&summary, "converged_at"), value(&out, "converged_at"));
    value(&summary, "events").parse::<usize>().unwrap();
    value(&summary, "final_rms").parse::<f64>().unwrap();
    let csv = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,subgraph,rms_residual,port_id,u,omega"));
    assert!(lines.all(|l| l.split(',').count() == 6));
}

#[test]
fn uniform_impedance_and_vtm_mode() {
    let o = on_example("vtm", &["--impedance", "0.5", "--t-max", "500"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_ne!(value(&stdout(&o), "converged_at"), "none");

    let topo = data("topology.txt");
    let o = on_example("run", &["--impedance", "0.5", "--topology", &topo, "--mode", "vtm", "--t-max", "500"]);
    assert!(o.status.success());
}

#[test]
fn unconverged_run_exits_one() {
    let topo = data("topology.txt");
    let o = on_example("run", &["--impedance", "0.5", "--topology", &topo, "--t-max", "20"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(value(&stdout(&o), "converged_at"), "none");
}

#[test]
fn sweep_prints_one_row_per_grid_point() {
    let topo = data("topology.txt");
    let o = on_example("sweep", &["--topology", &topo, "--values", "0.1,1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 1 + 4);
}

#[test]
fn input_errors_name_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let topo = dir.path().join("topology.txt");
    fs::write(&topo, "L 0 1 6.7\n").unwrap();
    let o = on_example("run", &["--impedance", "0.2", "--topology", topo.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("--topology"), "{err}");

    let o = on_example("run", &["--impedance", "0.2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--topology"));

    let o = on_example("run", &["--impedance", "-1", "--topology", &data("topology.txt")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--impedance"));
}

#[test]
fn small_mesh_demo() {
    let dir = tempfile::tempdir().unwrap();
    let o = dtm(&["mesh-demo", "--blocks", "2", "--block-side", "3", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.starts_with("unknowns=49 subgraphs=4"));
    assert_eq!(value(&out, "samples_above_initial_after_round_trip"), "0");
    for f in ["system.mtx", "rhs.txt", "topology.txt", "partition.txt", "trace.csv", "summary.txt"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn verify_passes() {
    let o = dtm(&["verify", "--cases", "5"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS")).count(), 5);
}
