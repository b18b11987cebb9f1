use std::fs;
use std::path::Path;
use std::process::Command;

fn stochphase(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_stochphase"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn body(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn fig3_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = stochphase(&["run", "fig3", "--out", out, "--format", "csv,json", "--seed", "9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("fig3-gain-sweep.csv")).unwrap();
    assert!(csv.contains("# seed = 9"));
    assert!(csv.contains("# kappa = 1e4"));
    assert!(csv.contains("\ngain_sq,nli_tracking_mse,mzi_tracking_mse\n"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fig3-gain-sweep.json")).unwrap()).unwrap();
    let g = json["summary"]["nli_optimal_gain_sq"].as_f64().unwrap();
    assert!((g - 7.4).abs() <= 0.1);
    assert_eq!(json["metadata"]["preset"], "fig3-gain-sweep");
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let o = stochphase(&["run", "fig4", "--out", dir.path().to_str().unwrap()]);
        assert!(o.status.success());
    }
    let name = "fig4-epsilon-sweep.csv";
    assert_eq!(
        fs::read(a.path().join(name)).unwrap(),
        fs::read(b.path().join(name)).unwrap()
    );
}

#[test]
fn timestamp_only_changes_header() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    stochphase(&["run", "fig5", "--set", "flux_points=3", "--out", a.path().to_str().unwrap()]);
    stochphase(&["run", "fig5", "--set", "flux_points=3", "--timestamp", "--out", b.path().to_str().unwrap()]);
    let pa = a.path().join("fig5-scaling.csv");
    let pb = b.path().join("fig5-scaling.csv");
    assert!(fs::read_to_string(&pb).unwrap().contains("# generated_unix = "));
    assert!(!fs::read_to_string(&pa).unwrap().contains("generated_unix"));
    assert_eq!(body(&pa), body(&pb));
}

#[test]
fn validation_errors_exit_one_and_name_keys() {
    let dir = tempfile::tempdir().unwrap();
    let o = stochphase(&[
        "run",
        "custom",
        "--set",
        "kappa=-1",
        "--set",
        "gain_sq=1.0",
        "--set",
        "colour=blue",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("kappa: must be > 0"), "{err}");
    assert!(err.contains("gain_sq: NLI requires G² > 1"), "{err}");
    assert!(err.contains("colour: unknown key"), "{err}");
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn empty_custom_sweep_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let o = stochphase(&["run", "custom", "--set", "sweep_points=0", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn unwritable_output_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = blocker.join("sub");
    let o = stochphase(&["run", "fig3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_with_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "seed = 5\nformat = [\"csv\", \"json\"]\n\n[parameters]\nsweep_key = \"photon_flux\"\nsweep_start = 1e6\nsweep_stop = 1e8\nsweep_points = 4\nkind = \"MZI\"\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = stochphase(&[
        "run",
        "custom",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "8",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("custom.csv")).unwrap();
    assert!(csv.contains("# seed = 8"));
    assert!(csv.contains("# kind = MZI"));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 5);
    assert!(out.join("custom.json").exists());
}

#[test]
fn montecarlo_overlay() {
    let dir = tempfile::tempdir().unwrap();
    let o = stochphase(&[
        "run",
        "fig4",
        "--replicas",
        "2",
        "--set",
        "mc_duration=0.01",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("fig4-epsilon-sweep-montecarlo.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "instrument,gain_sq,epsilon,analytic_mse,empirical_mse,standard_error,n_effective");
    assert_eq!(rows.len(), 7);
    let o = stochphase(&["run", "fig5", "--replicas", "1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
