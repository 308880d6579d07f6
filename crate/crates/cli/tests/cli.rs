use std::path::Path;
use std::process::{Command, Output};

fn pnest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pnest")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn list_scenarios_names_every_preset() {
    let out = pnest(&["list-scenarios"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for id in ["fig1-omega", "fig2-desk", "fig34-error-pdf", "fig5-desk", "fig6-transform-ber", "fig8-realization"] {
        assert!(text.contains(id), "{id}");
    }
}

#[test]
fn run_writes_identical_csv_twice() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.toml",
        "scenario = \"fig2-desk\"\nn_sub = 64\ndim = 4\ntrials = 4\nsnr_db = [20.0, 30.0]\n",
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let out = pnest(&["run", "--config", &cfg, "--out", d.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let x = std::fs::read(a.join("ber_vs_snr.csv")).unwrap();
    let y = std::fs::read(b.join("ber_vs_snr.csv")).unwrap();
    assert_eq!(x, y);
    let text = String::from_utf8(x).unwrap();
    assert!(text.lines().any(|l| l.starts_with("# config_sha256=")));
    assert!(text.lines().any(|l| l == "# master_seed=1"));
    assert!(a.join("config.toml").exists());
}

#[test]
fn invalid_config_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "trials = 0\ndim = 7\n");
    let out = pnest(&["run", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("trials"), "{err}");
    assert!(err.contains("divide"), "{err}");
}

#[test]
fn unknown_key_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "snr = [1.0]\n");
    let out = pnest(&["run", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unreadable_output_dir_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "occupied", "x");
    let cfg = write(dir.path(), "cfg.toml", "n_sub = 64\ndim = 4\ntrials = 1\nestimators = [\"cpe\"]\n");
    let out = pnest(&["run", "--config", &cfg, "--out", &file]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn quick_verify_passes() {
    let out = pnest(&["verify", "--quick"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn injected_fault_fails_verification() {
    let out = pnest(&["verify", "--quick", "--inject-fault"]);
    assert_eq!(out.status.code(), Some(3));
}
