use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_batchqn"))
}

fn body(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(String::from)
        .collect()
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "restarts = [1, 2]\nreps = 4\nmax_iters = 5\ndim = 3\nseed = 3\n").unwrap();
    let status = bin()
        .args(["convergence", "--config"])
        .arg(&cfg)
        .args(["--restarts", "2", "--out-dir"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let crossings = body(&dir.path().join("convergence/crossings.csv"));
    assert_eq!(crossings.len(), 2);
    assert!(crossings[1].starts_with("2,2,"));
    let raw = std::fs::read_to_string(dir.path().join("convergence/curves.csv")).unwrap();
    assert!(raw.contains("# seed=3\n"));
    assert!(!raw.contains('\r'));
}

#[test]
fn bad_input_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["bobench", "--scheme", "xyz", "--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scheme"));
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "unknown_key = 1\n").unwrap();
    let status = bin().args(["artifacts", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn deterministic_bobench_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        let status = bin()
            .args(["bobench", "--objective", "sphere", "--dim", "2", "--trials", "12", "--reps", "1", "--deterministic", "--out-dir"])
            .arg(d)
            .status()
            .unwrap();
        assert!(status.success());
    }
    for f in ["summary.csv", "traces.jsonl", "summary.json"] {
        assert_eq!(
            std::fs::read(a.path().join("bobench").join(f)).unwrap(),
            std::fs::read(b.path().join("bobench").join(f)).unwrap(),
            "{f}"
        );
    }
    let rows = body(&a.path().join("bobench/summary.csv"));
    assert_eq!(rows[0], "Objective,D,Method,BestValue,Runtime,Iters");
    assert_eq!(rows.len(), 4);
}

#[test]
fn artifacts_default_cases() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin().args(["artifacts", "--out-dir"]).arg(dir.path()).status().unwrap();
    assert!(status.success());
    for case in ["lbfgsb_B3", "bfgs_B3", "bfgs_B10"] {
        for f in ["h_true.csv", "h_seq.csv", "h_cbe.csv", "report.json"] {
            assert!(dir.path().join("artifacts").join(case).join(f).exists(), "{case}/{f}");
        }
    }
    let manifest: String = std::fs::read_to_string(dir.path().join("artifacts/manifest.json")).unwrap();
    assert!(manifest.contains("\"failed\": []"));
}
