use std::path::Path;
use std::process::{Command, Output};

use haarflow::measures::semicircle_density;

fn haarflow(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_haarflow"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .arg("--quiet")
        .env_remove("HAARFLOW_SEED")
        .output()
        .expect("binary runs")
}

fn write_cfg(dir: &Path, text: &str) -> String {
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn freeconv_of_two_semicircles_is_semicircle_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = haarflow(dir.path(), &["freeconv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("density.csv")).unwrap();
    let mut worst = 0.0f64;
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let (e, d): (f64, f64) = (f[0].parse().unwrap(), f[1].parse().unwrap());
        worst = worst.max((d - semicircle_density(2.0, e)).abs());
    }
    assert!(worst <= 5e-3, "sup error {worst}");
    for f in ["manifest.json", "density.svg", "subordination.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn sample_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = write_cfg(a.path(), "[ensemble]\nn = 4\n[sample]\ntrials = 3\n");
    for d in [&a, &b] {
        let out = haarflow(d.path(), &["sample", "--config", &cfg, "--seed", "11"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let ra = std::fs::read(a.path().join("spectra.csv")).unwrap();
    let rb = std::fs::read(b.path().join("spectra.csv")).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(String::from_utf8(ra).unwrap().lines().count(), 1 + 12);
}

#[test]
fn seed_flag_beats_environment() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = write_cfg(a.path(), "[ensemble]\nn = 5\n");
    let run = |dir: &Path, env: &str, flag: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_haarflow"));
        c.args(["sample", "--quiet", "--config", &cfg, "--out"]).arg(dir).env("HAARFLOW_SEED", env);
        if let Some(s) = flag {
            c.args(["--seed", s]);
        }
        assert!(c.status().unwrap().success());
        std::fs::read_to_string(dir.join("spectra.csv")).unwrap()
    };
    let with_flag = run(a.path(), "1", Some("2"));
    let from_env = run(b.path(), "2", None);
    assert_eq!(with_flag, from_env);
    let manifest = std::fs::read_to_string(b.path().join("manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 2"));
}

#[test]
fn config_errors_exit_one_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "[ensemble]\nn = 10\nbogus = 3\n");
    let out_dir = dir.path().join("out");
    let out = haarflow(&out_dir, &["sample", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    assert!(!out_dir.exists());

    let out = haarflow(&out_dir, &["no-such-command"]);
    assert_eq!(out.status.code(), Some(1));
    let out = haarflow(&out_dir, &["accept", "--only", "99"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn small_subcommands_produce_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "[ensemble]\nn = 24\n[diffuse]\nsteps = 5\ntrials = 2\n[couple]\nsteps = 5\n[locallaw]\nenergies = 0, 0.5\n\
         [stats]\ntrials = 6\nmingap_trials = 400\n",
    );
    for (cmd, file) in [
        ("diffuse", "diffusion.csv"),
        ("couple", "coupling.csv"),
        ("locallaw", "local_law.csv"),
        ("stats", "stats.json"),
    ] {
        let out_dir = dir.path().join(cmd);
        let out = haarflow(&out_dir, &[cmd, "--config", &cfg]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(out_dir.join(file).exists(), "{cmd} -> {file}");
        assert!(out_dir.join("manifest.json").exists());
    }
}

#[test]
fn accept_subset_reports_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = haarflow(dir.path(), &["accept", "--only", "1,2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json = std::fs::read_to_string(dir.path().join("acceptance.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);
    assert!(dir.path().join("free_convolution.csv").exists());
}
