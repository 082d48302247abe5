use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn irwri(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_irwri"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Coarse inclusion models and noise-free data in `dir`.
fn prepare(dir: &Path) -> PathBuf {
    let models = dir.join("models");
    let out = irwri(&["model", "inclusion", "--dx", "50", "--dz", "50", "--out", s(&models)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let data = dir.join("data");
    let out = irwri(&[
        "forward",
        "--model",
        s(&models.join("true.bin")),
        "--survey",
        s(&models.join("inclusion_survey.json")),
        "--out",
        s(&data),
        "--pml-velocity",
        "3500",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    models
}

fn write_config(dir: &Path, name: &str, out_dir: &str, extra: &str) -> PathBuf {
    let path = dir.join(name);
    let text = format!(
        r#"{{
  "initial_model": "models/homogeneous_start.bin",
  "data_dir": "data",
  "truth_model": "models/true.bin",
  "output_dir": "{out_dir}",
  "mode": "irwri",
  "flags": {{ "bounds_on": true, "tv_on": true }},
  "bounds": {{ "kind": "truth_range" }},
  "schedule": {{ "frequencies": {{ "kind": "simultaneous", "frequencies": [2.5, 5.0] }}, "k_max": 3 }}{extra}
}}"#
    );
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn invalid_spacing_names_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = irwri(&["model", "inclusion", "--dx", "0", "--out", s(dir.path())]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--dx"), "{}", stderr(&out));
}

#[test]
fn missing_input_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = irwri(&[
        "forward",
        "--model",
        s(&dir.path().join("absent.bin")),
        "--survey",
        s(&dir.path().join("absent.json")),
        "--out",
        s(&dir.path().join("data")),
    ]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

#[test]
fn invert_is_deterministic_and_reproducible_from_its_manifest() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    let read = |out: &str| {
        let root = dir.path().join(out);
        (
            fs::read(root.join("metrics.csv")).unwrap(),
            fs::read(root.join("final_model.bin")).unwrap(),
        )
    };
    for name in ["a", "b"] {
        let cfg = write_config(dir.path(), &format!("{name}.json"), name, "");
        let out = irwri(&["invert", "--config", s(&cfg)]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    let first = read("a");
    assert_eq!(first, read("b"));
    assert_eq!(String::from_utf8_lossy(&first.0).lines().count(), 4);

    let manifest = dir.path().join("a").join("manifest.json");
    let replay = dir.path().join("replay.json");
    fs::copy(&manifest, &replay).unwrap();
    let out = irwri(&["invert", "--config", s(&replay)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    // the manifest records the absolute output directory, so the replay overwrites run a
    assert_eq!(read("a"), first);
}

#[test]
fn missing_data_fails_validation_before_solving() {
    let dir = tempfile::tempdir().unwrap();
    let models = dir.path().join("models");
    let out = irwri(&["model", "inclusion", "--dx", "50", "--dz", "50", "--out", s(&models)]);
    assert_eq!(code(&out), 0);
    let cfg = write_config(dir.path(), "c.json", "out", "");
    let out = irwri(&["invert", "--config", s(&cfg)]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    let cfg = write_config(dir.path(), "c.json", "out", r#", "lamda": 3"#);
    let out = irwri(&["invert", "--config", s(&cfg)]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn solver_breakdown_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    let cfg = write_config(
        dir.path(),
        "c.json",
        "out",
        r#", "backend": { "kind": "conjugate_gradient", "rel_tol": 1e-15, "max_iter_factor": 0 }"#,
    );
    let out = irwri(&["invert", "--config", s(&cfg)]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn import_preserves_raw_values_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let values: Vec<f64> = (0..12).map(|i| 1.0 / (1500.0 + 97.3 * i as f64).powi(2)).collect();
    let raw: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    let src = dir.path().join("raw.f64");
    fs::write(&src, &raw).unwrap();
    let dst = dir.path().join("model.bin");
    let out = irwri(&["model", "import", "--from", s(&src), "--out", s(&dst), "--raw", "3", "4", "10", "10"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(fs::read(&dst).unwrap(), raw);

    let again = dir.path().join("again.bin");
    let out = irwri(&["model", "import", "--from", s(&dst), "--out", s(&again)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(fs::read(&again).unwrap(), raw);
    assert_eq!(
        fs::read(dir.path().join("again.json")).unwrap(),
        fs::read(dir.path().join("model.json")).unwrap()
    );

    let out = irwri(&["model", "import", "--from", s(&src), "--out", s(&dst), "--raw", "3", "5", "10", "10"]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

#[test]
fn report_keeps_every_iteration_of_the_longest_run() {
    let dir = tempfile::tempdir().unwrap();
    let header = "iter,data_residual,wave_residual,model_error,wavefield_error,tv,objective_J,gamma,lambda1";
    let rows = |n: usize| {
        let mut t = vec![header.to_string()];
        t.extend((1..=n).map(|i| format!("{i},1e-3,1e-4,0.1,0.2,1e-5,1.0,0,10")));
        t.join("\n") + "\n"
    };
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    fs::write(&a, rows(3)).unwrap();
    fs::write(&b, rows(5)).unwrap();
    let merged = dir.path().join("merged.csv");
    let out = irwri(&["report", "--out", s(&merged), &format!("wri={}", s(&a)), s(&b)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(&merged).unwrap();
    assert_eq!(text.lines().count(), 1 + 5);
    assert!(text.lines().next().unwrap().contains("wri:data_residual"));
}
