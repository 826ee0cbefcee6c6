use std::path::Path;
use std::process::{Command, Output};

fn slinv(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slinv")).args(args).current_dir(cwd).output().expect("slinv runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn forward_with_zero_data_reports_zero_solution() {
    let tmp = tempfile::tempdir().unwrap();
    let o = slinv(&["forward", "--out", "f"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = std::fs::read_to_string(tmp.path().join("f/report.txt")).unwrap();
    assert!(report.lines().any(|l| l == "u = 0"), "{report}");
    for f in ["u.csv", "dtn.csv", "newton.csv", "manifest.csv"] {
        assert!(tmp.path().join("f").join(f).exists(), "{f}");
    }
    let manifest = std::fs::read_to_string(tmp.path().join("f/manifest.csv")).unwrap();
    assert!(manifest.contains("sha256:u.csv,"));
    assert!(!manifest.contains("wall_time"));
}

#[test]
fn unknown_key_is_named_with_its_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", "experiment = \"forward\"\n\n[newton]\ntol_residul = 1e-11\n");
    let o = slinv(&["run", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("newton.tol_residul") && e.contains(":4:"), "{e}");
}

#[test]
fn wrong_type_and_invalid_value_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "t.toml", "experiment = \"forward\"\nrng_seed = \"seven\"\n");
    let o = slinv(&["run", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("rng_seed"), "{}", stderr(&o));

    let cfg = write(tmp.path(), "v.toml", "experiment = \"forward\"\n[coefficients]\nk_trunc = 12\n");
    let o = slinv(&["run", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("coefficients.k_trunc"), "{}", stderr(&o));

    let cfg = write(tmp.path(), "s.toml", "experiment = \"forward\"\n[stencil]\nbase_eps = 0.5\n");
    let o = slinv(&["run", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("stencil"), "{}", stderr(&o));
}

#[test]
fn subcommand_must_match_config_experiment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "f.toml", "experiment = \"forward\"\n");
    let o = slinv(&["linearize", "--config", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("experiment"), "{}", stderr(&o));
}

#[test]
fn overrides_reach_the_manifest_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dom = write(tmp.path(), "dom.toml", "shape = \"unit_square\"\nn_cells_per_side = 16\n");
    let o = slinv(&["dtn-bank", "--seed", "42", "--domain", &dom, "--out", "d"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let manifest = std::fs::read_to_string(tmp.path().join("d/manifest.csv")).unwrap();
    assert!(manifest.lines().any(|l| l == "rng_seed,42"), "{manifest}");
    let report = std::fs::read_to_string(tmp.path().join("d/report.txt")).unwrap();
    assert!(report.contains("UnitSquare") && report.contains("n_cells_per_side: 16"), "{report}");
}

#[test]
fn linearize_is_byte_identical_across_output_dirs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "lin.toml",
        r#"experiment = "linearize"
cache = false

[domain]
shape = "unit_disk"
n_cells_per_side = 24

[coefficients]
q = { kind = "constant", value = 1.0 }
v3 = { kind = "affine", c0 = 1.0, cx = 0.5, cy = 0.0 }

[linearize]
inputs = [
  { kind = "fourier", mode = 1 },
  { kind = "fourier", mode = 2, parity = "im" },
  { kind = "polynomial", degree = 3, parity = "re" },
]
"#,
    );
    for out in ["a", "b"] {
        let o = slinv(&["run", &cfg, "--out", out], tmp.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["linearization.csv", "manifest.csv"] {
        let a = std::fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let report = std::fs::read_to_string(tmp.path().join("a/report.txt")).unwrap();
    assert!(report.contains("order: 3"), "{report}");
    assert!(!tmp.path().join("a/cache").exists());
}

#[test]
fn obstacle_search_without_obstacle_exits_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "o.toml",
        r#"experiment = "recover_obstacle"

[domain]
shape = "unit_disk"
n_cells_per_side = 32

[obstacle.search]
grid = [3, 3, 3]
max_iters = 40
"#,
    );
    let o = slinv(&["run", &cfg, "--out", "o"], tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let report = std::fs::read_to_string(tmp.path().join("o/report.txt")).unwrap();
    assert!(report.contains("NonIdentifiable"), "{report}");
    assert!(tmp.path().join("o/landscape.csv").exists());
}

#[test]
fn shipped_example_configs_run() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for name in ["forward", "dtn_bank", "density_check"] {
        let cfg = dir.join(format!("{name}.toml"));
        let o = slinv(&["run", cfg.to_str().unwrap(), "--out", name], tmp.path());
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stderr(&o));
    }
}
