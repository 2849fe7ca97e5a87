use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn pdeopt(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdeopt"))
        .args(args)
        .env("PDEOPT_OUTPUT_DIR", out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn poisson_run_writes_history() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = configs().join("poisson_control.toml");
    let o = pdeopt(&["run", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("history.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("iter,cost,grad_norm,step"));
    let rows: Vec<&str> = lines.collect();
    let summary = stdout(&o);
    assert!(summary.starts_with("poisson_control: converged after"), "{summary}");
    let iterations: usize = summary.split_whitespace().nth(3).unwrap().parse().unwrap();
    assert_eq!(rows.last().unwrap().split(',').next().unwrap(), iterations.to_string());
    assert_eq!(rows.len(), iterations + 1);
    assert!(out.join("poisson_control.vtk").exists());
}

#[test]
fn unknown_problem_lists_valid_names() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "problem = \"heat_control\"\n");
    let o = pdeopt(&["run", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("heat_control"));
    for name in ["poisson_control", "shape_poisson", "topopt_source", "spacemapping_flow"] {
        assert!(err.contains(name), "{err}");
    }
    assert!(!dir.path().join("history.csv").exists());
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    for (text, key) in [
        ("problem = \"poisson_control\"\n[params]\nbeta = 1.0\n", "params.beta"),
        ("problem = \"poisson_control\"\n[optimizer]\nrtoll = 1e-3\n", "rtoll"),
        (
            "problem = \"poisson_control\"\n[params]\nalpha = -1.0\n",
            "params.alpha",
        ),
        (
            "problem = \"poisson_control\"\n[mesh]\nresolution = 0\n",
            "mesh.resolution",
        ),
    ] {
        let cfg = write_config(dir.path(), text);
        let o = pdeopt(&["run", cfg.to_str().unwrap()], dir.path());
        assert_eq!(o.status.code(), Some(1), "{text}");
        assert!(stderr(&o).contains(key), "{key}: {}", stderr(&o));
    }
}

#[test]
fn iteration_limit_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "problem = \"poisson_control\"\n[optimizer]\nmax_iter = 1\n");
    let o = pdeopt(&["run", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stdout(&o).contains("not converged after 1 iterations"),
        "{}",
        stdout(&o)
    );
    let csv = fs::read_to_string(dir.path().join("history.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn gradient_check_passes_and_catches_corruption() {
    let dir = tempfile::tempdir().unwrap();
    for problem in ["poisson_control", "shape_poisson", "constrained_control"] {
        let cfg = write_config(dir.path(), &format!("problem = \"{problem}\"\n"));
        let o = pdeopt(&["gradient-check", cfg.to_str().unwrap()], dir.path());
        assert_eq!(o.status.code(), Some(0), "{problem}: {}{}", stdout(&o), stderr(&o));
        assert!(stdout(&o).contains("pass"));

        let cfg = write_config(
            dir.path(),
            &format!("problem = \"{problem}\"\n[gradient_check]\nscale = 1.01\n"),
        );
        let o = pdeopt(&["gradient-check", cfg.to_str().unwrap()], dir.path());
        assert_eq!(o.status.code(), Some(2), "{problem}: {}", stdout(&o));
        assert!(stdout(&o).contains("FAIL"));
    }
}

#[test]
fn gradient_check_needs_a_gradient() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "problem = \"topopt_source\"\n");
    let o = pdeopt(&["gradient-check", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn output_dir_comes_from_config_unless_overridden() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            "problem = \"spacemapping_semilinear\"\noutput_dir = \"{}\"\n",
            dir.path().join("from_config").display()
        ),
    );
    let o = Command::new(env!("CARGO_BIN_EXE_pdeopt"))
        .args(["run", cfg.to_str().unwrap()])
        .env_remove("PDEOPT_OUTPUT_DIR")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("from_config/history.csv").exists());

    let o = pdeopt(&["run", cfg.to_str().unwrap()], &dir.path().join("from_env"));
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("from_env/history.csv").exists());
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("topopt_source.toml");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(pdeopt(&["run", cfg.to_str().unwrap()], &a).status.code(), Some(0));
    assert_eq!(pdeopt(&["run", cfg.to_str().unwrap()], &b).status.code(), Some(0));
    assert_eq!(
        fs::read(a.join("history.csv")).unwrap(),
        fs::read(b.join("history.csv")).unwrap()
    );
    assert_eq!(
        fs::read(a.join("topopt_source.vtk")).unwrap(),
        fs::read(b.join("topopt_source.vtk")).unwrap()
    );
}

#[test]
fn list_names_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let o = pdeopt(&["list"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 6);
}
