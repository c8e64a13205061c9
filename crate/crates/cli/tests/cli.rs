use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use adk_cli::RunConfig;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn adk(config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adk"))
        .arg("--config")
        .arg(config)
        .arg("--output")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn model_block(gamma0: f64, sigma0: f64, sigma2: f64) -> String {
    format!(
        "[model]\nrho = 0.5\nc = 0.1\nT = 1.0\nsigma0 = {sigma0}\nsigma1 = 0.2\nsigma2 = {sigma2}\nm = 1.0\ngamma0 = {gamma0}\nx_init = 1.0\n"
    )
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn weight_one_never_switches() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = format!(
        "problem = \"linear\"\noutput_dir = \"x\"\nformats = [\"json\"]\n\n{}",
        model_block(1.0, 0.0, 0.0)
    );
    let out = adk(&write_config(tmp.path(), &cfg), tmp.path(), &["--quiet"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let v = json(&tmp.path().join("linear.json"));
    assert_eq!(v["t_star"].as_f64(), Some(1.0));
}

#[test]
fn lq_rejects_nonpositive_a4() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = format!(
        "problem = \"lq\"\noutput_dir = \"x\"\nformats = [\"json\"]\n\n{}",
        model_block(5.0, 0.0, 0.5)
    );
    let out = adk(&write_config(tmp.path(), &cfg), tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("1 − gamma0·sigma2^2 > 0"), "{err}");
}

#[test]
fn lq_rejects_additive_noise() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = format!(
        "problem = \"lq\"\noutput_dir = \"x\"\nformats = [\"json\"]\n\n{}",
        model_block(0.5, 0.1, 0.5)
    );
    let out = adk(&write_config(tmp.path(), &cfg), tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn lq_not_well_posed_is_solver_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = "problem = \"lq\"\noutput_dir = \"x\"\nformats = [\"json\", \"csv\"]\n\n\
               [model]\nrho = 0.5\nc = 0.0\nT = 4.0\nsigma0 = 0.0\nsigma1 = 0.0\nsigma2 = 1.0\n\
               m = 1.0\ngamma0 = 0.8\nx_init = 1.0\n";
    let out = adk(&write_config(tmp.path(), cfg), tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(3));
    let v = json(&tmp.path().join("lq.json"));
    assert_eq!(v["well_posed"], serde_json::Value::Bool(false));
    assert!(v["t_blow"].as_f64().unwrap() > 0.0);
    assert!(v["P0"].is_null());
}

#[test]
fn config_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown = format!(
        "problem = \"linear\"\noutput_dir = \"x\"\nformats = [\"json\"]\ncolour = \"red\"\n\n{}",
        model_block(1.0, 0.0, 0.0)
    );
    let out = adk(&write_config(tmp.path(), &unknown), tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    let infeasible = format!(
        "problem = \"budget\"\noutput_dir = \"x\"\nformats = [\"json\"]\n\n{}\n[budget]\nM = 5.0\n",
        model_block(1.0, 0.0, 0.0)
    );
    let out = adk(&write_config(tmp.path(), &infeasible), tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_is_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = adk(&tmp.path().join("absent.toml"), tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.toml"));
}

#[test]
fn format_flag_limits_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = adk(
        &configs_dir().join("lq.toml"),
        tmp.path(),
        &["--format", "csv", "--quiet"],
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(!tmp.path().join("lq.json").exists());
    let csv = fs::read_to_string(tmp.path().join("riccati.csv")).unwrap();
    assert!(csv.starts_with("t,P,gain,a,c_coef\n"));
}

#[test]
fn csv_headers() {
    let tmp = tempfile::tempdir().unwrap();
    for (name, file, header) in [
        ("linear", "policy.csv", "t,u"),
        ("linear", "value.csv", "t,value"),
        (
            "stop",
            "stopping.csv",
            "x,value,obstacle,u_star,qvi_residual",
        ),
        ("simulate", "trajectory.csv", "t,x,u"),
    ] {
        let dir = tmp.path().join(name);
        let out = adk(
            &configs_dir().join(format!("{name}.toml")),
            &dir,
            &["--quiet"],
        );
        assert_eq!(out.status.code(), Some(0), "{name}");
        let text = fs::read_to_string(dir.join(file)).unwrap();
        assert_eq!(text.lines().next(), Some(header));
        let first_row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        assert!(first_row.iter().all(|f| f.parse::<f64>().is_ok()));
    }
}

#[test]
fn bundled_configs_round_trip() {
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        let cfg = RunConfig::load(&path).unwrap();
        let again = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again, "{}", path.display());
    }
}

#[test]
fn same_seed_same_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["simulate", "lq", "stop", "budget"] {
        let a = tmp.path().join(format!("{name}-a"));
        let b = tmp.path().join(format!("{name}-b"));
        let cfg = configs_dir().join(format!("{name}.toml"));
        assert_eq!(adk(&cfg, &a, &["--quiet"]).status.code(), Some(0));
        assert_eq!(adk(&cfg, &b, &["--quiet"]).status.code(), Some(0));
        for entry in fs::read_dir(&a).unwrap() {
            let file = entry.unwrap().file_name();
            assert_eq!(
                fs::read(a.join(&file)).unwrap(),
                fs::read(b.join(&file)).unwrap(),
                "{name}/{file:?}"
            );
        }
    }
}

#[test]
fn quick_verify_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = "problem = \"verify\"\noutput_dir = \"x\"\nformats = [\"json\"]\n\n[verify]\nseed = 5\nscale = \"quick\"\n";
    let out = adk(&write_config(tmp.path(), cfg), tmp.path(), &[]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert_eq!(
        stdout.lines().filter(|l| l.starts_with("PASS ")).count(),
        12
    );
    let v = json(&tmp.path().join("verify.json"));
    assert_eq!(v["checks"].as_array().unwrap().len(), 12);
}
