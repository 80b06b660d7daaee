use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn pmhmc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmhmc"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

const GAUSSIAN: &str = r#"
model.name = "gaussian"
model.t = 30
sampler.kind = "pm_hmc"
sampler.n = 4
sampler.steps = 10
sampler.h = 0.05
sampler.iterations = 400
sampler.burn_in = 100
seed = 3
out_dir = "out"
convergence.seeds = 2
convergence.dt = 1e-3
convergence.grid = 101
"#;

#[test]
fn missing_config_exits_1() {
    let tmp = TempDir::new().unwrap();
    let out = pmhmc(&["sample", "nope.conf"], tmp.path());
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.conf"));
}

#[test]
fn malformed_config_exits_1() {
    let tmp = TempDir::new().unwrap();
    for (i, text) in [
        "model.name = \"gaussian\"\nsampler.colour = 3\n",
        "model.name = \"gaussian\"\nsampler.n = = 3\n",
        "sampler.n = 3\n",
        "model.name = \"gaussian\"\nsampler.kind = \"nuts\"\n",
    ]
    .iter()
    .enumerate()
    {
        let name = format!("bad{i}.conf");
        write(tmp.path(), &name, text);
        let out = pmhmc(&["sample", &name], tmp.path());
        assert_eq!(code(&out), 1, "{text}");
    }
}

#[test]
fn usage_errors_exit_1() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&pmhmc(&["frobnicate"], tmp.path())), 1);
    assert_eq!(code(&pmhmc(&["sample"], tmp.path())), 1);
    write(tmp.path(), "g.conf", GAUSSIAN);
    assert_eq!(code(&pmhmc(&["sample", "g.conf", "--h", "abc"], tmp.path())), 1);
    assert_eq!(code(&pmhmc(&["sample", "g.conf", "--n", "2", "--n", "3"], tmp.path())), 1);
    assert_eq!(code(&pmhmc(&["sample", "g.conf", "--h", "-1"], tmp.path())), 1);
    assert_eq!(code(&pmhmc(&["--help"], tmp.path())), 0);
}

#[test]
fn runtime_failures_exit_2() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "bad.csv", "y\n1.0\nnot-a-number\n");
    write(
        tmp.path(),
        "g.conf",
        &format!("{GAUSSIAN}model.data = \"bad.csv\"\n"),
    );
    assert_eq!(code(&pmhmc(&["sample", "g.conf"], tmp.path())), 2);

    write(tmp.path(), "h.conf", GAUSSIAN);
    let out = pmhmc(&["diagnose", "h.conf", "--chain", "absent.csv"], tmp.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn generate_sample_diagnose_pipeline_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    write(dir, "g.conf", GAUSSIAN);
    assert_eq!(code(&pmhmc(&["generate", "g.conf"], dir)), 0);
    let data = fs::read_to_string(dir.join("out/data.csv")).unwrap();
    assert!(data.starts_with("y\n"));
    assert_eq!(data.lines().count(), 31);

    // sampling from the written data file matches sampling from regenerated data
    write(dir, "f.conf", &format!("{GAUSSIAN}model.data = \"out/data.csv\"\n"));
    assert_eq!(code(&pmhmc(&["sample", "f.conf", "--out", "a"], dir)), 0);
    assert_eq!(code(&pmhmc(&["sample", "g.conf", "--out", "b"], dir)), 0);
    assert_eq!(code(&pmhmc(&["sample", "g.conf", "--out", "c", "--dump-weights", "--trace"], dir)), 0);
    for f in ["chain.csv", "summary.txt"] {
        let a = fs::read(dir.join("a").join(f)).unwrap();
        assert_eq!(a, fs::read(dir.join("b").join(f)).unwrap(), "{f}");
        assert_eq!(a, fs::read(dir.join("c").join(f)).unwrap(), "{f}");
    }
    let chain = fs::read_to_string(dir.join("a/chain.csv")).unwrap();
    assert_eq!(chain.lines().next().unwrap(), "iter,theta_0,log_phat,hamiltonian,accepted");
    assert_eq!(chain.lines().count(), 301);
    let weights = fs::read_to_string(dir.join("c/weights.csv")).unwrap();
    assert_eq!(weights.lines().count(), 1 + 30 * 4);
    let trace = fs::read_to_string(dir.join("c/trace.csv")).unwrap();
    assert_eq!(trace.lines().next().unwrap(), "t,theta_0,rho_0,H");
    assert_eq!(trace.lines().count(), 12);

    let out = pmhmc(&["diagnose", "g.conf", "--out", "a"], dir);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(dir.join("a/diagnostics.txt")).unwrap();
    assert!(report.contains("draws 300"));
    assert!(report.contains("ks statistic"));
    let acf = fs::read_to_string(dir.join("a/acf.csv")).unwrap();
    assert_eq!(acf.lines().next().unwrap(), "lag,theta");
    assert_eq!(acf.lines().count(), 52);

    let other = pmhmc(&["sample", "g.conf", "--out", "d", "--seed", "4"], dir);
    assert_eq!(code(&other), 0);
    assert_ne!(
        fs::read(dir.join("a/chain.csv")).unwrap(),
        fs::read(dir.join("d/chain.csv")).unwrap()
    );
}

#[test]
fn convergence_with_two_sample_sizes_reports_slope() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    write(dir, "g.conf", &format!("{GAUSSIAN}convergence.fan = true\n"));
    let out = pmhmc(&["convergence", "g.conf", "--n", "1", "--n", "4"], dir);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let errors = fs::read_to_string(dir.join("out/flow_errors.csv")).unwrap();
    assert_eq!(errors.lines().next().unwrap(), "N,seed,sup_error");
    assert_eq!(errors.lines().count(), 1 + 2 * 2);
    let slope = fs::read_to_string(dir.join("out/slope.txt")).unwrap();
    assert!(slope.contains("slope"));
    let fan = fs::read_to_string(dir.join("out/fans/fan_n4_seed1.csv")).unwrap();
    assert_eq!(fan.lines().next().unwrap(), "t,theta_hat,theta_exact");
    assert_eq!(fan.lines().count(), 102);
}

#[test]
fn convergence_rejects_non_gaussian_model() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "d.conf", "model.name = \"diffraction\"\n");
    assert_eq!(code(&pmhmc(&["convergence", "d.conf"], tmp.path())), 1);
}

#[test]
fn diffraction_regions_reported() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    write(
        dir,
        "d.conf",
        r#"
model.name = "diffraction"
model.t = 20
sampler.kind = "pm_mh"
sampler.n = 4
sampler.scales = 0.2
sampler.iterations = 300
sampler.burn_in = 50
region.narrow = "0 -1 -0.5"
region.wide = "0 1 0.5"
"#,
    );
    assert_eq!(code(&pmhmc(&["sample", "d.conf"], dir)), 0);
    let out = pmhmc(&["diagnose", "d.conf"], dir);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(dir.join("out/diagnostics.txt")).unwrap();
    assert!(report.contains("region narrow"));
    assert!(report.contains("region wide"));
    assert!(!report.contains("ks statistic"));
}
