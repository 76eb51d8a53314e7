use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_schauder"))
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg(sub)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &TempDir, text: &str) -> PathBuf {
    let p = dir.path().join("config.toml");
    fs::write(&p, text).unwrap();
    p
}

fn report(out: &Path) -> toml::Value {
    toml::from_str(&fs::read_to_string(out.join("report.toml")).unwrap()).unwrap()
}

#[test]
fn shipped_moduli_config_passes_and_embeds_config() {
    let dir = TempDir::new().unwrap();
    let o = run(
        "moduli-check",
        &shipped("moduli-check.toml"),
        dir.path(),
        &[],
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let r = report(dir.path());
    assert_eq!(r["status"].as_str(), Some("pass"));
    assert_eq!(r["config"]["modulus"]["family"].as_str(), Some("power_log"));
    let holder = fs::read_to_string(dir.path().join("holder.csv")).unwrap();
    assert!(holder.contains("0.4,fail"), "{holder}");
    assert!(holder.contains("0.3,pass"), "{holder}");
}

#[test]
fn inverse_log_fails_a4_with_exit_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "[modulus]\nfamily = \"inverse_log\"\ngamma = 2\n");
    let o = run("moduli-check", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(report(dir.path())["status"].as_str(), Some("fail"));
}

#[test]
fn config_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "[modulus]\nfamily = \"power\"\nalpha = 0.5\nextra = 1\n",
    );
    assert_eq!(
        run("moduli-check", &cfg, dir.path(), &[]).status.code(),
        Some(2)
    );
    let missing = dir.path().join("nope.toml");
    assert_eq!(
        run("moduli-check", &missing, dir.path(), &[]).status.code(),
        Some(2)
    );
    let no_section = write_config(&dir, "");
    assert_eq!(
        run("solve", &no_section, dir.path(), &[]).status.code(),
        Some(2)
    );
}

#[test]
fn sampled_checks_require_a_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "[operator]\nkind = \"perturbed_trace\"\nepsilon = 0.1\n",
    );
    assert_eq!(
        run("operator-verify", &cfg, dir.path(), &[]).status.code(),
        Some(2)
    );
    assert_eq!(
        run("operator-verify", &cfg, dir.path(), &["--seed", "5"])
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        report(dir.path())["config"]["sampling"]["seed"].as_integer(),
        Some(5)
    );
}

#[test]
fn reruns_are_byte_identical() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for d in [&a, &b] {
        let o = run(
            "operator-verify",
            &shipped("operator-verify.toml"),
            d.path(),
            &[],
        );
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["report.toml", "theta.csv", "tangential.csv", "scaling.csv"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn pucci_tangential_limit_fails() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "seed = 1\n[operator]\nkind = \"pucci_plus\"\npair = { lambda = 1.0, Lambda = 2.0 }\n",
    );
    let o = run("operator-verify", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    let r = report(dir.path());
    let checks = r["checks"].as_array().unwrap();
    let tangential = checks
        .iter()
        .find(|c| c["name"].as_str() == Some("tangential"))
        .unwrap();
    assert_eq!(tangential["verdict"].as_str(), Some("fail"));
    assert!(r["result"]["tangential"]["error"]
        .as_str()
        .unwrap()
        .contains("not differentiable"));
}

#[test]
fn solved_field_feeds_the_audit() {
    let dir = TempDir::new().unwrap();
    let solve = write_config(
        &dir,
        r#"
[operator]
kind = "linear_trace"
a = [[1.0, 0.0], [0.0, 1.0]]
[grid]
nodes = 65
[solve]
manufactured = { type = "polynomial", terms = [{ coeff = 1.0, p1 = 3, p2 = 0 }, { coeff = -3.0, p1 = 1, p2 = 2 }] }
max_error = 1e-9
[modulus]
family = "power"
alpha = 0.5
[audit]
k_max = 3
field_file = "solution.field"
"#,
    );
    let o = run("solve", &solve, dir.path(), &[]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    assert!(dir.path().join("solution.field").exists());
    let o = run("audit", &solve, dir.path(), &[]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    let csv = fs::read_to_string(dir.path().join("audit.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5, "{csv}");
}

#[test]
fn mms_reports_second_order() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        r#"
[operator]
kind = "perturbed_trace"
epsilon = 0.05
[mms]
u_star = { type = "polynomial", terms = [{ coeff = 0.005, p1 = 2, p2 = 0 }, { coeff = 0.001, p1 = 4, p2 = 0 }] }
drift = { type = "rotation", scale = 0.1 }
nodes = [17, 33, 65]
"#,
    );
    let o = run("mms", &cfg, dir.path(), &[]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    for f in [
        "convergence.csv",
        "source.field",
        "boundary.field",
        "drift.field",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let rows = report(dir.path())["result"]["rows"]
        .as_array()
        .unwrap()
        .clone();
    let order = rows[2]["order"].as_float().unwrap();
    assert!(order > 1.8, "{order}");
}

#[test]
fn flatness_table_with_control() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        r#"
[operator]
kind = "perturbed_trace"
epsilon = 0.5
[modulus]
family = "power"
alpha = 1.0
[grid]
nodes = 65
[audit]
k_max = 3
[flatness]
shape = { type = "polynomial", terms = [{ coeff = 1.0, p1 = 2, p2 = 0 }, { coeff = -1.0, p1 = 0, p2 = 2 }] }
deltas = [0.0, 0.4, 0.8]
bisection_steps = 0
control = { kind = "linear_trace", a = [[1.0, 0.0], [0.0, 1.0]] }
"#,
    );
    let o = run("flatness", &cfg, dir.path(), &[]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    let csv = fs::read_to_string(dir.path().join("flatness.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| l.starts_with("control")).count(), 3);
}

#[test]
fn numerical_breakdown_is_reported_with_exit_one() {
    // A declared lambda above the true value breaks the root-correction bracket.
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        r#"
[operator]
kind = "linear_trace"
a = [[1.0, 0.0], [0.0, 1.0]]
pair = { lambda = 3.0, Lambda = 3.0 }
[modulus]
family = "power"
alpha = 0.5
[grid]
nodes = 33
[audit]
k_max = 2
function = { type = "quadratic", m = [[1.0, 0.0], [0.0, 1.0]] }
"#,
    );
    let o = run("audit", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    let r = report(dir.path());
    assert_eq!(r["status"].as_str(), Some("error"));
    assert!(r["error"].as_str().unwrap().contains("bracket"));
}
