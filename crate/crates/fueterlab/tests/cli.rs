use std::path::{Path, PathBuf};
use std::process::Command;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("fueterlab-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    d
}

fn run(sub: &str, config: &Path, out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_fueterlab"))
        .args([sub, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn fueterlab")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn gh_verify_default_config_passes() {
    let out = scratch("gh");
    let o = run("gh-verify", &configs().join("gh-verify.toml"), &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rep: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(rep["schema"], "fueterlab.report/1");
    assert_eq!(rep["pass"], true);
    assert!(out.join("resolved_config.toml").exists());
    assert!(out.join("gh_points.csv").exists());
}

#[test]
fn missing_grid_spacing_is_a_schema_error() {
    let out = scratch("malformed");
    let o = run("z2model", &configs().join("malformed-z2model.toml"), &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid.spacing"));
    let cfg = write(&out, "bad.toml", "schema_version = 1\n[grid]\nspacing = -1.0\n");
    let o = run("frequency", &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid.spacing"));
    let cfg = write(&out, "typo.toml", "schema_version = 1\n[geometry]\nsurface = \"round_sphere\"\nlatice = 64\n");
    let o = run("family", &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("geometry"));
}

#[test]
fn assertion_failure_exits_one_with_report() {
    let out = scratch("fail");
    let cfg = write(&out, "strict.toml", "schema_version = 1\n[tolerances]\nalpha_sum = 0.05\n");
    let o = run("gh-verify", &cfg, &out);
    assert_eq!(o.status.code(), Some(1));
    let rep: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rep["pass"], false);
    assert_eq!(rep["failures"][0], "alpha_norm2_sum_over_leading");
}

const SMALL_CONVERGE: &str = "schema_version = 1
[geometry]
surface = \"round_sphere\"
lattice = 64
[family]
kind = \"vertical\"
log_ladder = [5.0, 10.0, 15.0, 20.0]
";

#[test]
fn converge_emits_one_row_per_scale_and_is_reproducible() {
    let out = scratch("converge");
    let cfg = write(&out, "c.toml", SMALL_CONVERGE);
    let (a, b) = (out.join("a"), out.join("b"));
    assert_eq!(run("converge", &cfg, &a).status.code(), Some(0));
    assert_eq!(run("converge", &cfg, &b).status.code(), Some(0));
    let ca = std::fs::read(a.join("convergence.csv")).unwrap();
    let cb = std::fs::read(b.join("convergence.csv")).unwrap();
    assert_eq!(ca, cb);
    let text = String::from_utf8(ca).unwrap();
    assert_eq!(text.lines().count(), 1 + 4);
    assert!(text.starts_with("scale,log_scale,norm,l2_distance"));
    let resolved = std::fs::read_to_string(a.join("resolved_config.toml")).unwrap();
    assert!(resolved.contains("datum"));
    assert!(resolved.contains("cutoff_r0"));
}

#[test]
fn plots_are_written_on_request() {
    let out = scratch("plots");
    let o = Command::new(env!("CARGO_BIN_EXE_fueterlab"))
        .args(["metric", "--plots", "--threads", "2", "--config"])
        .arg(configs().join("metric.toml"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let svg = std::fs::read_to_string(out.join("metric_profile.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}
