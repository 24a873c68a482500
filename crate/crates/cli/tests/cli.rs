use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bulkdiff(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bulkdiff"))
        .args(args)
        .env("BULKDIFF_OUT", out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run_dir(root: &Path, command: &str) -> PathBuf {
    std::fs::read_dir(root)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_string_lossy().starts_with(command))
        .unwrap_or_else(|| panic!("no {command} run under {}", root.display()))
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().to_string()).collect()
}

const IDENTITY: &str = r#"
seed = 4
[model]
kind = "identity"
[abar]
ms = [0, 1]
samples = 100
[two_point]
side = 9.0
dt = 0.1
replicas = 200
lags = [0.0, 0.5]
cells = 90
write_trajectory = true
[green_kubo]
ms = [0, 1]
lambdas = [0.0, 0.1, 1.0, 10.0]
samples = 100
palm_samples = 100
alpha = 0.5
"#;

#[test]
fn abar_identity_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "id.toml", IDENTITY);
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    for out in [&out_a, &out_b] {
        let o = bulkdiff(&["abar", "--config", cfg.to_str().unwrap(), "--workers", "1"], out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (a, b) = (run_dir(&out_a, "abar"), run_dir(&out_b, "abar"));
    let csv = std::fs::read_to_string(a.join("abar.csv")).unwrap();
    assert_eq!(csv, std::fs::read_to_string(b.join("abar.csv")).unwrap());
    for v in column(&csv, "abar") {
        assert!((v.parse::<f64>().unwrap() - 1.0).abs() < 1e-9);
    }
    for v in column(&csv, "J") {
        assert!(v.parse::<f64>().unwrap().abs() < 1e-9);
    }
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "abar");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert!(manifest["seeds"]["abar/m=1"].is_u64());
    let files: Vec<&str> = manifest["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["path"].as_str().unwrap())
        .collect();
    assert!(files.contains(&"abar.csv") && files.contains(&"abar.json"));
}

#[test]
fn green_kubo_identity_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "id.toml", IDENTITY);
    let o = bulkdiff(
        &["green-kubo", "--config", cfg.to_str().unwrap(), "--alpha-override", "0.25"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = run_dir(tmp.path(), "green-kubo");
    let csv = std::fs::read_to_string(dir.join("gk_sweep.csv")).unwrap();
    assert!(csv.contains("# alpha=0.25\n# alpha_source=override\n"), "{csv}");
    let brackets = column(&csv, "bracket");
    assert_eq!(brackets.len(), 8);
    for b in brackets {
        assert!(b.parse::<f64>().unwrap().abs() < 1e-9);
    }
    // m = 1 with alpha 0.25: threshold 3^-2.5, so 0.1 is in the middle regime
    let regimes = column(&csv, "regime");
    assert_eq!(regimes[4..], ["3^{−αm}", "λ^{α/(2(1+α))}", "constant", "constant"]);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("gk_reports.json")).unwrap()).unwrap();
    assert_eq!(json["alpha"], 0.25);
    assert_eq!(json["reports"].as_array().unwrap().len(), 8);
}

#[test]
fn two_point_identity_writes_table_and_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "id.toml", IDENTITY);
    let o = bulkdiff(&["two-point", "--config", cfg.to_str().unwrap(), "--seed", "9"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = run_dir(tmp.path(), "two-point");
    let csv = std::fs::read_to_string(dir.join("two_point.csv")).unwrap();
    let est = column(&csv, "estimate");
    let se = column(&csv, "SE");
    let disc = column(&csv, "discrepancy");
    assert_eq!(est.len(), 2);
    for (d, s) in disc.iter().zip(&se) {
        assert!(d.parse::<f64>().unwrap().abs() <= 3.0 * s.parse::<f64>().unwrap(), "{csv}");
    }
    assert!(dir.join("trajectory/initial.txt").exists());
    let manifest = std::fs::read_to_string(dir.join("manifest.json")).unwrap();
    assert!(manifest.contains("trajectory/snapshot_0.txt"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), "bad.toml", &IDENTITY.replace("kind = \"identity\"", "kind = \"nope\""));
    let o = bulkdiff(&["abar", "--config", bad.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let o = bulkdiff(&["abar"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let o = bulkdiff(&["frobnicate"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    // no alpha anywhere
    let no_alpha = write_config(tmp.path(), "na.toml", &IDENTITY.replace("alpha = 0.5", ""));
    let o = bulkdiff(&["green-kubo", "--config", no_alpha.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn selftest_passes_and_catches_a_corrupted_model() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bulkdiff(&["selftest"], tmp.path());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{stdout}");
    assert!(stdout.lines().all(|l| l.starts_with("PASS")));
    let bad = write_config(tmp.path(), "bad.toml", "[model]\nkind = \"count-indicator\"\nlambda = 0.5\n");
    let o = bulkdiff(&["selftest", "--config", bad.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(4));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("FAIL configured model audits: ellipticity"), "{stdout}");
}
