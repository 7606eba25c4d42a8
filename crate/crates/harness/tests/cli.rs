use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spinlearn"))
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn identical_configs_give_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("ac01_sampler_tv.json");
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}.csv"));
        let status = bin().args(["sample", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
        assert!(status.success());
        outputs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs.remove(0)).unwrap();
    assert!(text.starts_with("experiment,model_hash,params,metric,value,stderr,seed,config_hash,version\n"));
    assert!(text.lines().any(|l| l.contains(",tv,")));
}

#[test]
fn seed_override_changes_provenance() {
    let cfg = configs().join("ac07_locality.json");
    let a = bin().args(["sweep", "--config"]).arg(&cfg).output().unwrap();
    let b = bin().args(["sweep", "--seed", "99", "--config"]).arg(&cfg).output().unwrap();
    assert!(a.status.success() && b.status.success());
    let b = String::from_utf8(b.stdout).unwrap();
    assert!(b.lines().skip(1).all(|l| l.contains(",99,")));
    assert_ne!(String::from_utf8(a.stdout).unwrap(), b);
}

#[test]
fn failed_check_sets_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    // Radius one on a correlated grid misses most of the conditioning.
    let cfg = write(
        dir.path(),
        "bad.json",
        r#"{"name":"bad","experiment":"sample","model":{"generator":"grid2d","rows":2,"cols":3,"beta":0.8},
            "sampler":{"kind":"ssm","radius":1,"eps":0.01}}"#,
    );
    let out = bin().args(["sample", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("[FAIL]"));
}

#[test]
fn config_errors_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "typo.json", r#"{"name":"x","experiment":"sample","modle":{}}"#);
    let out = bin().args(["sample", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("modle"));

    let out = bin().args(["learn", "--config"]).arg(configs().join("ac01_sampler_tv.json")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn generate_writes_a_loadable_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "gen.json",
        r#"{"name":"tree","experiment":"generate","seed":7,"model":{"generator":"random_tree","n":50,"beta":0.3}}"#,
    );
    let model = dir.path().join("tree.json");
    let out = bin().args(["generate", "--config"]).arg(&cfg).arg("--out").arg(&model).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.contains(",edges,49.0,"));

    // The generated file feeds a second experiment through the file generator.
    let g: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(g["n"], 50);
    let cfg = write(
        dir.path(),
        "use.json",
        r#"{"name":"use","experiment":"invert_audit","model":{"generator":"file","path":"tree.json"},
            "sampler":{"kind":"tree"},"inverter":{"draws":200}}"#,
    );
    let out = bin().args(["invert-audit", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn json_reports_share_keys() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let status = bin()
        .args(["anticonc", "--config"])
        .arg(configs().join("ac09_hs_mixture.json"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let rows: Vec<serde_json::Map<String, serde_json::Value>> =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(rows.len() >= 3);
    let keys: Vec<&String> = rows[0].keys().collect();
    assert!(rows.iter().all(|r| r.keys().collect::<Vec<_>>() == keys));
}
