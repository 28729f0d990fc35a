use std::process::Command;

fn basehop() -> Command {
    Command::new(env!("CARGO_BIN_EXE_basehop"))
}

fn specs_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("specs")
}

#[test]
fn bundled_specs_validate() {
    for entry in std::fs::read_dir(specs_dir()).unwrap() {
        let path = entry.unwrap().path();
        let out = basehop().arg("validate").arg(&path).output().unwrap();
        assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "family = \"cfr_vs_gprs\"\ngrid = []\nseeds = [1]\n").unwrap();
    let out = basehop().arg("validate").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid"));

    let out = basehop().arg("run").arg(dir.path().join("absent.toml")).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.toml"));

    let spec = dir.path().join("trace.toml");
    std::fs::write(
        &spec,
        "family = \"lifetime_vs_panel\"\ngrid = [50]\nseeds = [1]\n[base]\ntrace = \"/missing/irr.csv\"\n",
    )
    .unwrap();
    let out = basehop().arg("run").arg(&spec).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/missing/irr.csv"));
}

#[test]
fn run_writes_outputs_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("panel");
    let out = basehop()
        .args(["run"])
        .arg(specs_dir().join("lifetime_vs_panel.toml"))
        .args(["--seed", "11", "--jobs", "2", "--max-slots", "200", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let results = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert!(results.starts_with("sweep,policy,metric,value,ci_low,ci_high,n,status\n"));
    let spec = std::fs::read_to_string(out_dir.join("spec.toml")).unwrap();
    assert!(spec.contains("seeds = [11]") && spec.contains("max_slots = 200"), "{spec}");
    assert!(out_dir.join("timestamp.txt").exists());
}

#[test]
fn oracle_agrees_on_a_tiny_instance() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("tiny.toml");
    std::fs::write(
        &inst,
        "cost = [[3.0, 0.5], [0.4, 2.5]]\ntrace = [[1.0, 0.2], [0.0, 1.5], [0.3, 0.3], [2.0, 0.0], [0.5, 0.5], [1.0, 1.0]]\ne0 = 6.0\ntau = 1.0\nmax_slots = 6\n",
    )
    .unwrap();
    let out = basehop().arg("oracle").arg(&inst).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("exhaustive"));

    let text = std::fs::read_to_string(&inst).unwrap().replace("max_slots = 6", "max_slots = 13");
    std::fs::write(&inst, text).unwrap();
    let out = basehop().arg("oracle").arg(&inst).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}
