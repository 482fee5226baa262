use std::path::Path;
use std::process::Command;

const PLAN: &str = r#"
drops = 2
master_seed = 5
variants = ["RIS-RSMA", "No-RIS-SDMA"]

[scenario]
users = 2
bs_antennas = 1
user_antennas = 1
ris_elements = 2

[[sweep]]
parameter = "power_dbm"
values = [5.0, 15.0]
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rsma-fbl"));
    c.env_remove("RSMA_FBL_OUT_DIR");
    c
}

fn write_plan(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("plan.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn run_writes_results_timing_and_curves() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write_plan(dir.path(), PLAN);
    let out = dir.path().join("out");
    let st = bin().arg("run").arg(&plan).arg("--out").arg(&out).args(["--threads", "1"]).output().unwrap().status;
    assert!(st.success());
    for f in ["results.csv", "results.json", "timing.csv", "delay_vs_power_dbm_RIS-RSMA.dat"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 2);
    assert!(csv.starts_with("power_dbm,error_total,ris_elements,alpha,users,variant,seed,"));
}

#[test]
fn flags_override_the_plan_and_env_sets_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write_plan(dir.path(), PLAN);
    let out = dir.path().join("env_out");
    let st = bin()
        .arg("run")
        .arg(&plan)
        .args(["--drops", "1", "--seed", "9", "--variants", "RIS-SDMA"])
        .env("RSMA_FBL_OUT_DIR", &out)
        .status()
        .unwrap();
    assert!(st.success());
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2);
    assert!(csv.lines().skip(1).all(|l| l.contains(",RIS-SDMA,")));
}

#[test]
fn export_converts_between_formats() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write_plan(dir.path(), PLAN);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(bin().arg("run").arg(&plan).arg("--out").arg(&a).output().unwrap().status.success());
    let st = bin()
        .arg("export")
        .arg(a.join("results.csv"))
        .args(["--format", "json", "--axis", "power_dbm"])
        .arg("--out")
        .arg(&b)
        .status()
        .unwrap();
    assert!(st.success());
    assert_eq!(std::fs::read(a.join("results.json")).unwrap(), std::fs::read(b.join("results.json")).unwrap());
    assert!(b.join("ee_vs_power_dbm_No-RIS-SDMA.dat").exists());
}

#[test]
fn oracle_and_pareto_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let st = bin()
        .args(["oracle", "--drops", "1", "--variants", "RIS-RSMA"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap()
        .status;
    assert!(st.success());
    let text = std::fs::read_to_string(dir.path().join("oracle.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);

    let plan = write_plan(dir.path(), PLAN);
    let st = bin()
        .arg("pareto")
        .arg(&plan)
        .args(["--alphas", "0,1", "--drops", "1", "--variants", "RIS-RSMA"])
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(st.success());
    assert!(dir.path().join("region_RIS-RSMA.dat").exists());
}

#[test]
fn bad_input_fails_with_context() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write_plan(dir.path(), &format!("{PLAN}\nbogus = 1\n"));
    let o = bin().arg("run").arg(&plan).arg("--out").arg(dir.path()).output().unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));

    let o = bin().args(["run", "/nonexistent/plan.toml"]).arg("--out").arg(dir.path()).output().unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/plan.toml"));
}

#[test]
fn shipped_plans_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../plans");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let plan = rsma_fbl::sim::ExperimentPlan::load(&path).unwrap();
            plan.validate().unwrap();
            assert!(!plan.points().unwrap().is_empty());
            n += 1;
        }
    }
    assert!(n >= 4);
}
