use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_ncmap");

const SMALL: &str = r#"
name = "small"

[problem]
kind = "quadratic"
center = [2.0]
offset = 6.0

[algorithm]
pair = "sincos"
methods = ["euler", "heun"]
h = [0.5]
x0 = [0.5]
max_iter = 200
"#;

fn ncmap(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("NCMAP_OUT");
    if let Some(dir) = env_out {
        cmd.env("NCMAP_OUT", dir);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("cfg.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn passing_run_exits_zero_and_writes_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    let o = ncmap(&["run", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["outcome"], "pass");
    assert_eq!(manifest["config"]["algorithm"]["max_iter"], 200);
    assert!(manifest["rng_algorithm"].as_str().unwrap().contains("chacha20"));
    let csv = fs::read_to_string(out.join("heun_h0_s0.csv")).unwrap();
    assert_eq!(csv.lines().count(), 202);
    assert!(csv.starts_with("k,x0,y0,J,phase,coord,evals\n0,"));
}

#[test]
fn failing_check_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{SMALL}\n[checks]\nmax_filtered_error = 1e-300\n"));
    let o = ncmap(&["run", &cfg], Some(&tmp.path().join("o")));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn config_error_exits_two_with_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &SMALL.replace("h = [0.5]", "h = [0.5"));
    let o = ncmap(&["run", &cfg], Some(&tmp.path().join("o")));
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line"), "{err}");

    let o = ncmap(&["run", "--preset", "nope"], Some(&tmp.path().join("o")));
    assert_eq!(o.status.code(), Some(2));
    let o = ncmap(&["run", tmp.path().join("missing.toml").to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn divergence_exits_three_and_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL
        .replace("methods = [\"euler\", \"heun\"]", "methods = []")
        .replace("h = [0.5]", "h = [10.0]")
        .replace("name = \"small\"", "name = \"small\"\nbaselines = [\"fd_gd\"]");
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("o");
    let o = ncmap(&["run", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let run = &manifest["runs"][0];
    assert_eq!(run["status"], "diverged");
    assert!(run["diverged_at"].as_u64().unwrap() > 0);
    assert!(out.join("fd_gd_h0_s0.csv").exists());
}

#[test]
fn sweep_needs_two_step_sizes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let o = ncmap(&["sweep", &cfg], Some(&tmp.path().join("o")));
    assert_eq!(o.status.code(), Some(2));

    let cfg = write_config(tmp.path(), &SMALL.replace("h = [0.5]", "h = [0.5, 0.1]"));
    let out = tmp.path().join("sweep");
    let o = ncmap(&["sweep", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0));
    let table = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
}

#[test]
fn out_flag_beats_env_beats_config() {
    let tmp = tempfile::tempdir().unwrap();
    let from_cfg = tmp.path().join("cfg_out");
    let text = SMALL.replace("name = \"small\"", &format!("name = \"small\"\noutput = {:?}", from_cfg.to_str().unwrap()));
    let cfg = write_config(tmp.path(), &text);

    let env_dir = tmp.path().join("env_out");
    assert_eq!(ncmap(&["run", &cfg], Some(&env_dir)).status.code(), Some(0));
    assert!(env_dir.join("manifest.json").exists());
    assert!(!from_cfg.exists());

    let flag_dir = tmp.path().join("flag_out");
    assert_eq!(ncmap(&["run", &cfg, "--out", flag_dir.to_str().unwrap()], Some(&env_dir)).status.code(), Some(0));
    assert!(flag_dir.join("manifest.json").exists());

    assert_eq!(ncmap(&["run", &cfg], None).status.code(), Some(0));
    assert!(from_cfg.join("manifest.json").exists());
}

#[test]
fn seed_flag_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let noisy = format!("{SMALL}\n[noise]\nsigma = 0.2\nseeds = [1, 2]\n");
    let cfg = write_config(tmp.path(), &noisy);
    let read = |dir: &Path| fs::read(dir.join("euler_h0_s9.csv")).unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for d in [&a, &b] {
        assert_eq!(ncmap(&["run", &cfg, "--seed", "9", "--out", d.to_str().unwrap()], None).status.code(), Some(0));
    }
    assert_eq!(read(&a), read(&b));
    assert!(!a.join("euler_h0_s1.csv").exists());
}

#[test]
fn verify_default_preset_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("v");
    let o = ncmap(&["verify", "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let table = fs::read_to_string(out.join("verify.csv")).unwrap();
    assert!(table.starts_with("case,dim,point,slope,r_squared,exact_cancellation,passed\n"));
    assert!(!table.contains(",false\n"));
}

#[test]
fn show_preset_lists_and_prints() {
    let o = ncmap(&["show-preset"], None);
    let names = String::from_utf8_lossy(&o.stdout);
    for p in ["fig2", "fig3", "fig4", "fig5", "verify"] {
        assert!(names.lines().any(|l| l == p));
    }
    let o = ncmap(&["show-preset", "fig2"], None);
    assert!(String::from_utf8_lossy(&o.stdout).contains("max_iter = 400"));
}
