use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn ranlab(args: &[&str], out_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ranlab"));
    cmd.args(args).env_remove("RANLAB_OUTPUT_DIR");
    if let Some(d) = out_dir {
        cmd.env("RANLAB_OUTPUT_DIR", d);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY_TILT: &str = r#"{"experiment": "tilt", "seeds": [1], "tilt": {"n_rings": 1, "n_users": 200, "log_days": 50}}"#;

#[test]
fn version_prints_the_crate_version() {
    let o = ranlab(&["version"], None);
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), format!("ranlab {}", env!("CARGO_PKG_VERSION")));
}

#[test]
fn validate_reports_ok_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"experiment": "beam", "beam": {"m": 3}}"#);
    let o = ranlab(&["validate", cfg.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.starts_with("OK"));
    assert!(out.contains("beam.alpha = 0.5"));
    assert!(!out.contains("beam.m ="));
    assert!(!out.contains("tilt."));
}

#[test]
fn validate_locates_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (r#"{"experiment": "beam", "beam": {"alpha": 1.5}}"#, "beam.alpha"),
        (r#"{"seeds": [1, 2]}"#, "experiment"),
        (r#"{"experiment": "csi", "csi": {"bits": [0]}}"#, "csi.bits[0]"),
        (r#"{"experiment": "tilt", "tilt": {"epsilon": 0}}"#, "tilt.epsilon"),
        (r#"{"experiment": "tilt", "tilt": {"reward": {"gamma": 1}}}"#, "tilt.reward.gamma"),
        ("[1, 2]", "JSON object"),
    ];
    for (i, (text, key)) in cases.iter().enumerate() {
        let cfg = write_config(dir.path(), &format!("c{i}.json"), text);
        let o = ranlab(&["validate", cfg.to_str().unwrap()], None);
        assert_eq!(o.status.code(), Some(2), "{text}");
        assert!(stderr(&o).contains(key), "{text}: {}", stderr(&o));
    }
    let o = ranlab(&["validate", dir.path().join("missing.json").to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_override_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", TINY_TILT);
    let o = ranlab(&["run", cfg.to_str().unwrap(), "--set", "tilt.n_user=10"], Some(&dir.path().join("out")));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("tilt.n_user"));
    assert!(!dir.path().join("out").exists());
    let o = ranlab(&["run", cfg.to_str().unwrap(), "--jobs", "0"], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn diverging_training_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"experiment": "csi", "seeds": [1], "csi": {"n_samples": 200, "epochs": 3, "latent_dims": [4], "lr": 1e300}}"#,
    );
    let o = ranlab(&["run", cfg.to_str().unwrap()], Some(&dir.path().join("out")));
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn tiny_tilt_run_writes_gain_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", TINY_TILT);
    let out = dir.path().join("out");
    let t0 = Instant::now();
    let o = ranlab(&["run", cfg.to_str().unwrap()], Some(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(t0.elapsed() < Duration::from_secs(60));

    let gain = std::fs::read_to_string(out.join("tilt_seed1_gain.csv")).unwrap();
    let mut lines = gain.lines();
    assert_eq!(lines.next(), Some("seed,scheme,features,mean_reward,baseline_mean_reward,gain_pct"));
    assert_eq!(lines.count(), 7);
    let rule = gain.lines().find(|l| l.starts_with("1,rule,")).unwrap();
    assert!(rule.ends_with(",0"));

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["config"]["tilt"]["n_users"], 200);
    let files = manifest["seeds"][0]["files"].as_array().unwrap();
    assert!(files.iter().any(|f| f == "tilt_seed1_log.jsonl"));
    for f in files.iter().chain(manifest["aggregate_files"].as_array().unwrap()) {
        assert!(out.join(f.as_str().unwrap()).exists(), "{f}");
    }
    let svg = std::fs::read_to_string(out.join("tilt_gain.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("35 features"));
}

#[test]
fn output_dir_comes_from_override_or_environment() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{"experiment": "csi", "seeds": [2], "csi": {"n_samples": 100, "epochs": 1, "latent_dims": [2]}}"#;
    let cfg = write_config(dir.path(), "c.json", text);
    let via_set = dir.path().join("a");
    let o = ranlab(&["run", cfg.to_str().unwrap(), "--set", &format!("output_dir={}", via_set.display())], None);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(via_set.join("csi_aggregate.csv").exists());
    let via_env = dir.path().join("b");
    let o = ranlab(&["run", cfg.to_str().unwrap(), "--set", "output_dir=ignored"], Some(&via_env));
    assert!(o.status.success());
    assert!(via_env.join("csi_seed2_rate_distortion.csv").exists());
    assert_eq!(
        std::fs::read(via_set.join("csi_aggregate.csv")).unwrap(),
        std::fs::read(via_env.join("csi_aggregate.csv")).unwrap()
    );
}

#[test]
fn beam_run_is_identical_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{"experiment": "beam", "seeds": [3, 1, 2], "beam": {"sweep_alphas": [0.5], "ctde": {"steps": 60, "trace_every": 20}}}"#;
    let cfg = write_config(dir.path(), "c.json", text);
    let mut outputs = Vec::new();
    for jobs in ["1", "3"] {
        let out = dir.path().join(format!("j{jobs}"));
        let o = ranlab(&["run", cfg.to_str().unwrap(), "--jobs", jobs], Some(&out));
        assert!(o.status.success(), "{}", stderr(&o));
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.file_name().unwrap() != "manifest.json")
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
            .collect();
        files.sort();
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
    let traj = String::from_utf8(outputs[0].iter().find(|f| f.0 == "beam_seed1_trajectory.csv").unwrap().1.clone()).unwrap();
    assert_eq!(traj.lines().next(), Some("alpha,step,r1,r2,pae_flag,seed"));
    let boundary = &outputs[0].iter().find(|f| f.0 == "beam_seed2_boundary.csv").unwrap().1;
    assert!(boundary.starts_with(b"lambda1,lambda2,r1,r2\n"));
}
