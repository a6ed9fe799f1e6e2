//! End-to-end exercise of the command-line interface, including the
//! documented exit codes.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_probe-audit"))
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let out = dir.join("run");
    let config = format!(
        r#"
seed = 0
out_dir = "{out}"
feature_config = "all_ref"
fp_budget = 0

[corpus]
n_families = 3
datasets_per_family = 2

[corpus.series]
min_series = 30
max_series = 30
series_len = 120

[corpus.window]
context_len = 24
horizon = 8
channels = 1
stride = 8

[[candidates]]
id = "cand_a"
seed = 1
pretrain_sources = ["src_seasonal_noise_00", "src_trend_ar_00", "src_regime_switch_00"]
[candidates.arch.ScratchMlp]
hidden = 8

[[candidates]]
id = "cand_b"
seed = 2
pretrain_sources = ["src_seasonal_noise_01", "src_trend_ar_01", "src_regime_switch_01"]
[candidates.arch.ScratchMlp]
hidden = 8

[[references]]
id = "ref_stat"
seed = 0
arch = "StatEnsemble"

[[references]]
id = "ref_frozen"
seed = 7
[references.arch.FrozenFeature]
d_feat = 8

[pretrain]
epochs = 2
batch_size = 8

[pretrain.optimizer]
learning_rate = 1e-3
weight_decay = 0.01
clip_max_norm = 1.0
beta1 = 0.9
beta2 = 0.999
eps = 1e-8

[probe]
t_probe = 2
batch_size = 4
eps_loss = 1e-6
eps_ae = 1e-6
eps_ref = 1e-6
seed = 0

[probe.optimizer]
learning_rate = 1e-3
weight_decay = 0.01
clip_max_norm = 1.0
beta1 = 0.9
beta2 = 0.999
eps = 1e-8

[split]
n_repeats = 3
base_seed = 0
seed_stride = 10007
clean_calibration_frac = 0.8
max_retries = 1000
"#,
        out = out.display()
    );
    let path = dir.join("run.toml");
    std::fs::write(&path, config).unwrap();
    path
}

#[test]
fn full_cli_pipeline_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("run");

    // missing prerequisite before the corpus exists -> exit 3
    let status = bin()
        .args(["--config", config.to_str().unwrap(), "probe"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));

    for stage in ["gen-corpus", "pretrain", "probe", "audit", "evaluate", "report"] {
        let output = bin()
            .args(["--config", config.to_str().unwrap(), stage])
            .output()
            .unwrap();
        assert!(
            output.status.success(),
            "{stage} failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
    }
    for artifact in ["labels.csv", "traces.jsonl", "decisions.csv", "report.csv", "summary.txt"] {
        assert!(out.join(artifact).exists(), "{artifact} missing");
    }

    // report prints the summary table
    let output = bin()
        .args(["--config", config.to_str().unwrap(), "report"])
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("pair_micro"));
    assert!(stdout.contains("all_ref"));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    // nonexistent config file
    let status = bin()
        .args(["--config", dir.path().join("nope.toml").to_str().unwrap(), "gen-corpus"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // invalid feature-config override on a valid file
    let config = write_config(dir.path());
    let status = bin()
        .args([
            "--config",
            config.to_str().unwrap(),
            "--feature-config",
            "bogus",
            "gen-corpus",
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn flag_overrides_take_effect() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out2 = dir.path().join("other_out");
    let status = bin()
        .args([
            "--config",
            config.to_str().unwrap(),
            "--out",
            out2.to_str().unwrap(),
            "gen-corpus",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out2.join("labels.csv").exists());
}
