mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use deep_lsd::config::RunConfig;
use deep_lsd::pipeline::{self, DirLock};
use deep_lsd::Error;

fn cli(args: &[&str], config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deep-lsd"))
        .args(args)
        .arg("--config")
        .arg(config)
        .output()
        .unwrap()
}

#[test]
fn tiny_pipeline_runs_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::tiny_setup(dir.path());
    let conf = dir.path().join("tiny.conf");
    fs::write(&conf, cfg.resolved()).unwrap();

    let out = cli(&["run-all"], &conf);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "generator.lsdc",
        "basis.lsdb",
        "gan_loss.csv",
        "classifier_loss.csv",
        "encoder_loss.csv",
        "accuracy.csv",
        "cumulative.csv",
        "rank_profiles.csv",
        "denoise.pgm",
        "rotation.csv",
        "rotation_transitions.csv",
        "lsd_report.txt",
        "build-basis.config",
    ] {
        assert!(cfg.out_dir.join(f).is_file(), "{f}");
    }
    assert!(!cfg.out_dir.join(".lock").exists());

    let out = cli(&["verify"], &conf);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.lines().count() >= 10);
    assert!(stdout.lines().all(|l| l.starts_with("PASS ")), "{stdout}");
}

#[test]
fn stages_name_the_missing_producer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        out_dir: dir.path().to_path_buf(),
        ..RunConfig::default()
    };
    match pipeline::run_verify(&cfg) {
        Err(Error::MissingArtifact { producer, .. }) => assert_eq!(producer, "build-basis"),
        other => panic!("{other:?}"),
    }
    let err = pipeline::run_rotate(&cfg).unwrap_err();
    assert!(err.to_string().contains("first"), "{err}");
}

#[test]
fn locked_output_directory_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        out_dir: dir.path().to_path_buf(),
        ..RunConfig::default()
    };
    let held = DirLock::acquire(dir.path()).unwrap();
    assert!(matches!(pipeline::run_train_gan(&cfg), Err(Error::Locked(_))));
    drop(held);
    assert!(!dir.path().join(".lock").exists());
    DirLock::acquire(dir.path()).unwrap();
}

#[test]
fn missing_mnist_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        data_dir: dir.path().join("absent"),
        out_dir: dir.path().join("out"),
        ..RunConfig::default()
    };
    assert!(matches!(pipeline::run_train_classifier(&cfg), Err(Error::Config(_))));
}

#[test]
fn cli_rejects_unknown_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    fs::write(&conf, "seed = 1\nlearning_rate = 0.1\n").unwrap();
    let out = cli(&["verify"], &conf);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key"));
}
