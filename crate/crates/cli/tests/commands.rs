use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use steer_cli::commands::*;
use steer_cli::manifest::{sha256_file, RunManifest};
use steer_cli::{CliError, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC};
use steer_core::report::parse_tsv;
use steer_core::{DropoutKind, Error};

const GEN: &str = "tracks = 2\nsamples_per_track = 12\nseed = 4\nimage_height = 17\nimage_width = 25\n";
const NET: &str = "conv_channels = 2,3\nconv_strides = 2,1\nfc_widths = 6,1\nepochs = 2\nbatch_size = 4\nlearning_rate = 0.01\n";

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn dataset(dir: &Path) -> PathBuf {
    let cfg = write(dir, "gen.kv", GEN);
    let out = dir.join("data");
    cmd_dataset(&DatasetOpts {
        config: cfg,
        out: out.clone(),
        seed: None,
        force: false,
    })
    .unwrap();
    out.join(DATASET_FILE)
}

fn train(dir: &Path, data: &Path, name: &str, dropout: Option<DropoutKind>) -> PathBuf {
    let cfg = write(dir, "net.kv", NET);
    let out = dir.join(name);
    cmd_train(&TrainOpts {
        data: data.to_path_buf(),
        out: out.clone(),
        config: Some(cfg),
        seed: Some(3),
        dropout,
        resume: None,
        force: false,
    })
    .unwrap();
    out
}

#[test]
fn dataset_manifest_hashes_content() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path());
    let run = RunManifest::read(&tmp.path().join("data")).unwrap();
    assert_eq!(run.command, "dataset");
    assert_eq!(run.outputs.len(), 1);
    assert_eq!(run.outputs[0].sha256, sha256_file(&data).unwrap());
    assert!(run.stale_outputs().unwrap().is_empty());
    assert_eq!(run.config["tracks"], "2");
}

#[test]
fn dataset_same_seed_same_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "gen.kv", GEN);
    let run = |name: &str| {
        let out = tmp.path().join(name);
        cmd_dataset(&DatasetOpts {
            config: cfg.clone(),
            out: out.clone(),
            seed: Some(11),
            force: false,
        })
        .unwrap();
        fs::read(out.join(DATASET_FILE)).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn dataset_missing_key_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "gen.kv", "tracks = 2\n");
    let err = cmd_dataset(&DatasetOpts {
        config: cfg,
        out: tmp.path().join("d"),
        seed: None,
        force: false,
    })
    .unwrap_err();
    assert!(matches!(&err, CliError::Core(Error::MissingKey(k)) if k == "samples_per_track"));
    assert_eq!(err.exit_code(), EXIT_CONFIG);
}

#[test]
fn dataset_refuses_overwrite_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    dataset(tmp.path());
    let opts = DatasetOpts {
        config: tmp.path().join("gen.kv"),
        out: tmp.path().join("data"),
        seed: None,
        force: false,
    };
    let err = cmd_dataset(&opts).unwrap_err();
    assert!(matches!(err, CliError::Exists(_)));
    assert_eq!(err.exit_code(), EXIT_IO);
    cmd_dataset(&DatasetOpts { force: true, ..opts }).unwrap();
}

#[test]
fn paired_training_logs_share_epoch_axis() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path());
    let a = train(tmp.path(), &data, "spatial", Some(DropoutKind::Spatial));
    let b = train(tmp.path(), &data, "elementwise", Some(DropoutKind::ElementWise));
    let epochs = |dir: &Path| {
        let (_, rows) = parse_tsv(&fs::read_to_string(dir.join(TRAIN_LOG_FILE)).unwrap());
        rows.iter().map(|r| r[2].clone()).collect::<Vec<_>>()
    };
    assert_eq!(epochs(&a), vec!["0", "1", "2"]);
    assert_eq!(epochs(&a), epochs(&b));
    let (_, rows) = parse_tsv(&fs::read_to_string(b.join(TRAIN_LOG_FILE)).unwrap());
    assert_eq!(rows[0][0], "elementwise");
}

#[test]
fn training_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path());
    let a = train(tmp.path(), &data, "a", None);
    let b = train(tmp.path(), &data, "b", None);
    for f in [MODEL_FILE, TRAIN_LOG_FILE] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn resume_continues_epoch_counter() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path());
    let first = train(tmp.path(), &data, "first", None);
    let out = tmp.path().join("second");
    let (log, _) = cmd_train(&TrainOpts {
        data,
        out,
        config: Some(tmp.path().join("net.kv")),
        seed: Some(3),
        dropout: None,
        resume: Some(first.join(MODEL_FILE)),
        force: false,
    })
    .unwrap();
    let epochs: Vec<usize> = log.epochs.iter().map(|e| e.epoch).collect();
    assert_eq!(epochs, vec![3, 4]);
}

#[test]
fn invalid_checkpoint_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path());
    let bad = write(tmp.path(), "bad.ckpt", "not a checkpoint");
    let err = cmd_train(&TrainOpts {
        data,
        out: tmp.path().join("t"),
        resume: Some(bad.clone()),
        ..TrainOpts::default()
    })
    .unwrap_err();
    assert_eq!(err.exit_code(), EXIT_IO);
    let err = cmd_simulate(&SimulateOpts {
        model: tmp.path().join("missing.ckpt"),
        out: tmp.path().join("s"),
        ..SimulateOpts::default()
    })
    .unwrap_err();
    assert_eq!(err.exit_code(), EXIT_IO);
}

fn eval(dir: &Path, models: Vec<PathBuf>, data: &Path, name: &str, passes: usize) -> Result<PathBuf, CliError> {
    let out = dir.join(name);
    cmd_eval(&EvalOpts {
        models,
        data: data.to_path_buf(),
        out: out.clone(),
        config: None,
        passes: Some(passes),
        seed: Some(5),
        force: false,
    })?;
    Ok(out)
}

#[test]
fn eval_reports_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path());
    let a = train(tmp.path(), &data, "spatial", Some(DropoutKind::Spatial));
    let b = train(tmp.path(), &data, "elementwise", Some(DropoutKind::ElementWise));
    let models = vec![a.join(MODEL_FILE), b.join(MODEL_FILE)];
    let r1 = eval(tmp.path(), models.clone(), &data, "e1", 4).unwrap();
    let r2 = eval(tmp.path(), models, &data, "e2", 4).unwrap();
    for f in [SUMMARY_FILE.to_string(), bins_file(0), bins_file(1)] {
        assert_eq!(fs::read(r1.join(&f)).unwrap(), fs::read(r2.join(&f)).unwrap(), "{f}");
    }
    let (header, rows) = parse_tsv(&fs::read_to_string(r1.join(SUMMARY_FILE)).unwrap());
    let mue = header.iter().position(|h| h == "mue").unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][1], "spatial");
    assert_eq!(rows[1][1], "elementwise");
    for r in &rows {
        assert!(r[mue].parse::<f64>().unwrap().is_finite());
    }
}

#[test]
fn eval_needs_two_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path());
    let m = train(tmp.path(), &data, "m", None).join(MODEL_FILE);
    assert!(eval(tmp.path(), vec![m.clone()], &data, "two", 2).is_ok());
    let err = eval(tmp.path(), vec![m], &data, "one", 1).unwrap_err();
    assert!(matches!(err, CliError::Core(Error::TooFewSamples { needed: 2, got: 1 })));
    assert_eq!(err.exit_code(), EXIT_NUMERIC);
}

#[test]
fn simulate_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let data = dataset(tmp.path());
    let m = train(tmp.path(), &data, "m", None).join(MODEL_FILE);
    let run = |name: &str, human: &str| {
        let out = tmp.path().join(name);
        let (outcome, _) = cmd_simulate(&SimulateOpts {
            model: m.clone(),
            out: out.clone(),
            seed: Some(2),
            passes: Some(4),
            human: Some(human.into()),
            ticks: Some(40),
            ..SimulateOpts::default()
        })
        .unwrap();
        (outcome, fs::read(out.join(STEPS_FILE)).unwrap())
    };
    let (o1, a) = run("a", "scripted:corrective");
    let (_, b) = run("b", "scripted:corrective");
    assert_eq!(a, b);
    assert_eq!(o1.records.len(), 40);
    assert!(o1.records.iter().all(|r| r.u_h.is_some() && r.blend_residual() <= 1e-12));
    let (o2, _) = run("c", "none");
    assert!(o2.records.iter().all(|r| r.u_h.is_none() && r.sigma == 0.0));
}

#[test]
fn human_specs() {
    assert!(matches!(parse_human("none"), Ok(steer_core::HumanSource::None)));
    assert!(parse_human("scripted:perfect").is_ok());
    assert!(parse_human("constant=0.01").is_ok());
    assert!(parse_human("scripted:bogus").is_err());
}

#[test]
fn binary_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let exe = env!("CARGO_BIN_EXE_steer");
    let gen = write(tmp.path(), "gen.kv", GEN);
    let out = tmp.path().join("d");
    let status = |args: &[&str]| Command::new(exe).args(args).output().unwrap().status.code();
    let (g, o) = (gen.to_str().unwrap(), out.to_str().unwrap());
    assert_eq!(status(&["dataset", "--config", g, "--out", o]), Some(0));
    assert_eq!(status(&["dataset", "--config", g, "--out", o]), Some(4));
    assert_eq!(status(&["dataset", "--config", g, "--out", o, "--force"]), Some(0));
    let bad = write(tmp.path(), "bad.kv", "tracks = 1\n");
    assert_eq!(status(&["dataset", "--config", bad.to_str().unwrap(), "--out", o, "--force"]), Some(2));
    let missing = tmp.path().join("nope.kv");
    assert_eq!(status(&["dataset", "--config", missing.to_str().unwrap(), "--out", o]), Some(4));
}
