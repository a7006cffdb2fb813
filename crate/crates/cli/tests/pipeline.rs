use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use vidfuse::data::TemporalMode;
use vidfuse::ScoreMatrix;
use vidfuse_cli::config::{ExperimentConfig, ModelSelection};
use vidfuse_cli::experiment::{run_experiment, INCOMPLETE_MARKER};
use vidfuse_cli::sweep::sweep;

fn smoke_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.toml")
}

fn smoke() -> ExperimentConfig {
    ExperimentConfig::load(&smoke_path()).unwrap()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vidfuse"))
}

fn run_bin(args: &[&str]) -> (i32, String, String) {
    let out = bin().args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn smoke_report_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_experiment(&smoke(), dir.path(), true).unwrap();
    let close = |a: f64, b: f64| (a - b).abs() < 1e-9;
    let golden = [
        (0.6875, 0.6708648989898989),
        (0.6875, 0.744047619047619),
        (0.3125, 0.5042839105339105),
    ];
    assert_eq!(r.models.len(), 3);
    for (m, (acc, ap)) in r.models.iter().zip(golden) {
        assert!(close(m.test.overall_accuracy, acc), "{:?}", m.model);
        assert!(close(m.test.mean_ap, ap), "{:?}", m.model);
        assert!(m.validation_accuracy.is_some());
        assert_eq!(m.test.per_class_ap.len(), 4);
    }
    assert!(close(r.fused.mean_ap, 0.7466517857142858));
    assert!(close(r.final_report.overall_accuracy, 0.6875));
    assert!(close(r.final_report.mean_ap, 0.7901785714285714));
    assert_eq!(
        (r.dataset.train, r.dataset.validation, r.dataset.test),
        (48, 16, 16)
    );
    assert!(!dir.path().join(INCOMPLETE_MARKER).exists());
}

#[test]
fn same_config_gives_identical_artifacts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&smoke(), a.path(), true).unwrap();
    run_experiment(&smoke(), b.path(), true).unwrap();
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert!(fa.len() >= 14);
    assert_eq!(fa, fb);
}

#[test]
fn seed_override_changes_the_run() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&smoke(), a.path(), true).unwrap();
    let mut cfg = smoke();
    cfg.set_seed(8);
    run_experiment(&cfg, b.path(), true).unwrap();
    assert_ne!(
        fs::read(a.path().join("report.json")).unwrap(),
        fs::read(b.path().join("report.json")).unwrap()
    );
}

fn separable() -> ExperimentConfig {
    let mut cfg = smoke();
    cfg.models = ModelSelection::Fusion;
    let s = &mut cfg.data.synth;
    s.temporal_mode = TemporalMode::Stateless;
    s.confusable_pairs.clear();
    s.class_separation = 3.0;
    s.noise = 0.05;
    s.audio_missing_fraction = 0.0;
    cfg
}

#[test]
fn refinement_with_identity_confusion_is_a_no_op() {
    let (on, off) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = separable();
    let r_on = run_experiment(&cfg, on.path(), true).unwrap();
    let mut cfg_off = cfg.clone();
    cfg_off.refine.enabled = false;
    let r_off = run_experiment(&cfg_off, off.path(), true).unwrap();
    assert_eq!(r_on.refinement.as_ref().unwrap().validation_accuracy, 1.0);
    assert_eq!(r_on.final_report, r_off.final_report);
    assert_eq!(r_on.fused, r_off.fused);
    assert_eq!(
        fs::read(on.path().join("scores/refined.test.tsv")).unwrap(),
        fs::read(off.path().join("scores/fused.test.tsv")).unwrap()
    );
    assert!(!off.path().join("confusion.json").exists());
}

#[test]
fn checkpoint_rescoring_reproduces_stored_scores() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_path();
    let run_dir = dir.path().join("run");
    let (code, _, err) = run_bin(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(code, 0, "{err}");
    for model in ["lstm-spatial", "lstm-motion", "fusion"] {
        let again = dir.path().join(format!("again-{model}"));
        let ck = run_dir.join(format!("checkpoints/{model}.json"));
        let (code, _, err) = run_bin(&[
            "score",
            "--config",
            cfg.to_str().unwrap(),
            "--checkpoint",
            ck.to_str().unwrap(),
            "--out",
            again.to_str().unwrap(),
            "--quiet",
        ]);
        assert_eq!(code, 0, "{err}");
        let name = format!("scores/{model}.test.tsv");
        assert_eq!(
            fs::read(again.join(&name)).unwrap(),
            fs::read(run_dir.join(&name)).unwrap()
        );
    }
}

#[test]
fn stage_commands_reproduce_the_end_to_end_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
    let cfg = smoke_path().to_str().unwrap().to_string();
    let ok = |args: &[&str]| {
        let (code, _, err) = run_bin(args);
        assert_eq!(code, 0, "{args:?}: {err}");
    };
    ok(&["run", "--config", &cfg, "--out", &d("run"), "--quiet"]);
    ok(&["synth", "--config", &cfg, "--out", &d("raw"), "--quiet"]);
    ok(&[
        "split",
        "--config",
        &cfg,
        "--data",
        &d("raw"),
        "--out",
        &d("data"),
        "--quiet",
    ]);
    let mut val = Vec::new();
    let mut test = Vec::new();
    for model in ["lstm-spatial", "lstm-motion", "fusion"] {
        ok(&[
            "train",
            "--config",
            &cfg,
            "--data",
            &d("data"),
            "--model",
            model,
            "--out",
            &d("stages"),
            "--quiet",
        ]);
        let ck = d(&format!("stages/checkpoints/{model}.json"));
        for split in ["validation", "test"] {
            ok(&[
                "score",
                "--config",
                &cfg,
                "--data",
                &d("data"),
                "--checkpoint",
                &ck,
                "--split",
                split,
                "--out",
                &d("stages"),
                "--quiet",
            ]);
        }
        val.push(d(&format!("stages/scores/{model}.validation.tsv")));
        test.push(d(&format!("stages/scores/{model}.test.tsv")));
    }
    let fuse = |files: &[String], name: &str| {
        let stages = d("stages");
        let mut args = vec!["fuse", "--out", &stages, "--name", name, "--quiet"];
        args.extend(files.iter().map(String::as_str));
        ok(&args);
    };
    fuse(&val, "fused-val");
    fuse(&test, "fused-test");
    ok(&[
        "confusion",
        "--config",
        &cfg,
        "--data",
        &d("data"),
        "--scores",
        &d("stages/fused-val.tsv"),
        "--out",
        &d("stages"),
        "--quiet",
    ]);
    ok(&[
        "refine",
        "--confusion",
        &d("stages/confusion.json"),
        "--scores",
        &d("stages/fused-test.tsv"),
        "--out",
        &d("stages"),
        "--quiet",
    ]);
    ok(&[
        "eval",
        "--config",
        &cfg,
        "--data",
        &d("data"),
        "--scores",
        &d("stages/refined.tsv"),
        "--out",
        &d("stages"),
        "--quiet",
    ]);
    let read = |p: String| fs::read(p).unwrap();
    assert_eq!(
        read(d("stages/fused-test.tsv")),
        read(d("run/scores/fused.test.tsv"))
    );
    assert_eq!(
        read(d("stages/refined.tsv")),
        read(d("run/scores/refined.test.tsv"))
    );
    let run: serde_json::Value = serde_json::from_slice(&read(d("run/report.json"))).unwrap();
    let eval: serde_json::Value = serde_json::from_slice(&read(d("stages/eval.json"))).unwrap();
    assert_eq!(run["final"], eval);
}

#[test]
fn one_point_sweep_equals_the_fusion_run() {
    let mut cfg = smoke();
    cfg.models = ModelSelection::Fusion;
    let dir = tempfile::tempdir().unwrap();
    let run = run_experiment(&cfg, dir.path(), true).unwrap();
    let s = sweep(
        &cfg,
        &[cfg.fusion.reg.lambda2],
        &[cfg.fusion.reg.lambda3],
        true,
    )
    .unwrap();
    assert_eq!(s.points.len(), 1);
    assert_eq!(s.best, 0);
    assert_eq!(
        s.points[0].test_accuracy,
        run.models[0].test.overall_accuracy
    );
    assert_eq!(
        Some(s.points[0].validation_accuracy),
        run.models[0].validation_accuracy
    );
}

#[test]
fn zero_cell_matches_unregularized_run() {
    let mut cfg = smoke();
    cfg.models = ModelSelection::Fusion;
    cfg.fusion.reg.lambda2 = 0.0;
    cfg.fusion.reg.lambda3 = 0.0;
    let dir = tempfile::tempdir().unwrap();
    let run = run_experiment(&cfg, dir.path(), true).unwrap();
    let s = sweep(&smoke(), &[0.0, 0.1], &[0.0, 0.01], true).unwrap();
    assert_eq!(s.points.len(), 4);
    let zero = &s.points[0];
    assert_eq!((zero.lambda2, zero.lambda3), (0.0, 0.0));
    assert_eq!(zero.test_accuracy, run.models[0].test.overall_accuracy);
    assert_eq!(zero.zero_rows, 0);
}

#[test]
fn sweep_command_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_path();
    let (code, out, err) = run_bin(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--lambda2",
        "0,1",
        "--lambda3",
        "0",
        "--out",
        dir.path().to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(out.is_empty());
    let v: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("sweep.json")).unwrap()).unwrap();
    assert_eq!(v["points"].as_array().unwrap().len(), 2);
    assert!(dir.path().join("sweep.txt").exists());
}

#[test]
fn gradcheck_command_and_negative_control() {
    let (code, out, _) = run_bin(&["gradcheck", "--instances", "3"]);
    assert_eq!(code, 0);
    assert!(out.contains("PASS"));
    assert!(out.contains("head.w"));
    let (code, out, _) = run_bin(&[
        "gradcheck",
        "--instances",
        "1",
        "--target",
        "lstm",
        "--corrupt",
    ]);
    assert_eq!(code, 3);
    assert!(out.contains("FAIL"));
}

#[test]
fn exit_codes() {
    assert_eq!(run_bin(&["--help"]).0, 0);
    assert_eq!(run_bin(&["--version"]).0, 0);
    assert_eq!(run_bin(&[]).0, 1);
    assert_eq!(run_bin(&["run", "--bogus"]).0, 1);
    let dir = tempfile::tempdir().unwrap();
    let bad_cfg = dir.path().join("bad.toml");
    fs::write(&bad_cfg, "[lstm]\nlearning_rate = -1.0\n").unwrap();
    assert_eq!(
        run_bin(&["run", "--config", bad_cfg.to_str().unwrap(), "--quiet"]).0,
        1
    );

    let data = dir.path().join("data");
    fs::create_dir(&data).unwrap();
    fs::write(data.join("manifest.json"), "{not json").unwrap();
    fs::write(data.join("records.jsonl"), "").unwrap();
    let (code, _, err) = run_bin(&[
        "split",
        "--data",
        data.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    assert!(err.contains("load"), "{err}");

    let scores = dir.path().join("s.tsv");
    fs::write(&scores, "garbage\n").unwrap();
    let (code, _, _) = run_bin(&[
        "fuse",
        scores.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn failed_run_leaves_incomplete_marker() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = smoke();
    cfg.data.synth.samples_per_class = 2;
    let err = run_experiment(&cfg, dir.path(), true).unwrap_err();
    assert_eq!(err.stage, "split");
    assert!(dir.path().join(INCOMPLETE_MARKER).exists());
    assert!(dir.path().join("config.toml").exists());
}

#[test]
fn lone_source_fuse_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = smoke();
    cfg.models = ModelSelection::LstmSpatial;
    let r = run_experiment(&cfg, dir.path(), true).unwrap();
    assert_eq!(r.weights, vec![1.0]);
    assert_eq!(r.fused, r.models[0].test);
    let a = ScoreMatrix::read(&dir.path().join("scores/fused.test.tsv")).unwrap();
    let b = ScoreMatrix::read(&dir.path().join("scores/lstm-spatial.test.tsv")).unwrap();
    assert_eq!(a, b);
}
