//! End-to-end tests of the omnialign binary: exit codes, determinism,
//! file outputs, and the train → eval → pca workflow on a small config.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_omnialign"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("run.cfg");
    fs::write(
        &path,
        "# small desk config\n\
         [model]\n\
         patch = 4\n\
         embed_dim = 8\n\
         frozen_layers = 1\n\
         adapter_layers = 1\n\
         seed = 3\n\
         [train]\n\
         steps = 6\n\
         batch_size = 2\n\
         seed = 11\n\
         [loss]\n\
         n_dense = 2\n\
         [data]\n\
         height = 8\n\
         width = 8\n\
         n_scenes = 4\n\
         n_eval_scenes = 3\n\
         seed = 5\n\
         [eval]\n\
         knn_ks = 1,2\n\
         pca_scale = 2\n",
    )
    .unwrap();
    path
}

#[test]
fn help_lists_every_config_key() {
    let out = run(&["train", "--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for key in [
        "[model]",
        "patch = 8",
        "embed_dim = 32",
        "frozen_layers = 4",
        "adapter_layers = 2",
        "[train]",
        "steps = 2000",
        "batch_size = 16",
        "alpha_max = 0.5",
        "[loss]",
        "lambda_anchor = 10",
        "tau_init = 0.07",
        "[data]",
        "n_scenes = 256",
        "[eval]",
        "batch = 2048",
        "knn_ks = 5,10,20,50,100",
    ] {
        assert!(text.contains(key), "help is missing {key:?}");
    }
}

#[test]
fn unknown_command_and_bad_flags_exit_2() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["train", "--nope", "1"]).status.code(), Some(2));
    assert_eq!(run(&["train"]).status.code(), Some(2)); // missing --config
}

#[test]
fn gen_data_is_deterministic_and_respects_force() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out1 = dir.path().join("d1");
    let out2 = dir.path().join("d2");

    let a = run(&["gen-data", "--config", cfg.to_str().unwrap(), "--out", out1.to_str().unwrap()]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = run(&["gen-data", "--config", cfg.to_str().unwrap(), "--out", out2.to_str().unwrap()]);
    assert!(b.status.success());
    assert_eq!(a.stdout, b.stdout, "manifests differ between reruns");

    let manifest: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(manifest["entries"].as_array().unwrap().len(), 4);
    assert!(out1.join("scene_00000/rgb.ppm").exists());
    assert!(out1.join("scene_00003/seg.pgm").exists());

    // Refuse to overwrite without --force, exit 3.
    let c = run(&["gen-data", "--config", cfg.to_str().unwrap(), "--out", out1.to_str().unwrap()]);
    assert_eq!(c.status.code(), Some(3));
    let d = run(&[
        "gen-data",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out1.to_str().unwrap(),
        "--force",
    ]);
    assert!(d.status.success());
}

#[test]
fn colorize_runs_on_generated_files_and_rejects_mismatches() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let data = dir.path().join("data");
    assert!(run(&["gen-data", "--config", cfg.to_str().unwrap(), "--out", data.to_str().unwrap()])
        .status
        .success());

    let rgb = data.join("scene_00000/rgb.ppm");
    let raw = data.join("scene_00000/depth.f32");
    let out = dir.path().join("colorized.ppm");
    let ok = run(&[
        "colorize",
        "--rgb",
        rgb.to_str().unwrap(),
        "--raw",
        raw.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(out.exists());

    // A raw map with different dimensions must exit 2.
    let other = dir.path().join("bad.f32");
    let map = omnialign_core::imaging::ScalarMap::new(2, 2);
    omnialign_core::synth::write_f32raw(&other, &map).unwrap();
    let bad = run(&[
        "colorize",
        "--rgb",
        rgb.to_str().unwrap(),
        "--raw",
        other.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn train_writes_checkpoint_and_exact_log_lines_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let run_train = |tag: &str| -> (Vec<u8>, String) {
        let ckpt = dir.path().join(format!("{tag}.ckpt"));
        let log = dir.path().join(format!("{tag}.jsonl"));
        let out = run(&[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--out-checkpoint",
            ckpt.to_str().unwrap(),
            "--log",
            log.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        (fs::read(&ckpt).unwrap(), fs::read_to_string(&log).unwrap())
    };
    let (ckpt_a, log_a) = run_train("a");
    let (ckpt_b, log_b) = run_train("b");
    assert_eq!(ckpt_a, ckpt_b, "checkpoints differ between identical runs");
    assert_eq!(log_a, log_b);
    assert_eq!(log_a.lines().count(), 6, "one log line per step");
    let first: serde_json::Value = serde_json::from_str(log_a.lines().next().unwrap()).unwrap();
    for field in ["step", "total", "align", "anchor", "tau"] {
        assert!(first.get(field).is_some(), "log line missing {field}");
    }

    // A lambda override must change the checkpoint.
    let ckpt_l = dir.path().join("l.ckpt");
    let log_l = dir.path().join("l.jsonl");
    let out = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out-checkpoint",
        ckpt_l.to_str().unwrap(),
        "--log",
        log_l.to_str().unwrap(),
        "--loss.lambda_anchor",
        "0",
    ]);
    assert!(out.status.success());
    assert_ne!(fs::read(&ckpt_l).unwrap(), ckpt_a);
}

#[test]
fn eval_report_contains_all_sections_and_is_hash_stable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let ckpt = dir.path().join("m.ckpt");
    let log = dir.path().join("m.jsonl");
    assert!(run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out-checkpoint",
        ckpt.to_str().unwrap(),
        "--log",
        log.to_str().unwrap(),
    ])
    .status
    .success());

    let report1 = dir.path().join("r1.json");
    let report2 = dir.path().join("r2.json");
    for report in [&report1, &report2] {
        let out = run(&[
            "eval",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--report",
            report.to_str().unwrap(),
            "--config",
            cfg.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = fs::read(&report1).unwrap();
    assert_eq!(a, fs::read(&report2).unwrap(), "eval reports are not stable");
    let parsed: serde_json::Value = serde_json::from_slice(&a).unwrap();
    for section in ["retrieval", "diagnostics", "knn", "pck"] {
        assert!(parsed.get(section).is_some(), "missing section {section}");
    }
    // Six directed pairs in retrieval.
    assert_eq!(parsed["retrieval"]["pairs"].as_array().unwrap().len(), 6);
}

#[test]
fn trained_checkpoint_beats_untrained_on_retrieval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    // Enough signal for the effect to show at tiny scale: default-ish
    // model at 8x8 with a short budget.
    fs::write(
        &cfg_path,
        "[model]\npatch = 4\nembed_dim = 16\nfrozen_layers = 2\nadapter_layers = 2\nseed = 3\n\
         [train]\nsteps = 150\nbatch_size = 8\nseed = 11\nlr = 0.003\n\
         [loss]\nn_dense = 4\n\
         [data]\nheight = 16\nwidth = 16\nn_scenes = 32\nn_eval_scenes = 16\nseed = 5\n\
         [eval]\nknn_ks = 1,2\n",
    )
    .unwrap();
    let cfg = cfg_path.to_str().unwrap();

    // Untrained baseline: one step at lr ~ 0 is not available, so train
    // with steps = 1 and lr tiny to freeze the student at the teacher.
    let base_ckpt = dir.path().join("base.ckpt");
    let out = run(&[
        "train", "--config", cfg,
        "--out-checkpoint", base_ckpt.to_str().unwrap(),
        "--log", dir.path().join("base.jsonl").to_str().unwrap(),
        "--train.steps", "1", "--train.lr", "1e-12",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let trained_ckpt = dir.path().join("trained.ckpt");
    let out = run(&[
        "train", "--config", cfg,
        "--out-checkpoint", trained_ckpt.to_str().unwrap(),
        "--log", dir.path().join("trained.jsonl").to_str().unwrap(),
    ]);
    assert!(out.status.success());

    let r_at_1 = |ckpt: &Path| -> f64 {
        let report = dir.path().join("report.json");
        let out = run(&[
            "eval",
            "--checkpoint", ckpt.to_str().unwrap(),
            "--report", report.to_str().unwrap(),
            "--config", cfg,
            "--which", "retrieval",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let parsed: serde_json::Value =
            serde_json::from_slice(&fs::read(&report).unwrap()).unwrap();
        parsed["retrieval"]["average"]["r_at_1"].as_f64().unwrap()
    };
    let baseline = r_at_1(&base_ckpt);
    let trained = r_at_1(&trained_ckpt);
    assert!(
        trained > baseline,
        "trained R@1 {trained} not above baseline {baseline}"
    );
}

#[test]
fn pca_emits_six_images_and_adapted_ones_align() {
    let dir = tempfile::tempdir().unwrap();
    // A config with enough training signal for the adapted features to
    // visibly align (the frozen ones stay apart).
    let cfg_path = dir.path().join("run.cfg");
    fs::write(
        &cfg_path,
        "[model]\npatch = 4\nembed_dim = 16\nfrozen_layers = 2\nadapter_layers = 2\nseed = 3\n\
         [train]\nsteps = 150\nbatch_size = 8\nseed = 11\nlr = 0.003\n\
         [loss]\nn_dense = 4\n\
         [data]\nheight = 16\nwidth = 16\nn_scenes = 32\nn_eval_scenes = 8\nseed = 5\n\
         [eval]\nknn_ks = 1,2\npca_scale = 2\n",
    )
    .unwrap();
    let cfg = cfg_path;
    let data = dir.path().join("data");
    assert!(run(&[
        "gen-data",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        data.to_str().unwrap(),
        "--data.n_scenes",
        "4"
    ])
    .status
    .success());
    let ckpt = dir.path().join("m.ckpt");
    assert!(run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out-checkpoint",
        ckpt.to_str().unwrap(),
        "--log",
        dir.path().join("m.jsonl").to_str().unwrap(),
    ])
    .status
    .success());

    let prefix = dir.path().join("viz");
    let out = run(&[
        "pca",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--scene",
        data.join("scene_00001").to_str().unwrap(),
        "--out-prefix",
        prefix.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let load = |kind: &str, name: &str| -> Vec<f64> {
        let path = PathBuf::from(format!("{}_{kind}_{name}.ppm", prefix.display()));
        assert!(path.exists(), "missing {}", path.display());
        omnialign_core::synth::read_ppm(&path).unwrap().pixels().to_vec()
    };
    let mean_cross_modal_l2 = |kind: &str| -> f64 {
        let imgs = [load(kind, "rgb"), load(kind, "depth"), load(kind, "seg")];
        let mut total = 0.0;
        for (a, b) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let d2: f64 = imgs[a]
                .iter()
                .zip(&imgs[b])
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            total += (d2 / imgs[a].len() as f64).sqrt();
        }
        total / 3.0
    };
    // Frozen and adapted renderings differ after training, and the
    // adapted ones agree more across modalities.
    assert_ne!(load("frozen", "rgb"), load("adapted", "rgb"));
    let frozen = mean_cross_modal_l2("frozen");
    let adapted = mean_cross_modal_l2("adapted");
    assert!(
        adapted < frozen,
        "adapted distance {adapted} not below frozen {frozen}"
    );

    let missing = run(&[
        "pca",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--scene",
        data.join("scene_99999").to_str().unwrap(),
        "--out-prefix",
        prefix.to_str().unwrap(),
    ]);
    assert_eq!(missing.status.code(), Some(3));
}

#[test]
fn one_value_sweep_matches_single_train_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out_dir = dir.path().join("sweep");
    let out = run(&[
        "sweep",
        "--param",
        "lambda_anchor",
        "--values",
        "10",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let frontier: serde_json::Value =
        serde_json::from_slice(&fs::read(out_dir.join("frontier.json")).unwrap()).unwrap();
    let rows = frontier["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert!(out_dir.join("frontier.txt").exists());
    assert!(out_dir.join("lambda_anchor_10.ckpt").exists());

    // The sweep's single checkpoint equals a direct training run.
    let ckpt = dir.path().join("direct.ckpt");
    assert!(run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out-checkpoint",
        ckpt.to_str().unwrap(),
        "--log",
        dir.path().join("direct.jsonl").to_str().unwrap(),
    ])
    .status
    .success());
    assert_eq!(
        fs::read(out_dir.join("lambda_anchor_10.ckpt")).unwrap(),
        fs::read(&ckpt).unwrap()
    );
}

#[test]
fn sweep_with_jobs_matches_sequential() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let seq_dir = dir.path().join("seq");
    let par_dir = dir.path().join("par");
    for (out_dir, jobs) in [(&seq_dir, "1"), (&par_dir, "2")] {
        let out = bin()
            .args([
                "sweep",
                "--param",
                "alpha_max",
                "--values",
                "0,0.5",
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out_dir.to_str().unwrap(),
                "--jobs",
                jobs,
            ])
            .env("OMNIALIGN_THREADS", "4")
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(
        fs::read(seq_dir.join("frontier.json")).unwrap(),
        fs::read(par_dir.join("frontier.json")).unwrap()
    );
}
