//! Command implementations.

use crate::{Args, CliError};
use omnialign_core::evalkit::{
    diagnostics, directed_pair_average, knn_hard, knn_soft_vote, pca_visualize, pck_at_zero,
    EvalConfig,
};
use omnialign_core::imaging::natural_colorize;
use omnialign_core::model::{read_checkpoint, write_checkpoint};
use omnialign_core::numerics::dot;
use omnialign_core::optim::{embed_dataset_eval, EvalEmbeddings, TrainConfig};
use omnialign_core::synth::{
    generate_scene, read_dataset, read_f32raw, read_ppm, read_scene_at, write_ppm,
    write_scene_dir, SceneTriplet,
};
use omnialign_core::util::fnv1a64;
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

// ---------------------------------------------------------------- gen-data

pub fn gen_data(args: &Args) -> Result<(), CliError> {
    let cfg = args.load_config(true)?;
    let out = PathBuf::from(args.required("out")?);
    if out.exists() {
        let non_empty = out
            .read_dir()
            .map(|mut d| d.next().is_some())
            .unwrap_or(false);
        if non_empty && !args.switch("force") {
            return Err(CliError::Io(format!(
                "output directory {} is not empty (use --force to write anyway)",
                out.display()
            )));
        }
    }
    fs::create_dir_all(&out).map_err(|e| CliError::Io(e.to_string()))?;

    let scene_cfg = cfg.scene_config();
    let mut entries = Vec::with_capacity(cfg.data.n_scenes);
    for index in 0..cfg.data.n_scenes {
        let scene = generate_scene(&scene_cfg, index as u64)?;
        write_scene_dir(&out, index, &scene)?;
        let dir = out.join(omnialign_core::synth::scene_dir_name(index));
        let hash = |name: &str| -> Result<String, CliError> {
            Ok(format!("{:016x}", fnv1a64(&read_bytes(&dir.join(name))?)))
        };
        entries.push(json!({
            "dir": omnialign_core::synth::scene_dir_name(index),
            "rgb": hash("rgb.ppm")?,
            "depth": hash("depth.f32")?,
            "seg": hash("seg.pgm")?,
        }));
    }
    let manifest = json!({
        "n_scenes": cfg.data.n_scenes,
        "seed": cfg.data.seed,
        "height": cfg.data.height,
        "width": cfg.data.width,
        "entries": entries,
    });
    println!("{}", serde_json::to_string_pretty(&manifest).unwrap());
    Ok(())
}

// ---------------------------------------------------------------- colorize

pub fn colorize(args: &Args) -> Result<(), CliError> {
    let rgb_path = PathBuf::from(args.required("rgb")?);
    let raw_path = PathBuf::from(args.required("raw")?);
    let out_path = PathBuf::from(args.required("out")?);
    let bins: usize = args
        .optional("bins")
        .unwrap_or("64")
        .parse()
        .map_err(|_| CliError::Config("--bins expects an integer".into()))?;
    let kernel: usize = args
        .optional("kernel")
        .unwrap_or("5")
        .parse()
        .map_err(|_| CliError::Config("--kernel expects an integer".into()))?;

    let rgb = read_ppm(&rgb_path)?;
    let raw = match raw_path.extension().and_then(|e| e.to_str()) {
        Some("f32") => read_f32raw(&raw_path)?,
        Some("pgm") => omnialign_core::synth::parse_pgm(&read_bytes(&raw_path)?)?,
        other => {
            return Err(CliError::Config(format!(
                "--raw expects a .f32 or .pgm file, got {other:?}"
            )))
        }
    };
    let colorized = natural_colorize(&raw, &rgb, bins, kernel, 1e-6)?;
    write_ppm(&out_path, &colorized)?;
    println!("wrote {}", out_path.display());
    Ok(())
}

// ------------------------------------------------------------------- train

pub fn train(args: &Args) -> Result<(), CliError> {
    let cfg = args.load_config(true)?;
    let ckpt_path = PathBuf::from(args.required("out-checkpoint")?);
    let log_path = PathBuf::from(args.required("log")?);

    let mut train_cfg = cfg.train_config();
    if train_cfg.checkpoint_every > 0 {
        train_cfg.checkpoint_prefix = Some(ckpt_path.clone());
    }
    let out = omnialign_core::optim::train(&train_cfg)?;

    write_checkpoint(&ckpt_path, &out.stack, out.tau)?;
    let mut log = String::new();
    for m in &out.metrics {
        log.push_str(&serde_json::to_string(m).unwrap());
        log.push('\n');
    }
    write_text(&log_path, &log)?;
    let last = out.metrics.last().expect("steps >= 1");
    println!(
        "trained {} steps: total {:.4}, align {:.4}, anchor {:.5}, tau {:.4}",
        out.metrics.len(),
        last.total,
        last.align,
        last.anchor,
        last.tau
    );
    println!("checkpoint: {}", ckpt_path.display());
    println!("log: {}", log_path.display());
    Ok(())
}

// -------------------------------------------------------------------- eval

fn load_eval_scenes(cfg: &crate::RunConfig, data_flag: Option<&str>) -> Result<Vec<SceneTriplet>, CliError> {
    match data_flag {
        Some(dir) => Ok(read_dataset(Path::new(dir))?),
        None => {
            // Held-out split: generator indices beyond the training pool.
            let scene_cfg = cfg.scene_config();
            (0..cfg.data.n_eval_scenes)
                .map(|i| {
                    generate_scene(&scene_cfg, (cfg.data.n_scenes + i) as u64)
                        .map_err(CliError::from)
                })
                .collect()
        }
    }
}

/// Mean pooled cosine between student and teacher over all modalities.
fn teacher_similarity(emb: &EvalEmbeddings) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for m in 0..3 {
        for i in 0..emb.pooled[m].rows() {
            sum += dot(emb.pooled[m].row(i), emb.pooled_teacher[m].row(i));
            count += 1;
        }
    }
    sum / count as f64
}

fn knn_section(
    emb: &EvalEmbeddings,
    eval_cfg: &EvalConfig,
) -> Result<serde_json::Value, CliError> {
    let n = emb.pooled[0].rows();
    let labels: Vec<usize> = (0..n).collect();
    let mut soft = serde_json::Map::new();
    let mut hard = serde_json::Map::new();
    for (name, m) in [("depth_to_rgb", 1usize), ("seg_to_rgb", 2usize)] {
        let report = knn_soft_vote(
            &emb.pooled[0],
            &labels,
            &emb.pooled[m],
            &labels,
            &eval_cfg.knn_ks,
            eval_cfg.knn_tau,
        )?;
        soft.insert(name.to_string(), serde_json::to_value(&report).unwrap());
        let acc = knn_hard(&emb.pooled[0], &labels, &emb.pooled[m], &labels, false)?;
        hard.insert(name.to_string(), json!(acc));
    }
    Ok(json!({ "soft": soft, "hard": hard }))
}

fn pck_section(emb: &EvalEmbeddings) -> Result<serde_json::Value, CliError> {
    let pairs = [("rgb_depth", 0usize, 1usize), ("rgb_seg", 0, 2), ("depth_seg", 1, 2)];
    let mut out = serde_json::Map::new();
    let mut overall = 0.0;
    for (name, a, b) in pairs {
        let mut sum = 0.0;
        for scene in &emb.dense {
            sum += pck_at_zero(&scene[a], &scene[b])?.mean;
        }
        let mean = sum / emb.dense.len() as f64;
        overall += mean;
        out.insert(name.to_string(), json!(mean));
    }
    out.insert("mean".to_string(), json!(overall / 3.0));
    Ok(serde_json::Value::Object(out))
}

pub fn eval(args: &Args) -> Result<(), CliError> {
    let cfg = args.load_config(false)?;
    let ckpt = read_checkpoint(Path::new(args.required("checkpoint")?))?;
    let report_path = PathBuf::from(args.required("report")?);
    let which = args.optional("which").unwrap_or("all");
    if !["retrieval", "diagnostics", "knn", "pck", "all"].contains(&which) {
        return Err(CliError::Config(format!(
            "--which must be retrieval|diagnostics|knn|pck|all, got {which:?}"
        )));
    }

    let scenes = load_eval_scenes(&cfg, args.optional("data"))?;
    let emb = embed_dataset_eval(&ckpt.stack, &scenes)?;
    let eval_cfg = cfg.eval_config();

    let mut report = serde_json::Map::new();
    report.insert("n_scenes".into(), json!(scenes.len()));
    report.insert("tau".into(), json!(ckpt.tau));
    report.insert("teacher_similarity".into(), json!(teacher_similarity(&emb)));

    if which == "all" || which == "retrieval" {
        let r = directed_pair_average(&emb.pooled, &eval_cfg)?;
        println!("== retrieval (pooled student features)\n{}", r.to_text());
        report.insert("retrieval".into(), serde_json::to_value(&r).unwrap());
    }
    if which == "all" || which == "diagnostics" {
        let d = diagnostics(&emb.pooled, cfg.eval.pairing_seed)?;
        println!("== diagnostics (alpha_max = 0 pipeline)\n{}", d.to_text());
        report.insert("diagnostics".into(), serde_json::to_value(&d).unwrap());
    }
    if which == "all" || which == "knn" {
        let k = knn_section(&emb, &eval_cfg)?;
        let mut text = format!("{:<14} {:>10} {:>8} {:>10}\n", "query", "soft best", "at k", "hard");
        for name in ["depth_to_rgb", "seg_to_rgb"] {
            text.push_str(&format!(
                "{:<14} {:>10.2} {:>8} {:>10.2}\n",
                name,
                k["soft"][name]["best_accuracy"].as_f64().unwrap_or(0.0),
                k["soft"][name]["best_k"].as_u64().unwrap_or(0),
                k["hard"][name].as_f64().unwrap_or(0.0),
            ));
        }
        println!("== knn (labels = scene ids, index = rgb)\n{text}");
        report.insert("knn".into(), k);
    }
    if which == "all" || which == "pck" {
        let p = pck_section(&emb)?;
        let mut text = format!("{:<12} {:>8}\n", "pair", "pck@0");
        for name in ["rgb_depth", "rgb_seg", "depth_seg", "mean"] {
            text.push_str(&format!(
                "{:<12} {:>8.2}\n",
                name,
                p[name].as_f64().unwrap_or(0.0)
            ));
        }
        println!("== pck@0 (dense tokens, bidirectional)\n{text}");
        report.insert("pck".into(), p);
    }

    write_text(
        &report_path,
        &serde_json::to_string_pretty(&serde_json::Value::Object(report)).unwrap(),
    )?;
    println!("report: {}", report_path.display());
    Ok(())
}

// ------------------------------------------------------------------- sweep

struct FrontierRow {
    value: f64,
    alignment_rgb_depth: f64,
    mean_cross_modal: f64,
    discernibility: f64,
    teacher_similarity: f64,
    r_at_1: f64,
}

fn run_sweep_point(
    cfg: &crate::RunConfig,
    param: &str,
    value: f64,
    out_dir: &Path,
) -> Result<FrontierRow, CliError> {
    let mut point = cfg.clone();
    match param {
        "lambda_anchor" => point.loss.lambda_anchor = value,
        "alpha_max" => point.train.alpha_max = value,
        _ => {
            return Err(CliError::Config(format!(
                "--param must be lambda_anchor or alpha_max, got {param:?}"
            )))
        }
    }
    let train_cfg: TrainConfig = point.train_config();
    let out = omnialign_core::optim::train(&train_cfg)?;
    let ckpt_path = out_dir.join(format!("{param}_{value}.ckpt"));
    write_checkpoint(&ckpt_path, &out.stack, out.tau)?;

    let scenes = load_eval_scenes(&point, point.data.dir.as_ref().map(|p| p.to_str().unwrap()))?;
    let emb = embed_dataset_eval(&out.stack, &scenes)?;
    let diag = diagnostics(&emb.pooled, point.eval.pairing_seed)?;
    let retrieval = directed_pair_average(&emb.pooled, &point.eval_config())?;
    Ok(FrontierRow {
        value,
        alignment_rgb_depth: diag.rgb_depth,
        mean_cross_modal: diag.mean_cross_modal(),
        discernibility: 1.0 - diag.cross_scene_rgb,
        teacher_similarity: teacher_similarity(&emb),
        r_at_1: retrieval.average.r_at_1,
    })
}

pub fn sweep(args: &Args) -> Result<(), CliError> {
    let cfg = args.load_config(true)?;
    let param = args.required("param")?.to_string();
    let values: Vec<f64> = args
        .required("values")?
        .split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| CliError::Config(format!("bad sweep value {v:?}")))
        })
        .collect::<Result<_, _>>()?;
    if values.is_empty() {
        return Err(CliError::Config("--values must list at least one value".into()));
    }
    let out_dir = PathBuf::from(args.required("out")?);
    fs::create_dir_all(&out_dir).map_err(|e| CliError::Io(e.to_string()))?;

    let jobs: usize = args
        .optional("jobs")
        .unwrap_or("1")
        .parse()
        .map_err(|_| CliError::Config("--jobs expects an integer".into()))?;
    let thread_cap = std::env::var("OMNIALIGN_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(usize::MAX);
    let jobs = jobs.clamp(1, thread_cap.max(1)).min(values.len());

    let mut rows: Vec<Option<FrontierRow>> = (0..values.len()).map(|_| None).collect();
    for chunk_start in (0..values.len()).step_by(jobs) {
        let chunk_end = (chunk_start + jobs).min(values.len());
        let results: Vec<(usize, Result<FrontierRow, CliError>)> = std::thread::scope(|scope| {
            let handles: Vec<_> = (chunk_start..chunk_end)
                .map(|i| {
                    let cfg = &cfg;
                    let param = &param;
                    let out_dir = &out_dir;
                    let value = values[i];
                    scope.spawn(move || (i, run_sweep_point(cfg, param, value, out_dir)))
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        for (i, result) in results {
            rows[i] = Some(result?);
        }
    }
    let rows: Vec<FrontierRow> = rows.into_iter().map(|r| r.unwrap()).collect();

    let mut text = format!(
        "{:<14} {:>10} {:>10} {:>13} {:>12} {:>8}\n",
        param, "align<R,D>", "mean_cm", "discernible", "teacher_sim", "R@1"
    );
    let mut json_rows = Vec::new();
    for row in &rows {
        text.push_str(&format!(
            "{:<14} {:>10.4} {:>10.4} {:>13.4} {:>12.4} {:>8.2}\n",
            row.value,
            row.alignment_rgb_depth,
            row.mean_cross_modal,
            row.discernibility,
            row.teacher_similarity,
            row.r_at_1
        ));
        json_rows.push(json!({
            "value": row.value,
            "alignment_rgb_depth": row.alignment_rgb_depth,
            "mean_cross_modal": row.mean_cross_modal,
            "discernibility": row.discernibility,
            "teacher_similarity": row.teacher_similarity,
            "r_at_1": row.r_at_1,
        }));
    }
    print!("{text}");
    write_text(&out_dir.join("frontier.txt"), &text)?;
    write_text(
        &out_dir.join("frontier.json"),
        &serde_json::to_string_pretty(&json!({ "param": param, "rows": json_rows })).unwrap(),
    )?;
    println!("frontier: {}", out_dir.join("frontier.json").display());
    Ok(())
}

// --------------------------------------------------------------------- pca

pub fn pca(args: &Args) -> Result<(), CliError> {
    let cfg = args.load_config(false)?;
    let ckpt = read_checkpoint(Path::new(args.required("checkpoint")?))?;
    let scene_dir = PathBuf::from(args.required("scene")?);
    let prefix = args.required("out-prefix")?;

    let scene = read_scene_at(&scene_dir)?;
    let emb = embed_dataset_eval(&ckpt.stack, std::slice::from_ref(&scene))?;
    let conformed = omnialign_core::optim::conform_scene(&scene, ckpt.stack.cfg.patch);
    let grid_h = conformed.rgb.height() / ckpt.stack.cfg.patch;
    let grid_w = conformed.rgb.width() / ckpt.stack.cfg.patch;
    let scale = cfg.eval.pca_scale;

    let adapted = pca_visualize(
        &[&emb.dense[0][0], &emb.dense[0][1], &emb.dense[0][2]],
        grid_h,
        grid_w,
        scale,
    )?;
    let frozen = pca_visualize(
        &[
            &emb.dense_teacher[0][0],
            &emb.dense_teacher[0][1],
            &emb.dense_teacher[0][2],
        ],
        grid_h,
        grid_w,
        scale,
    )?;

    for (kind, images) in [("frozen", &frozen), ("adapted", &adapted)] {
        for (m, name) in ["rgb", "depth", "seg"].iter().enumerate() {
            let path = PathBuf::from(format!("{prefix}_{kind}_{name}.ppm"));
            write_ppm(&path, &images[m])?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
