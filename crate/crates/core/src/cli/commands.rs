use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classify::cam;
use crate::model::ModelState;
use crate::train::{run_cv, Prepared, TrainConfig};
use crate::tudata::{parse_tu_with, Dataset, FeaturePolicy, FoldSplit};

use super::{AlignArgs, CliError, ExplainArgs, TrainArgs};

/// Fully resolved settings of a training run; embedded in every artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub data: PathBuf,
    pub name: String,
    pub out: PathBuf,
    pub train: TrainConfig,
}

/// Everything needed to reload one trained model and its data split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub settings: RunSettings,
    pub features: FeaturePolicy,
    pub seed: u64,
    /// `None` for a contrastive pretraining checkpoint.
    pub fold: Option<usize>,
    pub split: Option<FoldSplit>,
    pub model: ModelState,
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn emit(out: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_file(p, contents),
        None => std::io::stdout()
            .write_all(contents.as_bytes())
            .map_err(|e| CliError::Io(format!("stdout: {e}"))),
    }
}

fn default_name(data: &Path) -> Result<String, CliError> {
    data.file_name()
        .and_then(|s| s.to_str())
        .map(str::to_owned)
        .ok_or_else(|| config_err(format!("cannot infer --name from {}", data.display())))
}

fn resolved_policy(cfg: &TrainConfig, ds: &Dataset) -> FeaturePolicy {
    cfg.features
        .unwrap_or(if ds.graphs.iter().any(|g| g.node_labels.is_some()) {
            FeaturePolicy::OneHotNodeLabel
        } else {
            FeaturePolicy::Constant
        })
}

/// Defaults, then the config file, then flags, then `SSREAD_SEED`.
fn resolve_settings(a: &TrainArgs) -> Result<RunSettings, CliError> {
    let mut cfg = TrainConfig::default();
    let (mut data, mut name, mut out) = (None, None, None);
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("{}:{}: expected key = value", path.display(), lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "data" => data = Some(PathBuf::from(value)),
                "name" => name = Some(value.to_owned()),
                "out" => out = Some(PathBuf::from(value)),
                _ => cfg
                    .set(key, value)
                    .map_err(|e| config_err(format!("{}:{}: {e}", path.display(), lineno + 1)))?,
            }
        }
    }
    let flags = [
        ("readout", &a.readout),
        ("agg", &a.agg),
        ("k", &a.k),
        ("gamma", &a.gamma),
        ("lr", &a.lr),
        ("epochs", &a.epochs),
        ("patience", &a.patience),
        ("batch", &a.batch),
        ("seed", &a.seed),
        ("folds", &a.folds),
        ("mode", &a.mode),
        ("jobs", &a.jobs),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v).map_err(config_err)?;
        }
    }
    if a.no_stratify {
        cfg.stratify = false;
    }
    for kv in &a.set {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| config_err(format!("--set expects key=value, got {kv:?}")))?;
        cfg.set(key.trim(), value).map_err(config_err)?;
    }
    if let Ok(seed) = std::env::var("SSREAD_SEED") {
        cfg.set("seed", &seed)
            .map_err(|e| config_err(format!("SSREAD_SEED: {e}")))?;
    }
    cfg.validate().map_err(config_err)?;

    let data = a
        .data
        .clone()
        .or(data)
        .ok_or_else(|| config_err("no dataset given (use --data DIR)"))?;
    let name = match a.name.clone().or(name) {
        Some(n) => n,
        None => default_name(&data)?,
    };
    let out = a
        .out
        .clone()
        .or(out)
        .unwrap_or_else(|| PathBuf::from("runs").join(&name));
    Ok(RunSettings {
        data,
        name,
        out,
        train: cfg,
    })
}

pub(super) fn train(a: TrainArgs) -> Result<(), CliError> {
    let settings = resolve_settings(&a)?;
    let cfg = &settings.train;
    let ds = parse_tu_with(&settings.data, &settings.name, cfg.features)?;
    let features = resolved_policy(cfg, &ds);
    let prepared = Prepared::new(&ds);
    let outcome = run_cv(&prepared, cfg)?;

    let header_value = serde_json::to_value(&settings).map_err(|e| CliError::Io(e.to_string()))?;
    let header = header_value.to_string();
    let out = &settings.out;
    write_file(&out.join("report.csv"), &outcome.report.to_csv(&header))?;
    write_file(&out.join("loss_curves.csv"), &outcome.report.curves_csv(&header))?;
    let summary = outcome.report.summary(header_value);
    write_file(
        &out.join("summary.json"),
        &(serde_json::to_string_pretty(&summary).map_err(|e| CliError::Io(e.to_string()))? + "\n"),
    )?;

    let save = |file: String, ckpt: &Checkpoint| -> Result<(), CliError> {
        let text = serde_json::to_string(ckpt).map_err(|e| CliError::Io(e.to_string()))?;
        write_file(&out.join("checkpoints").join(file), &text)
    };
    for f in &outcome.folds {
        let plan = &outcome
            .plans
            .iter()
            .find(|(s, _)| *s == f.seed)
            .expect("plan per seed")
            .1;
        save(
            format!("seed{}_fold{}.json", f.seed, f.fold),
            &Checkpoint {
                settings: settings.clone(),
                features,
                seed: f.seed,
                fold: Some(f.fold),
                split: Some(plan.split(f.fold)),
                model: f.model.clone(),
            },
        )?;
    }
    for (seed, model) in &outcome.pretrained {
        save(
            format!("seed{seed}_pretrained.json"),
            &Checkpoint {
                settings: settings.clone(),
                features,
                seed: *seed,
                fold: None,
                split: None,
                model: model.clone(),
            },
        )?;
    }

    eprintln!(
        "{}: {} folds, mean test accuracy {:.4} (std over seeds {:.4}); artifacts in {}",
        settings.name,
        outcome.report.folds.len(),
        outcome.report.mean_accuracy(),
        outcome.report.std_over_seeds(),
        out.display()
    );
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    let text = fs::read_to_string(path).map_err(|e| config_err(format!("checkpoint {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config_err(format!("checkpoint {}: {e}", path.display())))
}

fn checkpoint_data(ckpt: &Checkpoint, data: &Option<PathBuf>, name: &Option<String>) -> Result<Dataset, CliError> {
    let dir = data.clone().unwrap_or_else(|| ckpt.settings.data.clone());
    let name = name.clone().unwrap_or_else(|| ckpt.settings.name.clone());
    let ds = parse_tu_with(&dir, &name, Some(ckpt.features))?;
    let expected = ckpt.model.net.encoder.in_dim();
    if ds.feature_dim != expected {
        return Err(config_err(format!(
            "dataset yields {}-dimensional features but the checkpoint expects {expected}",
            ds.feature_dim
        )));
    }
    Ok(ds)
}

fn split_indices(ckpt: &Checkpoint, split: &str, n: usize) -> Result<Vec<usize>, CliError> {
    if split == "all" {
        return Ok((0..n).collect());
    }
    let s = ckpt.split.as_ref().ok_or_else(|| {
        config_err(format!(
            "checkpoint has no fold split; use --split all instead of {split:?}"
        ))
    })?;
    match split {
        "train" => Ok(s.train.clone()),
        "val" => Ok(s.val.clone()),
        "test" => Ok(s.test.clone()),
        other => Err(config_err(format!("unknown split {other:?} (all, train, val, test)"))),
    }
}

fn export_header(ckpt: &Checkpoint, path: &Path, split: &str) -> Result<String, CliError> {
    let v = serde_json::json!({
        "header": {
            "checkpoint": path,
            "config": ckpt.settings,
            "features": ckpt.features,
            "seed": ckpt.seed,
            "fold": ckpt.fold,
            "split": split,
        }
    });
    Ok(v.to_string() + "\n")
}

pub(super) fn align(a: AlignArgs) -> Result<(), CliError> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    if ckpt.model.prototypes.is_none() {
        return Err(config_err(
            "checkpoint uses the global readout; there are no positions to export",
        ));
    }
    let ds = checkpoint_data(&ckpt, &a.data, &a.name)?;
    let indices = split_indices(&ckpt, &a.split, ds.len())?;
    let mut text = export_header(&ckpt, &a.checkpoint, &a.split)?;
    for i in indices {
        let fwd = ckpt
            .model
            .encode(&ds.graphs[i])
            .map_err(|e| CliError::Data(e.to_string()))?;
        let alignment = fwd.alignment.expect("ssread forward aligns");
        let line = serde_json::json!({"graph_id": i, "assign": alignment.assign, "cost": alignment.cost});
        text.push_str(&line.to_string());
        text.push('\n');
    }
    emit(a.out.as_deref(), &text)
}

pub(super) fn explain(a: ExplainArgs) -> Result<(), CliError> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let ds = checkpoint_data(&ckpt, &a.data, &a.name)?;
    let indices = match &a.graph {
        Some(list) => list
            .split(',')
            .map(|s| {
                let id: usize = s
                    .trim()
                    .parse()
                    .map_err(|_| config_err(format!("bad graph id {s:?}")))?;
                if id >= ds.len() {
                    return Err(config_err(format!(
                        "graph id {id} out of range (dataset has {} graphs)",
                        ds.len()
                    )));
                }
                Ok(id)
            })
            .collect::<Result<Vec<_>, _>>()?,
        None => split_indices(&ckpt, &a.split, ds.len())?,
    };
    let classes = ckpt.model.net.head.classes();
    if let Some(c) = a.class {
        if c >= classes {
            return Err(config_err(format!(
                "class {c} out of range (model has {classes} classes)"
            )));
        }
    }
    let mut text = export_header(&ckpt, &a.checkpoint, &a.split)?;
    for i in indices {
        let g = &ds.graphs[i];
        let class = a.class.unwrap_or(g.label);
        let report = cam(g, &ckpt.model, class).map_err(|e| CliError::Data(e.to_string()))?;
        let line = serde_json::json!({
            "graph_id": i,
            "class": report.class,
            "cam": report.cam,
            "score": report.score,
            "bias": report.bias,
        });
        text.push_str(&line.to_string());
        text.push('\n');
    }
    emit(a.out.as_deref(), &text)
}
