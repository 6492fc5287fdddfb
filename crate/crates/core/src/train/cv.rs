use std::time::Instant;

use rayon::prelude::*;

use crate::model::ModelState;
use crate::tudata::{make_folds, FoldPlan};

use super::report::{FoldRecord, RunReport};
use super::{linear_probe, train_contrastive, train_supervised, FoldOutcome, Mode, Prepared, TrainConfig, TrainError};

pub struct CvOutcome {
    pub report: RunReport,
    /// Sorted by `(seed, fold)`.
    pub folds: Vec<FoldOutcome>,
    pub plans: Vec<(u64, FoldPlan)>,
    /// Contrastive mode only: the pretrained model of each seed.
    pub pretrained: Vec<(u64, ModelState)>,
}

/// Runs every `(seed, fold)` job on a pool of `cfg.jobs` threads.
pub fn run_cv(data: &Prepared<'_>, cfg: &TrainConfig) -> Result<CvOutcome, TrainError> {
    cfg.validate()?;
    let start = Instant::now();
    let plans = cfg
        .seeds
        .iter()
        .map(|&s| Ok((s, make_folds(data.ds, cfg.folds, s, cfg.stratify)?)))
        .collect::<Result<Vec<_>, TrainError>>()?;
    let jobs: Vec<(u64, usize)> = plans
        .iter()
        .flat_map(|(s, plan)| (0..plan.len()).map(move |f| (*s, f)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| TrainError::Config(format!("cannot start worker pool: {e}")))?;
    let plan_of = |seed: u64| &plans.iter().find(|(s, _)| *s == seed).expect("plan per seed").1;

    let (results, pretrained, pre_curves) = pool.install(|| -> Result<_, TrainError> {
        match cfg.mode {
            Mode::Supervised => {
                let results: Vec<_> = jobs
                    .par_iter()
                    .map(|&(seed, fold)| train_supervised(data, &plan_of(seed).split(fold), cfg, seed))
                    .collect();
                Ok((results, Vec::new(), Vec::new()))
            }
            Mode::Contrastive => {
                let all: Vec<usize> = (0..data.ds.len()).collect();
                let pre = cfg
                    .seeds
                    .par_iter()
                    .map(|&seed| train_contrastive(data, &all, cfg, seed))
                    .collect::<Vec<_>>()
                    .into_iter()
                    .collect::<Result<Vec<_>, _>>()?;
                let results: Vec<_> = jobs
                    .par_iter()
                    .map(|&(seed, fold)| {
                        let base = &pre.iter().find(|p| p.seed == seed).expect("pretrained per seed").model;
                        let probe = linear_probe(base, data, &plan_of(seed).split(fold), cfg, seed)?;
                        Ok(FoldOutcome {
                            seed,
                            fold,
                            model: probe.model,
                            test: probe.test,
                            val_accuracy: probe.val_accuracy,
                            best_epoch: probe.best_epoch,
                            epochs_run: cfg.probe_epochs,
                            curve: Vec::new(),
                        })
                    })
                    .collect();
                let curves = pre.iter().flat_map(|p| p.curve.iter().cloned()).collect();
                let models = pre.into_iter().map(|p| (p.seed, p.model)).collect();
                Ok((results, models, curves))
            }
        }
    })?;
    let mut folds = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    folds.sort_by_key(|f| (f.seed, f.fold));

    let mut curves = pre_curves;
    curves.extend(folds.iter().flat_map(|f| f.curve.iter().cloned()));
    let report = RunReport {
        folds: folds
            .iter()
            .map(|f| FoldRecord {
                seed: f.seed,
                fold: f.fold,
                test_accuracy: f.test.accuracy,
                val_accuracy: f.val_accuracy,
                best_epoch: f.best_epoch,
                epochs_run: f.epochs_run,
                test_size: f.test.predictions.len(),
            })
            .collect(),
        curves,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok(CvOutcome {
        report,
        folds,
        plans,
        pretrained,
    })
}
