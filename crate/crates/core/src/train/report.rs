use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// One epoch of one job. `fold` is `None` for contrastive pretraining, which
/// runs once per seed; validation fields are `None` when no labels are used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub seed: u64,
    pub fold: Option<usize>,
    pub epoch: usize,
    /// Classification loss, or the contrastive loss during pretraining.
    pub task_loss: f64,
    pub align_loss: f64,
    pub val_accuracy: Option<f64>,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub seed: u64,
    pub fold: usize,
    pub test_accuracy: f64,
    pub val_accuracy: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub test_size: usize,
}

/// Per-fold accuracies and loss curves of a cross-validation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub folds: Vec<FoldRecord>,
    pub curves: Vec<EpochRecord>,
    pub wall_time_secs: f64,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; 0 for fewer than two values.
fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RunReport {
    pub fn mean_accuracy(&self) -> f64 {
        mean(&self.folds.iter().map(|f| f.test_accuracy).collect::<Vec<_>>())
    }

    /// `(seed, mean test accuracy over that seed's folds)`, by ascending seed.
    pub fn seed_means(&self) -> Vec<(u64, f64)> {
        let mut seeds: Vec<u64> = self.folds.iter().map(|f| f.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        seeds
            .into_iter()
            .map(|s| {
                let accs: Vec<f64> = self
                    .folds
                    .iter()
                    .filter(|f| f.seed == s)
                    .map(|f| f.test_accuracy)
                    .collect();
                (s, mean(&accs))
            })
            .collect()
    }

    pub fn std_over_seeds(&self) -> f64 {
        std_dev(&self.seed_means().iter().map(|s| s.1).collect::<Vec<_>>())
    }

    pub fn std_over_folds(&self) -> f64 {
        std_dev(&self.folds.iter().map(|f| f.test_accuracy).collect::<Vec<_>>())
    }

    /// Mean alignment loss of every job's first and last epoch, averaged
    /// over jobs. `None` without curves.
    pub fn align_first_last(&self) -> Option<(f64, f64)> {
        let mut jobs: Vec<(u64, Option<usize>)> = self.curves.iter().map(|c| (c.seed, c.fold)).collect();
        jobs.sort_unstable();
        jobs.dedup();
        if jobs.is_empty() {
            return None;
        }
        let (mut first, mut last) = (Vec::new(), Vec::new());
        for job in jobs {
            let rows: Vec<&EpochRecord> = self.curves.iter().filter(|c| (c.seed, c.fold) == job).collect();
            first.push(rows.first()?.align_loss);
            last.push(rows.last()?.align_loss);
        }
        Some((mean(&first), mean(&last)))
    }

    /// One row per `(seed, fold)`. Wall time is left out so that identical
    /// runs produce identical files.
    pub fn to_csv(&self, header: &str) -> String {
        let mut out = format!("# config: {header}\n");
        out.push_str("seed,fold,test_accuracy,val_accuracy,best_epoch,epochs_run,test_size\n");
        for f in &self.folds {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                f.seed, f.fold, f.test_accuracy, f.val_accuracy, f.best_epoch, f.epochs_run, f.test_size
            );
        }
        out
    }

    pub fn curves_csv(&self, header: &str) -> String {
        let mut out = format!("# config: {header}\n");
        out.push_str("seed,fold,epoch,task_loss,align_loss,val_accuracy,val_loss\n");
        for c in &self.curves {
            let fold = c.fold.map(|f| f.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                c.seed,
                fold,
                c.epoch,
                c.task_loss,
                c.align_loss,
                opt(c.val_accuracy),
                opt(c.val_loss)
            );
        }
        out
    }

    pub fn summary(&self, config: serde_json::Value) -> serde_json::Value {
        serde_json::json!({
            "config": config,
            "folds": self.folds.len(),
            "mean_accuracy": self.mean_accuracy(),
            "std_over_seeds": self.std_over_seeds(),
            "std_over_folds": self.std_over_folds(),
            "seed_means": self.seed_means().iter().map(|(s, m)| serde_json::json!({"seed": s, "mean_accuracy": m})).collect::<Vec<_>>(),
            "wall_time_secs": self.wall_time_secs,
        })
    }
}
