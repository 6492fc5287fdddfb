//! Optimization: supervised joint training, contrastive pretraining, linear
//! probing, evaluation and the cross-validation harness.

mod config;
mod contrastive;
mod cv;
mod probe;
mod report;
mod supervised;

use thiserror::Error;

use crate::classify::cross_entropy;
use crate::encoder::{normalize_adjacency, NormAdj};
use crate::model::{ModelError, ModelState};
use crate::numkit::NumError;
use crate::tudata::{Dataset, Graph, TuError};

pub use config::{parse_seeds, HeadKind, Mode, Selection, TrainConfig, CONFIG_KEYS};
pub use contrastive::{
    contrastive_gradients, contrastive_loss, drop_nodes, train_contrastive, ContrastiveOutcome, ContrastiveTrainer,
};
pub use cv::{run_cv, CvOutcome};
pub use probe::{linear_probe, representations, ProbeOutcome};
pub use report::{EpochRecord, FoldRecord, RunReport};
pub use supervised::{batch_gradients, train_supervised, BatchGradients, FoldOutcome, StepLosses, Trainer};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}: {what} = {value}")]
    Diverged {
        epoch: usize,
        what: &'static str,
        value: f64,
    },
    #[error("contrastive batches need at least 2 graphs, got {0}")]
    BatchTooSmall(usize),
    #[error("cannot evaluate on an empty set of graphs")]
    EmptyEvaluation,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] TuError),
    #[error(transparent)]
    Num(#[from] NumError),
}

/// A dataset with each graph's normalized adjacency computed once.
pub struct Prepared<'d> {
    pub ds: &'d Dataset,
    pub adj: Vec<NormAdj>,
}

impl<'d> Prepared<'d> {
    pub fn new(ds: &'d Dataset) -> Self {
        let adj = ds.graphs.iter().map(normalize_adjacency).collect();
        Self { ds, adj }
    }

    pub fn graph(&self, i: usize) -> &Graph {
        &self.ds.graphs[i]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// Mean cross-entropy.
    pub loss: f64,
    pub predictions: Vec<usize>,
}

/// Index of the largest score; ties go to the smaller class index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Accuracy and mean loss of `model` on the graphs at `indices`.
pub fn evaluate(model: &ModelState, data: &Prepared<'_>, indices: &[usize]) -> Result<Evaluation, TrainError> {
    if indices.is_empty() {
        return Err(TrainError::EmptyEvaluation);
    }
    let mut correct = 0usize;
    let mut loss = 0.0;
    let mut predictions = Vec::with_capacity(indices.len());
    for &i in indices {
        let g = data.graph(i);
        let fwd = model.forward(&data.adj[i], &g.features, None)?;
        let scores = model.net.head.scores(fwd.representation()).map_err(ModelError::from)?;
        let pred = argmax(&scores);
        loss += cross_entropy(&scores, g.label).map_err(ModelError::from)?.0;
        correct += usize::from(pred == g.label);
        predictions.push(pred);
    }
    let n = indices.len() as f64;
    Ok(Evaluation {
        accuracy: correct as f64 / n,
        loss: loss / n,
        predictions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_first_on_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }
}
