use crate::classify::{cross_entropy, ClassifierParams, Head};
use crate::model::{ModelError, ModelState};
use crate::numkit::{Optimizer, OptimizerConfig, Rng};
use crate::tudata::FoldSplit;

use super::supervised::improves;
use super::{evaluate, Evaluation, Prepared, TrainConfig, TrainError};

/// Flattened readout output of every graph at `indices`.
pub fn representations(
    model: &ModelState,
    data: &Prepared<'_>,
    indices: &[usize],
) -> Result<Vec<Vec<f64>>, TrainError> {
    indices
        .iter()
        .map(|&i| {
            let g = data.graph(i);
            Ok(model
                .forward(&data.adj[i], &g.features, None)?
                .representation()
                .to_vec())
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ProbeOutcome {
    /// The frozen model with its head replaced by the trained probe.
    pub model: ModelState,
    pub test: Evaluation,
    pub val_accuracy: f64,
    pub best_epoch: usize,
}

fn standardize(x: &[f64], mean: &[f64], std: &[f64]) -> Vec<f64> {
    x.iter().zip(mean).zip(std).map(|((v, m), s)| (v - m) / s).collect()
}

fn probe_eval(head: &Head, xs: &[Vec<f64>], ys: &[usize]) -> Result<Evaluation, TrainError> {
    let mut correct = 0;
    let mut loss = 0.0;
    let mut predictions = Vec::with_capacity(xs.len());
    for (x, &y) in xs.iter().zip(ys) {
        let s = head.scores(x).map_err(ModelError::from)?;
        let pred = super::argmax(&s);
        loss += cross_entropy(&s, y).map_err(ModelError::from)?.0;
        correct += usize::from(pred == y);
        predictions.push(pred);
    }
    let n = xs.len().max(1) as f64;
    Ok(Evaluation {
        accuracy: correct as f64 / n,
        loss: loss / n,
        predictions,
    })
}

/// Trains a softmax linear classifier on frozen, train-standardized
/// representations (full batch, adaptive-moment steps), selects the epoch
/// with the best validation score, and tests it. `model` is only read.
pub fn linear_probe(
    model: &ModelState,
    data: &Prepared<'_>,
    split: &FoldSplit,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<ProbeOutcome, TrainError> {
    let labels = |idx: &[usize]| -> Vec<usize> { idx.iter().map(|&i| data.graph(i).label).collect() };
    let val_idx = if split.val.is_empty() { &split.train } else { &split.val };
    let train_raw = representations(model, data, &split.train)?;
    if train_raw.is_empty() {
        return Err(TrainError::EmptyEvaluation);
    }
    let dim = train_raw[0].len();
    let n = train_raw.len() as f64;
    let mut mean = vec![0.0; dim];
    for x in &train_raw {
        crate::numkit::axpy(1.0 / n, x, &mut mean);
    }
    let mut std = vec![0.0; dim];
    for x in &train_raw {
        for ((s, v), m) in std.iter_mut().zip(x).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    std.iter_mut().for_each(|s| *s = s.sqrt().max(1e-8));

    let train_x: Vec<_> = train_raw.iter().map(|x| standardize(x, &mean, &std)).collect();
    let val_x: Vec<_> = representations(model, data, val_idx)?
        .iter()
        .map(|x| standardize(x, &mean, &std))
        .collect();
    let (train_y, val_y) = (labels(&split.train), labels(val_idx));

    let classes = data.ds.num_classes;
    let positions = model.positions();
    let hidden = model.hidden();
    let mut rng = Rng::derive(seed, 0x9208_0000 + split.fold as u64);
    let mut head = Head::Linear(ClassifierParams::init(&mut rng, classes, positions, hidden));
    let mut opt = Optimizer::new(OptimizerConfig::adaptive(cfg.probe_lr));

    let mut best = None;
    let mut best_head = head.clone();
    let mut best_epoch = 0;
    for epoch in 1..=cfg.probe_epochs {
        let mut grads = head.zeros_like();
        for (x, &y) in train_x.iter().zip(&train_y) {
            let s = head.scores(x).map_err(ModelError::from)?;
            let (_, mut ds) = cross_entropy(&s, y).map_err(ModelError::from)?;
            ds.iter_mut().for_each(|v| *v /= n);
            head.backward(x, &ds, &mut grads);
        }
        for (slot, (p, g)) in head.tensors_mut().into_iter().zip(grads.tensors()).enumerate() {
            opt.step_slice(slot, p, g)?;
        }
        let val = probe_eval(&head, &val_x, &val_y)?;
        if improves(cfg.select, &val, best) {
            best = Some((val.accuracy, val.loss));
            best_head = head.clone();
            best_epoch = epoch;
        }
    }

    // Fold the standardization into the weights so the probe applies to raw
    // representations: W' = W/σ, b' = b − Σ_j W_j μ_j/σ_j.
    let Head::Linear(mut params) = best_head else {
        unreachable!("probe head is linear")
    };
    for c in 0..params.classes() {
        let row = params.weights.row_mut(c);
        let mut shift = 0.0;
        for ((w, m), s) in row.iter_mut().zip(&mean).zip(&std) {
            *w /= s;
            shift += *w * m;
        }
        params.bias[c] -= shift;
    }
    let mut probed = model.clone();
    probed.net.head = Head::Linear(params);
    let test = evaluate(&probed, data, &split.test)?;
    Ok(ProbeOutcome {
        model: probed,
        test,
        val_accuracy: best.map_or(0.0, |b| b.0),
        best_epoch,
    })
}
