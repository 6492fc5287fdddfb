use crate::classify::cross_entropy;
use crate::encoder::Dropout;
use crate::model::{ModelError, ModelState, Network};
use crate::numkit::{axpy, Matrix, Optimizer, Rng};
use crate::readout::soft_ssa;
use crate::tudata::FoldSplit;

use super::report::EpochRecord;
use super::{evaluate, Evaluation, Prepared, Selection, TrainConfig, TrainError};

/// Batch-mean losses of one step (or one epoch).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepLosses {
    pub class: f64,
    /// Mean soft alignment cost; 0 for gread.
    pub align: f64,
}

/// Owns a model and its optimizer state for one fold.
///
/// Update boundaries: the prototypes move only along `∂L_align/∂P`; encoder,
/// gate and head move only along `∂L_class` (plus `∂L_align/∂H` when
/// `align_grad_to_encoder` is set).
pub struct Trainer<'a, 'd> {
    data: &'a Prepared<'d>,
    cfg: TrainConfig,
    pub model: ModelState,
    net_opt: Optimizer,
    proto_opt: Optimizer,
    rng: Rng,
    epochs_done: usize,
}

impl<'a, 'd> Trainer<'a, 'd> {
    /// Fresh model initialized from `(seed, fold)`.
    pub fn new(data: &'a Prepared<'d>, cfg: &TrainConfig, seed: u64, fold: usize) -> Result<Self, TrainError> {
        cfg.validate()?;
        let spec = cfg.model_spec(data.ds.feature_dim, data.ds.num_classes);
        let mut init_rng = Rng::derive(seed, fold as u64);
        let model = ModelState::new(&spec, &mut init_rng)?;
        Ok(Self::with_model(
            data,
            cfg,
            model,
            Rng::derive(seed, 0x7EA1_0000 + fold as u64),
        ))
    }

    pub fn with_model(data: &'a Prepared<'d>, cfg: &TrainConfig, model: ModelState, rng: Rng) -> Self {
        Self {
            data,
            cfg: cfg.clone(),
            model,
            net_opt: Optimizer::new(cfg.optimizer_config()),
            proto_opt: Optimizer::new(cfg.optimizer_config()),
            rng,
            epochs_done: 0,
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// One minibatch update.
    pub fn step(&mut self, batch: &[usize]) -> Result<StepLosses, TrainError> {
        if batch.is_empty() {
            return Ok(StepLosses::default());
        }
        let g = batch_gradients(&self.model, self.data, batch, &self.cfg, &mut self.rng)?;
        if let Some(net) = g.net {
            apply_network(&mut self.net_opt, &mut self.model.net, net, self.cfg.weight_decay)?;
        }
        if let (Some(p), Some(gp)) = (self.model.prototypes.as_mut(), g.prototypes) {
            self.proto_opt.step(0, p.matrix_mut(), &gp)?;
        }
        Ok(g.losses)
    }

    /// One pass over `train` in a freshly shuffled order. Returns per-graph
    /// mean losses.
    pub fn epoch(&mut self, train: &[usize]) -> Result<StepLosses, TrainError> {
        let mut order = train.to_vec();
        self.rng.shuffle(&mut order);
        self.epochs_done += 1;
        let epoch = self.epochs_done;
        let mut total = StepLosses::default();
        for batch in order.chunks(self.cfg.batch) {
            let l = self.step(batch)?;
            let w = batch.len() as f64 / order.len() as f64;
            for (what, value) in [("class loss", l.class), ("alignment loss", l.align)] {
                if !value.is_finite() {
                    return Err(TrainError::Diverged { epoch, what, value });
                }
            }
            total.class += l.class * w;
            total.align += l.align * w;
        }
        if !self.model.net.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                what: "parameters",
                value: f64::NAN,
            });
        }
        Ok(total)
    }
}

/// Batch-mean losses and the gradients each parameter group receives.
#[derive(Clone, Debug)]
pub struct BatchGradients {
    pub losses: StepLosses,
    /// Encoder, gate and head gradients; `None` when no loss term reaches
    /// them (the group is then left untouched, optimizer state included).
    pub net: Option<Network>,
    /// `∂L_align/∂P`; `None` for gread or a zero alignment weight.
    pub prototypes: Option<Matrix>,
}

/// Gradients of `class_weight·L_class + align_weight·L_align` over `batch`,
/// routed by parameter group: the prototypes see only the alignment term;
/// the rest sees only the class term, plus `∂L_align/∂H` when
/// `align_grad_to_encoder` is set. `rng` drives dropout.
pub fn batch_gradients(
    model: &ModelState,
    data: &Prepared<'_>,
    batch: &[usize],
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<BatchGradients, TrainError> {
    let scale = 1.0 / batch.len().max(1) as f64;
    let cw = cfg.class_weight * scale;
    let aw = cfg.align_weight * scale;
    let has_p = model.prototypes.is_some();
    let align_to_net = cfg.align_grad_to_encoder && cfg.align_weight != 0.0 && has_p;
    let net_update = cfg.class_weight != 0.0 || align_to_net;
    let proto_update = cfg.align_weight != 0.0 && has_p;

    let mut grads = model.net.zeros_like();
    let mut grad_p = model
        .prototypes
        .as_ref()
        .filter(|_| proto_update)
        .map(|p| Matrix::zeros(p.k(), p.dim()));
    let mut losses = StepLosses::default();

    for &i in batch {
        let g = data.graph(i);
        let dropout = (cfg.dropout > 0.0).then(|| Dropout {
            rate: cfg.dropout,
            rng: &mut *rng,
        });
        let fwd = model.forward(&data.adj[i], &g.features, dropout)?;
        let repr = fwd.representation();
        let scores = model.net.head.scores(repr).map_err(ModelError::from)?;
        let (class_loss, mut d_scores) = cross_entropy(&scores, g.label).map_err(ModelError::from)?;
        losses.class += class_loss * scale;

        let mut extra_nodes = None;
        if let Some(p) = &model.prototypes {
            let soft = soft_ssa(&fwd.h, p, cfg.gamma).map_err(ModelError::from)?;
            losses.align += soft.value * scale;
            if let Some(gp) = grad_p.as_mut() {
                axpy(aw, soft.grad_prototypes.as_slice(), gp.as_mut_slice());
            }
            if align_to_net {
                extra_nodes = Some(soft.grad_nodes.scale(aw));
            }
        }

        if net_update {
            d_scores.iter_mut().for_each(|v| *v *= cw);
            let d_repr = model.net.head.backward(repr, &d_scores, &mut grads.head);
            model.backward_into(&fwd, &d_repr, extra_nodes.as_ref(), 1.0, &mut grads)?;
        }
    }
    Ok(BatchGradients {
        losses,
        net: net_update.then_some(grads),
        prototypes: grad_p,
    })
}

/// Adds weight decay and applies one optimizer step to every tensor.
pub(crate) fn apply_network(
    opt: &mut Optimizer,
    net: &mut Network,
    mut grads: Network,
    weight_decay: f64,
) -> Result<(), TrainError> {
    if weight_decay > 0.0 {
        let mask = net.decay_mask();
        for ((g, p), decay) in grads.tensors_mut().into_iter().zip(net.tensors()).zip(mask) {
            if decay {
                axpy(weight_decay, p, g);
            }
        }
    }
    for (slot, (p, g)) in net.tensors_mut().into_iter().zip(grads.tensors()).enumerate() {
        opt.step_slice(slot, p, g)?;
    }
    Ok(())
}

/// Result of training and testing one `(seed, fold)` job.
#[derive(Clone, Debug)]
pub struct FoldOutcome {
    pub seed: u64,
    pub fold: usize,
    /// Parameters restored from the best validation epoch.
    pub model: ModelState,
    pub test: Evaluation,
    pub val_accuracy: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub curve: Vec<EpochRecord>,
}

pub(crate) fn improves(select: Selection, val: &Evaluation, best: Option<(f64, f64)>) -> bool {
    let Some((best_acc, best_loss)) = best else {
        return true;
    };
    match select {
        Selection::Accuracy => val.accuracy > best_acc || (val.accuracy == best_acc && val.loss < best_loss),
        Selection::Loss => val.loss < best_loss,
    }
}

/// Trains on `split.train`, early-stops on `split.val`, reports on
/// `split.test`.
pub fn train_supervised(
    data: &Prepared<'_>,
    split: &FoldSplit,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<FoldOutcome, TrainError> {
    let mut trainer = Trainer::new(data, cfg, seed, split.fold)?;
    // Tiny datasets can leave the validation split empty.
    let val_set = if split.val.is_empty() { &split.train } else { &split.val };
    let mut best: Option<(f64, f64)> = None;
    let mut best_model = trainer.model.clone();
    let mut best_epoch = 0;
    let mut curve = Vec::new();
    let mut epochs_run = 0;
    for epoch in 1..=cfg.epochs {
        let losses = trainer.epoch(&split.train)?;
        let val = evaluate(&trainer.model, data, val_set)?;
        epochs_run = epoch;
        curve.push(EpochRecord {
            seed,
            fold: Some(split.fold),
            epoch,
            task_loss: losses.class,
            align_loss: losses.align,
            val_accuracy: Some(val.accuracy),
            val_loss: Some(val.loss),
        });
        if improves(cfg.select, &val, best) {
            best = Some((val.accuracy, val.loss));
            best_model = trainer.model.clone();
            best_epoch = epoch;
        } else if epoch - best_epoch >= cfg.patience.max(1) {
            break;
        }
    }
    let test = evaluate(&best_model, data, &split.test)?;
    Ok(FoldOutcome {
        seed,
        fold: split.fold,
        model: best_model,
        test,
        val_accuracy: best.map_or(0.0, |b| b.0),
        best_epoch,
        epochs_run,
        curve,
    })
}
