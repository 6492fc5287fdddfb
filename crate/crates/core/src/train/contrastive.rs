use crate::model::{ForwardPass, ModelError, ModelState, ProjectionHead};
use crate::numkit::{axpy, dot, Matrix, Optimizer, Rng};
use crate::readout::{soft_ssa, EPS};
use crate::tudata::Graph;

use super::report::EpochRecord;
use super::supervised::apply_network;
use super::{BatchGradients, Prepared, StepLosses, TrainConfig, TrainError};

/// Removes `round(ratio·N)` uniformly chosen nodes with their edges. At least
/// two nodes always survive; graphs with two or fewer nodes come back intact.
pub fn drop_nodes(g: &Graph, ratio: f64, rng: &mut Rng) -> Graph {
    let n = g.num_nodes;
    let drop = ((ratio * n as f64).round() as usize).min(n.saturating_sub(2));
    if drop == 0 {
        return g.clone();
    }
    let mut keep = rng.permutation(n);
    keep.truncate(n - drop);
    keep.sort_unstable();
    g.induced(&keep)
}

fn cosine_with_grads(a: &[f64], b: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    let (ga, gb) = (na.max(EPS), nb.max(EPS));
    let s = dot(a, b) / (ga * gb);
    let mut da: Vec<f64> = b.iter().map(|v| v / (ga * gb)).collect();
    let mut db: Vec<f64> = a.iter().map(|v| v / (ga * gb)).collect();
    if na > EPS {
        axpy(-s / (na * na), a, &mut da);
    }
    if nb > EPS {
        axpy(-s / (nb * nb), b, &mut db);
    }
    (s, da, db)
}

/// In-batch contrastive loss over projected vectors.
///
/// For anchor `i` the positive is `z_pos[i]` and the negatives are the other
/// anchors `z[j]`, `j ≠ i`:
///
/// `L = (1/B) Σ_i [ −sim(z_i, z⁺_i)/τ + log Σ_{j≠i} exp(sim(z_i, z_j)/τ) ]`
///
/// Returns the loss and its gradients with respect to `z` and `z_pos`.
pub fn contrastive_loss(
    z: &[Vec<f64>],
    z_pos: &[Vec<f64>],
    temperature: f64,
) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>), TrainError> {
    let b = z.len();
    if b < 2 || z_pos.len() != b {
        return Err(TrainError::BatchTooSmall(b.min(z_pos.len())));
    }
    let dim = z[0].len();
    let scale = 1.0 / b as f64;
    let mut dz = vec![vec![0.0; dim]; b];
    let mut dz_pos = vec![vec![0.0; dim]; b];
    let mut loss = 0.0;
    for i in 0..b {
        let (s_pos, da, db) = cosine_with_grads(&z[i], &z_pos[i]);
        loss -= s_pos / temperature;
        axpy(-scale / temperature, &da, &mut dz[i]);
        axpy(-scale / temperature, &db, &mut dz_pos[i]);

        let neg: Vec<(usize, f64, Vec<f64>, Vec<f64>)> = (0..b)
            .filter(|&j| j != i)
            .map(|j| {
                let (s, da, db) = cosine_with_grads(&z[i], &z[j]);
                (j, s / temperature, da, db)
            })
            .collect();
        let top = neg.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = neg.iter().map(|t| (t.1 - top).exp()).sum();
        loss += top + total.ln();
        for (j, s, da, db) in &neg {
            let w = (s - top).exp() / total * scale / temperature;
            axpy(w, da, &mut dz[i]);
            axpy(w, db, &mut dz[*j]);
        }
    }
    Ok((loss * scale, dz, dz_pos))
}

/// Contrastive counterpart of [`super::Trainer`]: the encoder, gate and
/// projection head follow the contrastive loss, the prototypes follow the
/// alignment loss on the original graphs.
pub struct ContrastiveTrainer<'a, 'd> {
    data: &'a Prepared<'d>,
    cfg: TrainConfig,
    pub model: ModelState,
    net_opt: Optimizer,
    proto_opt: Optimizer,
    rng: Rng,
}

impl<'a, 'd> ContrastiveTrainer<'a, 'd> {
    pub fn new(data: &'a Prepared<'d>, cfg: &TrainConfig, seed: u64) -> Result<Self, TrainError> {
        cfg.validate()?;
        let mut spec = cfg.model_spec(data.ds.feature_dim, data.ds.num_classes);
        spec.projection = true;
        let mut init_rng = Rng::derive(seed, 0xC0_0000);
        let model = ModelState::new(&spec, &mut init_rng)?;
        Ok(Self {
            data,
            cfg: cfg.clone(),
            model,
            net_opt: Optimizer::new(cfg.optimizer_config()),
            proto_opt: Optimizer::new(cfg.optimizer_config()),
            rng: Rng::derive(seed, 0xC0_0001),
        })
    }

    /// One update; `StepLosses::class` carries the contrastive loss.
    pub fn step(&mut self, batch: &[usize]) -> Result<StepLosses, TrainError> {
        let augmented: Vec<Graph> = batch
            .iter()
            .map(|&i| drop_nodes(self.data.graph(i), self.cfg.drop_ratio, &mut self.rng))
            .collect();
        let g = contrastive_gradients(&self.model, self.data, batch, &augmented, &self.cfg)?;
        if let Some(net) = g.net {
            apply_network(&mut self.net_opt, &mut self.model.net, net, self.cfg.weight_decay)?;
        }
        if let (Some(p), Some(gp)) = (self.model.prototypes.as_mut(), g.prototypes) {
            self.proto_opt.step(0, p.matrix_mut(), &gp)?;
        }
        Ok(g.losses)
    }
}

/// Gradients for one contrastive batch with given augmentations
/// (`augmented[i]` is the positive view of `batch[i]`). Encoder, gate and
/// projection receive `∂L_contr`; the prototypes receive `∂L_align` from the
/// original graphs. `losses.class` holds the contrastive loss.
pub fn contrastive_gradients(
    model: &ModelState,
    data: &Prepared<'_>,
    batch: &[usize],
    augmented: &[Graph],
    cfg: &TrainConfig,
) -> Result<BatchGradients, TrainError> {
    if batch.len() < 2 || augmented.len() != batch.len() {
        return Err(TrainError::BatchTooSmall(batch.len().min(augmented.len())));
    }
    let projection: &ProjectionHead = model
        .net
        .projection
        .as_ref()
        .ok_or_else(|| TrainError::Config("contrastive training needs a projection head".into()))?;
    let scale = 1.0 / batch.len() as f64;
    let aw = cfg.align_weight * scale;
    let mut grad_p = model
        .prototypes
        .as_ref()
        .filter(|_| cfg.align_weight != 0.0)
        .map(|p| Matrix::zeros(p.k(), p.dim()));
    let mut align = 0.0;

    let mut originals = Vec::with_capacity(batch.len());
    let mut views = Vec::with_capacity(batch.len());
    for (&i, aug) in batch.iter().zip(augmented) {
        let g = data.graph(i);
        let fwd = model.forward(&data.adj[i], &g.features, None)?;
        if let Some(p) = &model.prototypes {
            let soft = soft_ssa(&fwd.h, p, cfg.gamma).map_err(ModelError::from)?;
            align += soft.value * scale;
            if let Some(gp) = grad_p.as_mut() {
                axpy(aw, soft.grad_prototypes.as_slice(), gp.as_mut_slice());
            }
        }
        originals.push(fwd);
        views.push(model.encode(aug)?);
    }

    let project = |fwds: &[ForwardPass<'_>]| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        fwds.iter().map(|f| projection.forward(f.representation())).unzip()
    };
    let (z, hid) = project(&originals);
    let (z_pos, hid_pos) = project(&views);
    let (loss, dz, dz_pos) = contrastive_loss(&z, &z_pos, cfg.temperature)?;

    let mut grads = model.net.zeros_like();
    let mut grads_proj = grads.projection.take().expect("zeros_like keeps the projection head");
    for (fwds, hids, dzs) in [(&originals, &hid, &dz), (&views, &hid_pos, &dz_pos)] {
        for ((fwd, h), d) in fwds.iter().zip(hids).zip(dzs) {
            let d_repr = projection.backward(fwd.representation(), h, d, &mut grads_proj);
            model.backward_into(fwd, &d_repr, None, 1.0, &mut grads)?;
        }
    }
    grads.projection = Some(grads_proj);
    Ok(BatchGradients {
        losses: StepLosses { class: loss, align },
        net: Some(grads),
        prototypes: grad_p,
    })
}

#[derive(Clone, Debug)]
pub struct ContrastiveOutcome {
    pub seed: u64,
    pub model: ModelState,
    pub curve: Vec<EpochRecord>,
}

/// Contrastive pretraining for `cfg.epochs` epochs over `indices`. Labels are
/// never read. A trailing batch of one graph is skipped.
pub fn train_contrastive(
    data: &Prepared<'_>,
    indices: &[usize],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<ContrastiveOutcome, TrainError> {
    let mut trainer = ContrastiveTrainer::new(data, cfg, seed)?;
    if indices.len() < 2 {
        return Err(TrainError::BatchTooSmall(indices.len()));
    }
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut order = indices.to_vec();
    for epoch in 1..=cfg.epochs {
        trainer.rng.shuffle(&mut order);
        let mut total = StepLosses::default();
        let mut seen = 0usize;
        for batch in order.chunks(cfg.batch).filter(|b| b.len() >= 2) {
            let l = trainer.step(batch)?;
            for (what, value) in [("contrastive loss", l.class), ("alignment loss", l.align)] {
                if !value.is_finite() {
                    return Err(TrainError::Diverged { epoch, what, value });
                }
            }
            total.class += l.class * batch.len() as f64;
            total.align += l.align * batch.len() as f64;
            seen += batch.len();
        }
        curve.push(EpochRecord {
            seed,
            fold: None,
            epoch,
            task_loss: total.class / seen as f64,
            align_loss: total.align / seen as f64,
            val_accuracy: None,
            val_loss: None,
        });
    }
    Ok(ContrastiveOutcome {
        seed,
        model: trainer.model,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_similarities_give_log_negatives() {
        let v = vec![1.0, 2.0];
        for b in 2..6 {
            let z = vec![v.clone(); b];
            let (loss, _, _) = contrastive_loss(&z, &z, 1.0).unwrap();
            assert!((loss - ((b - 1) as f64).ln()).abs() < 1e-12, "b={b}: {loss}");
        }
    }

    #[test]
    fn aligned_positives_and_opposed_negatives_lower_the_loss() {
        let z = vec![vec![1.0, 0.0], vec![-1.0, 0.0]];
        let (good, _, _) = contrastive_loss(&z, &z, 1.0).unwrap();
        let flat = vec![vec![1.0, 0.0]; 2];
        let (equal, _, _) = contrastive_loss(&flat, &flat, 1.0).unwrap();
        assert!(good < equal);
    }

    #[test]
    fn single_graph_batch_is_rejected() {
        let z = vec![vec![1.0]];
        assert!(matches!(
            contrastive_loss(&z, &z, 1.0),
            Err(TrainError::BatchTooSmall(1))
        ));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = Rng::new(8);
        let mut draw = |n: usize| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| (0..3).map(|_| rng.uniform(-1.0, 1.0)).collect())
                .collect()
        };
        let z = draw(4);
        let zp = draw(4);
        let (_, dz, dzp) = contrastive_loss(&z, &zp, 0.5).unwrap();
        let h = 1e-6;
        for (which, analytic) in [(0, &dz), (1, &dzp)] {
            for i in 0..4 {
                for c in 0..3 {
                    let eval = |delta: f64| {
                        let (mut a, mut b) = (z.clone(), zp.clone());
                        if which == 0 {
                            a[i][c] += delta;
                        } else {
                            b[i][c] += delta;
                        }
                        contrastive_loss(&a, &b, 0.5).unwrap().0
                    };
                    let fd = (eval(h) - eval(-h)) / (2.0 * h);
                    assert!((fd - analytic[i][c]).abs() <= 1e-6 * fd.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn node_drop_keeps_two_nodes() {
        let mut rng = Rng::new(1);
        let g = Graph::new(3, &[(0, 1), (1, 2)], Matrix::filled(3, 1, 1.0), 0);
        assert_eq!(drop_nodes(&g, 0.9, &mut rng).num_nodes, 2);
        let big = Graph::new(10, &[(0, 1)], Matrix::filled(10, 1, 1.0), 0);
        assert_eq!(drop_nodes(&big, 0.2, &mut rng).num_nodes, 8);
    }
}
