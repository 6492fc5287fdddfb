use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{ModelSpec, ReadoutKind};
use crate::numkit::{OptimizerConfig, OptimizerKind};
use crate::readout::AggregatorKind;
use crate::tudata::FeaturePolicy;

use super::TrainError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Supervised,
    Contrastive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Linear,
    Mlp,
}

/// Validation metric used for early stopping and model selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    Accuracy,
    Loss,
}

macro_rules! text_enum {
    ($ty:ty { $($name:literal => $variant:expr),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                $(if *self == $variant { return f.write_str($name); })+
                unreachable!()
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($name => Ok($variant),)+
                    other => Err(format!(
                        "unknown value {other:?} (expected one of: {})",
                        [$($name),+].join(", ")
                    )),
                }
            }
        }
    };
}

text_enum!(Mode { "supervised" => Mode::Supervised, "contrastive" => Mode::Contrastive });
text_enum!(HeadKind { "linear" => HeadKind::Linear, "mlp" => HeadKind::Mlp });
text_enum!(Selection { "acc" => Selection::Accuracy, "loss" => Selection::Loss });

/// Every knob of a training run. Defaults follow the evaluation protocol:
/// γ = 0.01, up to 500 epochs, patience 50, 10 folds, batches of 32.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub readout: ReadoutKind,
    /// Number of structural positions; required for ssread.
    pub k: Option<usize>,
    pub gamma: f64,
    pub aggregator: AggregatorKind,
    pub hidden: usize,
    pub layers: usize,
    pub head: HeadKind,
    pub mlp_hidden: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub epochs: usize,
    pub patience: usize,
    pub batch: usize,
    pub seeds: Vec<u64>,
    pub folds: usize,
    pub stratify: bool,
    pub mode: Mode,
    pub select: Selection,
    pub dropout: f64,
    pub weight_decay: f64,
    pub class_weight: f64,
    pub align_weight: f64,
    /// Lets `∂L_align/∂H` reach the encoder. Off by default: the encoder is
    /// trained by the task loss only.
    pub align_grad_to_encoder: bool,
    pub temperature: f64,
    pub drop_ratio: f64,
    pub probe_epochs: usize,
    pub probe_lr: f64,
    /// `None`: one-hot node labels when the dataset has them, else constant.
    pub features: Option<FeaturePolicy>,
    pub jobs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            readout: ReadoutKind::Gread,
            k: None,
            gamma: 0.01,
            aggregator: AggregatorKind::Sum,
            hidden: 64,
            layers: 3,
            head: HeadKind::Linear,
            mlp_hidden: 64,
            optimizer: OptimizerKind::AdaptiveMoment,
            lr: 1e-3,
            epochs: 500,
            patience: 50,
            batch: 32,
            seeds: vec![0],
            folds: 10,
            stratify: true,
            mode: Mode::Supervised,
            select: Selection::Accuracy,
            dropout: 0.0,
            weight_decay: 0.0,
            class_weight: 1.0,
            align_weight: 1.0,
            align_grad_to_encoder: false,
            temperature: 1.0,
            drop_ratio: 0.2,
            probe_epochs: 300,
            probe_lr: 0.01,
            features: None,
            jobs: 1,
        }
    }
}

/// Keys accepted by [`TrainConfig::set`], in documentation order.
pub const CONFIG_KEYS: &[&str] = &[
    "readout",
    "k",
    "gamma",
    "agg",
    "hidden",
    "layers",
    "head",
    "mlp_hidden",
    "optimizer",
    "lr",
    "epochs",
    "patience",
    "batch",
    "seed",
    "folds",
    "stratify",
    "mode",
    "select",
    "dropout",
    "weight_decay",
    "class_weight",
    "align_weight",
    "align_grad_to_encoder",
    "temperature",
    "drop_ratio",
    "probe_epochs",
    "probe_lr",
    "features",
    "jobs",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, TrainError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| TrainError::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

/// Parses a comma-separated seed list such as `1,2,3`.
pub fn parse_seeds(value: &str) -> Result<Vec<u64>, TrainError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse("seed", s))
        .collect()
}

impl TrainConfig {
    /// Sets one option from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), TrainError> {
        let value = value.trim();
        match key {
            "readout" => self.readout = parse(key, value)?,
            "k" => self.k = Some(parse(key, value)?),
            "gamma" => self.gamma = parse(key, value)?,
            "agg" | "aggregator" => self.aggregator = parse(key, value)?,
            "hidden" => self.hidden = parse(key, value)?,
            "layers" => self.layers = parse(key, value)?,
            "head" => self.head = parse(key, value)?,
            "mlp_hidden" => self.mlp_hidden = parse(key, value)?,
            "optimizer" => {
                self.optimizer = match value {
                    "adam" | "adaptive" => OptimizerKind::AdaptiveMoment,
                    "sgd" | "plain" => OptimizerKind::PlainGradient,
                    other => {
                        return Err(TrainError::Config(format!(
                            "optimizer: unknown value {other:?} (expected adam or sgd)"
                        )))
                    }
                }
            }
            "lr" => self.lr = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "seed" | "seeds" => self.seeds = parse_seeds(value)?,
            "folds" => self.folds = parse(key, value)?,
            "stratify" => self.stratify = parse(key, value)?,
            "mode" => self.mode = parse(key, value)?,
            "select" => self.select = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "class_weight" => self.class_weight = parse(key, value)?,
            "align_weight" => self.align_weight = parse(key, value)?,
            "align_grad_to_encoder" => self.align_grad_to_encoder = parse(key, value)?,
            "temperature" => self.temperature = parse(key, value)?,
            "drop_ratio" => self.drop_ratio = parse(key, value)?,
            "probe_epochs" => self.probe_epochs = parse(key, value)?,
            "probe_lr" => self.probe_lr = parse(key, value)?,
            "features" => self.features = Some(parse(key, value)?),
            "jobs" => self.jobs = parse(key, value)?,
            other => return Err(TrainError::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |msg: String| Err(TrainError::Config(msg));
        if self.readout == ReadoutKind::Ssread {
            match self.k {
                None => return fail("readout ssread requires k (number of structural prototypes, e.g. --k 4)".into()),
                Some(0) => return fail("k must be at least 1".into()),
                Some(_) => {}
            }
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return fail(format!("gamma must be a finite value >= 0, got {}", self.gamma));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if self.hidden == 0 || self.layers == 0 || self.mlp_hidden == 0 {
            return fail("hidden, layers and mlp_hidden must be at least 1".into());
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.patience > self.epochs {
            return fail(format!("patience ({}) exceeds epochs ({})", self.patience, self.epochs));
        }
        if self.batch == 0 {
            return fail("batch must be at least 1".into());
        }
        if self.mode == Mode::Contrastive && self.batch < 2 {
            return fail("contrastive mode needs batch >= 2 (in-batch negatives)".into());
        }
        if self.seeds.is_empty() {
            return fail("at least one seed is required".into());
        }
        if self.folds < 2 {
            return fail(format!("folds must be at least 2, got {}", self.folds));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(0.0..1.0).contains(&self.drop_ratio) {
            return fail(format!("drop_ratio must lie in [0, 1), got {}", self.drop_ratio));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return fail(format!("temperature must be positive, got {}", self.temperature));
        }
        for (name, v) in [
            ("weight_decay", self.weight_decay),
            ("class_weight", self.class_weight),
            ("align_weight", self.align_weight),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} must be a finite value >= 0, got {v}"));
            }
        }
        if !(self.probe_lr > 0.0) || self.probe_epochs == 0 {
            return fail("probe_lr must be positive and probe_epochs at least 1".into());
        }
        if self.jobs == 0 {
            return fail("jobs must be at least 1".into());
        }
        Ok(())
    }

    /// Structural positions the readout produces.
    pub fn positions(&self) -> usize {
        match self.readout {
            ReadoutKind::Gread => 1,
            ReadoutKind::Ssread => self.k.unwrap_or(1),
        }
    }

    pub fn model_spec(&self, in_dim: usize, classes: usize) -> ModelSpec {
        ModelSpec {
            in_dim,
            hidden: self.hidden,
            layers: self.layers,
            readout: self.readout,
            k: self.positions(),
            aggregator: self.aggregator,
            classes,
            mlp_hidden: (self.head == HeadKind::Mlp).then_some(self.mlp_hidden),
            projection: self.mode == Mode::Contrastive,
        }
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            kind: self.optimizer,
            learning_rate: self.lr,
            ..OptimizerConfig::default()
        }
    }
}
