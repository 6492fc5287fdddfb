use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Graph, TuError};
use crate::numkit::Matrix;

/// How node feature matrices are synthesized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeaturePolicy {
    /// One column per distinct node label in the dataset.
    OneHotNodeLabel,
    /// A single all-ones column.
    Constant,
    /// One-hot node degree, with degrees above `max_degree` clamped into the
    /// last bucket. `F = max_degree + 1`.
    DegreeOneHot { max_degree: usize },
}

impl FeaturePolicy {
    pub fn name(&self) -> &'static str {
        match self {
            Self::OneHotNodeLabel => "onehot",
            Self::Constant => "constant",
            Self::DegreeOneHot { .. } => "degree",
        }
    }
}

impl fmt::Display for FeaturePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DegreeOneHot { max_degree } => write!(f, "degree:{max_degree}"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for FeaturePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "onehot" => Ok(Self::OneHotNodeLabel),
            "constant" => Ok(Self::Constant),
            "degree" => Ok(Self::DegreeOneHot { max_degree: 10 }),
            other => match other.strip_prefix("degree:") {
                Some(cap) => cap
                    .parse()
                    .map(|max_degree| Self::DegreeOneHot { max_degree })
                    .map_err(|_| format!("bad degree cap in {other:?}")),
                None => Err(format!(
                    "unknown feature policy {other:?} (onehot, constant, degree[:cap])"
                )),
            },
        }
    }
}

/// Feature matrices for every graph under `policy`.
pub fn build_features(graphs: &[Graph], policy: FeaturePolicy) -> Result<Vec<Matrix>, TuError> {
    match policy {
        FeaturePolicy::OneHotNodeLabel => {
            let mut vocab = BTreeSet::new();
            for g in graphs {
                let labels = g
                    .node_labels
                    .as_ref()
                    .ok_or(TuError::MissingNodeLabels { policy: policy.name() })?;
                vocab.extend(labels.iter().copied());
            }
            let vocab: Vec<i64> = vocab.into_iter().collect();
            Ok(graphs
                .iter()
                .map(|g| {
                    let labels = g.node_labels.as_ref().expect("checked above");
                    let mut m = Matrix::zeros(g.num_nodes, vocab.len());
                    for (n, lab) in labels.iter().enumerate() {
                        let col = vocab.binary_search(lab).expect("label in vocabulary");
                        m.set(n, col, 1.0);
                    }
                    m
                })
                .collect())
        }
        FeaturePolicy::Constant => Ok(graphs.iter().map(|g| Matrix::filled(g.num_nodes, 1, 1.0)).collect()),
        FeaturePolicy::DegreeOneHot { max_degree } => Ok(graphs
            .iter()
            .map(|g| {
                let mut m = Matrix::zeros(g.num_nodes, max_degree + 1);
                for (n, d) in g.degrees().into_iter().enumerate() {
                    m.set(n, d.min(max_degree), 1.0);
                }
                m
            })
            .collect()),
    }
}
