use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Dataset, FeaturePolicy, Graph, TuError};
use crate::numkit::Matrix;

fn read_required(dir: &Path, file: &str) -> Result<String, TuError> {
    let path = dir.join(file);
    if !path.is_file() {
        return Err(TuError::MissingFile(path));
    }
    Ok(fs::read_to_string(path)?)
}

/// Non-blank lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn int_token(file: &str, line: usize, tok: &str) -> Result<i64, TuError> {
    tok.trim().parse::<i64>().map_err(|_| TuError::Parse {
        file: file.to_string(),
        line,
        msg: format!("expected an integer, found {:?}", tok.trim()),
    })
}

fn one_based(file: &str, line: usize, tok: &str) -> Result<usize, TuError> {
    let v = int_token(file, line, tok)?;
    if v < 1 {
        return Err(TuError::Parse {
            file: file.to_string(),
            line,
            msg: format!("1-based index expected, found {v}"),
        });
    }
    Ok(v as usize - 1)
}

/// Parses `{dir}/{name}_*.txt` using the default feature policy (one-hot
/// node labels when the labels file exists, constant otherwise).
pub fn parse_tu(dir: impl AsRef<Path>, name: &str) -> Result<Dataset, TuError> {
    parse_tu_with(dir, name, None)
}

pub fn parse_tu_with(dir: impl AsRef<Path>, name: &str, policy: Option<FeaturePolicy>) -> Result<Dataset, TuError> {
    let dir = dir.as_ref();
    let f_ind = format!("{name}_graph_indicator.txt");
    let f_lab = format!("{name}_graph_labels.txt");
    let f_adj = format!("{name}_A.txt");
    let f_nl = format!("{name}_node_labels.txt");

    let indicator_text = read_required(dir, &f_ind)?;
    let labels_text = read_required(dir, &f_lab)?;
    let adj_text = read_required(dir, &f_adj)?;

    let raw_labels = lines(&labels_text)
        .map(|(ln, l)| int_token(&f_lab, ln, l))
        .collect::<Result<Vec<_>, _>>()?;
    let num_graphs = raw_labels.len();

    // node_graph[i] = (graph, local index)
    let mut node_graph = Vec::new();
    let mut counts = vec![0usize; num_graphs];
    for (ln, l) in lines(&indicator_text) {
        let g = one_based(&f_ind, ln, l)?;
        if g >= num_graphs {
            return Err(TuError::Parse {
                file: f_ind.clone(),
                line: ln,
                msg: format!("graph id {} exceeds the {num_graphs} graph labels", g + 1),
            });
        }
        node_graph.push((g, counts[g]));
        counts[g] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(TuError::EmptyGraph(empty));
    }

    let node_labels = if dir.join(&f_nl).is_file() {
        let text = fs::read_to_string(dir.join(&f_nl))?;
        let v = lines(&text)
            .map(|(ln, l)| int_token(&f_nl, ln, l))
            .collect::<Result<Vec<_>, _>>()?;
        if v.len() != node_graph.len() {
            return Err(TuError::Parse {
                file: f_nl,
                line: v.len(),
                msg: format!("{} node labels for {} nodes", v.len(), node_graph.len()),
            });
        }
        Some(v)
    } else {
        None
    };

    let mut edges: Vec<BTreeSet<(usize, usize)>> = vec![BTreeSet::new(); num_graphs];
    for (ln, l) in lines(&adj_text) {
        let mut parts = l.split(',');
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(TuError::Parse {
                file: f_adj.clone(),
                line: ln,
                msg: format!("expected \"row, col\", found {l:?}"),
            });
        };
        let u = one_based(&f_adj, ln, a)?;
        let v = one_based(&f_adj, ln, b)?;
        let total = node_graph.len();
        if u >= total || v >= total {
            return Err(TuError::Parse {
                file: f_adj.clone(),
                line: ln,
                msg: format!("node id {} exceeds the {total} indicated nodes", u.max(v) + 1),
            });
        }
        let (gu, lu) = node_graph[u];
        let (gv, lv) = node_graph[v];
        if gu != gv {
            let first = node_graph.iter().position(|&(g, _)| g == gu).unwrap_or(0);
            return Err(TuError::EdgeOutOfRange {
                file: f_adj.clone(),
                line: ln,
                u: u + 1,
                v: v + 1,
                graph: gu + 1,
                first: first + 1,
                last: first + counts[gu],
            });
        }
        if lu != lv {
            edges[gu].insert((lu.min(lv), lu.max(lv)));
        }
    }

    let label_values: Vec<i64> = raw_labels
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let label_index: BTreeMap<i64, usize> = label_values.iter().enumerate().map(|(i, &v)| (v, i)).collect();

    let mut per_graph_labels: Vec<Vec<i64>> = vec![Vec::new(); num_graphs];
    if let Some(nl) = &node_labels {
        for (&(g, _), &lab) in node_graph.iter().zip(nl) {
            per_graph_labels[g].push(lab);
        }
    }

    let graphs: Vec<Graph> = (0..num_graphs)
        .map(|g| Graph {
            num_nodes: counts[g],
            edges: edges[g].iter().copied().collect(),
            features: Matrix::zeros(counts[g], 0),
            label: label_index[&raw_labels[g]],
            node_labels: node_labels.as_ref().map(|_| std::mem::take(&mut per_graph_labels[g])),
        })
        .collect();

    let policy = policy.unwrap_or(if node_labels.is_some() {
        FeaturePolicy::OneHotNodeLabel
    } else {
        FeaturePolicy::Constant
    });
    Dataset {
        name: name.to_string(),
        graphs,
        num_classes: label_values.len(),
        feature_dim: 0,
        label_values,
    }
    .with_features(policy)
}

/// Writes `ds` in TU format. Each undirected edge is written in both
/// directions, ordered by source then target.
pub fn write_tu(ds: &Dataset, dir: impl AsRef<Path>) -> Result<(), TuError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let name = &ds.name;
    let mut adj = String::new();
    let mut ind = String::new();
    let mut lab = String::new();
    let mut nl = String::new();
    let has_node_labels = ds.graphs.iter().all(|g| g.node_labels.is_some());
    let mut offset = 0;
    for (gi, g) in ds.graphs.iter().enumerate() {
        let mut directed: Vec<(usize, usize)> = g.edges.iter().flat_map(|&(u, v)| [(u, v), (v, u)]).collect();
        directed.sort_unstable();
        for (u, v) in directed {
            writeln!(adj, "{}, {}", offset + u + 1, offset + v + 1).expect("string write");
        }
        for n in 0..g.num_nodes {
            writeln!(ind, "{}", gi + 1).expect("string write");
            if has_node_labels {
                writeln!(nl, "{}", g.node_labels.as_ref().expect("checked")[n]).expect("string write");
            }
        }
        writeln!(lab, "{}", ds.label_values[g.label]).expect("string write");
        offset += g.num_nodes;
    }
    fs::write(dir.join(format!("{name}_A.txt")), adj)?;
    fs::write(dir.join(format!("{name}_graph_indicator.txt")), ind)?;
    fs::write(dir.join(format!("{name}_graph_labels.txt")), lab)?;
    if has_node_labels {
        fs::write(dir.join(format!("{name}_node_labels.txt")), nl)?;
    }
    Ok(())
}
