use std::fmt;
use std::str::FromStr;

use super::graph::{GatedGraph, GatingTable, GraphBuilder};
use super::ops::pathway_stats;
use crate::datasets::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelnPreset {
    /// A single always-on pathway: a plain two-layer linear network.
    Linear,
    /// One pathway per output sign.
    XorLinear,
    /// One pathway per datapoint.
    XorPointwise,
    /// An always-on pathway over all features plus one item-only pathway per
    /// `arity`-subset of contexts, active in exactly those contexts.
    Contextual { contexts: usize, arity: usize },
    /// A shared ungated first layer feeding the pathways of `Contextual { contexts, contexts - 1 }`.
    Depth2Contextual { contexts: usize },
}

impl fmt::Display for RelnPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelnPreset::Linear => write!(f, "linear"),
            RelnPreset::XorLinear => write!(f, "xor_linear"),
            RelnPreset::XorPointwise => write!(f, "xor_pointwise"),
            RelnPreset::Contextual { contexts, arity } => write!(f, "contextual({contexts},{arity})"),
            RelnPreset::Depth2Contextual { contexts } => write!(f, "depth2_contextual({contexts})"),
        }
    }
}

impl FromStr for RelnPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let args = |prefix: &str| -> Option<Vec<usize>> {
            let inner = s.strip_prefix(prefix)?.strip_prefix('(')?.strip_suffix(')')?;
            inner.split(',').map(|t| t.trim().parse().ok()).collect()
        };
        match s {
            "linear" => return Ok(RelnPreset::Linear),
            "xor_linear" => return Ok(RelnPreset::XorLinear),
            "xor_pointwise" => return Ok(RelnPreset::XorPointwise),
            "depth2_contextual" => return Ok(RelnPreset::Depth2Contextual { contexts: 3 }),
            _ => {}
        }
        if let Some(a) = args("contextual") {
            if let [contexts, arity] = a[..] {
                return Ok(RelnPreset::Contextual { contexts, arity });
            }
        }
        if let Some(a) = args("depth2_contextual") {
            if let [contexts] = a[..] {
                return Ok(RelnPreset::Depth2Contextual { contexts });
            }
        }
        Err(Error::UnknownPreset(s.to_string()))
    }
}

/// Subsets of `0..n` of size `k` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Per-datapoint activity of each gated pathway, in pathway order, the
/// always-on pathway (if any) first.
pub fn pathway_patterns(preset: RelnPreset, dataset: &Dataset) -> Result<Vec<Vec<f64>>> {
    let n = dataset.n_datapoints();
    match preset {
        RelnPreset::Linear => Ok(vec![vec![1.0; n]]),
        RelnPreset::XorLinear => {
            if dataset.n_targets() != 1 {
                return Err(Error::Shape("xor presets need a single target row".into()));
            }
            let y = dataset.targets.row(0);
            Ok(vec![
                y.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect(),
                y.iter().map(|&v| if v < 0.0 { 1.0 } else { 0.0 }).collect(),
            ])
        }
        RelnPreset::XorPointwise => {
            Ok((0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect())
        }
        RelnPreset::Contextual { contexts, arity } => contextual_patterns(dataset, contexts, arity),
        RelnPreset::Depth2Contextual { contexts } => contextual_patterns(dataset, contexts, contexts.saturating_sub(1)),
    }
}

fn contextual_patterns(dataset: &Dataset, contexts: usize, arity: usize) -> Result<Vec<Vec<f64>>> {
    let ctx = dataset
        .context_ids
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("contextual preset needs a contextual dataset".into()))?;
    if dataset.num_contexts() != contexts {
        return Err(Error::InvalidParameter(format!(
            "preset has {contexts} contexts, dataset has {}",
            dataset.num_contexts()
        )));
    }
    if arity == 0 || arity >= contexts {
        return Err(Error::InvalidParameter(format!("arity must be in 1..{contexts}, got {arity}")));
    }
    let mut out = vec![vec![1.0; ctx.len()]];
    for subset in combinations(contexts, arity) {
        out.push(ctx.iter().map(|c| if subset.contains(c) { 1.0 } else { 0.0 }).collect());
    }
    Ok(out)
}

/// Builds the gated network for a preset over `dataset`, with `hidden_width`
/// units in every hidden node.
pub fn build_reln_graph(
    preset: RelnPreset,
    dataset: &Dataset,
    hidden_width: usize,
) -> Result<(GatedGraph, GatingTable)> {
    if hidden_width == 0 {
        return Err(Error::InvalidParameter("hidden width must be positive".into()));
    }
    let d = dataset.n_inputs();
    let p = dataset.n_targets();
    let all_in: Vec<usize> = (0..d).collect();
    let all_out: Vec<usize> = (0..p).collect();
    let patterns = pathway_patterns(preset, dataset)?;

    let mut b = GraphBuilder::new();
    let mut hidden_gates: Vec<(usize, Vec<f64>)> = Vec::new();
    match preset {
        RelnPreset::Linear | RelnPreset::XorLinear | RelnPreset::XorPointwise => {
            let x = b.input("x", all_in);
            let y = b.output("y", all_out);
            for (k, pattern) in patterns.into_iter().enumerate() {
                let h = b.node(&format!("h{k}"), hidden_width);
                b.edge(&format!("in{k}"), x, h);
                b.edge(&format!("out{k}"), h, y);
                hidden_gates.push((h, pattern));
            }
        }
        RelnPreset::Contextual { .. } => {
            let x = b.input("x", all_in);
            let x_item = b.input("x_item", dataset.item_row_indices());
            let y = b.output("y", all_out);
            for (k, pattern) in patterns.into_iter().enumerate() {
                let h = b.node(&format!("h{k}"), hidden_width);
                b.edge(&format!("in{k}"), if k == 0 { x } else { x_item }, h);
                b.edge(&format!("out{k}"), h, y);
                hidden_gates.push((h, pattern));
            }
        }
        RelnPreset::Depth2Contextual { .. } => {
            let x = b.input("x", all_in);
            let y = b.output("y", all_out);
            let shared = b.node("shared", hidden_width);
            b.edge("in", x, shared);
            for (k, pattern) in patterns.into_iter().enumerate() {
                let h = b.node(&format!("h{k}"), hidden_width);
                b.edge(&format!("mid{k}"), shared, h);
                b.edge(&format!("out{k}"), h, y);
                hidden_gates.push((h, pattern));
            }
        }
    }
    let (graph, gates) = finish(b, hidden_gates, dataset.n_datapoints())?;
    check_capacity(&graph, &gates, dataset)?;
    Ok((graph, gates))
}

fn finish(b: GraphBuilder, hidden_gates: Vec<(usize, Vec<f64>)>, n: usize) -> Result<(GatedGraph, GatingTable)> {
    let graph = b.build()?;
    let mut gates = GatingTable::all_on(&graph, n);
    for (node, g) in hidden_gates {
        gates.set_node(node, g);
    }
    gates.validate(&graph)?;
    Ok((graph, gates))
}

/// Fails when a path's bottleneck width is below the rank of its effective statistics.
pub fn check_capacity(graph: &GatedGraph, gates: &GatingTable, dataset: &Dataset) -> Result<()> {
    let stats = pathway_stats(graph, gates, dataset)?;
    for (k, path) in graph.paths().iter().enumerate() {
        let width = path.edges[..path.edges.len() - 1].iter().map(|&e| graph.nodes[graph.edges[e].target].width).min();
        let Some(width) = width else { continue };
        let rank = stats.pairs[k].rank();
        if width < rank {
            let names: Vec<&str> = path.edges.iter().map(|&e| graph.edges[e].name.as_str()).collect();
            return Err(Error::UnderParameterized { pathway: names.join(">"), width, rank });
        }
    }
    Ok(())
}
