//! JSON form of a graph and its gating table. Gates are hex-encoded
//! bitmasks: byte `b` holds datapoints `8b..8b+8`, least significant bit first.

use std::fs;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use super::graph::{Binding, Edge, GatedGraph, GatingTable, Node};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Serialize, Deserialize)]
struct EdgeDoc {
    name: String,
    source: String,
    target: String,
    rows: usize,
    cols: usize,
    /// Row-major weights.
    weights: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BindingDoc {
    node: String,
    rows: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GateDoc {
    name: String,
    mask: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphDoc {
    nodes: Vec<Node>,
    edges: Vec<EdgeDoc>,
    inputs: Vec<BindingDoc>,
    outputs: Vec<BindingDoc>,
    n_datapoints: usize,
    node_gates: Vec<GateDoc>,
    edge_gates: Vec<GateDoc>,
}

pub fn encode_gates(gates: &[f64]) -> String {
    let mut bytes = vec![0u8; gates.len().div_ceil(8)];
    for (i, &g) in gates.iter().enumerate() {
        if g != 0.0 {
            bytes[i / 8] |= 1 << (i % 8);
        }
    }
    hex::encode(bytes)
}

pub fn decode_gates(mask: &str, n: usize) -> Result<Vec<f64>> {
    let bytes = hex::decode(mask).map_err(|e| Error::Parse(format!("gate mask `{mask}`: {e}")))?;
    if bytes.len() != n.div_ceil(8) {
        return Err(Error::Parse(format!("gate mask `{mask}` has {} bytes for {n} datapoints", bytes.len())));
    }
    Ok((0..n).map(|i| f64::from((bytes[i / 8] >> (i % 8)) & 1)).collect())
}

pub fn to_json(graph: &GatedGraph, gates: &GatingTable) -> Result<String> {
    let name = |v: usize| graph.nodes[v].name.clone();
    let binding = |b: &Binding| BindingDoc { node: name(b.node), rows: b.rows.clone() };
    let doc = GraphDoc {
        nodes: graph.nodes.clone(),
        edges: graph
            .edges
            .iter()
            .map(|e| EdgeDoc {
                name: e.name.clone(),
                source: name(e.source),
                target: name(e.target),
                rows: e.weight.nrows(),
                cols: e.weight.ncols(),
                weights: e.weight.transpose().iter().copied().collect(),
            })
            .collect(),
        inputs: graph.inputs.iter().map(binding).collect(),
        outputs: graph.outputs.iter().map(binding).collect(),
        n_datapoints: gates.n_datapoints,
        node_gates: graph
            .nodes
            .iter()
            .zip(&gates.node)
            .map(|(n, g)| GateDoc { name: n.name.clone(), mask: encode_gates(g) })
            .collect(),
        edge_gates: graph
            .edges
            .iter()
            .zip(&gates.edge)
            .map(|(e, g)| GateDoc { name: e.name.clone(), mask: encode_gates(g) })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn from_json(text: &str) -> Result<(GatedGraph, GatingTable)> {
    let doc: GraphDoc = serde_json::from_str(text)?;
    let index = |name: &str| {
        doc.nodes
            .iter()
            .position(|n| n.name == name)
            .ok_or_else(|| Error::InvalidGraph(format!("unknown node `{name}`")))
    };
    let mut edges = Vec::with_capacity(doc.edges.len());
    for e in &doc.edges {
        if e.weights.len() != e.rows * e.cols {
            return Err(Error::Shape(format!(
                "edge {} lists {} weights for {}x{}",
                e.name,
                e.weights.len(),
                e.rows,
                e.cols
            )));
        }
        edges.push(Edge {
            name: e.name.clone(),
            source: index(&e.source)?,
            target: index(&e.target)?,
            weight: Matrix::from_row_slice(e.rows, e.cols, &e.weights),
        });
    }
    let bindings = |list: &[BindingDoc]| -> Result<Vec<Binding>> {
        list.iter().map(|b| Ok(Binding { node: index(&b.node)?, rows: b.rows.clone() })).collect()
    };
    let inputs = bindings(&doc.inputs)?;
    let outputs = bindings(&doc.outputs)?;
    let graph = GatedGraph::new(doc.nodes.clone(), edges, inputs, outputs)?;

    let n = doc.n_datapoints;
    let mut gates = GatingTable::all_on(&graph, n);
    for g in &doc.node_gates {
        let v = graph
            .node_index(&g.name)
            .ok_or_else(|| Error::InvalidGraph(format!("gate for unknown node `{}`", g.name)))?;
        gates.node[v] = decode_gates(&g.mask, n)?;
    }
    for g in &doc.edge_gates {
        let e = graph
            .edge_index(&g.name)
            .ok_or_else(|| Error::InvalidGraph(format!("gate for unknown edge `{}`", g.name)))?;
        gates.edge[e] = decode_gates(&g.mask, n)?;
    }
    Ok((graph, gates))
}

pub fn write_json(path: &FsPath, graph: &GatedGraph, gates: &GatingTable) -> Result<()> {
    fs::write(path, to_json(graph, gates)?)?;
    Ok(())
}

pub fn read_json(path: &FsPath) -> Result<(GatedGraph, GatingTable)> {
    from_json(&fs::read_to_string(path)?)
}
