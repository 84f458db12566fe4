use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub width: usize,
}

/// A weight matrix mapping `source` activations (`width(source)`) to
/// `target` activations (`width(target)`).
#[derive(Debug, Clone)]
pub struct Edge {
    pub name: String,
    pub source: usize,
    pub target: usize,
    pub weight: Matrix,
}

/// Ties a graph boundary node to rows of the dataset's inputs or targets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binding {
    pub node: usize,
    pub rows: Vec<usize>,
}

/// An input-to-output walk, stored as its edge indices in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub edges: Vec<usize>,
    pub source: usize,
    pub target: usize,
}

#[derive(Debug, Clone)]
pub struct GatedGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub inputs: Vec<Binding>,
    pub outputs: Vec<Binding>,
    paths: Vec<Path>,
    topo: Vec<usize>,
}

/// Incremental construction; `build` validates and enumerates paths.
#[derive(Debug, Default, Clone)]
pub struct GraphBuilder {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    inputs: Vec<Binding>,
    outputs: Vec<Binding>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Input node fed by the given dataset input rows.
    pub fn input(&mut self, name: &str, rows: Vec<usize>) -> usize {
        let id = self.node(name, rows.len());
        self.inputs.push(Binding { node: id, rows });
        id
    }

    /// Output node compared against the given target rows.
    pub fn output(&mut self, name: &str, rows: Vec<usize>) -> usize {
        let id = self.node(name, rows.len());
        self.outputs.push(Binding { node: id, rows });
        id
    }

    pub fn node(&mut self, name: &str, width: usize) -> usize {
        self.nodes.push(Node { name: name.to_string(), width });
        self.nodes.len() - 1
    }

    /// Adds a zero-initialized edge.
    pub fn edge(&mut self, name: &str, source: usize, target: usize) -> usize {
        let rows = self.nodes.get(target).map_or(0, |n| n.width);
        let cols = self.nodes.get(source).map_or(0, |n| n.width);
        self.edges.push(Edge { name: name.to_string(), source, target, weight: Matrix::zeros(rows, cols) });
        self.edges.len() - 1
    }

    pub fn build(self) -> Result<GatedGraph> {
        GatedGraph::new(self.nodes, self.edges, self.inputs, self.outputs)
    }
}

impl GatedGraph {
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>, inputs: Vec<Binding>, outputs: Vec<Binding>) -> Result<GatedGraph> {
        let n = nodes.len();
        for (i, e) in edges.iter().enumerate() {
            if e.source >= n || e.target >= n {
                return Err(Error::InvalidGraph(format!("edge {} ({}) references a missing node", i, e.name)));
            }
            let want = (nodes[e.target].width, nodes[e.source].width);
            if e.weight.shape() != want {
                return Err(Error::Shape(format!(
                    "edge {} is {:?}, endpoints need {:?}",
                    e.name,
                    e.weight.shape(),
                    want
                )));
            }
        }
        let is_input: Vec<bool> = (0..n).map(|v| inputs.iter().any(|b| b.node == v)).collect();
        let is_output: Vec<bool> = (0..n).map(|v| outputs.iter().any(|b| b.node == v)).collect();
        for b in inputs.iter().chain(outputs.iter()) {
            if b.node >= n || b.rows.len() != nodes[b.node].width {
                return Err(Error::InvalidGraph(format!("binding for node {} has wrong width", b.node)));
            }
        }
        for e in &edges {
            if is_input[e.target] {
                return Err(Error::InvalidGraph(format!("input node {} has an incoming edge", nodes[e.target].name)));
            }
            if is_output[e.source] {
                return Err(Error::InvalidGraph(format!("output node {} has an outgoing edge", nodes[e.source].name)));
            }
        }
        if let Some(v) = (0..n).find(|&v| is_input[v] && is_output[v]) {
            return Err(Error::InvalidGraph(format!("node {} is both input and output", nodes[v].name)));
        }

        // Kahn's algorithm, lowest index first so the order is reproducible
        let mut indeg = vec![0usize; n];
        for e in &edges {
            indeg[e.target] += 1;
        }
        let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut topo = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            topo.push(v);
            for e in edges.iter().filter(|e| e.source == v) {
                indeg[e.target] -= 1;
                if indeg[e.target] == 0 {
                    ready.insert(e.target);
                }
            }
        }
        if topo.len() != n {
            return Err(Error::InvalidGraph("graph has a cycle".into()));
        }

        let mut graph = GatedGraph { nodes, edges, inputs, outputs, paths: Vec::new(), topo };
        graph.paths = graph.enumerate_paths();
        Ok(graph)
    }

    fn enumerate_paths(&self) -> Vec<Path> {
        let mut out = Vec::new();
        let is_output = |v: usize| self.outputs.iter().any(|b| b.node == v);
        for b in &self.inputs {
            let mut stack: Vec<usize> = Vec::new();
            self.walk(b.node, b.node, &mut stack, &mut out, &is_output);
        }
        out
    }

    fn walk(
        &self,
        start: usize,
        v: usize,
        stack: &mut Vec<usize>,
        out: &mut Vec<Path>,
        is_output: &dyn Fn(usize) -> bool,
    ) {
        if is_output(v) {
            out.push(Path { edges: stack.clone(), source: start, target: v });
            return;
        }
        for (i, e) in self.edges.iter().enumerate() {
            if e.source == v {
                stack.push(i);
                self.walk(start, e.target, stack, out, is_output);
                stack.pop();
            }
        }
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn topo_order(&self) -> &[usize] {
        &self.topo
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn edge_index(&self, name: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.name == name)
    }

    pub fn input_binding(&self, node: usize) -> Option<&Binding> {
        self.inputs.iter().find(|b| b.node == node)
    }

    pub fn output_binding(&self, node: usize) -> Option<&Binding> {
        self.outputs.iter().find(|b| b.node == node)
    }

    /// Product of the weights along `path`, mapping source to target activations.
    pub fn path_weight(&self, path: &Path) -> Matrix {
        self.edge_product(&path.edges)
    }

    /// Product of the listed edge weights; an empty list yields the identity
    /// of the appropriate node (callers handle that case themselves).
    pub(crate) fn edge_product(&self, edges: &[usize]) -> Matrix {
        let mut it = edges.iter();
        let first = it.next().expect("edge_product needs at least one edge");
        let mut m = self.edges[*first].weight.clone();
        for &e in it {
            m = &self.edges[e].weight * m;
        }
        m
    }

    pub fn num_parameters(&self) -> usize {
        self.edges.iter().map(|e| e.weight.len()).sum()
    }

    pub fn weights(&self) -> Vec<Matrix> {
        self.edges.iter().map(|e| e.weight.clone()).collect()
    }

    pub fn set_weights(&mut self, weights: &[Matrix]) -> Result<()> {
        if weights.len() != self.edges.len() {
            return Err(Error::Shape(format!("{} weights for {} edges", weights.len(), self.edges.len())));
        }
        for (e, w) in self.edges.iter().zip(weights) {
            if e.weight.shape() != w.shape() {
                return Err(Error::Shape(format!(
                    "edge {} expects {:?}, got {:?}",
                    e.name,
                    e.weight.shape(),
                    w.shape()
                )));
            }
        }
        for (e, w) in self.edges.iter_mut().zip(weights) {
            e.weight.copy_from(w);
        }
        Ok(())
    }
}

/// Binary per-datapoint gates on every node and edge.
#[derive(Debug, Clone, PartialEq)]
pub struct GatingTable {
    pub n_datapoints: usize,
    /// `node[v][i]` is the gate of node `v` on datapoint `i`.
    pub node: Vec<Vec<f64>>,
    pub edge: Vec<Vec<f64>>,
}

impl GatingTable {
    pub fn all_on(graph: &GatedGraph, n_datapoints: usize) -> GatingTable {
        GatingTable {
            n_datapoints,
            node: vec![vec![1.0; n_datapoints]; graph.nodes.len()],
            edge: vec![vec![1.0; n_datapoints]; graph.edges.len()],
        }
    }

    pub fn validate(&self, graph: &GatedGraph) -> Result<()> {
        if self.node.len() != graph.nodes.len() || self.edge.len() != graph.edges.len() {
            return Err(Error::Shape("gating table does not match graph".into()));
        }
        for g in self.node.iter().chain(self.edge.iter()) {
            if g.len() != self.n_datapoints {
                return Err(Error::Shape(format!("gate row has {} entries, expected {}", g.len(), self.n_datapoints)));
            }
            if g.iter().any(|&x| x != 0.0 && x != 1.0) {
                return Err(Error::InvalidParameter("gates must be 0 or 1".into()));
            }
        }
        Ok(())
    }

    pub fn set_node(&mut self, node: usize, gates: Vec<f64>) {
        self.node[node] = gates;
    }

    /// Path gate per datapoint: the product of every node and edge gate on the path.
    pub fn path_gate(&self, path: &Path, graph: &GatedGraph) -> Vec<f64> {
        let mut g = self.node[path.source].clone();
        for &e in &path.edges {
            let t = graph.edges[e].target;
            for i in 0..self.n_datapoints {
                g[i] *= self.edge[e][i] * self.node[t][i];
            }
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diamond() -> GatedGraph {
        let mut b = GraphBuilder::new();
        let x = b.input("x", vec![0, 1]);
        let a = b.node("a", 3);
        let c = b.node("c", 2);
        let y = b.output("y", vec![0]);
        b.edge("xa", x, a);
        b.edge("xc", x, c);
        b.edge("ac", a, c);
        b.edge("ay", a, y);
        b.edge("cy", c, y);
        b.build().unwrap()
    }

    #[test]
    fn enumerates_every_walk_once() {
        let g = diamond();
        // x->a->c->y, x->a->y, x->c->y
        let mut expected = vec![vec![0, 2, 4], vec![0, 3], vec![1, 4]];
        expected.sort();
        let mut got = g.paths().iter().map(|p| p.edges.clone()).collect::<Vec<_>>();
        got.sort();
        assert_eq!(got, expected);
    }

    #[test]
    fn rejects_cycles_and_bad_shapes() {
        let mut b = GraphBuilder::new();
        let x = b.input("x", vec![0]);
        let a = b.node("a", 2);
        let c = b.node("c", 2);
        let y = b.output("y", vec![0]);
        b.edge("xa", x, a);
        b.edge("ac", a, c);
        b.edge("ca", c, a);
        b.edge("cy", c, y);
        assert!(matches!(b.build(), Err(Error::InvalidGraph(_))));

        let mut b = GraphBuilder::new();
        let x = b.input("x", vec![0]);
        let y = b.output("y", vec![0]);
        b.edge("xy", x, y);
        let mut g = b.build().unwrap();
        assert!(g.set_weights(&[Matrix::zeros(2, 2)]).is_err());
    }

    #[test]
    fn input_cannot_receive_edges() {
        let mut b = GraphBuilder::new();
        let x = b.input("x", vec![0]);
        let h = b.node("h", 1);
        let y = b.output("y", vec![0]);
        b.edge("xh", x, h);
        b.edge("hx", h, x);
        b.edge("hy", h, y);
        assert!(matches!(b.build(), Err(Error::InvalidGraph(_))));
    }

    #[test]
    fn path_gate_is_product() {
        let g = diamond();
        let mut t = GatingTable::all_on(&g, 3);
        t.node[1] = vec![1.0, 0.0, 1.0];
        t.edge[4] = vec![1.0, 1.0, 0.0];
        for p in g.paths() {
            let got = t.path_gate(p, &g);
            for i in 0..3 {
                let mut want = t.node[p.source][i];
                for &e in &p.edges {
                    want *= t.edge[e][i] * t.node[g.edges[e].target][i];
                }
                assert_eq!(got[i], want);
            }
        }
    }
}
