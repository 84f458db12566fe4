use std::borrow::Cow;
use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::graph::{GatedGraph, GatingTable, Path};
use crate::datasets::{CorrelationPair, Dataset};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::trajectory::{mode_name, Trajectory};

/// Loss above which training is declared divergent.
pub const DIVERGENCE_LOSS: f64 = 1e6;

fn all_ones(g: &[f64]) -> bool {
    g.iter().all(|&x| x == 1.0)
}

fn gated<'a>(m: &'a Matrix, g: &[f64]) -> Cow<'a, Matrix> {
    if all_ones(g) {
        Cow::Borrowed(m)
    } else {
        let mut out = m.clone();
        linalg::scale_columns(&mut out, g);
        Cow::Owned(out)
    }
}

fn check_shapes(graph: &GatedGraph, gates: &GatingTable, x: &Matrix) -> Result<()> {
    gates.validate(graph)?;
    if x.ncols() != gates.n_datapoints {
        return Err(Error::Shape(format!("{} datapoints but gates for {}", x.ncols(), gates.n_datapoints)));
    }
    for b in &graph.inputs {
        if let Some(&r) = b.rows.iter().find(|&&r| r >= x.nrows()) {
            return Err(Error::OutOfRange { index: r, len: x.nrows() });
        }
    }
    Ok(())
}

fn check_targets(graph: &GatedGraph, y: &Matrix) -> Result<()> {
    for b in &graph.outputs {
        if let Some(&r) = b.rows.iter().find(|&&r| r >= y.nrows()) {
            return Err(Error::Shape(format!(
                "output node {} reads target row {r}, dataset has {}",
                graph.nodes[b.node].name,
                y.nrows()
            )));
        }
    }
    Ok(())
}

/// Activations of every node over the whole batch (`width x N` each).
pub fn forward_batch(graph: &GatedGraph, gates: &GatingTable, x: &Matrix) -> Result<Vec<Matrix>> {
    check_shapes(graph, gates, x)?;
    Ok(forward_unchecked(graph, gates, x))
}

fn forward_unchecked(graph: &GatedGraph, gates: &GatingTable, x: &Matrix) -> Vec<Matrix> {
    let n = x.ncols();
    let mut h: Vec<Matrix> = graph.nodes.iter().map(|node| Matrix::zeros(node.width, n)).collect();
    for &v in graph.topo_order() {
        if let Some(b) = graph.input_binding(v) {
            h[v] = linalg::select_rows(x, &b.rows);
        } else {
            let mut acc = Matrix::zeros(graph.nodes[v].width, n);
            for (q, e) in graph.edges.iter().enumerate().filter(|(_, e)| e.target == v) {
                let src = gated(&h[e.source], &gates.edge[q]);
                acc.gemm(1.0, &e.weight, &src, 1.0);
            }
            h[v] = acc;
        }
        linalg::scale_columns(&mut h[v], &gates.node[v]);
    }
    h
}

/// Activations of every node for a single datapoint.
pub fn forward(graph: &GatedGraph, gates: &GatingTable, dataset: &Dataset, index: usize) -> Result<Vec<Vector>> {
    let n = dataset.n_datapoints();
    if index >= n {
        return Err(Error::OutOfRange { index, len: n });
    }
    let x = dataset.inputs.columns(index, 1).into_owned();
    let single = GatingTable {
        n_datapoints: 1,
        node: gates.node.iter().map(|g| vec![g[index]]).collect(),
        edge: gates.edge.iter().map(|g| vec![g[index]]).collect(),
    };
    let h = forward_batch(graph, &single, &x)?;
    Ok(h.into_iter().map(|m| m.column(0).into_owned()).collect())
}

/// Network prediction in target-row space: each output node writes its
/// activations into the target rows it is bound to (overlaps add).
pub fn predict(graph: &GatedGraph, gates: &GatingTable, dataset: &Dataset) -> Result<Matrix> {
    check_targets(graph, &dataset.targets)?;
    let h = forward_batch(graph, gates, &dataset.inputs)?;
    Ok(assemble_prediction(graph, &h, dataset.n_targets()))
}

fn assemble_prediction(graph: &GatedGraph, h: &[Matrix], p: usize) -> Matrix {
    let n = h.first().map_or(0, |m| m.ncols());
    let mut out = Matrix::zeros(p, n);
    for b in &graph.outputs {
        for (k, &r) in b.rows.iter().enumerate() {
            let mut row = out.row_mut(r);
            row += h[b.node].row(k);
        }
    }
    out
}

fn loss_from(graph: &GatedGraph, h: &[Matrix], y: &Matrix) -> f64 {
    let n = y.ncols() as f64;
    let mut acc = 0.0;
    for b in &graph.outputs {
        let target = linalg::select_rows(y, &b.rows);
        acc += (target - &h[b.node]).norm_squared();
    }
    acc / (2.0 * n)
}

/// Mean squared-error loss `(1/2N) sum_i sum_out |y - h|^2`.
pub fn loss(graph: &GatedGraph, gates: &GatingTable, dataset: &Dataset) -> Result<f64> {
    check_targets(graph, &dataset.targets)?;
    let h = forward_batch(graph, gates, &dataset.inputs)?;
    Ok(loss_from(graph, &h, &dataset.targets))
}

/// Negative loss gradient per edge, by reverse-mode accumulation.
/// A descent step is `W += N * lr * G`.
pub fn gradient(graph: &GatedGraph, gates: &GatingTable, dataset: &Dataset) -> Result<Vec<Matrix>> {
    check_targets(graph, &dataset.targets)?;
    let h = forward_batch(graph, gates, &dataset.inputs)?;
    Ok(backward(graph, gates, &h, &dataset.targets).0)
}

/// Returns the negative gradients and the loss of the forward pass `h`.
fn backward(graph: &GatedGraph, gates: &GatingTable, h: &[Matrix], y: &Matrix) -> (Vec<Matrix>, f64) {
    let n = y.ncols();
    let inv_n = 1.0 / n as f64;
    // err[v] holds -dL/dh_v
    let mut err: Vec<Matrix> = graph.nodes.iter().map(|node| Matrix::zeros(node.width, n)).collect();
    let mut loss = 0.0;
    for b in &graph.outputs {
        let diff = linalg::select_rows(y, &b.rows) - &h[b.node];
        loss += diff.norm_squared();
        err[b.node] += diff * inv_n;
    }
    let mut grads: Vec<Matrix> =
        graph.edges.iter().map(|e| Matrix::zeros(e.weight.nrows(), e.weight.ncols())).collect();
    for &v in graph.topo_order().iter().rev() {
        if graph.input_binding(v).is_some() {
            continue;
        }
        // -dL/dpre_v
        let mut delta = std::mem::replace(&mut err[v], Matrix::zeros(0, 0));
        linalg::scale_columns(&mut delta, &gates.node[v]);
        for (q, e) in graph.edges.iter().enumerate().filter(|(_, e)| e.target == v) {
            let dq = gated(&delta, &gates.edge[q]);
            grads[q].gemm(1.0, &dq, &h[e.source].transpose(), 0.0);
            if graph.input_binding(e.source).is_none() {
                err[e.source].gemm(1.0, &e.weight.transpose(), &dq, 1.0);
            }
        }
    }
    (grads, loss * 0.5 * inv_n)
}

/// Per-path effective statistics of a gated dataset.
#[derive(Debug, Clone)]
pub struct PathwayStats {
    /// Path gate per datapoint.
    pub gates: Vec<Vec<f64>>,
    /// Paths gated off on every datapoint; their statistics are zero.
    pub inert: Vec<bool>,
    /// `(sigma_yx(p), sigma_x(p,p))` with decompositions, per path.
    pub pairs: Vec<CorrelationPair>,
    /// `sigma_x(j,p)` for every ordered pair of paths sharing a terminal node.
    pub cross: BTreeMap<(usize, usize), Matrix>,
}

impl PathwayStats {
    pub fn sigma_yx(&self, p: usize) -> &Matrix {
        &self.pairs[p].sigma_yx
    }

    pub fn sigma_x(&self, j: usize, p: usize) -> Option<&Matrix> {
        self.cross.get(&(j, p))
    }
}

fn source_data(graph: &GatedGraph, path: &Path, x: &Matrix) -> Matrix {
    let b = graph.input_binding(path.source).expect("paths start at input nodes");
    linalg::select_rows(x, &b.rows)
}

fn target_data(graph: &GatedGraph, path: &Path, y: &Matrix) -> Matrix {
    let b = graph.output_binding(path.target).expect("paths end at output nodes");
    linalg::select_rows(y, &b.rows)
}

/// `sigma_yx(p) = (1/N) sum_i g_p y x^T` and `sigma_x(j,p) = (1/N) sum_i g_j g_p x_j x_p^T`.
pub fn pathway_stats(graph: &GatedGraph, gates: &GatingTable, dataset: &Dataset) -> Result<PathwayStats> {
    check_shapes(graph, gates, &dataset.inputs)?;
    check_targets(graph, &dataset.targets)?;
    let n = dataset.n_datapoints() as f64;
    let paths = graph.paths();
    let pg: Vec<Vec<f64>> = paths.iter().map(|p| gates.path_gate(p, graph)).collect();
    let xs: Vec<Matrix> = paths
        .iter()
        .zip(&pg)
        .map(|(p, g)| {
            let mut m = source_data(graph, p, &dataset.inputs);
            linalg::scale_columns(&mut m, g);
            m
        })
        .collect();
    let mut pairs = Vec::with_capacity(paths.len());
    for (k, p) in paths.iter().enumerate() {
        let mut y = target_data(graph, p, &dataset.targets);
        linalg::scale_columns(&mut y, &pg[k]);
        let syx = &y * xs[k].transpose() / n;
        let sx = &xs[k] * xs[k].transpose() / n;
        pairs.push(CorrelationPair::from_matrices(syx, sx));
    }
    let mut cross = BTreeMap::new();
    for (j, pj) in paths.iter().enumerate() {
        for (p, pp) in paths.iter().enumerate() {
            if pj.target == pp.target {
                cross.insert((j, p), &xs[j] * xs[p].transpose() / n);
            }
        }
    }
    let inert = pg.iter().map(|g| g.iter().all(|&x| x == 0.0)).collect();
    Ok(PathwayStats { gates: pg, inert, pairs, cross })
}

/// Negative gradient assembled path by path from the effective statistics:
/// for each edge, the sum over paths through it of
/// `W_after^T [sigma_yx(p) - sum_j W_j sigma_x(j,p)] W_before^T`.
pub fn gradient_by_paths(graph: &GatedGraph, gates: &GatingTable, dataset: &Dataset) -> Result<Vec<Matrix>> {
    let stats = pathway_stats(graph, gates, dataset)?;
    let paths = graph.paths();
    let path_w: Vec<Matrix> = paths.iter().map(|p| graph.path_weight(p)).collect();
    let mut grads: Vec<Matrix> =
        graph.edges.iter().map(|e| Matrix::zeros(e.weight.nrows(), e.weight.ncols())).collect();
    for (k, p) in paths.iter().enumerate() {
        let mut residual = stats.sigma_yx(k).clone();
        for (j, pj) in paths.iter().enumerate() {
            if pj.target == p.target {
                residual -= &path_w[j] * &stats.cross[&(j, k)];
            }
        }
        for (pos, &e) in p.edges.iter().enumerate() {
            let before = &p.edges[..pos];
            let after = &p.edges[pos + 1..];
            let mut g = residual.clone();
            if !after.is_empty() {
                g = graph.edge_product(after).transpose() * g;
            }
            if !before.is_empty() {
                g *= graph.edge_product(before).transpose();
            }
            grads[e] += g;
        }
    }
    Ok(grads)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Entries drawn with this standard deviation.
    Std(f64),
    /// Entries drawn with this variance.
    Variance(f64),
}

impl Init {
    pub fn std(self) -> f64 {
        match self {
            Init::Std(s) => s,
            Init::Variance(v) => v.sqrt(),
        }
    }
}

/// Draws every edge weight i.i.d. from `N(0, std^2)`, edge by edge in order.
pub fn init_weights(graph: &mut GatedGraph, init: Init, seed: u64) -> Result<()> {
    let std = init.std();
    if !(std >= 0.0) || !std.is_finite() {
        return Err(Error::InvalidParameter(format!("init scale must be >= 0, got {std}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    for e in graph.edges.iter_mut() {
        for w in e.weight.iter_mut() {
            *w = normal.sample(&mut rng);
        }
    }
    Ok(())
}

/// Tracks `diag(U^T W_p V)` for one path.
#[derive(Debug, Clone)]
pub struct ModeProbe {
    pub path: usize,
    pub u: Matrix,
    pub v: Matrix,
}

impl ModeProbe {
    /// Probe on the leading `modes` singular directions of the path's own statistics.
    pub fn from_stats(stats: &PathwayStats, path: usize, modes: usize) -> ModeProbe {
        let svd = stats.pairs[path].svd_yx.truncate(modes);
        ModeProbe { path, u: svd.u, v: svd.v }
    }

    pub fn measure(&self, path_weight: &Matrix) -> Vec<f64> {
        linalg::diagonal(&(self.u.transpose() * path_weight * &self.v))
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Reinitialize weights before training; `None` trains from the current weights.
    pub init: Option<Init>,
    pub seed: u64,
    pub record_every: usize,
    pub probes: Vec<ModeProbe>,
    pub snapshot_epochs: Vec<usize>,
    pub output_epochs: Vec<usize>,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, epochs: usize) -> TrainConfig {
        TrainConfig {
            learning_rate,
            epochs,
            init: None,
            seed: 0,
            record_every: 1,
            probes: Vec::new(),
            snapshot_epochs: Vec::new(),
            output_epochs: Vec::new(),
        }
    }
}

/// Full-batch gradient descent with step `W += N * lr * G`.
pub fn train(
    graph: &mut GatedGraph,
    gates: &GatingTable,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<Trajectory> {
    if !(config.learning_rate >= 0.0) || !config.learning_rate.is_finite() {
        return Err(Error::InvalidParameter(format!("learning rate must be >= 0, got {}", config.learning_rate)));
    }
    if config.record_every == 0 {
        return Err(Error::InvalidParameter("record_every must be positive".into()));
    }
    check_shapes(graph, gates, &dataset.inputs)?;
    check_targets(graph, &dataset.targets)?;
    for probe in &config.probes {
        if probe.path >= graph.paths().len() {
            return Err(Error::OutOfRange { index: probe.path, len: graph.paths().len() });
        }
    }
    if let Some(init) = config.init {
        init_weights(graph, init, config.seed)?;
    }

    let names: Vec<String> = config
        .probes
        .iter()
        .flat_map(|p| (0..p.u.ncols().min(p.v.ncols())).map(move |a| mode_name(p.path, a)))
        .collect();
    let mut traj = Trajectory::with_modes("gdln", &config.seed.to_string(), names);
    let step = dataset.n_datapoints() as f64 * config.learning_rate;

    for epoch in 0..=config.epochs {
        let h = forward_unchecked(graph, gates, &dataset.inputs);
        let record = epoch % config.record_every == 0 || epoch == config.epochs;
        let (grads, l) = if epoch < config.epochs {
            backward(graph, gates, &h, &dataset.targets)
        } else {
            (Vec::new(), loss_from(graph, &h, &dataset.targets))
        };
        if !l.is_finite() || l > DIVERGENCE_LOSS {
            return Err(Error::Diverged { epoch, loss: l });
        }
        if record {
            let modes =
                config.probes.iter().flat_map(|p| p.measure(&graph.path_weight(&graph.paths()[p.path]))).collect();
            traj.push(epoch as f64, l, modes);
        }
        if config.snapshot_epochs.contains(&epoch) {
            traj.snapshots.push((epoch, graph.weights()));
        }
        if config.output_epochs.contains(&epoch) {
            traj.outputs.push((epoch, assemble_prediction(graph, &h, dataset.n_targets())));
        }
        for (e, g) in graph.edges.iter_mut().zip(&grads) {
            e.weight += g * step;
        }
    }
    Ok(traj)
}
