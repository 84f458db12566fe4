//! Recovers a gated linear network from a ReLU network: stack binary hidden
//! activity sampled over training, cluster it, binarize the centroids and use
//! each as one pathway's gate.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::gdln::{check_capacity, train, GatedGraph, GatingTable, GraphBuilder, Init, TrainConfig};
use crate::linalg::Matrix;
use crate::relu::{train_relu, ReluConfig, ReluRun};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
/// Centroid entries within this distance of 0 or 1 count as consistent.
pub const CONSISTENCY_BAND: f64 = 0.05;
/// Below this consistency a cluster probably merges several neuron types.
pub const CONSISTENCY_WARNING: f64 = 0.8;

/// Binary activity rows stacked across runs, epochs and neurons.
#[derive(Debug, Clone, Default)]
pub struct SampleStack {
    /// One row per (run, epoch, neuron), one column per datapoint.
    pub rows: Vec<Vec<u8>>,
    /// `(run_id, epoch)` of each row.
    pub provenance: Vec<(u64, usize)>,
    pub n_datapoints: usize,
}

impl SampleStack {
    pub fn new(n_datapoints: usize) -> Self {
        SampleStack { rows: Vec::new(), provenance: Vec::new(), n_datapoints }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push_sample(&mut self, active: &Matrix, run_id: u64, epoch: usize) -> Result<()> {
        if active.ncols() != self.n_datapoints {
            return Err(Error::Shape(format!(
                "sample has {} datapoints, stack has {}",
                active.ncols(),
                self.n_datapoints
            )));
        }
        for r in 0..active.nrows() {
            self.rows.push(active.row(r).iter().map(|&v| u8::from(v > 0.5)).collect());
            self.provenance.push((run_id, epoch));
        }
        Ok(())
    }

    /// Distinct rows in lexicographic order (so clustering does not depend on
    /// row order), their multiplicities and the distinct-row index of each row.
    fn unique(&self) -> (Vec<Vec<u8>>, Vec<f64>, Vec<usize>) {
        let mut counts_by: BTreeMap<&[u8], f64> = BTreeMap::new();
        for row in &self.rows {
            *counts_by.entry(row.as_slice()).or_insert(0.0) += 1.0;
        }
        let patterns: Vec<Vec<u8>> = counts_by.keys().map(|r| r.to_vec()).collect();
        let counts: Vec<f64> = counts_by.values().copied().collect();
        let of_row = self.rows.iter().map(|r| patterns.binary_search(r).expect("row was counted")).collect();
        (patterns, counts, of_row)
    }
}

/// Trains `num_trainings` ReLU runs (seeds `config.seed`, `config.seed + 1`, ...)
/// sampling activity every `sample_every` epochs, and stacks all samples.
/// The returned runs keep their trajectories but not their samples.
pub fn collect_samples(
    dataset: &Dataset,
    config: &ReluConfig,
    num_trainings: usize,
    sample_every: usize,
) -> Result<(SampleStack, Vec<ReluRun>)> {
    if num_trainings == 0 {
        return Err(Error::InvalidParameter("num_trainings must be at least 1".into()));
    }
    let runs: Vec<ReluRun> = (0..num_trainings)
        .into_par_iter()
        .map(|i| {
            let mut cfg = config.clone();
            cfg.seed = config.seed + i as u64;
            cfg.sample_every = Some(sample_every);
            train_relu(dataset, &cfg)
        })
        .collect::<Result<_>>()?;
    let mut stack = SampleStack::new(dataset.n_datapoints());
    let mut out = Vec::with_capacity(runs.len());
    for mut run in runs {
        for s in run.samples.drain(..) {
            stack.push_sample(&s.active, s.run_id, s.epoch)?;
        }
        out.push(run);
    }
    Ok((stack, out))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateClustering {
    pub k: usize,
    /// `k` rows of per-datapoint mean activity.
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub sizes: Vec<usize>,
    /// Within-cluster sum of squared distances.
    pub inertia: f64,
    pub iterations: usize,
    pub consistency: Vec<f64>,
    /// Filled in by `elbow_scan`.
    pub imitation_mse: Option<f64>,
}

fn dist2(a: &[u8], c: &[f64]) -> f64 {
    a.iter().zip(c).map(|(&x, &y)| (f64::from(x) - y).powi(2)).sum()
}

fn nearest(p: &[u8], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = dist2(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Lloyd's algorithm on the stack rows with k-means++ seeding from `seed`.
/// A cluster that empties is reseeded at the point farthest from its centroid.
pub fn kmeans(stack: &SampleStack, k: usize, seed: u64, max_iter: usize) -> Result<GateClustering> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    if k > stack.len() {
        return Err(Error::InvalidParameter(format!("k = {k} exceeds {} rows", stack.len())));
    }
    let n = stack.n_datapoints;
    let (points, weights, of_row) = stack.unique();
    let to_f = |p: &[u8]| p.iter().map(|&v| f64::from(v)).collect::<Vec<f64>>();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total: f64 = weights.iter().sum();
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let pick = |rng: &mut ChaCha8Rng, w: &[f64]| -> usize {
        let s: f64 = w.iter().sum();
        let mut r = rng.gen::<f64>() * s;
        for (i, &wi) in w.iter().enumerate() {
            if r < wi {
                return i;
            }
            r -= wi;
        }
        w.iter().rposition(|&wi| wi > 0.0).unwrap_or(0)
    };
    centroids.push(to_f(&points[pick(&mut rng, &weights)]));
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let w: Vec<f64> = d2.iter().zip(&weights).map(|(d, w)| d * w).collect();
        // Fewer distinct points than k: duplicate centroids will be reseeded below.
        let next = if w.iter().sum::<f64>() > 0.0 { pick(&mut rng, &w) } else { pick(&mut rng, &weights) };
        centroids.push(to_f(&points[next]));
        for (d, p) in d2.iter_mut().zip(&points) {
            *d = d.min(dist2(p, centroids.last().expect("nonempty")));
        }
    }

    let mut assign = vec![usize::MAX; points.len()];
    let mut iterations = 0;
    for it in 0..max_iter.max(1) {
        iterations = it + 1;
        let mut changed = false;
        let mut dist = vec![0.0; points.len()];
        for (i, p) in points.iter().enumerate() {
            let (j, d) = nearest(p, &centroids);
            changed |= assign[i] != j;
            assign[i] = j;
            dist[i] = d;
        }
        let mut sums = vec![vec![0.0; n]; k];
        let mut mass = vec![0.0; k];
        for (i, p) in points.iter().enumerate() {
            mass[assign[i]] += weights[i];
            for (s, &v) in sums[assign[i]].iter_mut().zip(p) {
                *s += weights[i] * f64::from(v);
            }
        }
        for j in 0..k {
            if mass[j] > 0.0 {
                centroids[j] = sums[j].iter().map(|s| s / mass[j]).collect();
                continue;
            }
            let far = (0..points.len())
                .filter(|&i| mass[assign[i]] > weights[i])
                .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)));
            if let Some(far) = far {
                mass[assign[far]] -= weights[far];
                assign[far] = j;
                mass[j] = weights[far];
                dist[far] = 0.0;
                centroids[j] = to_f(&points[far]);
                changed = true;
            }
        }
        if !changed && it > 0 {
            break;
        }
    }

    // Final assignment against the final centroids.
    let mut sizes = vec![0usize; k];
    let mut inertia = 0.0;
    for (i, p) in points.iter().enumerate() {
        let (j, d) = nearest(p, &centroids);
        assign[i] = j;
        sizes[j] += weights[i] as usize;
        inertia += weights[i] * d;
    }
    debug_assert_eq!(sizes.iter().sum::<usize>() as f64, total);
    let assignments = of_row.iter().map(|&u| assign[u]).collect();
    let consistency = centroids.iter().map(|c| consistency_of(c)).collect();
    Ok(GateClustering { k, centroids, assignments, sizes, inertia, iterations, consistency, imitation_mse: None })
}

fn consistency_of(centroid: &[f64]) -> f64 {
    if centroid.is_empty() {
        return 1.0;
    }
    let ok = centroid.iter().filter(|&&v| v <= CONSISTENCY_BAND || v >= 1.0 - CONSISTENCY_BAND).count();
    ok as f64 / centroid.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarizedGates {
    /// One 0/1 gate row per centroid.
    pub patterns: Vec<Vec<f64>>,
    pub consistency: Vec<f64>,
}

impl BinarizedGates {
    /// Clusters whose centroid is too far from binary.
    pub fn inconsistent(&self) -> Vec<usize> {
        (0..self.consistency.len()).filter(|&j| self.consistency[j] < CONSISTENCY_WARNING).collect()
    }
}

/// Gate is on where the centroid reaches `threshold`.
pub fn binarize_centroids(clustering: &GateClustering, threshold: f64) -> Result<BinarizedGates> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidParameter(format!("threshold must be in (0,1), got {threshold}")));
    }
    let patterns = clustering
        .centroids
        .iter()
        .map(|c| c.iter().map(|&v| if v >= threshold { 1.0 } else { 0.0 }).collect())
        .collect();
    let gates = BinarizedGates { patterns, consistency: clustering.consistency.clone() };
    let weak = gates.inconsistent();
    if !weak.is_empty() {
        eprintln!(
            "warning: {} of {} clusters have consistency < {CONSISTENCY_WARNING} {weak:?}; more clusters may be needed",
            weak.len(),
            gates.patterns.len()
        );
    }
    Ok(gates)
}

/// True when both lists hold the same gate patterns, as multisets.
pub fn same_patterns(a: &[Vec<f64>], b: &[Vec<f64>]) -> bool {
    let key = |v: &[Vec<f64>]| {
        let mut k: Vec<Vec<u8>> = v.iter().map(|r| r.iter().map(|&x| u8::from(x > 0.5)).collect()).collect();
        k.sort();
        k
    };
    a.len() == b.len() && key(a) == key(b)
}

fn context_only(dataset: &Dataset, pattern: &[f64]) -> bool {
    let Some(ctx) = dataset.context_ids.as_ref() else { return false };
    let mut seen: BTreeMap<usize, f64> = BTreeMap::new();
    ctx.iter().zip(pattern).all(|(&c, &g)| *seen.entry(c).or_insert(g) == g)
}

/// One pathway per pattern, each a single gated hidden node of
/// `hidden_per_pathway` units between input and output. On contextual
/// datasets a pathway gated by context alone reads only the item features
/// (as in the contextual presets); every other pathway reads all inputs.
pub fn build_reln(
    dataset: &Dataset,
    gates: &BinarizedGates,
    hidden_per_pathway: usize,
) -> Result<(GatedGraph, GatingTable)> {
    if hidden_per_pathway == 0 {
        return Err(Error::InvalidParameter("hidden width must be positive".into()));
    }
    if gates.patterns.is_empty() {
        return Err(Error::InvalidParameter("no gate patterns".into()));
    }
    let n = dataset.n_datapoints();
    if let Some(p) = gates.patterns.iter().find(|p| p.len() != n) {
        return Err(Error::Shape(format!("gate pattern has {} entries, dataset has {n}", p.len())));
    }
    let mut b = GraphBuilder::new();
    let x = b.input("x", (0..dataset.n_inputs()).collect());
    let x_item = dataset.item_rows.map(|_| b.input("x_item", dataset.item_row_indices()));
    let y = b.output("y", (0..dataset.n_targets()).collect());
    let mut hidden = Vec::new();
    for (k, pattern) in gates.patterns.iter().enumerate() {
        let all_on = pattern.iter().all(|&g| g == 1.0);
        let source = match x_item {
            Some(xi) if !all_on && context_only(dataset, pattern) => xi,
            _ => x,
        };
        let h = b.node(&format!("h{k}"), hidden_per_pathway);
        b.edge(&format!("in{k}"), source, h);
        b.edge(&format!("out{k}"), h, y);
        hidden.push(h);
    }
    let graph = prune_unused_inputs(b)?;
    let mut table = GatingTable::all_on(&graph, n);
    for (k, pattern) in gates.patterns.iter().enumerate() {
        let node = graph.node_index(&format!("h{k}")).expect("built above");
        table.set_node(node, pattern.clone());
    }
    table.validate(&graph)?;
    check_capacity(&graph, &table, dataset)?;
    Ok((graph, table))
}

fn prune_unused_inputs(b: GraphBuilder) -> Result<GatedGraph> {
    let graph = b.build()?;
    let used = |node: usize| graph.edges.iter().any(|e| e.source == node);
    if graph.inputs.iter().all(|bnd| used(bnd.node)) {
        return Ok(graph);
    }
    let keep: Vec<usize> = (0..graph.nodes.len()).filter(|&i| graph.input_binding(i).is_none() || used(i)).collect();
    let remap = |i: usize| keep.iter().position(|&k| k == i).expect("kept node");
    let nodes = keep.iter().map(|&i| graph.nodes[i].clone()).collect();
    let edges = graph
        .edges
        .iter()
        .map(|e| {
            let mut e = e.clone();
            e.source = remap(e.source);
            e.target = remap(e.target);
            e
        })
        .collect();
    let inputs = graph
        .inputs
        .iter()
        .filter(|bnd| used(bnd.node))
        .map(|bnd| {
            let mut bnd = bnd.clone();
            bnd.node = remap(bnd.node);
            bnd
        })
        .collect();
    let outputs = graph
        .outputs
        .iter()
        .map(|bnd| {
            let mut bnd = bnd.clone();
            bnd.node = remap(bnd.node);
            bnd
        })
        .collect();
    GatedGraph::new(nodes, edges, inputs, outputs)
}

/// What the candidate networks are trained with and compared against.
#[derive(Debug, Clone)]
pub struct ElbowReference {
    /// ReLU outputs per recorded epoch, one list per reference run.
    pub relu_outputs: Vec<Vec<(usize, Matrix)>>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub init: Init,
    pub seed: u64,
    pub hidden_per_pathway: usize,
    pub threshold: f64,
    pub kmeans_seed: u64,
    pub max_iter: usize,
}

impl ElbowReference {
    pub fn from_runs(runs: &[ReluRun], config: &ReluConfig, hidden_per_pathway: usize) -> ElbowReference {
        ElbowReference {
            relu_outputs: runs.iter().map(|r| r.trajectory.outputs.clone()).collect(),
            learning_rate: config.learning_rate,
            epochs: config.epochs,
            init: config.init,
            seed: config.seed,
            hidden_per_pathway,
            threshold: DEFAULT_THRESHOLD,
            kmeans_seed: config.seed,
            max_iter: 300,
        }
    }

    fn epochs(&self) -> Vec<usize> {
        let mut e: Vec<usize> = self.relu_outputs.iter().flatten().map(|(e, _)| *e).collect();
        e.sort_unstable();
        e.dedup();
        e
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ElbowPoint {
    pub k: usize,
    pub imitation_mse: Option<f64>,
    pub error: Option<String>,
    pub clustering: Option<GateClustering>,
    pub patterns: Option<BinarizedGates>,
}

/// Mean squared difference between gated-network and ReLU outputs, averaged
/// equally over output units, datapoints, recorded epochs and reference runs.
pub fn imitation_mse(gdln_outputs: &[(usize, Matrix)], reference: &ElbowReference) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for run in &reference.relu_outputs {
        for (epoch, relu_out) in run {
            let (_, g) = gdln_outputs
                .iter()
                .find(|(e, _)| e == epoch)
                .ok_or_else(|| Error::InvalidParameter(format!("no gated-network output at epoch {epoch}")))?;
            if g.shape() != relu_out.shape() {
                return Err(Error::Shape("output shapes differ".into()));
            }
            total += (g - relu_out).norm_squared();
            count += g.len();
        }
    }
    if count == 0 {
        return Err(Error::InvalidParameter("reference has no recorded outputs".into()));
    }
    Ok(total / count as f64)
}

/// Clusters the stack for every k, builds and trains the resulting network,
/// and scores how well it imitates the reference ReLU outputs.
pub fn elbow_scan(
    dataset: &Dataset,
    stack: &SampleStack,
    k_range: &[usize],
    reference: &ElbowReference,
) -> Result<Vec<ElbowPoint>> {
    if k_range.is_empty() {
        return Err(Error::InvalidParameter("k range is empty".into()));
    }
    let epochs = reference.epochs();
    Ok(k_range
        .par_iter()
        .map(|&k| {
            let attempt = || -> Result<(GateClustering, BinarizedGates, f64)> {
                let mut clustering = kmeans(stack, k, reference.kmeans_seed, reference.max_iter)?;
                let gates = binarize_centroids(&clustering, reference.threshold)?;
                let (mut graph, table) = build_reln(dataset, &gates, reference.hidden_per_pathway)?;
                let mut cfg = TrainConfig::new(reference.learning_rate, reference.epochs);
                cfg.init = Some(reference.init);
                cfg.seed = reference.seed;
                cfg.record_every = reference.epochs.max(1);
                cfg.output_epochs = epochs.clone();
                let traj = train(&mut graph, &table, dataset, &cfg)?;
                let mse = imitation_mse(&traj.outputs, reference)?;
                clustering.imitation_mse = Some(mse);
                Ok((clustering, gates, mse))
            };
            match attempt() {
                Ok((c, g, mse)) => {
                    ElbowPoint { k, imitation_mse: Some(mse), error: None, clustering: Some(c), patterns: Some(g) }
                }
                Err(e) => {
                    ElbowPoint { k, imitation_mse: None, error: Some(e.to_string()), clustering: None, patterns: None }
                }
            }
        })
        .collect())
}

/// The k after the largest drop relative to the following drop: the first k
/// whose preceding improvement is at least `ratio` times the next one.
pub fn select_elbow(points: &[ElbowPoint], ratio: f64) -> Option<usize> {
    let scored: Vec<(usize, f64)> = points.iter().filter_map(|p| Some((p.k, p.imitation_mse?))).collect();
    for w in scored.windows(3) {
        let before = w[0].1 - w[1].1;
        let after = (w[1].1 - w[2].1).max(0.0);
        if before > 0.0 && before >= ratio * after {
            return Some(w[1].0);
        }
    }
    None
}

/// A clustering without its per-row assignments, for compact JSON.
pub fn clustering_summary_json(c: &GateClustering) -> Result<String> {
    let mut c = c.clone();
    c.assignments.clear();
    Ok(serde_json::to_string_pretty(&c)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{build_xor_margin, contextual_task};
    use crate::gdln::{pathway_patterns, RelnPreset};

    fn stack_of(rows: &[&[u8]]) -> SampleStack {
        let mut s = SampleStack::new(rows[0].len());
        for r in rows {
            s.rows.push(r.to_vec());
            s.provenance.push((0, 0));
        }
        s
    }

    #[test]
    fn k_equal_distinct_rows_gives_zero_inertia() {
        let s = stack_of(&[&[1, 0, 1], &[0, 0, 1], &[1, 0, 1], &[1, 1, 1], &[0, 0, 1]]);
        let c = kmeans(&s, 3, 7, 100).unwrap();
        assert!(c.inertia.abs() < 1e-12);
        assert_eq!(c.sizes.iter().sum::<usize>(), 5);
        assert_eq!(c.assignments[0], c.assignments[2]);
        assert_eq!(c.assignments[1], c.assignments[4]);
    }

    #[test]
    fn centroids_are_means_of_members() {
        let s = stack_of(&[&[1, 0, 1, 1], &[1, 0, 0, 1], &[0, 1, 0, 0], &[0, 1, 1, 0], &[1, 1, 1, 1]]);
        let c = kmeans(&s, 2, 1, 100).unwrap();
        for j in 0..2 {
            let members: Vec<&Vec<u8>> =
                s.rows.iter().zip(&c.assignments).filter(|(_, &a)| a == j).map(|(r, _)| r).collect();
            for col in 0..4 {
                let mean = members.iter().map(|r| f64::from(r[col])).sum::<f64>() / members.len() as f64;
                assert!((mean - c.centroids[j][col]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn too_many_clusters_is_an_error_and_duplicates_are_handled() {
        let s = stack_of(&[&[1, 0], &[1, 0], &[1, 0]]);
        assert!(kmeans(&s, 4, 0, 10).is_err());
        let c = kmeans(&s, 2, 0, 10).unwrap();
        assert_eq!(c.sizes.iter().sum::<usize>(), 3);
    }

    #[test]
    fn binarize_boundaries() {
        let mut c = GateClustering {
            k: 2,
            centroids: vec![vec![0.99; 4], vec![0.5; 4]],
            assignments: vec![],
            sizes: vec![1, 1],
            inertia: 0.0,
            iterations: 1,
            consistency: vec![],
            imitation_mse: None,
        };
        c.consistency = c.centroids.iter().map(|r| consistency_of(r)).collect();
        let g = binarize_centroids(&c, 0.5).unwrap();
        assert_eq!(g.patterns, vec![vec![1.0; 4], vec![1.0; 4]]);
        assert_eq!(g.consistency, vec![1.0, 0.0]);
        assert_eq!(g.inconsistent(), vec![1]);
        assert!(binarize_centroids(&c, 1.0).is_err());
    }

    #[test]
    fn preset_patterns_rebuild_the_preset_graph() {
        let ds = contextual_task(3, 8, None).unwrap();
        let mut patterns = pathway_patterns(RelnPreset::Contextual { contexts: 3, arity: 2 }, &ds).unwrap();
        patterns.reverse();
        let gates = BinarizedGates { consistency: vec![1.0; 4], patterns: patterns.clone() };
        let (graph, table) = build_reln(&ds, &gates, 100).unwrap();
        let (pgraph, ptable) =
            crate::gdln::build_reln_graph(RelnPreset::Contextual { contexts: 3, arity: 2 }, &ds, 100).unwrap();
        assert_eq!(graph.paths().len(), pgraph.paths().len());
        let sig = |g: &GatedGraph, t: &GatingTable| {
            let mut v: Vec<(String, Vec<u8>)> = g
                .paths()
                .iter()
                .map(|p| {
                    let src = g.nodes[g.edges[p.edges[0]].source].name.clone();
                    (src, t.path_gate(p, g).iter().map(|&x| x as u8).collect())
                })
                .collect();
            v.sort();
            v
        };
        assert_eq!(sig(&graph, &table), sig(&pgraph, &ptable));
        assert!(same_patterns(
            &patterns,
            &pathway_patterns(RelnPreset::Contextual { contexts: 3, arity: 2 }, &ds).unwrap()
        ));
    }

    #[test]
    fn single_all_on_centroid_is_a_linear_network() {
        let ds = build_xor_margin(1.0).unwrap();
        let gates = BinarizedGates { patterns: vec![vec![1.0; 4]], consistency: vec![1.0] };
        let (graph, table) = build_reln(&ds, &gates, 4).unwrap();
        assert_eq!(graph.paths().len(), 1);
        assert_eq!(graph.inputs.len(), 1);
        assert!(table.node.iter().flatten().all(|&g| g == 1.0));
    }

    #[test]
    fn elbow_picks_the_sharp_drop() {
        let mk = |k, m| ElbowPoint { k, imitation_mse: Some(m), error: None, clustering: None, patterns: None };
        let pts = vec![mk(1, 1.0), mk(2, 0.8), mk(3, 0.6), mk(4, 0.05), mk(5, 0.049)];
        assert_eq!(select_elbow(&pts, 5.0), Some(4));
    }
}
