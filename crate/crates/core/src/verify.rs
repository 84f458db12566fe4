//! Numeric checks: singular-value interlacing under restriction, growth of the
//! top singular value with added datapoints, weight/mode alignment, gradient
//! fidelity and a census of ReLU gating patterns.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::datasets::{correlation_stats, DataMask, Dataset};
use crate::error::{Error, Result};
use crate::gdln::{gradient, init_weights, loss, GatedGraph, GatingTable, Init};
use crate::linalg::{self, Matrix};

pub const INTERLACING_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct InterlacingReport {
    /// Singular values of the full matrix.
    pub sigma: Vec<f64>,
    /// Of the matrix restricted to the kept columns.
    pub alpha: Vec<f64>,
    /// Of the matrix restricted to the kept rows and columns.
    pub beta: Vec<f64>,
    pub holds: bool,
}

impl InterlacingReport {
    pub fn top(&self) -> (f64, f64, f64) {
        let first = |v: &[f64]| v.first().copied().unwrap_or(0.0);
        (first(&self.sigma), first(&self.alpha), first(&self.beta))
    }
}

/// Checks `beta_j <= alpha_j <= sigma_j` for every index where both sides exist.
pub fn interlacing_check(m: &Matrix, rows: &[usize], cols: &[usize], tol: f64) -> Result<InterlacingReport> {
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::InvalidParameter("row and column subsets must be nonempty".into()));
    }
    if let Some(&r) = rows.iter().find(|&&r| r >= m.nrows()) {
        return Err(Error::OutOfRange { index: r, len: m.nrows() });
    }
    if let Some(&c) = cols.iter().find(|&&c| c >= m.ncols()) {
        return Err(Error::OutOfRange { index: c, len: m.ncols() });
    }
    let a = linalg::select_cols(m, cols);
    let b = linalg::select_rows(&a, rows);
    let sigma = linalg::singular_values(m);
    let alpha = linalg::singular_values(&a);
    let beta = linalg::singular_values(&b);
    let holds =
        beta.iter().zip(&alpha).all(|(b, a)| *b <= a + tol) && alpha.iter().zip(&sigma).all(|(a, s)| *a <= s + tol);
    Ok(InterlacingReport { sigma, alpha, beta, holds })
}

#[derive(Debug, Clone, Serialize)]
pub struct RemovalReport {
    pub full: f64,
    /// Top singular value with datapoint `i` gated out.
    pub removed: Vec<f64>,
    pub holds: bool,
}

/// Compares the top singular value of the input-output correlation with each
/// single datapoint gated out. Normalization stays at the full dataset size,
/// as it does for a gated pathway, so only the summed correlation changes.
pub fn datapoint_removal_check(dataset: &Dataset, tol: f64) -> Result<RemovalReport> {
    if !dataset.is_nonnegative() {
        return Err(Error::Inapplicable(
            "datapoint removal argument needs elementwise nonnegative inputs and targets".into(),
        ));
    }
    let n = dataset.n_datapoints();
    let full = correlation_stats(dataset, None)?.top_singular_value();
    let mut removed = Vec::with_capacity(n);
    for i in 0..n {
        if n == 1 {
            removed.push(0.0);
            continue;
        }
        let mut gates = vec![1.0; n];
        gates[i] = 0.0;
        removed.push(correlation_stats(dataset, Some(&DataMask::datapoints(gates)))?.top_singular_value());
    }
    let holds = removed.iter().all(|&r| r <= full + tol);
    Ok(RemovalReport { full, removed, holds })
}

/// `|offdiag(U^T W V)|_F / |U^T W V|_F`; zero for zero weights.
pub fn alignment_diagnostic(weights: &Matrix, u: &Matrix, v: &Matrix) -> Result<f64> {
    if u.nrows() != weights.nrows() || v.nrows() != weights.ncols() {
        return Err(Error::Shape(format!(
            "weights {}x{} against U with {} rows and V with {} rows",
            weights.nrows(),
            weights.ncols(),
            u.nrows(),
            v.nrows()
        )));
    }
    let m = u.transpose() * weights * v;
    let total = m.norm();
    if total == 0.0 {
        return Ok(0.0);
    }
    Ok(linalg::offdiag_frobenius(&m) / total)
}

#[derive(Debug, Clone, Serialize)]
pub struct GradientCheckReport {
    pub max_relative_error: f64,
    pub points: usize,
    pub coordinates_checked: usize,
}

#[derive(Debug, Clone)]
pub struct GradientCheckOptions {
    pub n_points: usize,
    pub fd_step: f64,
    /// Std of the random weights at each point.
    pub init_std: f64,
    /// Randomly chosen coordinates differenced per point; `None` checks all.
    pub max_coords: Option<usize>,
    pub seed: u64,
}

impl GradientCheckOptions {
    pub fn new(n_points: usize, fd_step: f64) -> Self {
        GradientCheckOptions { n_points, fd_step, init_std: 0.3, max_coords: None, seed: 0 }
    }
}

/// Compares backprop gradients to central differences at random weight
/// settings. Errors are relative to the largest gradient entry at that point.
pub fn gradient_check(
    graph: &GatedGraph,
    gates: &GatingTable,
    dataset: &Dataset,
    opts: &GradientCheckOptions,
) -> Result<GradientCheckReport> {
    let GradientCheckOptions { n_points, fd_step, init_std, max_coords, seed } = *opts;
    if n_points == 0 {
        return Err(Error::InvalidParameter("need at least one point".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut g = graph.clone();
    for point in 0..n_points {
        init_weights(&mut g, Init::Std(init_std), seed.wrapping_add(point as u64))?;
        let analytic = gradient(&g, gates, dataset)?;
        let scale = analytic.iter().map(linalg::max_abs).fold(0.0f64, f64::max);
        let mut coords: Vec<(usize, usize)> =
            analytic.iter().enumerate().flat_map(|(e, m)| (0..m.len()).map(move |i| (e, i))).collect();
        if let Some(limit) = max_coords {
            coords.shuffle(&mut rng);
            coords.truncate(limit);
        }
        for (e, idx) in coords {
            let orig = g.edges[e].weight[idx];
            g.edges[e].weight[idx] = orig + fd_step;
            let lp = loss(&g, gates, dataset)?;
            g.edges[e].weight[idx] = orig - fd_step;
            let lm = loss(&g, gates, dataset)?;
            g.edges[e].weight[idx] = orig;
            let fd = -(lp - lm) / (2.0 * fd_step);
            let diff = (fd - analytic[e][idx]).abs();
            if scale > 0.0 {
                worst = worst.max(diff / scale);
            } else {
                worst = worst.max(diff);
            }
            checked += 1;
        }
    }
    Ok(GradientCheckReport { max_relative_error: worst, points: n_points, coordinates_checked: checked })
}

#[derive(Debug, Clone, Serialize)]
pub struct PatternCensus {
    /// Neurons active on at least one datapoint.
    pub alive: usize,
    /// Alive neurons whose activity is constant within every context.
    pub context_only: usize,
    /// Alive neurons active on exactly one datapoint.
    pub single_datapoint: usize,
    pub fraction: f64,
}

/// Classifies each hidden neuron's binary activity row (`hidden x N`).
pub fn gating_pattern_census(active: &Matrix, dataset: &Dataset) -> Result<PatternCensus> {
    let ctx = dataset
        .context_ids
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("census needs a contextual dataset".into()))?;
    if active.ncols() != ctx.len() {
        return Err(Error::Shape(format!("{} columns for {} datapoints", active.ncols(), ctx.len())));
    }
    let (mut alive, mut context_only, mut single) = (0, 0, 0);
    for r in 0..active.nrows() {
        let row: Vec<bool> = active.row(r).iter().map(|&v| v > 0.5).collect();
        let on = row.iter().filter(|&&b| b).count();
        if on == 0 {
            continue;
        }
        alive += 1;
        let mut by_ctx: Vec<Option<bool>> = vec![None; dataset.num_contexts()];
        let constant = row.iter().zip(ctx).all(|(&b, &c)| *by_ctx[c].get_or_insert(b) == b);
        if constant {
            context_only += 1;
        } else if on == 1 {
            single += 1;
        }
    }
    let fraction = if alive == 0 { 1.0 } else { (context_only + single) as f64 / alive as f64 };
    Ok(PatternCensus { alive, context_only, single_datapoint: single, fraction })
}
