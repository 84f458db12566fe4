//! Benchmark datasets and their (optionally gated) correlation statistics.
//!
//! All matrices are stored feature-major: `inputs` is `d x N` and `targets`
//! is `p x N`, one column per datapoint.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Svd, SymEigen};

/// Default absolute tolerance on the off-diagonal mass used by [`check_diagonalizable`].
pub const DIAGONALIZABLE_TOL: f64 = 1e-8;

/// Items per context in the default contextual tasks.
pub const DEFAULT_ITEMS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockScope {
    Shared,
    Context(usize),
}

/// A contiguous range of target rows and the context it is active in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelBlock {
    pub start: usize,
    pub end: usize,
    pub scope: BlockScope,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub inputs: Matrix,
    pub targets: Matrix,
    pub item_ids: Vec<usize>,
    pub context_ids: Option<Vec<usize>>,
    pub label_blocks: Vec<LabelBlock>,
    /// Input rows holding the item one-hot (contextual tasks only).
    pub item_rows: Option<(usize, usize)>,
    /// Input rows holding the context one-hot (contextual tasks only).
    pub context_rows: Option<(usize, usize)>,
    pub seed: Option<u64>,
}

impl Dataset {
    pub fn n_datapoints(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn n_targets(&self) -> usize {
        self.targets.nrows()
    }

    pub fn num_contexts(&self) -> usize {
        self.context_ids.as_ref().map_or(0, |c| c.iter().copied().max().map_or(0, |m| m + 1))
    }

    pub fn items_per_context(&self) -> usize {
        self.item_ids.iter().copied().max().map_or(0, |m| m + 1)
    }

    pub fn item_row_indices(&self) -> Vec<usize> {
        match self.item_rows {
            Some((a, b)) => (a..b).collect(),
            None => (0..self.n_inputs()).collect(),
        }
    }

    pub fn context_row_indices(&self) -> Vec<usize> {
        self.context_rows.map_or_else(Vec::new, |(a, b)| (a..b).collect())
    }

    /// `true` when every input and target entry is nonnegative.
    pub fn is_nonnegative(&self) -> bool {
        self.inputs.iter().chain(self.targets.iter()).all(|&x| x >= 0.0)
    }

    /// Copy of the dataset with datapoint `index` dropped.
    pub fn without_datapoint(&self, index: usize) -> Result<Dataset> {
        let n = self.n_datapoints();
        if index >= n {
            return Err(Error::OutOfRange { index, len: n });
        }
        let keep: Vec<usize> = (0..n).filter(|&i| i != index).collect();
        let mut out = self.clone();
        out.inputs = linalg::select_cols(&self.inputs, &keep);
        out.targets = linalg::select_cols(&self.targets, &keep);
        out.item_ids = keep.iter().map(|&i| self.item_ids[i]).collect();
        out.context_ids = self.context_ids.as_ref().map(|c| keep.iter().map(|&i| c[i]).collect());
        Ok(out)
    }
}

/// XoR in the first two input dimensions, linearly separable with margin
/// `2 * delta` in the third.
pub fn build_xor_margin(delta: f64) -> Result<Dataset> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!("delta must be >= 0, got {delta}")));
    }
    let inputs = linalg::from_rows(&[
        vec![-1.0, 1.0, -1.0, 1.0],
        vec![-1.0, -1.0, 1.0, 1.0],
        vec![-delta, delta, delta, -delta],
    ]);
    let targets = linalg::from_rows(&[vec![-1.0, 1.0, 1.0, -1.0]]);
    Ok(Dataset {
        name: format!("xor_margin(delta={delta})"),
        inputs,
        targets,
        item_ids: (0..4).collect(),
        context_ids: None,
        label_blocks: vec![LabelBlock { start: 0, end: 1, scope: BlockScope::Shared }],
        item_rows: None,
        context_rows: None,
        seed: None,
    })
}

/// Binary labels of a balanced binary tree over `n_items` leaves: the root
/// row, then every subtree level left to right, down to the one-hot leaves.
pub fn build_hierarchy_labels(n_items: usize) -> Result<Matrix> {
    if n_items < 2 || !n_items.is_power_of_two() {
        return Err(Error::InvalidParameter(format!("hierarchy needs a power-of-two item count >= 2, got {n_items}")));
    }
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(2 * n_items - 1);
    let mut span = n_items;
    while span >= 1 {
        for start in (0..n_items).step_by(span) {
            let mut row = vec![0.0; n_items];
            row[start..start + span].iter_mut().for_each(|x| *x = 1.0);
            rows.push(row);
        }
        span /= 2;
    }
    Ok(linalg::from_rows(&rows))
}

/// The item-identity dataset with hierarchical labels (identity inputs).
pub fn build_hierarchy_dataset(n_items: usize) -> Result<Dataset> {
    let targets = build_hierarchy_labels(n_items)?;
    let p = targets.nrows();
    Ok(Dataset {
        name: format!("hierarchy({n_items})"),
        inputs: Matrix::identity(n_items, n_items),
        targets,
        item_ids: (0..n_items).collect(),
        context_ids: None,
        label_blocks: vec![LabelBlock { start: 0, end: p, scope: BlockScope::Shared }],
        item_rows: Some((0, n_items)),
        context_rows: None,
        seed: None,
    })
}

/// Items presented in every context. Column `c * k + i` holds item `i` in
/// context `c`; inputs are the item one-hot stacked over the context one-hot.
/// Targets stack the shared block (repeated in every context) over one block
/// per context that is zero outside that context's columns.
pub fn build_contextual(
    items_per_context: usize,
    contexts: usize,
    shared_labels: &Matrix,
    context_labels: &[Matrix],
) -> Result<Dataset> {
    if contexts < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 contexts, got {contexts}")));
    }
    if items_per_context == 0 {
        return Err(Error::InvalidParameter("items_per_context must be positive".into()));
    }
    if context_labels.len() != contexts {
        return Err(Error::Shape(format!("{} context label blocks for {contexts} contexts", context_labels.len())));
    }
    if shared_labels.ncols() != items_per_context {
        return Err(Error::Shape(format!(
            "shared labels have {} columns, expected {items_per_context}",
            shared_labels.ncols()
        )));
    }
    for (c, m) in context_labels.iter().enumerate() {
        if m.ncols() != items_per_context {
            return Err(Error::Shape(format!(
                "context {c} labels have {} columns, expected {items_per_context}",
                m.ncols()
            )));
        }
    }

    let k = items_per_context;
    let n = k * contexts;
    let d = k + contexts;
    let mut inputs = Matrix::zeros(d, n);
    let mut item_ids = Vec::with_capacity(n);
    let mut context_ids = Vec::with_capacity(n);
    for c in 0..contexts {
        for i in 0..k {
            let col = c * k + i;
            inputs[(i, col)] = 1.0;
            inputs[(k + c, col)] = 1.0;
            item_ids.push(i);
            context_ids.push(c);
        }
    }

    let p_shared = shared_labels.nrows();
    let p_total = p_shared + context_labels.iter().map(|m| m.nrows()).sum::<usize>();
    let mut targets = Matrix::zeros(p_total, n);
    let mut label_blocks = Vec::new();
    if p_shared > 0 {
        label_blocks.push(LabelBlock { start: 0, end: p_shared, scope: BlockScope::Shared });
    }
    for c in 0..contexts {
        for i in 0..k {
            for r in 0..p_shared {
                targets[(r, c * k + i)] = shared_labels[(r, i)];
            }
        }
    }
    let mut row = p_shared;
    for (c, block) in context_labels.iter().enumerate() {
        for i in 0..k {
            for r in 0..block.nrows() {
                targets[(row + r, c * k + i)] = block[(r, i)];
            }
        }
        label_blocks.push(LabelBlock { start: row, end: row + block.nrows(), scope: BlockScope::Context(c) });
        row += block.nrows();
    }

    Ok(Dataset {
        name: format!("contextual(items={k}, contexts={contexts})"),
        inputs,
        targets,
        item_ids,
        context_ids: Some(context_ids),
        label_blocks,
        item_rows: Some((0, k)),
        context_rows: Some((k, d)),
        seed: None,
    })
}

/// The hierarchy task in `contexts` contexts. With `permute_seed`, the leaf
/// order of every context-specific block is shuffled by a seeded permutation
/// so the blocks differ while keeping their singular values.
pub fn contextual_task(contexts: usize, items: usize, permute_seed: Option<u64>) -> Result<Dataset> {
    let tree = build_hierarchy_labels(items)?;
    let mut rng = permute_seed.map(ChaCha8Rng::seed_from_u64);
    let blocks: Vec<Matrix> = (0..contexts)
        .map(|_| match rng.as_mut() {
            Some(rng) => {
                let mut order: Vec<usize> = (0..items).collect();
                order.shuffle(rng);
                linalg::select_cols(&tree, &order)
            }
            None => tree.clone(),
        })
        .collect();
    let mut ds = build_contextual(items, contexts, &tree, &blocks)?;
    ds.seed = permute_seed;
    ds.name = match permute_seed {
        Some(s) => format!("context{contexts}(permuted, seed={s})"),
        None => format!("context{contexts}"),
    };
    Ok(ds)
}

/// Gating applied when forming effective statistics.
#[derive(Debug, Clone, Default)]
pub struct DataMask {
    /// Per-datapoint gate in {0,1} (or any weight); `None` keeps all.
    pub datapoints: Option<Vec<f64>>,
    /// Input rows kept; all others are zeroed.
    pub input_rows: Option<Vec<usize>>,
    /// Target rows kept; all others are zeroed.
    pub target_rows: Option<Vec<usize>>,
}

impl DataMask {
    pub fn datapoints(gates: Vec<f64>) -> Self {
        DataMask { datapoints: Some(gates), ..Default::default() }
    }
}

/// Input-output and input correlation of a (gated) dataset with their
/// decompositions.
#[derive(Debug, Clone)]
pub struct CorrelationPair {
    pub sigma_yx: Matrix,
    pub sigma_x: Matrix,
    /// SVD of `sigma_yx`; inside groups of equal singular values the right
    /// vectors are rotated to diagonalize `sigma_x` where possible.
    pub svd_yx: Svd,
    /// Input variance `v_a^T sigma_x v_a` along each input-output mode.
    pub mode_variances: Vec<f64>,
    pub eig_x: SymEigen,
    pub diagonalizability_residual: f64,
}

impl CorrelationPair {
    pub fn from_matrices(sigma_yx: Matrix, sigma_x: Matrix) -> CorrelationPair {
        let raw = linalg::svd(&sigma_yx);
        let (svd_yx, residual) = align_modes(&sigma_yx, &sigma_x, raw);
        let mode_variances = (0..svd_yx.s.len())
            .map(|a| {
                let v = svd_yx.v.column(a);
                (v.transpose() * &sigma_x * v)[(0, 0)]
            })
            .collect();
        let mut eig_x = linalg::sym_eigen(&sigma_x);
        eig_x.values.iter_mut().for_each(|x| *x = x.max(0.0));
        CorrelationPair { sigma_yx, sigma_x, svd_yx, mode_variances, eig_x, diagonalizability_residual: residual }
    }

    pub fn rank(&self) -> usize {
        self.svd_yx.rank(1e-10)
    }

    pub fn top_singular_value(&self) -> f64 {
        self.svd_yx.s.first().copied().unwrap_or(0.0)
    }
}

fn degenerate_groups(s: &[f64]) -> Vec<(usize, usize)> {
    let top = s.first().copied().unwrap_or(0.0).max(1e-300);
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=s.len() {
        if i == s.len() || (s[start] - s[i]).abs() > 1e-9 * top {
            groups.push((start, i));
            start = i;
        }
    }
    groups
}

/// Rotates right singular vectors inside degenerate groups so that they
/// diagonalize `sigma_x`, and measures how far each group's span is from
/// being an invariant subspace of `sigma_x`. Only modes with nonzero
/// singular value count towards the residual.
fn align_modes(sigma_yx: &Matrix, sigma_x: &Matrix, svd: Svd) -> (Svd, f64) {
    let rank = svd.rank(1e-10);
    let mut u = svd.u.clone();
    let mut v = svd.v.clone();
    let mut residual_sq = 0.0;
    for (a, b) in degenerate_groups(&svd.s) {
        if a >= rank {
            break;
        }
        let b = b.min(rank);
        let vg = svd.v.columns(a, b - a).into_owned();
        let proj = &vg * vg.transpose();
        let leak = (Matrix::identity(proj.nrows(), proj.ncols()) - proj) * sigma_x * &vg;
        residual_sq += leak.norm_squared();
        if b - a > 1 {
            let inner = vg.transpose() * sigma_x * &vg;
            let e = linalg::sym_eigen(&inner);
            let vg_rot = &vg * &e.vectors;
            for (j, col) in (a..b).enumerate() {
                v.set_column(col, &vg_rot.column(j));
                let ucol = sigma_yx * vg_rot.column(j) / svd.s[col];
                u.set_column(col, &ucol);
            }
        }
    }
    (Svd { u, s: svd.s, v }, residual_sq.sqrt())
}

/// Effective correlations `sigma_yx = Y_m X_m^T / N` and `sigma_x = X_m X_m^T / N`
/// where `N` is always the full dataset size.
pub fn correlation_stats(dataset: &Dataset, mask: Option<&DataMask>) -> Result<CorrelationPair> {
    let n = dataset.n_datapoints();
    let mut x = dataset.inputs.clone();
    let mut y = dataset.targets.clone();
    if let Some(mask) = mask {
        if let Some(g) = &mask.datapoints {
            if g.len() != n {
                return Err(Error::Shape(format!("datapoint mask has {} entries for {n} datapoints", g.len())));
            }
            if g.iter().all(|&v| v == 0.0) {
                return Err(Error::DegenerateStatistics("mask deactivates every datapoint".into()));
            }
            linalg::scale_columns(&mut x, g);
            linalg::scale_columns(&mut y, g);
        }
        if let Some(rows) = &mask.input_rows {
            zero_other_rows(&mut x, rows)?;
        }
        if let Some(rows) = &mask.target_rows {
            zero_other_rows(&mut y, rows)?;
        }
    }
    if n == 0 {
        return Err(Error::DegenerateStatistics("dataset has no datapoints".into()));
    }
    let inv_n = 1.0 / n as f64;
    let sigma_yx = &y * x.transpose() * inv_n;
    let sigma_x = &x * x.transpose() * inv_n;
    Ok(CorrelationPair::from_matrices(sigma_yx, sigma_x))
}

fn zero_other_rows(m: &mut Matrix, keep: &[usize]) -> Result<()> {
    let rows = m.nrows();
    if let Some(&bad) = keep.iter().find(|&&r| r >= rows) {
        return Err(Error::OutOfRange { index: bad, len: rows });
    }
    for r in 0..rows {
        if !keep.contains(&r) {
            m.row_mut(r).fill(0.0);
        }
    }
    Ok(())
}

/// Whether the right singular vectors of `sigma_yx` diagonalize `sigma_x`.
pub fn check_diagonalizable(stats: &CorrelationPair, tol: f64) -> (bool, f64) {
    let r = stats.diagonalizability_residual;
    (r <= tol, r)
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetMetadata {
    name: String,
    n_inputs: usize,
    n_targets: usize,
    n_datapoints: usize,
    item_ids: Vec<usize>,
    context_ids: Option<Vec<usize>>,
    label_blocks: Vec<LabelBlock>,
    item_rows: Option<(usize, usize)>,
    context_rows: Option<(usize, usize)>,
    seed: Option<u64>,
}

pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    let mut out = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{}", m[(r, c)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        rows.push(row);
    }
    if rows.windows(2).any(|w| w[0].len() != w[1].len()) {
        return Err(Error::Parse(format!("{}: ragged rows", path.display())));
    }
    Ok(linalg::from_rows(&rows))
}

/// Writes `inputs.csv`, `targets.csv` (one column per datapoint, no header)
/// and `metadata.json` into `dir`.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_matrix_csv(&dir.join("inputs.csv"), &dataset.inputs)?;
    write_matrix_csv(&dir.join("targets.csv"), &dataset.targets)?;
    let meta = DatasetMetadata {
        name: dataset.name.clone(),
        n_inputs: dataset.n_inputs(),
        n_targets: dataset.n_targets(),
        n_datapoints: dataset.n_datapoints(),
        item_ids: dataset.item_ids.clone(),
        context_ids: dataset.context_ids.clone(),
        label_blocks: dataset.label_blocks.clone(),
        item_rows: dataset.item_rows,
        context_rows: dataset.context_rows,
        seed: dataset.seed,
    };
    fs::write(dir.join("metadata.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let inputs = read_matrix_csv(&dir.join("inputs.csv"))?;
    let targets = read_matrix_csv(&dir.join("targets.csv"))?;
    let meta: DatasetMetadata = serde_json::from_str(&fs::read_to_string(dir.join("metadata.json"))?)?;
    if inputs.ncols() != targets.ncols() || inputs.ncols() != meta.n_datapoints {
        return Err(Error::Shape("inputs, targets and metadata disagree on datapoint count".into()));
    }
    Ok(Dataset {
        name: meta.name,
        inputs,
        targets,
        item_ids: meta.item_ids,
        context_ids: meta.context_ids,
        label_blocks: meta.label_blocks,
        item_rows: meta.item_rows,
        context_rows: meta.context_rows,
        seed: meta.seed,
    })
}
