//! End-to-end pipelines behind `gdln run` and `gdln reproduce`. Each figure
//! pipeline returns a serializable summary plus the trajectories it produced.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::{
    anchored_initial_strength, common_pathway_residual, contextual_closed_form, contextual_fixed_point,
    crossover_delta, effective_initial_strength, linear_mode_trajectory, modal_loss, tau_for, xor_loss_curve,
    xor_time_to_loss, ModeParams, XorVariant,
};
use crate::config::{ExperimentConfig, Model, Task};
use crate::datasets::{build_xor_margin, correlation_stats, Dataset};
use crate::error::{Error, Result};
use crate::gate_finder::{
    binarize_centroids, collect_samples, elbow_scan, kmeans, same_patterns, select_elbow, BinarizedGates, ElbowPoint,
    ElbowReference, GateClustering, DEFAULT_THRESHOLD,
};
use crate::gdln::{
    build_reln_graph, pathway_patterns, pathway_stats, train, GatedGraph, GatingTable, Init, ModeProbe, RelnPreset,
    TrainConfig,
};
use crate::linalg;
use crate::relu::{train_relu, ReluConfig};
use crate::trajectory::{
    compare, count_plateaus, interpolate, mode_name, select_stereotypical_run, time_to_criterion, write_csv,
    CompareMetric, Trajectory,
};
use crate::verify::{alignment_diagnostic, gating_pattern_census, PatternCensus};

fn record_times(epochs: usize, every: usize) -> Vec<f64> {
    let mut t: Vec<f64> = (0..=epochs).step_by(every.max(1)).map(|e| e as f64).collect();
    if t.last() != Some(&(epochs as f64)) {
        t.push(epochs as f64);
    }
    t
}

fn relu_config(cfg: &ExperimentConfig, seed: u64) -> ReluConfig {
    let mut r = ReluConfig::new(cfg.hidden_widths.clone(), cfg.learning_rate, cfg.epochs, cfg.init, seed);
    r.record_every = cfg.record_every;
    r
}

/// Trains the gated preset network from `init`, probing the leading modes
/// (up to `max_modes`) of every non-inert pathway.
#[allow(clippy::too_many_arguments)]
fn train_gdln(
    preset: RelnPreset,
    ds: &Dataset,
    width: usize,
    lr: f64,
    epochs: usize,
    init: Init,
    seed: u64,
    record_every: usize,
    max_modes: usize,
) -> Result<(Trajectory, GatedGraph, GatingTable)> {
    let (mut graph, gates) = build_reln_graph(preset, ds, width)?;
    let stats = pathway_stats(&graph, &gates, ds)?;
    let mut cfg = TrainConfig::new(lr, epochs);
    cfg.init = Some(init);
    cfg.seed = seed;
    cfg.record_every = record_every;
    cfg.probes = (0..graph.paths().len())
        .filter(|&p| !stats.inert[p] && max_modes > 0)
        .map(|p| ModeProbe::from_stats(&stats, p, stats.pairs[p].rank().min(max_modes)))
        .collect();
    let traj = train(&mut graph, &gates, ds, &cfg)?;
    Ok((traj, graph, gates))
}

/// Runs the configured model for every seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    let ds = cfg.task.build()?;
    match cfg.model {
        Model::Relu => {
            cfg.seeds.par_iter().map(|&seed| Ok(train_relu(&ds, &relu_config(cfg, seed))?.trajectory)).collect()
        }
        Model::Gdln => {
            let preset = cfg.reln_preset()?;
            let max_modes = if preset == RelnPreset::Linear { usize::MAX } else { 1 };
            cfg.seeds
                .par_iter()
                .map(|&seed| {
                    let (traj, _, _) = train_gdln(
                        preset,
                        &ds,
                        cfg.pathway_width,
                        cfg.learning_rate,
                        cfg.epochs,
                        cfg.init,
                        seed,
                        cfg.record_every,
                        max_modes,
                    )?;
                    Ok(traj)
                })
                .collect()
        }
        Model::Analytic => analytic_curves(cfg, &ds),
    }
}

fn analytic_curves(cfg: &ExperimentConfig, ds: &Dataset) -> Result<Vec<Trajectory>> {
    let var = cfg.init.std().powi(2);
    let tau = tau_for(ds.n_datapoints(), cfg.learning_rate);
    let times = record_times(cfg.epochs, cfg.record_every);
    match cfg.task {
        Task::Xor { delta } => {
            let a0 = effective_initial_strength(cfg.hidden_widths[0], 0.5, var, var);
            [XorVariant::LinearGating, XorVariant::XorGating]
                .iter()
                .map(|&v| xor_loss_curve(delta, v, a0, tau, &times))
                .collect()
        }
        Task::Hierarchy { .. } => {
            let stats = correlation_stats(ds, None)?;
            let a0 = effective_initial_strength(cfg.pathway_width, 1.0, var, var);
            let rank = stats.rank();
            let s = &stats.svd_yx.s[..rank];
            let d = &stats.mode_variances[..rank];
            let half_trace = ds.targets.norm_squared() / (2.0 * ds.n_datapoints() as f64);
            let params: Vec<ModeParams> =
                (0..rank).map(|a| ModeParams::new(s[a], d[a], a0, tau)).collect::<Result<_>>()?;
            let mut traj = Trajectory::with_modes("analytic", "modes", (0..rank).map(|a| mode_name(0, a)).collect());
            for &t in &times {
                let m: Vec<f64> = params.iter().map(|p| linear_mode_trajectory(p, t)).collect();
                traj.push(t, modal_loss(half_trace, s, d, &m), m);
            }
            Ok(vec![traj])
        }
        Task::Contextual { contexts, .. } => {
            let a0 = effective_initial_strength(cfg.pathway_width, 1.0, var, var);
            let (common, context) = contextual_modes(ds, contexts)?;
            let common_params = ModeParams::new(common.0, common.1, a0, tau)?;
            let mut traj = Trajectory::with_modes("analytic", "contextual", vec![mode_name(0, 0), mode_name(1, 0)]);
            for &t in &times {
                let c = linear_mode_trajectory(&common_params, t);
                let k = contextual_closed_form(contexts, context.0, context.1, a0, tau, t)?;
                traj.push(t, f64::NAN, vec![c, k]);
            }
            Ok(vec![traj])
        }
    }
}

/// `(S, D)` of the leading mode of the always-on pathway and of the first
/// context pathway on the residual the always-on pathway leaves.
fn contextual_modes(ds: &Dataset, contexts: usize) -> Result<((f64, f64), (f64, f64))> {
    let preset = RelnPreset::Contextual { contexts, arity: contexts - 1 };
    let (graph, gates) = build_reln_graph(preset, ds, 1.max(ds.n_inputs()))?;
    let stats = pathway_stats(&graph, &gates, ds)?;
    let residual = residual_dataset(ds, &stats.pairs[0])?;
    let rstats = pathway_stats(&graph, &gates, &residual)?;
    let top = |pair: &crate::datasets::CorrelationPair| (pair.svd_yx.s[0], pair.mode_variances[0]);
    Ok((top(&stats.pairs[0]), top(&rstats.pairs[1])))
}

fn residual_dataset(ds: &Dataset, common: &crate::datasets::CorrelationPair) -> Result<Dataset> {
    let mut r = ds.clone();
    r.targets = common_pathway_residual(ds, common)?;
    r.name = format!("{} residual", ds.name);
    Ok(r)
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Writes `config.txt`, one CSV per named trajectory group and `summary.json`.
pub fn write_bundle<S: Serialize>(
    dir: &Path,
    config_text: &str,
    groups: &[(&str, Vec<&Trajectory>)],
    summary: &S,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_atomic(&dir.join("config.txt"), config_text.as_bytes())?;
    for (name, trajs) in groups {
        let path = dir.join(format!("{name}.csv"));
        let tmp = path.with_extension("tmp");
        write_csv(&tmp, trajs)?;
        fs::rename(&tmp, &path)?;
    }
    write_atomic(&dir.join("summary.json"), serde_json::to_string_pretty(summary)?.as_bytes())?;
    Ok(())
}

// ---------------------------------------------------------------- fig2

#[derive(Debug, Clone)]
pub struct Fig2Options {
    /// Grid of margins for the analytic scan and ReLU runs.
    pub deltas: Vec<f64>,
    /// Extra margins at which ReLU runs are compared with the analytic times.
    pub check_deltas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub hidden: usize,
    pub learning_rate: f64,
    pub init_variance: f64,
    pub epochs: usize,
    pub threshold: f64,
}

impl Default for Fig2Options {
    fn default() -> Self {
        Fig2Options {
            deltas: (0..=15).map(|i| i as f64 / 10.0).collect(),
            check_deltas: vec![0.0, 0.4, (2.0f64 / 3.0).sqrt(), 1.2],
            seeds: vec![0, 1, 2],
            hidden: 128,
            learning_rate: 0.1,
            init_variance: 4e-8 / 128.0,
            epochs: 1000,
            threshold: 0.2,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig2Row {
    pub delta: f64,
    pub analytic_linear: Option<f64>,
    pub analytic_xor: Option<f64>,
    pub analytic_min: Option<f64>,
    pub relu_times: Vec<Option<f64>>,
    /// Mean over seeds; `None` if any seed never reached the threshold.
    pub relu_mean: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig2Summary {
    pub crossover_delta: f64,
    /// Margin where the faster analytic strategy switches, interpolated on the grid.
    pub analytic_kink: Option<f64>,
    /// Grid margin of the sharpest bend in the mean ReLU time.
    pub relu_kink: Option<f64>,
    pub a0: f64,
    pub tau: f64,
    pub grid: Vec<Fig2Row>,
    pub checks: Vec<Fig2Row>,
}

pub fn fig2(opts: &Fig2Options) -> Result<(Fig2Summary, Vec<Trajectory>)> {
    let var = opts.init_variance;
    let a0 = effective_initial_strength(opts.hidden, 0.5, var, var);
    let tau = tau_for(4, opts.learning_rate);
    let row = |delta: f64| -> Result<(Fig2Row, Vec<Trajectory>)> {
        let lin = xor_time_to_loss(delta, opts.threshold, XorVariant::LinearGating, a0, tau)?;
        let xor = xor_time_to_loss(delta, opts.threshold, XorVariant::XorGating, a0, tau)?;
        let min = match (lin, xor) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        let ds = build_xor_margin(delta)?;
        let runs: Vec<Trajectory> = opts
            .seeds
            .par_iter()
            .map(|&seed| {
                let cfg =
                    ReluConfig::new(vec![opts.hidden], opts.learning_rate, opts.epochs, Init::Variance(var), seed);
                let mut t = train_relu(&ds, &cfg)?.trajectory;
                t.run_id = format!("delta={delta:.4},seed={seed}");
                Ok(t)
            })
            .collect::<Result<_>>()?;
        let relu_times: Vec<Option<f64>> = runs.iter().map(|t| time_to_criterion(t, opts.threshold)).collect();
        let relu_mean =
            relu_times.iter().copied().collect::<Option<Vec<f64>>>().map(|v| v.iter().sum::<f64>() / v.len() as f64);
        let row = Fig2Row { delta, analytic_linear: lin, analytic_xor: xor, analytic_min: min, relu_times, relu_mean };
        Ok((row, runs))
    };
    let mut trajs = Vec::new();
    let mut grid = Vec::new();
    for &d in &opts.deltas {
        let (r, t) = row(d)?;
        grid.push(r);
        trajs.extend(t);
    }
    let mut checks = Vec::new();
    for &d in &opts.check_deltas {
        let (r, t) = row(d)?;
        checks.push(r);
        trajs.extend(t);
    }
    let analytic_kink = strategy_switch(&grid);
    let relu_kink = sharpest_bend(&grid.iter().map(|r| (r.delta, r.relu_mean)).collect::<Vec<_>>());
    let summary = Fig2Summary { crossover_delta: crossover_delta(), analytic_kink, relu_kink, a0, tau, grid, checks };
    Ok((summary, trajs))
}

/// First grid interval where linear gating becomes at least as fast as
/// xor gating, located by linear interpolation of the time difference.
fn strategy_switch(grid: &[Fig2Row]) -> Option<f64> {
    let gap = |r: &Fig2Row| match (r.analytic_linear, r.analytic_xor) {
        (Some(l), Some(x)) => Some(l - x),
        (None, Some(_)) => Some(f64::INFINITY),
        (Some(_), None) => Some(f64::NEG_INFINITY),
        (None, None) => None,
    };
    for w in grid.windows(2) {
        let (Some(g0), Some(g1)) = (gap(&w[0]), gap(&w[1])) else { continue };
        if g0 > 0.0 && g1 <= 0.0 {
            if !g0.is_finite() || !g1.is_finite() {
                return Some(w[1].delta);
            }
            return Some(w[0].delta + (w[1].delta - w[0].delta) * g0 / (g0 - g1));
        }
    }
    None
}

/// Interior grid point with the most negative second difference.
fn sharpest_bend(points: &[(f64, Option<f64>)]) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for w in points.windows(3) {
        let (Some(a), Some(b), Some(c)) = (w[0].1, w[1].1, w[2].1) else { continue };
        let curvature = a - 2.0 * b + c;
        if best.is_none_or(|(_, k)| curvature < k) {
            best = Some((w[1].0, curvature));
        }
    }
    best.map(|(d, _)| d)
}

// ---------------------------------------------------------------- fig4

#[derive(Debug, Clone)]
pub struct Fig4Options {
    pub task: Task,
    pub relu: ReluConfig,
    pub pathway_width: usize,
    pub compare_epochs: Vec<usize>,
}

impl Default for Fig4Options {
    fn default() -> Self {
        let cfg = ExperimentConfig::preset("context3").expect("built-in preset");
        let mut relu = relu_config(&cfg, cfg.seeds[0]);
        relu.record_every = 10;
        Fig4Options { task: cfg.task, relu, pathway_width: cfg.pathway_width, compare_epochs: vec![2000, 5000, 8000] }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig4Summary {
    /// Summed squared loss-curve distance to the ReLU run.
    pub reln_distance: f64,
    pub single_distance: f64,
    pub distance_ratio: f64,
    /// `(epoch, max |ReLU - ReLN| over outputs)`.
    pub output_max_diff: Vec<(usize, f64)>,
    pub final_loss_relu: f64,
    pub final_loss_reln: f64,
    pub final_loss_single: f64,
    /// Gating patterns of the converged ReLU hidden layer.
    pub census: PatternCensus,
    /// Off-diagonal mass of each converged ReLN pathway in its own mode basis.
    pub reln_alignment: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Fig4Result {
    pub summary: Fig4Summary,
    pub relu: Trajectory,
    pub reln: Trajectory,
    pub single: Trajectory,
}

pub fn fig4(opts: &Fig4Options) -> Result<Fig4Result> {
    let ds = opts.task.build()?;
    let contexts = ds.num_contexts();
    let mut relu_cfg = opts.relu.clone();
    relu_cfg.output_epochs = opts.compare_epochs.clone();
    let relu_run = train_relu(&ds, &relu_cfg)?;
    let active = relu_run.state.activity(&ds.inputs, 0);
    let census = gating_pattern_census(&active, &ds)?;

    let gated = |arity: usize| -> Result<(Trajectory, GatedGraph, GatingTable)> {
        let preset = RelnPreset::Contextual { contexts, arity };
        let (mut graph, gates) = build_reln_graph(preset, &ds, opts.pathway_width)?;
        let mut cfg = TrainConfig::new(relu_cfg.learning_rate, relu_cfg.epochs);
        cfg.init = Some(relu_cfg.init);
        cfg.seed = relu_cfg.seed;
        cfg.record_every = relu_cfg.record_every;
        cfg.output_epochs = opts.compare_epochs.clone();
        let mut traj = train(&mut graph, &gates, &ds, &cfg)?;
        traj.run_id = preset.to_string();
        Ok((traj, graph, gates))
    };
    let (reln, graph, gates) = gated(contexts - 1)?;
    let (single, _, _) = gated(1)?;
    let relu = relu_run.trajectory;

    let reln_distance = compare(&relu, &reln, CompareMetric::L2Sum)?;
    let single_distance = compare(&relu, &single, CompareMetric::L2Sum)?;
    let mut output_max_diff = Vec::new();
    for &e in &opts.compare_epochs {
        if let (Some(a), Some(b)) = (relu.output_at(e), reln.output_at(e)) {
            output_max_diff.push((e, linalg::max_abs_diff(a, b)));
        }
    }
    let stats = pathway_stats(&graph, &gates, &ds)?;
    let reln_alignment = graph
        .paths()
        .iter()
        .enumerate()
        .map(|(p, path)| {
            let svd = stats.pairs[p].svd_yx.truncate(stats.pairs[p].rank());
            alignment_diagnostic(&graph.path_weight(path), &svd.u, &svd.v)
        })
        .collect::<Result<_>>()?;
    let summary = Fig4Summary {
        reln_distance,
        single_distance,
        distance_ratio: single_distance / reln_distance,
        output_max_diff,
        final_loss_relu: relu.final_loss().unwrap_or(f64::NAN),
        final_loss_reln: reln.final_loss().unwrap_or(f64::NAN),
        final_loss_single: single.final_loss().unwrap_or(f64::NAN),
        census,
        reln_alignment,
    };
    Ok(Fig4Result { summary, relu, reln, single })
}

// ---------------------------------------------------------------- fig5

#[derive(Debug, Clone)]
pub struct Fig5Options {
    pub contexts: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub init: Init,
    pub pathway_width: usize,
    pub seed: u64,
    pub record_every: usize,
}

impl Default for Fig5Options {
    fn default() -> Self {
        Fig5Options {
            contexts: vec![3, 4, 5],
            learning_rate: 0.001,
            epochs: 8000,
            init: Init::Std(1e-7),
            pathway_width: 100,
            seed: 0,
            record_every: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig5Row {
    pub contexts: usize,
    pub common_s: f64,
    pub common_d: f64,
    pub context_s: f64,
    pub context_d: f64,
    pub common_fixed_point: f64,
    pub context_fixed_point: f64,
    /// Calibrated initial strengths (half-way crossing of the simulation).
    pub common_b0: f64,
    pub context_b0: Vec<f64>,
    /// Max deviation from the closed form relative to the fixed point.
    pub common_max_dev: f64,
    pub context_max_dev: Vec<f64>,
    pub final_loss: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig5Summary {
    pub tau_note: String,
    pub rows: Vec<Fig5Row>,
}

/// Trains `contextual(C, C-1)` on identical context blocks and compares the
/// leading mode of every pathway with its closed form. Each curve's initial
/// strength is calibrated so that it passes half its fixed point when the
/// simulation does.
pub fn fig5(opts: &Fig5Options) -> Result<(Fig5Summary, Vec<Trajectory>)> {
    let mut rows = Vec::new();
    let mut trajs = Vec::new();
    for &contexts in &opts.contexts {
        let ds = crate::datasets::contextual_task(contexts, crate::datasets::DEFAULT_ITEMS, None)?;
        let tau = tau_for(ds.n_datapoints(), opts.learning_rate);
        let preset = RelnPreset::Contextual { contexts, arity: contexts - 1 };
        let (mut graph, gates) = build_reln_graph(preset, &ds, opts.pathway_width)?;
        let stats = pathway_stats(&graph, &gates, &ds)?;
        let residual = residual_dataset(&ds, &stats.pairs[0])?;
        let rstats = pathway_stats(&graph, &gates, &residual)?;
        let mut probes = vec![ModeProbe::from_stats(&stats, 0, 1)];
        probes.extend((1..graph.paths().len()).map(|p| ModeProbe::from_stats(&rstats, p, 1)));
        let mut cfg = TrainConfig::new(opts.learning_rate, opts.epochs);
        cfg.init = Some(opts.init);
        cfg.seed = opts.seed;
        cfg.record_every = opts.record_every;
        cfg.probes = probes;
        let mut sim = train(&mut graph, &gates, &ds, &cfg)?;
        sim.run_id = format!("C={contexts}");

        let (common_s, common_d) = (stats.pairs[0].svd_yx.s[0], stats.pairs[0].mode_variances[0]);
        let (context_s, context_d) = (rstats.pairs[1].svd_yx.s[0], rstats.pairs[1].mode_variances[0]);
        let common_fixed = common_s / common_d;
        let context_fixed = contextual_fixed_point(contexts, context_s, context_d);
        let times = sim.epochs.clone();

        let mut closed = Trajectory::with_modes("analytic", &format!("C={contexts}"), sim.mode_names.clone());
        let calibrate = |series: &[f64], s: f64, fixed: f64| -> Result<f64> {
            let t_half = crossing(&times, series, fixed / 2.0).ok_or_else(|| {
                Error::Domain(format!("simulated mode never reaches half its fixed point {fixed} (C = {contexts})"))
            })?;
            Ok(anchored_initial_strength(s, fixed, tau, t_half))
        };
        let common_series = sim.mode_series(0);
        let common_b0 = calibrate(&common_series, common_s, common_fixed)?;
        let common_params = ModeParams::new(common_s, common_d, common_b0, tau)?;
        let mut context_b0 = Vec::new();
        for p in 1..sim.mode_names.len() {
            context_b0.push(calibrate(&sim.mode_series(p), context_s, context_fixed)?);
        }
        for &t in &times {
            let mut m = vec![linear_mode_trajectory(&common_params, t)];
            for &b0 in &context_b0 {
                m.push(contextual_closed_form(contexts, context_s, context_d, b0, tau, t)?);
            }
            closed.push(t, f64::NAN, m);
        }
        let max_dev = |m: usize, fixed: f64| {
            sim.mode_series(m)
                .iter()
                .zip(closed.mode_series(m))
                .map(|(a, b)| (a - b).abs() / fixed)
                .fold(0.0f64, f64::max)
        };
        rows.push(Fig5Row {
            contexts,
            common_s,
            common_d,
            context_s,
            context_d,
            common_fixed_point: common_fixed,
            context_fixed_point: context_fixed,
            common_b0,
            context_max_dev: (1..sim.mode_names.len()).map(|m| max_dev(m, context_fixed)).collect(),
            common_max_dev: max_dev(0, common_fixed),
            context_b0,
            final_loss: sim.final_loss().unwrap_or(f64::NAN),
        });
        trajs.push(sim);
        trajs.push(closed);
    }
    let tau_note = "time in epochs, tau = 1/(N lr)".to_string();
    Ok((Fig5Summary { tau_note, rows }, trajs))
}

/// First time `series` reaches `level` from below, linearly interpolated.
fn crossing(times: &[f64], series: &[f64], level: f64) -> Option<f64> {
    for i in 1..series.len() {
        if series[i - 1] < level && series[i] >= level {
            let f = (level - series[i - 1]) / (series[i] - series[i - 1]);
            return Some(times[i - 1] + f * (times[i] - times[i - 1]));
        }
    }
    None
}

// ---------------------------------------------------------------- fig7

#[derive(Debug, Clone)]
pub struct Fig7Options {
    pub task: Task,
    pub relu: ReluConfig,
    pub runs: usize,
    pub gdln_runs: usize,
    pub pathway_width: usize,
    /// Stop the ReLU ensemble once the pooled all-active fraction can no
    /// longer reach this value even if every remaining unit qualified.
    pub stop_below: Option<f64>,
    pub plateau_window: f64,
    pub plateau_log_tol: f64,
    pub plateau_floor: f64,
}

impl Default for Fig7Options {
    fn default() -> Self {
        let cfg = ExperimentConfig::preset("depth2").expect("built-in preset");
        let relu = relu_config(&cfg, 0);
        Fig7Options {
            task: cfg.task,
            plateau_window: cfg.epochs as f64 / 40.0,
            relu,
            runs: 100,
            gdln_runs: 5,
            pathway_width: cfg.pathway_width,
            stop_below: Some(0.95),
            plateau_log_tol: 0.05,
            plateau_floor: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig7Summary {
    pub runs_requested: usize,
    pub runs_completed: usize,
    pub stopped_early: bool,
    /// Per run: first-layer units active on every datapoint / units active on any.
    pub all_active: Vec<(usize, usize)>,
    pub pooled_all_active_fraction: f64,
    /// Upper bound on the pooled fraction had all requested runs completed.
    pub pooled_fraction_bound: f64,
    pub stereotypical_relu: usize,
    pub stereotypical_gdln: usize,
    pub relu_plateaus: usize,
    pub gdln_plateaus: usize,
    pub relu_final_loss: f64,
    pub gdln_final_loss: f64,
    pub diverged_runs: Vec<u64>,
}

pub fn fig7(opts: &Fig7Options) -> Result<(Fig7Summary, Vec<Trajectory>, Vec<Trajectory>)> {
    let ds = opts.task.build()?;
    let width = *opts.relu.hidden_widths.first().ok_or_else(|| Error::InvalidParameter("no hidden layer".into()))?;
    let mut relu_runs = Vec::new();
    let mut all_active = Vec::new();
    let mut diverged = Vec::new();
    let (mut active_total, mut alive_total) = (0usize, 0usize);
    let mut stopped_early = false;
    let mut bound = 1.0;
    for i in 0..opts.runs {
        let mut cfg = opts.relu.clone();
        cfg.seed = opts.relu.seed + i as u64;
        match train_relu(&ds, &cfg) {
            Ok(run) => {
                let act = run.state.activity(&ds.inputs, 0);
                let alive = (0..act.nrows()).filter(|&r| act.row(r).iter().any(|&v| v > 0.5)).count();
                let all = (0..act.nrows()).filter(|&r| act.row(r).iter().all(|&v| v > 0.5)).count();
                all_active.push((all, alive));
                active_total += all;
                alive_total += alive;
                relu_runs.push(run.trajectory);
            }
            Err(Error::Diverged { .. }) => diverged.push(cfg.seed),
            Err(e) => return Err(e),
        }
        let remaining = (opts.runs - i - 1) * width;
        bound = (active_total + remaining) as f64 / ((alive_total + remaining) as f64).max(1.0);
        if let Some(target) = opts.stop_below {
            if bound < target && i + 1 < opts.runs {
                stopped_early = true;
                break;
            }
        }
    }
    let gdln_runs: Vec<Trajectory> = (0..opts.gdln_runs as u64)
        .into_par_iter()
        .map(|seed| {
            let (t, _, _) = train_gdln(
                RelnPreset::Depth2Contextual { contexts: ds.num_contexts() },
                &ds,
                opts.pathway_width,
                opts.relu.learning_rate,
                opts.relu.epochs,
                opts.relu.init,
                opts.relu.seed + seed,
                opts.relu.record_every,
                0,
            )?;
            Ok(t)
        })
        .collect::<Result<_>>()?;
    let pick = |runs: &[Trajectory]| -> Result<usize> {
        match runs.len() {
            0 => Err(Error::InvalidParameter("no completed runs".into())),
            1 => Ok(0),
            _ => select_stereotypical_run(&runs.iter().map(|t| t.loss.clone()).collect::<Vec<_>>()),
        }
    };
    let sr = pick(&relu_runs)?;
    let sg = pick(&gdln_runs)?;
    let plateaus = |t: &Trajectory| {
        count_plateaus(&t.epochs, &t.loss, opts.plateau_window, opts.plateau_log_tol, opts.plateau_floor)
    };
    let summary = Fig7Summary {
        runs_requested: opts.runs,
        runs_completed: relu_runs.len(),
        stopped_early,
        pooled_all_active_fraction: if alive_total == 0 { 0.0 } else { active_total as f64 / alive_total as f64 },
        pooled_fraction_bound: bound,
        all_active,
        stereotypical_relu: sr,
        stereotypical_gdln: sg,
        relu_plateaus: plateaus(&relu_runs[sr]),
        gdln_plateaus: plateaus(&gdln_runs[sg]),
        relu_final_loss: relu_runs[sr].final_loss().unwrap_or(f64::NAN),
        gdln_final_loss: gdln_runs[sg].final_loss().unwrap_or(f64::NAN),
        diverged_runs: diverged,
    };
    Ok((summary, relu_runs, gdln_runs))
}

// ---------------------------------------------------------------- fig8

#[derive(Debug, Clone)]
pub struct Fig8Options {
    pub task: Task,
    pub relu: ReluConfig,
    pub runs: usize,
    pub sample_every: usize,
    pub k_range: Vec<usize>,
    pub pathway_width: usize,
    pub kmeans_seed: u64,
}

impl Default for Fig8Options {
    fn default() -> Self {
        let cfg = ExperimentConfig::preset("context3").expect("built-in preset");
        Fig8Options {
            task: cfg.task,
            relu: relu_config(&cfg, 0),
            runs: 5,
            sample_every: cfg.sample_every,
            k_range: (1..=6).collect(),
            pathway_width: cfg.pathway_width,
            kmeans_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig8Summary {
    pub stack_rows: usize,
    pub elbow: Vec<ElbowPoint>,
    pub selected_k: Option<usize>,
    /// `mse(k-1) - mse(k)` for each k after the first.
    pub drops: Vec<(usize, f64)>,
    pub reln_patterns: Vec<Vec<f64>>,
    /// Whether the binarized k-cluster gates equal the contextual ReLN table, for k = contexts + 1.
    pub recovered: bool,
}

pub fn fig8(opts: &Fig8Options) -> Result<Fig8Summary> {
    let ds = opts.task.build()?;
    let mut cfg = opts.relu.clone();
    cfg.output_epochs = (0..=cfg.epochs).step_by(opts.sample_every.max(1)).collect();
    let (stack, runs) = collect_samples(&ds, &cfg, opts.runs, opts.sample_every)?;
    let mut reference = ElbowReference::from_runs(&runs, &cfg, opts.pathway_width);
    reference.kmeans_seed = opts.kmeans_seed;
    let mut elbow = elbow_scan(&ds, &stack, &opts.k_range, &reference)?;
    for p in &mut elbow {
        if let Some(c) = p.clustering.as_mut() {
            c.assignments.clear();
        }
    }
    let drops = elbow.windows(2).filter_map(|w| Some((w[1].k, w[0].imitation_mse? - w[1].imitation_mse?))).collect();
    let target = contextual_table(&ds)?;
    let k_target = target.len();
    let recovered = elbow
        .iter()
        .find(|p| p.k == k_target)
        .and_then(|p| p.patterns.as_ref())
        .is_some_and(|g| same_patterns(&g.patterns, &target));
    Ok(Fig8Summary {
        stack_rows: stack.len(),
        selected_k: select_elbow(&elbow, 5.0),
        elbow,
        drops,
        reln_patterns: target,
        recovered,
    })
}

/// The contextual ReLN gating table (always-on plus one pathway per
/// `(C-1)`-subset of contexts).
pub fn contextual_table(ds: &Dataset) -> Result<Vec<Vec<f64>>> {
    let c = ds.num_contexts();
    pathway_patterns(RelnPreset::Contextual { contexts: c, arity: c - 1 }, ds)
}

#[derive(Debug, Clone, Serialize)]
pub struct RecoveryOutcome {
    pub seed: u64,
    pub clustering: GateClustering,
    pub gates: BinarizedGates,
    pub matches: bool,
}

/// One repetition of gate recovery: fresh ReLU runs seeded from `seed`,
/// k-means with `k = C + 1`, binarized and compared with the ReLN table.
pub fn gate_recovery(opts: &Fig8Options, seed: u64) -> Result<RecoveryOutcome> {
    let ds = opts.task.build()?;
    let mut cfg = opts.relu.clone();
    cfg.seed = seed * opts.runs as u64;
    let (stack, _) = collect_samples(&ds, &cfg, opts.runs, opts.sample_every)?;
    let target = contextual_table(&ds)?;
    let mut clustering = kmeans(&stack, target.len(), seed, 300)?;
    clustering.assignments.clear();
    let gates = binarize_centroids(&clustering, DEFAULT_THRESHOLD)?;
    let matches = same_patterns(&gates.patterns, &target);
    Ok(RecoveryOutcome { seed, clustering, gates, matches })
}

/// Time for the loss to reach `threshold`, from a trajectory or `None`.
pub fn loss_time(traj: &Trajectory, threshold: f64) -> Option<f64> {
    time_to_criterion(traj, threshold)
}

/// Loss of `traj` resampled at `t`.
pub fn loss_at(traj: &Trajectory, t: f64) -> Option<f64> {
    interpolate(&traj.epochs, &traj.loss, t)
}
