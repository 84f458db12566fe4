#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use gdln::config::ExperimentConfig;
use gdln::datasets::{correlation_stats, write_dataset};
use gdln::experiments::{
    fig2, fig4, fig5, fig7, fig8, gate_recovery, run_experiment, write_bundle, Fig2Options, Fig4Options, Fig5Options,
    Fig7Options, Fig8Options,
};
use gdln::gdln::build_reln_graph;
use gdln::trajectory::{compare, read_csv, write_csv, CompareMetric, Trajectory};
use gdln::verify::{datapoint_removal_check, gradient_check, interlacing_check, GradientCheckOptions, INTERLACING_TOL};
use gdln::Error;

const EXIT_DIVERGED: u8 = 2;
const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "gdln", version, about = "Gated deep linear network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Common {
    /// Preset name (xor, hierarchy, context3..context6, depth2).
    #[arg(long)]
    preset: Option<String>,
    /// key = value config file with an optional [overrides] section.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Single seed, replacing the configured seed list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` settings applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn config(&self, default_preset: &str) -> gdln::Result<ExperimentConfig> {
        let preset = self.preset.as_deref().unwrap_or(default_preset);
        let mut cfg = ExperimentConfig::preset(preset)?;
        if let Some(path) = &self.config {
            cfg.apply_text(&fs::read_to_string(path)?)?;
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Parse(format!("expected key=value, got {kv:?}")))?;
            cfg.set(k.trim(), v)?;
        }
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Figure {
    Fig2,
    Fig4,
    Fig5,
    Fig7,
    Fig8,
}

#[derive(Subcommand)]
enum Command {
    /// Write a preset's dataset (inputs, targets, metadata).
    Dataset {
        #[command(flatten)]
        common: Common,
    },
    /// Train or evaluate the configured model and write its trajectories.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Regenerate the data behind one figure.
    Reproduce {
        figure: Figure,
        #[command(flatten)]
        common: Common,
        /// Fig7: number of ReLU runs.
        #[arg(long, default_value_t = 100)]
        runs: usize,
    },
    /// Compare the first series of two trajectory CSV files.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// l2_sum, final_loss or time_to(<threshold>).
        #[arg(long, default_value = "l2_sum")]
        metric: String,
        /// Pick the series with this run id in the first file.
        #[arg(long)]
        run_a: Option<String>,
        #[arg(long)]
        run_b: Option<String>,
    },
    /// Cluster sampled ReLU gating and compare with the contextual gating table.
    FindGates {
        #[command(flatten)]
        common: Common,
        /// ReLU trainings per repetition.
        #[arg(long, default_value_t = 5)]
        runs: usize,
        /// Number of seeded repetitions.
        #[arg(long, default_value_t = 1)]
        repeats: u64,
    },
    /// Run the structural checks (interlacing, datapoint removal, gradients).
    Verify {
        #[command(flatten)]
        common: Common,
        /// Random submatrix draws for the interlacing check.
        #[arg(long, default_value_t = 200)]
        draws: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Diverged { .. } => ExitCode::from(EXIT_DIVERGED),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

/// Returns `Ok(false)` when a check ran but failed.
fn dispatch(command: Command) -> gdln::Result<bool> {
    match command {
        Command::Dataset { common } => {
            let cfg = common.config("context3")?;
            let ds = cfg.task.build()?;
            write_dataset(&ds, &cfg.out)?;
            println!("wrote {} ({}x{} inputs) to {}", ds.name, ds.n_inputs(), ds.n_datapoints(), cfg.out.display());
            Ok(true)
        }
        Command::Run { common } => {
            let cfg = common.config("context3")?;
            fs::create_dir_all(&cfg.out)?;
            let path = cfg.out.join("trajectory.csv");
            let trajs = run_experiment(&cfg)?;
            if cfg.epochs == 0 {
                write_csv(&path, &[])?;
            } else {
                write_csv(&path, &trajs.iter().collect::<Vec<_>>())?;
            }
            fs::write(cfg.out.join("config.txt"), cfg.to_text())?;
            for t in &trajs {
                println!("{} {}: final loss {:e}", t.source, t.run_id, t.final_loss().unwrap_or(f64::NAN));
            }
            Ok(true)
        }
        Command::Reproduce { figure, common, runs } => reproduce(figure, &common, runs),
        Command::Compare { a, b, metric, run_a, run_b } => {
            let metric: CompareMetric = metric.parse()?;
            let ta = pick_series(&a, run_a.as_deref())?;
            let tb = pick_series(&b, run_b.as_deref())?;
            println!("{}", compare(&ta, &tb, metric)?);
            Ok(true)
        }
        Command::FindGates { common, runs, repeats } => {
            let cfg = common.config("context3")?;
            let mut opts = Fig8Options { task: cfg.task, runs, ..Fig8Options::default() };
            opts.relu.learning_rate = cfg.learning_rate;
            opts.relu.epochs = cfg.epochs;
            opts.relu.init = cfg.init;
            opts.relu.hidden_widths = cfg.hidden_widths.clone();
            opts.sample_every = cfg.sample_every;
            let first = cfg.seeds[0];
            let outcomes =
                (first..first + repeats).map(|s| gate_recovery(&opts, s)).collect::<gdln::Result<Vec<_>>>()?;
            let matched = outcomes.iter().filter(|o| o.matches).count();
            for o in &outcomes {
                println!(
                    "seed {}: k={} recovered={} patterns={:?}",
                    o.seed, o.clustering.k, o.matches, o.gates.patterns
                );
            }
            println!("{matched}/{} repetitions recovered the contextual gating table", outcomes.len());
            write_json(&cfg.out, "find_gates.json", &outcomes)?;
            Ok(true)
        }
        Command::Verify { common, draws } => verify(&common.config("context3")?, draws),
    }
}

fn pick_series(path: &Path, run_id: Option<&str>) -> gdln::Result<Trajectory> {
    let all = read_csv(path)?;
    let found = match run_id {
        Some(id) => all.into_iter().find(|t| t.run_id == id),
        None => all.into_iter().next(),
    };
    found.ok_or_else(|| Error::InvalidParameter(format!("no matching series in {}", path.display())))
}

fn write_json<S: Serialize>(dir: &Path, name: &str, value: &S) -> gdln::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn reproduce(figure: Figure, common: &Common, runs: usize) -> gdln::Result<bool> {
    let default = match figure {
        Figure::Fig2 => "xor",
        Figure::Fig7 => "depth2",
        _ => "context3",
    };
    let cfg = common.config(default)?;
    let out = cfg.out.clone();
    let text = cfg.to_text();
    match figure {
        Figure::Fig2 => {
            let opts = Fig2Options {
                seeds: cfg.seeds.clone(),
                epochs: cfg.epochs,
                learning_rate: cfg.learning_rate,
                ..Fig2Options::default()
            };
            let (summary, trajs) = fig2(&opts)?;
            write_bundle(&out, &text, &[("relu", trajs.iter().collect())], &summary)?;
            println!("kink {:?} (crossover {})", summary.analytic_kink, summary.crossover_delta);
        }
        Figure::Fig4 => {
            let mut opts = Fig4Options { task: cfg.task, pathway_width: cfg.pathway_width, ..Fig4Options::default() };
            opts.relu.seed = cfg.seeds[0];
            opts.relu.epochs = cfg.epochs;
            let r = fig4(&opts)?;
            write_bundle(&out, &text, &[("loss", vec![&r.relu, &r.reln, &r.single])], &r.summary)?;
            println!("distance ratio {:.3}", r.summary.distance_ratio);
        }
        Figure::Fig5 => {
            let opts = Fig5Options { seed: cfg.seeds[0], ..Fig5Options::default() };
            let (summary, trajs) = fig5(&opts)?;
            write_bundle(&out, &text, &[("modes", trajs.iter().collect())], &summary)?;
            for r in &summary.rows {
                println!("C={}: common {:.4}, contextual {:?}", r.contexts, r.common_max_dev, r.context_max_dev);
            }
        }
        Figure::Fig7 => {
            let mut opts = Fig7Options { runs, ..Fig7Options::default() };
            opts.relu.seed = cfg.seeds[0];
            let (summary, relu, gated) = fig7(&opts)?;
            write_bundle(&out, &text, &[("relu", relu.iter().collect()), ("gdln", gated.iter().collect())], &summary)?;
            println!(
                "pooled all-active fraction {:.4} over {} runs",
                summary.pooled_all_active_fraction, summary.runs_completed
            );
        }
        Figure::Fig8 => {
            let mut opts = Fig8Options { task: cfg.task, ..Fig8Options::default() };
            opts.relu.seed = cfg.seeds[0];
            let summary = fig8(&opts)?;
            write_bundle(&out, &text, &[], &summary)?;
            println!("selected k {:?}", summary.selected_k);
        }
    }
    println!("bundle written to {}", out.display());
    Ok(true)
}

#[derive(Serialize)]
struct VerifyReport {
    interlacing_draws: usize,
    interlacing_failures: usize,
    removal: Option<bool>,
    gradient_max_relative_error: f64,
}

fn verify(cfg: &ExperimentConfig, draws: usize) -> gdln::Result<bool> {
    let ds = cfg.task.build()?;
    let m = correlation_stats(&ds, None)?.sigma_yx;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seeds[0]);
    let mut failures = 0;
    for _ in 0..draws {
        let nr = rng.gen_range(1..=m.nrows());
        let nc = rng.gen_range(1..=m.ncols());
        let rows = sample(&mut rng, m.nrows(), nr).into_vec();
        let cols = sample(&mut rng, m.ncols(), nc).into_vec();
        if !interlacing_check(&m, &rows, &cols, INTERLACING_TOL)?.holds {
            failures += 1;
        }
    }
    let removal = match datapoint_removal_check(&ds, INTERLACING_TOL) {
        Ok(r) => Some(r.holds),
        Err(Error::Inapplicable(why)) => {
            println!("datapoint removal: skipped ({why})");
            None
        }
        Err(e) => return Err(e),
    };
    let (graph, gates) = build_reln_graph(cfg.reln_preset()?, &ds, cfg.pathway_width.min(16))?;
    let mut opts = GradientCheckOptions::new(2, 1e-6);
    opts.max_coords = Some(500);
    opts.seed = cfg.seeds[0];
    let grad = gradient_check(&graph, &gates, &ds, &opts)?;
    let report = VerifyReport {
        interlacing_draws: draws,
        interlacing_failures: failures,
        removal,
        gradient_max_relative_error: grad.max_relative_error,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(failures == 0 && removal != Some(false) && grad.max_relative_error < 1e-5)
}
