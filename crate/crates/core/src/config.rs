//! Experiment configuration: built-in presets plus a flat `key = value` file
//! format whose optional `[overrides]` section is applied last.
//!
//! ```text
//! preset = context3
//! model = gdln
//! reln = contextual(3,2)
//!
//! [overrides]
//! epochs = 2000
//! seeds = 0,1,2
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::datasets::{build_hierarchy_dataset, build_xor_margin, contextual_task, Dataset, DEFAULT_ITEMS};
use crate::error::{Error, Result};
use crate::gdln::{Init, RelnPreset};

/// Leaf-order permutation seed of the contextual presets.
pub const CONTEXT_PERMUTE_SEED: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Task {
    Xor {
        delta: f64,
    },
    Hierarchy {
        items: usize,
    },
    /// `permuted` shuffles each context block's leaf order with [`CONTEXT_PERMUTE_SEED`].
    Contextual {
        contexts: usize,
        items: usize,
        permuted: bool,
    },
}

impl Task {
    pub fn build(&self) -> Result<Dataset> {
        match *self {
            Task::Xor { delta } => build_xor_margin(delta),
            Task::Hierarchy { items } => build_hierarchy_dataset(items),
            Task::Contextual { contexts, items, permuted } => {
                contextual_task(contexts, items, permuted.then_some(CONTEXT_PERMUTE_SEED))
            }
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Task::Xor { delta } => write!(f, "xor({delta})"),
            Task::Hierarchy { items } => write!(f, "hierarchy({items})"),
            Task::Contextual { contexts, items, permuted } => {
                write!(f, "context{contexts}")?;
                match (items, permuted) {
                    (DEFAULT_ITEMS, true) => Ok(()),
                    (DEFAULT_ITEMS, false) => write!(f, "(identical)"),
                    (_, true) => write!(f, "({items})"),
                    (_, false) => write!(f, "({items},identical)"),
                }
            }
        }
    }
}

/// `xor`, `xor(0.5)`, `hierarchy`, `hierarchy(16)`, `context3`, `context3(identical)`, `context4(8,identical)`.
impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::UnknownPreset(s.to_string());
        let (head, args) = match s.find('(') {
            Some(i) => {
                let inner = s[i + 1..].strip_suffix(')').ok_or_else(bad)?;
                (&s[..i], inner.split(',').map(str::trim).collect::<Vec<_>>())
            }
            None => (s, Vec::new()),
        };
        match head {
            "xor" => match args[..] {
                [] => Ok(Task::Xor { delta: 1.0 }),
                [d] => Ok(Task::Xor { delta: d.parse().map_err(|_| bad())? }),
                _ => Err(bad()),
            },
            "hierarchy" => match args[..] {
                [] => Ok(Task::Hierarchy { items: DEFAULT_ITEMS }),
                [n] => Ok(Task::Hierarchy { items: n.parse().map_err(|_| bad())? }),
                _ => Err(bad()),
            },
            _ => {
                let contexts: usize = head.strip_prefix("context").and_then(|c| c.parse().ok()).ok_or_else(bad)?;
                let mut items = DEFAULT_ITEMS;
                let mut permuted = true;
                for a in args {
                    if a == "identical" {
                        permuted = false;
                    } else {
                        items = a.parse().map_err(|_| bad())?;
                    }
                }
                Ok(Task::Contextual { contexts, items, permuted })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Relu,
    Gdln,
    Analytic,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Relu => "relu",
            Model::Gdln => "gdln",
            Model::Analytic => "analytic",
        })
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "relu" => Ok(Model::Relu),
            "gdln" => Ok(Model::Gdln),
            "analytic" => Ok(Model::Analytic),
            other => Err(Error::Parse(format!("unknown model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: String,
    pub task: Task,
    pub model: Model,
    /// Gated network for `model = gdln`; `None` picks the task's default.
    pub reln: Option<RelnPreset>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub init: Init,
    /// ReLU hidden layer widths.
    pub hidden_widths: Vec<usize>,
    /// Hidden units per gated pathway.
    pub pathway_width: usize,
    pub seeds: Vec<u64>,
    pub sample_every: usize,
    pub record_every: usize,
    pub out: PathBuf,
}

pub const PRESETS: &[&str] = &["xor", "hierarchy", "context3", "context4", "context5", "context6", "depth2"];

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<ExperimentConfig> {
        let base = |task: Task| ExperimentConfig {
            preset: name.to_string(),
            task,
            model: Model::Relu,
            reln: None,
            learning_rate: 0.001,
            epochs: 8000,
            init: Init::Std(1e-7),
            hidden_widths: vec![700],
            pathway_width: 100,
            seeds: vec![0],
            sample_every: 100,
            record_every: 10,
            out: PathBuf::from("out"),
        };
        let cfg = match name {
            // lr 0.1 with N = 4 gives 1/tau = 0.4
            "xor" => ExperimentConfig {
                learning_rate: 0.1,
                epochs: 1000,
                init: Init::Variance(4e-8 / 128.0),
                hidden_widths: vec![128],
                pathway_width: 32,
                record_every: 1,
                ..base(Task::Xor { delta: 1.0 })
            },
            "hierarchy" => ExperimentConfig {
                model: Model::Gdln,
                reln: Some(RelnPreset::Linear),
                init: Init::Std(1e-3),
                epochs: 6000,
                hidden_widths: vec![1000],
                pathway_width: 1000,
                ..base(Task::Hierarchy { items: DEFAULT_ITEMS })
            },
            "depth2" => ExperimentConfig {
                epochs: 20000,
                init: Init::Std(1e-3),
                hidden_widths: vec![700, 700],
                pathway_width: 350,
                reln: Some(RelnPreset::Depth2Contextual { contexts: 3 }),
                record_every: 50,
                ..base(Task::Contextual { contexts: 3, items: DEFAULT_ITEMS, permuted: true })
            },
            _ => match name.parse::<Task>() {
                Ok(task @ Task::Contextual { .. }) => base(task),
                _ => return Err(Error::UnknownPreset(name.to_string())),
            },
        };
        Ok(cfg)
    }

    /// The gated network used for `model = gdln`.
    pub fn reln_preset(&self) -> Result<RelnPreset> {
        if let Some(r) = self.reln {
            return Ok(r);
        }
        Ok(match self.task {
            Task::Xor { .. } => RelnPreset::XorLinear,
            Task::Hierarchy { .. } => RelnPreset::Linear,
            Task::Contextual { contexts, .. } => RelnPreset::Contextual { contexts, arity: contexts - 1 },
        })
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Parse(format!("{key}: {what} {value:?}"));
        let num = |v: &str| v.trim().parse::<f64>().map_err(|_| bad("not a number:"));
        let int = |v: &str| v.trim().parse::<usize>().map_err(|_| bad("not a nonnegative integer:"));
        let list = |v: &str| -> Result<Vec<usize>> { v.split(',').map(int).collect() };
        match key {
            "preset" => {
                let keep_out = self.out.clone();
                *self = ExperimentConfig::preset(value.trim())?;
                self.out = keep_out;
            }
            "task" => self.task = value.parse()?,
            "model" => self.model = value.parse()?,
            "reln" => self.reln = Some(value.parse()?),
            "learning_rate" => self.learning_rate = num(value)?,
            "epochs" => self.epochs = int(value)?,
            "init_scale" => self.init = Init::Std(num(value)?),
            "init_variance" => self.init = Init::Variance(num(value)?),
            "hidden_widths" => self.hidden_widths = list(value)?,
            "pathway_width" => self.pathway_width = int(value)?,
            "seeds" => self.seeds = list(value)?.into_iter().map(|s| s as u64).collect(),
            "sample_every" => self.sample_every = int(value)?,
            "record_every" => self.record_every = int(value)?,
            "out" => self.out = PathBuf::from(value.trim()),
            _ => return Err(Error::Parse(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidParameter(format!("learning_rate must be >= 0, got {}", self.learning_rate)));
        }
        if self.hidden_widths.is_empty() || self.hidden_widths.contains(&0) || self.pathway_width == 0 {
            return Err(Error::InvalidParameter("hidden widths must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidParameter("at least one seed is required".into()));
        }
        if self.sample_every == 0 || self.record_every == 0 {
            return Err(Error::InvalidParameter("sample_every and record_every must be positive".into()));
        }
        let std = self.init.std();
        if !(std >= 0.0) || !std.is_finite() {
            return Err(Error::InvalidParameter(format!("init scale must be >= 0, got {std}")));
        }
        Ok(())
    }

    /// Parses a config file body. Keys before any section header are applied
    /// to `self` in order (a `preset` key resets everything to that preset
    /// first, so put it at the top); `[overrides]` keys are applied after.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut base: Vec<(String, String)> = Vec::new();
        let mut overrides: Vec<(String, String)> = Vec::new();
        let mut in_overrides = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(section) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                match section.trim() {
                    "overrides" => in_overrides = true,
                    other => return Err(Error::Parse(format!("line {}: unknown section [{other}]", lineno + 1))),
                }
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
            let entry = (k.trim().to_string(), v.trim().to_string());
            if in_overrides {
                overrides.push(entry);
            } else {
                base.push(entry);
            }
        }
        if overrides.iter().any(|(k, _)| k == "preset") {
            return Err(Error::Parse("preset cannot be overridden".into()));
        }
        for (k, v) in base.iter().chain(&overrides) {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path, default_preset: &str) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::preset(default_preset)?;
        cfg.apply_text(&std::fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    /// Round-trips through [`ExperimentConfig::apply_text`].
    pub fn to_text(&self) -> String {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let seeds = self.seeds.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let init = match self.init {
            Init::Std(s) => format!("init_scale = {s:e}"),
            Init::Variance(v) => format!("init_variance = {v:e}"),
        };
        let mut out = format!("preset = {}\ntask = {}\nmodel = {}\n", self.preset, self.task, self.model);
        if let Some(r) = self.reln {
            out += &format!("reln = {r}\n");
        }
        out += &format!(
            "learning_rate = {}\nepochs = {}\n{init}\nhidden_widths = {}\npathway_width = {}\nseeds = {seeds}\nsample_every = {}\nrecord_every = {}\nout = {}\n",
            self.learning_rate,
            self.epochs,
            join(&self.hidden_widths),
            self.pathway_width,
            self.sample_every,
            self.record_every,
            self.out.display()
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_carry_table_values() {
        let c = ExperimentConfig::preset("context3").unwrap();
        assert_eq!(
            (c.learning_rate, c.epochs, c.init, c.hidden_widths.clone(), c.pathway_width),
            (0.001, 8000, Init::Std(1e-7), vec![700], 100)
        );
        let x = ExperimentConfig::preset("xor").unwrap();
        assert_eq!(x.init, Init::Variance(4e-8 / 128.0));
        assert_eq!(x.hidden_widths, vec![128]);
        assert!((4.0 * x.learning_rate - 0.4).abs() < 1e-15);
        assert!(ExperimentConfig::preset("nope").is_err());
        for p in PRESETS {
            ExperimentConfig::preset(p).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn tasks_build_expected_shapes() {
        let ds = "xor(1)".parse::<Task>().unwrap().build().unwrap();
        assert_eq!(ds.inputs.shape(), (3, 4));
        let ds = "context3".parse::<Task>().unwrap().build().unwrap();
        assert_eq!(ds.inputs.shape(), (11, 24));
        assert!("bogus".parse::<Task>().is_err());
        for t in ["xor(0.5)", "hierarchy(8)", "context3", "context4(identical)", "context3(4,identical)"] {
            let task: Task = t.parse().unwrap();
            assert_eq!(task.to_string().parse::<Task>().unwrap(), task, "{t}");
        }
    }

    #[test]
    fn overrides_apply_last() {
        let mut c = ExperimentConfig::preset("xor").unwrap();
        c.apply_text("preset = context3\n[overrides]\nepochs = 5 # short\nseeds = 1,2\n").unwrap();
        assert_eq!(c.epochs, 5);
        assert_eq!(c.seeds, vec![1, 2]);
        assert_eq!(c.hidden_widths, vec![700]);
        let mut c = ExperimentConfig::preset("xor").unwrap();
        c.apply_text("epochs = 7\n[overrides]\nepochs = 9\n").unwrap();
        assert_eq!(c.epochs, 9);
        assert!(c.clone().apply_text("bogus = 1").is_err());
        assert!(c.clone().apply_text("[overrides]\npreset = xor").is_err());
        assert!(c.clone().apply_text("[other]\n").is_err());
    }

    #[test]
    fn text_roundtrip() {
        let mut c = ExperimentConfig::preset("depth2").unwrap();
        c.seeds = vec![3, 4];
        c.model = Model::Gdln;
        let mut back = ExperimentConfig::preset("xor").unwrap();
        back.apply_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }
}
