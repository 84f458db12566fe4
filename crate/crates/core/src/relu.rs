//! Bias-free ReLU networks trained by full-batch gradient descent, with
//! binary activation sampling.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::gdln::{Init, DIVERGENCE_LOSS};
use crate::linalg::Matrix;
use crate::trajectory::Trajectory;

pub const SAMPLE_MAGIC: [u8; 4] = *b"GDAS";

#[derive(Debug, Clone)]
pub struct MlpState {
    /// `[inputs, hidden..., outputs]`.
    pub widths: Vec<usize>,
    /// `weights[l]` maps layer `l` to layer `l + 1`.
    pub weights: Vec<Matrix>,
    pub seed: u64,
    pub epoch: usize,
}

impl MlpState {
    pub fn new(widths: Vec<usize>, init: Init, seed: u64) -> Result<MlpState> {
        if widths.len() < 3 || widths.contains(&0) {
            return Err(Error::InvalidParameter(format!("need >= 1 hidden layer and positive widths, got {widths:?}")));
        }
        let std = init.std();
        let normal = Normal::new(0.0, std).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = widths.windows(2).map(|w| Matrix::from_fn(w[1], w[0], |_, _| normal.sample(&mut rng))).collect();
        Ok(MlpState { widths, weights, seed, epoch: 0 })
    }

    pub fn zeros(widths: Vec<usize>) -> MlpState {
        let weights = widths.windows(2).map(|w| Matrix::zeros(w[1], w[0])).collect();
        MlpState { widths, weights, seed: 0, epoch: 0 }
    }

    pub fn hidden_layers(&self) -> usize {
        self.weights.len() - 1
    }

    /// Preactivations of every hidden layer and the output.
    fn forward(&self, x: &Matrix) -> (Vec<Matrix>, Vec<Matrix>, Matrix) {
        let mut pre = Vec::with_capacity(self.hidden_layers());
        let mut post: Vec<Matrix> = Vec::with_capacity(self.hidden_layers());
        for l in 0..self.hidden_layers() {
            let input = if l == 0 { x } else { &post[l - 1] };
            let p = &self.weights[l] * input;
            post.push(p.map(|v| v.max(0.0)));
            pre.push(p);
        }
        let out = &self.weights[self.hidden_layers()] * post.last().expect("at least one hidden layer");
        (pre, post, out)
    }

    pub fn predict(&self, x: &Matrix) -> Matrix {
        self.forward(x).2
    }

    pub fn loss(&self, dataset: &Dataset) -> f64 {
        let out = self.predict(&dataset.inputs);
        (&dataset.targets - out).norm_squared() / (2.0 * dataset.n_datapoints() as f64)
    }

    /// Binary activity `preactivation > 0` of hidden layer `layer`.
    pub fn activity(&self, x: &Matrix, layer: usize) -> Matrix {
        self.forward(x).0[layer].map(|v| if v > 0.0 { 1.0 } else { 0.0 })
    }
}

/// Post-activations of hidden layer `layer` (`hidden x N`).
pub fn export_latents(state: &MlpState, dataset: &Dataset, layer: usize) -> Result<Matrix> {
    if layer >= state.hidden_layers() {
        return Err(Error::OutOfRange { index: layer, len: state.hidden_layers() });
    }
    Ok(state.forward(&dataset.inputs).1.swap_remove(layer))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSample {
    pub epoch: usize,
    pub run_id: u64,
    pub layer: usize,
    /// `hidden x N`, entries in {0, 1}.
    pub active: Matrix,
}

#[derive(Debug, Clone)]
pub struct ReluConfig {
    pub hidden_widths: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub init: Init,
    pub seed: u64,
    /// Sample binary activity every this many epochs; `None` disables sampling.
    pub sample_every: Option<usize>,
    /// Hidden layers to sample (defaults to the first).
    pub sample_layers: Vec<usize>,
    pub record_every: usize,
    pub output_epochs: Vec<usize>,
}

impl ReluConfig {
    pub fn new(hidden_widths: Vec<usize>, learning_rate: f64, epochs: usize, init: Init, seed: u64) -> ReluConfig {
        ReluConfig {
            hidden_widths,
            learning_rate,
            epochs,
            init,
            seed,
            sample_every: None,
            sample_layers: vec![0],
            record_every: 1,
            output_epochs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReluRun {
    pub trajectory: Trajectory,
    pub samples: Vec<ActivationSample>,
    pub state: MlpState,
}

/// Full-batch gradient descent on the squared loss, step `W += N * lr * G`.
pub fn train_relu(dataset: &Dataset, config: &ReluConfig) -> Result<ReluRun> {
    if config.hidden_widths.is_empty() || config.hidden_widths.contains(&0) {
        return Err(Error::InvalidParameter("hidden widths must be nonempty and positive".into()));
    }
    if !(config.learning_rate >= 0.0) || !config.learning_rate.is_finite() {
        return Err(Error::InvalidParameter(format!("learning rate must be >= 0, got {}", config.learning_rate)));
    }
    if config.record_every == 0 || config.sample_every == Some(0) {
        return Err(Error::InvalidParameter("record_every and sample_every must be positive".into()));
    }
    if let Some(&l) = config.sample_layers.iter().find(|&&l| l >= config.hidden_widths.len()) {
        return Err(Error::OutOfRange { index: l, len: config.hidden_widths.len() });
    }
    let mut widths = vec![dataset.n_inputs()];
    widths.extend(&config.hidden_widths);
    widths.push(dataset.n_targets());
    let mut state = MlpState::new(widths, config.init, config.seed)?;

    let x = &dataset.inputs;
    let y = &dataset.targets;
    let n = dataset.n_datapoints() as f64;
    let step = n * config.learning_rate;
    let depth = state.weights.len();
    let mut traj = Trajectory::new("relu", &config.seed.to_string());
    let mut samples = Vec::new();

    for epoch in 0..=config.epochs {
        let (pre, post, out) = state.forward(x);
        let err = y - &out;
        let loss = err.norm_squared() / (2.0 * n);
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            return Err(Error::Diverged { epoch, loss });
        }
        if epoch % config.record_every == 0 || epoch == config.epochs {
            traj.push(epoch as f64, loss, vec![]);
        }
        if config.output_epochs.contains(&epoch) {
            traj.outputs.push((epoch, out.clone()));
        }
        if let Some(every) = config.sample_every {
            if epoch % every == 0 {
                for &layer in &config.sample_layers {
                    samples.push(ActivationSample {
                        epoch,
                        run_id: config.seed,
                        layer,
                        active: pre[layer].map(|v| if v > 0.0 { 1.0 } else { 0.0 }),
                    });
                }
            }
        }
        if epoch == config.epochs {
            break;
        }
        // delta holds -dL/d(preactivation) of the layer above, scaled by N
        let mut delta = err;
        for l in (0..depth).rev() {
            let input = if l == 0 { x } else { &post[l - 1] };
            let grad = &delta * input.transpose() / n;
            if l > 0 {
                let mut back = state.weights[l].transpose() * &delta;
                back.zip_apply(&pre[l - 1], |b, p| {
                    if p <= 0.0 {
                        *b = 0.0;
                    }
                });
                delta = back;
            }
            state.weights[l] += grad * step;
        }
        state.epoch = epoch + 1;
    }
    Ok(ReluRun { trajectory: traj, samples, state })
}

/// Writes a sample as a 16-byte header (magic, hidden, N, epoch as little-endian
/// u32) followed by the row-major bitset, least significant bit first.
pub fn write_sample(path: &Path, sample: &ActivationSample) -> Result<()> {
    let (h, n) = sample.active.shape();
    let mut bytes = Vec::with_capacity(16 + (h * n).div_ceil(8));
    bytes.extend_from_slice(&SAMPLE_MAGIC);
    for v in [h, n, sample.epoch] {
        let v =
            u32::try_from(v).map_err(|_| Error::InvalidParameter(format!("{v} does not fit a u32 header field")))?;
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut bits = vec![0u8; (h * n).div_ceil(8)];
    for r in 0..h {
        for c in 0..n {
            if sample.active[(r, c)] != 0.0 {
                let k = r * n + c;
                bits[k / 8] |= 1 << (k % 8);
            }
        }
    }
    bytes.extend_from_slice(&bits);
    fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

/// Reads a sample file; run id and layer come from the JSON index.
pub fn read_sample(path: &Path, run_id: u64, layer: usize) -> Result<ActivationSample> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || bytes[..4] != SAMPLE_MAGIC {
        return Err(Error::Parse(format!("{}: not an activation sample", path.display())));
    }
    let field = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize;
    let (h, n, epoch) = (field(0), field(1), field(2));
    if bytes.len() != 16 + (h * n).div_ceil(8) {
        return Err(Error::Parse(format!("{}: truncated bitset", path.display())));
    }
    let bits = &bytes[16..];
    let active = Matrix::from_fn(h, n, |r, c| {
        let k = r * n + c;
        f64::from((bits[k / 8] >> (k % 8)) & 1)
    });
    Ok(ActivationSample { epoch, run_id, layer, active })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleIndexEntry {
    pub file: String,
    pub run_id: u64,
    pub epoch: usize,
    pub layer: usize,
    pub hidden: usize,
    pub n: usize,
}

/// Writes every sample to `dir` plus an `index.json` listing them.
pub fn write_samples(dir: &Path, samples: &[ActivationSample]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut index = Vec::with_capacity(samples.len());
    for s in samples {
        let file = format!("run{}_layer{}_epoch{}.bin", s.run_id, s.layer, s.epoch);
        write_sample(&dir.join(&file), s)?;
        index.push(SampleIndexEntry {
            file,
            run_id: s.run_id,
            epoch: s.epoch,
            layer: s.layer,
            hidden: s.active.nrows(),
            n: s.active.ncols(),
        });
    }
    fs::write(dir.join("index.json"), serde_json::to_string_pretty(&index)?)?;
    Ok(())
}

pub fn read_samples(dir: &Path) -> Result<Vec<ActivationSample>> {
    let index: Vec<SampleIndexEntry> = serde_json::from_str(&fs::read_to_string(dir.join("index.json"))?)?;
    index.iter().map(|e| read_sample(&dir.join(&e.file), e.run_id, e.layer)).collect()
}
