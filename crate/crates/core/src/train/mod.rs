//! Patch-based training with the intensity/gradient loss and Adam.

mod adam;

pub use adam::{Adam, AdamConfig};

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Graph;
use crate::error::{Error, Result};
use crate::io::{sample_patches_with, write_checkpoint, ImagePair};
use crate::losses::{total_loss, LossWeights};
use crate::model::{Ablation, ModelConfig, WMamba};
use crate::nn::Module;
use crate::tensor::Tensor;

pub const LOG_HEADER: &str = "step,loss_total,loss_int,loss_grad";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub patch: usize,
    pub steps: usize,
    pub seed: u64,
    pub loss: LossWeights,
    pub model: ModelConfig,
    /// Global gradient-norm bound; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Also write the checkpoint every this many steps.
    pub checkpoint_every: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 2.5e-5,
            batch: 2,
            patch: 64,
            steps: 500,
            seed: 0,
            loss: LossWeights::default(),
            model: ModelConfig::default(),
            clip_norm: Some(1.0),
            checkpoint_every: None,
        }
    }
}

impl TrainConfig {
    pub fn with_ablation(mut self, ablation: Ablation) -> Self {
        self.model.ablation = ablation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.batch == 0 || self.patch == 0 || self.patch % 4 != 0 {
            return Err(Error::Invalid(format!(
                "need lr > 0, batch >= 1 and patch divisible by 4 (lr {}, batch {}, patch {})",
                self.lr, self.batch, self.patch
            )));
        }
        self.loss.validate()?;
        self.model.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub total: f64,
    pub int: f64,
    pub grad: f64,
}

impl StepLog {
    pub fn csv_row(&self) -> String {
        format!("{},{:.8},{:.8},{:.8}", self.step, self.total, self.int, self.grad)
    }
}

pub struct Trainer {
    pub model: WMamba<f32>,
    pub adam: Adam<f32>,
    pub config: TrainConfig,
    rng: ChaCha8Rng,
    step: usize,
}

fn stack(parts: &[Tensor<f32>]) -> Result<Tensor<f32>> {
    let shape = parts[0].shape();
    let mut batched = vec![parts.len()];
    batched.extend_from_slice(shape);
    Tensor::new(batched, parts.iter().flat_map(|t| t.data().iter().copied()).collect())
}

impl Trainer {
    /// The model initialization and patch sampling both derive from `config.seed`.
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let model = WMamba::with_rng(config.model.clone(), &mut rng)?;
        let adam = Adam::new(AdamConfig { lr: config.lr, ..AdamConfig::default() })?;
        Ok(Self { model, adam, config, rng, step: 0 })
    }

    /// Sample `batch` aligned patches, each from a uniformly drawn pair.
    pub fn sample_batch(&mut self, pairs: &[ImagePair<f32>]) -> Result<(Tensor<f32>, Tensor<f32>)> {
        if pairs.is_empty() {
            return Err(Error::Data("no training pairs".into()));
        }
        let (mut irs, mut vis) = (Vec::new(), Vec::new());
        for _ in 0..self.config.batch {
            let pair = &pairs[self.rng.random_range(0..pairs.len())];
            let p = sample_patches_with(pair, self.config.patch, 1, &mut self.rng)?.remove(0);
            irs.push(p.ir);
            vis.push(p.vi);
        }
        Ok((stack(&irs)?, stack(&vis)?))
    }

    /// Forward, loss, backward, clip, Adam. The logged loss is the one the
    /// gradients were taken at.
    pub fn step_on(&mut self, ir: Tensor<f32>, vi: Tensor<f32>) -> Result<StepLog> {
        let g = Graph::new();
        let (ir, vi) = (g.constant(ir), g.constant(vi));
        let fused = self.model.forward(&g, ir, vi)?;
        let terms = total_loss(fused, ir, vi, self.config.loss)?;
        let log = StepLog {
            step: self.step,
            total: f64::from(terms.total.value().item()),
            int: f64::from(terms.int.value().item()),
            grad: f64::from(terms.grad.value().item()),
        };
        if !log.total.is_finite() {
            return Err(self.non_finite_diagnosis(&log));
        }
        g.backward(terms.total)?;
        let mut grads = g.param_grads();
        for (name, grad) in grads.iter() {
            if grad.is_some_and(|t| !t.all_finite()) {
                return Err(Error::NonFinite(format!("gradient of `{name}` at step {}", self.step)));
            }
        }
        if let Some(max) = self.config.clip_norm {
            grads.clip_global_norm(max);
        }
        self.adam.step(&mut self.model, &grads)?;
        self.step += 1;
        Ok(log)
    }

    fn non_finite_diagnosis(&self, log: &StepLog) -> Error {
        if let Some(p) = self.model.parameters().into_iter().find(|p| !p.value().all_finite()) {
            return Error::NonFinite(format!("parameter `{}` at step {}", p.name(), log.step));
        }
        let term = if !log.int.is_finite() { "loss_int" } else { "loss_grad" };
        Error::NonFinite(format!("{term} = {} at step {}", if term == "loss_int" { log.int } else { log.grad }, log.step))
    }

    pub fn step(&mut self, pairs: &[ImagePair<f32>]) -> Result<StepLog> {
        let (ir, vi) = self.sample_batch(pairs)?;
        self.step_on(ir, vi)
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }
}

/// Where a training run writes its outputs.
#[derive(Clone, Debug)]
pub struct TrainOutputs {
    pub checkpoint: PathBuf,
    pub log: Option<PathBuf>,
}

/// Run `config.steps` steps, writing the loss log as it goes and the
/// checkpoint at the end (and every `checkpoint_every` steps).
pub fn train_loop(pairs: &[ImagePair<f32>], config: TrainConfig, out: &TrainOutputs) -> Result<(Trainer, Vec<StepLog>)> {
    let mut trainer = Trainer::new(config)?;
    let mut log_file = match &out.log {
        Some(p) => {
            let mut f = fs::File::create(p)?;
            writeln!(f, "{LOG_HEADER}")?;
            Some(f)
        }
        None => None,
    };
    let mut logs = Vec::with_capacity(trainer.config.steps);
    for _ in 0..trainer.config.steps {
        let entry = trainer.step(pairs)?;
        if let Some(f) = &mut log_file {
            writeln!(f, "{}", entry.csv_row())?;
        }
        logs.push(entry);
        if let Some(k) = trainer.config.checkpoint_every.filter(|&k| k > 0) {
            if trainer.steps_done() % k == 0 {
                save(&trainer, &out.checkpoint)?;
            }
        }
    }
    save(&trainer, &out.checkpoint)?;
    Ok((trainer, logs))
}

fn save(trainer: &Trainer, path: &Path) -> Result<()> {
    write_checkpoint(path, &trainer.model, Some(&trainer.adam.info()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(seed: u64, n: usize) -> ImagePair<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImagePair {
            ir: Tensor::rand_uniform([1, n, n], 0.0, 1.0, &mut rng),
            vi_luma: Tensor::rand_uniform([1, n, n], 0.0, 1.0, &mut rng),
            vi_chroma: None,
            ir_path: "ir".into(),
            vi_path: "vi".into(),
        }
    }

    fn tiny() -> TrainConfig {
        TrainConfig { batch: 2, patch: 8, steps: 3, model: ModelConfig::with_width(4), ..TrainConfig::default() }
    }

    #[test]
    fn identical_configs_give_identical_logs() {
        let pairs = [pair(1, 12), pair(2, 12)];
        let run = || {
            let mut t = Trainer::new(tiny()).unwrap();
            (0..3).map(|_| t.step(&pairs).unwrap()).collect::<Vec<_>>()
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a.iter().all(|l| l.total.is_finite()));
    }

    #[test]
    fn writes_log_and_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let out = TrainOutputs { checkpoint: dir.path().join("m.ckpt"), log: Some(dir.path().join("loss.csv")) };
        let (_, logs) = train_loop(&[pair(3, 8)], tiny(), &out).unwrap();
        let text = fs::read_to_string(out.log.unwrap()).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], LOG_HEADER);
        assert_eq!(lines.len(), logs.len() + 1);
        let (model, header) = crate::io::read_checkpoint::<f32>(&out.checkpoint).unwrap();
        assert_eq!(header.optimizer.unwrap().step, 3);
        assert_eq!(model.config, tiny().model);
    }

    #[test]
    fn rejects_bad_config_and_small_images() {
        assert!(Trainer::new(TrainConfig { patch: 10, ..tiny() }).is_err());
        let mut t = Trainer::new(TrainConfig { patch: 16, ..tiny() }).unwrap();
        assert!(t.step(&[pair(1, 12)]).is_err());
        assert!(t.step(&[]).is_err());
    }
}
