//! Training loops, evaluation, checkpoints and run logging.

pub mod checkpoint;
pub mod data;
pub mod eval;
pub mod metrics;
pub mod optim;
pub mod train;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::datasets::TrajectoryRecord;
use crate::error::{Error, Result};
use crate::rewards::{trajectory_mcgrew, BleuConfig, McGrewParams, ReferenceSet};
use crate::sequence::{RealSequence, TokenSequence};

pub use checkpoint::Checkpoint;
pub use data::{Dataset, Normalizer};
pub use eval::{
    bleu_suite,
    evaluate_bleu_suite, evaluate_mcgrew, evaluate_nll_gen, evaluate_nll_real, sample_real_records, sample_sentences,
};
pub use metrics::{MetricsRow, Phase, RunManifest};
pub use optim::{Optimizer, OptimizerKind};
pub use train::{pretrain_mle, train_adversarial};

/// Settings of the training loops that are not part of [`crate::config::TrainConfig`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub batch_size: usize,
    pub generator_optimizer: OptimizerKind,
    pub discriminator_optimizer: OptimizerKind,
    /// Rollout spacing used when the sequence is longer than 16 steps.
    pub rollout_stride: usize,
    /// Gaussian policy noise for real-valued policy-gradient samples.
    pub exploration_sigma: f64,
    /// Target label for real data in the discriminator loss.
    pub real_label: f64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            batch_size: 32,
            generator_optimizer: OptimizerKind::sgd_default(),
            discriminator_optimizer: OptimizerKind::sgd_default(),
            rollout_stride: 4,
            exploration_sigma: 0.1,
            real_label: 1.0,
        }
    }
}

impl HarnessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.rollout_stride == 0 {
            return Err(Error::Config("batch_size and rollout_stride must be positive".into()));
        }
        if !(self.exploration_sigma > 0.0) {
            return Err(Error::Config("exploration_sigma must be positive".into()));
        }
        if !(self.real_label > 0.0 && self.real_label <= 1.0) {
            return Err(Error::Config("real_label must lie in (0, 1]".into()));
        }
        self.generator_optimizer.validate()?;
        self.discriminator_optimizer.validate()
    }
}

/// Goal score driving the policy-gradient term.
pub enum Reward<'a> {
    /// Episode-terminal score of a complete token sequence.
    Terminal(Box<dyn FnMut(&TokenSequence) -> Result<f64> + 'a>),
    /// Per-step scores of a `T × W` sequence in model (standardised) units.
    PerStep(Box<dyn FnMut(&Array2<f64>) -> Result<Vec<f64>> + 'a>),
}

/// Sentence score with `max_n`-gram clipped precision against fixed references.
pub fn bleu_reward(references: &[TokenSequence], max_n: usize) -> Result<Reward<'static>> {
    let refs: Vec<Vec<usize>> = references.iter().map(|s| s.ids[..s.true_length].to_vec()).collect();
    let set = ReferenceSet::new(&refs, max_n)?;
    let cfg = BleuConfig::uniform(max_n)?;
    Ok(Reward::Terminal(Box::new(move |s: &TokenSequence| {
        Ok(set.score(&s.ids[..s.true_length], &cfg)?.score)
    })))
}

/// Per-step engagement score of a joint blue/red sequence.
pub fn mcgrew_reward(params: McGrewParams, normalizer: Normalizer, dt: f64) -> Result<Reward<'static>> {
    params.validate()?;
    Ok(Reward::PerStep(Box::new(move |x: &Array2<f64>| {
        let raw = normalizer.invert(x)?;
        let record = TrajectoryRecord::from_joint(&RealSequence::new(raw)?, dt)?;
        Ok(trajectory_mcgrew(&record, &params).per_step)
    })))
}

pub(crate) mod lanes {
    pub const D_REAL: u64 = 0;
    pub const D_FAKE: u64 = 1;
    pub const G_REAL: u64 = 2;
    pub const G_SAMPLE: u64 = 3;
    pub const ROLLOUT: u64 = 4;
    pub const LATENT: u64 = 5;
    pub const EXPLORE: u64 = 6;
    pub const SHUFFLE: u64 = 7;
}
