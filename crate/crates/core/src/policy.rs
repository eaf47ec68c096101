//! Sequence-level policy gradient: discounted returns, Monte-Carlo rollout
//! estimates for intermediate prefixes, and the REINFORCE surrogate.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::BaselineMode;
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::scalar::Scalar;
use crate::sequence::TokenSequence;
use crate::tape::{Graph, Var};

/// `U_t = Σ_{k≥t} γ^{k−t} r_k`, computed backwards.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    if let Some((i, r)) = rewards.iter().enumerate().find(|(_, r)| !r.is_finite()) {
        return Err(Error::Reward {
            step: i,
            reason: format!("non-finite reward {r}"),
        });
    }
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    Ok(out)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) || gamma.is_nan() {
        return Err(Error::Config(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    Ok(())
}

/// Running or fixed reward baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineState {
    pub mode: BaselineMode,
    pub count: u64,
    pub mean: f64,
}

impl BaselineState {
    pub fn new(mode: BaselineMode) -> Self {
        BaselineState {
            mode,
            count: 0,
            mean: 0.0,
        }
    }

    /// Folds one observed sequence reward into the running mean.
    pub fn observe(&mut self, reward: f64) {
        self.count += 1;
        self.mean += (reward - self.mean) / self.count as f64;
    }

    pub fn value(&self) -> f64 {
        match self.mode {
            BaselineMode::Fixed(b) => b,
            BaselineMode::RunningMean => self.mean,
        }
    }
}

/// `−Σ_t (U_t − b) ℓ_t` for one trajectory.
pub fn reinforce_loss<T: Scalar>(log_probs: &[T], returns: &[f64], baseline: f64) -> Result<T> {
    if log_probs.len() != returns.len() {
        return Err(Error::Shape(format!(
            "{} log-probabilities but {} returns",
            log_probs.len(),
            returns.len()
        )));
    }
    Ok(-log_probs
        .iter()
        .zip(returns)
        .map(|(&l, &u)| T::of(u - baseline) * l)
        .sum::<T>())
}

/// Batch surrogate on a graph: per-step `B × 1` log-probabilities and a
/// `B × T` return matrix; mean over the batch of `−Σ_t (U_t − b) ℓ_t`.
pub fn reinforce_loss_graph<T: Scalar>(
    g: &mut Graph<T>,
    log_probs: &[Var],
    returns: &Array2<f64>,
    baseline: f64,
) -> Result<Var> {
    if log_probs.is_empty() {
        return Err(Error::Shape("no log-probabilities".into()));
    }
    let batch = g.shape(log_probs[0]).0;
    if returns.dim() != (batch, log_probs.len()) {
        return Err(Error::Shape(format!(
            "returns are {:?}, expected ({batch}, {})",
            returns.dim(),
            log_probs.len()
        )));
    }
    let mut terms = Vec::with_capacity(log_probs.len());
    for (t, &lp) in log_probs.iter().enumerate() {
        let adv = g.constant(Array2::from_shape_fn((batch, 1), |(r, _)| T::of(returns[[r, t]] - baseline)));
        terms.push(g.mul(lp, adv));
    }
    let total = g.add_all(&terms);
    let mean = g.mean_all(total);
    Ok(g.scale(mean, -T::one()))
}

/// Positions `t` (0-based, the prefix holds `t + 1` symbols) at which rollouts
/// are run. Every position for short sequences; every `stride`-th plus the
/// last otherwise.
pub fn rollout_positions(seq_len: usize, stride: usize) -> Vec<usize> {
    let stride = stride.max(1);
    (0..seq_len).filter(|&t| (t + 1) % stride == 0 || t + 1 == seq_len).collect()
}

/// Monte-Carlo estimate of the expected terminal reward after `prefix`:
/// `(1/K) Σ_k R(prefix ⊕ rollout_k)`. Rollouts use hard ancestral sampling.
pub fn rollout_returns<T: Scalar, R: Rng + ?Sized, F>(
    gen: &Generator<T>,
    prefix: &[usize],
    k: usize,
    reward: F,
    rng: &mut R,
) -> Result<f64>
where
    F: FnMut(&TokenSequence) -> Result<f64>,
{
    Ok(rollout_returns_batch(gen, &[prefix.to_vec()], k, reward, rng)?[0])
}

/// Batched rollouts: one estimate per prefix, `k` completions each, all
/// completions drawn in a single pass.
pub fn rollout_returns_batch<T: Scalar, R: Rng + ?Sized, F>(
    gen: &Generator<T>,
    prefixes: &[Vec<usize>],
    k: usize,
    mut reward: F,
    rng: &mut R,
) -> Result<Vec<f64>>
where
    F: FnMut(&TokenSequence) -> Result<f64>,
{
    if k == 0 {
        return Err(Error::Config("rollout count K must be at least 1".into()));
    }
    if prefixes.iter().any(|p| p.len() > gen.seq_len()) {
        return Err(Error::Shape("prefix longer than the sequence length".into()));
    }
    let expanded: Vec<Vec<usize>> = prefixes.iter().flat_map(|p| std::iter::repeat_n(p.clone(), k)).collect();
    let mut g = Graph::new();
    let b = gen.params.bind_frozen(&mut g);
    let samples = gen.sample_tokens_graph(&mut g, &b, expanded.len(), T::one(), Some(&expanded), rng)?;
    let mut out = Vec::with_capacity(prefixes.len());
    for chunk in samples.sequences.chunks(k) {
        let mut total = 0.0;
        for s in chunk {
            let r = reward(s)?;
            if !r.is_finite() {
                return Err(Error::Reward {
                    step: 0,
                    reason: format!("non-finite rollout reward {r}"),
                });
            }
            total += r;
        }
        out.push(total / k as f64);
    }
    Ok(out)
}

/// Per-step returns `U_t` for a batch of sampled token sequences under a
/// terminal-only reward. Positions at and after the end marker and the final
/// position use the exact sequence reward; the others use rollouts at the
/// strided positions and reuse the next estimate in between.
pub fn token_returns<T: Scalar, R: Rng + ?Sized, F>(
    gen: &Generator<T>,
    sequences: &[TokenSequence],
    k: usize,
    stride: usize,
    mut reward: F,
    rng: &mut R,
) -> Result<(Array2<f64>, Vec<f64>)>
where
    F: FnMut(&TokenSequence) -> Result<f64>,
{
    let len = gen.seq_len();
    let terminal: Vec<f64> = sequences.iter().map(&mut reward).collect::<Result<_>>()?;
    let positions = rollout_positions(len, stride);
    let mut prefixes = Vec::new();
    let mut slots = Vec::new();
    for (r, s) in sequences.iter().enumerate() {
        for &t in &positions {
            // Once the end marker is emitted the completion is deterministic.
            if t + 1 < len && t + 1 <= s.true_length {
                prefixes.push(s.ids[..=t].to_vec());
                slots.push((r, t));
            }
        }
    }
    let estimates = if prefixes.is_empty() {
        Vec::new()
    } else {
        rollout_returns_batch(gen, &prefixes, k, &mut reward, rng)?
    };
    let mut returns = Array2::from_elem((sequences.len(), len), f64::NAN);
    for (&(r, t), &e) in slots.iter().zip(&estimates) {
        returns[[r, t]] = e;
    }
    for r in 0..sequences.len() {
        let mut next = terminal[r];
        for t in (0..len).rev() {
            if returns[[r, t]].is_nan() {
                returns[[r, t]] = if t >= sequences[r].true_length { terminal[r] } else { next };
            }
            next = returns[[r, t]];
        }
    }
    Ok((returns, terminal))
}
