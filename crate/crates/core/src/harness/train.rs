//! Maximum-likelihood pretraining and the alternating adversarial loop.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::config::TrainConfig;
use crate::discriminator::{stack_steps, Discriminator};
use crate::error::{Error, Result};
use crate::generator::{gaussian_log_density, Generator, OutputMode};
use crate::harness::data::Dataset;
use crate::harness::metrics::{MetricsRow, Phase, RunManifest};
use crate::harness::optim::Optimizer;
use crate::harness::{lanes, HarnessConfig, Reward};
use crate::objectives::{
    discriminator_loss_graph, generator_gan_loss_graph, real_lower_bound_graph, token_lower_bound_graph,
    LossBreakdown,
};
use crate::params::{clip_global_norm, global_norm, Bound};
use crate::policy::{discounted_returns, reinforce_loss_graph, token_returns, BaselineState};
use crate::rng::{lane_rng, standard_normal, SeededRng};
use crate::scalar::Scalar;
use crate::sequence::{RealSequence, TokenSequence};
use crate::tape::{Graph, Var};

fn batch_indices(n: usize, size: usize, rng: &mut SeededRng) -> Vec<usize> {
    (0..size).map(|_| rng.random_range(0..n)).collect()
}

/// Row-per-step one-hot encoding, `T × V`.
pub fn one_hot<T: Scalar>(seq: &TokenSequence, vocab_size: usize) -> Array2<T> {
    Array2::from_shape_fn((seq.len(), vocab_size), |(i, j)| {
        if seq.ids[i] == j {
            T::one()
        } else {
            T::zero()
        }
    })
}

/// Negated mean lower bound of a batch, as a scalar node.
fn ml_term<T: Scalar>(
    gen: &Generator<T>,
    g: &mut Graph<T>,
    b: &Bound,
    data: &Dataset<T>,
    idx: &[usize],
    sigma_train: T,
    rng: &mut SeededRng,
) -> Result<Var> {
    let bound = match data {
        Dataset::Tokens(all) => {
            let batch: Vec<TokenSequence> = idx.iter().map(|&i| all[i].clone()).collect();
            token_lower_bound_graph(gen, g, b, &batch)?
        }
        Dataset::Real(all) => {
            let batch: Vec<&RealSequence<T>> = idx.iter().map(|&i| &all[i]).collect();
            let rows = Generator::real_rows(g, &batch);
            let eps = Array2::from_shape_fn((batch.len(), gen.config().latent_dim), |_| standard_normal(rng));
            real_lower_bound_graph(gen, g, b, &rows, sigma_train, &eps)?
        }
    };
    let m = g.mean_all(bound);
    Ok(g.scale(m, -T::one()))
}

fn check_mode<T: Scalar>(gen: &Generator<T>, data: &Dataset<T>) -> Result<()> {
    match (gen.config().mode, data) {
        (OutputMode::Discrete { .. }, Dataset::Tokens(_)) | (OutputMode::Real { .. }, Dataset::Real(_)) => Ok(()),
        _ => Err(Error::Shape("dataset kind does not match the generator mode".into())),
    }
}

fn finite(x: f64, what: &str, step: usize) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Diverged {
            what: what.to_string(),
            step,
        })
    }
}

/// Minimises the negated lower bound for `epochs` passes over `data`,
/// returning one metrics row per epoch.
pub fn pretrain_mle<T: Scalar>(
    gen: &mut Generator<T>,
    data: &Dataset<T>,
    epochs: usize,
    cfg: &TrainConfig,
    harness: &HarnessConfig,
) -> Result<Vec<MetricsRow>> {
    cfg.validate()?;
    harness.validate()?;
    check_mode(gen, data)?;
    if data.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut opt = Optimizer::new(harness.generator_optimizer, &gen.params);
    let sigma_train = T::of(cfg.sigma_train);
    let mut rows = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut lane_rng(cfg.seed, epoch as u64, lanes::SHUFFLE));
        let mut latent_rng = lane_rng(cfg.seed, epoch as u64, lanes::LATENT);
        let (mut loss_sum, mut norm_sum, mut clipped_sum, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for chunk in order.chunks(harness.batch_size) {
            let mut g = Graph::new();
            let b = gen.params.bind(&mut g);
            let loss = ml_term(gen, &mut g, &b, data, chunk, sigma_train, &mut latent_rng)?;
            let value = finite(g.scalar(loss).to_f64_lossy(), "pretraining loss", epoch)?;
            let grads = g.backward(loss);
            let mut grads = gen.params.collect_grads(&b, &grads);
            let norm = clip_global_norm(&mut grads, T::of(cfg.grad_clip)).to_f64_lossy();
            finite(norm, "pretraining gradient", epoch)?;
            clipped_sum += global_norm(&grads).to_f64_lossy();
            opt.step(&mut gen.params, &grads)?;
            loss_sum += value * chunk.len() as f64;
            norm_sum += norm;
            batches += 1;
        }
        let loss = loss_sum / data.len() as f64;
        log::info!("pretrain epoch {epoch}: loss {loss:.5}");
        rows.push(MetricsRow {
            phase: Phase::Pretrain,
            step: epoch,
            d_updates: 0,
            g_updates: opt.steps(),
            tau: None,
            d_loss: None,
            d_grad_norm: None,
            ml_term: loss,
            gan_term: 0.0,
            rl_term: 0.0,
            total: loss,
            g_grad_norm: norm_sum / batches as f64,
            g_grad_norm_clipped: clipped_sum / batches as f64,
            baseline: None,
            mean_reward: None,
            nll_gen: None,
            bleu: None,
            mcgrew: None,
        });
    }
    Ok(rows)
}

/// Runs `steps` alternating updates: one discriminator step, then one
/// generator step on `ml + λ·gan + α·rl` with clipped gradients.
pub fn train_adversarial<T: Scalar>(
    gen: &mut Generator<T>,
    disc: &mut Discriminator<T>,
    data: &Dataset<T>,
    cfg: &TrainConfig,
    harness: &HarnessConfig,
    reward: &mut Reward<'_>,
    steps: usize,
) -> Result<RunManifest> {
    cfg.validate()?;
    harness.validate()?;
    check_mode(gen, data)?;
    if data.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    match (data, &*reward) {
        (Dataset::Tokens(_), Reward::Terminal(_)) | (Dataset::Real(_), Reward::PerStep(_)) => {}
        _ => return Err(Error::Config("reward kind does not match the data kind".into())),
    }
    let mut manifest = RunManifest::new(cfg.clone(), harness.clone(), data.fingerprint());
    let mut g_opt = Optimizer::new(harness.generator_optimizer, &gen.params);
    let mut d_opt = Optimizer::new(harness.discriminator_optimizer, &disc.params);
    let mut baseline = BaselineState::new(cfg.baseline_mode);
    let (mut d_updates, mut g_updates) = (0u64, 0u64);
    for step in 0..steps {
        let tau = cfg.gumbel_temperature_schedule.at(step);
        let rng = |lane| lane_rng(cfg.seed, step as u64, lane);

        // Discriminator.
        let idx = batch_indices(data.len(), harness.batch_size, &mut rng(lanes::D_REAL));
        let (d_loss, d_norm) = discriminator_step(gen, disc, &mut d_opt, data, &idx, cfg, harness, tau, rng(lanes::D_FAKE))?;
        finite(d_loss, "discriminator loss", step)?;
        d_updates += 1;

        // Generator.
        let out = generator_step(gen, disc, data, cfg, harness, tau, step, &mut baseline, reward)?;
        finite(out.breakdown.total, "generator loss", step)?;
        let mut grads = out.grads;
        let pre = finite(clip_global_norm(&mut grads, T::of(cfg.grad_clip)).to_f64_lossy(), "generator gradient", step)?;
        let post = global_norm(&grads).to_f64_lossy();
        g_opt.step(&mut gen.params, &grads)?;
        g_updates += 1;

        log::debug!(
            "step {step}: d_loss {d_loss:.4}, total {:.4}, grad norm {pre:.3}",
            out.breakdown.total
        );
        manifest.push(MetricsRow {
            phase: Phase::Adversarial,
            step,
            d_updates,
            g_updates,
            tau: Some(tau),
            d_loss: Some(d_loss),
            d_grad_norm: Some(d_norm),
            ml_term: out.breakdown.ml_term,
            gan_term: out.breakdown.gan_term,
            rl_term: out.breakdown.rl_term,
            total: out.breakdown.total,
            g_grad_norm: pre,
            g_grad_norm_clipped: post,
            baseline: out.baseline,
            mean_reward: out.mean_reward,
            nll_gen: None,
            bleu: None,
            mcgrew: None,
        });
    }
    Ok(manifest)
}

#[allow(clippy::too_many_arguments)]
fn discriminator_step<T: Scalar>(
    gen: &Generator<T>,
    disc: &mut Discriminator<T>,
    opt: &mut Optimizer<T>,
    data: &Dataset<T>,
    idx: &[usize],
    cfg: &TrainConfig,
    harness: &HarnessConfig,
    tau: f64,
    mut fake_rng: SeededRng,
) -> Result<(f64, f64)> {
    let mut g = Graph::new();
    let gb = gen.params.bind_frozen(&mut g);
    let (real_steps, fake_steps) = match data {
        Dataset::Tokens(all) => {
            let v = gen.config().output_width();
            let real: Vec<Array2<T>> = idx.iter().map(|&i| one_hot(&all[i], v)).collect();
            let fake = gen.sample_tokens_graph(&mut g, &gb, idx.len(), T::of(tau), None, &mut fake_rng)?;
            (stack_steps(&mut g, &real, false), fake.soft)
        }
        Dataset::Real(all) => {
            let real: Vec<Array2<T>> = idx.iter().map(|&i| all[i].values.clone()).collect();
            let fake = gen.sample_real_graph(&mut g, &gb, idx.len(), T::of(cfg.sigma_sample), None, &mut fake_rng)?;
            (stack_steps(&mut g, &real, false), fake.steps)
        }
    };
    let db = disc.params.bind(&mut g);
    let rl = disc.logits_graph(&mut g, &db, &real_steps)?;
    let fl = disc.logits_graph(&mut g, &db, &fake_steps)?;
    let loss = discriminator_loss_graph(&mut g, rl, fl, T::of(harness.real_label));
    let value = g.scalar(loss).to_f64_lossy();
    let grads = g.backward(loss);
    let grads = disc.params.collect_grads(&db, &grads);
    let norm = global_norm(&grads).to_f64_lossy();
    if value.is_finite() && norm.is_finite() {
        opt.step(&mut disc.params, &grads)?;
    }
    Ok((value, norm))
}

struct GeneratorStep<T> {
    breakdown: LossBreakdown,
    grads: Vec<Array2<T>>,
    baseline: Option<f64>,
    mean_reward: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
fn generator_step<T: Scalar>(
    gen: &Generator<T>,
    disc: &Discriminator<T>,
    data: &Dataset<T>,
    cfg: &TrainConfig,
    harness: &HarnessConfig,
    tau: f64,
    step: usize,
    baseline: &mut BaselineState,
    reward: &mut Reward<'_>,
) -> Result<GeneratorStep<T>> {
    let rng = |lane| lane_rng(cfg.seed, step as u64, lane);
    let mut g = Graph::new();
    let b = gen.params.bind(&mut g);
    let idx = batch_indices(data.len(), harness.batch_size, &mut rng(lanes::G_REAL));
    let ml = ml_term(gen, &mut g, &b, data, &idx, T::of(cfg.sigma_train), &mut rng(lanes::LATENT))?;
    let batch = harness.batch_size;
    let use_gan = cfg.lambda_gan > 0.0;
    let use_rl = cfg.alpha_rl > 0.0;

    let mut gan = None;
    let mut rl = None;
    let mut base_used = None;
    let mut mean_reward = None;
    match (data, reward) {
        (Dataset::Tokens(_), reward) => {
            if use_gan || use_rl {
                let samples = gen.sample_tokens_graph(&mut g, &b, batch, T::of(tau), None, &mut rng(lanes::G_SAMPLE))?;
                if use_gan {
                    let db = disc.params.bind_frozen(&mut g);
                    let fl = disc.logits_graph(&mut g, &db, &samples.soft)?;
                    gan = Some(generator_gan_loss_graph(&mut g, fl));
                }
                if use_rl {
                    let Reward::Terminal(f) = reward else {
                        return Err(Error::Config("token data needs a terminal reward".into()));
                    };
                    let stride = if gen.seq_len() <= 16 { 1 } else { harness.rollout_stride };
                    let mut wrapped = |s: &TokenSequence| {
                        f(s).map_err(|e| Error::Reward {
                            step,
                            reason: e.to_string(),
                        })
                    };
                    let (returns, terminal) = token_returns(
                        gen,
                        &samples.sequences,
                        cfg.rollouts_k,
                        stride,
                        &mut wrapped,
                        &mut rng(lanes::ROLLOUT),
                    )?;
                    let b_value = baseline.value();
                    for &r in &terminal {
                        baseline.observe(r);
                    }
                    rl = Some(reinforce_loss_graph(&mut g, &samples.log_probs, &returns, b_value)?);
                    base_used = Some(b_value);
                    mean_reward = Some(terminal.iter().sum::<f64>() / terminal.len() as f64);
                }
            }
        }
        (Dataset::Real(_), reward) => {
            if use_gan {
                let fake = gen.sample_real_graph(&mut g, &b, batch, T::of(cfg.sigma_sample), None, &mut rng(lanes::G_SAMPLE))?;
                let db = disc.params.bind_frozen(&mut g);
                let fl = disc.logits_graph(&mut g, &db, &fake.steps)?;
                gan = Some(generator_gan_loss_graph(&mut g, fl));
            }
            if use_rl {
                let Reward::PerStep(f) = reward else {
                    return Err(Error::Config("real data needs a per-step reward".into()));
                };
                let (loss, b_value, mean) = real_policy_term(gen, &mut g, &b, cfg, harness, step, baseline, f.as_mut())?;
                rl = Some(loss);
                base_used = Some(b_value);
                mean_reward = Some(mean);
            }
        }
    }

    let mut total = ml;
    if let Some(v) = gan {
        let w = g.scale(v, T::of(cfg.lambda_gan));
        total = g.add(total, w);
    }
    if let Some(v) = rl {
        let w = g.scale(v, T::of(cfg.alpha_rl));
        total = g.add(total, w);
    }
    let value = |v: Option<Var>| v.map(|v| g.scalar(v).to_f64_lossy()).unwrap_or(0.0);
    let breakdown = LossBreakdown {
        ml_term: g.scalar(ml).to_f64_lossy(),
        gan_term: value(gan),
        rl_term: value(rl),
        total: g.scalar(total).to_f64_lossy(),
    };
    let grads = g.backward(total);
    let grads = gen.params.collect_grads(&b, &grads);
    Ok(GeneratorStep {
        breakdown,
        grads,
        baseline: base_used,
        mean_reward,
    })
}

/// Gaussian-policy surrogate for real-valued sequences. Samples are drawn
/// with the exploration noise on a frozen copy, scored with the per-step
/// reward, and rescored on the live graph: row 1 under the latent decoder at
/// the sampled `z`, later rows under the recurrent head.
#[allow(clippy::too_many_arguments)]
fn real_policy_term<T: Scalar>(
    gen: &Generator<T>,
    g: &mut Graph<T>,
    b: &Bound,
    cfg: &TrainConfig,
    harness: &HarnessConfig,
    step: usize,
    baseline: &mut BaselineState,
    reward: &mut dyn FnMut(&Array2<f64>) -> Result<Vec<f64>>,
) -> Result<(Var, f64, f64)> {
    let batch = harness.batch_size;
    let sigma = T::of(harness.exploration_sigma);
    let (values, z) = {
        let mut fg = Graph::new();
        let fb = gen.params.bind_frozen(&mut fg);
        let s = gen.sample_real_graph(&mut fg, &fb, batch, sigma, None, &mut lane_rng(cfg.seed, step as u64, lanes::EXPLORE))?;
        let vals: Vec<Array2<T>> = (0..batch)
            .map(|r| {
                Array2::from_shape_fn((s.steps.len(), gen.config().output_width()), |(t, c)| fg.value(s.steps[t])[[r, c]])
            })
            .collect();
        (vals, s.z)
    };
    let len = gen.seq_len();
    let mut returns = Array2::zeros((batch, len));
    let mut step_reward_sum = 0.0;
    let mut episode_means = Vec::with_capacity(batch);
    for (r, v) in values.iter().enumerate() {
        let rewards = reward(&v.mapv(|x| x.to_f64_lossy())).map_err(|e| Error::Reward {
            step,
            reason: e.to_string(),
        })?;
        if rewards.len() != len {
            return Err(Error::Reward {
                step,
                reason: format!("{} rewards for {len} steps", rewards.len()),
            });
        }
        let u = discounted_returns(&rewards, cfg.gamma).map_err(|e| Error::Reward {
            step,
            reason: e.to_string(),
        })?;
        for (t, &x) in u.iter().enumerate() {
            returns[[r, t]] = x;
        }
        step_reward_sum += rewards.iter().sum::<f64>() / len as f64;
        episode_means.push(u.iter().sum::<f64>() / len as f64);
    }
    let b_value = baseline.value();
    for m in episode_means {
        baseline.observe(m);
    }
    let seqs: Vec<RealSequence<T>> = values.into_iter().map(RealSequence::new).collect::<Result<_>>()?;
    let refs: Vec<&RealSequence<T>> = seqs.iter().collect();
    let rows = Generator::real_rows(g, &refs);
    let (mut ll, _) = gen.real_log_likelihoods(g, b, &rows, sigma)?;
    let zc = g.constant(z.mapv(T::of));
    let first_mean = gen.decode_latent_graph(g, b, zc)?;
    ll[0] = gaussian_log_density(g, rows[0], first_mean, sigma);
    let loss = reinforce_loss_graph(g, &ll, &returns, b_value)?;
    Ok((loss, b_value, step_reward_sum / batch as f64))
}
