//! Generator and discriminator losses, and the closed-form analysis of the
//! hybrid likelihood + adversarial objective on finite supports.
//!
//! Sign convention: every loss here is minimised.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::discriminator::Discriminator;
use crate::error::{Error, Result};
use crate::generator::{gaussian_log_density, Generator, OutputMode};
use crate::params::Bound;
use crate::rng::standard_normal;
use crate::scalar::{self, Scalar};
use crate::sequence::{RealSequence, TokenSequence};
use crate::tape::{Graph, Var};

/// A sample handed to the likelihood routines.
#[derive(Clone, Copy, Debug)]
pub enum Sample<'a, T> {
    Tokens(&'a TokenSequence),
    Real(&'a RealSequence<T>),
}

/// Per-batch means of the three generator terms and their weighted total.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ml_term: f64,
    pub gan_term: f64,
    pub rl_term: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// `total = ml + λ·gan + α·rl`.
    pub fn assemble(ml_term: f64, gan_term: f64, rl_term: f64, lambda: f64, alpha: f64) -> Self {
        LossBreakdown {
            ml_term,
            gan_term,
            rl_term,
            total: ml_term + lambda * gan_term + alpha * rl_term,
        }
    }

    /// Residual of the linear identity for the given weights.
    pub fn identity_residual(&self, lambda: f64, alpha: f64) -> f64 {
        (self.total - (self.ml_term + lambda * self.gan_term + alpha * self.rl_term)).abs()
    }
}

/// Token-mode lower bound per row: the plain autoregressive log-likelihood.
pub fn token_lower_bound_graph<T: Scalar>(
    gen: &Generator<T>,
    g: &mut Graph<T>,
    b: &Bound,
    seqs: &[TokenSequence],
) -> Result<Var> {
    let (ll, _) = gen.token_log_likelihoods(g, b, seqs)?;
    Ok(g.add_all(&ll))
}

/// Real-mode lower bound per row:
/// `Σ_{i≥2} ℓ_i − KL(q(z|x_1) ‖ N(0,I)) + ln p(x_1 | z)` with
/// `z = μ + σ_q ⊙ eps` (one reparameterised draw, `eps` is `B × d_z`).
pub fn real_lower_bound_graph<T: Scalar>(
    gen: &Generator<T>,
    g: &mut Graph<T>,
    b: &Bound,
    rows: &[Var],
    sigma_train: T,
    eps: &Array2<f64>,
) -> Result<Var> {
    let (ll, _) = gen.real_log_likelihoods(g, b, rows, sigma_train)?;
    let (mu, log_sigma) = gen.encode_latent_graph(g, b, rows[0])?;
    if g.shape(mu) != eps.dim() {
        return Err(Error::Shape(format!(
            "eps is {:?}, expected {:?}",
            eps.dim(),
            g.shape(mu)
        )));
    }
    let kl = Generator::kl_graph(g, mu, log_sigma);
    let sd = g.exp(log_sigma);
    let noise = g.constant(eps.mapv(T::of));
    let spread = g.mul(sd, noise);
    let z = g.add(mu, spread);
    let mean = gen.decode_latent_graph(g, b, z)?;
    let recon = gaussian_log_density(g, rows[0], mean, sigma_train);
    let mut terms: Vec<Var> = ll[1..].to_vec();
    terms.push(recon);
    let total = g.add_all(&terms);
    Ok(g.sub(total, kl))
}

/// Lower bound on `ln p_G(X)` for one sample. Real mode draws one
/// reparameterised latent sample from `rng`.
pub fn sequence_lower_bound<T: Scalar, R: Rng + ?Sized>(
    gen: &Generator<T>,
    sample: Sample<'_, T>,
    sigma_train: T,
    rng: &mut R,
) -> Result<T> {
    let mut g = Graph::new();
    let b = gen.params.bind_frozen(&mut g);
    let v = match (gen.config().mode, sample) {
        (OutputMode::Discrete { .. }, Sample::Tokens(seq)) => {
            token_lower_bound_graph(gen, &mut g, &b, std::slice::from_ref(seq))?
        }
        (OutputMode::Real { .. }, Sample::Real(seq)) => {
            let rows = Generator::real_rows(&mut g, &[seq]);
            let eps = Array2::from_shape_fn((1, gen.config().latent_dim), |_| standard_normal(rng));
            real_lower_bound_graph(gen, &mut g, &b, &rows, sigma_train, &eps)?
        }
        _ => return Err(Error::Shape("sample kind does not match the generator mode".into())),
    };
    Ok(g.scalar(v))
}

/// `−mean[y ln D(X_real) + (1−y) ln(1 − D(X_real))] − mean[ln(1 − D(X_fake))]`
/// from pre-sigmoid scores; `y` is the real label (1 without smoothing).
pub fn discriminator_loss_graph<T: Scalar>(
    g: &mut Graph<T>,
    real_logits: Var,
    fake_logits: Var,
    real_label: T,
) -> Var {
    let log_d_real = g.log_sigmoid(real_logits);
    let mut real_term = g.mean_all(log_d_real);
    if real_label != T::one() {
        let neg = g.scale(real_logits, -T::one());
        let log_not_real = g.log_sigmoid(neg);
        let m = g.mean_all(log_not_real);
        let a = g.scale(real_term, real_label);
        let c = g.scale(m, T::one() - real_label);
        real_term = g.add(a, c);
    }
    let neg_fake = g.scale(fake_logits, -T::one());
    let log_not_fake = g.log_sigmoid(neg_fake);
    let fake_term = g.mean_all(log_not_fake);
    let s = g.add(real_term, fake_term);
    g.scale(s, -T::one())
}

/// Non-saturating generator loss `−mean[ln D(G(z))]`.
pub fn generator_gan_loss_graph<T: Scalar>(g: &mut Graph<T>, fake_logits: Var) -> Var {
    let l = g.log_sigmoid(fake_logits);
    let m = g.mean_all(l);
    g.scale(m, -T::one())
}

/// Discriminator loss from probabilities already computed.
pub fn discriminator_loss_from_scores<T: Scalar>(real: &[T], fake: &[T]) -> Result<T> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::Shape("discriminator loss needs non-empty batches".into()));
    }
    let mean = |xs: &[T], f: &dyn Fn(T) -> T| xs.iter().map(|&x| f(x)).sum::<T>() / T::of(xs.len() as f64);
    Ok(-mean(real, &|d| d.ln()) - mean(fake, &|d| (T::one() - d).ln()))
}

/// `−mean[ln D(X_real)] − mean[ln(1 − D(X_fake))]` for batches of `T × W` inputs.
pub fn discriminator_loss<T: Scalar>(d: &Discriminator<T>, real: &[Array2<T>], fake: &[Array2<T>]) -> Result<T> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::Shape("discriminator loss needs non-empty batches".into()));
    }
    let mut g = Graph::new();
    let b = d.params.bind_frozen(&mut g);
    let rs = crate::discriminator::stack_steps(&mut g, real, false);
    let fs = crate::discriminator::stack_steps(&mut g, fake, false);
    let rl = d.logits_graph(&mut g, &b, &rs)?;
    let fl = d.logits_graph(&mut g, &b, &fs)?;
    let loss = discriminator_loss_graph(&mut g, rl, fl, T::one());
    Ok(g.scalar(loss))
}

/// `−mean[ln D(X_fake)]`.
pub fn generator_gan_loss<T: Scalar>(d: &Discriminator<T>, fake: &[Array2<T>]) -> Result<T> {
    if fake.is_empty() {
        return Err(Error::Shape("generator loss needs a non-empty batch".into()));
    }
    let scores = d.batch_score(fake)?;
    Ok(-scores.iter().map(|&s| s.ln()).sum::<T>() / T::of(scores.len() as f64))
}

/// Assembles the generator objective for a batch: the negated mean lower
/// bound on `real_batch`, the adversarial term on `fake_batch`, and a
/// precomputed policy-gradient surrogate.
pub fn total_generator_loss<T: Scalar, R: Rng + ?Sized>(
    gen: &Generator<T>,
    d: &Discriminator<T>,
    real_batch: &[Sample<'_, T>],
    fake_batch: &[Array2<T>],
    rl_loss: f64,
    lambda: f64,
    alpha: f64,
    sigma_train: T,
    rng: &mut R,
) -> Result<LossBreakdown> {
    if real_batch.is_empty() {
        return Err(Error::Shape("empty real batch".into()));
    }
    let mut ml = 0.0;
    for &s in real_batch {
        ml -= sequence_lower_bound(gen, s, sigma_train, rng)?.to_f64_lossy();
    }
    ml /= real_batch.len() as f64;
    let gan = if lambda == 0.0 {
        0.0
    } else {
        generator_gan_loss(d, fake_batch)?.to_f64_lossy()
    };
    let rl = if alpha == 0.0 { 0.0 } else { rl_loss };
    Ok(LossBreakdown::assemble(ml, gan, rl, lambda, alpha))
}

/// Probability vector over a small explicit support.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteDistribution<T> {
    probs: Vec<T>,
}

impl<T: Scalar> FiniteDistribution<T> {
    pub fn new(probs: Vec<T>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Distribution("empty support".into()));
        }
        if let Some(p) = probs.iter().find(|&&p| !(p >= T::zero()) || !p.is_finite()) {
            return Err(Error::Distribution(format!("negative or non-finite mass {p}")));
        }
        let total: T = probs.iter().cloned().sum();
        let tol = T::of(1e-12).max(T::epsilon() * T::of(4.0 * probs.len() as f64));
        if (total - T::one()).abs() > tol {
            return Err(Error::Distribution(format!("masses sum to {total}")));
        }
        Ok(FiniteDistribution { probs })
    }

    /// Normalises non-negative weights.
    pub fn from_weights(weights: &[T]) -> Result<Self> {
        let total: T = weights.iter().cloned().sum();
        if !(total > T::zero()) {
            return Err(Error::Distribution("weights must have positive total".into()));
        }
        Self::new(weights.iter().map(|&w| w / total).collect())
    }

    /// Draws a point from the flat Dirichlet over `size` outcomes.
    pub fn random<R: Rng + ?Sized>(size: usize, rng: &mut R) -> Self {
        let w: Vec<T> = (0..size)
            .map(|_| T::of(-(1.0 - rng.random::<f64>()).ln()))
            .collect();
        Self::from_weights(&w).expect("exponential weights are positive")
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> T {
        -self
            .probs
            .iter()
            .filter(|&&p| p > T::zero())
            .map(|&p| p * p.ln())
            .sum::<T>()
    }
}

fn aligned<T: Scalar>(p: &FiniteDistribution<T>, q: &FiniteDistribution<T>) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::Distribution(format!(
            "support sizes differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    Ok(())
}

/// `D*(x) = p_d(x) / (p_d(x) + p_g(x))`, ½ where both vanish.
pub fn optimal_discriminator<T: Scalar>(p_d: &FiniteDistribution<T>, p_g: &FiniteDistribution<T>) -> Result<Vec<T>> {
    aligned(p_d, p_g)?;
    Ok(p_d
        .probs
        .iter()
        .zip(&p_g.probs)
        .map(|(&a, &b)| {
            if a + b == T::zero() {
                T::of(0.5)
            } else {
                a / (a + b)
            }
        })
        .collect())
}

/// `KL(p ‖ q)` in nats; requires `q > 0` wherever `p > 0`.
pub fn kl<T: Scalar>(p: &FiniteDistribution<T>, q: &FiniteDistribution<T>) -> Result<T> {
    aligned(p, q)?;
    let mut total = T::zero();
    for (i, (&a, &b)) in p.probs.iter().zip(&q.probs).enumerate() {
        if a > T::zero() {
            if b <= T::zero() {
                return Err(Error::Distribution(format!(
                    "KL undefined: q({i}) = 0 where p({i}) > 0"
                )));
            }
            total += a * (a / b).ln();
        }
    }
    Ok(total.max(T::zero()))
}

/// Jensen–Shannon divergence in nats, in `[0, ln 2]`.
pub fn js<T: Scalar>(p: &FiniteDistribution<T>, q: &FiniteDistribution<T>) -> Result<T> {
    aligned(p, q)?;
    let half = T::of(0.5);
    let mut total = T::zero();
    for (&a, &b) in p.probs.iter().zip(&q.probs) {
        let m = half * (a + b);
        if a > T::zero() {
            total += half * a * (a / m).ln();
        }
        if b > T::zero() {
            total += half * b * (b / m).ln();
        }
    }
    Ok(total.max(T::zero()).min(T::LN_2()))
}

/// The minimax objective with the optimal discriminator substituted:
/// `Σ p_d ln p_g − Σ p_d ln D* − Σ p_g ln(1 − D*)`.
pub fn plugged_objective<T: Scalar>(p_d: &FiniteDistribution<T>, p_g: &FiniteDistribution<T>) -> Result<T> {
    let d_star = optimal_discriminator(p_d, p_g)?;
    let mut total = T::zero();
    for (i, ((&pd, &pg), &ds)) in p_d.probs.iter().zip(&p_g.probs).zip(&d_star).enumerate() {
        if pd > T::zero() {
            if pg <= T::zero() {
                return Err(Error::Distribution(format!(
                    "ln p_g undefined at {i}: p_g = 0 where p_d > 0"
                )));
            }
            total += pd * pg.ln() - pd * ds.ln();
        }
        if pg > T::zero() {
            total -= pg * (T::one() - ds).ln();
        }
    }
    Ok(total)
}

/// `−KL − 2·JS + ln 4 − H(p_d)`, the closed form `plugged_objective` equals.
pub fn divergence_form<T: Scalar>(p_d: &FiniteDistribution<T>, p_g: &FiniteDistribution<T>) -> Result<T> {
    Ok(-kl(p_d, p_g)? - T::of(2.0) * js(p_d, p_g)? + T::of(4.0f64.ln()) - p_d.entropy())
}

/// Inner discriminator objective at one support point:
/// `−p_d ln D − p_g ln(1 − D)`.
pub fn inner_objective<T: Scalar>(p_d: T, p_g: T, d: T) -> T {
    let term = |p: T, v: T| if p > T::zero() { p * v.ln() } else { T::zero() };
    -term(p_d, d) - term(p_g, T::one() - d)
}

/// Mean log-sigmoid helper used by tests and the harness.
pub fn mean_log_sigmoid<T: Scalar>(logits: &[T]) -> T {
    logits.iter().map(|&l| -scalar::softplus(-l)).sum::<T>() / T::of(logits.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discriminator::DiscriminatorConfig;
    use crate::generator::GeneratorConfig;
    use crate::rng::rng_from;

    fn fd(p: &[f64]) -> FiniteDistribution<f64> {
        FiniteDistribution::new(p.to_vec()).unwrap()
    }

    #[test]
    fn optimal_discriminator_cases() {
        let p = fd(&[0.2, 0.3, 0.5]);
        assert_eq!(optimal_discriminator(&p, &p).unwrap(), vec![0.5; 3]);
        assert_eq!(optimal_discriminator(&fd(&[1.0, 0.0]), &fd(&[0.0, 1.0])).unwrap(), vec![1.0, 0.0]);
        let both_zero = optimal_discriminator(&fd(&[1.0, 0.0]), &fd(&[1.0, 0.0])).unwrap();
        assert_eq!(both_zero, vec![0.5, 0.5]);
        assert!(optimal_discriminator(&fd(&[1.0]), &fd(&[0.5, 0.5])).is_err());
    }

    #[test]
    fn identity_at_equal_distributions() {
        let p = fd(&[0.1, 0.2, 0.3, 0.4]);
        let lhs = plugged_objective(&p, &p).unwrap();
        assert!((lhs - (4.0f64.ln() - p.entropy())).abs() < 1e-12);
        assert_eq!(kl(&p, &p).unwrap(), 0.0);
        assert!(js(&p, &p).unwrap().abs() < 1e-15);
    }

    #[test]
    fn identity_for_two_point_example() {
        let pd = fd(&[0.5, 0.5]);
        let pg = fd(&[0.9, 0.1]);
        // Direct summation of both sides with no shared helpers.
        let d0: f64 = 0.5 / 1.4;
        let d1: f64 = 0.5 / 0.6;
        let lhs = 0.5 * 0.9f64.ln() + 0.5 * 0.1f64.ln() - 0.5 * d0.ln() - 0.5 * d1.ln()
            - 0.9 * (1.0 - d0).ln()
            - 0.1 * (1.0 - d1).ln();
        let kl_v = 0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln();
        let js_v = 0.5 * (0.5 * (0.5f64 / 0.7).ln() + 0.5 * (0.5f64 / 0.3).ln())
            + 0.5 * (0.9 * (0.9f64 / 0.7).ln() + 0.1 * (0.1f64 / 0.3).ln());
        let rhs = -kl_v - 2.0 * js_v + 4.0f64.ln() - 2.0f64.ln();
        assert!((lhs - rhs).abs() < 1e-12);
        assert!((plugged_objective(&pd, &pg).unwrap() - lhs).abs() < 1e-12);
        assert!((divergence_form(&pd, &pg).unwrap() - rhs).abs() < 1e-12);
    }

    #[test]
    fn divergences_reject_bad_supports() {
        assert!(kl(&fd(&[0.5, 0.5]), &fd(&[1.0, 0.0])).is_err());
        assert!(plugged_objective(&fd(&[0.5, 0.5]), &fd(&[1.0, 0.0])).is_err());
        assert!(FiniteDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(FiniteDistribution::new(vec![-0.5, 1.5]).is_err());
        // Disjoint supports: JS saturates at ln 2.
        assert!((js(&fd(&[1.0, 0.0]), &fd(&[0.0, 1.0])).unwrap() - 2.0f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn argmin_of_divergence_sum_is_data_distribution() {
        let pd = fd(&[0.3, 0.7]);
        let mut best = (f64::INFINITY, 0.0);
        for k in 1..1000 {
            let q = k as f64 / 1000.0;
            let pg = fd(&[q, 1.0 - q]);
            let v = kl(&pd, &pg).unwrap() + js(&pd, &pg).unwrap();
            if v < best.0 {
                best = (v, q);
            }
        }
        assert!((best.1 - 0.3).abs() < 1e-9);
    }

    #[test]
    fn discriminator_loss_limits() {
        let half = vec![0.5f64; 4];
        assert!((discriminator_loss_from_scores(&half, &half).unwrap() - 2.0 * 2.0f64.ln()).abs() < 1e-15);
        let l = discriminator_loss_from_scores(&[1.0 - 1e-9], &[1e-9]).unwrap();
        assert!(l > 0.0 && l < 1e-8);
        assert!(discriminator_loss_from_scores::<f64>(&[], &half).is_err());
    }

    #[test]
    fn zero_head_losses() {
        let cfg = DiscriminatorConfig { input_width: 3, seq_len: 2, embed_dim: 2, hidden: 2, row_stochastic: false };
        let mut d = Discriminator::<f64>::new(cfg, &mut rng_from(0)).unwrap();
        d.zero_head();
        let x = vec![Array2::from_elem((2, 3), 0.3); 3];
        assert!((discriminator_loss(&d, &x, &x).unwrap() - 2.0 * 2.0f64.ln()).abs() < 1e-12);
        assert!((generator_gan_loss(&d, &x).unwrap() - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn label_smoothing_changes_real_term_only() {
        let mut g = Graph::<f64>::new();
        let r = g.constant(Array2::from_elem((2, 1), 0.0));
        let f = g.constant(Array2::from_elem((2, 1), 0.0));
        let plain = discriminator_loss_graph(&mut g, r, f, 1.0);
        let smooth = discriminator_loss_graph(&mut g, r, f, 0.9);
        // At D = ½ both label choices cost ln 2 on the real half.
        assert!((g.scalar(plain) - g.scalar(smooth)).abs() < 1e-15);
        let r2 = g.constant(Array2::from_elem((2, 1), 3.0));
        let plain = discriminator_loss_graph(&mut g, r2, f, 1.0);
        let smooth = discriminator_loss_graph(&mut g, r2, f, 0.9);
        assert!(g.scalar(smooth) > g.scalar(plain));
    }

    #[test]
    fn uniform_token_bound() {
        let mut cfg = GeneratorConfig::text(2, 0, 1, 3);
        cfg.hidden = 2;
        cfg.embed_dim = 2;
        let mut gen = Generator::<f64>::new(cfg, &mut rng_from(0)).unwrap();
        for name in ["gen.output.weight", "gen.output.bias"] {
            let id = gen.params.find(name).unwrap();
            gen.params.get_mut(id).fill(0.0);
        }
        let seq = TokenSequence { ids: vec![1, 1, 1], true_length: 3 };
        let v = sequence_lower_bound(&gen, Sample::Tokens(&seq), 1.0, &mut rng_from(1)).unwrap();
        assert!((v - 3.0 * 0.5f64.ln()).abs() < 1e-12);
        let real = RealSequence::new(Array2::zeros((3, 2))).unwrap();
        assert!(sequence_lower_bound(&gen, Sample::Real(&real), 1.0, &mut rng_from(1)).is_err());
    }

    #[test]
    fn breakdown_is_linear() {
        let b = LossBreakdown::assemble(1.5, 0.7, -0.2, 0.2, 0.75);
        assert_eq!(b.identity_residual(0.2, 0.75), 0.0);
        let pure = LossBreakdown::assemble(1.5, 0.7, -0.2, 0.0, 0.0);
        assert_eq!(pure.total, pure.ml_term);
    }
}
