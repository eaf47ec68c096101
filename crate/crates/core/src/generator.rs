//! Autoregressive generator with a softmax head for tokens and a Gaussian
//! head for real-valued features.
//!
//! Token mode feeds a fixed start symbol at position 0 and samples every
//! later symbol through the Gumbel-max trick, keeping the tempered softmax
//! relaxation for the discriminator. Real mode draws `z ~ N(0, I)`, decodes
//! the first row from it, and then follows the recurrence with
//! `x_i = W_o h_{i-1} + σ ε`.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{top, Linear, Lstm, LstmState};
use crate::params::{Bound, ParamId, ParamStore};
use crate::rng::{gumbel, standard_normal};
use crate::scalar::Scalar;
use crate::sequence::{RealSequence, TokenSequence};
use crate::tape::{softmax_rows, Graph, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputMode {
    Discrete {
        vocab_size: usize,
        pad_id: usize,
        start_id: usize,
    },
    Real {
        features: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub mode: OutputMode,
    pub seq_len: usize,
    pub hidden: usize,
    pub layers: usize,
    /// Token embedding width (token mode only).
    pub embed_dim: usize,
    /// Latent width `d_z` (real mode only).
    pub latent_dim: usize,
    /// Hidden width of the latent encoder and decoder (real mode only).
    pub latent_hidden: usize,
}

impl GeneratorConfig {
    /// Desk-scale text model: one 64-unit layer.
    pub fn text(vocab_size: usize, pad_id: usize, start_id: usize, seq_len: usize) -> Self {
        GeneratorConfig {
            mode: OutputMode::Discrete {
                vocab_size,
                pad_id,
                start_id,
            },
            seq_len,
            hidden: 64,
            layers: 1,
            embed_dim: 32,
            latent_dim: 0,
            latent_hidden: 0,
        }
    }

    /// Trajectory model: two 256-unit layers, 10-d latent with 12 hidden units.
    pub fn trajectory(features: usize, seq_len: usize) -> Self {
        GeneratorConfig {
            mode: OutputMode::Real { features },
            seq_len,
            hidden: 256,
            layers: 2,
            embed_dim: 0,
            latent_dim: 10,
            latent_hidden: 12,
        }
    }

    pub fn output_width(&self) -> usize {
        match self.mode {
            OutputMode::Discrete { vocab_size, .. } => vocab_size,
            OutputMode::Real { features } => features,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seq_len == 0 || self.hidden == 0 || self.layers == 0 {
            return Err(Error::Config("generator sizes must be positive".into()));
        }
        match self.mode {
            OutputMode::Discrete {
                vocab_size,
                pad_id,
                start_id,
            } => {
                if vocab_size < 2 || pad_id >= vocab_size || start_id >= vocab_size || pad_id == start_id {
                    return Err(Error::Config("invalid token specials".into()));
                }
                if self.embed_dim == 0 {
                    return Err(Error::Config("embed_dim must be positive".into()));
                }
            }
            OutputMode::Real { features } => {
                if features == 0 || self.latent_dim == 0 || self.latent_hidden == 0 {
                    return Err(Error::Config("real-mode sizes must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Layout {
    embedding: Option<ParamId>,
    lstm: Lstm,
    output: Linear,
    latent: Option<LatentLayout>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct LatentLayout {
    enc_hidden: Linear,
    enc_mu: Linear,
    enc_log_sigma: Linear,
    dec_hidden: Linear,
    dec_out: Linear,
}

/// Per-layer recurrent state of one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenState<T> {
    pub h: Vec<Array1<T>>,
    pub c: Vec<Array1<T>>,
}

/// Approximate posterior `q(z | x_1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentPosterior<T> {
    pub mu: Vec<T>,
    pub sigma_q: Vec<T>,
}

/// Output of token-mode sampling on a graph.
#[derive(Debug)]
pub struct TokenSamples {
    pub sequences: Vec<TokenSequence>,
    /// Per step, `B × V` relaxed one-hot rows (pad rows are exact one-hots).
    pub soft: Vec<Var>,
    /// Per step, `B × 1` log-probabilities of the emitted symbols, zero past
    /// the end marker.
    pub log_probs: Vec<Var>,
}

/// Output of real-mode sampling on a graph.
#[derive(Debug)]
pub struct RealSamples {
    pub z: Array2<f64>,
    /// Per step, `B × F` emitted rows; differentiable through the recurrence.
    pub steps: Vec<Var>,
}

/// One sampled token sequence with its bookkeeping, off the graph.
#[derive(Clone, Debug)]
pub struct SampledTokens<T> {
    pub sequence: TokenSequence,
    pub log_probs: Vec<T>,
    pub soft: Array2<T>,
}

/// One sampled real sequence, off the graph.
#[derive(Clone, Debug)]
pub struct SampledReal<T> {
    pub sequence: RealSequence<T>,
    pub z: Vec<f64>,
    /// Teacher-forced log-densities of the emitted rows under `σ_train`.
    pub log_probs: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator<T> {
    config: GeneratorConfig,
    layout: Layout,
    pub params: ParamStore<T>,
}

/// `ln N(x; mean, σ² I)` summed over columns, as a `B × 1` column.
pub fn gaussian_log_density<T: Scalar>(g: &mut Graph<T>, x: Var, mean: Var, sigma: T) -> Var {
    let width = g.shape(x).1;
    let diff = g.sub(x, mean);
    let sq = g.square(diff);
    let total = g.sum_cols(sq);
    let scaled = g.scale(total, T::of(-0.5) / (sigma * sigma));
    let norm = T::of(width as f64) * (sigma.ln() + T::of(0.5 * (2.0 * std::f64::consts::PI).ln()));
    g.offset(scaled, -norm)
}

/// Draws a relaxed and a hard categorical sample from `logits`.
///
/// Returns `(softmax((logits + g) / tau), argmax(logits + g))` with `g`
/// i.i.d. standard Gumbel noise.
pub fn gumbel_softmax_sample<T: Scalar, R: Rng + ?Sized>(
    logits: &[T],
    tau: T,
    rng: &mut R,
) -> (Vec<T>, usize) {
    assert!(tau > T::zero(), "temperature must be positive");
    let perturbed: Vec<T> = logits.iter().map(|&l| l + T::of(gumbel(rng))).collect();
    let hot = argmax(&perturbed);
    let scaled = Array2::from_shape_fn((1, perturbed.len()), |(_, j)| perturbed[j] / tau);
    let soft = softmax_rows(&scaled).into_raw_vec_and_offset().0;
    (soft, hot)
}

fn argmax<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

impl<T: Scalar> Generator<T> {
    pub fn new<R: Rng + ?Sized>(config: GeneratorConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let width = config.output_width();
        let (embedding, lstm_in, latent) = match config.mode {
            OutputMode::Discrete { vocab_size, .. } => {
                let e = params.add_glorot("gen.embedding", vocab_size, config.embed_dim, rng);
                (Some(e), config.embed_dim, None)
            }
            OutputMode::Real { features } => {
                let lh = config.latent_hidden;
                let dz = config.latent_dim;
                let latent = LatentLayout {
                    enc_hidden: Linear::new(&mut params, "gen.enc_hidden", features, lh, rng),
                    enc_mu: Linear::new(&mut params, "gen.enc_mu", lh, dz, rng),
                    enc_log_sigma: Linear::new(&mut params, "gen.enc_log_sigma", lh, dz, rng),
                    dec_hidden: Linear::new(&mut params, "gen.dec_hidden", dz, lh, rng),
                    dec_out: Linear::new(&mut params, "gen.dec_out", lh, features, rng),
                };
                (None, features, Some(latent))
            }
        };
        let lstm = Lstm::new(&mut params, "gen.lstm", lstm_in, config.hidden, config.layers, rng);
        let output = Linear::new(&mut params, "gen.output", config.hidden, width, rng);
        Ok(Generator {
            config,
            layout: Layout {
                embedding,
                lstm,
                output,
                latent,
            },
            params,
        })
    }

    /// Rebuilds a generator around stored parameters, checking their layout.
    pub fn from_params(config: GeneratorConfig, params: ParamStore<T>) -> Result<Self> {
        let mut rng = crate::rng::rng_from(0);
        let mut gen = Generator::new(config, &mut rng)?;
        gen.params.check_layout(&params)?;
        gen.params = params;
        Ok(gen)
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn seq_len(&self) -> usize {
        self.config.seq_len
    }

    fn discrete(&self) -> Result<(usize, usize, usize)> {
        match self.config.mode {
            OutputMode::Discrete {
                vocab_size,
                pad_id,
                start_id,
            } => Ok((vocab_size, pad_id, start_id)),
            OutputMode::Real { .. } => Err(Error::Shape("generator is in real-valued mode".into())),
        }
    }

    fn real(&self) -> Result<(usize, &LatentLayout)> {
        match (self.config.mode, &self.layout.latent) {
            (OutputMode::Real { features }, Some(latent)) => Ok((features, latent)),
            _ => Err(Error::Shape("generator is in token mode".into())),
        }
    }

    fn embed(&self, g: &mut Graph<T>, b: &Bound, ids: Vec<usize>) -> Var {
        let table = b.var(self.layout.embedding.expect("token mode has an embedding"));
        g.gather_rows(table, ids)
    }

    fn head(&self, g: &mut Graph<T>, b: &Bound, states: &[LstmState]) -> Var {
        self.layout.output.forward(g, b, top(states))
    }

    fn check_tokens(&self, seqs: &[TokenSequence]) -> Result<()> {
        let (v, pad, _) = self.discrete()?;
        for s in seqs {
            if s.len() != self.config.seq_len {
                return Err(Error::Shape(format!(
                    "sequence length {} != {}",
                    s.len(),
                    self.config.seq_len
                )));
            }
            if let Some(&id) = s.ids.iter().find(|&&i| i >= v) {
                return Err(Error::IdOutOfRange { id, size: v });
            }
            if !s.is_valid(v, pad) {
                return Err(Error::Shape("tokens after the end marker must be pads".into()));
            }
        }
        Ok(())
    }

    /// Teacher-forced per-step log-likelihoods `ℓ_i = log softmax(W_o h_{i-1})[x_i]`,
    /// each `B × 1`, zero at positions past the end marker.
    pub fn token_log_likelihoods(
        &self,
        g: &mut Graph<T>,
        b: &Bound,
        seqs: &[TokenSequence],
    ) -> Result<(Vec<Var>, Vec<LstmState>)> {
        self.check_tokens(seqs)?;
        let (_, _, start) = self.discrete()?;
        let batch = seqs.len();
        let mut states = self.layout.lstm.zero_state(g, batch);
        let mut out = Vec::with_capacity(self.config.seq_len);
        for i in 0..self.config.seq_len {
            let inputs: Vec<usize> = seqs
                .iter()
                .map(|s| if i == 0 { start } else { s.ids[i - 1] })
                .collect();
            let x = self.embed(g, b, inputs);
            states = self.layout.lstm.step(g, b, x, &states);
            let logits = self.head(g, b, &states);
            let lsm = g.log_softmax(logits);
            let picked = g.pick(lsm, seqs.iter().map(|s| s.ids[i]).collect());
            let mask = Array2::from_shape_fn((batch, 1), |(r, _)| {
                if i < seqs[r].scored_length() {
                    T::one()
                } else {
                    T::zero()
                }
            });
            let mask = g.constant(mask);
            out.push(g.mul(picked, mask));
        }
        Ok((out, states))
    }

    /// Teacher-forced Gaussian log-densities of rows `x_1..x_T`; row `i` is
    /// scored under `N(W_o h_{i-1}, σ² I)` where `h_0` is the zero state.
    pub fn real_log_likelihoods(
        &self,
        g: &mut Graph<T>,
        b: &Bound,
        rows: &[Var],
        sigma: T,
    ) -> Result<(Vec<Var>, Vec<LstmState>)> {
        let (features, _) = self.real()?;
        if rows.len() != self.config.seq_len {
            return Err(Error::Shape(format!(
                "expected {} rows, got {}",
                self.config.seq_len,
                rows.len()
            )));
        }
        let batch = g.shape(rows[0]).0;
        if rows.iter().any(|&r| g.shape(r) != (batch, features)) {
            return Err(Error::Shape(format!("rows must be {batch} x {features}")));
        }
        let mut states = self.layout.lstm.zero_state(g, batch);
        let mut out = Vec::with_capacity(rows.len());
        for (i, &x) in rows.iter().enumerate() {
            if i > 0 {
                states = self.layout.lstm.step(g, b, rows[i - 1], &states);
            }
            let mean = self.head(g, b, &states);
            out.push(gaussian_log_density(g, x, mean, sigma));
        }
        // Final state has consumed every row but the last.
        Ok((out, states))
    }

    /// Stacks row `i` of every sequence into a `B × F` constant.
    pub fn real_rows(g: &mut Graph<T>, seqs: &[&RealSequence<T>]) -> Vec<Var> {
        let steps = seqs[0].steps();
        (0..steps)
            .map(|i| {
                let m = Array2::from_shape_fn((seqs.len(), seqs[0].features()), |(r, c)| {
                    seqs[r].values[[i, c]]
                });
                g.constant(m)
            })
            .collect()
    }

    /// Latent encoder: `(μ, ln σ_q)` for a `B × F` batch of first rows.
    pub fn encode_latent_graph(&self, g: &mut Graph<T>, b: &Bound, x1: Var) -> Result<(Var, Var)> {
        let (_, lat) = self.real()?;
        let h = lat.enc_hidden.forward(g, b, x1);
        let h = g.tanh(h);
        let mu = lat.enc_mu.forward(g, b, h);
        let log_sigma = lat.enc_log_sigma.forward(g, b, h);
        Ok((mu, log_sigma))
    }

    /// Latent decoder: mean of `p(x_1 | z)`.
    pub fn decode_latent_graph(&self, g: &mut Graph<T>, b: &Bound, z: Var) -> Result<Var> {
        let (_, lat) = self.real()?;
        let h = lat.dec_hidden.forward(g, b, z);
        let h = g.tanh(h);
        Ok(lat.dec_out.forward(g, b, h))
    }

    /// `KL(N(μ, σ_q²) ‖ N(0, I))` per row, `B × 1`.
    pub fn kl_graph(g: &mut Graph<T>, mu: Var, log_sigma: Var) -> Var {
        let mu2 = g.square(mu);
        let two_ls = g.scale(log_sigma, T::of(2.0));
        let var = g.exp(two_ls);
        let a = g.add(mu2, var);
        let a = g.sub(a, two_ls);
        let a = g.offset(a, -T::one());
        let s = g.sum_cols(a);
        g.scale(s, T::of(0.5))
    }

    pub fn encode_latent(&self, x1: &[T]) -> Result<LatentPosterior<T>> {
        let (features, _) = self.real()?;
        if x1.len() != features {
            return Err(Error::Shape(format!("x1 has {} features, expected {features}", x1.len())));
        }
        let mut g = Graph::new();
        let b = self.params.bind_frozen(&mut g);
        let x = g.constant(Array2::from_shape_vec((1, features), x1.to_vec()).expect("shape"));
        let (mu, ls) = self.encode_latent_graph(&mut g, &b, x)?;
        Ok(LatentPosterior {
            mu: g.value(mu).iter().cloned().collect(),
            sigma_q: g.value(ls).iter().map(|v| v.exp()).collect(),
        })
    }

    /// Token-mode sampling on a graph. With `prefix`, the first `prefix[r].len()`
    /// symbols of row `r` are forced (no log-probability, no relaxation
    /// gradient) and the remainder is sampled.
    pub fn sample_tokens_graph<R: Rng + ?Sized>(
        &self,
        g: &mut Graph<T>,
        b: &Bound,
        batch: usize,
        tau: T,
        prefix: Option<&[Vec<usize>]>,
        rng: &mut R,
    ) -> Result<TokenSamples> {
        let (v, pad, start) = self.discrete()?;
        if tau <= T::zero() {
            return Err(Error::Config("temperature must be positive".into()));
        }
        let len = self.config.seq_len;
        let mut states = self.layout.lstm.zero_state(g, batch);
        let mut ids = vec![Vec::with_capacity(len); batch];
        let mut finished = vec![false; batch];
        let mut soft = Vec::with_capacity(len);
        let mut log_probs = Vec::with_capacity(len);
        let mut input = vec![start; batch];
        for i in 0..len {
            let x = self.embed(g, b, input.clone());
            states = self.layout.lstm.step(g, b, x, &states);
            let logits = self.head(g, b, &states);
            let forced: Vec<Option<usize>> = (0..batch)
                .map(|r| prefix.and_then(|p| p[r].get(i).copied()))
                .collect();
            if forced.iter().all(Option::is_some) {
                for r in 0..batch {
                    let t = forced[r].unwrap();
                    ids[r].push(t);
                    finished[r] |= t == pad;
                }
                let rows = Array2::from_shape_fn((batch, v), |(r, j)| {
                    if j == forced[r].unwrap() { T::one() } else { T::zero() }
                });
                soft.push(g.constant(rows));
                log_probs.push(g.constant(Array2::zeros((batch, 1))));
                input = forced.iter().map(|t| t.unwrap()).collect();
                continue;
            }
            let noise = Array2::from_shape_fn((batch, v), |_| T::of(gumbel(rng)));
            let lv = g.value(logits);
            let mut hard = vec![pad; batch];
            // 1 where the symbol was sampled at this step, 0 when forced.
            let mut active = vec![T::zero(); batch];
            for r in 0..batch {
                if let Some(t) = forced[r] {
                    hard[r] = t;
                } else if finished[r] {
                    hard[r] = pad;
                } else {
                    let perturbed: Vec<T> = (0..v).map(|j| lv[[r, j]] + noise[[r, j]]).collect();
                    hard[r] = argmax(&perturbed);
                    active[r] = T::one();
                }
            }
            let noise = g.constant(noise);
            let perturbed = g.add(logits, noise);
            let tempered = g.scale(perturbed, T::one() / tau);
            let relaxed = g.softmax(tempered);
            let keep = g.constant(Array2::from_shape_fn((batch, 1), |(r, _)| active[r]));
            let keep_wide = g.constant(Array2::from_shape_fn((batch, v), |(r, _)| active[r]));
            let fixed = Array2::from_shape_fn((batch, v), |(r, j)| {
                if active[r] > T::zero() {
                    T::zero()
                } else if j == hard[r] {
                    T::one()
                } else {
                    T::zero()
                }
            });
            let relaxed = g.mul(relaxed, keep_wide);
            let fixed = g.constant(fixed);
            soft.push(g.add(relaxed, fixed));
            let lsm = g.log_softmax(logits);
            let picked = g.pick(lsm, hard.clone());
            log_probs.push(g.mul(picked, keep));
            for r in 0..batch {
                ids[r].push(hard[r]);
                finished[r] |= hard[r] == pad;
            }
            input = hard;
        }
        let sequences = ids
            .into_iter()
            .map(|row| {
                let mut seq = TokenSequence::from_ids(row, pad);
                // Everything after the end marker is pad by construction.
                let tl = seq.true_length;
                for id in seq.ids[tl..].iter_mut() {
                    *id = pad;
                }
                seq
            })
            .collect();
        Ok(TokenSamples {
            sequences,
            soft,
            log_probs,
        })
    }

    /// Real-mode sampling on a graph: `z ~ N(0, I)` unless given, `x_1` from
    /// the latent decoder, then `x_i = W_o h_{i-1} + σ ε`.
    pub fn sample_real_graph<R: Rng + ?Sized>(
        &self,
        g: &mut Graph<T>,
        b: &Bound,
        batch: usize,
        sigma: T,
        z: Option<Array2<f64>>,
        rng: &mut R,
    ) -> Result<RealSamples> {
        let (features, _) = self.real()?;
        let dz = self.config.latent_dim;
        let z = match z {
            Some(z) if z.dim() == (batch, dz) => z,
            Some(z) => return Err(Error::Shape(format!("z is {:?}, expected ({batch}, {dz})", z.dim()))),
            None => Array2::from_shape_fn((batch, dz), |_| standard_normal(rng)),
        };
        let zv = g.constant(z.mapv(T::of));
        let mut x = self.decode_latent_graph(g, b, zv)?;
        let mut steps = Vec::with_capacity(self.config.seq_len);
        let mut states = self.layout.lstm.zero_state(g, batch);
        for i in 0..self.config.seq_len {
            if i > 0 {
                states = self.layout.lstm.step(g, b, steps[i - 1], &states);
                x = self.head(g, b, &states);
            }
            if sigma > T::zero() {
                let eps = Array2::from_shape_fn((batch, features), |_| T::of(standard_normal(rng)) * sigma);
                let eps = g.constant(eps);
                x = g.add(x, eps);
            }
            steps.push(x);
        }
        Ok(RealSamples { z, steps })
    }

    /// Teacher-forced scoring of one token sequence.
    pub fn forward_teacher_forced_tokens(&self, seq: &TokenSequence) -> Result<(Vec<T>, HiddenState<T>)> {
        let mut g = Graph::new();
        let b = self.params.bind_frozen(&mut g);
        let (ll, states) = self.token_log_likelihoods(&mut g, &b, std::slice::from_ref(seq))?;
        Ok((ll.iter().map(|&v| g.scalar(v)).collect(), hidden_of(&g, &states, 0)))
    }

    /// Teacher-forced scoring of one real sequence under `N(·, σ_train² I)`.
    pub fn forward_teacher_forced_real(
        &self,
        seq: &RealSequence<T>,
        sigma_train: T,
    ) -> Result<(Vec<T>, HiddenState<T>)> {
        let mut g = Graph::new();
        let b = self.params.bind_frozen(&mut g);
        let rows = Self::real_rows(&mut g, &[seq]);
        let (ll, states) = self.real_log_likelihoods(&mut g, &b, &rows, sigma_train)?;
        Ok((ll.iter().map(|&v| g.scalar(v)).collect(), hidden_of(&g, &states, 0)))
    }

    /// Samples `count` token sequences at temperature `tau`.
    pub fn sample_tokens<R: Rng + ?Sized>(
        &self,
        count: usize,
        tau: T,
        rng: &mut R,
    ) -> Result<Vec<SampledTokens<T>>> {
        let mut g = Graph::new();
        let b = self.params.bind_frozen(&mut g);
        let s = self.sample_tokens_graph(&mut g, &b, count, tau, None, rng)?;
        let v = self.config.output_width();
        Ok(s.sequences
            .into_iter()
            .enumerate()
            .map(|(r, sequence)| SampledTokens {
                sequence,
                log_probs: s.log_probs.iter().map(|&lp| g.value(lp)[[r, 0]]).collect(),
                soft: Array2::from_shape_fn((s.soft.len(), v), |(i, j)| g.value(s.soft[i])[[r, j]]),
            })
            .collect())
    }

    /// Samples `count` real sequences with noise `sigma_sample`; log-probs are
    /// the teacher-forced densities of the emitted rows under `sigma_train`.
    pub fn sample_real<R: Rng + ?Sized>(
        &self,
        count: usize,
        sigma_sample: T,
        sigma_train: T,
        z: Option<Array2<f64>>,
        rng: &mut R,
    ) -> Result<Vec<SampledReal<T>>> {
        let mut g = Graph::new();
        let b = self.params.bind_frozen(&mut g);
        let s = self.sample_real_graph(&mut g, &b, count, sigma_sample, z, rng)?;
        let (ll, _) = self.real_log_likelihoods(&mut g, &b, &s.steps, sigma_train)?;
        let features = self.config.output_width();
        (0..count)
            .map(|r| {
                let values = Array2::from_shape_fn((s.steps.len(), features), |(i, c)| g.value(s.steps[i])[[r, c]]);
                Ok(SampledReal {
                    sequence: RealSequence::new(values)?,
                    z: s.z.row(r).to_vec(),
                    log_probs: ll.iter().map(|&v| g.value(v)[[r, 0]]).collect(),
                })
            })
            .collect()
    }
}

fn hidden_of<T: Scalar>(g: &Graph<T>, states: &[LstmState], row: usize) -> HiddenState<T> {
    HiddenState {
        h: states.iter().map(|s| g.value(s.h).row(row).to_owned()).collect(),
        c: states.iter().map(|s| g.value(s.c).row(row).to_owned()).collect(),
    }
}

/// `Σ_j ½(μ_j² + σ_j² − 1 − ln σ_j²)`.
pub fn kl_to_prior<T: Scalar>(post: &LatentPosterior<T>) -> Result<T> {
    if post.mu.len() != post.sigma_q.len() {
        return Err(Error::Shape("mu and sigma_q differ in length".into()));
    }
    if let Some(s) = post.sigma_q.iter().find(|&&s| !(s > T::zero())) {
        return Err(Error::Shape(format!("sigma_q must be positive, got {s}")));
    }
    let half = T::of(0.5);
    Ok(post
        .mu
        .iter()
        .zip(&post.sigma_q)
        .map(|(&m, &s)| half * (m * m + s * s - T::one() - (s * s).ln()))
        .sum())
}
