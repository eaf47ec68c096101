//! Evaluation of frozen generators.

use ndarray::Array2;
use rand::Rng;

use crate::datasets::TrajectoryRecord;
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::harness::data::Normalizer;
use crate::objectives::real_lower_bound_graph;
use crate::rewards::{trajectory_mcgrew, BleuConfig, McGrewParams, ReferenceSet};
use crate::rng::standard_normal;
use crate::scalar::Scalar;
use crate::sequence::{RealSequence, TokenSequence};
use crate::tape::Graph;

const CHUNK: usize = 256;

/// Per-token negative log-likelihood: total `−ℓ` over scored positions divided
/// by the number of scored positions (tokens plus one end marker each).
pub fn evaluate_nll_gen<T: Scalar>(gen: &Generator<T>, data: &[TokenSequence]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut nll = 0.0;
    let mut count = 0usize;
    for chunk in data.chunks(CHUNK) {
        let mut g = Graph::new();
        let b = gen.params.bind_frozen(&mut g);
        let (ll, _) = gen.token_log_likelihoods(&mut g, &b, chunk)?;
        for v in ll {
            nll -= g.value(v).iter().map(|x| x.to_f64_lossy()).sum::<f64>();
        }
        count += chunk.iter().map(TokenSequence::scored_length).sum::<usize>();
    }
    Ok(nll / count as f64)
}

/// Negated lower bound per sequence step, averaged over the data set.
pub fn evaluate_nll_real<T: Scalar, R: Rng + ?Sized>(
    gen: &Generator<T>,
    data: &[RealSequence<T>],
    sigma_train: f64,
    rng: &mut R,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut total = 0.0;
    for chunk in data.chunks(CHUNK) {
        let mut g = Graph::new();
        let b = gen.params.bind_frozen(&mut g);
        let refs: Vec<&RealSequence<T>> = chunk.iter().collect();
        let rows = Generator::real_rows(&mut g, &refs);
        let eps = Array2::from_shape_fn((chunk.len(), gen.config().latent_dim), |_| standard_normal(rng));
        let bound = real_lower_bound_graph(gen, &mut g, &b, &rows, T::of(sigma_train), &eps)?;
        total -= g.value(bound).iter().map(|x| x.to_f64_lossy()).sum::<f64>();
    }
    Ok(total / (data.len() * gen.seq_len()) as f64)
}

/// Hard ancestral samples.
pub fn sample_sentences<T: Scalar, R: Rng + ?Sized>(
    gen: &Generator<T>,
    count: usize,
    rng: &mut R,
) -> Result<Vec<TokenSequence>> {
    let mut out = Vec::with_capacity(count);
    let mut left = count;
    while left > 0 {
        let n = left.min(CHUNK);
        let mut g = Graph::new();
        let b = gen.params.bind_frozen(&mut g);
        out.extend(gen.sample_tokens_graph(&mut g, &b, n, T::one(), None, rng)?.sequences);
        left -= n;
    }
    Ok(out)
}

/// BLEU-2..5 (percent) of `sample_count` generated sentences against `references`.
pub fn evaluate_bleu_suite<T: Scalar, R: Rng + ?Sized>(
    gen: &Generator<T>,
    references: &[TokenSequence],
    sample_count: usize,
    rng: &mut R,
) -> Result<[f64; 4]> {
    let samples = sample_sentences(gen, sample_count, rng)?;
    bleu_suite(&samples, references)
}

/// BLEU-2..5 (percent) of given samples against references.
pub fn bleu_suite(samples: &[TokenSequence], references: &[TokenSequence]) -> Result<[f64; 4]> {
    let cands: Vec<&[usize]> = samples.iter().map(|s| &s.ids[..s.true_length]).collect();
    let refs: Vec<&[usize]> = references.iter().map(|s| &s.ids[..s.true_length]).collect();
    if cands.is_empty() {
        return Err(Error::Config("no samples to score".into()));
    }
    let set = ReferenceSet::new(&refs, 5)?;
    let mut out = [0.0; 4];
    for (k, n) in (2..=5).enumerate() {
        let cfg = BleuConfig::uniform(n)?;
        let mut total = 0.0;
        for c in &cands {
            total += set.score(c, &cfg)?.score;
        }
        out[k] = 100.0 * total / cands.len() as f64;
    }
    Ok(out)
}

/// Samples `count` trajectories and maps them back to simulator units.
pub fn sample_real_records<T: Scalar, R: Rng + ?Sized>(
    gen: &Generator<T>,
    count: usize,
    sigma_sample: f64,
    normalizer: &Normalizer,
    dt: f64,
    rng: &mut R,
) -> Result<Vec<TrajectoryRecord>> {
    let mut out = Vec::with_capacity(count);
    let mut left = count;
    while left > 0 {
        let n = left.min(CHUNK);
        let mut g = Graph::new();
        let b = gen.params.bind_frozen(&mut g);
        let s = gen.sample_real_graph(&mut g, &b, n, T::of(sigma_sample), None, rng)?;
        for r in 0..n {
            let x = Array2::from_shape_fn((s.steps.len(), gen.config().output_width()), |(t, c)| g.value(s.steps[t])[[r, c]]);
            let raw = normalizer.invert(&x)?;
            out.push(TrajectoryRecord::from_joint(&RealSequence::new(raw)?, dt)?);
        }
        left -= n;
    }
    Ok(out)
}

/// Mean reported engagement score (sum over steps × 10/T) of generated trajectories.
pub fn evaluate_mcgrew<T: Scalar, R: Rng + ?Sized>(
    gen: &Generator<T>,
    count: usize,
    sigma_sample: f64,
    normalizer: &Normalizer,
    dt: f64,
    params: &McGrewParams,
    rng: &mut R,
) -> Result<f64> {
    let records = sample_real_records(gen, count, sigma_sample, normalizer, dt, rng)?;
    Ok(records.iter().map(|r| trajectory_mcgrew(r, params).reported()).sum::<f64>() / count.max(1) as f64)
}
