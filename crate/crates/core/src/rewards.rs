//! Goal scores: clipped n-gram precision (BLEU without a brevity penalty)
//! for token sequences, and a positional engagement score for trajectories.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::datasets::TrajectoryRecord;
use crate::error::{Error, Result};
use crate::geometry::{engagement, AircraftState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BleuConfig {
    pub max_n: usize,
    pub weights: Vec<f64>,
}

impl BleuConfig {
    /// Uniform weights `1/N`.
    pub fn uniform(max_n: usize) -> Result<Self> {
        if max_n == 0 {
            return Err(Error::Config("BLEU order must be at least 1".into()));
        }
        Ok(BleuConfig {
            max_n,
            weights: vec![1.0 / max_n as f64; max_n],
        })
    }

    pub fn with_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::Config("BLEU weights must be non-negative".into()));
        }
        if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("BLEU weights must sum to 1".into()));
        }
        Ok(BleuConfig {
            max_n: weights.len(),
            weights,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BleuScore {
    pub score: f64,
    /// Set when the candidate was empty; the score is then 0.
    pub empty_candidate: bool,
}

/// Per-order maximum reference counts, built once for a reference set.
#[derive(Clone, Debug)]
pub struct ReferenceSet<K> {
    max_counts: Vec<HashMap<Vec<K>, usize>>,
}

fn ngram_counts<K: Eq + Hash + Clone>(tokens: &[K], n: usize) -> HashMap<Vec<K>, usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w.to_vec()).or_insert(0) += 1;
        }
    }
    m
}

impl<K: Eq + Hash + Clone> ReferenceSet<K> {
    pub fn new<S: AsRef<[K]>>(references: &[S], max_n: usize) -> Result<Self> {
        if references.is_empty() {
            return Err(Error::Config("BLEU needs at least one reference".into()));
        }
        let mut max_counts = vec![HashMap::new(); max_n];
        for r in references {
            for (n, table) in max_counts.iter_mut().enumerate() {
                for (g, c) in ngram_counts(r.as_ref(), n + 1) {
                    let e = table.entry(g).or_insert(0);
                    *e = (*e).max(c);
                }
            }
        }
        Ok(ReferenceSet { max_counts })
    }

    pub fn max_n(&self) -> usize {
        self.max_counts.len()
    }

    /// Clipped matches and total candidate n-grams of order `n` (1-based).
    pub fn clipped_counts(&self, candidate: &[K], n: usize) -> (usize, usize) {
        let counts = ngram_counts(candidate, n);
        let total: usize = counts.values().sum();
        let table = &self.max_counts[n - 1];
        let matched = counts
            .iter()
            .map(|(g, &c)| c.min(table.get(g).copied().unwrap_or(0)))
            .sum();
        (matched, total)
    }

    /// Clipped precision of order `n`; 0 when the candidate has no n-grams.
    pub fn precision(&self, candidate: &[K], n: usize) -> f64 {
        match self.clipped_counts(candidate, n) {
            (_, 0) => 0.0,
            (m, t) => m as f64 / t as f64,
        }
    }

    pub fn score(&self, candidate: &[K], cfg: &BleuConfig) -> Result<BleuScore> {
        if cfg.max_n > self.max_n() {
            return Err(Error::Config(format!(
                "reference set was built for order {}, asked for {}",
                self.max_n(),
                cfg.max_n
            )));
        }
        if candidate.is_empty() {
            return Ok(BleuScore {
                score: 0.0,
                empty_candidate: true,
            });
        }
        let mut score = 1.0;
        for (i, &w) in cfg.weights.iter().enumerate() {
            let p = self.precision(candidate, i + 1);
            if p == 0.0 {
                return Ok(BleuScore {
                    score: 0.0,
                    empty_candidate: false,
                });
            }
            score *= p.powf(w);
        }
        Ok(BleuScore {
            score: score.min(1.0),
            empty_candidate: false,
        })
    }
}

/// `Π_n precision_n^{w_n}` of `candidate` against `references`.
pub fn bleu_n<K: Eq + Hash + Clone, S: AsRef<[K]>>(candidate: &[K], references: &[S], cfg: &BleuConfig) -> Result<BleuScore> {
    ReferenceSet::new(references, cfg.max_n)?.score(candidate, cfg)
}

/// Mean sentence score of `samples` against the whole reference set, × 100.
pub fn corpus_bleu_percent<K: Eq + Hash + Clone, S: AsRef<[K]>, C: AsRef<[K]>>(
    samples: &[C],
    references: &[S],
    n: usize,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Config("no samples to score".into()));
    }
    let cfg = BleuConfig::uniform(n)?;
    let refs = ReferenceSet::new(references, n)?;
    let mut total = 0.0;
    for s in samples {
        total += refs.score(s.as_ref(), &cfg)?.score;
    }
    Ok(100.0 * total / samples.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McGrewParams {
    pub desired_range: f64,
    pub range_scale: f64,
    pub angle_weight: f64,
}

impl Default for McGrewParams {
    fn default() -> Self {
        McGrewParams {
            desired_range: 500.0,
            range_scale: 5.0,
            angle_weight: 0.5,
        }
    }
}

impl McGrewParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.desired_range > 0.0 && self.range_scale > 0.0) || !(0.0..=1.0).contains(&self.angle_weight) {
            return Err(Error::Config("McGrew needs R_d > 0, k > 0 and w in [0, 1]".into()));
        }
        Ok(())
    }
}

/// `w·S_A + (1−w)·S_R` for blue attacking red.
pub fn mcgrew_step(blue: &AircraftState, red: &AircraftState, params: &McGrewParams) -> f64 {
    let e = engagement(blue, red);
    let s_a = 0.5 * ((1.0 - e.aspect_deg / 180.0) + (1.0 - e.antenna_train_deg / 180.0));
    let s_r = (-(e.range - params.desired_range).abs() / (params.range_scale * params.desired_range)).exp();
    params.angle_weight * s_a + (1.0 - params.angle_weight) * s_r
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McGrewTrace {
    pub per_step: Vec<f64>,
    pub mean: f64,
}

impl McGrewTrace {
    /// Sum over steps scaled by `10 / T`, i.e. ten times the mean.
    pub fn reported(&self) -> f64 {
        self.per_step.iter().sum::<f64>() * 10.0 / self.per_step.len() as f64
    }
}

pub fn trajectory_mcgrew(record: &TrajectoryRecord, params: &McGrewParams) -> McGrewTrace {
    let per_step: Vec<f64> = (0..record.steps())
        .map(|t| mcgrew_step(&record.blue_state(t), &record.red_state(t), params))
        .collect();
    let mean = per_step.iter().sum::<f64>() / per_step.len() as f64;
    McGrewTrace { per_step, mean }
}
