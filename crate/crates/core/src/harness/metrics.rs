//! Run manifest and its JSONL metrics log.
//!
//! Each row is one JSON object with a fixed key set; absent values are `null`.
//! Keys:
//! `phase` (`pretrain` | `adversarial`), `step`, `d_updates`, `g_updates`,
//! `tau`, `d_loss`, `d_grad_norm`, `ml_term`, `gan_term`, `rl_term`, `total`,
//! `g_grad_norm`, `g_grad_norm_clipped`, `baseline`, `mean_reward`,
//! `nll_gen`, `bleu` (BLEU-2..5 in percent), `mcgrew` (reported scale).

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::harness::HarnessConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    Adversarial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub phase: Phase,
    pub step: usize,
    pub d_updates: u64,
    pub g_updates: u64,
    pub tau: Option<f64>,
    pub d_loss: Option<f64>,
    pub d_grad_norm: Option<f64>,
    pub ml_term: f64,
    pub gan_term: f64,
    pub rl_term: f64,
    pub total: f64,
    pub g_grad_norm: f64,
    pub g_grad_norm_clipped: f64,
    pub baseline: Option<f64>,
    pub mean_reward: Option<f64>,
    pub nll_gen: Option<f64>,
    pub bleu: Option<Vec<f64>>,
    pub mcgrew: Option<f64>,
}

impl MetricsRow {
    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Inputs and per-step metrics of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub train_config: TrainConfig,
    pub harness: HarnessConfig,
    pub dataset_fingerprint: String,
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
}

impl RunManifest {
    pub fn new(train_config: TrainConfig, harness: HarnessConfig, dataset_fingerprint: String) -> Self {
        RunManifest {
            seed: train_config.seed,
            train_config,
            harness,
            dataset_fingerprint,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: MetricsRow) {
        self.rows.push(row);
    }

    /// The metrics log as JSONL text.
    pub fn metrics_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&r.to_json_line()?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Appends the rows to a JSONL file, creating it if needed.
    pub fn append_metrics(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        f.write_all(self.metrics_jsonl()?.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }

    /// Checks that adversarial rows advance the D and G counters by exactly
    /// one each per step, D first.
    pub fn check_alternation(&self) -> Result<()> {
        let mut prev: Option<(u64, u64)> = None;
        for r in self.rows.iter().filter(|r| r.phase == Phase::Adversarial) {
            if let Some((d, g)) = prev {
                if r.d_updates != d + 1 || r.g_updates != g + 1 {
                    return Err(Error::Shape(format!(
                        "step {}: counters ({}, {}) after ({d}, {g})",
                        r.step, r.d_updates, r.g_updates
                    )));
                }
            } else if r.d_updates != r.g_updates {
                return Err(Error::Shape(format!("step {}: counters out of step", r.step)));
            }
            prev = Some((r.d_updates, r.g_updates));
        }
        Ok(())
    }
}
