//! Training configuration and its flat `key = value` file format.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BaselineMode {
    Fixed(f64),
    RunningMean,
}

impl fmt::Display for BaselineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaselineMode::Fixed(b) => write!(f, "fixed({b})"),
            BaselineMode::RunningMean => f.write_str("running_mean"),
        }
    }
}

impl FromStr for BaselineMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s == "running_mean" {
            return Ok(BaselineMode::RunningMean);
        }
        let inner = s
            .strip_prefix("fixed(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| format!("expected `running_mean` or `fixed(<value>)`, got `{s}`"))?;
        inner
            .trim()
            .parse::<f64>()
            .map(BaselineMode::Fixed)
            .map_err(|e| format!("bad baseline value `{inner}`: {e}"))
    }
}

/// Exponential temperature anneal from `start` to `end` over `anneal_steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSchedule {
    pub start: f64,
    pub end: f64,
    pub anneal_steps: usize,
}

impl TemperatureSchedule {
    /// τ at `step`; held at `end` once the anneal is complete.
    pub fn at(&self, step: usize) -> f64 {
        if self.anneal_steps == 0 || step >= self.anneal_steps {
            return self.end;
        }
        let frac = step as f64 / self.anneal_steps as f64;
        self.start * (self.end / self.start).powf(frac)
    }
}

impl Default for TemperatureSchedule {
    fn default() -> Self {
        TemperatureSchedule {
            start: 2.0,
            end: 0.5,
            anneal_steps: 1000,
        }
    }
}

impl fmt::Display for TemperatureSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.start, self.end, self.anneal_steps)
    }
}

impl FromStr for TemperatureSchedule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(format!("expected `start,end,steps`, got `{s}`"));
        }
        let start = parts[0].parse::<f64>().map_err(|e| e.to_string())?;
        let end = parts[1].parse::<f64>().map_err(|e| e.to_string())?;
        let anneal_steps = parts[2].parse::<usize>().map_err(|e| e.to_string())?;
        Ok(TemperatureSchedule {
            start,
            end,
            anneal_steps,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Weight of the adversarial generator term.
    pub lambda_gan: f64,
    /// Weight of the policy-gradient term.
    pub alpha_rl: f64,
    pub gamma: f64,
    pub rollouts_k: usize,
    pub baseline_mode: BaselineMode,
    pub grad_clip: f64,
    pub gumbel_temperature_schedule: TemperatureSchedule,
    pub seed: u64,
    pub sigma_sample: f64,
    pub sigma_train: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda_gan: 1.0,
            alpha_rl: 2.0,
            gamma: 1.0,
            rollouts_k: 3,
            baseline_mode: BaselineMode::RunningMean,
            grad_clip: 10.0,
            gumbel_temperature_schedule: TemperatureSchedule::default(),
            seed: 0,
            sigma_sample: 0.0,
            sigma_train: 1.0,
        }
    }
}

const FIELDS: [&str; 10] = [
    "lambda_gan",
    "alpha_rl",
    "gamma",
    "rollouts_k",
    "baseline_mode",
    "grad_clip",
    "gumbel_temperature_schedule",
    "seed",
    "sigma_sample",
    "sigma_train",
];

impl TrainConfig {
    /// Text-generation preset (three rollouts, temperature anneal).
    pub fn text() -> Self {
        TrainConfig::default()
    }

    /// Trajectory preset: discounted per-step rewards with γ = 0.9.
    pub fn trajectory() -> Self {
        TrainConfig {
            lambda_gan: 0.2,
            alpha_rl: 0.75,
            gamma: 0.9,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.lambda_gan >= 0.0 && self.lambda_gan.is_finite()) {
            return bad(format!("lambda_gan must be >= 0, got {}", self.lambda_gan));
        }
        if !(self.alpha_rl >= 0.0 && self.alpha_rl.is_finite()) {
            return bad(format!("alpha_rl must be >= 0, got {}", self.alpha_rl));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if self.rollouts_k < 1 {
            return bad("rollouts_k must be >= 1".into());
        }
        if let BaselineMode::Fixed(b) = self.baseline_mode {
            if !b.is_finite() {
                return bad(format!("fixed baseline must be finite, got {b}"));
            }
        }
        if !(self.grad_clip > 0.0 && self.grad_clip.is_finite()) {
            return bad(format!("grad_clip must be > 0, got {}", self.grad_clip));
        }
        let t = &self.gumbel_temperature_schedule;
        if !(t.end > 0.0 && t.start >= t.end && t.start.is_finite()) {
            return bad(format!(
                "temperature schedule needs start >= end > 0, got {}",
                t
            ));
        }
        if !(self.sigma_sample >= 0.0 && self.sigma_sample.is_finite()) {
            return bad(format!("sigma_sample must be >= 0, got {}", self.sigma_sample));
        }
        if !(self.sigma_train > 0.0 && self.sigma_train.is_finite()) {
            return bad(format!("sigma_train must be > 0, got {}", self.sigma_train));
        }
        Ok(())
    }

    /// Parses the flat format: one `key = value` per line, `#` comments.
    /// Every field must be present exactly once.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values: Vec<Option<String>> = vec![None; FIELDS.len()];
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            let slot = FIELDS
                .iter()
                .position(|f| *f == key)
                .ok_or_else(|| Error::Config(format!("line {}: unknown key `{key}`", lineno + 1)))?;
            if values[slot].is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
            values[slot] = Some(value.trim().to_string());
        }
        let take = |i: usize| -> Result<&str> {
            values[i]
                .as_deref()
                .ok_or_else(|| Error::Config(format!("missing key `{}`", FIELDS[i])))
        };
        fn num<V: FromStr>(key: &str, s: &str) -> Result<V>
        where
            V::Err: fmt::Display,
        {
            s.parse::<V>()
                .map_err(|e| Error::Config(format!("{key}: {e}")))
        }
        let cfg = TrainConfig {
            lambda_gan: num(FIELDS[0], take(0)?)?,
            alpha_rl: num(FIELDS[1], take(1)?)?,
            gamma: num(FIELDS[2], take(2)?)?,
            rollouts_k: num(FIELDS[3], take(3)?)?,
            baseline_mode: num(FIELDS[4], take(4)?)?,
            grad_clip: num(FIELDS[5], take(5)?)?,
            gumbel_temperature_schedule: num(FIELDS[6], take(6)?)?,
            seed: num(FIELDS[7], take(7)?)?,
            sigma_sample: num(FIELDS[8], take(8)?)?,
            sigma_train: num(FIELDS[9], take(9)?)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::parse(path, msg),
            other => other,
        })
    }

    pub fn to_file_string(&self) -> String {
        format!(
            "lambda_gan = {}\nalpha_rl = {}\ngamma = {}\nrollouts_k = {}\nbaseline_mode = {}\n\
             grad_clip = {}\ngumbel_temperature_schedule = {}\nseed = {}\nsigma_sample = {}\n\
             sigma_train = {}\n",
            self.lambda_gan,
            self.alpha_rl,
            self.gamma,
            self.rollouts_k,
            self.baseline_mode,
            self.grad_clip,
            self.gumbel_temperature_schedule,
            self.seed,
            self.sigma_sample,
            self.sigma_train
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_round_trip() {
        let cfg = TrainConfig {
            baseline_mode: BaselineMode::Fixed(2.5),
            seed: 42,
            ..TrainConfig::trajectory()
        };
        let parsed = TrainConfig::parse(&cfg.to_file_string()).unwrap();
        assert_eq!(parsed, cfg);
    }

    #[test]
    fn rejects_unknown_and_missing_keys() {
        let mut text = TrainConfig::default().to_file_string();
        text.push_str("learning_rate = 0.1\n");
        assert!(TrainConfig::parse(&text).is_err());

        let partial: String = TrainConfig::default()
            .to_file_string()
            .lines()
            .filter(|l| !l.starts_with("gamma"))
            .map(|l| format!("{l}\n"))
            .collect();
        let err = TrainConfig::parse(&partial).unwrap_err().to_string();
        assert!(err.contains("gamma"), "{err}");
    }

    #[test]
    fn rejects_out_of_range_values() {
        let cases = [
            TrainConfig { gamma: 1.5, ..Default::default() },
            TrainConfig { rollouts_k: 0, ..Default::default() },
            TrainConfig { grad_clip: 0.0, ..Default::default() },
            TrainConfig { sigma_train: 0.0, ..Default::default() },
            TrainConfig { lambda_gan: -1.0, ..Default::default() },
            TrainConfig {
                gumbel_temperature_schedule: TemperatureSchedule { start: 0.5, end: 2.0, anneal_steps: 10 },
                ..Default::default()
            },
        ];
        for cfg in cases {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn schedule_anneals_exponentially() {
        let s = TemperatureSchedule { start: 2.0, end: 0.5, anneal_steps: 100 };
        assert_eq!(s.at(0), 2.0);
        assert!((s.at(50) - 1.0).abs() < 1e-12);
        assert_eq!(s.at(100), 0.5);
        assert_eq!(s.at(1000), 0.5);
    }

    #[test]
    fn baseline_mode_parses() {
        assert_eq!("fixed(2.5)".parse::<BaselineMode>().unwrap(), BaselineMode::Fixed(2.5));
        assert_eq!("running_mean".parse::<BaselineMode>().unwrap(), BaselineMode::RunningMean);
        assert!("mean".parse::<BaselineMode>().is_err());
    }
}
