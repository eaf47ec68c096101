//! JSON checkpoint container. Floats are written in shortest round-trip form,
//! so a save/load cycle reproduces every parameter bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::discriminator::{Discriminator, DiscriminatorConfig};
use crate::error::{Error, Result};
use crate::generator::{Generator, GeneratorConfig};
use crate::harness::data::Normalizer;
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::vocab::Vocabulary;

pub const FORMAT: &str = "optigan-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Checkpoint<T> {
    pub format: String,
    pub scalar: String,
    pub generator_config: GeneratorConfig,
    pub generator: ParamStore<T>,
    pub discriminator_config: Option<DiscriminatorConfig>,
    pub discriminator: Option<ParamStore<T>>,
    pub train_config: TrainConfig,
    pub vocab: Option<Vocabulary>,
    pub normalizer: Option<Normalizer>,
    /// Seconds per step of trajectory data.
    pub dt: Option<f64>,
    pub step: usize,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(gen: &Generator<T>, disc: Option<&Discriminator<T>>, train_config: TrainConfig) -> Self {
        Checkpoint {
            format: FORMAT.to_string(),
            scalar: T::type_name().to_string(),
            generator_config: gen.config().clone(),
            generator: gen.params.clone(),
            discriminator_config: disc.map(|d| d.config().clone()),
            discriminator: disc.map(|d| d.params.clone()),
            train_config,
            vocab: None,
            normalizer: None,
            dt: None,
            step: 0,
        }
    }

    pub fn generator(&self) -> Result<Generator<T>> {
        Generator::from_params(self.generator_config.clone(), self.generator.clone())
    }

    pub fn discriminator(&self) -> Result<Option<Discriminator<T>>> {
        match (&self.discriminator_config, &self.discriminator) {
            (Some(c), Some(p)) => Ok(Some(Discriminator::from_params(c.clone(), p.clone())?)),
            (None, None) => Ok(None),
            _ => Err(Error::Shape("discriminator config and parameters must both be present".into())),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint<T> = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        if ck.format != FORMAT {
            return Err(Error::parse(path, format!("unsupported checkpoint format `{}`", ck.format)));
        }
        if ck.scalar != T::type_name() {
            return Err(Error::parse(
                path,
                format!("checkpoint holds {} parameters, expected {}", ck.scalar, T::type_name()),
            ));
        }
        ck.generator()?;
        ck.discriminator()?;
        Ok(ck)
    }
}
