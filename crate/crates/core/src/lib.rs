pub mod config;
pub mod datasets;
pub mod discriminator;
pub mod error;
pub mod generator;
pub mod harness;
pub mod geometry;
pub mod nn;
pub mod objectives;
pub mod params;
pub mod policy;
pub mod rewards;
pub mod rng;
pub mod scalar;
pub mod sequence;
pub mod tape;
pub mod vocab;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Generator64 = generator::Generator<f64>;
pub type Generator32 = generator::Generator<f32>;
pub type Discriminator64 = discriminator::Discriminator<f64>;
pub type Discriminator32 = discriminator::Discriminator<f32>;
pub type Checkpoint64 = harness::Checkpoint<f64>;
pub type Checkpoint32 = harness::Checkpoint<f32>;
pub type Dataset64 = harness::Dataset<f64>;
pub type Dataset32 = harness::Dataset<f32>;
