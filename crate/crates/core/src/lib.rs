//! Single-layer spiking classifier whose synapses carry time-varying
//! efficacy functions, each a growing sum of Gaussians, trained with a
//! normalized meta-neuron update rule.
//!
//! The pipeline is: [`encoding`] turns real-valued features into spike
//! times, [`dynamics`] simulates output neurons, [`learning`] computes the
//! weight updates, [`training`] decides when and where to apply them, and
//! [`experiment`] runs repeated-split benchmarks on [`data`].

pub mod baseline;
pub mod config;
pub mod data;
pub mod dynamics;
pub mod encoding;
pub mod error;
pub mod experiment;
pub mod learning;
pub mod model;
pub mod rng;
pub mod training;

pub use baseline::ConstantWeightNeuron;
pub use config::NetworkConfig;
pub use dynamics::{EfficacyFunction, FiringOutcome, OutputNeuron, SimulationConfig, WeightModel};
pub use encoding::{EncoderConfig, EncoderSettings, Spike, SpikePattern};
pub use error::{Error, ErrorKind, Result};
pub use model::ModelCheckpoint;
pub use training::{LabeledPattern, Network, SampleOutcome, TrainingReport};
