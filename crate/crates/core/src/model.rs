//! JSON model checkpoints.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{EfficacyFunction, OutputNeuron, SimulationConfig};
use crate::encoding::EncoderConfig;
use crate::error::{Error, Result};
use crate::training::Network;

pub const MODEL_FORMAT: &str = "sefm-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronRecord {
    pub class_label: usize,
    pub threshold: f64,
    /// Per input neuron, its `(center_ms, amplitude)` terms.
    pub synapses: Vec<Vec<(f64, f64)>>,
}

/// A trained network plus the encoder needed to feed it raw features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub format: String,
    pub format_version: u32,
    pub sigma: f64,
    pub input_count: usize,
    pub simulation: SimulationConfig,
    pub encoder: Option<EncoderConfig>,
    pub class_names: Vec<String>,
    /// `None` for classes that were never initialized.
    pub neurons: Vec<Option<NeuronRecord>>,
}

impl ModelCheckpoint {
    pub fn from_network(
        network: &Network<OutputNeuron>,
        encoder: Option<EncoderConfig>,
        class_names: Vec<String>,
    ) -> Self {
        let neurons = network
            .neurons
            .iter()
            .map(|n| {
                n.as_ref().map(|n| NeuronRecord {
                    class_label: n.class_label,
                    threshold: n.threshold,
                    synapses: n.efficacies.iter().map(|w| w.terms().collect()).collect(),
                })
            })
            .collect();
        Self {
            format: MODEL_FORMAT.into(),
            format_version: MODEL_FORMAT_VERSION,
            sigma: network.sigma,
            input_count: network.input_count,
            simulation: network.simulation,
            encoder,
            class_names,
            neurons,
        }
    }

    pub fn to_network(&self) -> Result<Network<OutputNeuron>> {
        if self.format != MODEL_FORMAT || self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported model format {} v{}",
                self.format, self.format_version
            )));
        }
        let neurons = self
            .neurons
            .iter()
            .map(|record| {
                record
                    .as_ref()
                    .map(|r| {
                        if r.synapses.len() != self.input_count {
                            return Err(Error::Data(format!(
                                "neuron {} has {} synapses, expected {}",
                                r.class_label,
                                r.synapses.len(),
                                self.input_count
                            )));
                        }
                        let efficacies = r
                            .synapses
                            .iter()
                            .map(|terms| {
                                let mut w = EfficacyFunction::new(self.sigma)?;
                                for &(c, a) in terms {
                                    w.add_term(c, a);
                                }
                                Ok(w)
                            })
                            .collect::<Result<_>>()?;
                        Ok(OutputNeuron {
                            class_label: r.class_label,
                            threshold: r.threshold,
                            efficacies,
                        })
                    })
                    .transpose()
            })
            .collect::<Result<_>>()?;
        Ok(Network {
            input_count: self.input_count,
            sigma: self.sigma,
            simulation: self.simulation,
            neurons,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::WeightModel;
    use proptest::prelude::*;

    fn network_from(terms: &[(usize, f64, f64)], theta: f64, sigma: f64) -> Network {
        let mut net = Network::new(3, 2, sigma, SimulationConfig::default());
        let mut n = OutputNeuron::blank(1, 3, sigma).unwrap();
        for &(i, c, a) in terms {
            n.efficacies[i].add_term(c, a);
        }
        n.threshold = theta;
        net.neurons[1] = Some(n);
        net
    }

    proptest! {
        #[test]
        fn checkpoint_round_trip_is_exact(
            terms in prop::collection::vec((0usize..3, 0u32..=3000, -1e3f64..1e3), 0..40),
            theta in 1e-6f64..10.0,
            sigma in 1e-3f64..1e6,
        ) {
            let terms: Vec<_> = terms.into_iter().map(|(i, tick, a)| (i, tick as f64 / 1000.0, a)).collect();
            let net = network_from(&terms, theta, sigma);
            let ckpt = ModelCheckpoint::from_network(&net, None, vec!["a".into(), "b".into()]);
            let json = ckpt.to_json().unwrap();
            let back = ModelCheckpoint::from_json(&json).unwrap();
            prop_assert_eq!(&back, &ckpt);
            prop_assert_eq!(back.to_network().unwrap(), net);
            prop_assert_eq!(back.to_json().unwrap(), json);
        }
    }

    #[test]
    fn rejects_unknown_version() {
        let net = network_from(&[], 1.0, 0.5);
        let mut ckpt = ModelCheckpoint::from_network(&net, None, vec![]);
        ckpt.format_version = 99;
        assert!(ckpt.to_network().is_err());
    }
}
