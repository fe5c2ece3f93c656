//! Constant-weight output neuron: one scalar weight per synapse.
//!
//! Trained by the same rule as [`OutputNeuron`](crate::dynamics::OutputNeuron)
//! but every amplitude lands on a single number instead of a Gaussian, which
//! makes it the reference for the large-`sigma` limit.

use crate::dynamics::WeightModel;
use crate::encoding::SpikePattern;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantWeightNeuron {
    pub class_label: usize,
    pub threshold: f64,
    pub weights: Vec<f64>,
}

impl WeightModel for ConstantWeightNeuron {
    fn blank(class_label: usize, input_count: usize, _sigma: f64) -> Result<Self> {
        Ok(Self {
            class_label,
            threshold: 0.0,
            weights: vec![0.0; input_count],
        })
    }

    fn class_label(&self) -> usize {
        self.class_label
    }

    fn threshold(&self) -> f64 {
        self.threshold
    }

    fn set_threshold(&mut self, threshold: f64) {
        self.threshold = threshold;
    }

    fn input_count(&self) -> usize {
        self.weights.len()
    }

    fn momentary_weights(&self, pattern: &SpikePattern) -> Vec<f64> {
        pattern
            .spikes()
            .iter()
            .map(|s| self.weights[s.input])
            .collect()
    }

    fn add_amplitudes(&mut self, pattern: &SpikePattern, amplitudes: &[f64]) {
        for (s, &a) in pattern.spikes().iter().zip(amplitudes) {
            self.weights[s.input] += a;
        }
    }
}
