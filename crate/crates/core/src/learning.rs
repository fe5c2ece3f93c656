//! Per-spike meta-neuron weight update and neuron initialization.
//!
//! For a reference time `t_ref` the potential error `dv = theta - v(t_ref)` is
//! distributed across the presynaptic spikes that precede `t_ref`:
//!
//! ```text
//! u   = eps(t_ref - t) / sum eps                normalized PSP
//! z   = u - w(t)  if u > w(t), else 0           meta-neuron weight
//! M   = z * eps / sum z * eps                   modulation factor (M = u if sum is 0)
//! dw  = M * dv / eps                            momentary weight change
//! ```
//!
//! so that `sum dw * eps == dv`. Each `dw` is then embedded as a Gaussian of
//! amplitude `learning_rate * dw` centred on its spike time.

use crate::dynamics::{epsilon, WeightModel};
use crate::encoding::{Spike, SpikePattern};
use crate::error::{Error, Result};

/// Value of the meta-neuron weight when `u <= w`.
pub const META_WEIGHT_FLOOR: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateContext {
    pub reference_time: f64,
    pub learning_rate: f64,
    pub tau: f64,
}

/// Everything the rule computed for one presynaptic spike.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpikeContribution {
    pub spike: Spike,
    pub epsilon: f64,
    pub weight: f64,
    pub normalized_psp: f64,
    pub meta_weight: f64,
    pub modulation: f64,
    pub delta_w: f64,
}

/// A computed (not yet applied) update for one neuron and pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct Update {
    pub reference_time: f64,
    pub delta_v: f64,
    /// Aligned with `pattern.spikes()`; ineligible spikes carry zeros.
    pub contributions: Vec<SpikeContribution>,
}

impl Update {
    pub fn deltas(&self) -> Vec<f64> {
        self.contributions.iter().map(|c| c.delta_w).collect()
    }
}

/// `theta - v(t_ref)`: positive when the neuron is under-excited at `t_ref`.
pub fn delta_v<N: WeightModel>(
    neuron: &N,
    pattern: &SpikePattern,
    reference_time: f64,
    tau: f64,
) -> f64 {
    neuron.threshold() - neuron.potential(pattern, reference_time, tau)
}

/// Kernel values `eps(t_ref - t)` for every spike of the pattern.
pub fn spike_responses(pattern: &SpikePattern, reference_time: f64, tau: f64) -> Vec<f64> {
    pattern
        .spikes()
        .iter()
        .map(|s| epsilon(reference_time - s.time, tau))
        .collect()
}

/// Normalized postsynaptic potentials, aligned with `pattern.spikes()`.
pub fn normalized_psp(pattern: &SpikePattern, reference_time: f64, tau: f64) -> Result<Vec<f64>> {
    normalize(&spike_responses(pattern, reference_time, tau))
        .ok_or(Error::NoEligibleSpikes { reference_time })
}

fn normalize(values: &[f64]) -> Option<Vec<f64>> {
    let total: f64 = values.iter().sum();
    if total > 0.0 {
        Some(values.iter().map(|v| v / total).collect())
    } else {
        None
    }
}

pub fn meta_weights(normalized: &[f64], weights: &[f64]) -> Vec<f64> {
    normalized
        .iter()
        .zip(weights)
        .map(|(&u, &w)| if u > w { u - w } else { META_WEIGHT_FLOOR })
        .collect()
}

/// Share of the error assigned to each spike. Falls back to the normalized
/// PSPs when every meta-neuron weight is zero.
pub fn modulation_factors(meta: &[f64], responses: &[f64], normalized: &[f64]) -> Vec<f64> {
    let weighted: Vec<f64> = meta.iter().zip(responses).map(|(z, e)| z * e).collect();
    normalize(&weighted).unwrap_or_else(|| normalized.to_vec())
}

pub fn momentary_deltas(modulation: &[f64], delta_v: f64, responses: &[f64]) -> Vec<f64> {
    modulation
        .iter()
        .zip(responses)
        .map(|(&m, &e)| {
            if m > 0.0 && e > 0.0 {
                m * delta_v / e
            } else {
                0.0
            }
        })
        .collect()
}

pub fn compute_update<N: WeightModel>(
    neuron: &N,
    pattern: &SpikePattern,
    reference_time: f64,
    tau: f64,
) -> Result<Update> {
    let responses = spike_responses(pattern, reference_time, tau);
    let normalized = normalize(&responses).ok_or(Error::NoEligibleSpikes { reference_time })?;
    let weights = neuron.momentary_weights(pattern);
    let dv = neuron.threshold()
        - crate::dynamics::potential_with_weights(pattern, &weights, reference_time, tau);
    let meta = meta_weights(&normalized, &weights);
    let modulation = modulation_factors(&meta, &responses, &normalized);
    let deltas = momentary_deltas(&modulation, dv, &responses);
    let contributions = pattern
        .spikes()
        .iter()
        .enumerate()
        .map(|(n, &spike)| SpikeContribution {
            spike,
            epsilon: responses[n],
            weight: weights[n],
            normalized_psp: normalized[n],
            meta_weight: meta[n],
            modulation: modulation[n],
            delta_w: deltas[n],
        })
        .collect();
    Ok(Update {
        reference_time,
        delta_v: dv,
        contributions,
    })
}

/// Fold momentary changes into the neuron's weights, scaled by the learning rate.
pub fn apply_update<N: WeightModel>(
    neuron: &mut N,
    pattern: &SpikePattern,
    deltas: &[f64],
    learning_rate: f64,
) {
    let amplitudes: Vec<f64> = deltas.iter().map(|d| learning_rate * d).collect();
    neuron.add_amplitudes(pattern, &amplitudes);
}

/// Compute and apply one update; the neuron is untouched on error.
pub fn update_neuron<N: WeightModel>(
    neuron: &mut N,
    pattern: &SpikePattern,
    ctx: &UpdateContext,
) -> Result<Update> {
    let update = compute_update(neuron, pattern, ctx.reference_time, ctx.tau)?;
    apply_update(neuron, pattern, &update.deltas(), ctx.learning_rate);
    Ok(update)
}

/// Build the neuron for `class_label` from its first training sample.
///
/// The threshold is `sum u * eps` at the desired time and every spike seeds a
/// term of amplitude `u` on its synapse.
pub fn initialize<N: WeightModel>(
    pattern: &SpikePattern,
    class_label: usize,
    desired_time: f64,
    tau: f64,
    sigma: f64,
) -> Result<N> {
    let responses = spike_responses(pattern, desired_time, tau);
    let normalized = normalize(&responses).ok_or(Error::NoEligibleSpikes {
        reference_time: desired_time,
    })?;
    let threshold = normalized.iter().zip(&responses).map(|(u, e)| u * e).sum();
    let mut neuron = N::blank(class_label, pattern.input_count(), sigma)?;
    neuron.set_threshold(threshold);
    neuron.add_amplitudes(pattern, &normalized);
    Ok(neuron)
}
