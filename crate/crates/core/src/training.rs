//! Sample-by-sample training with the reference-time update strategy.
//!
//! Each output neuron stands for one class. For a training sample the correct
//! neuron should fire no later than `T_d`, and every wrong neuron should fire
//! at least `T_m` after it. Samples that already satisfy both are skipped;
//! otherwise the offending neurons are pushed toward reference firing times.

use std::time::{Duration, Instant};

use log::warn;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::config::NetworkConfig;
use crate::dynamics::{FiringOutcome, OutputNeuron, SimulationConfig, WeightModel};
use crate::encoding::SpikePattern;
use crate::error::{Error, Result};
use crate::learning::{initialize, update_neuron, UpdateContext};
use crate::rng::stream_rng;

/// Tolerance for comparing firing times that come off the simulation grid.
const TIME_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    /// Desired firing time of the correct neuron, ms.
    pub desired_time: f64,
    pub margin_threshold: f64,
    pub delete_threshold: f64,
    /// Rate at which the correct neuron's reference time approaches its firing time.
    pub reference_rate: f64,
    pub max_epochs: usize,
    /// Presynaptic interval `T`, ms.
    pub spike_interval: f64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            desired_time: 2.0,
            margin_threshold: 0.3,
            delete_threshold: 0.25,
            reference_rate: 0.05,
            max_epochs: 100,
            spike_interval: 3.0,
        }
    }
}

impl StrategyConfig {
    /// Latest acceptable firing time of the correct neuron.
    pub fn delete_time(&self) -> f64 {
        self.desired_time + self.delete_threshold * (self.spike_interval - self.desired_time)
    }

    /// Minimum lead of the correct neuron over every wrong neuron.
    pub fn margin_time(&self) -> f64 {
        self.margin_threshold * (self.spike_interval - self.desired_time)
    }

    /// Reference time for the correct neuron, never earlier than the desired time.
    pub fn correct_reference_time(&self, actual: f64) -> f64 {
        ((1.0 - self.reference_rate) * actual).max(self.desired_time)
    }
}

/// Reference time for a wrong neuron, capped at the end of the postsynaptic interval.
pub fn wrong_reference_time(
    correct_actual: f64,
    correct_reference: f64,
    delete_time: f64,
    margin_time: f64,
    t_max: f64,
) -> f64 {
    let anchor = if correct_actual <= delete_time + TIME_TOLERANCE {
        correct_actual
    } else {
        correct_reference
    };
    (anchor + margin_time).min(t_max)
}

/// One output neuron per class; classes become available as they are initialized.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<N = OutputNeuron> {
    pub input_count: usize,
    pub sigma: f64,
    pub simulation: SimulationConfig,
    pub neurons: Vec<Option<N>>,
}

impl<N: WeightModel> Network<N> {
    pub fn new(
        input_count: usize,
        class_count: usize,
        sigma: f64,
        simulation: SimulationConfig,
    ) -> Self {
        Self {
            input_count,
            sigma,
            simulation,
            neurons: vec![None; class_count],
        }
    }

    pub fn class_count(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_initialized(&self) -> bool {
        self.neurons.iter().all(Option::is_some)
    }

    /// Architecture string `inputs-outputs`, e.g. `24-3`.
    pub fn architecture(&self) -> String {
        format!("{}-{}", self.input_count, self.class_count())
    }

    /// Firing outcome per class; uninitialized classes are silent.
    pub fn firing_times(&self, pattern: &SpikePattern) -> Vec<FiringOutcome> {
        self.neurons
            .iter()
            .map(|n| match n {
                Some(n) => n.fire_time(pattern, &self.simulation),
                None => FiringOutcome::Silent,
            })
            .collect()
    }

    /// Class of the earliest firing neuron (ties to the lower class). When
    /// every neuron is silent, the class with the highest peak potential.
    pub fn predict(&self, pattern: &SpikePattern) -> usize {
        let times = self.firing_times(pattern);
        self.predict_from_times(pattern, &times)
    }

    fn predict_from_times(&self, pattern: &SpikePattern, times: &[FiringOutcome]) -> usize {
        let earliest = times
            .iter()
            .enumerate()
            .filter_map(|(j, o)| match o {
                FiringOutcome::Fired(t) => Some((j, *t)),
                FiringOutcome::Silent => None,
            })
            .fold(None, |best: Option<(usize, f64)>, (j, t)| match best {
                Some((_, bt)) if bt <= t => best,
                _ => Some((j, t)),
            });
        if let Some((j, _)) = earliest {
            return j;
        }
        let mut best = (0, f64::NEG_INFINITY);
        for (j, n) in self.neurons.iter().enumerate() {
            if let Some(n) = n {
                let peak = n.peak_potential(pattern, &self.simulation);
                if peak > best.1 {
                    best = (j, peak);
                }
            }
        }
        best.0
    }
}

/// What `train_sample` did with one sample. Exactly one variant per sample.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleOutcome {
    Initialized {
        class: usize,
    },
    /// No spike precedes the desired time, so the class waits for another sample.
    InitializationDeferred {
        class: usize,
    },
    /// Correct neuron on time and all margins satisfied.
    Skipped,
    /// Correct neuron on time but some wrong neurons inside the margin.
    MarginViolation {
        updated: Vec<usize>,
        ineligible: usize,
    },
    /// Correct neuron late: it is updated, then wrong neurons inside the margin.
    LateCorrect {
        correct_updated: bool,
        wrong_updated: Vec<usize>,
        ineligible: usize,
    },
    /// The encoded pattern has no spikes at all.
    EmptyPattern,
}

impl SampleOutcome {
    pub fn updates(&self) -> (usize, usize) {
        match self {
            SampleOutcome::MarginViolation { updated, .. } => (0, updated.len()),
            SampleOutcome::LateCorrect {
                correct_updated,
                wrong_updated,
                ..
            } => (usize::from(*correct_updated), wrong_updated.len()),
            _ => (0, 0),
        }
    }
}

fn try_update<N: WeightModel>(
    neuron: &mut N,
    pattern: &SpikePattern,
    ctx: &UpdateContext,
) -> Result<bool> {
    match update_neuron(neuron, pattern, ctx) {
        Ok(_) => Ok(true),
        Err(Error::NoEligibleSpikes { .. }) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Present one labelled sample to the network.
pub fn train_sample<N: WeightModel>(
    network: &mut Network<N>,
    pattern: &SpikePattern,
    label: usize,
    cfg: &NetworkConfig,
) -> Result<SampleOutcome> {
    if label >= network.class_count() {
        return Err(Error::Input(format!(
            "label {label} outside the network's {} classes",
            network.class_count()
        )));
    }
    if pattern.input_count() != network.input_count {
        return Err(Error::Input(format!(
            "pattern has {} inputs, network expects {}",
            pattern.input_count(),
            network.input_count
        )));
    }
    if pattern.is_empty() {
        warn!("skipping a training sample of class {label} that produced no spikes");
        return Ok(SampleOutcome::EmptyPattern);
    }
    let strategy = cfg.strategy();
    let sim = network.simulation;

    if network.neurons[label].is_none() {
        return match initialize::<N>(
            pattern,
            label,
            strategy.desired_time,
            sim.tau,
            network.sigma,
        ) {
            Ok(n) => {
                network.neurons[label] = Some(n);
                Ok(SampleOutcome::Initialized { class: label })
            }
            Err(Error::NoEligibleSpikes { .. }) => {
                Ok(SampleOutcome::InitializationDeferred { class: label })
            }
            Err(e) => Err(e),
        };
    }

    let actual: Vec<f64> = network
        .firing_times(pattern)
        .into_iter()
        .map(|o| o.time_or(sim.t_max))
        .collect();
    let correct_actual = actual[label];
    let delete_time = strategy.delete_time();
    let margin_time = strategy.margin_time();
    let initialized: Vec<bool> = network.neurons.iter().map(Option::is_some).collect();
    let wrong = |anchor: f64| -> Vec<usize> {
        (0..initialized.len())
            .filter(|&j| j != label && initialized[j])
            .filter(|&j| actual[j] - anchor < margin_time - TIME_TOLERANCE)
            .collect()
    };
    let ctx = |reference_time| UpdateContext {
        reference_time,
        learning_rate: cfg.learning_rate,
        tau: sim.tau,
    };

    if correct_actual <= delete_time + TIME_TOLERANCE {
        let violators = wrong(correct_actual);
        if violators.is_empty() {
            return Ok(SampleOutcome::Skipped);
        }
        let reference = wrong_reference_time(
            correct_actual,
            correct_actual,
            delete_time,
            margin_time,
            sim.t_max,
        );
        let mut updated = Vec::new();
        let mut ineligible = 0;
        for j in violators {
            let neuron = network.neurons[j]
                .as_mut()
                .expect("violators are initialized");
            if try_update(neuron, pattern, &ctx(reference))? {
                updated.push(j);
            } else {
                ineligible += 1;
            }
        }
        return Ok(SampleOutcome::MarginViolation {
            updated,
            ineligible,
        });
    }

    let correct_reference = strategy.correct_reference_time(correct_actual);
    let mut ineligible = 0;
    let correct_neuron = network.neurons[label].as_mut().expect("checked above");
    let correct_updated = try_update(correct_neuron, pattern, &ctx(correct_reference))?;
    if !correct_updated {
        ineligible += 1;
    }
    let reference = wrong_reference_time(
        correct_actual,
        correct_reference,
        delete_time,
        margin_time,
        sim.t_max,
    );
    let mut wrong_updated = Vec::new();
    for j in wrong(correct_reference) {
        let neuron = network.neurons[j]
            .as_mut()
            .expect("violators are initialized");
        if try_update(neuron, pattern, &ctx(reference))? {
            wrong_updated.push(j);
        } else {
            ineligible += 1;
        }
    }
    Ok(SampleOutcome::LateCorrect {
        correct_updated,
        wrong_updated,
        ineligible,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub updates_correct: usize,
    pub updates_wrong: usize,
    pub skipped: usize,
    /// Updates that could not be made because no spike preceded the reference time.
    pub ineligible: usize,
    /// Accuracy on the training samples after the epoch.
    pub train_accuracy: f64,
}

impl EpochStats {
    pub fn total_updates(&self) -> usize {
        self.updates_correct + self.updates_wrong
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Training accuracy right after initialization.
    pub initial_train_accuracy: f64,
    pub final_train_accuracy: f64,
    pub epochs: Vec<EpochStats>,
    pub stopped_early: bool,
    pub empty_patterns: usize,
    #[serde(skip)]
    pub wall_time: Duration,
}

/// A training sample: encoded pattern and class label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPattern {
    pub pattern: SpikePattern,
    pub label: usize,
}

pub fn accuracy<N: WeightModel>(network: &Network<N>, samples: &[LabeledPattern]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let correct = samples
        .iter()
        .filter(|s| network.predict(&s.pattern) == s.label)
        .count();
    correct as f64 / samples.len() as f64
}

fn shuffled_order(len: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut stream_rng(seed, epoch as u64));
    order
}

/// Initialize every class from its first sample in a seeded order, then run
/// up to `max_epochs` shuffled epochs, stopping after an epoch with no updates.
pub fn train<N: WeightModel>(
    network: &mut Network<N>,
    samples: &[LabeledPattern],
    cfg: &NetworkConfig,
) -> Result<TrainingReport> {
    let started = Instant::now();
    cfg.validate()?;
    let classes = network.class_count();
    for class in 0..classes {
        if !samples.iter().any(|s| s.label == class) {
            return Err(Error::config(
                "dataset",
                format!("class {class} has no training samples"),
            ));
        }
    }
    let mut report = TrainingReport::default();

    for &idx in &shuffled_order(samples.len(), cfg.seed, 0) {
        let s = &samples[idx];
        if network.neurons[s.label].is_none() {
            if let SampleOutcome::EmptyPattern = train_sample(network, &s.pattern, s.label, cfg)? {
                report.empty_patterns += 1;
            }
        }
    }
    if let Some(missing) = network.neurons.iter().position(Option::is_none) {
        return Err(Error::config(
            "dataset",
            format!("class {missing} has no sample with a spike before the desired firing time"),
        ));
    }
    report.initial_train_accuracy = accuracy(network, samples);
    report.final_train_accuracy = report.initial_train_accuracy;

    for epoch in 1..=cfg.max_epochs {
        let mut stats = EpochStats {
            epoch,
            ..EpochStats::default()
        };
        for &idx in &shuffled_order(samples.len(), cfg.seed, epoch) {
            let s = &samples[idx];
            let outcome = train_sample(network, &s.pattern, s.label, cfg)?;
            let (c, w) = outcome.updates();
            stats.updates_correct += c;
            stats.updates_wrong += w;
            match outcome {
                SampleOutcome::Skipped => stats.skipped += 1,
                SampleOutcome::MarginViolation { ineligible, .. }
                | SampleOutcome::LateCorrect { ineligible, .. } => stats.ineligible += ineligible,
                SampleOutcome::EmptyPattern if epoch == 1 => report.empty_patterns += 1,
                _ => {}
            }
        }
        stats.train_accuracy = accuracy(network, samples);
        report.final_train_accuracy = stats.train_accuracy;
        let converged = stats.total_updates() == 0;
        report.epochs.push(stats);
        if converged {
            report.stopped_early = true;
            break;
        }
    }
    report.wall_time = started.elapsed();
    Ok(report)
}
