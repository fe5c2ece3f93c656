//! Time-varying synaptic efficacy, postsynaptic potentials and firing.
//!
//! The potential of an output neuron is
//!
//! ```text
//! v(t) = sum_i sum_k w_i(t_i^k) * eps(t - t_i^k)
//! eps(t) = (t / tau) * exp(1 - t / tau) * H(t)
//! ```
//!
//! where `w_i` is the efficacy function of synapse `i`, sampled at the
//! presynaptic spike time. Because weights only enter at spike instants, a
//! pattern's weights are sampled once and the potential is then a fixed
//! weighted sum of alpha kernels.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::encoding::{tick_time, time_tick, Spike, SpikePattern};
use crate::error::{Error, Result};

/// Spike response kernel, peaking at 1 when `t == tau`. Zero for `t <= 0`.
pub fn epsilon(t: f64, tau: f64) -> f64 {
    if t > 0.0 {
        let x = t / tau;
        x * (1.0 - x).exp()
    } else {
        0.0
    }
}

/// Beyond this many widths from its center a Gaussian term underflows to 0.0.
const NEGLIGIBLE_WIDTHS: f64 = 40.0;

/// Tick offsets covered by the precomputed Gaussian table (3 ms).
const TABLE_REACH: i64 = 3000;

fn gaussian(d: f64, two_var: f64) -> f64 {
    (-(d * d) / two_var).exp()
}

/// `exp(-(k / 1000)^2 / (2 sigma^2))` for `k` in `-TABLE_REACH..=TABLE_REACH`, shared per sigma.
fn gaussian_table(sigma: f64) -> Arc<[f64]> {
    static TABLES: OnceLock<Mutex<HashMap<u64, Arc<[f64]>>>> = OnceLock::new();
    let mut tables = TABLES
        .get_or_init(Default::default)
        .lock()
        .unwrap_or_else(|e| e.into_inner());
    tables
        .entry(sigma.to_bits())
        .or_insert_with(|| {
            let two_var = 2.0 * sigma * sigma;
            (-TABLE_REACH..=TABLE_REACH)
                .map(|k| gaussian(tick_time(k), two_var))
                .collect()
        })
        .clone()
}

/// A synaptic efficacy function `w(t) = sum_c a_c * exp(-(t - c)^2 / (2 sigma^2))`.
///
/// Centers sit on the encoding time grid; amplitudes added at an existing
/// center are merged into one term.
#[derive(Clone, Serialize, Deserialize)]
#[serde(into = "EfficacyRepr", try_from = "EfficacyRepr")]
pub struct EfficacyFunction {
    sigma: f64,
    terms: BTreeMap<i64, f64>,
    table: Arc<[f64]>,
}

impl PartialEq for EfficacyFunction {
    fn eq(&self, other: &Self) -> bool {
        self.sigma == other.sigma && self.terms == other.terms
    }
}

impl std::fmt::Debug for EfficacyFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EfficacyFunction")
            .field("sigma", &self.sigma)
            .field("terms", &self.terms)
            .finish()
    }
}

#[derive(Serialize, Deserialize)]
struct EfficacyRepr {
    sigma: f64,
    terms: Vec<(f64, f64)>,
}

impl From<EfficacyFunction> for EfficacyRepr {
    fn from(w: EfficacyFunction) -> Self {
        Self {
            sigma: w.sigma,
            terms: w.terms().collect(),
        }
    }
}

impl TryFrom<EfficacyRepr> for EfficacyFunction {
    type Error = Error;

    fn try_from(repr: EfficacyRepr) -> Result<Self> {
        let mut w = EfficacyFunction::new(repr.sigma)?;
        for (center, amplitude) in repr.terms {
            w.add_term(center, amplitude);
        }
        Ok(w)
    }
}

impl EfficacyFunction {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::config(
                "sigma",
                "efficacy update range must be positive",
            ));
        }
        Ok(Self {
            sigma,
            terms: BTreeMap::new(),
            table: gaussian_table(sigma),
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn add_term(&mut self, center: f64, amplitude: f64) {
        *self.terms.entry(time_tick(center)).or_insert(0.0) += amplitude;
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    /// `(center, amplitude)` pairs in ascending center order.
    pub fn terms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.terms.iter().map(|(&tick, &a)| (tick_time(tick), a))
    }

    fn window(&self, tick: i64) -> std::ops::RangeInclusive<i64> {
        let reach = NEGLIGIBLE_WIDTHS * self.sigma;
        if reach < 1.0e6 {
            // terms outside the window contribute exactly 0.0
            let r = (reach * 1000.0).ceil() as i64 + 1;
            tick.saturating_sub(r)..=tick.saturating_add(r)
        } else {
            i64::MIN..=i64::MAX
        }
    }

    /// Value of the Gaussian sum at `t`. Grid times use the exact tick
    /// offset to each center; other times use `t - c` directly.
    pub fn value_at(&self, t: f64) -> f64 {
        let tick = time_tick(t);
        if tick_time(tick) == t {
            return self.value_at_tick(tick);
        }
        let two_var = 2.0 * self.sigma * self.sigma;
        self.terms
            .range(self.window(tick))
            .map(|(&c, &a)| a * gaussian(t - tick_time(c), two_var))
            .sum()
    }

    /// Value at the grid time `tick / 1000` ms.
    pub fn value_at_tick(&self, tick: i64) -> f64 {
        let two_var = 2.0 * self.sigma * self.sigma;
        self.terms
            .range(self.window(tick))
            .map(|(&c, &a)| {
                let k = tick - c;
                let g = if k.abs() <= TABLE_REACH {
                    self.table[(k + TABLE_REACH) as usize]
                } else {
                    gaussian(tick_time(k), two_var)
                };
                a * g
            })
            .sum()
    }
}

/// Sample `w` at a presynaptic time, which must lie in `[0, interval]`.
pub fn sample_weight(w: &EfficacyFunction, t: f64, interval: f64) -> Result<f64> {
    if !(0.0..=interval).contains(&t) {
        return Err(Error::Contract(format!(
            "efficacy sampled at {t} ms, outside [0, {interval}]"
        )));
    }
    Ok(w.value_at(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Time constant of the spike response kernel, ms.
    pub tau: f64,
    /// End of the postsynaptic interval, ms.
    pub t_max: f64,
    /// Threshold search grid step, ms.
    pub dt: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            tau: 3.0,
            t_max: 8.0,
            dt: 0.01,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self, spike_interval: f64) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config("tau", "must be positive"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt", "must be positive"));
        }
        if !(self.t_max > spike_interval && self.t_max.is_finite()) {
            return Err(Error::config(
                "t_max",
                format!("must exceed the presynaptic interval {spike_interval}"),
            ));
        }
        Ok(())
    }

    /// Number of grid points in `[0, t_max]`.
    pub fn grid_len(&self) -> usize {
        (self.t_max / self.dt + 1e-9).floor() as usize + 1
    }

    pub fn grid_time(&self, index: usize) -> f64 {
        index as f64 * self.dt
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FiringOutcome {
    Fired(f64),
    Silent,
}

impl FiringOutcome {
    /// Firing time, with silence mapped to `silent_time`.
    pub fn time_or(self, silent_time: f64) -> f64 {
        match self {
            FiringOutcome::Fired(t) => t,
            FiringOutcome::Silent => silent_time,
        }
    }

    pub fn fired(self) -> bool {
        matches!(self, FiringOutcome::Fired(_))
    }
}

/// Potential at `t` as a direct sum over spikes, given weights aligned with
/// `pattern.spikes()`.
pub fn potential_with_weights(pattern: &SpikePattern, weights: &[f64], t: f64, tau: f64) -> f64 {
    pattern
        .spikes()
        .iter()
        .zip(weights)
        .take_while(|(s, _)| s.time < t)
        .map(|(s, w)| w * epsilon(t - s.time, tau))
        .sum()
}

/// Potential along an increasing time sequence in O(spikes + steps).
///
/// Uses `eps(t - s) = e * (t - s) / tau * exp(-t / tau) * exp(s / tau)`, so the
/// sum factors into two running accumulators over spikes that have already
/// arrived.
struct PotentialSweep<'a> {
    spikes: &'a [Spike],
    weights: &'a [f64],
    tau: f64,
    origin: f64,
    next: usize,
    acc_weight: f64,
    acc_time: f64,
}

impl<'a> PotentialSweep<'a> {
    /// `None` when the exponentials would leave floating-point range.
    fn new(spikes: &'a [Spike], weights: &'a [f64], tau: f64, t_max: f64) -> Option<Self> {
        let origin = spikes.first().map_or(0.0, |s| s.time);
        if (t_max - origin) / tau > 600.0 {
            return None;
        }
        Some(Self {
            spikes,
            weights,
            tau,
            origin,
            next: 0,
            acc_weight: 0.0,
            acc_time: 0.0,
        })
    }

    fn at(&mut self, t: f64) -> f64 {
        while let Some(s) = self.spikes.get(self.next) {
            if s.time >= t {
                break;
            }
            let scaled = self.weights[self.next] * ((s.time - self.origin) / self.tau).exp();
            self.acc_weight += scaled;
            self.acc_time += scaled * s.time;
            self.next += 1;
        }
        if self.next == 0 {
            return 0.0;
        }
        let decay = (1.0 - (t - self.origin) / self.tau).exp() / self.tau;
        decay * (t * self.acc_weight - self.acc_time)
    }
}

/// Earliest grid time with `v(t) >= threshold`.
///
/// A fast sweep screens grid points; every candidate is confirmed with the
/// direct sum so the decision matches `potential_with_weights` exactly.
pub fn fire_time_with_weights(
    pattern: &SpikePattern,
    weights: &[f64],
    threshold: f64,
    sim: &SimulationConfig,
) -> FiringOutcome {
    let spikes = pattern.spikes();
    let exact = |t: f64| potential_with_weights(pattern, weights, t, sim.tau);
    let n = sim.grid_len();
    match PotentialSweep::new(spikes, weights, sim.tau, sim.t_max) {
        Some(mut sweep) => {
            let scale: f64 = weights.iter().map(|w| w.abs()).sum::<f64>() + threshold.abs();
            let slack = 1e-8 * scale;
            for i in 0..n {
                let t = sim.grid_time(i);
                if sweep.at(t) >= threshold - slack && exact(t) >= threshold {
                    return FiringOutcome::Fired(t);
                }
            }
        }
        None => {
            for i in 0..n {
                let t = sim.grid_time(i);
                if exact(t) >= threshold {
                    return FiringOutcome::Fired(t);
                }
            }
        }
    }
    FiringOutcome::Silent
}

/// Largest potential over the simulation grid.
pub fn peak_potential_with_weights(
    pattern: &SpikePattern,
    weights: &[f64],
    sim: &SimulationConfig,
) -> f64 {
    let n = sim.grid_len();
    match PotentialSweep::new(pattern.spikes(), weights, sim.tau, sim.t_max) {
        Some(mut sweep) => (0..n)
            .map(|i| sweep.at(sim.grid_time(i)))
            .fold(f64::NEG_INFINITY, f64::max),
        None => (0..n)
            .map(|i| potential_with_weights(pattern, weights, sim.grid_time(i), sim.tau))
            .fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Synaptic weight representation of an output neuron.
///
/// Learning only ever sees weights sampled at spike times, so any model that
/// can sample and accept per-spike amplitude updates can be trained.
pub trait WeightModel: Clone + Send + Sync {
    /// Neuron with no synaptic terms and zero threshold.
    fn blank(class_label: usize, input_count: usize, sigma: f64) -> Result<Self>;

    fn class_label(&self) -> usize;

    fn threshold(&self) -> f64;

    fn set_threshold(&mut self, threshold: f64);

    fn input_count(&self) -> usize;

    /// Weights sampled at every spike of `pattern`, aligned with `pattern.spikes()`.
    fn momentary_weights(&self, pattern: &SpikePattern) -> Vec<f64>;

    /// Add `amplitudes[n]` at the spike `pattern.spikes()[n]`. Zero entries are ignored.
    fn add_amplitudes(&mut self, pattern: &SpikePattern, amplitudes: &[f64]);

    fn potential(&self, pattern: &SpikePattern, t: f64, tau: f64) -> f64 {
        potential_with_weights(pattern, &self.momentary_weights(pattern), t, tau)
    }

    fn fire_time(&self, pattern: &SpikePattern, sim: &SimulationConfig) -> FiringOutcome {
        fire_time_with_weights(
            pattern,
            &self.momentary_weights(pattern),
            self.threshold(),
            sim,
        )
    }

    fn peak_potential(&self, pattern: &SpikePattern, sim: &SimulationConfig) -> f64 {
        peak_potential_with_weights(pattern, &self.momentary_weights(pattern), sim)
    }
}

/// Output neuron with one efficacy function per input neuron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputNeuron {
    pub class_label: usize,
    pub threshold: f64,
    pub efficacies: Vec<EfficacyFunction>,
}

impl WeightModel for OutputNeuron {
    fn blank(class_label: usize, input_count: usize, sigma: f64) -> Result<Self> {
        let w = EfficacyFunction::new(sigma)?;
        Ok(Self {
            class_label,
            threshold: 0.0,
            efficacies: vec![w; input_count],
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
        self.efficacies.len()
    }

    fn momentary_weights(&self, pattern: &SpikePattern) -> Vec<f64> {
        pattern
            .spikes()
            .iter()
            .map(|s| self.efficacies[s.input].value_at_tick(time_tick(s.time)))
            .collect()
    }

    fn add_amplitudes(&mut self, pattern: &SpikePattern, amplitudes: &[f64]) {
        for (s, &a) in pattern.spikes().iter().zip(amplitudes) {
            if a != 0.0 {
                self.efficacies[s.input].add_term(s.time, a);
            }
        }
    }
}
