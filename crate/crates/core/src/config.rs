//! Hyperparameters and their validation.

use serde::{Deserialize, Serialize};

use crate::dynamics::SimulationConfig;
use crate::encoding::EncoderSettings;
use crate::error::{Error, Result};
use crate::training::StrategyConfig;

/// Every hyperparameter of a network and its training run.
///
/// Defaults follow the published settings; `reference_rate` and `sigma` are
/// problem dependent and normally chosen per dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Presynaptic spike interval `T`, ms.
    pub spike_interval: f64,
    pub receptive_fields: usize,
    pub overlap: f64,
    pub response_cutoff: f64,
    /// Spike response time constant, ms.
    pub tau: f64,
    /// End of the postsynaptic interval, ms.
    pub t_max: f64,
    /// Threshold search step, ms.
    pub dt: f64,
    pub desired_time: f64,
    pub learning_rate: f64,
    pub margin_threshold: f64,
    pub delete_threshold: f64,
    pub reference_rate: f64,
    /// Efficacy update range (Gaussian width), ms.
    pub sigma: f64,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let enc = EncoderSettings::default();
        let sim = SimulationConfig::default();
        let strat = StrategyConfig::default();
        Self {
            spike_interval: enc.spike_interval,
            receptive_fields: enc.receptive_field_count,
            overlap: enc.overlap_constant,
            response_cutoff: enc.response_cutoff,
            tau: sim.tau,
            t_max: sim.t_max,
            dt: sim.dt,
            desired_time: strat.desired_time,
            learning_rate: 0.1,
            margin_threshold: strat.margin_threshold,
            delete_threshold: strat.delete_threshold,
            reference_rate: strat.reference_rate,
            sigma: 0.5,
            max_epochs: strat.max_epochs,
            seed: 1,
        }
    }
}

/// Value used for `sigma` to obtain an effectively constant weight.
pub const CONSTANT_WEIGHT_SIGMA: f64 = 1e6;

fn open_unit(field: &str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("{value} is outside (0, 1)")))
    }
}

impl NetworkConfig {
    pub fn encoder_settings(&self) -> EncoderSettings {
        EncoderSettings {
            receptive_field_count: self.receptive_fields,
            overlap_constant: self.overlap,
            spike_interval: self.spike_interval,
            response_cutoff: self.response_cutoff,
        }
    }

    pub fn simulation(&self) -> SimulationConfig {
        SimulationConfig {
            tau: self.tau,
            t_max: self.t_max,
            dt: self.dt,
        }
    }

    pub fn strategy(&self) -> StrategyConfig {
        StrategyConfig {
            desired_time: self.desired_time,
            margin_threshold: self.margin_threshold,
            delete_threshold: self.delete_threshold,
            reference_rate: self.reference_rate,
            max_epochs: self.max_epochs,
            spike_interval: self.spike_interval,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder_settings().validate()?;
        self.simulation().validate(self.spike_interval)?;
        if !(self.desired_time > 0.0 && self.desired_time < self.t_max) {
            return Err(Error::config(
                "desired_time",
                format!("{} is outside (0, t_max)", self.desired_time),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        open_unit("margin_threshold", self.margin_threshold)?;
        open_unit("delete_threshold", self.delete_threshold)?;
        open_unit("reference_rate", self.reference_rate)?;
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::config("sigma", "must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        NetworkConfig::default().validate().unwrap();
    }

    #[test]
    fn out_of_range_field_is_named() {
        let cfg = NetworkConfig {
            margin_threshold: 1.5,
            ..NetworkConfig::default()
        };
        match cfg.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "margin_threshold"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let cfg: NetworkConfig = toml::from_str("sigma = 0.3\nreference_rate = 0.02").unwrap();
        assert_eq!(cfg.sigma, 0.3);
        assert_eq!(cfg.tau, 3.0);
        assert!(toml::from_str::<NetworkConfig>("sigmaa = 1.0").is_err());
    }
}
