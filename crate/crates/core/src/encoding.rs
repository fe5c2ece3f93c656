//! Gaussian receptive-field population encoding.
//!
//! Every real-valued feature is presented to `M` input neurons whose Gaussian
//! receptive fields tile the feature's observed range. A neuron's response to
//! a value maps linearly onto a firing latency inside `[0, T]`: the strongest
//! response fires at `t = 0`, weak responses fire late, and responses below
//! the cutoff do not fire at all.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Encoded spike times live on a grid of `1 / TICKS_PER_MS` ms (0.001 ms).
pub const TICKS_PER_MS: f64 = 1000.0;

/// Integer index of a time on the encoding grid.
pub fn time_tick(t: f64) -> i64 {
    (t * TICKS_PER_MS).round() as i64
}

pub fn tick_time(tick: i64) -> f64 {
    tick as f64 / TICKS_PER_MS
}

/// Round a time onto the encoding grid.
pub fn quantize_time(t: f64) -> f64 {
    tick_time(time_tick(t))
}

/// Encoder hyperparameters that do not depend on data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSettings {
    pub receptive_field_count: usize,
    pub overlap_constant: f64,
    /// Presynaptic spike interval `T` in ms.
    pub spike_interval: f64,
    pub response_cutoff: f64,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        Self {
            receptive_field_count: 6,
            overlap_constant: 0.7,
            spike_interval: 3.0,
            response_cutoff: 0.1,
        }
    }
}

impl EncoderSettings {
    pub fn validate(&self) -> Result<()> {
        if self.receptive_field_count < 2 {
            return Err(Error::config("receptive_field_count", "must be at least 2"));
        }
        if !(self.overlap_constant > 0.0 && self.overlap_constant.is_finite()) {
            return Err(Error::config("overlap_constant", "must be positive"));
        }
        if !(self.spike_interval > 0.0 && self.spike_interval.is_finite()) {
            return Err(Error::config("spike_interval", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.response_cutoff) {
            return Err(Error::config("response_cutoff", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub min: f64,
    pub max: f64,
}

impl FeatureRange {
    /// Range of a column; a constant column is widened to `(v - 0.5, v + 0.5)`.
    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let (min, max) = values.into_iter().filter(|v| v.is_finite()).fold(
            None,
            |acc: Option<(f64, f64)>, v| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            },
        )?;
        if min < max {
            Some(Self { min, max })
        } else {
            Some(Self {
                min: min - 0.5,
                max: max + 0.5,
            })
        }
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }
}

/// A fitted encoder: settings plus one range per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    #[serde(flatten)]
    pub settings: EncoderSettings,
    pub feature_ranges: Vec<FeatureRange>,
}

/// Learn per-feature ranges from training rows.
pub fn fit_ranges(settings: &EncoderSettings, rows: &[Vec<f64>]) -> Result<EncoderConfig> {
    settings.validate()?;
    let first = rows
        .first()
        .ok_or_else(|| Error::config("dataset", "cannot fit encoder ranges on an empty dataset"))?;
    let width = first.len();
    if width == 0 {
        return Err(Error::config("dataset", "feature vectors are empty"));
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != width) {
        return Err(Error::config(
            "dataset",
            format!(
                "row {bad} has {} features, expected {width}",
                rows[bad].len()
            ),
        ));
    }
    let feature_ranges = (0..width)
        .map(|f| {
            FeatureRange::from_values(rows.iter().map(|r| r[f])).ok_or_else(|| {
                Error::config("dataset", format!("feature {f} has no finite values"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EncoderConfig {
        settings: settings.clone(),
        feature_ranges,
    })
}

impl EncoderConfig {
    pub fn feature_count(&self) -> usize {
        self.feature_ranges.len()
    }

    /// Number of input neurons `m` produced by this encoder.
    pub fn input_count(&self) -> usize {
        self.feature_count() * self.settings.receptive_field_count
    }

    fn spacing(&self, range: &FeatureRange) -> f64 {
        let divisor = self.settings.receptive_field_count.saturating_sub(2).max(1);
        range.width() / divisor as f64
    }

    /// Center of receptive field `field` (1-based) for `feature`.
    pub fn field_center(&self, feature: usize, field: usize) -> f64 {
        let range = &self.feature_ranges[feature];
        range.min + ((2.0 * field as f64 - 3.0) / 2.0) * self.spacing(range)
    }

    /// Width shared by all receptive fields of `feature`.
    pub fn field_width(&self, feature: usize) -> f64 {
        self.spacing(&self.feature_ranges[feature]) / self.settings.overlap_constant
    }

    pub fn receptive_field_response(&self, x: f64, feature: usize, field: usize) -> f64 {
        let center = self.field_center(feature, field);
        let width = self.field_width(feature);
        let d = x - center;
        (-(d * d) / (2.0 * width * width)).exp()
    }

    /// Firing time for a given response, or `None` when below the cutoff.
    pub fn firing_time(&self, response: f64) -> Option<f64> {
        if response < self.settings.response_cutoff {
            return None;
        }
        let t = quantize_time(self.settings.spike_interval * (1.0 - response));
        Some(t.clamp(0.0, self.settings.spike_interval))
    }

    pub fn encode(&self, features: &[f64]) -> Result<SpikePattern> {
        if features.len() != self.feature_count() {
            return Err(Error::Input(format!(
                "expected {} features, got {}",
                self.feature_count(),
                features.len()
            )));
        }
        let fields = self.settings.receptive_field_count;
        let mut trains = Vec::with_capacity(self.input_count());
        for (f, &x) in features.iter().enumerate() {
            for h in 1..=fields {
                let train = self
                    .firing_time(self.receptive_field_response(x, f, h))
                    .into_iter()
                    .collect();
                trains.push(train);
            }
        }
        SpikePattern::new(trains, self.settings.spike_interval)
    }
}

/// One presynaptic spike, identified by its input neuron.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spike {
    pub input: usize,
    pub time: f64,
}

/// Presynaptic firing times for every input neuron of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikePattern {
    trains: Vec<Vec<f64>>,
    events: Vec<Spike>,
}

impl SpikePattern {
    /// Build a pattern from per-neuron trains. Every time must be finite,
    /// inside `[0, interval]` and each train sorted ascending.
    pub fn new(trains: Vec<Vec<f64>>, interval: f64) -> Result<Self> {
        for (i, train) in trains.iter().enumerate() {
            if let Some(t) = train
                .iter()
                .find(|t| !(t.is_finite() && **t >= 0.0 && **t <= interval))
            {
                return Err(Error::Input(format!(
                    "spike time {t} of input {i} lies outside [0, {interval}]"
                )));
            }
            if train.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::Input(format!(
                    "spike train of input {i} is not sorted"
                )));
            }
        }
        let mut events: Vec<Spike> = trains
            .iter()
            .enumerate()
            .flat_map(|(input, train)| train.iter().map(move |&time| Spike { input, time }))
            .collect();
        events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.input.cmp(&b.input)));
        Ok(Self { trains, events })
    }

    pub fn input_count(&self) -> usize {
        self.trains.len()
    }

    pub fn train(&self, input: usize) -> &[f64] {
        &self.trains[input]
    }

    pub fn trains(&self) -> &[Vec<f64>] {
        &self.trains
    }

    /// All spikes ordered by time (ties by input index).
    pub fn spikes(&self) -> &[Spike] {
        &self.events
    }

    pub fn spike_count(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_encoder() -> EncoderConfig {
        fit_ranges(
            &EncoderSettings::default(),
            &[vec![0.0], vec![1.0], vec![0.5]],
        )
        .unwrap()
    }

    #[test]
    fn fit_ranges_takes_column_extremes() {
        let cfg = unit_encoder();
        assert_eq!(
            cfg.feature_ranges,
            vec![FeatureRange { min: 0.0, max: 1.0 }]
        );
    }

    #[test]
    fn constant_column_is_widened() {
        let cfg = fit_ranges(&EncoderSettings::default(), &[vec![2.0], vec![2.0]]).unwrap();
        assert_eq!(
            cfg.feature_ranges,
            vec![FeatureRange { min: 1.5, max: 2.5 }]
        );
    }

    #[test]
    fn fit_ranges_rejects_empty_and_ragged() {
        assert!(matches!(
            fit_ranges(&EncoderSettings::default(), &[]),
            Err(Error::Config { .. })
        ));
        assert!(fit_ranges(&EncoderSettings::default(), &[vec![1.0, 2.0], vec![1.0]]).is_err());
    }

    #[test]
    fn response_peaks_at_center() {
        let cfg = unit_encoder();
        for h in 1..=6 {
            let c = cfg.field_center(0, h);
            assert_eq!(cfg.receptive_field_response(c, 0, h), 1.0);
            let s = cfg.field_width(0);
            let r = cfg.receptive_field_response(c + s, 0, h);
            assert!((r - (-0.5f64).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn first_field_on_unit_range() {
        let cfg = unit_encoder();
        assert!((cfg.field_center(0, 1) + 0.125).abs() < 1e-15);
        assert!((cfg.field_width(0) - 0.25 / 0.7).abs() < 1e-15);
        // exp(-(0.125)^2 / (2 * (0.25/0.7)^2)) = exp(-0.06125)
        let r = cfg.receptive_field_response(0.0, 0, 1);
        assert!((r - 0.940588).abs() < 1e-6, "{r}");
    }

    #[test]
    fn firing_time_map() {
        let cfg = unit_encoder();
        assert_eq!(cfg.firing_time(1.0), Some(0.0));
        assert_eq!(cfg.firing_time(0.9), Some(0.3));
        assert_eq!(cfg.firing_time(0.1), Some(2.7));
        assert_eq!(cfg.firing_time(0.0999), None);
    }

    #[test]
    fn encode_layout_and_silence() {
        let cfg = unit_encoder();
        let p = cfg.encode(&[0.0]).unwrap();
        assert_eq!(p.input_count(), 6);
        // far fields stay silent
        assert!(p.train(5).is_empty());
        assert_eq!(p.train(0).len(), 1);
        assert!(p.trains().iter().all(|t| t.len() <= 1));
    }

    #[test]
    fn encode_rejects_wrong_length() {
        let cfg = unit_encoder();
        assert!(matches!(cfg.encode(&[0.1, 0.2]), Err(Error::Input(_))));
    }

    #[test]
    fn pattern_validation() {
        assert!(SpikePattern::new(vec![vec![3.5]], 3.0).is_err());
        assert!(SpikePattern::new(vec![vec![-0.1]], 3.0).is_err());
        assert!(SpikePattern::new(vec![vec![1.0, 0.5]], 3.0).is_err());
        let p = SpikePattern::new(vec![vec![1.0, 2.0], vec![0.5]], 3.0).unwrap();
        let order: Vec<_> = p.spikes().iter().map(|s| (s.input, s.time)).collect();
        assert_eq!(order, vec![(1, 0.5), (0, 1.0), (0, 2.0)]);
    }

    #[test]
    fn quantized_ticks_round_trip() {
        for k in [0_i64, 1, 299, 300, 2700, 3000] {
            assert_eq!(time_tick(tick_time(k)), k);
            assert_eq!(quantize_time(tick_time(k)), tick_time(k));
        }
    }
}
