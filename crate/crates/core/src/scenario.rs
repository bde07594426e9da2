//! Experiment configuration. Serialized as JSON; every field has a default
//! and the defaults reproduce the `dropout-default` preset.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adaptation::{AdaptationConfig, GainStep};
use crate::controller::{ControlGains, SignMode};
use crate::network::{validate_keep_counts, MaskScheduleConfig, NetworkShape};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("could not parse scenario JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("could not read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// All-active network for the whole run.
    Baseline,
    /// Randomized masks per [`DropoutConfig`].
    Dropout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub hidden_widths: Vec<usize>,
    pub bias_augmented: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden_widths: vec![10; 7],
            bias_augmented: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DropoutConfig {
    /// Mask switching period `δt` in seconds.
    pub switch_period: f64,
    /// Time from which the identity mask is used; `null` keeps dropout on.
    pub deactivate_at: Option<f64>,
    /// Active units per hidden layer.
    pub keep_counts: Vec<usize>,
    /// Inverted-dropout rescaling of surviving units.
    pub rescale: bool,
}

impl Default for DropoutConfig {
    fn default() -> Self {
        Self {
            switch_period: 0.1,
            deactivate_at: Some(2.0),
            keep_counts: vec![5; 7],
            rescale: false,
        }
    }
}

/// Distribution of the initial weight estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightInit {
    /// `N(0, variance)`.
    Normal { variance: f64 },
    /// `N(0, std_dev²)`.
    NormalStdDev { std_dev: f64 },
    /// `θ* + N(0, variance)`; matched plant only.
    AroundIdeal { variance: f64 },
}

impl Default for WeightInit {
    fn default() -> Self {
        WeightInit::Normal { variance: 10.0 }
    }
}

/// The true drift `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantSpec {
    /// Three-state benchmark plant.
    #[default]
    Paper,
    /// `f ≡ 0`.
    Zero,
    /// Frozen all-active network with ideal weights `θ* ~ N(0, ideal_variance)`.
    Matched { ideal_variance: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub name: String,
    pub mode: Mode,
    pub seed: u64,
    /// Integrator step in seconds.
    pub step: f64,
    pub duration: f64,
    pub initial_state: Vec<f64>,
    pub network: NetworkConfig,
    pub dropout: DropoutConfig,
    pub adaptation: AdaptationConfig,
    pub gains: ControlGains,
    pub sign: SignMode,
    pub init: WeightInit,
    pub plant: PlantSpec,
    /// Flips the sign of the update law; only for testing the Lyapunov monitor.
    pub negate_update: bool,
    pub output_dir: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "dropout-default".into(),
            mode: Mode::Dropout,
            seed: 0,
            step: 1e-3,
            duration: 10.0,
            initial_state: vec![5.0, 1.0, -5.0],
            network: NetworkConfig::default(),
            dropout: DropoutConfig::default(),
            adaptation: AdaptationConfig {
                gain_schedule: vec![
                    GainStep { start: 0.0, gain: 100.0 },
                    GainStep { start: 2.0, gain: 40.0 },
                ],
                weight_bound: 300.0,
                projection_tolerance: 0.1,
            },
            gains: ControlGains { k_e: 10.5, k_s: 1.5 },
            sign: SignMode::Exact,
            init: WeightInit::default(),
            plant: PlantSpec::Paper,
            negate_update: false,
            output_dir: None,
        }
    }
}

/// Independent generator streams derived from one scenario seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RngStream {
    InitialWeights = 0,
    Masks = 1,
    IdealWeights = 2,
    IdealPerturbation = 3,
}

// Tolerance, relative to the step, for "is an integer multiple of the step".
const ALIGN_TOL: f64 = 1e-9;

fn steps_in(span: f64, step: f64) -> Option<u64> {
    let ratio = span / step;
    let n = ratio.round();
    ((ratio - n).abs() <= ALIGN_TOL * ratio.max(1.0)).then_some(n as u64)
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn rng(&self, stream: RngStream) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream as u64);
        rng
    }

    pub fn shape(&self) -> Result<NetworkShape, ConfigError> {
        let n = self.initial_state.len();
        NetworkShape::new(n, self.network.hidden_widths.clone(), n, self.network.bias_augmented)
            .map_err(|e| invalid(e.to_string()))
    }

    /// Number of integrator steps.
    pub fn step_count(&self) -> Result<u64, ConfigError> {
        steps_in(self.duration, self.step)
            .ok_or_else(|| invalid("duration must be an integer multiple of the step"))
    }

    /// Mask schedule for this run; baseline mode deactivates at t = 0.
    pub fn mask_schedule_config(&self) -> MaskScheduleConfig {
        MaskScheduleConfig {
            switch_period: self.dropout.switch_period,
            deactivate_at: match self.mode {
                Mode::Baseline => Some(0.0),
                Mode::Dropout => self.dropout.deactivate_at,
            },
            keep_counts: self.dropout.keep_counts.clone(),
            rescale: self.dropout.rescale,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(invalid("step must be positive"));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(invalid("duration must be positive"));
        }
        self.step_count()?;
        if self.initial_state.len() != 3 {
            return Err(invalid("the tracking problem is three-dimensional; initial_state needs 3 entries"));
        }
        if self.initial_state.iter().any(|v| !v.is_finite()) {
            return Err(invalid("initial state must be finite"));
        }
        let shape = self.shape()?;
        self.gains.validate().map_err(|e| invalid(e.to_string()))?;
        self.sign.validate().map_err(|e| invalid(e.to_string()))?;
        self.adaptation.validate().map_err(|e| invalid(e.to_string()))?;
        for s in &self.adaptation.gain_schedule {
            if steps_in(s.start, self.step).is_none() {
                return Err(invalid(format!(
                    "gain switch at {} s is not a multiple of the step",
                    s.start
                )));
            }
        }
        if self.mode == Mode::Dropout {
            let d = &self.dropout;
            if !(d.switch_period.is_finite() && d.switch_period > 0.0) {
                return Err(invalid("switch period must be positive"));
            }
            if steps_in(d.switch_period, self.step).is_none() {
                return Err(invalid("switch period must be an integer multiple of the step"));
            }
            if let Some(off) = d.deactivate_at {
                if !(off.is_finite() && off >= 0.0) || steps_in(off, self.step).is_none() {
                    return Err(invalid("deactivation time must be a nonnegative multiple of the step"));
                }
            }
            validate_keep_counts(&shape, &d.keep_counts).map_err(|e| invalid(e.to_string()))?;
        }
        match self.init {
            WeightInit::Normal { variance } | WeightInit::AroundIdeal { variance } if !(variance >= 0.0 && variance.is_finite()) => {
                return Err(invalid("init variance must be nonnegative"))
            }
            WeightInit::NormalStdDev { std_dev } if !(std_dev >= 0.0 && std_dev.is_finite()) => {
                return Err(invalid("init std dev must be nonnegative"))
            }
            WeightInit::AroundIdeal { .. } if !matches!(self.plant, PlantSpec::Matched { .. }) => {
                return Err(invalid("around_ideal initialization needs a matched plant"))
            }
            _ => {}
        }
        if let PlantSpec::Matched { ideal_variance } = self.plant {
            if !(ideal_variance >= 0.0 && ideal_variance.is_finite()) {
                return Err(invalid("ideal weight variance must be nonnegative"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ScenarioConfig::default().validate().unwrap();
    }

    #[test]
    fn empty_json_gives_defaults() {
        assert_eq!(ScenarioConfig::from_json("{}").unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            ScenarioConfig::from_json(r#"{"gains": {"k_e": 1.0, "k_s": 1.0, "kp": 2.0}}"#),
            Err(ConfigError::Parse(_))
        ));
        assert!(ScenarioConfig::from_json(r#"{"stepp": 0.001}"#).is_err());
    }

    #[test]
    fn json_round_trip() {
        let cfg = ScenarioConfig {
            plant: PlantSpec::Matched { ideal_variance: 0.01 },
            init: WeightInit::AroundIdeal { variance: 1e-4 },
            sign: SignMode::Smooth { width: 1e-3 },
            ..Default::default()
        };
        assert_eq!(ScenarioConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn misaligned_schedule_rejected() {
        let mut cfg = ScenarioConfig::default();
        cfg.dropout.switch_period = 0.1005;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.dropout.deactivate_at = Some(2.0005);
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.adaptation.gain_schedule[1].start = 1.00005;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.dropout.switch_period = 0.05;
        cfg.validate().unwrap();
    }

    #[test]
    fn nonpositive_gains_rejected() {
        let mut cfg = ScenarioConfig::default();
        cfg.gains.k_s = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn streams_are_independent() {
        use rand::RngCore;
        let cfg = ScenarioConfig::default();
        let a = cfg.rng(RngStream::InitialWeights).next_u64();
        let b = cfg.rng(RngStream::Masks).next_u64();
        assert_ne!(a, b);
        assert_eq!(a, cfg.rng(RngStream::InitialWeights).next_u64());
    }
}
