use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::FusionParams;
use crate::protocol::{BroadcastGate, ProtocolConfig, SuspectFusion};
use crate::sim::{AdversaryModel, PhysicalField, RadioModel};
use crate::time::SimTime;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    pub topology: u64,
    pub field: u64,
    pub adversary: u64,
    pub loss: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self::from_master(42)
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    // TOML integers are signed 64-bit
    (z ^ (z >> 31)) >> 1
}

impl Seeds {
    /// Spread one master seed over the four independent streams.
    pub fn from_master(master: u64) -> Self {
        let mut state = master;
        Self {
            topology: splitmix64(&mut state),
            field: splitmix64(&mut state),
            adversary: splitmix64(&mut state),
            loss: splitmix64(&mut state),
        }
    }

    /// Seeds for repetition `rep` of a sweep. Repetition 0 keeps the originals.
    pub fn for_repetition(&self, rep: u64) -> Self {
        if rep == 0 {
            return self.clone();
        }
        let mix = |s: u64| {
            let mut state = s ^ rep.wrapping_mul(0xD1B5_4A32_D192_ED03);
            splitmix64(&mut state)
        };
        Self {
            topology: mix(self.topology),
            field: mix(self.field),
            adversary: mix(self.adversary),
            loss: mix(self.loss),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioSettings {
    pub loss_probability: f64,
    pub airtime_s: f64,
    /// Upper bound of the uniform random delay before each transmission.
    pub tx_jitter_s: f64,
}

impl Default for RadioSettings {
    fn default() -> Self {
        Self {
            loss_probability: 0.0,
            airtime_s: 0.002,
            tx_jitter_s: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSettings {
    pub dir: Option<PathBuf>,
    pub trace: bool,
}

/// Everything needed to reproduce one simulation run.
///
/// Defaults reproduce the reference deployment: 160 stationary nodes on a
/// 120 m x 120 m field, 15 m radios, 5 J batteries, 0.5 s sampling for
/// 200 s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub node_count: usize,
    pub area_m: [f64; 2],
    pub range_m: f64,
    pub simulation_time_s: f64,
    pub sampling_period_s: f64,
    /// How long the sensor draws power per sample.
    pub sample_duration_s: f64,
    pub initial_energy_j: f64,
    pub tx_power_w: f64,
    pub rx_power_w: f64,
    pub sense_power_w: f64,
    pub buffer_capacity: usize,
    pub broadcast_threshold_pct: f64,
    pub broadcast_gate: BroadcastGate,
    /// When a deviating neighbour estimate is fused. Holding it until the
    /// poll returns keeps honest nodes from relaying an attacker's value.
    pub suspect_fusion: SuspectFusion,
    /// Require replies from a majority of the polled neighbours for a verdict.
    pub reply_quorum: bool,
    pub sigma_factor: f64,
    pub sharp_fall_threshold_sigmas: f64,
    pub poll_timeout_s: f64,
    /// Observation sigma attached to raw samples. Wide enough that honest
    /// maximum estimates stay within the deviation test of one another.
    pub sensor_noise_sigma: f64,
    pub security_enabled: bool,
    pub adversary: AdversaryModel,
    pub field: PhysicalField,
    pub seeds: Seeds,
    pub radio: RadioSettings,
    pub fusion: FusionParams,
    pub output: OutputSettings,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            node_count: 160,
            area_m: [120.0, 120.0],
            range_m: 15.0,
            simulation_time_s: 200.0,
            sampling_period_s: 0.5,
            sample_duration_s: 0.01,
            initial_energy_j: 5.0,
            tx_power_w: 0.75,
            rx_power_w: 0.25,
            sense_power_w: 0.010,
            buffer_capacity: 5,
            broadcast_threshold_pct: 2.0,
            broadcast_gate: BroadcastGate::LastSent,
            suspect_fusion: SuspectFusion::AfterVerdict,
            reply_quorum: false,
            sigma_factor: 3.0,
            sharp_fall_threshold_sigmas: 1.0,
            poll_timeout_s: 1.0,
            sensor_noise_sigma: 2.0,
            security_enabled: true,
            adversary: AdversaryModel::default(),
            field: PhysicalField::default(),
            seeds: Seeds::default(),
            radio: RadioSettings::default(),
            fusion: FusionParams::default(),
            output: OutputSettings::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Self::parse_at(text, Path::new("<inline>"))
    }

    fn parse_at(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Replace all seeds with streams derived from `master`.
    pub fn with_master_seed(mut self, master: u64) -> Self {
        self.seeds = Seeds::from_master(master);
        self
    }

    pub fn compromised_count(&self) -> usize {
        (self.adversary.compromised_fraction * self.node_count as f64).round() as usize
    }

    pub fn protocol(&self) -> ProtocolConfig {
        ProtocolConfig {
            broadcast_threshold_pct: self.broadcast_threshold_pct,
            sigma_factor: self.sigma_factor,
            sharp_fall_threshold_sigmas: self.sharp_fall_threshold_sigmas,
            poll_timeout: SimTime::from_secs_f64(self.poll_timeout_s),
            sensor_noise_sigma: self.sensor_noise_sigma,
            security_enabled: self.security_enabled,
            gate: self.broadcast_gate,
            suspect_fusion: self.suspect_fusion,
            reply_quorum: self.reply_quorum,
            fusion: self.fusion.clone(),
        }
    }

    pub fn radio_model(&self) -> RadioModel {
        RadioModel {
            range_m: self.range_m,
            loss_probability: self.radio.loss_probability,
            per_message_airtime_s: self.radio.airtime_s,
            tx_jitter_s: self.radio.tx_jitter_s,
            buffer_capacity: self.buffer_capacity,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.node_count == 0 {
            return Err(invalid("node_count", "must be at least 1"));
        }
        if self.node_count > u32::MAX as usize {
            return Err(invalid("node_count", "too large"));
        }
        let positive = [
            ("area_m[0]", self.area_m[0]),
            ("area_m[1]", self.area_m[1]),
            ("range_m", self.range_m),
            ("simulation_time_s", self.simulation_time_s),
            ("sampling_period_s", self.sampling_period_s),
            ("initial_energy_j", self.initial_energy_j),
            ("broadcast_threshold_pct", self.broadcast_threshold_pct),
            ("sigma_factor", self.sigma_factor),
            ("sharp_fall_threshold_sigmas", self.sharp_fall_threshold_sigmas),
            ("poll_timeout_s", self.poll_timeout_s),
            ("sensor_noise_sigma", self.sensor_noise_sigma),
            ("radio.airtime_s", self.radio.airtime_s),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(key, format!("must be a positive number, got {v}")));
            }
        }
        let non_negative = [
            ("sample_duration_s", self.sample_duration_s),
            ("tx_power_w", self.tx_power_w),
            ("rx_power_w", self.rx_power_w),
            ("sense_power_w", self.sense_power_w),
            ("radio.tx_jitter_s", self.radio.tx_jitter_s),
            ("adversary.onset_s", self.adversary.onset_s),
            ("field.base_sigma_c", self.field.base_sigma_c),
        ];
        for (key, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(key, format!("must be a non-negative number, got {v}")));
            }
        }
        if self.buffer_capacity == 0 {
            return Err(invalid("buffer_capacity", "must be at least 1"));
        }
        let f = self.adversary.compromised_fraction;
        if !(0.0..=1.0).contains(&f) {
            return Err(invalid("adversary.compromised_fraction", format!("must lie in [0, 1], got {f}")));
        }
        let p = self.radio.loss_probability;
        if !(0.0..1.0).contains(&p) {
            return Err(invalid("radio.loss_probability", format!("must lie in [0, 1), got {p}")));
        }
        if !self.field.base_mean_c.is_finite() {
            return Err(invalid("field.base_mean_c", "must be finite"));
        }
        self.adversary
            .attack
            .validate()
            .map_err(|r| invalid("adversary.attack", r))?;
        if let Some(h) = &self.field.hotspot {
            h.validate(self.node_count).map_err(|r| invalid("field.hotspot", r))?;
        }
        self.fusion
            .validate()
            .map_err(|e| invalid("fusion", e.to_string()))?;
        Ok(())
    }
}

/// Read and validate a TOML scenario file. Omitted keys take the defaults.
pub fn parse_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ScenarioConfig::parse_at(&text, path)
}
