//! Run configuration. Field names mirror the symbols of the system model;
//! power-like quantities are given in dBm/dB as in the usual parameter
//! tables and converted to linear units by the accessor methods.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net_model::{ApConfig, RadioParams};
use crate::units::{db_to_linear, dbm_to_watts};

/// Allocation algorithm driving a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// DRL with the per-user threshold quantiser.
    Proposed,
    /// DRL with order-preserving quantisation.
    Droo,
    /// DRL with nearest-vertex quantisation.
    Knn,
    /// Greedy admission, no learning.
    Heuristic,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Proposed,
        Algorithm::Droo,
        Algorithm::Knn,
        Algorithm::Heuristic,
    ];

    pub fn is_learned(self) -> bool {
        !matches!(self, Algorithm::Heuristic)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Proposed => "proposed",
            Algorithm::Droo => "droo",
            Algorithm::Knn => "knn",
            Algorithm::Heuristic => "heuristic",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Algorithm::Proposed),
            "droo" => Ok(Algorithm::Droo),
            "knn" => Ok(Algorithm::Knn),
            "heuristic" => Ok(Algorithm::Heuristic),
            other => Err(Error::config(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Coordinates in which positions enter the echo state network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFrame {
    /// Metres, as observed.
    Raw,
    /// The service area mapped onto `[−1, 1]²`.
    Area,
    /// Metres relative to the latest observation at each retrain.
    Anchored,
}

/// Dual step rule for the parallel ESN trainer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualStepRule {
    /// Apply every local increment in full.
    Full,
    /// Scale the round-`r` increment by `1/(r+1)`, applied to both the dual
    /// variables and the shared model.
    Harmonic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub algorithm: Algorithm,

    // network
    pub num_aps: usize,
    pub num_antennas: usize,
    pub num_users: usize,
    pub decode_capacity: usize,
    pub ap_positions: Vec<[f64; 2]>,
    pub ap_height_m: f64,
    pub downtilt_rad: f64,
    pub mainlobe_gain_db: f64,
    pub sidelobe_gain_db: f64,
    pub beamwidth_rad: f64,
    pub ap_max_power_dbm: f64,
    pub ap_circuit_power_dbm: f64,
    pub blockage_angle_rad: f64,
    pub interference_radius_m: f64,
    pub area_side_m: f64,
    pub area_center: [f64; 2],

    // radio
    pub carrier_freq_hz: f64,
    pub light_speed_mps: f64,
    pub noise_psd_dbm_hz: f64,
    pub ul_bandwidth_hz: f64,
    pub dl_bandwidth_hz: f64,
    pub ul_snr_threshold: f64,
    pub dl_rate_threshold_bps: f64,
    pub ul_fading_exponent: f64,
    pub rayleigh_gain: f64,
    pub pathloss_exp_los: f64,
    pub pathloss_exp_nlos: f64,
    pub shadow_var_los_db2: f64,
    pub shadow_var_nlos_db2: f64,
    /// Draw shadowing once per run instead of every slot.
    pub freeze_shadowing: bool,

    // users
    pub user_height_mean_m: f64,
    pub user_height_var_m2: f64,
    pub hmd_circuit_power_dbm: f64,
    pub hmd_max_power_dbm: f64,

    // ESN
    pub esn_zeta: f64,
    pub esn_xi: f64,
    pub esn_mu: f64,
    pub esn_rounds: usize,
    pub esn_window: usize,
    pub horizon: usize,
    pub esn_input_dim: usize,
    pub esn_output_dim: usize,
    pub reservoir_dim: usize,
    pub esn_retrain_interval: usize,
    /// Optional spectral-radius rescaling of the recurrent weights.
    pub esn_spectral_radius: Option<f64>,
    pub esn_input_frame: InputFrame,
    pub esn_step_rule: DualStepRule,

    // policy networks and DRL loop
    pub hidden1: usize,
    pub hidden2: usize,
    pub replay_capacity: usize,
    pub episodes: usize,
    pub epochs_per_episode: usize,
    pub penalty_weight: f64,
    pub noise_var: f64,
    pub epsilon0: f64,
    pub epsilon_decay: f64,
    pub epsilon_floor: f64,
    pub lr_ul: f64,
    pub lr_dl: f64,
    pub batch_size: usize,
    pub train_interval: usize,
    /// Candidate groups per slot; `None` means one per user.
    pub candidate_groups: Option<usize>,
    /// Keep exploration noise on during orchestration.
    pub explore_online: bool,

    // SDP
    pub randomization_candidates: usize,

    // harness
    pub slots: usize,
    pub pretrain_realizations: usize,
    pub slot_duration_s: f64,
    pub trace_min_speed: f64,
    pub trace_max_speed: f64,
    pub trace_max_turn_rad: f64,
    pub moving_average_window: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        let c = 250.0;
        let r = 150.0;
        let ap_positions = (0..3)
            .map(|j| {
                let a = PI / 2.0 + 2.0 * PI * j as f64 / 3.0;
                [c + r * a.cos(), c + r * a.sin()]
            })
            .collect();
        Self {
            seed: 0,
            algorithm: Algorithm::Proposed,
            num_aps: 3,
            num_antennas: 2,
            num_users: 16,
            decode_capacity: 6,
            ap_positions,
            ap_height_m: 5.5,
            downtilt_rad: PI / 3.0,
            mainlobe_gain_db: 5.0,
            sidelobe_gain_db: 1.0,
            beamwidth_rad: PI / 3.0,
            ap_max_power_dbm: 40.0,
            ap_circuit_power_dbm: 30.0,
            blockage_angle_rad: PI / 2.0,
            interference_radius_m: 50.0,
            area_side_m: 500.0,
            area_center: [250.0, 250.0],
            carrier_freq_hz: 28e9,
            light_speed_mps: 3.0e8,
            noise_psd_dbm_hz: -167.0,
            ul_bandwidth_hz: 200e6,
            dl_bandwidth_hz: 800e6,
            ul_snr_threshold: 200.0,
            dl_rate_threshold_bps: 1e9,
            ul_fading_exponent: 5.0,
            rayleigh_gain: 0.3,
            pathloss_exp_los: 2.0,
            pathloss_exp_nlos: 2.4,
            shadow_var_los_db2: 5.3,
            shadow_var_nlos_db2: 5.27,
            freeze_shadowing: false,
            user_height_mean_m: 1.8,
            user_height_var_m2: 0.05,
            hmd_circuit_power_dbm: 23.0,
            hmd_max_power_dbm: 27.0,
            esn_zeta: 1.0,
            esn_xi: 0.25,
            esn_mu: 1.0,
            esn_rounds: 1000,
            esn_window: 6,
            horizon: 8,
            esn_input_dim: 2,
            esn_output_dim: 2,
            reservoir_dim: 300,
            esn_retrain_interval: 5,
            esn_spectral_radius: None,
            esn_input_frame: InputFrame::Anchored,
            esn_step_rule: DualStepRule::Full,
            hidden1: 120,
            hidden2: 80,
            replay_capacity: 1_000_000,
            episodes: 10,
            epochs_per_episode: 1000,
            penalty_weight: 10.0,
            noise_var: 0.36,
            epsilon0: 0.99,
            epsilon_decay: 0.999,
            epsilon_floor: 0.01,
            lr_ul: 0.1,
            lr_dl: 0.01,
            batch_size: 64,
            train_interval: 20,
            candidate_groups: None,
            explore_online: false,
            randomization_candidates: 100,
            slots: 5000,
            pretrain_realizations: 10_000,
            slot_duration_s: 1.0,
            trace_min_speed: 0.5,
            trace_max_speed: 1.5,
            trace_max_turn_rad: PI / 18.0,
            moving_average_window: 50,
        }
    }
}

impl SimConfig {
    /// Default `(N, M̃)` pairing for the user sweep.
    pub fn default_capacity_for(num_users: usize) -> usize {
        match num_users {
            0..=8 => 3,
            9..=12 => 5,
            13..=16 => 6,
            _ => 7,
        }
    }

    /// Same configuration with `num_users` and the paired decode capacity.
    pub fn with_users(&self, num_users: usize) -> Self {
        Self {
            num_users,
            decode_capacity: Self::default_capacity_for(num_users),
            ..self.clone()
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(s).map_err(|e| Error::config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: SimConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load a flat key/value file; `.json` is parsed as JSON, anything else
    /// as TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            _ => Self::from_toml_str(&text),
        }
    }

    /// Apply `key=value` overrides (value in TOML syntax, bare words are
    /// taken as strings).
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut table = match toml::Value::try_from(self).map_err(|e| Error::config(format!("config encode: {e}")))? {
            toml::Value::Table(t) => t,
            _ => unreachable!("config serialises to a table"),
        };
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::config(format!("override `{item}` is not key=value")))?;
            let key = key.trim();
            if !table.contains_key(key) && !OPTIONAL_KEYS.contains(&key) {
                return Err(Error::config(format!("unknown config key `{key}`")));
            }
            let raw = raw.trim();
            let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.to_string()));
            table.insert(key.to_string(), value);
        }
        let cfg: SimConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| Error::config(format!("override: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::config(m.to_string()));
        if self.num_aps == 0 || self.num_antennas == 0 {
            return fail("num_aps and num_antennas must be positive");
        }
        if self.ap_positions.len() != self.num_aps {
            return Err(Error::config(format!(
                "ap_positions has {} entries for {} APs",
                self.ap_positions.len(),
                self.num_aps
            )));
        }
        if self.decode_capacity == 0 {
            return fail("decode_capacity must be positive");
        }
        for &[x, y] in &self.ap_positions {
            if (x - self.area_center[0]).hypot(y - self.area_center[1]) == 0.0 {
                return fail("an AP may not sit at the area centre");
            }
        }
        let positive = [
            ("ap_height_m", self.ap_height_m),
            ("mainlobe_gain_db(linear)", db_to_linear(self.mainlobe_gain_db)),
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("light_speed_mps", self.light_speed_mps),
            ("ul_bandwidth_hz", self.ul_bandwidth_hz),
            ("dl_bandwidth_hz", self.dl_bandwidth_hz),
            ("ul_snr_threshold", self.ul_snr_threshold),
            ("dl_rate_threshold_bps", self.dl_rate_threshold_bps),
            ("ul_fading_exponent", self.ul_fading_exponent),
            ("rayleigh_gain", self.rayleigh_gain),
            ("pathloss_exp_los", self.pathloss_exp_los),
            ("interference_radius_m", self.interference_radius_m),
            ("user_height_mean_m", self.user_height_mean_m),
            ("area_side_m", self.area_side_m),
            ("esn_zeta", self.esn_zeta),
            ("esn_xi", self.esn_xi),
            ("esn_mu", self.esn_mu),
            ("lr_ul", self.lr_ul),
            ("lr_dl", self.lr_dl),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.beamwidth_rad > 0.0 && self.beamwidth_rad < PI) {
            return fail("beamwidth must lie in (0, pi)");
        }
        if !(self.downtilt_rad > 0.0 && self.downtilt_rad < PI / 2.0) {
            return fail("downtilt must lie in (0, pi/2)");
        }
        if self.pathloss_exp_nlos < self.pathloss_exp_los {
            return fail("NLoS path-loss exponent must not be below the LoS one");
        }
        if self.ap_circuit_power_dbm >= self.ap_max_power_dbm {
            return fail("AP circuit power must be below the AP power cap");
        }
        if self.hmd_circuit_power_dbm >= self.hmd_max_power_dbm {
            return fail("HMD circuit power must be below the HMD power cap");
        }
        if self.esn_window == 0 || self.reservoir_dim == 0 {
            return fail("ESN window and reservoir size must be positive");
        }
        if self.esn_input_dim != 2 || self.esn_output_dim != 2 {
            return fail("the trajectory ESN maps 2-D positions to 2-D positions");
        }
        if self.esn_retrain_interval == 0 || self.train_interval == 0 {
            return fail("retraining intervals must be positive");
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return fail("replay capacity must hold at least one minibatch");
        }
        if !(self.epsilon0 > 0.0 && self.epsilon0 < 1.0) {
            return fail("epsilon0 must lie in (0, 1)");
        }
        if !(self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0) {
            return fail("epsilon_decay must lie in (0, 1]");
        }
        if self.noise_var < 0.0 || self.user_height_var_m2 < 0.0 {
            return fail("variances must be non-negative");
        }
        if self.trace_min_speed < 0.0 || self.trace_max_speed < self.trace_min_speed {
            return fail("trace speeds must satisfy 0 <= min <= max");
        }
        if self.moving_average_window == 0 {
            return fail("moving_average_window must be positive");
        }
        Ok(())
    }

    pub fn noise_psd_w_hz(&self) -> f64 {
        dbm_to_watts(self.noise_psd_dbm_hz)
    }

    pub fn hmd_circuit_power_w(&self) -> f64 {
        dbm_to_watts(self.hmd_circuit_power_dbm)
    }

    pub fn hmd_max_power_w(&self) -> f64 {
        dbm_to_watts(self.hmd_max_power_dbm)
    }

    /// Transmit-power budget `p̃ − p^c` of an HMD.
    pub fn hmd_tx_budget_w(&self) -> f64 {
        self.hmd_max_power_w() - self.hmd_circuit_power_w()
    }

    pub fn candidate_groups(&self) -> usize {
        self.candidate_groups.unwrap_or(self.num_users).max(1)
    }

    pub fn radio(&self) -> RadioParams {
        RadioParams {
            carrier_freq: self.carrier_freq_hz,
            light_speed: self.light_speed_mps,
            noise_psd: self.noise_psd_w_hz(),
            ul_bandwidth: self.ul_bandwidth_hz,
            dl_bandwidth: self.dl_bandwidth_hz,
            ul_snr_threshold: self.ul_snr_threshold,
            dl_rate_threshold: self.dl_rate_threshold_bps,
            ul_fading_exponent: self.ul_fading_exponent,
            rayleigh_gain: self.rayleigh_gain,
            pathloss_exp_los: self.pathloss_exp_los,
            pathloss_exp_nlos: self.pathloss_exp_nlos,
            shadow_var_los: self.shadow_var_los_db2,
            shadow_var_nlos: self.shadow_var_nlos_db2,
            blockage_angle: self.blockage_angle_rad,
            interference_radius: self.interference_radius_m,
            area_center: self.area_center,
        }
    }

    pub fn aps(&self) -> Vec<ApConfig> {
        self.ap_positions
            .iter()
            .map(|&position| ApConfig {
                position,
                antenna_height: self.ap_height_m,
                downtilt: self.downtilt_rad,
                mainlobe_gain: db_to_linear(self.mainlobe_gain_db),
                sidelobe_gain: db_to_linear(self.sidelobe_gain_db),
                beamwidth: self.beamwidth_rad,
                num_elements: self.num_antennas,
                max_power: dbm_to_watts(self.ap_max_power_dbm),
                circuit_power: dbm_to_watts(self.ap_circuit_power_dbm),
                decode_capacity: self.decode_capacity,
            })
            .collect()
    }
}

const OPTIONAL_KEYS: &[&str] = &["esn_spectral_radius", "candidate_groups"];
